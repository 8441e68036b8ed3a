#pragma once

#include <optional>
#include <vector>

#include "ppknn/frame.hpp"
#include "ppknn/paillier.hpp"
#include "ppknn/parallel.hpp"
#include "ppknn/peer.hpp"
#include "ppknn/pool.hpp"
#include "ppknn/rng.hpp"

namespace ppknn {

// Encrypted value as big-endian digits: bits[0] is the most significant.
struct EncBitVec {
  std::vector<Ciphertext> bits;

  std::size_t size() const { return bits.size(); }
};

// A comparison operand: its encrypted digit key plus any encrypted
// payloads that must travel with it through min/max selection.
struct RankedValue {
  EncBitVec key;
  std::vector<Ciphertext> secrets;
};

// Requester side of the two-party protocols. Holds only the public key;
// everything it sends to the peer is masked, blinded, or permuted first.
class Party1 {
 public:
  Party1(const PublicKey& pk, PeerClient& peer, RandomSource& rng, RandomizerPool* pool = nullptr,
         unsigned threads = 1)
      : pk_(pk), peer_(peer), rng_(rng), pool_(pool), threads_(threads), codec_(pk.bits) {}

  const PublicKey& pk() const { return pk_; }
  PeerClient& peer() { return peer_; }
  RandomSource& rng() { return rng_; }
  unsigned threads() const { return threads_; }
  const CtCodec& codec() const { return codec_; }

  Ciphertext enc(const mpz_class& m) {
    return pool_ ? encrypt_with_randomizer(pk_, m, pool_->take()) : encrypt(pk_, m, rng_);
  }

  // Fresh uniform mask in [1, n).
  mpz_class mask() { return rng_.nonzero_below(pk_.n); }

 private:
  const PublicKey& pk_;
  PeerClient& peer_;
  RandomSource& rng_;
  RandomizerPool* pool_;
  unsigned threads_;
  CtCodec codec_;
};

// Test hooks: pin the additive masks of one multiplication exchange.
struct SmOptions {
  std::optional<mpz_class> mask_a;
  std::optional<mpz_class> mask_b;
};

// Secure multiplication: from E(a) and E(b), derive E(a*b) with the
// peer's help. The peer sees only a+r_a and b+r_b for fresh masks.
inline Ciphertext sm(Party1& p, const Ciphertext& ea, const Ciphertext& eb,
                     const SmOptions* opt = nullptr) {
  const PublicKey& pk = p.pk();
  mpz_class ra = (opt && opt->mask_a) ? *opt->mask_a : p.mask();
  mpz_class rb = (opt && opt->mask_b) ? *opt->mask_b : p.mask();

  Bytes req;
  ByteWriter w(req);
  p.codec().put(w, add_ct(pk, ea, p.enc(ra)));
  p.codec().put(w, add_ct(pk, eb, p.enc(rb)));
  Bytes resp = p.peer().call(proto::kMultiply, req);
  ByteReader r(resp);
  Ciphertext h = p.codec().get(r);
  r.expect_end();

  // h holds (a + r_a)(b + r_b); strip the three cross terms.
  Ciphertext out = add_ct(pk, h, scalar_mul(pk, ea, pk.n - rb));
  out = add_ct(pk, out, scalar_mul(pk, eb, pk.n - ra));
  return sub_ct(pk, out, p.enc(ra * rb % pk.n));
}

// Squared Euclidean distance between two encrypted vectors, one secure
// multiplication per coordinate.
inline Ciphertext ssed(Party1& p, const std::vector<Ciphertext>& x,
                       const std::vector<Ciphertext>& y) {
  if (x.empty() || x.size() != y.size())
    throw ContractError("distance needs two equal-length non-empty vectors");
  const PublicKey& pk = p.pk();
  Ciphertext acc;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Ciphertext d = sub_ct(pk, x[i], y[i]);
    Ciphertext sq = sm(p, d, d);
    acc = (i == 0) ? sq : add_ct(pk, acc, sq);
  }
  return acc;
}

// Secure bit decomposition of E(z) into l encrypted digits, most
// significant first. Each round the peer reveals the parity of a masked
// copy, the requester corrects it by the mask parity, peels the digit and
// halves. A closing masked-equality round proves the digits recompose to
// z; it fails exactly when z lies outside [0, 2^l) (or in the
// astronomically unlikely event the additive mask wrapped the modulus).
inline EncBitVec sbd(Party1& p, const Ciphertext& ez, unsigned l) {
  const PublicKey& pk = p.pk();
  if (l == 0) throw ContractError("bit length must be positive");
  if (l > pk.bits / 4) throw ContractError("bit length too large for this key");

  mpz_class inv2;
  mpz_invert(inv2.get_mpz_t(), mpz_class(2).get_mpz_t(), pk.n.get_mpz_t());

  PeerClient::Session session = p.peer().open(proto::kBitParity);
  std::vector<Ciphertext> digits_lsb;
  digits_lsb.reserve(l);
  Ciphertext x = ez;
  for (unsigned t = 0; t < l; ++t) {
    mpz_class r = p.mask();
    Bytes req;
    ByteWriter w(req);
    p.codec().put(w, add_ct(pk, x, p.enc(r)));
    Bytes resp = session.call(req);
    ByteReader rd(resp);
    Ciphertext masked_parity = p.codec().get(rd);
    rd.expect_end();

    Ciphertext digit = mpz_odd_p(r.get_mpz_t())
                           ? add_ct(pk, plain_ciphertext(pk, 1), negate_ct(pk, masked_parity))
                           : masked_parity;
    digits_lsb.push_back(digit);
    x = scalar_mul(pk, sub_ct(pk, x, digit), inv2);
  }

  Ciphertext recomposed = digits_lsb[0];
  mpz_class weight = 1;
  for (unsigned t = 1; t < l; ++t) {
    weight *= 2;
    recomposed = add_ct(pk, recomposed, scalar_mul(pk, digits_lsb[t], weight));
  }
  Ciphertext diff = sub_ct(pk, ez, recomposed);
  mpz_class r2 = p.mask();
  Ciphertext check = add_ct(pk, scalar_mul(pk, diff, p.mask()), p.enc(r2));
  Bytes req;
  ByteWriter w(req);
  p.codec().put(w, check);
  w.mpz_fixed(r2, pk.bits / 8);
  Bytes resp = p.peer().call(proto::kMaskedEqual, req);
  ByteReader rd(resp);
  bool ok = rd.u8() == 1;
  rd.expect_end();
  if (!ok) throw ProtocolFault("bit decomposition check failed: value outside [0, 2^" +
                               std::to_string(l) + ")");

  EncBitVec out;
  out.bits.assign(digits_lsb.rbegin(), digits_lsb.rend());
  return out;
}

// Secure OR of two encrypted bits: a + b - a*b.
inline Ciphertext sbor(Party1& p, const Ciphertext& ea, const Ciphertext& eb) {
  const PublicKey& pk = p.pk();
  return sub_ct(pk, add_ct(pk, ea, eb), sm(p, ea, eb));
}

// Test hooks: pin the coin and the permutations of one comparison.
struct CompareOptions {
  // Branch coin. true mirrors the "first operand greater" orientation.
  std::optional<bool> first_greater;
  std::optional<Permutation> key_perm;   // over the digit deltas
  std::optional<Permutation> flag_perm;  // over the flag column
};

namespace detail {

// Shared core of min and max selection over digit-decomposed operands.
// The peer learns one bit alpha whose meaning is hidden behind a fresh
// coin; everything else it sees is masked or permuted.
inline RankedValue compare_extreme(Party1& p, const RankedValue& u, const RankedValue& v,
                                   bool want_max, const CompareOptions* opt) {
  const PublicKey& pk = p.pk();
  const std::size_t l = u.key.size();
  const std::size_t s = u.secrets.size();
  if (l == 0 || l != v.key.size()) throw ContractError("operands must share a positive digit count");
  if (s != v.secrets.size()) throw ContractError("operands must carry the same number of secrets");

  const bool first_greater = (opt && opt->first_greater) ? *opt->first_greater : p.rng().coin();
  // The flag column tests "first greater" for min selection and the
  // mirrored orientation for max; recovery below only depends on the coin.
  const bool flag_from_first = want_max ? !first_greater : first_greater;

  const Ciphertext minus_one = plain_ciphertext(pk, pk.n - 1);
  std::vector<Ciphertext> keydelta(l), flags(l);
  std::vector<mpz_class> key_masks(l);
  Ciphertext chain = plain_ciphertext(pk, 0);
  for (std::size_t i = 0; i < l; ++i) {
    const Ciphertext& ui = u.key.bits[i];
    const Ciphertext& vi = v.key.bits[i];
    Ciphertext prod = sm(p, ui, vi);
    Ciphertext neg_prod = negate_ct(pk, prod);
    // XOR marks the digits that differ.
    Ciphertext differs = add_ct(pk, add_ct(pk, ui, vi), add_ct(pk, neg_prod, neg_prod));

    Ciphertext win_here = flag_from_first ? add_ct(pk, ui, neg_prod)   // u_i (1 - v_i)
                                          : add_ct(pk, vi, neg_prod);  // v_i (1 - u_i)

    key_masks[i] = p.mask();
    Ciphertext gap = first_greater ? sub_ct(pk, vi, ui) : sub_ct(pk, ui, vi);
    keydelta[i] = add_ct(pk, gap, p.enc(key_masks[i]));

    // chain is zero through the first differing digit and random after,
    // so chain-1 hits zero exactly at the first difference.
    chain = add_ct(pk, scalar_mul(pk, chain, p.mask()), differs);
    Ciphertext first_diff = add_ct(pk, minus_one, chain);
    flags[i] = add_ct(pk, win_here, scalar_mul(pk, first_diff, p.mask()));
  }

  std::vector<Ciphertext> deltas(s);
  std::vector<mpz_class> secret_masks(s);
  for (std::size_t j = 0; j < s; ++j) {
    const Ciphertext& base = first_greater ? u.secrets[j] : v.secrets[j];
    const Ciphertext& other = first_greater ? v.secrets[j] : u.secrets[j];
    secret_masks[j] = p.mask();
    deltas[j] = add_ct(pk, sub_ct(pk, other, base), p.enc(secret_masks[j]));
  }

  Permutation key_perm = (opt && opt->key_perm) ? *opt->key_perm : random_permutation(l, p.rng());
  Permutation flag_perm =
      (opt && opt->flag_perm) ? *opt->flag_perm : random_permutation(l, p.rng());

  Bytes req;
  ByteWriter w(req);
  w.u32(static_cast<std::uint32_t>(l));
  w.u32(static_cast<std::uint32_t>(s));
  for (const auto& c : apply_permutation(keydelta, key_perm)) p.codec().put(w, c);
  for (const auto& c : apply_permutation(flags, flag_perm)) p.codec().put(w, c);
  for (const auto& c : deltas) p.codec().put(w, c);
  Bytes resp = p.peer().call(proto::kCompareRound, req);

  ByteReader rd(resp);
  std::vector<Ciphertext> picked(l), delta_out(s);
  for (auto& c : picked) c = p.codec().get(rd);
  Ciphertext e_alpha = p.codec().get(rd);
  for (auto& c : delta_out) c = p.codec().get(rd);
  rd.expect_end();
  picked = invert_permutation(picked, key_perm);

  RankedValue out;
  out.key.bits.resize(l);
  out.secrets.resize(s);
  for (std::size_t i = 0; i < l; ++i) {
    const Ciphertext& base = first_greater ? u.key.bits[i] : v.key.bits[i];
    Ciphertext adjust = add_ct(pk, picked[i], scalar_mul(pk, e_alpha, pk.n - key_masks[i]));
    out.key.bits[i] = add_ct(pk, base, adjust);
  }
  for (std::size_t j = 0; j < s; ++j) {
    const Ciphertext& base = first_greater ? u.secrets[j] : v.secrets[j];
    Ciphertext adjust = add_ct(pk, delta_out[j], scalar_mul(pk, e_alpha, pk.n - secret_masks[j]));
    out.secrets[j] = add_ct(pk, base, adjust);
  }
  return out;
}

}  // namespace detail

inline RankedValue smin(Party1& p, const RankedValue& u, const RankedValue& v,
                        const CompareOptions* opt = nullptr) {
  return detail::compare_extreme(p, u, v, false, opt);
}

inline RankedValue smax(Party1& p, const RankedValue& u, const RankedValue& v,
                        const CompareOptions* opt = nullptr) {
  return detail::compare_extreme(p, u, v, true, opt);
}

namespace detail {

// Knockout tournament: ceil(log2 n) rounds, exactly n-1 pairwise
// comparisons, survivors meeting at doubling strides. Pairs within a
// round are independent and may run concurrently.
inline RankedValue tournament(Party1& p, std::vector<RankedValue> items, bool want_max) {
  if (items.empty()) throw ContractError("tournament needs at least one entry");
  const std::size_t l = items[0].key.size();
  const std::size_t s = items[0].secrets.size();
  for (const auto& it : items)
    if (it.key.size() != l || it.secrets.size() != s)
      throw ContractError("tournament entries must agree on digit and secret counts");

  for (std::size_t stride = 1; stride < items.size(); stride *= 2) {
    std::vector<std::size_t> heads;
    for (std::size_t i = 0; i + stride < items.size(); i += 2 * stride) heads.push_back(i);
    parallel_for(heads.size(), p.threads(), [&](std::size_t t) {
      std::size_t i = heads[t];
      items[i] = compare_extreme(p, items[i], items[i + stride], want_max, nullptr);
    });
  }
  return std::move(items[0]);
}

}  // namespace detail

inline RankedValue smin_n(Party1& p, std::vector<RankedValue> items) {
  return detail::tournament(p, std::move(items), false);
}

inline RankedValue smax_w(Party1& p, std::vector<RankedValue> items) {
  return detail::tournament(p, std::move(items), true);
}

// Secure frequency: how often each encrypted class label occurs among the
// encrypted drawn labels. The peer sees one blinded, row-permuted
// difference matrix and returns the matching indicator matrix.
inline std::vector<Ciphertext> sf(Party1& p, const std::vector<Ciphertext>& classes,
                                  const std::vector<Ciphertext>& drawn) {
  const PublicKey& pk = p.pk();
  const std::size_t w_count = classes.size();
  const std::size_t k_count = drawn.size();
  if (w_count == 0 || k_count == 0) throw ContractError("frequency needs classes and drawn labels");

  std::vector<Permutation> row_perms;
  row_perms.reserve(k_count);
  Bytes req;
  ByteWriter w(req);
  w.u32(static_cast<std::uint32_t>(k_count));
  w.u32(static_cast<std::uint32_t>(w_count));
  for (std::size_t i = 0; i < k_count; ++i) {
    std::vector<Ciphertext> row(w_count);
    for (std::size_t j = 0; j < w_count; ++j)
      row[j] = scalar_mul(pk, sub_ct(pk, classes[j], drawn[i]), p.mask());
    row_perms.push_back(random_permutation(w_count, p.rng()));
    for (const auto& c : apply_permutation(row, row_perms.back())) p.codec().put(w, c);
  }
  Bytes resp = p.peer().call(proto::kFreqMatch, req);

  ByteReader rd(resp);
  std::vector<Ciphertext> freq(w_count, plain_ciphertext(pk, 0));
  for (std::size_t i = 0; i < k_count; ++i) {
    std::vector<Ciphertext> row(w_count);
    for (auto& c : row) c = p.codec().get(rd);
    row = invert_permutation(row, row_perms[i]);
    for (std::size_t j = 0; j < w_count; ++j) freq[j] = add_ct(pk, freq[j], row[j]);
  }
  rd.expect_end();
  return freq;
}

}  // namespace ppknn
