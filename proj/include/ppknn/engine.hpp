#pragma once

#include <chrono>
#include <thread>

#include "ppknn/dataset.hpp"
#include "ppknn/keyfile.hpp"
#include "ppknn/primitives.hpp"

namespace ppknn {

struct DbParams {
  std::uint32_t n = 0;       // records
  std::uint32_t m = 0;       // attributes
  std::uint32_t w = 0;       // classes
  unsigned attr_bits = 0;    // digits per attribute value
  unsigned l = 0;            // digits per squared distance
  unsigned key_bits = 0;
};

struct EncRecord {
  std::uint32_t id = 0;  // 1..n, public
  std::vector<Ciphertext> attrs;
  Ciphertext label;
};

struct EncDatabase {
  DbParams params;
  std::vector<EncRecord> records;
  std::vector<Ciphertext> classes;  // E(1)..E(w)
};

// Data-owner step: encrypt the whole table attribute-wise under the
// system key. After this the owner can go offline.
inline EncDatabase owner_encrypt_db(const PublicKey& pk, const PlainTable& t, RandomSource& rng) {
  if (t.n() == 0 || t.m == 0) throw ContractError("table must have rows and attributes");
  if (t.w < 2) throw ConfigError("need at least two classes to classify");
  std::vector<bool> seen(t.w, false);
  for (std::uint32_t c : t.labels) {
    if (c < 1 || c > t.w) throw IngestError("class code " + std::to_string(c) + " outside 1.." + std::to_string(t.w));
    seen[c - 1] = true;
  }
  for (std::uint32_t j = 0; j < t.w; ++j)
    if (!seen[j]) throw IngestError("class code " + std::to_string(j + 1) + " never appears");

  EncDatabase db;
  db.params.n = static_cast<std::uint32_t>(t.n());
  db.params.m = static_cast<std::uint32_t>(t.m);
  db.params.w = t.w;
  db.params.attr_bits = attr_bits_for(t);
  db.params.l = compute_l(t.m, db.params.attr_bits);
  db.params.key_bits = pk.bits;
  if (db.params.l > pk.bits / 4)
    throw ConfigError("key too small for this attribute domain");

  db.records.resize(t.n());
  for (std::size_t i = 0; i < t.n(); ++i) {
    EncRecord& rec = db.records[i];
    rec.id = static_cast<std::uint32_t>(i + 1);
    rec.attrs.reserve(t.m);
    for (std::uint32_t v : t.rows[i]) rec.attrs.push_back(encrypt(pk, v, rng));
    rec.label = encrypt(pk, t.labels[i], rng);
  }
  db.classes.reserve(t.w);
  for (std::uint32_t j = 1; j <= t.w; ++j) db.classes.push_back(encrypt(pk, j, rng));
  return db;
}

// Database file: magic "PPKD", version, the six parameters, then each
// record as id plus m+1 fixed-width ciphertexts, then the w class
// ciphertexts.
namespace dbfile {
constexpr char kMagic[4] = {'P', 'P', 'K', 'D'};
constexpr std::uint8_t kVersion = 0x01;
}  // namespace dbfile

inline void save_db(const std::string& path, const EncDatabase& db) {
  Bytes data;
  ByteWriter w(data);
  w.raw(dbfile::kMagic, 4);
  w.u8(dbfile::kVersion);
  w.u32(db.params.n);
  w.u32(db.params.m);
  w.u32(db.params.w);
  w.u32(db.params.attr_bits);
  w.u32(db.params.l);
  w.u32(db.params.key_bits);
  CtCodec codec(db.params.key_bits);
  for (const auto& rec : db.records) {
    w.u32(rec.id);
    for (const auto& c : rec.attrs) codec.put(w, c);
    codec.put(w, rec.label);
  }
  for (const auto& c : db.classes) codec.put(w, c);
  keyfile::write_file(path, data);
}

inline EncDatabase load_db(const std::string& path) {
  Bytes data = keyfile::read_file(path);
  try {
    ByteReader r(data);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, dbfile::kMagic, 4) != 0) throw ConfigError("bad magic in database file: " + path);
    if (r.u8() != dbfile::kVersion) throw ConfigError("unsupported database version: " + path);
    EncDatabase db;
    db.params.n = r.u32();
    db.params.m = r.u32();
    db.params.w = r.u32();
    db.params.attr_bits = r.u32();
    db.params.l = r.u32();
    db.params.key_bits = r.u32();
    if (db.params.n == 0 || db.params.m == 0 || db.params.w < 2)
      throw ConfigError("inconsistent database header: " + path);
    CtCodec codec(db.params.key_bits);
    db.records.resize(db.params.n);
    for (auto& rec : db.records) {
      rec.id = r.u32();
      rec.attrs.resize(db.params.m);
      for (auto& c : rec.attrs) c = codec.get(r);
      rec.label = codec.get(r);
    }
    db.classes.resize(db.params.w);
    for (auto& c : db.classes) c = codec.get(r);
    r.expect_end();
    return db;
  } catch (const TransportError&) {
    throw ConfigError("truncated database file: " + path);
  }
}

struct EncQuery {
  std::vector<Ciphertext> attrs;
};

// Querier step: encrypt one record attribute-wise. Values must fit the
// database's attribute domain.
inline EncQuery querier_encrypt_query(const PublicKey& pk, const std::vector<std::uint32_t>& values,
                                      unsigned attr_bits, RandomSource& rng) {
  if (values.empty()) throw ContractError("query needs at least one attribute");
  if (attr_bits == 0 || attr_bits >= 32) throw ContractError("attribute digit count out of range");
  EncQuery q;
  q.attrs.reserve(values.size());
  for (std::uint32_t v : values) {
    if (v >= (std::uint32_t(1) << attr_bits))
      throw ContractError("attribute value " + std::to_string(v) + " needs more than " +
                          std::to_string(attr_bits) + " digits");
    q.attrs.push_back(encrypt(pk, v, rng));
  }
  return q;
}

// First stage, driven by C1: per-record encrypted distances, digit
// decomposition, then k rounds of select-the-closest. Each round the
// winner's encrypted label is extracted and its digits are ORed to all
// ones so it can never win again; every record is touched every round, so
// the access pattern says nothing about which record won.
//
// Kept as a stepwise object so callers can watch or replay single rounds;
// copies are independent continuations sharing no mutable state.
class Stage1Run {
 public:
  Stage1Run(Party1& p, const EncDatabase& db, const EncQuery& q) : p_(&p), db_(&db) {
    const std::uint32_t n = db.params.n;
    if (q.attrs.size() != db.params.m) throw ContractError("query arity does not match database");
    if (db.records.size() != n || (db.params.w != 0 && db.classes.size() != db.params.w))
      throw ContractError("database shape disagrees with its parameters");
    dist_bits_.resize(n);
    parallel_for(n, p.threads(), [&](std::size_t i) {
      Ciphertext d = ssed(p, q.attrs, db_->records[i].attrs);
      dist_bits_[i] = sbd(p, d, db_->params.l);
    });
    ids_.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) ids_.push_back(p.enc(db.records[i].id));
  }

  // One selection round; returns the encrypted label of the closest
  // still-eligible record.
  Ciphertext next_label() {
    Party1& p = *p_;
    const PublicKey& pk = p.pk();
    const std::uint32_t n = db_->params.n;

    std::vector<RankedValue> entries(n);
    for (std::uint32_t i = 0; i < n; ++i)
      entries[i] = RankedValue{dist_bits_[i], {ids_[i], db_->records[i].label}};
    RankedValue winner = smin_n(p, std::move(entries));

    // Locate the winner obliviously: blind id - winner_id, permute, and
    // let the key holder flag the single zero.
    Ciphertext neg_id = negate_ct(pk, winner.secrets[0]);
    std::vector<Ciphertext> blinded(n);
    parallel_for(n, p.threads(), [&](std::size_t i) {
      blinded[i] = scalar_mul(pk, add_ct(pk, ids_[i], neg_id), p.mask());
    });
    Permutation perm = random_permutation(n, p.rng());

    Bytes req;
    ByteWriter w(req);
    p.codec().put_vec(w, apply_permutation(blinded, perm));
    Bytes resp = p.peer().call(proto::kZeroSelect, req);
    ByteReader rd(resp);
    std::vector<Ciphertext> marks = p.codec().get_vec(rd);
    rd.expect_end();
    if (marks.size() != n) throw ProtocolFault("selection response has wrong length");
    picked_ = invert_permutation(marks, perm);

    // OR the winner's digits to all ones; every slot gets the same
    // treatment so the update pattern is uniform.
    parallel_for(n, p.threads(), [&](std::size_t i) {
      for (auto& digit : dist_bits_[i].bits) digit = sbor(p, picked_[i], digit);
    });

    ++rounds_done_;
    return winner.secrets[1];
  }

  const std::vector<EncBitVec>& distance_bits() const { return dist_bits_; }
  const std::vector<Ciphertext>& last_pick() const { return picked_; }
  std::uint32_t rounds_done() const { return rounds_done_; }

 private:
  Party1* p_;
  const EncDatabase* db_;
  std::vector<EncBitVec> dist_bits_;
  std::vector<Ciphertext> ids_;
  std::vector<Ciphertext> picked_;
  std::uint32_t rounds_done_ = 0;
};

// Encrypted labels of the k nearest records, closest first.
inline std::vector<Ciphertext> stage1_srknn(Party1& p, const EncDatabase& db, const EncQuery& q,
                                            std::uint32_t k) {
  if (k < 1 || k > db.params.n) throw ContractError("k must be in 1..n");
  Stage1Run run(p, db, q);
  std::vector<Ciphertext> labels;
  labels.reserve(k);
  for (std::uint32_t s = 0; s < k; ++s) labels.push_back(run.next_label());
  return labels;
}

// Second stage, driven by C1: count each class among the neighbor labels,
// digit-decompose the counts, and select the class with the largest one.
inline Ciphertext stage2_majority_label(Party1& p, const EncDatabase& db,
                                        const std::vector<Ciphertext>& neighbor_labels) {
  if (neighbor_labels.empty()) throw ContractError("no neighbor labels");
  std::vector<Ciphertext> freq = sf(p, db.classes, neighbor_labels);

  unsigned freq_bits = 1;
  while ((std::size_t(1) << freq_bits) <= neighbor_labels.size()) ++freq_bits;

  std::vector<RankedValue> entries(freq.size());
  parallel_for(freq.size(), p.threads(), [&](std::size_t j) {
    entries[j] = RankedValue{sbd(p, freq[j], freq_bits), {db.classes[j]}};
  });
  return smax_w(p, std::move(entries)).secrets[0];
}

// C1 hands the additively masked result to the key holder and keeps the
// mask for the querier. Neither party alone learns the label.
inline mpz_class deliver_result(Party1& p, std::uint64_t query_id, const Ciphertext& label_ct) {
  const PublicKey& pk = p.pk();
  mpz_class mask = p.mask();
  Ciphertext masked = add_ct(pk, label_ct, p.enc(mask));
  Bytes req;
  ByteWriter w(req);
  w.u64(query_id);
  p.codec().put(w, masked);
  Bytes resp = p.peer().call(proto::kResultDeliver, req);
  ByteReader rd(resp);
  if (rd.u8() != 1) throw ProtocolFault("result delivery was not acknowledged");
  rd.expect_end();
  return mask;
}

// Querier collects the decrypted masked label from the key holder.
inline mpz_class fetch_result(PeerClient& peer, const PublicKey& pk, std::uint64_t query_id,
                              int max_tries = 400) {
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Bytes req;
    ByteWriter w(req);
    w.u64(query_id);
    Bytes resp = peer.call(proto::kResultFetch, req);
    ByteReader rd(resp);
    if (rd.u8() == 1) {
      mpz_class masked = rd.mpz_fixed(pk.bits / 8);
      rd.expect_end();
      return masked;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  throw TransportError("result for query " + std::to_string(query_id) + " never arrived");
}

inline mpz_class unmask_result(const PublicKey& pk, const mpz_class& fetched, const mpz_class& mask) {
  mpz_class out = (fetched - mask) % pk.n;
  if (out < 0) out += pk.n;
  return out;
}

}  // namespace ppknn
