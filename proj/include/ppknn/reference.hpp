#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "ppknn/dataset.hpp"

namespace ppknn {

// Plaintext reference model. Distance or majority ties make several
// answers equally right, so the reference yields the full set of labels
// an exact k-NN classifier may legitimately return.

inline std::uint64_t squared_distance(const std::vector<std::uint32_t>& a,
                                      const std::vector<std::uint32_t>& b) {
  std::uint64_t d = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    std::int64_t diff = std::int64_t(a[j]) - std::int64_t(b[j]);
    d += static_cast<std::uint64_t>(diff * diff);
  }
  return d;
}

namespace detail {

// All labels that can win a majority vote over: the fixed counts, plus
// `remaining` more votes drawn from `optional_counts` (label -> available
// votes). Recurses over the optional labels; domains here are tiny.
inline void majority_over_choices(const std::map<std::uint32_t, std::uint32_t>& fixed,
                                  std::vector<std::pair<std::uint32_t, std::uint32_t>>& optional_counts,
                                  std::size_t idx, std::uint32_t remaining,
                                  std::map<std::uint32_t, std::uint32_t>& chosen,
                                  std::set<std::uint32_t>& winners) {
  if (remaining == 0 || idx == optional_counts.size()) {
    if (remaining != 0) return;  // not enough optional votes on this path
    std::map<std::uint32_t, std::uint32_t> counts = fixed;
    for (const auto& [label, cnt] : chosen) counts[label] += cnt;
    std::uint32_t best = 0;
    for (const auto& [label, cnt] : counts) best = std::max(best, cnt);
    for (const auto& [label, cnt] : counts)
      if (cnt == best) winners.insert(label);
    return;
  }
  auto [label, avail] = optional_counts[idx];
  std::uint32_t cap = std::min(avail, remaining);
  for (std::uint32_t take = 0; take <= cap; ++take) {
    if (take > 0) chosen[label] = take;
    majority_over_choices(fixed, optional_counts, idx + 1, remaining - take, chosen, winners);
    chosen.erase(label);
  }
}

}  // namespace detail

// Every label a correct k-NN majority classifier may output for this
// query: records strictly inside the k-th distance are mandatory, records
// tied at the boundary may fill the remaining slots in any combination,
// and a tied vote may break either way.
inline std::set<std::uint32_t> knn_label_options(const PlainTable& t,
                                                 const std::vector<std::uint32_t>& query,
                                                 std::uint32_t k) {
  if (k < 1 || k > t.n()) throw ContractError("k must be in 1..n");
  if (query.size() != t.m) throw ContractError("query arity does not match table");

  std::vector<std::uint64_t> dist(t.n());
  for (std::size_t i = 0; i < t.n(); ++i) dist[i] = squared_distance(query, t.rows[i]);

  std::vector<std::uint64_t> sorted = dist;
  std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
  std::uint64_t boundary = sorted[k - 1];

  std::map<std::uint32_t, std::uint32_t> mandatory;
  std::map<std::uint32_t, std::uint32_t> boundary_votes;
  std::uint32_t mandatory_total = 0;
  for (std::size_t i = 0; i < t.n(); ++i) {
    if (dist[i] < boundary) {
      ++mandatory[t.labels[i]];
      ++mandatory_total;
    } else if (dist[i] == boundary) {
      ++boundary_votes[t.labels[i]];
    }
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> optional(boundary_votes.begin(),
                                                                boundary_votes.end());
  std::set<std::uint32_t> winners;
  std::map<std::uint32_t, std::uint32_t> chosen;
  detail::majority_over_choices(mandatory, optional, 0, k - mandatory_total, chosen, winners);
  return winners;
}

}  // namespace ppknn
