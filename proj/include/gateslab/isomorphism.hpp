#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "gateslab/errors.hpp"
#include "gateslab/space.hpp"

namespace gateslab {

// Brute-force isomorphism over internal-node relabelings. Input nodes (and
// the output node, where the space has one) stay fixed; a relabeling is valid
// only if every edge still runs from a lower to a higher index, i.e. the
// permutation is a linear extension of the DAG order. For OOE, slots are
// interchangeable, so comparisons happen on the slot-normalized form.

namespace detail_iso {

inline void check_size(const ArchDag& a, const char* op) {
  if (a.v > 8)
    throw SizeError(std::string(op) + ": v = " + std::to_string(a.v) +
                    " too large for factorial search (max 8)");
}

// perm maps old node index -> new node index. Returns nullopt when an edge
// would point backward.
inline std::optional<ArchDag> apply_perm(const ArchDag& a, const std::vector<int>& perm) {
  const SpaceSpec& sp = *a.space;
  ArchDag out;
  out.space = a.space;
  out.v = a.v;
  if (sp.kind == SpaceKind::oon) {
    out.node_ops.assign(a.v, 0);
    out.preds.resize(a.v);
    for (int i = 0; i < a.v; ++i) out.node_ops[perm[i]] = a.node_ops[i];
    for (int dst = 0; dst < a.v; ++dst)
      for (int src : a.preds[dst]) {
        const int s = perm[src], d = perm[dst];
        if (s >= d) return std::nullopt;
        out.preds[d].push_back(s);
      }
    for (auto& p : out.preds) std::sort(p.begin(), p.end());
  } else {
    for (const auto& e : a.edges) {
      const int s = perm[e.src], d = perm[e.dst];
      if (s >= d) return std::nullopt;
      out.edges.push_back({s, d, e.slot, e.op});
    }
    normalize_slots(out);
  }
  return out;
}

template <class F>
inline void for_each_relabeling(const ArchDag& a, F&& f) {
  const auto [lo, hi] = internal_node_range(a);
  std::vector<int> perm(a.v);
  std::iota(perm.begin(), perm.end(), 0);
  if (lo >= hi) {
    f(a);
    return;
  }
  std::vector<int> internal(perm.begin() + lo, perm.begin() + hi);
  do {
    std::vector<int> p(a.v);
    std::iota(p.begin(), p.end(), 0);
    for (int i = lo; i < hi; ++i) p[internal[i - lo]] = i;
    if (auto relabeled = apply_perm(a, p)) f(*relabeled);
  } while (std::next_permutation(internal.begin(), internal.end()));
}

}  // namespace detail_iso

inline bool is_isomorphic(const ArchDag& a, const ArchDag& b) {
  if (a.space->id != b.space->id)
    throw SpaceError("is_isomorphic: different spaces " + a.space->id + " vs " +
                     b.space->id);
  detail_iso::check_size(a, "is_isomorphic");
  detail_iso::check_size(b, "is_isomorphic");
  if (a.v != b.v) return false;
  ArchDag bn = b;
  normalize_slots(bn);
  const std::string target = serialize_key(bn);
  bool found = false;
  detail_iso::for_each_relabeling(a, [&](const ArchDag& r) {
    if (!found && serialize_key(r) == target) found = true;
  });
  return found;
}

// Lexicographically minimal serialization over all valid relabelings.
// canonicalize(a) == canonicalize(b) iff is_isomorphic(a, b).
inline ArchDag canonicalize(const ArchDag& a) {
  detail_iso::check_size(a, "canonicalize");
  ArchDag best;
  std::string best_key;
  detail_iso::for_each_relabeling(a, [&](const ArchDag& r) {
    std::string key = serialize_key(r);
    if (best_key.empty() || key < best_key) {
      best_key = std::move(key);
      best = r;
    }
  });
  return best;
}

inline std::string canonical_key(const ArchDag& a) {
  detail_iso::check_size(a, "canonicalize");
  std::string best_key;
  detail_iso::for_each_relabeling(a, [&](const ArchDag& r) {
    std::string key = serialize_key(r);
    if (best_key.empty() || key < best_key) best_key = std::move(key);
  });
  return best_key;
}

// All distinct relabelings of `a` (including itself).
inline std::vector<ArchDag> isomorphic_variants(const ArchDag& a) {
  detail_iso::check_size(a, "isomorphic_variants");
  std::vector<ArchDag> out;
  std::vector<std::string> seen;
  detail_iso::for_each_relabeling(a, [&](const ArchDag& r) {
    std::string key = serialize_key(r);
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      seen.push_back(std::move(key));
      out.push_back(r);
    }
  });
  return out;
}

}  // namespace gateslab
