#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "gateslab/encoders.hpp"
#include "gateslab/errors.hpp"
#include "gateslab/rng.hpp"
#include "gateslab/tape.hpp"

namespace gateslab {

// Training losses (built on the tape so they are differentiable) and ranking
// metrics (plain functions). Pair losses average over the valid pairs so the
// loss scale does not depend on batch size.

enum class LossKind { mse, hinge_pair, bce_pair, comparator, listmle };

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::hinge_pair: return "hinge";
    case LossKind::bce_pair: return "bce";
    case LossKind::comparator: return "comparator";
    case LossKind::listmle: return "listmle";
  }
  return "?";
}

inline LossKind loss_from_name(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "hinge") return LossKind::hinge_pair;
  if (s == "bce") return LossKind::bce_pair;
  if (s == "comparator") return LossKind::comparator;
  if (s == "listmle") return LossKind::listmle;
  throw Error("unknown loss '" + s + "'");
}

struct LossConfig {
  LossKind kind = LossKind::hinge_pair;
  double margin = 0.1;
  int list_length = 4;
};

struct BuiltLoss {
  int node = -1;
  bool no_valid_pairs = false;
};

namespace detail_obj {

// Indicator matrix W[p][q] = 1 iff y_p > y_q, plus the pair count.
inline std::pair<Tensor, std::size_t> better_matrix(const std::vector<double>& y) {
  const std::size_t n = y.size();
  Tensor w(Shape{n, n}, 0.0);
  std::size_t pairs = 0;
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q)
      if (y[p] > y[q]) {
        w.data[p * n + q] = 1.0;
        ++pairs;
      }
  return {std::move(w), pairs};
}

inline void check_scores(const Tape& t, int scores, const std::vector<double>& y,
                         const char* op) {
  if (y.empty()) throw EmptyError(std::string(op) + ": empty sample set");
  const Tensor& s = t.val(scores);
  if (s.rank() != 1 || s.shape[0] != y.size())
    throw ShapeError(std::string(op) + ": scores " + shape_str(s.shape) + " vs " +
                     std::to_string(y.size()) + " targets");
}

// score difference matrix M[p][q] = s_p - s_q
inline int diff_matrix(Tape& t, int scores) {
  const int col = t.expand_axis(scores, 1);
  const int row = t.expand_axis(scores, 0);
  return t.add(col, t.mul(row, t.constant(-1.0)));
}

}  // namespace detail_obj

// Mean squared error: mean_j (s_j - y_j)^2.
inline BuiltLoss mse_loss_node(Tape& t, int scores, const std::vector<double>& y) {
  detail_obj::check_scores(t, scores, y, "mse_loss");
  std::vector<double> neg(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) neg[i] = -y[i];
  const int diff = t.add(scores, t.constant(Tensor::row(neg)));
  return {t.mean_all(t.square(diff)), false};
}

// Hinge pairwise ranking loss: mean over pairs y_p > y_q of
// max(0, m - (s_p - s_q)). Ties in y contribute no pair.
inline BuiltLoss hinge_pair_loss_node(Tape& t, int scores, const std::vector<double>& y,
                                      double margin) {
  detail_obj::check_scores(t, scores, y, "hinge_pair_loss");
  if (margin <= 0) throw Error("hinge_pair_loss: margin must be positive");
  auto [w, pairs] = detail_obj::better_matrix(y);
  if (pairs == 0) return {t.constant(0.0), true};
  const int m = detail_obj::diff_matrix(t, scores);
  const int hinge = t.relu(t.add(t.constant(margin), t.mul(m, t.constant(-1.0))));
  const int masked = t.mul(hinge, t.constant(w));
  const int total = t.sum_axis(t.sum_axis(masked, 1), 0);
  return {t.mul(total, t.constant(1.0 / static_cast<double>(pairs))), false};
}

// Pairwise BCE: mean over pairs y_p > y_q of softplus(-(s_p - s_q)).
inline BuiltLoss bce_pair_loss_node(Tape& t, int scores, const std::vector<double>& y) {
  detail_obj::check_scores(t, scores, y, "bce_pair_loss");
  auto [w, pairs] = detail_obj::better_matrix(y);
  if (pairs == 0) return {t.constant(0.0), true};
  const int m = detail_obj::diff_matrix(t, scores);
  const int sp = t.softplus(t.mul(m, t.constant(-1.0)));
  const int masked = t.mul(sp, t.constant(w));
  const int total = t.sum_axis(t.sum_axis(masked, 1), 0);
  return {t.mul(total, t.constant(1.0 / static_cast<double>(pairs))), false};
}

// ListMLE: scores arrive list-major, each list of length L already sorted by
// true performance (best first). Loss is the mean over lists of
// sum_i [-s^(i) + logsumexp(s^(i..L))].
inline BuiltLoss listmle_loss_node(Tape& t, int scores, int list_length) {
  const Tensor& s = t.val(scores);
  if (s.size() == 0) throw EmptyError("listmle_loss: empty scores");
  if (list_length < 1) throw Error("listmle_loss: list length must be >= 1");
  if (s.rank() != 1 || s.shape[0] % list_length != 0)
    throw ShapeError("listmle_loss: scores " + shape_str(s.shape) +
                     " not divisible into lists of " + std::to_string(list_length));
  const std::size_t L = list_length;
  const std::size_t G = s.shape[0] / L;
  const int lists = t.reshape(scores, Shape{G, L});
  // suffix mask: row i keeps positions j >= i
  Tensor mask(Shape{L, L}, 0.0);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      if (j < i) mask.data[i * L + j] = -1e30;
  const int spread = t.add(t.expand_axis(lists, 1), t.constant(mask));  // (G,L,L)
  const int lse = t.logsumexp_axis(spread, 2);                          // (G,L)
  const int term = t.add(lse, t.mul(lists, t.constant(-1.0)));
  const int total = t.sum_axis(t.sum_axis(term, 1), 0);
  return {t.mul(total, t.constant(1.0 / static_cast<double>(G))), false};
}

// Comparator loss with anti-symmetry regularization: for pairs y_j > y_i,
//   max(0, m - s(j,i)) + max(0, m + s(i,j)).
inline BuiltLoss comparator_loss_node(Tape& t, const BoundParams& p, int emb,
                                      const std::vector<std::pair<int, int>>& pairs,
                                      const EncoderConfig& cfg, double margin) {
  if (!cfg.comparator)
    throw ShapeError("comparator_loss: predictor head was not built for pairs");
  if (pairs.empty()) return {t.constant(0.0), true};
  const Tensor& e = t.val(emb);
  const std::size_t n = e.shape[0];
  Tensor sel_j(Shape{pairs.size(), n}, 0.0), sel_i(Shape{pairs.size(), n}, 0.0);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    sel_j.data[r * n + pairs[r].first] = 1.0;
    sel_i.data[r * n + pairs[r].second] = 1.0;
  }
  const int ej = t.matmul(t.constant(sel_j), emb);
  const int ei = t.matmul(t.constant(sel_i), emb);
  const int s_ji = build_head(t, p, t.concat_axis({ej, ei}, 1), cfg);
  const int s_ij = build_head(t, p, t.concat_axis({ei, ej}, 1), cfg);
  const int neg = t.constant(-1.0);
  const int a = t.relu(t.add(t.constant(margin), t.mul(s_ji, neg)));
  const int b = t.relu(t.add(t.constant(margin), s_ij));
  return {t.mean_all(t.add(a, b)), false};
}

// --- plain-value wrappers (the losses as scalar functions) -------------------

struct LossValue {
  double value = 0.0;
  bool no_valid_pairs = false;
};

inline LossValue mse_loss(const std::vector<double>& s, const std::vector<double>& y) {
  if (s.size() != y.size()) throw ShapeError("mse_loss: length mismatch");
  Tape t;
  auto r = mse_loss_node(t, t.constant(Tensor::row(s)), y);
  return {t.val(r.node).data[0], r.no_valid_pairs};
}

inline LossValue hinge_pair_loss(const std::vector<double>& s,
                                 const std::vector<double>& y, double margin = 0.1) {
  if (s.size() != y.size()) throw ShapeError("hinge_pair_loss: length mismatch");
  Tape t;
  auto r = hinge_pair_loss_node(t, t.constant(Tensor::row(s)), y, margin);
  return {t.val(r.node).data[0], r.no_valid_pairs};
}

inline LossValue bce_pair_loss(const std::vector<double>& s,
                               const std::vector<double>& y) {
  if (s.size() != y.size()) throw ShapeError("bce_pair_loss: length mismatch");
  Tape t;
  auto r = bce_pair_loss_node(t, t.constant(Tensor::row(s)), y);
  return {t.val(r.node).data[0], r.no_valid_pairs};
}

// Lists are passed explicitly; each must already be sorted best-first.
inline LossValue listmle_loss(const std::vector<std::vector<double>>& lists) {
  if (lists.empty()) throw EmptyError("listmle_loss: no lists");
  const std::size_t L = lists[0].size();
  std::vector<double> flat;
  for (const auto& l : lists) {
    if (l.size() != L) throw ShapeError("listmle_loss: ragged lists");
    flat.insert(flat.end(), l.begin(), l.end());
  }
  Tape t;
  auto r = listmle_loss_node(t, t.constant(Tensor::row(flat)), static_cast<int>(L));
  return {t.val(r.node).data[0], r.no_valid_pairs};
}

// --- Kendall's tau ------------------------------------------------------------

struct TauResult {
  double tau = 0.0;
  bool all_tied = false;  // undefined (zero denominator): tau is NaN
};

struct PairCounts {
  long long concordant = 0, discordant = 0;
  long long n = 0;
  long long ties_x = 0, ties_y = 0, ties_both = 0;  // pair counts
};

// Shared final formula so the fast and brute-force routes agree bit-for-bit
// once their integer counts agree.
inline TauResult tau_from_counts(const PairCounts& c, bool tau_b) {
  const double num = static_cast<double>(c.concordant - c.discordant);
  const double n0 = 0.5 * static_cast<double>(c.n) * static_cast<double>(c.n - 1);
  if (tau_b) {
    const double d1 = n0 - static_cast<double>(c.ties_x);
    const double d2 = n0 - static_cast<double>(c.ties_y);
    if (d1 <= 0.0 || d2 <= 0.0)
      return {std::numeric_limits<double>::quiet_NaN(), true};
    return {num / std::sqrt(d1 * d2), false};
  }
  if (n0 <= 0.0) return {std::numeric_limits<double>::quiet_NaN(), true};
  return {num / n0, false};
}

namespace detail_obj {

inline long long merge_count_inversions(std::vector<double>& v,
                                        std::vector<double>& buf, std::size_t lo,
                                        std::size_t hi) {
  if (hi - lo <= 1) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  long long inv = merge_count_inversions(v, buf, lo, mid) +
                  merge_count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[i] <= v[j]) {
      buf[k++] = v[i++];
    } else {
      inv += static_cast<long long>(mid - i);
      buf[k++] = v[j++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
  return inv;
}

inline long long tie_pairs_sorted(const std::vector<double>& v) {
  long long t = 0;
  std::size_t i = 0;
  while (i < v.size()) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    const long long run = static_cast<long long>(j - i);
    t += run * (run - 1) / 2;
    i = j;
  }
  return t;
}

}  // namespace detail_obj

// O(n log n) pair counting (Knight's algorithm).
inline PairCounts kendall_counts(const std::vector<double>& x,
                                 const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("kendall_tau: length mismatch");
  if (x.size() < 2) throw EmptyError("kendall_tau: need at least 2 samples");
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  PairCounts c;
  c.n = static_cast<long long>(n);
  // ties in x, and joint ties, over x-sorted runs
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && x[idx[j]] == x[idx[i]]) ++j;
    const long long run = static_cast<long long>(j - i);
    c.ties_x += run * (run - 1) / 2;
    std::size_t a = i;
    while (a < j) {
      std::size_t b = a;
      while (b < j && y[idx[b]] == y[idx[a]]) ++b;
      const long long jr = static_cast<long long>(b - a);
      c.ties_both += jr * (jr - 1) / 2;
      a = b;
    }
    i = j;
  }

  std::vector<double> ys(n);
  for (std::size_t k = 0; k < n; ++k) ys[k] = y[idx[k]];
  std::vector<double> buf(n), sorted_y = ys;
  c.discordant = detail_obj::merge_count_inversions(ys, buf, 0, n);
  std::sort(sorted_y.begin(), sorted_y.end());
  c.ties_y = detail_obj::tie_pairs_sorted(sorted_y);

  const long long n0 = c.n * (c.n - 1) / 2;
  c.concordant = n0 - c.ties_x - c.ties_y + c.ties_both - c.discordant;
  return c;
}

inline TauResult kendall_tau(const std::vector<double>& s, const std::vector<double>& y,
                             bool tau_b = true) {
  return tau_from_counts(kendall_counts(s, y), tau_b);
}

// --- top-K metrics --------------------------------------------------------------

namespace detail_obj {

// indices ordered by (value desc, index asc)
inline std::vector<std::size_t> order_desc(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (v[a] != v[b]) return v[a] > v[b];
    return a < b;
  });
  return idx;
}

}  // namespace detail_obj

// Best true ranking (1-based, rank 1 = best y) among the top-K predicted.
inline int n_at_k(const std::vector<double>& s, const std::vector<double>& y, int K) {
  if (s.size() != y.size()) throw ShapeError("n_at_k: length mismatch");
  if (K < 1 || static_cast<std::size_t>(K) > s.size())
    throw SizeError("n_at_k: K out of range");
  const auto by_s = detail_obj::order_desc(s);
  const auto by_y = detail_obj::order_desc(y);
  std::vector<int> rank(y.size());
  for (std::size_t r = 0; r < by_y.size(); ++r) rank[by_y[r]] = static_cast<int>(r) + 1;
  int best = static_cast<int>(y.size());
  for (int k = 0; k < K; ++k) best = std::min(best, rank[by_s[k]]);
  return best;
}

// |topK(s) cap topK(y)| / K.
inline double precision_at_k(const std::vector<double>& s, const std::vector<double>& y,
                             int K) {
  if (s.size() != y.size()) throw ShapeError("precision_at_k: length mismatch");
  if (K < 1 || static_cast<std::size_t>(K) > s.size())
    throw SizeError("precision_at_k: K out of range");
  const auto by_s = detail_obj::order_desc(s);
  const auto by_y = detail_obj::order_desc(y);
  std::vector<char> in_true(y.size(), 0);
  for (int k = 0; k < K; ++k) in_true[by_y[k]] = 1;
  int hits = 0;
  for (int k = 0; k < K; ++k) hits += in_true[by_s[k]];
  return static_cast<double>(hits) / static_cast<double>(K);
}

// --- comparator quicksort ---------------------------------------------------------

// Randomized quicksort driven by a pairwise comparator (positive: first
// argument is better). Returns indices best-first. The comparator need not be
// transitive; the work bound guards against pathological behavior.
inline std::vector<int> comparator_sort(int n,
                                        const std::function<double(int, int)>& cmp,
                                        std::uint64_t seed) {
  if (n <= 0) throw EmptyError("comparator_sort: empty input");
  Rng rng(derive_seed(seed, "qsort"));
  const long long bound = 4LL * n * n + 64;
  long long comparisons = 0;

  std::vector<int> items(n);
  std::iota(items.begin(), items.end(), 0);
  std::vector<int> out;
  out.reserve(n);

  std::function<void(std::vector<int>&)> rec = [&](std::vector<int>& v) {
    if (v.size() <= 1) {
      out.insert(out.end(), v.begin(), v.end());
      return;
    }
    const int pivot = v[rng.pick(static_cast<int>(v.size()))];
    std::vector<int> better, worse, equal;
    for (int it : v) {
      if (it == pivot) {
        equal.push_back(it);
        continue;
      }
      if (++comparisons > bound)
        throw SortError("comparator_sort: comparison budget exceeded (non-transitive comparator?)");
      const double c = cmp(it, pivot);
      (c > 0 ? better : worse).push_back(it);
    }
    rec(better);
    out.insert(out.end(), equal.begin(), equal.end());
    rec(worse);
  };
  rec(items);
  return out;
}

// --- metrics record -----------------------------------------------------------

struct MetricsRecord {
  std::size_t n = 0;
  double tau = 0.0;
  bool tau_all_tied = false;
  std::map<int, int> n_at;            // K -> best true rank
  std::map<int, double> p_at;         // K -> precision
};

inline std::vector<int> default_k_grid(std::size_t n) {
  std::vector<int> ks;
  const int half = static_cast<int>(n / 2);
  for (int base = 1; base <= half;) {
    for (int mult : {1, 2, 5}) {
      const int k = base * mult;
      if (k <= half) ks.push_back(k);
    }
    base *= 10;
    if (base <= 0) break;
  }
  if (ks.empty() && n >= 1) ks.push_back(1);
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

inline MetricsRecord compute_metrics(const std::vector<double>& s,
                                     const std::vector<double>& y) {
  MetricsRecord r;
  r.n = s.size();
  const TauResult t = kendall_tau(s, y);
  r.tau = t.tau;
  r.tau_all_tied = t.all_tied;
  for (int k : {5, 10})
    if (static_cast<std::size_t>(k) <= s.size()) r.n_at[k] = n_at_k(s, y, k);
  for (int k : default_k_grid(s.size())) r.p_at[k] = precision_at_k(s, y, k);
  return r;
}

inline std::string metrics_to_json(const MetricsRecord& r) {
  std::string out = "{\"n\":" + std::to_string(r.n) + ",\"tau\":";
  out += r.tau_all_tied ? "null" : fmt_g17(r.tau);
  out += ",\"n_at\":{";
  bool first = true;
  for (const auto& [k, v] : r.n_at) {
    if (!first) out += ',';
    first = false;
    out += "\"" + std::to_string(k) + "\":" + std::to_string(v);
  }
  out += "},\"p_at\":{";
  first = true;
  for (const auto& [k, v] : r.p_at) {
    if (!first) out += ',';
    first = false;
    out += "\"" + std::to_string(k) + "\":" + fmt_g17(v);
  }
  out += "}}";
  return out;
}

inline std::string precision_csv(const MetricsRecord& r) {
  std::string out = "K,precision\n";
  for (const auto& [k, v] : r.p_at) out += std::to_string(k) + "," + fmt_g17(v) + "\n";
  return out;
}

}  // namespace gateslab
