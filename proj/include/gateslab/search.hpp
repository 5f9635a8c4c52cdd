#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gateslab/bench.hpp"
#include "gateslab/trainer.hpp"

namespace gateslab {

// Predictor-based NAS outer loop (random or evolutionary inner search) plus
// the random-search and regularized-evolution baselines. All strategies share
// one dedup rule: no architecture is ground-truth-evaluated twice, keyed by
// canonical form.

// Ground-truth evaluator. Tabular evaluators expose their pool so strategies
// can sample uniformly from a finite space; the oracle covers the whole space.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  // performance and a stable id; nullopt when the arch is not in the table
  virtual std::optional<std::pair<double, std::string>> evaluate(
      const ArchDag& arch, const std::string& canonical) const = 0;
  virtual bool contains(const std::string& canonical) const = 0;
  virtual std::size_t pool_size() const { return 0; }  // 0 = infinite
  virtual const ArchDag& pool_arch(std::size_t) const {
    throw Error("evaluator has no finite pool");
  }
};

class OracleEvaluator : public Evaluator {
 public:
  OracleEvaluator(const SpaceSpec& sp, OracleSpec oracle)
      : space_(&sp), oracle_(std::move(oracle)) {
    oracle_.check_covers(sp);
  }

  std::optional<std::pair<double, std::string>> evaluate(
      const ArchDag& arch, const std::string& canonical) const override {
    return std::make_pair(synth_perf(arch, oracle_),
                          "h" + fmt_hex(fnv1a64(canonical)));
  }
  bool contains(const std::string&) const override { return true; }

 private:
  const SpaceSpec* space_;
  OracleSpec oracle_;
};

class TableEvaluator : public Evaluator {
 public:
  explicit TableEvaluator(const Dataset& ds) : ds_(&ds) {
    for (std::size_t i = 0; i < ds.size(); ++i)
      index_.emplace(canonical_key(ds[i].arch), i);
  }

  std::optional<std::pair<double, std::string>> evaluate(
      const ArchDag&, const std::string& canonical) const override {
    auto it = index_.find(canonical);
    if (it == index_.end()) return std::nullopt;
    return std::make_pair((*ds_)[it->second].perf, (*ds_)[it->second].id);
  }
  bool contains(const std::string& canonical) const override {
    return index_.count(canonical) != 0;
  }
  std::size_t pool_size() const override { return ds_->size(); }
  const ArchDag& pool_arch(std::size_t i) const override { return (*ds_)[i].arch; }

 private:
  const Dataset* ds_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class InnerKind { random, ea };

struct InnerMethod {
  InnerKind kind = InnerKind::random;
  int n = 2500;  // samples (random) or EA steps (ea)
  int k = 5;     // architectures handed to true evaluation per stage
  int population = 20;
  int tournament = 5;
};

struct SearchConfig {
  int max_stages = 1000;
  int initial_budget = 100;  // stage-1 uniform tranche
  long max_evals = -1;       // cap on true evaluations, -1 = unlimited
  double stop_perf = std::numeric_limits<double>::infinity();  // early stop target
  InnerMethod inner;
  TrainConfig predictor;  // epochs default 50 for the per-stage retraining
  std::uint64_t seed = 0;
  // With n == k the predictor cannot change the chosen set, so training is
  // skipped and pred_score is recorded as NaN.
  bool skip_train_when_unused = true;
};

struct TraceRow {
  int stage = 0;
  long eval_index = 0;  // 1-based, cumulative
  std::string arch_id;
  double true_perf = 0.0;
  double pred_score = std::numeric_limits<double>::quiet_NaN();
  double best_so_far = 0.0;
};

struct SearchTrace {
  std::vector<TraceRow> rows;

  std::string to_csv() const {
    std::string out = "stage,eval_index,arch_id,true_perf,pred_score,best_so_far\n";
    for (const auto& r : rows) {
      out += std::to_string(r.stage) + "," + std::to_string(r.eval_index) + "," +
             r.arch_id + "," + fmt_g17(r.true_perf) + ",";
      out += std::isnan(r.pred_score) ? "nan" : fmt_g17(r.pred_score);
      out += "," + fmt_g17(r.best_so_far) + "\n";
    }
    return out;
  }

  // first evaluation index whose true perf reaches the target, or -1
  long evals_to_reach(double target) const {
    for (const auto& r : rows)
      if (r.true_perf >= target) return r.eval_index;
    return -1;
  }
};

struct SearchResult {
  ArchDag best;
  double best_perf = -std::numeric_limits<double>::infinity();
  SearchTrace trace;
};

namespace detail_search {

inline ArchDag sample_in(const SpaceSpec& sp, const Evaluator& eval, Rng& rng) {
  if (const std::size_t n = eval.pool_size(); n > 0)
    return eval.pool_arch(rng.below(n));
  return sample_random(sp, rng);
}

// Mutation constrained to the evaluator's pool (rejection; the pool is dense
// in the spaces used for tabular experiments).
inline ArchDag mutate_in(const Evaluator& eval, const ArchDag& parent, Rng& rng) {
  for (int tries = 0; tries < 200; ++tries) {
    ArchDag child = mutate(parent, rng);
    if (eval.contains(canonical_key(child))) return child;
  }
  throw MutationError("mutate_in: no in-pool mutation found after 200 tries");
}

struct EvalBook {
  const SpaceSpec* space;
  const Evaluator* eval;
  SearchTrace trace;
  Dataset evaluated;  // cumulative (arch, perf, id) in evaluation order
  std::unordered_set<std::string> keys;
  double best = -std::numeric_limits<double>::infinity();
  std::optional<ArchDag> best_arch;

  bool seen(const std::string& key) const { return keys.count(key) != 0; }

  // Returns false if the arch was already evaluated.
  bool evaluate(const ArchDag& a, const std::string& key, int stage, double pred_score) {
    if (!keys.insert(key).second) return false;
    const auto r = eval->evaluate(a, key);
    if (!r)
      throw EvalError("architecture not in dataset: " + key);
    TraceRow row;
    row.stage = stage;
    row.eval_index = static_cast<long>(trace.rows.size()) + 1;
    row.arch_id = r->second;
    row.true_perf = r->first;
    row.pred_score = pred_score;
    if (r->first > best) {
      best = r->first;
      best_arch = a;
    }
    row.best_so_far = best;
    trace.rows.push_back(std::move(row));
    evaluated.push_back({a, r->first, r->second});
    return true;
  }
};

struct ScoredCandidate {
  ArchDag arch;
  std::string key;
  double score;
};

inline void sort_candidates(std::vector<ScoredCandidate>& cands) {
  std::sort(cands.begin(), cands.end(), [](const ScoredCandidate& a,
                                           const ScoredCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key < b.key;
  });
}

}  // namespace detail_search

// Inner search, random variant: n uniform samples (deduped against history
// and each other), scored by the predictor, best k returned.
inline std::vector<detail_search::ScoredCandidate> inner_random(
    const Predictor* pred, const SpaceSpec& sp, const Evaluator& eval,
    const std::unordered_set<std::string>& history, int n, int k, Rng& rng) {
  std::vector<detail_search::ScoredCandidate> cands;
  std::unordered_set<std::string> local;
  int misses = 0;
  const int miss_budget = 50 * n + 1000;
  while (static_cast<int>(cands.size()) < n && misses < miss_budget) {
    ArchDag a = detail_search::sample_in(sp, eval, rng);
    std::string key = canonical_key(a);
    if (history.count(key) || !local.insert(key).second) {
      ++misses;
      continue;
    }
    cands.push_back({std::move(a), std::move(key), 0.0});
  }
  if (pred) {
    std::vector<ArchDag> archs;
    archs.reserve(cands.size());
    for (const auto& c : cands) archs.push_back(c.arch);
    const auto scores = predict_scores(*pred, archs);
    for (std::size_t i = 0; i < cands.size(); ++i) cands[i].score = scores[i];
  }
  detail_search::sort_candidates(cands);
  if (static_cast<int>(cands.size()) > k) cands.resize(k);
  return cands;
}

// Inner search, evolutionary variant: aging evolution on predicted scores for
// n steps; returns the best k distinct candidates seen in this inner run.
inline std::vector<detail_search::ScoredCandidate> inner_ea(
    const Predictor& pred, const SpaceSpec& sp, const Evaluator& eval,
    const std::unordered_set<std::string>& history, const InnerMethod& im, Rng& rng) {
  if (im.population < im.tournament || im.tournament < 1)
    throw Error("inner_ea: need population >= tournament >= 1");
  struct Member {
    ArchDag arch;
    std::string key;
    double score;
  };
  std::deque<Member> population;
  std::vector<detail_search::ScoredCandidate> seen;
  std::unordered_set<std::string> seen_keys;

  auto score_one = [&](const ArchDag& a) {
    return predict_scores(pred, {a})[0];
  };
  auto note = [&](const ArchDag& a, const std::string& key, double score) {
    if (seen_keys.insert(key).second) seen.push_back({a, key, score});
  };

  for (int i = 0; i < im.population; ++i) {
    ArchDag a = detail_search::sample_in(sp, eval, rng);
    std::string key = canonical_key(a);
    const double s = score_one(a);
    note(a, key, s);
    population.push_back({std::move(a), std::move(key), s});
  }
  for (int step = 0; step < im.n; ++step) {
    // tournament: best predicted of `tournament` distinct members
    std::vector<std::size_t> idx(population.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::size_t parent = idx[0];
    for (int j = 1; j < im.tournament; ++j)
      if (population[idx[j]].score > population[parent].score) parent = idx[j];
    ArchDag child = detail_search::mutate_in(eval, population[parent].arch, rng);
    std::string key = canonical_key(child);
    const double s = score_one(child);
    note(child, key, s);
    population.push_back({std::move(child), std::move(key), s});
    population.pop_front();  // evict oldest
  }

  std::vector<detail_search::ScoredCandidate> cands;
  for (auto& c : seen)
    if (!history.count(c.key)) cands.push_back(std::move(c));
  detail_search::sort_candidates(cands);
  if (static_cast<int>(cands.size()) > im.k) cands.resize(im.k);
  return cands;
}

// Alg-1 outer loop: uniform stage-1 tranche, then train-on-everything +
// inner-search + evaluate-k per stage.
inline SearchResult pbnas_run(const SpaceSpec& sp, const Evaluator& eval,
                              const SearchConfig& cfg) {
  detail_search::EvalBook book{&sp, &eval};
  Rng srng(derive_seed(cfg.seed, "stage1"));

  auto budget_left = [&]() {
    return cfg.max_evals < 0 ||
           static_cast<long>(book.trace.rows.size()) < cfg.max_evals;
  };
  auto done = [&]() { return !budget_left() || book.best >= cfg.stop_perf; };

  int misses = 0;
  while (static_cast<int>(book.trace.rows.size()) < cfg.initial_budget && !done()) {
    ArchDag a = detail_search::sample_in(sp, eval, srng);
    const std::string key = canonical_key(a);
    if (book.seen(key)) {
      if (++misses > 50 * cfg.initial_budget + 1000)
        throw SpaceError("pbnas_run: cannot fill the initial tranche with distinct archs");
      continue;
    }
    book.evaluate(a, key, 1, std::numeric_limits<double>::quiet_NaN());
  }

  for (int stage = 2; stage <= cfg.max_stages && !done(); ++stage) {
    Rng rng(derive_seed(cfg.seed, "stage", static_cast<std::uint64_t>(stage)));
    const bool predictor_unused =
        cfg.inner.kind == InnerKind::random && cfg.inner.n == cfg.inner.k;
    std::optional<Predictor> pred;
    if (!(predictor_unused && cfg.skip_train_when_unused)) {
      TrainConfig tc = cfg.predictor;
      tc.seed = derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(stage));
      tc.eval_every_epoch = false;
      pred = train_predictor(book.evaluated, {}, tc).first;
    }
    std::vector<detail_search::ScoredCandidate> chosen;
    if (cfg.inner.kind == InnerKind::random) {
      chosen = inner_random(pred ? &*pred : nullptr, sp, eval, book.keys,
                            cfg.inner.n, cfg.inner.k, rng);
    } else {
      if (!pred) throw Error("pbnas_run: EA inner search requires the predictor");
      chosen = inner_ea(*pred, sp, eval, book.keys, cfg.inner, rng);
    }
    if (chosen.empty()) break;  // space exhausted
    for (const auto& c : chosen) {
      if (done()) break;
      book.evaluate(c.arch, c.key,
                    stage, pred ? c.score : std::numeric_limits<double>::quiet_NaN());
    }
  }

  SearchResult res;
  if (!book.best_arch) throw SpaceError("pbnas_run: nothing evaluated");
  res.best = *book.best_arch;
  res.best_perf = book.best;
  res.trace = std::move(book.trace);
  return res;
}

// Uniform distinct-canonical sampling with true evaluation.
inline SearchResult random_search_baseline(const SpaceSpec& sp, const Evaluator& eval,
                                           long budget, std::uint64_t seed,
                                           double stop_perf =
                                               std::numeric_limits<double>::infinity()) {
  if (budget < 1) throw Error("random_search_baseline: budget must be >= 1");
  detail_search::EvalBook book{&sp, &eval};
  Rng rng(derive_seed(seed, "rs"));
  long misses = 0;
  while (static_cast<long>(book.trace.rows.size()) < budget &&
         book.best < stop_perf) {
    ArchDag a = detail_search::sample_in(sp, eval, rng);
    const std::string key = canonical_key(a);
    if (book.seen(key)) {
      if (++misses > 50 * budget + 1000) break;  // space effectively exhausted
      continue;
    }
    book.evaluate(a, key, 1, std::numeric_limits<double>::quiet_NaN());
  }
  SearchResult res;
  if (!book.best_arch) throw SpaceError("random_search_baseline: nothing evaluated");
  res.best = *book.best_arch;
  res.best_perf = book.best;
  res.trace = std::move(book.trace);
  return res;
}

// Aging evolution on true evaluations. Previously evaluated children reuse
// the cached performance without consuming budget.
inline SearchResult regularized_evolution_baseline(
    const SpaceSpec& sp, const Evaluator& eval, long budget, int population,
    int tournament, std::uint64_t seed,
    double stop_perf = std::numeric_limits<double>::infinity()) {
  if (budget < population)
    throw Error("regularized_evolution_baseline: budget must cover the population");
  if (population < tournament || tournament < 1)
    throw Error("regularized_evolution_baseline: need population >= tournament >= 1");
  detail_search::EvalBook book{&sp, &eval};
  Rng rng(derive_seed(seed, "re"));
  std::unordered_map<std::string, double> cache;

  struct Member {
    ArchDag arch;
    double perf;
  };
  std::deque<Member> pop;

  long misses = 0;
  while (static_cast<int>(pop.size()) < population && book.best < stop_perf) {
    ArchDag a = detail_search::sample_in(sp, eval, rng);
    const std::string key = canonical_key(a);
    if (book.seen(key)) {
      if (++misses > 50 * budget + 1000)
        throw SpaceError("regularized_evolution_baseline: cannot seed the population");
      continue;
    }
    book.evaluate(a, key, 1, std::numeric_limits<double>::quiet_NaN());
    cache[key] = book.evaluated.back().perf;
    pop.push_back({std::move(a), book.evaluated.back().perf});
  }

  const long step_cap = 200 * budget + 1000;
  long steps = 0;
  int stage = 1;
  while (static_cast<long>(book.trace.rows.size()) < budget &&
         book.best < stop_perf && steps++ < step_cap && !pop.empty()) {
    std::vector<std::size_t> idx(pop.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    std::size_t parent = idx[0];
    for (int j = 1; j < tournament && j < static_cast<int>(idx.size()); ++j)
      if (pop[idx[j]].perf > pop[parent].perf) parent = idx[j];
    ArchDag child = detail_search::mutate_in(eval, pop[parent].arch, rng);
    const std::string key = canonical_key(child);
    double perf;
    if (auto it = cache.find(key); it != cache.end()) {
      perf = it->second;  // no new evaluation
    } else {
      ++stage;
      book.evaluate(child, key, stage, std::numeric_limits<double>::quiet_NaN());
      perf = book.evaluated.back().perf;
      cache[key] = perf;
    }
    pop.push_back({std::move(child), perf});
    pop.pop_front();
  }
  SearchResult res;
  if (!book.best_arch)
    throw SpaceError("regularized_evolution_baseline: nothing evaluated");
  res.best = *book.best_arch;
  res.best_perf = book.best;
  res.trace = std::move(book.trace);
  return res;
}

// --- sample-ratio sweep ----------------------------------------------------------

struct SweepRow {
  int r = 0;
  std::uint64_t seed = 0;
  long evals = -1;  // evaluations to reach the target; -1 = not reached
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs pbnas_run once per (r, seed) with n = r * k and reports evaluations to
// reach target_perf. Rows where the target was missed count as the eval cap.
inline std::vector<SweepRow> sweep_sample_ratio(
    const SpaceSpec& sp, const Evaluator& eval, const SearchConfig& base,
    const std::vector<int>& r_values, const std::vector<std::uint64_t>& seeds,
    double target_perf) {
  std::vector<SweepRow> rows;
  for (int r : r_values) {
    if (r < 1) throw Error("sweep_sample_ratio: r must be >= 1");
    for (std::uint64_t seed : seeds) {
      SearchConfig cfg = base;
      cfg.inner.n = r * cfg.inner.k;
      cfg.seed = seed;
      cfg.stop_perf = target_perf;
      const SearchResult res = pbnas_run(sp, eval, cfg);
      rows.push_back({r, seed, res.trace.evals_to_reach(target_perf)});
    }
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, long miss_value) {
  std::string out = "r,seed,evals\n";
  for (const auto& row : rows)
    out += std::to_string(row.r) + "," + std::to_string(row.seed) + "," +
           std::to_string(row.evals < 0 ? miss_value : row.evals) + "\n";
  // median summary per r
  std::vector<int> rs;
  for (const auto& row : rows)
    if (std::find(rs.begin(), rs.end(), row.r) == rs.end()) rs.push_back(row.r);
  for (int r : rs) {
    std::vector<double> vals;
    for (const auto& row : rows)
      if (row.r == r) vals.push_back(static_cast<double>(row.evals < 0 ? miss_value : row.evals));
    out += std::to_string(r) + ",median," + fmt_g17(median(vals)) + "\n";
  }
  return out;
}

}  // namespace gateslab
