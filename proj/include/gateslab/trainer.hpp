#pragma once

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gateslab/adam.hpp"
#include "gateslab/bench.hpp"
#include "gateslab/encoders.hpp"
#include "gateslab/objectives.hpp"
#include "gateslab/rng.hpp"

namespace gateslab {

// Batched predictor training: ADAM over per-batch losses, pair losses formed
// within each batch, test ranking correlation tracked per epoch, and the
// reported figure is the mean of the last five epochs' test taus.

struct TrainConfig {
  EncoderConfig enc;
  LossConfig loss;
  int epochs = 200;
  int batch = 512;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool eval_every_epoch = true;

  std::string canonical() const {
    std::ostringstream os;
    os << "enc=" << encoder_name(enc.kind) << ";layers=" << enc.layers
       << ";hidden=" << enc.hidden << ";emb=" << enc.emb_dim
       << ";self_loop=" << enc.self_loop << ";reinject=" << enc.reinject_input
       << ";mlp=";
    for (std::size_t i = 0; i < enc.mlp_widths.size(); ++i)
      os << (i ? "," : "") << enc.mlp_widths[i];
    os << ";head=";
    for (std::size_t i = 0; i < enc.head_widths.size(); ++i)
      os << (i ? "," : "") << enc.head_widths[i];
    os << ";loss=" << loss_name(loss.kind) << ";margin=" << loss.margin
       << ";list=" << loss.list_length << ";epochs=" << epochs << ";batch=" << batch
       << ";lr=" << fmt_g17(lr) << ";seed=" << seed;
    return os.str();
  }
};

struct TrainReport {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> test_tau;    // per epoch; NaN where not evaluated
  double reported_tau = 0.0;       // mean of last min(5, epochs) test taus
  double wall_seconds = 0.0;       // informational; not part of the canonical record
  std::uint64_t seed = 0;
  std::string config_digest;

  // Canonical line record (excludes wall time so reruns are byte-identical).
  std::string to_json() const {
    std::string out = "{\"seed\":" + std::to_string(seed) + ",\"config\":\"" +
                      config_digest + "\",\"epochs\":" +
                      std::to_string(train_loss.size()) + ",\"reported_tau\":";
    out += std::isnan(reported_tau) ? "null" : fmt_g17(reported_tau);
    out += ",\"train_loss\":[";
    for (std::size_t i = 0; i < train_loss.size(); ++i)
      out += (i ? "," : "") + fmt_g17(train_loss[i]);
    out += "],\"test_tau\":[";
    for (std::size_t i = 0; i < test_tau.size(); ++i)
      out += (i ? "," : "") + (std::isnan(test_tau[i]) ? "null" : fmt_g17(test_tau[i]));
    out += "]}";
    return out;
  }

  std::string curve_csv() const {
    std::string out = "epoch,train_loss,test_tau\n";
    for (std::size_t i = 0; i < train_loss.size(); ++i) {
      out += std::to_string(i + 1) + "," + fmt_g17(train_loss[i]) + ",";
      out += std::isnan(test_tau[i]) ? "nan" : fmt_g17(test_tau[i]);
      out += "\n";
    }
    return out;
  }
};

enum class FracMode { prefix, seeded_random };
enum class FracRounding { ceil, floor };

// First (or seeded-random) fraction of a dataset. Rounding is epsilon-guarded
// so 0.05 of 2000 is 100, not 101.
inline Dataset subset_fraction(const Dataset& ds, double p, FracMode mode,
                               FracRounding rounding = FracRounding::ceil,
                               std::uint64_t seed = 0) {
  if (!(p > 0.0 && p <= 1.0)) throw Error("subset_fraction: p must be in (0,1]");
  const double exact = p * static_cast<double>(ds.size());
  std::size_t k = rounding == FracRounding::ceil
                      ? static_cast<std::size_t>(std::ceil(exact - 1e-9))
                      : static_cast<std::size_t>(std::floor(exact + 1e-9));
  k = std::min(k, ds.size());
  if (k == 0) throw EmptyError("subset_fraction: empty subset");
  if (mode == FracMode::prefix) return Dataset(ds.begin(), ds.begin() + k);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "subset"));
  rng.shuffle(idx);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());  // keep dataset order among the chosen
  Dataset out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(ds[i]);
  return out;
}

namespace detail_train {

// For ListMLE: batch indices arranged list-major, each list sorted by true
// performance descending (stable w.r.t. the epoch shuffle).
inline std::vector<std::size_t> arrange_lists(const std::vector<std::size_t>& order,
                                              const Dataset& ds, int L) {
  std::vector<std::size_t> out;
  out.reserve(order.size());
  for (std::size_t at = 0; at < order.size(); at += L) {
    const std::size_t n = std::min<std::size_t>(L, order.size() - at);
    std::vector<std::size_t> list(order.begin() + at, order.begin() + at + n);
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return ds[a].perf > ds[b].perf;
    });
    out.insert(out.end(), list.begin(), list.end());
  }
  return out;
}

inline double mean_tail(const std::vector<double>& v, std::size_t k) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  k = std::min(k, v.size());
  double s = 0.0;
  for (std::size_t i = v.size() - k; i < v.size(); ++i) s += v[i];
  return s / static_cast<double>(k);
}

}  // namespace detail_train

// Test-set scores for ranking. Comparator predictors have no per-arch score;
// their ranking comes from the randomized-quicksort procedure, so the score
// of an arch is its (negated) mean sort position over the given seeds.
inline std::vector<double> ranking_scores(const Predictor& pred,
                                          const std::vector<ArchDag>& archs,
                                          const std::vector<std::uint64_t>& sort_seeds = {1}) {
  if (!pred.cfg.comparator) return predict_scores(pred, archs);
  const auto embs = embed_archs(pred, archs);
  std::vector<double> pos_sum(archs.size(), 0.0);
  for (std::uint64_t seed : sort_seeds) {
    const auto order = comparator_sort(
        static_cast<int>(archs.size()),
        [&](int a, int b) {
          return comparator_pair_scores(pred, embs, {{a, b}})[0];
        },
        seed);
    for (std::size_t r = 0; r < order.size(); ++r)
      pos_sum[order[r]] += static_cast<double>(r);
  }
  std::vector<double> scores(archs.size());
  for (std::size_t i = 0; i < archs.size(); ++i)
    scores[i] = -pos_sum[i] / static_cast<double>(sort_seeds.size());
  return scores;
}

inline std::pair<Predictor, TrainReport> train_predictor(const Dataset& train,
                                                         const Dataset& test,
                                                         const TrainConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  if (train.empty()) throw EmptyError("train_predictor: empty training set");
  if (cfg.epochs < 1) throw Error("train_predictor: epochs must be >= 1");
  const SpaceSpec& sp = *train[0].arch.space;
  for (const auto& r : train)
    if (r.arch.space != &sp) throw SpaceError("train_predictor: mixed spaces in train set");
  for (const auto& r : test)
    if (r.arch.space != &sp) throw SpaceError("train_predictor: mixed spaces in test set");
  const bool pair_loss = cfg.loss.kind == LossKind::hinge_pair ||
                         cfg.loss.kind == LossKind::bce_pair ||
                         cfg.loss.kind == LossKind::comparator;
  if (pair_loss && cfg.batch < 2)
    throw Error("train_predictor: pair losses need batch >= 2");

  EncoderConfig enc = cfg.enc;
  enc.comparator = cfg.loss.kind == LossKind::comparator;
  Predictor pred = make_predictor(sp, enc, cfg.seed);
  AdamState adam;
  adam.cfg.lr = cfg.lr;

  std::vector<ArchDag> test_archs;
  std::vector<double> test_y;
  for (const auto& r : test) {
    test_archs.push_back(r.arch);
    test_y.push_back(r.perf);
  }

  TrainReport rep;
  rep.seed = cfg.seed;
  rep.config_digest = fmt_hex(fnv1a64(cfg.canonical()));

  const int L = std::max(1, cfg.loss.list_length);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng erng(derive_seed(cfg.seed, "epoch", static_cast<std::uint64_t>(epoch)));
    erng.shuffle(order);
    if (cfg.loss.kind == LossKind::listmle)
      order = detail_train::arrange_lists(order, train, L);

    std::size_t batch_step = static_cast<std::size_t>(cfg.batch);
    if (cfg.loss.kind == LossKind::listmle)
      batch_step = std::max<std::size_t>(L, batch_step / L * L);

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < order.size(); at += batch_step) {
      const std::size_t n = std::min(batch_step, order.size() - at);
      std::vector<ArchDag> archs;
      std::vector<double> y;
      archs.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        archs.push_back(train[order[at + i]].arch);
        y.push_back(train[order[at + i]].perf);
      }
      try {
        Tape t;
        BoundParams bp(t, pred.params);
        BuiltLoss bl;
        if (cfg.loss.kind == LossKind::comparator) {
          const int emb = build_embeddings(t, bp, archs, pred.cfg);
          std::vector<std::pair<int, int>> pairs;
          for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = 0; q < n; ++q)
              if (y[p] > y[q]) pairs.emplace_back(static_cast<int>(p), static_cast<int>(q));
          bl = comparator_loss_node(t, bp, emb, pairs, pred.cfg, cfg.loss.margin);
        } else {
          const int scores = build_scores(t, bp, archs, pred.cfg);
          switch (cfg.loss.kind) {
            case LossKind::mse: bl = mse_loss_node(t, scores, y); break;
            case LossKind::hinge_pair:
              bl = hinge_pair_loss_node(t, scores, y, cfg.loss.margin);
              break;
            case LossKind::bce_pair: bl = bce_pair_loss_node(t, scores, y); break;
            case LossKind::listmle: {
              // lists shorter than L at the tail are folded in as one list
              const std::size_t full = n / L * L;
              if (full == n || full == 0) {
                bl = listmle_loss_node(t, scores, full == n ? L : static_cast<int>(n));
              } else {
                // weighted recombination of full lists and the remainder list
                Tensor sel_full(Shape{full, n}, 0.0), sel_rem(Shape{n - full, n}, 0.0);
                for (std::size_t i = 0; i < full; ++i) sel_full.data[i * n + i] = 1.0;
                for (std::size_t i = full; i < n; ++i)
                  sel_rem.data[(i - full) * n + i] = 1.0;
                const int s2 = t.reshape(scores, Shape{n, 1});
                const int sf = t.reshape(t.matmul(t.constant(sel_full), s2), Shape{full});
                const int sr = t.reshape(t.matmul(t.constant(sel_rem), s2), Shape{n - full});
                const auto lf = listmle_loss_node(t, sf, L);
                const auto lr = listmle_loss_node(t, sr, static_cast<int>(n - full));
                const double gf = static_cast<double>(full / L);
                const int sum = t.add(t.mul(lf.node, t.constant(gf)), lr.node);
                bl = {t.mul(sum, t.constant(1.0 / (gf + 1.0))), false};
              }
              break;
            }
            default: throw Error("unreachable");
          }
        }
        const double lv = t.val(bl.node).data[0];
        if (!std::isfinite(lv))
          throw NumericsError("non-finite loss");
        loss_sum += lv;
        ++batches;
        if (!bl.no_valid_pairs) {
          const auto grads = bp.named_grads(t.backward(bl.node));
          adam_step(pred.params, grads, adam);
        }
      } catch (const NumericsError& e) {
        throw NumericsError("train_predictor: " + std::string(e.what()) + " at epoch " +
                            std::to_string(epoch) + " batch " +
                            std::to_string(batches + 1));
      }
    }
    rep.train_loss.push_back(batches > 0 ? loss_sum / batches : 0.0);

    const bool eval_now =
        !test.empty() && (cfg.eval_every_epoch || epoch > cfg.epochs - 5);
    if (eval_now) {
      const auto scores = ranking_scores(
          pred, test_archs, {derive_seed(cfg.seed, "sorteval", static_cast<std::uint64_t>(epoch))});
      rep.test_tau.push_back(kendall_tau(scores, test_y).tau);
    } else {
      rep.test_tau.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }

  // mean of last min(5, epochs) evaluated taus
  std::vector<double> tail;
  for (std::size_t i = rep.test_tau.size() >= 5 ? rep.test_tau.size() - 5 : 0;
       i < rep.test_tau.size(); ++i)
    if (!std::isnan(rep.test_tau[i]) || test.empty()) tail.push_back(rep.test_tau[i]);
  rep.reported_tau = detail_train::mean_tail(tail, 5);
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(pred), std::move(rep)};
}

// Full metrics on a test set; parameters are read-only.
inline MetricsRecord evaluate_predictor(const Predictor& pred, const Dataset& test) {
  if (test.empty()) throw EmptyError("evaluate_predictor: empty test set");
  for (const auto& r : test)
    if (r.arch.space != pred.space)
      throw SpaceError("evaluate_predictor: dataset space " + r.arch.space->id +
                       " does not match predictor space " + pred.space->id);
  std::vector<ArchDag> archs;
  std::vector<double> y;
  for (const auto& r : test) {
    archs.push_back(r.arch);
    y.push_back(r.perf);
  }
  const auto scores = pred.cfg.comparator
                          ? ranking_scores(pred, archs, {1, 12, 123})
                          : predict_scores(pred, archs);
  return compute_metrics(scores, y);
}

}  // namespace gateslab
