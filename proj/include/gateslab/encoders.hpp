#pragma once

#include <string>
#include <vector>

#include "gateslab/errors.hpp"
#include "gateslab/params.hpp"
#include "gateslab/rng.hpp"
#include "gateslab/space.hpp"
#include "gateslab/tape.hpp"

namespace gateslab {

// Architecture encoders. GATES models each operation as a soft gate
// sigmoid(EMB(o) * Wo) that multiplies the information propagating along the
// DAG; the output node's information is the architecture embedding. GCN and
// MLP are the comparison baselines; all are followed by the same MLP head.

enum class EncoderKind { gates, gcn, gcn_global, mlp };

inline const char* encoder_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::gates: return "gates";
    case EncoderKind::gcn: return "gcn";
    case EncoderKind::gcn_global: return "gcn-global";
    case EncoderKind::mlp: return "mlp";
  }
  return "?";
}

inline EncoderKind encoder_from_name(const std::string& s) {
  if (s == "gates") return EncoderKind::gates;
  if (s == "gcn") return EncoderKind::gcn;
  if (s == "gcn-global" || s == "gcn_global") return EncoderKind::gcn_global;
  if (s == "mlp") return EncoderKind::mlp;
  throw Error("unknown encoder '" + s + "'");
}

struct EncoderConfig {
  EncoderKind kind = EncoderKind::gates;
  int layers = 5;     // N, number of propagation steps
  int hidden = 128;   // information size h_i^(k) for k >= 1
  int emb_dim = 48;   // operation/input embedding size (h_o and h_i^(0))
  bool self_loop = true;         // OON: propagate with A + I
  bool reinject_input = false;   // OOE: reset input rows to X^(0) after each layer
  std::vector<int> mlp_widths = {512, 2048, 2048, 512};
  std::vector<int> head_widths = {64, 32};
  bool comparator = false;  // head takes a concatenated pair of embeddings

  int out_dim(const SpaceSpec& sp) const {
    if (kind == EncoderKind::mlp) return mlp_widths.back();
    (void)sp;
    return layers >= 1 ? hidden : emb_dim;
  }
};

// --- parameter construction --------------------------------------------------

inline ParamStore init_params(const SpaceSpec& sp, const EncoderConfig& cfg,
                              std::uint64_t seed) {
  if (cfg.layers < 1) throw Error("encoder: layers must be >= 1");
  if ((cfg.kind == EncoderKind::gcn || cfg.kind == EncoderKind::gcn_global) &&
      sp.kind == SpaceKind::ooe)
    throw UnsupportedError("GCN cannot be applied directly to an OOE space");
  if (cfg.kind == EncoderKind::gates && sp.kind == SpaceKind::ooe &&
      cfg.reinject_input && cfg.emb_dim != cfg.hidden)
    throw ShapeError("reinject_input requires emb_dim == hidden (X^(0) rows are reused)");

  Rng rng(derive_seed(seed, "init"));
  ParamStore ps;
  const std::size_t no = static_cast<std::size_t>(sp.num_ops());
  const std::size_t he = static_cast<std::size_t>(cfg.emb_dim);
  const std::size_t hh = static_cast<std::size_t>(cfg.hidden);

  switch (cfg.kind) {
    case EncoderKind::gates: {
      ps.add("enc.E", init_embedding(static_cast<std::size_t>(sp.num_inputs), he, rng));
      ps.add("enc.EMB", init_embedding(no, he, rng));
      for (int k = 1; k <= cfg.layers; ++k) {
        const std::size_t hin = k == 1 ? he : hh;
        ps.add("enc.Wo." + std::to_string(k), init_weight(he, hh, rng));
        ps.add("enc.Wx." + std::to_string(k), init_weight(hin, hh, rng));
      }
      break;
    }
    case EncoderKind::gcn:
    case EncoderKind::gcn_global: {
      ps.add("enc.EMB", init_embedding(no, he, rng));
      if (cfg.kind == EncoderKind::gcn_global)
        ps.add("enc.global", init_embedding(1, he, rng));
      for (int k = 1; k <= cfg.layers; ++k) {
        const std::size_t hin = k == 1 ? he : hh;
        ps.add("enc.W." + std::to_string(k), init_weight(hin, hh, rng));
      }
      break;
    }
    case EncoderKind::mlp: {
      std::size_t prev = flatten_length(sp);
      for (std::size_t k = 0; k < cfg.mlp_widths.size(); ++k) {
        const std::size_t w = static_cast<std::size_t>(cfg.mlp_widths[k]);
        ps.add("enc.W." + std::to_string(k + 1), init_weight(prev, w, rng));
        ps.add("enc.b." + std::to_string(k + 1), Tensor(Shape{1, w}, 0.0));
        prev = w;
      }
      break;
    }
  }

  std::size_t prev = static_cast<std::size_t>(cfg.out_dim(sp)) * (cfg.comparator ? 2 : 1);
  for (std::size_t k = 0; k <= cfg.head_widths.size(); ++k) {
    const std::size_t w = k < cfg.head_widths.size()
                              ? static_cast<std::size_t>(cfg.head_widths[k])
                              : 1;
    ps.add("head.W." + std::to_string(k + 1), init_weight(prev, w, rng));
    ps.add("head.b." + std::to_string(k + 1), Tensor(Shape{1, w}, 0.0));
    prev = w;
  }
  return ps;
}

// --- batch constants ---------------------------------------------------------

namespace detail_enc {

inline Tensor onehot_oon_ops(const PaddedBatch& pb) {
  const SpaceSpec& sp = *pb.space;
  const std::size_t b = pb.b, V = pb.V, no = sp.num_ops();
  Tensor t(Shape{b, V, no}, 0.0);
  for (std::size_t i = 0; i < b * V; ++i) t.data[i * no + pb.oon_ops[i]] = 1.0;
  return t;
}

inline Tensor onehot_ooe_ops(const PaddedBatch& pb, int slot) {
  const SpaceSpec& sp = *pb.space;
  const std::size_t b = pb.b, V = pb.V, no = sp.num_ops();
  Tensor t(Shape{b, V, V, no}, 0.0);
  for (std::size_t g = 0; g < b; ++g)
    for (std::size_t dst = 0; dst < V; ++dst)
      for (std::size_t src = 0; src < V; ++src) {
        const int op = pb.ooe_ops[((g * sp.max_in_degree + slot) * V + dst) * V + src];
        t.data[((g * V + dst) * V + src) * no + op] = 1.0;
      }
  return t;
}

// (b, 1, V) selector that extracts the output row; for fixed-degree OOE it
// sums the loose-end rows instead (addition aggregates the output).
inline Tensor out_selector(const PaddedBatch& pb) {
  const std::size_t b = pb.b, V = pb.V;
  Tensor t(Shape{b, 1, V}, 0.0);
  for (std::size_t g = 0; g < b; ++g)
    for (int i : pb.loose_ends[g]) t.data[g * V + i] = 1.0;
  return t;
}

inline Tensor mean_pool_selector(const PaddedBatch& pb) {
  const std::size_t b = pb.b, V = pb.V;
  Tensor t(Shape{b, 1, V}, 0.0);
  for (std::size_t g = 0; g < b; ++g)
    for (int i = 0; i < pb.real_v[g]; ++i)
      t.data[g * V + i] = 1.0 / static_cast<double>(pb.real_v[g]);
  return t;
}

inline Tensor real_mask(const PaddedBatch& pb) {
  const std::size_t b = pb.b, V = pb.V;
  Tensor t(Shape{b, V, 1}, 0.0);
  for (std::size_t g = 0; g < b; ++g)
    for (int i = 0; i < pb.real_v[g]; ++i) t.data[g * V + i] = 1.0;
  return t;
}

inline Tensor input_row_mask(const PaddedBatch& pb) {
  Tensor t(Shape{1, static_cast<std::size_t>(pb.V), 1}, 0.0);
  for (int i = 0; i < pb.space->num_inputs; ++i) t.data[i] = 1.0;
  return t;
}

// Row-normalized (A + A^T + I) for GCN; optionally with a global node
// appended that connects to every real node.
inline Tensor gcn_norm_adj(const PaddedBatch& pb, bool global_node) {
  const std::size_t b = pb.b, V = pb.V;
  const std::size_t W = V + (global_node ? 1 : 0);
  Tensor t(Shape{b, W, W}, 0.0);
  for (std::size_t g = 0; g < b; ++g) {
    double* m = t.data.data() + g * W * W;
    const double* adj = pb.adj.data.data() + g * V * V;
    for (std::size_t i = 0; i < V; ++i)
      for (std::size_t j = 0; j < V; ++j)
        if (adj[i * V + j] != 0.0) {
          m[i * W + j] = 1.0;
          m[j * W + i] = 1.0;
        }
    if (global_node)
      for (int i = 0; i < pb.real_v[g]; ++i) {
        m[V * W + i] = 1.0;
        m[i * W + V] = 1.0;
      }
    for (std::size_t i = 0; i < W; ++i) m[i * W + i] = 1.0;
    for (std::size_t i = 0; i < W; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < W; ++j) s += m[i * W + j];
      for (std::size_t j = 0; j < W; ++j) m[i * W + j] /= s;
    }
  }
  return t;
}

inline Tensor flatten_batch(const std::vector<ArchDag>& archs) {
  if (archs.empty()) throw EmptyError("flatten_batch: empty batch");
  const std::size_t len = flatten_length(*archs[0].space);
  Tensor t(Shape{archs.size(), len}, 0.0);
  for (std::size_t g = 0; g < archs.size(); ++g) {
    if (archs[g].space != archs[0].space)
      throw SpaceError("flatten_batch: mixed spaces");
    const auto flat = flatten_for_mlp(archs[g]);
    std::copy(flat.begin(), flat.end(), t.data.begin() + g * len);
  }
  return t;
}

// Broadcasts a (r, c) parameter to (b, r, c) by adding a zero constant.
inline int broadcast_rows(Tape& t, int param, std::size_t b, std::size_t r,
                          std::size_t c) {
  const int zeros = t.constant(Tensor(Shape{b, r, c}, 0.0));
  return t.add(t.expand_axis(param, 0), zeros);
}

}  // namespace detail_enc

// --- layer builders ----------------------------------------------------------

// X^(0) = CONCAT(E broadcast over the batch, zeros) -- (b, V, emb_dim)
inline int gates_input_info(Tape& t, const BoundParams& p, const PaddedBatch& pb,
                            const EncoderConfig& cfg) {
  const SpaceSpec& sp = *pb.space;
  const std::size_t b = pb.b, V = pb.V, he = cfg.emb_dim;
  const std::size_t ni = sp.num_inputs;
  const int e = detail_enc::broadcast_rows(t, p("enc.E"), b, ni, he);
  if (V == ni) return e;
  const int zeros = t.constant(Tensor(Shape{b, V - ni, he}, 0.0));
  return t.concat_axis({e, zeros}, 1);
}

// One OON GATES layer: X^(k) = sigmoid(EMB(o) Wo) .* (A~ X^(k-1) Wx).
inline int gates_layer_oon(Tape& t, const BoundParams& p, int x_prev,
                           const PaddedBatch& pb, const EncoderConfig& cfg, int k) {
  const std::size_t V = pb.V;
  Tensor a = pb.adj;
  if (cfg.self_loop)
    for (std::size_t g = 0; g < static_cast<std::size_t>(pb.b); ++g)
      for (std::size_t i = 0; i < V; ++i) a.data[(g * V + i) * V + i] += 1.0;
  const int adj = t.constant(a);
  const int ops = t.constant(detail_enc::onehot_oon_ops(pb));
  const int mask =
      t.sigmoid(t.matmul(t.matmul(ops, p("enc.EMB")), p("enc.Wo." + std::to_string(k))));
  const int agg = t.matmul(t.matmul(adj, x_prev), p("enc.Wx." + std::to_string(k)));
  return t.mul(mask, agg);
}

// One OOE GATES layer: per slot d,
//   X^(k) = SUM_src A .* sigmoid(EMB(o_d) Wo) .* EXPAND(X^(k-1) Wx, 1)
inline int gates_layer_ooe(Tape& t, const BoundParams& p, int x_prev, int x0,
                           const PaddedBatch& pb, const EncoderConfig& cfg, int k) {
  const SpaceSpec& sp = *pb.space;
  const int adj4 = t.expand_axis(t.constant(pb.adj), 3);        // (b,V,V,1)
  const int s = t.expand_axis(
      t.matmul(x_prev, p("enc.Wx." + std::to_string(k))), 1);   // (b,1,V,h)
  int acc = -1;
  for (int d = 0; d < sp.max_in_degree; ++d) {
    const int ops = t.constant(detail_enc::onehot_ooe_ops(pb, d));
    const int mask = t.sigmoid(
        t.matmul(t.matmul(ops, p("enc.EMB")), p("enc.Wo." + std::to_string(k))));
    const int term = t.mul(t.mul(adj4, mask), s);
    acc = acc < 0 ? term : t.add(acc, term);
  }
  int xk = t.sum_axis(acc, 2);  // sum over sources -> (b,V,h)
  if (cfg.reinject_input) {
    const int m = t.constant(detail_enc::input_row_mask(pb));
    const int keep = t.constant(Tensor::scalar(1.0));
    const int inv = t.add(keep, t.mul(m, t.constant(Tensor::scalar(-1.0))));
    xk = t.add(t.mul(xk, inv), t.mul(x0, m));
  }
  return xk;
}

// One GCN layer: X^(k) = relu(A^ X^(k-1) W).
inline int gcn_layer(Tape& t, const BoundParams& p, int x_prev, int norm_adj, int k) {
  return t.relu(t.matmul(t.matmul(norm_adj, x_prev), p("enc.W." + std::to_string(k))));
}

inline int affine(Tape& t, const BoundParams& p, int x, const std::string& w,
                  const std::string& b) {
  return t.add(t.matmul(x, p(w)), p(b));
}

// --- whole-encoder builders ---------------------------------------------------

// Returns the (b, out_dim) embedding node for a batch.
inline int build_embeddings(Tape& t, const BoundParams& p,
                            const std::vector<ArchDag>& archs,
                            const EncoderConfig& cfg) {
  if (archs.empty()) throw EmptyError("encode: empty batch");
  const SpaceSpec& sp = *archs[0].space;

  if (cfg.kind == EncoderKind::mlp) {
    int x = t.constant(detail_enc::flatten_batch(archs));
    for (std::size_t k = 1; k <= cfg.mlp_widths.size(); ++k) {
      x = affine(t, p, x, "enc.W." + std::to_string(k), "enc.b." + std::to_string(k));
      if (k < cfg.mlp_widths.size()) x = t.relu(x);
    }
    return x;
  }

  const PaddedBatch pb = pad_batch(archs);
  const std::size_t b = pb.b;

  if (cfg.kind == EncoderKind::gates) {
    const int x0 = gates_input_info(t, p, pb, cfg);
    int x = x0;
    for (int k = 1; k <= cfg.layers; ++k)
      x = sp.kind == SpaceKind::oon ? gates_layer_oon(t, p, x, pb, cfg, k)
                                    : gates_layer_ooe(t, p, x, x0, pb, cfg, k);
    const int sel = t.constant(detail_enc::out_selector(pb));
    return t.reshape(t.matmul(sel, x),
                     Shape{b, static_cast<std::size_t>(cfg.hidden)});
  }

  if (sp.kind == SpaceKind::ooe)
    throw UnsupportedError("GCN cannot be applied directly to an OOE space");
  const bool global = cfg.kind == EncoderKind::gcn_global;
  const int norm_adj = t.constant(detail_enc::gcn_norm_adj(pb, global));
  const int ops = t.constant(detail_enc::onehot_oon_ops(pb));
  int x = t.mul(t.matmul(ops, p("enc.EMB")), t.constant(detail_enc::real_mask(pb)));
  if (global) {
    const int grow = detail_enc::broadcast_rows(t, p("enc.global"), b, 1, cfg.emb_dim);
    x = t.concat_axis({x, grow}, 1);
  }
  for (int k = 1; k <= cfg.layers; ++k) x = gcn_layer(t, p, x, norm_adj, k);
  Tensor sel(Shape{b, 1, static_cast<std::size_t>(pb.V) + (global ? 1 : 0)}, 0.0);
  if (global) {
    for (std::size_t g = 0; g < b; ++g) sel.data[g * (pb.V + 1) + pb.V] = 1.0;
  } else {
    sel = detail_enc::mean_pool_selector(pb);
  }
  return t.reshape(t.matmul(t.constant(sel), x),
                   Shape{b, static_cast<std::size_t>(cfg.hidden)});
}

// MLP head on top of embeddings: (b, d) -> (b,) scores.
inline int build_head(Tape& t, const BoundParams& p, int emb,
                      const EncoderConfig& cfg) {
  int x = emb;
  for (std::size_t k = 1; k <= cfg.head_widths.size() + 1; ++k) {
    x = affine(t, p, x, "head.W." + std::to_string(k), "head.b." + std::to_string(k));
    if (k <= cfg.head_widths.size()) x = t.relu(x);
  }
  const std::size_t b = t.val(x).shape[0];
  return t.reshape(x, Shape{b});
}

inline int build_scores(Tape& t, const BoundParams& p,
                        const std::vector<ArchDag>& archs, const EncoderConfig& cfg) {
  if (cfg.comparator)
    throw Error("build_scores: comparator predictors score pairs, not single archs");
  return build_head(t, p, build_embeddings(t, p, archs, cfg), cfg);
}

// --- inference helpers ---------------------------------------------------------

struct Predictor {
  const SpaceSpec* space = nullptr;
  EncoderConfig cfg;
  ParamStore params;
};

inline Predictor make_predictor(const SpaceSpec& sp, const EncoderConfig& cfg,
                                std::uint64_t seed) {
  return Predictor{&sp, cfg, init_params(sp, cfg, seed)};
}

inline std::vector<std::vector<double>> embed_archs(const Predictor& pred,
                                                    const std::vector<ArchDag>& archs,
                                                    int batch_size = 256) {
  std::vector<std::vector<double>> out;
  out.reserve(archs.size());
  for (std::size_t at = 0; at < archs.size(); at += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, archs.size() - at);
    std::vector<ArchDag> chunk(archs.begin() + at, archs.begin() + at + n);
    Tape t;
    BoundParams bp(t, pred.params);
    const Tensor& emb = t.val(build_embeddings(t, bp, chunk, pred.cfg));
    const std::size_t d = emb.shape[1];
    for (std::size_t g = 0; g < n; ++g)
      out.emplace_back(emb.data.begin() + g * d, emb.data.begin() + (g + 1) * d);
  }
  return out;
}

inline std::vector<double> predict_scores(const Predictor& pred,
                                          const std::vector<ArchDag>& archs,
                                          int batch_size = 256) {
  std::vector<double> out;
  out.reserve(archs.size());
  for (std::size_t at = 0; at < archs.size(); at += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, archs.size() - at);
    std::vector<ArchDag> chunk(archs.begin() + at, archs.begin() + at + n);
    Tape t;
    BoundParams bp(t, pred.params);
    const Tensor& s = t.val(build_scores(t, bp, chunk, pred.cfg));
    out.insert(out.end(), s.data.begin(), s.data.end());
  }
  return out;
}

// Comparator head over a precomputed embedding matrix: score of (better?, worse?)
// pairs; positive means the first argument is predicted better.
inline std::vector<double> comparator_pair_scores(
    const Predictor& pred, const std::vector<std::vector<double>>& embs,
    const std::vector<std::pair<int, int>>& pairs) {
  if (pairs.empty()) return {};
  const std::size_t d = embs.at(0).size();
  Tensor in(Shape{pairs.size(), 2 * d}, 0.0);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    std::copy(embs[pairs[i].first].begin(), embs[pairs[i].first].end(),
              in.data.begin() + i * 2 * d);
    std::copy(embs[pairs[i].second].begin(), embs[pairs[i].second].end(),
              in.data.begin() + i * 2 * d + d);
  }
  Tape t;
  BoundParams bp(t, pred.params);
  const Tensor& s = t.val(build_head(t, bp, t.constant(in), pred.cfg));
  return s.data;
}

}  // namespace gateslab
