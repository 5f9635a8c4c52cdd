#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gateslab/errors.hpp"
#include "gateslab/rng.hpp"
#include "gateslab/tensor.hpp"

namespace gateslab {

// Cell search spaces. Two families:
//   OON - operations label nodes (NAS-Bench-101 style),
//   OOE - operations label edges (NAS-Bench-201 / ENAS style).
// Nodes are topologically ordered; every edge goes from a lower to a higher
// index. Node 0..n_i-1 are inputs; for OON and complete-pair OOE the last
// real node is the output.

enum class SpaceKind { oon, ooe };

// complete_pairs: exactly one edge per (src < dst) pair (NAS-Bench-201).
// fixed_in_degree: every non-input node has exactly n_d slotted in-edges (ENAS).
enum class OoeTopology { complete_pairs, fixed_in_degree };

struct SpaceSpec {
  std::string id;
  SpaceKind kind = SpaceKind::oon;
  int max_nodes = 7;   // V
  int num_inputs = 1;  // n_i
  // Must contain the reserved tokens "input", "output", "none" exactly once.
  std::vector<std::string> op_vocab;
  int max_in_degree = 1;  // n_d, OOE only
  OoeTopology topology = OoeTopology::complete_pairs;
  bool none_op_sampleable = true;  // OOE: whether "none" is a drawable edge op
  int max_edges = -1;              // OON edge cap, -1 = unbounded
  int min_sample_nodes = 3;        // node-count range for random OON sampling
  int max_sample_nodes = 7;

  int num_ops() const { return static_cast<int>(op_vocab.size()); }

  int op_index(const std::string& name) const {
    for (int i = 0; i < num_ops(); ++i)
      if (op_vocab[i] == name) return i;
    throw SpaceError("space " + id + ": unknown op '" + name + "'");
  }

  bool is_reserved(int op) const {
    const std::string& n = op_vocab[op];
    return n == "input" || n == "output" || n == "none";
  }

  // Ops a random draw may assign. OON: node ops exclude all reserved tokens.
  // OOE: edge ops exclude input/output; "none" is included only where it is a
  // real choice (NAS-Bench-201).
  std::vector<int> sampleable_ops() const {
    std::vector<int> out;
    for (int i = 0; i < num_ops(); ++i) {
      const std::string& n = op_vocab[i];
      if (n == "input" || n == "output") continue;
      if (n == "none" && (kind == SpaceKind::oon || !none_op_sampleable)) continue;
      out.push_back(i);
    }
    return out;
  }

  void validate() const {
    if (max_nodes < num_inputs + 1)
      throw SpaceError("space " + id + ": V must be >= n_i + 1");
    for (const char* tok : {"input", "output", "none"}) {
      int c = 0;
      for (const auto& n : op_vocab)
        if (n == tok) ++c;
      if (c != 1)
        throw SpaceError("space " + id + ": op_vocab must contain '" +
                         std::string(tok) + "' exactly once");
    }
    if (kind == SpaceKind::ooe && max_in_degree < 1)
      throw SpaceError("space " + id + ": n_d must be >= 1");
  }
};

// Built-in spaces. References stay valid for the program lifetime.
inline const SpaceSpec& space_oon_nb101() {
  static const SpaceSpec s = [] {
    SpaceSpec sp;
    sp.id = "oon/nb101";
    sp.kind = SpaceKind::oon;
    sp.max_nodes = 7;
    sp.num_inputs = 1;
    sp.op_vocab = {"input", "output", "none", "conv3x3", "conv1x1", "maxpool3x3"};
    sp.max_edges = 9;
    sp.min_sample_nodes = 3;
    sp.max_sample_nodes = 7;
    sp.validate();
    return sp;
  }();
  return s;
}

// Small OON space (at most 5 nodes); its ~6.6k architectures can be
// enumerated exhaustively, which the search experiments rely on.
inline const SpaceSpec& space_oon_small5() {
  static const SpaceSpec s = [] {
    SpaceSpec sp;
    sp.id = "oon/small5";
    sp.kind = SpaceKind::oon;
    sp.max_nodes = 5;
    sp.num_inputs = 1;
    sp.op_vocab = {"input", "output", "none", "conv3x3", "conv1x1", "maxpool3x3"};
    sp.max_edges = 9;
    sp.min_sample_nodes = 3;
    sp.max_sample_nodes = 5;
    sp.validate();
    return sp;
  }();
  return s;
}

inline const SpaceSpec& space_ooe_nb201() {
  static const SpaceSpec s = [] {
    SpaceSpec sp;
    sp.id = "ooe/nb201";
    sp.kind = SpaceKind::ooe;
    sp.max_nodes = 4;
    sp.num_inputs = 1;
    sp.op_vocab = {"input",   "output",  "none",
                   "skip_connect", "conv1x1", "conv3x3", "avgpool3x3"};
    sp.max_in_degree = 1;
    sp.topology = OoeTopology::complete_pairs;
    sp.none_op_sampleable = true;  // 5 drawable edge ops -> 5^6 = 15625 archs
    sp.min_sample_nodes = 4;
    sp.max_sample_nodes = 4;
    sp.validate();
    return sp;
  }();
  return s;
}

inline const SpaceSpec& space_ooe_enas() {
  static const SpaceSpec s = [] {
    SpaceSpec sp;
    sp.id = "ooe/enas";
    sp.kind = SpaceKind::ooe;
    sp.max_nodes = 6;
    sp.num_inputs = 2;
    sp.op_vocab = {"input",      "output",     "none",       "identity",
                   "sep_conv3x3", "sep_conv5x5", "avgpool3x3", "maxpool3x3"};
    sp.max_in_degree = 2;
    sp.topology = OoeTopology::fixed_in_degree;
    sp.none_op_sampleable = false;
    sp.min_sample_nodes = 6;
    sp.max_sample_nodes = 6;
    sp.validate();
    return sp;
  }();
  return s;
}

inline const SpaceSpec& space_by_id(const std::string& id) {
  if (id == "oon/nb101") return space_oon_nb101();
  if (id == "oon/small5") return space_oon_small5();
  if (id == "ooe/nb201") return space_ooe_nb201();
  if (id == "ooe/enas") return space_ooe_enas();
  throw SpaceError("unknown space '" + id + "'");
}

struct OoeEdge {
  int src = 0, dst = 0, slot = 0, op = 0;
  friend bool operator==(const OoeEdge&, const OoeEdge&) = default;
};

struct ArchDag {
  const SpaceSpec* space = nullptr;
  int v = 0;                              // actual node count (<= V)
  std::vector<int> node_ops;              // OON: op index per node
  std::vector<std::vector<int>> preds;    // OON: sorted predecessor lists
  std::vector<OoeEdge> edges;             // OOE: sorted by (dst, slot)

  friend bool operator==(const ArchDag& a, const ArchDag& b) {
    return a.space == b.space && a.v == b.v && a.node_ops == b.node_ops &&
           a.preds == b.preds && a.edges == b.edges;
  }
};

inline int oon_edge_count(const ArchDag& a) {
  int n = 0;
  for (const auto& p : a.preds) n += static_cast<int>(p.size());
  return n;
}

// Internal nodes are the ones isomorphism may permute: OON keeps inputs and
// the output fixed; OOE fixes only the inputs (NB-201's output node is pinned
// by the complete topology anyway).
inline std::pair<int, int> internal_node_range(const ArchDag& a) {
  const SpaceSpec& sp = *a.space;
  if (sp.kind == SpaceKind::oon) return {sp.num_inputs, a.v - 1};
  if (sp.topology == OoeTopology::complete_pairs) return {sp.num_inputs, a.v - 1};
  return {sp.num_inputs, a.v};
}

// Normalizes OOE slot labels: per destination, edges sorted by (src, op) get
// slots 0..d-1. Slots are interchangeable, so this is the stored form.
inline void normalize_slots(ArchDag& a) {
  if (a.space->kind != SpaceKind::ooe) return;
  std::sort(a.edges.begin(), a.edges.end(), [](const OoeEdge& x, const OoeEdge& y) {
    if (x.dst != y.dst) return x.dst < y.dst;
    if (x.src != y.src) return x.src < y.src;
    return x.op < y.op;
  });
  int cur_dst = -1, slot = 0;
  for (auto& e : a.edges) {
    if (e.dst != cur_dst) {
      cur_dst = e.dst;
      slot = 0;
    }
    e.slot = slot++;
  }
}

// Exact serialization of an arch (slot-normalized form). Used as identity for
// dedup and as the string canonicalize() minimizes over.
inline std::string serialize_key(const ArchDag& a) {
  std::ostringstream os;
  os << a.space->id << ";v=" << a.v;
  if (a.space->kind == SpaceKind::oon) {
    os << ";o=";
    for (int i = 0; i < a.v; ++i) {
      if (i) os << ',';
      os << a.node_ops[i];
    }
    os << ";a=";
    bool first = true;
    for (int dst = 0; dst < a.v; ++dst)
      for (int src : a.preds[dst]) {
        if (!first) os << ',';
        first = false;
        os << dst << '>' << src;
      }
  } else {
    os << ";e=";
    for (std::size_t i = 0; i < a.edges.size(); ++i) {
      if (i) os << ',';
      const auto& e = a.edges[i];
      os << e.dst << '.' << e.slot << '<' << e.src << ':' << e.op;
    }
  }
  return os.str();
}

inline std::optional<std::string> validate_error(const ArchDag& a) {
  const SpaceSpec& sp = *a.space;
  if (a.v < sp.num_inputs + 1 || a.v > sp.max_nodes)
    return "node count " + std::to_string(a.v) + " outside [n_i+1, V]";
  if (sp.kind == SpaceKind::oon) {
    if (static_cast<int>(a.node_ops.size()) != a.v) return "node_ops size != v";
    if (static_cast<int>(a.preds.size()) != a.v) return "preds size != v";
    const int in_tok = sp.op_index("input"), out_tok = sp.op_index("output");
    for (int i = 0; i < sp.num_inputs; ++i)
      if (a.node_ops[i] != in_tok) return "node " + std::to_string(i) + " must be input";
    if (a.node_ops[a.v - 1] != out_tok) return "last node must be output";
    for (int i = sp.num_inputs; i < a.v - 1; ++i) {
      const int op = a.node_ops[i];
      if (op < 0 || op >= sp.num_ops()) return "op index out of range";
      if (sp.is_reserved(op)) return "internal node " + std::to_string(i) + " has reserved op";
    }
    int edge_count = 0;
    for (int dst = 0; dst < a.v; ++dst) {
      int prev = -1;
      for (int src : a.preds[dst]) {
        if (src < 0 || src >= dst) return "edge not forward: " + std::to_string(src) +
                                          "->" + std::to_string(dst);
        if (src <= prev) return "preds not sorted/unique at node " + std::to_string(dst);
        prev = src;
        ++edge_count;
      }
      if (dst < sp.num_inputs && !a.preds[dst].empty()) return "input node has predecessors";
      if (dst >= sp.num_inputs && a.preds[dst].empty())
        return "node " + std::to_string(dst) + " has no predecessor";
    }
    if (sp.max_edges >= 0 && edge_count > sp.max_edges)
      return "edge count " + std::to_string(edge_count) + " exceeds cap";
  } else {
    std::vector<std::vector<int>> slots_used(a.v);
    std::vector<int> indeg(a.v, 0);
    for (const auto& e : a.edges) {
      if (e.src < 0 || e.dst >= a.v || e.src >= e.dst)
        return "edge not forward: " + std::to_string(e.src) + "->" + std::to_string(e.dst);
      if (e.dst < sp.num_inputs) return "edge into input node";
      if (e.slot < 0 || e.slot >= sp.max_in_degree) return "slot out of range";
      if (e.op < 0 || e.op >= sp.num_ops()) return "op index out of range";
      const std::string& name = sp.op_vocab[e.op];
      if (name == "input" || name == "output") return "edge op is a node token";
      if (name == "none" && !sp.none_op_sampleable) return "'none' edge not allowed here";
      for (int s : slots_used[e.dst])
        if (s == e.slot) return "duplicate (dst,slot)";
      slots_used[e.dst].push_back(e.slot);
      ++indeg[e.dst];
    }
    if (sp.topology == OoeTopology::complete_pairs) {
      if (a.v != sp.max_nodes) return "complete-pair space requires v == V";
      if (static_cast<int>(a.edges.size()) != a.v * (a.v - 1) / 2)
        return "complete-pair space requires one edge per (src<dst) pair";
      for (int dst = sp.num_inputs; dst < a.v; ++dst)
        if (indeg[dst] != dst) return "missing pair edge into node " + std::to_string(dst);
    } else {
      for (int dst = sp.num_inputs; dst < a.v; ++dst)
        if (indeg[dst] != sp.max_in_degree)
          return "node " + std::to_string(dst) + " must have exactly n_d in-edges";
    }
  }
  return std::nullopt;
}

inline void validate(const ArchDag& a) {
  if (auto err = validate_error(a))
    throw SpaceError("invalid arch in " + a.space->id + ": " + *err);
}

// --- random sampling ------------------------------------------------------

inline ArchDag sample_random(const SpaceSpec& sp, Rng& rng) {
  sp.validate();
  ArchDag a;
  a.space = &sp;
  if (sp.kind == SpaceKind::oon) {
    const auto ops = sp.sampleable_ops();
    if (ops.empty()) throw SpaceError("space " + sp.id + ": no sampleable node ops");
    const int lo = std::max(sp.min_sample_nodes, sp.num_inputs + 1);
    const int hi = std::min(sp.max_sample_nodes, sp.max_nodes);
    if (lo > hi) throw SpaceError("space " + sp.id + ": empty node-count range");
    // Uniform over valid DAGs by rejection: draw each forward edge with
    // probability 1/2, accept iff in-degree and edge-count constraints hold.
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const int v = lo + rng.pick(hi - lo + 1);
      std::vector<std::vector<int>> preds(v);
      int edges = 0;
      for (int dst = sp.num_inputs; dst < v; ++dst)
        for (int src = 0; src < dst; ++src)
          if (rng.coin()) {
            preds[dst].push_back(src);
            ++edges;
          }
      if (sp.max_edges >= 0 && edges > sp.max_edges) continue;
      bool ok = true;
      for (int dst = sp.num_inputs; dst < v && ok; ++dst)
        if (preds[dst].empty()) ok = false;
      if (!ok) continue;
      a.v = v;
      a.preds = std::move(preds);
      a.node_ops.assign(v, 0);
      for (int i = 0; i < sp.num_inputs; ++i) a.node_ops[i] = sp.op_index("input");
      a.node_ops[v - 1] = sp.op_index("output");
      for (int i = sp.num_inputs; i < v - 1; ++i)
        a.node_ops[i] = ops[rng.pick(static_cast<int>(ops.size()))];
      validate(a);
      return a;
    }
    throw SpaceError("space " + sp.id + ": rejection sampling failed (constraints unsatisfiable?)");
  }

  const auto ops = sp.sampleable_ops();
  if (ops.empty()) throw SpaceError("space " + sp.id + ": no sampleable edge ops");
  a.v = sp.max_nodes;
  if (sp.topology == OoeTopology::complete_pairs) {
    for (int dst = 1; dst < a.v; ++dst)
      for (int src = 0; src < dst; ++src)
        a.edges.push_back({src, dst, 0, ops[rng.pick(static_cast<int>(ops.size()))]});
  } else {
    for (int dst = sp.num_inputs; dst < a.v; ++dst)
      for (int d = 0; d < sp.max_in_degree; ++d)
        a.edges.push_back({rng.pick(dst), dst, d,
                           ops[rng.pick(static_cast<int>(ops.size()))]});
  }
  normalize_slots(a);
  validate(a);
  return a;
}

// --- mutation ---------------------------------------------------------------

// One atomic change: re-draw a single node/edge op, or rewire a single edge's
// source. The result is always a valid arch that differs from the input.
inline ArchDag mutate(const ArchDag& arch, Rng& rng) {
  validate(arch);
  const SpaceSpec& sp = *arch.space;
  const auto ops = sp.sampleable_ops();
  for (int attempt = 0; attempt < 100; ++attempt) {
    ArchDag m = arch;
    if (sp.kind == SpaceKind::oon) {
      const int internal = m.v - 1 - sp.num_inputs;
      std::vector<std::pair<int, int>> edge_list;  // (dst, index in preds[dst])
      for (int dst = 0; dst < m.v; ++dst)
        for (std::size_t j = 0; j < m.preds[dst].size(); ++j)
          edge_list.emplace_back(dst, static_cast<int>(j));
      const bool can_op = internal > 0 && ops.size() > 1;
      const bool do_op = can_op && (edge_list.empty() || rng.coin());
      if (do_op) {
        const int node = sp.num_inputs + rng.pick(internal);
        int nop = m.node_ops[node];
        while (nop == m.node_ops[node]) nop = ops[rng.pick(static_cast<int>(ops.size()))];
        m.node_ops[node] = nop;
      } else {
        if (edge_list.empty()) continue;
        const auto [dst, j] = edge_list[rng.pick(static_cast<int>(edge_list.size()))];
        if (dst < 2) continue;  // only src 0 available, nothing to rewire to
        const int old_src = m.preds[dst][j];
        int nsrc = old_src;
        for (int tries = 0; tries < 16 && nsrc == old_src; ++tries) nsrc = rng.pick(dst);
        if (nsrc == old_src) continue;
        if (std::find(m.preds[dst].begin(), m.preds[dst].end(), nsrc) != m.preds[dst].end())
          continue;  // duplicate edge
        m.preds[dst][j] = nsrc;
        std::sort(m.preds[dst].begin(), m.preds[dst].end());
      }
    } else {
      if (m.edges.empty()) continue;
      const int ei = rng.pick(static_cast<int>(m.edges.size()));
      OoeEdge& e = m.edges[ei];
      const bool can_rewire =
          sp.topology == OoeTopology::fixed_in_degree && e.dst >= 2;
      const bool do_op = !can_rewire || rng.coin();
      if (do_op) {
        if (ops.size() < 2) continue;
        int nop = e.op;
        while (nop == e.op) nop = ops[rng.pick(static_cast<int>(ops.size()))];
        e.op = nop;
      } else {
        const int old_src = e.src;
        int nsrc = old_src;
        for (int tries = 0; tries < 16 && nsrc == old_src; ++tries) nsrc = rng.pick(e.dst);
        if (nsrc == old_src) continue;
        e.src = nsrc;
      }
      normalize_slots(m);
    }
    if (validate_error(m)) continue;
    if (serialize_key(m) == serialize_key(arch)) continue;
    return m;
  }
  throw MutationError("mutate: retry budget exhausted for " + serialize_key(arch));
}

// --- batching ---------------------------------------------------------------

// Zero-padded batch form consumed by the encoders. adj[b][dst][src] = 1 iff
// there is an edge src->dst (row = destination). Padded rows/columns are zero
// and padded ops are the none token.
struct PaddedBatch {
  const SpaceSpec* space = nullptr;
  int b = 0, V = 0;
  Tensor adj;                            // b x V x V
  std::vector<int> oon_ops;              // b*V (OON)
  std::vector<int> ooe_ops;              // b*n_d*V*V (OOE), none where absent
  std::vector<int> out_index;            // per graph
  std::vector<std::vector<int>> loose_ends;  // per graph (OOE fixed-degree)
  std::vector<int> real_v;               // per graph
};

template <class ArchRange>
inline PaddedBatch pad_batch(const ArchRange& archs) {
  PaddedBatch pb;
  pb.b = static_cast<int>(archs.size());
  if (pb.b == 0) throw EmptyError("pad_batch: empty batch");
  pb.space = archs[0].space;
  const SpaceSpec& sp = *pb.space;
  pb.V = sp.max_nodes;
  const int V = pb.V;
  const int none_tok = sp.op_index("none");
  pb.adj = Tensor(Shape{static_cast<std::size_t>(pb.b), static_cast<std::size_t>(V),
                        static_cast<std::size_t>(V)});
  if (sp.kind == SpaceKind::oon)
    pb.oon_ops.assign(static_cast<std::size_t>(pb.b) * V, none_tok);
  else
    pb.ooe_ops.assign(static_cast<std::size_t>(pb.b) * sp.max_in_degree * V * V, none_tok);

  for (int g = 0; g < pb.b; ++g) {
    const ArchDag& a = archs[g];
    if (a.space != pb.space)
      throw SpaceError("pad_batch: mixed spaces (" + pb.space->id + " vs " +
                       a.space->id + ")");
    validate(a);
    pb.real_v.push_back(a.v);
    pb.out_index.push_back(a.v - 1);
    double* adj = pb.adj.data.data() + static_cast<std::size_t>(g) * V * V;
    if (sp.kind == SpaceKind::oon) {
      for (int dst = 0; dst < a.v; ++dst)
        for (int src : a.preds[dst]) adj[dst * V + src] = 1.0;
      for (int i = 0; i < a.v; ++i)
        pb.oon_ops[static_cast<std::size_t>(g) * V + i] = a.node_ops[i];
      pb.loose_ends.push_back({a.v - 1});
    } else {
      std::vector<bool> has_succ(a.v, false);
      for (const auto& e : a.edges) {
        adj[e.dst * V + e.src] = 1.0;
        pb.ooe_ops[((static_cast<std::size_t>(g) * sp.max_in_degree + e.slot) * V +
                    e.dst) * V + e.src] = e.op;
        has_succ[e.src] = true;
      }
      if (sp.topology == OoeTopology::complete_pairs) {
        pb.loose_ends.push_back({a.v - 1});
      } else {
        std::vector<int> loose;
        for (int i = sp.num_inputs; i < a.v; ++i)
          if (!has_succ[i]) loose.push_back(i);
        pb.loose_ends.push_back(std::move(loose));
        pb.out_index.back() = a.v - 1;  // informational; aggregation uses loose ends
      }
    }
  }
  return pb;
}

// Reconstructs graph g from a padded batch (inverse of pad_batch).
inline ArchDag unpad(const PaddedBatch& pb, int g) {
  const SpaceSpec& sp = *pb.space;
  ArchDag a;
  a.space = pb.space;
  a.v = pb.real_v[g];
  const int V = pb.V;
  const double* adj = pb.adj.data.data() + static_cast<std::size_t>(g) * V * V;
  if (sp.kind == SpaceKind::oon) {
    a.node_ops.assign(pb.oon_ops.begin() + static_cast<std::size_t>(g) * V,
                      pb.oon_ops.begin() + static_cast<std::size_t>(g) * V + a.v);
    a.preds.resize(a.v);
    for (int dst = 0; dst < a.v; ++dst)
      for (int src = 0; src < dst; ++src)
        if (adj[dst * V + src] != 0.0) a.preds[dst].push_back(src);
  } else if (sp.topology == OoeTopology::complete_pairs) {
    for (int dst = 1; dst < a.v; ++dst)
      for (int src = 0; src < dst; ++src) {
        if (adj[dst * V + src] == 0.0) continue;
        const int op = pb.ooe_ops[(static_cast<std::size_t>(g) * sp.max_in_degree * V +
                                   dst) * V + src];
        a.edges.push_back({src, dst, 0, op});
      }
    normalize_slots(a);
  } else {
    const int none_tok = sp.op_index("none");
    for (int d = 0; d < sp.max_in_degree; ++d)
      for (int dst = 0; dst < a.v; ++dst)
        for (int src = 0; src < dst; ++src) {
          const int op = pb.ooe_ops[((static_cast<std::size_t>(g) * sp.max_in_degree +
                                      d) * V + dst) * V + src];
          if (op != none_tok) a.edges.push_back({src, dst, d, op});
        }
    normalize_slots(a);
  }
  validate(a);
  return a;
}

// --- flattening for the MLP baseline ----------------------------------------

// Fixed-length serialization. OON: V*V adjacency bits then V one-hot op
// blocks over the full vocab. Complete-pair OOE: one-hot edge-op blocks in
// lower-triangular order. Fixed-degree OOE: per (node, slot), source one-hot
// plus op one-hot.
inline std::vector<double> flatten_for_mlp(const ArchDag& a) {
  const SpaceSpec& sp = *a.space;
  const int V = sp.max_nodes;
  std::vector<double> out;
  if (sp.kind == SpaceKind::oon) {
    const int none_tok = sp.op_index("none");
    out.assign(static_cast<std::size_t>(V) * V + static_cast<std::size_t>(V) * sp.num_ops(), 0.0);
    for (int dst = 0; dst < a.v; ++dst)
      for (int src : a.preds[dst]) out[static_cast<std::size_t>(dst) * V + src] = 1.0;
    for (int i = 0; i < V; ++i) {
      const int op = i < a.v ? a.node_ops[i] : none_tok;
      out[static_cast<std::size_t>(V) * V + static_cast<std::size_t>(i) * sp.num_ops() + op] = 1.0;
    }
    return out;
  }
  const auto ops = sp.sampleable_ops();
  std::vector<int> op_pos(sp.num_ops(), -1);
  for (std::size_t i = 0; i < ops.size(); ++i) op_pos[ops[i]] = static_cast<int>(i);
  if (sp.topology == OoeTopology::complete_pairs) {
    // lower-triangular edge order: (1,0), (2,0), (2,1), (3,0), ...
    out.assign(static_cast<std::size_t>(V) * (V - 1) / 2 * ops.size(), 0.0);
    std::size_t block = 0;
    for (int dst = 1; dst < V; ++dst)
      for (int src = 0; src < dst; ++src) {
        for (const auto& e : a.edges)
          if (e.dst == dst && e.src == src)
            out[block * ops.size() + op_pos[e.op]] = 1.0;
        ++block;
      }
    return out;
  }
  const std::size_t per_edge = static_cast<std::size_t>(V) + ops.size();
  out.assign(static_cast<std::size_t>(V - sp.num_inputs) * sp.max_in_degree * per_edge, 0.0);
  for (const auto& e : a.edges) {
    const std::size_t base =
        (static_cast<std::size_t>(e.dst - sp.num_inputs) * sp.max_in_degree + e.slot) * per_edge;
    out[base + e.src] = 1.0;
    out[base + V + op_pos[e.op]] = 1.0;
  }
  return out;
}

inline std::size_t flatten_length(const SpaceSpec& sp) {
  const int V = sp.max_nodes;
  if (sp.kind == SpaceKind::oon)
    return static_cast<std::size_t>(V) * V + static_cast<std::size_t>(V) * sp.num_ops();
  const auto ops = sp.sampleable_ops();
  if (sp.topology == OoeTopology::complete_pairs)
    return static_cast<std::size_t>(V) * (V - 1) / 2 * ops.size();
  return static_cast<std::size_t>(V - sp.num_inputs) * sp.max_in_degree *
         (static_cast<std::size_t>(V) + ops.size());
}

}  // namespace gateslab
