#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "gateslab/errors.hpp"
#include "gateslab/isomorphism.hpp"
#include "gateslab/rng.hpp"
#include "gateslab/space.hpp"

namespace gateslab {

// Datasets are UTF-8 files with one JSON record per line, in a canonical
// formatting (fixed field order, floats with 17 significant digits, adjacency
// pairs sorted ascending) so that save(load(x)) round-trips byte-for-byte.

struct EvalRecord {
  ArchDag arch;
  double perf = 0.0;
  std::string id;
};

using Dataset = std::vector<EvalRecord>;

namespace detail_bench {

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace detail_bench

inline std::string record_to_line(const EvalRecord& r) {
  const SpaceSpec& sp = *r.arch.space;
  std::ostringstream os;
  os << "{\"id\":\"" << detail_bench::json_escape(r.id) << "\",\"space\":\""
     << sp.id << "\",\"v\":" << r.arch.v;
  if (sp.kind == SpaceKind::oon) {
    os << ",\"ops\":[";
    for (int i = 0; i < r.arch.v; ++i) {
      if (i) os << ',';
      os << '"' << sp.op_vocab[r.arch.node_ops[i]] << '"';
    }
    os << "],\"adj\":[";
    bool first = true;
    for (int dst = 0; dst < r.arch.v; ++dst)
      for (int src : r.arch.preds[dst]) {
        if (!first) os << ',';
        first = false;
        os << '[' << dst << ',' << src << ']';
      }
    os << ']';
  } else {
    os << ",\"edges\":[";
    for (std::size_t i = 0; i < r.arch.edges.size(); ++i) {
      if (i) os << ',';
      const auto& e = r.arch.edges[i];
      os << '[' << e.src << ',' << e.dst << ',' << e.slot << ",\""
         << sp.op_vocab[e.op] << "\"]";
    }
    os << ']';
  }
  os << ",\"perf\":" << fmt_g17(r.perf) << '}';
  return os.str();
}

inline EvalRecord record_from_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw ParseError(std::string("bad JSON: ") + e.what());
  }
  EvalRecord r;
  r.id = j.at("id").get<std::string>();
  const SpaceSpec& sp = space_by_id(j.at("space").get<std::string>());
  r.arch.space = &sp;
  r.arch.v = j.at("v").get<int>();
  if (sp.kind == SpaceKind::oon) {
    for (const auto& name : j.at("ops"))
      r.arch.node_ops.push_back(sp.op_index(name.get<std::string>()));
    r.arch.preds.resize(std::max(r.arch.v, 0));
    for (const auto& pair : j.at("adj")) {
      const int dst = pair.at(0).get<int>(), src = pair.at(1).get<int>();
      if (dst < 0 || dst >= r.arch.v)
        throw ParseError("record " + r.id + ": adjacency index out of range");
      r.arch.preds[dst].push_back(src);
    }
  } else {
    for (const auto& e : j.at("edges"))
      r.arch.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(),
                              e.at(2).get<int>(), sp.op_index(e.at(3).get<std::string>())});
  }
  r.perf = j.at("perf").get<double>();
  if (!std::isfinite(r.perf) || r.perf < 0.0 || r.perf > 1.0)
    throw ParseError("record " + r.id + ": perf outside [0,1]");
  if (auto err = validate_error(r.arch))
    throw ParseError("record " + r.id + ": " + *err);
  return r;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  Dataset ds;
  std::unordered_set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      ds.push_back(record_from_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(ds.back().id).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate id '" +
                       ds.back().id + "'");
  }
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write dataset file '" + path + "'");
  for (const auto& r : ds) out << record_to_line(r) << '\n';
}

// train = first round(fraction * n) records, test = remainder. Half-counts
// round up, matching the benchmark split conventions (7813/7812 at 50%).
inline std::pair<Dataset, Dataset> split_prefix(const Dataset& ds, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw Error("split_prefix: fraction must be in (0,1)");
  const std::size_t n = ds.size();
  const std::size_t cut = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n) + 0.5));
  if (cut == 0 || cut >= n)
    throw EmptyError("split_prefix: a side would be empty (n=" + std::to_string(n) +
                     ", fraction=" + std::to_string(fraction) + ")");
  Dataset train(ds.begin(), ds.begin() + cut);
  Dataset test(ds.begin() + cut, ds.end());
  return {std::move(train), std::move(test)};
}

// --- synthetic oracle ----------------------------------------------------------

// Deterministic stand-in for benchmark ground truth:
//   perf = sigmoid(mean_w + depth_coef * longest_path/V + noise_coef * u)
// where u in [-1,1] is hashed from the canonical form, so isomorphic
// architectures get bit-identical performance.
struct OracleSpec {
  std::uint64_t seed = 0;
  std::map<std::string, double> weights;  // op name -> contribution
  double depth_coef = 0.3;
  double noise_coef = 0.05;

  void check_covers(const SpaceSpec& sp) const {
    for (int i = 0; i < sp.num_ops(); ++i) {
      if (sp.is_reserved(i)) continue;
      if (!weights.count(sp.op_vocab[i]))
        throw SpaceError("oracle: no weight for op '" + sp.op_vocab[i] + "'");
    }
  }
};

inline OracleSpec default_oracle(const SpaceSpec& sp, std::uint64_t seed = 0) {
  OracleSpec o;
  o.seed = seed;
  // Fixed table for the ops used by the built-in spaces.
  const std::map<std::string, double> table = {
      {"conv3x3", 0.5},     {"conv1x1", 0.2},      {"maxpool3x3", -0.1},
      {"skip_connect", 0.0}, {"avgpool3x3", -0.1}, {"identity", 0.0},
      {"sep_conv3x3", 0.5}, {"sep_conv5x5", 0.4}};
  for (int i = 0; i < sp.num_ops(); ++i) {
    if (sp.is_reserved(i)) continue;
    auto it = table.find(sp.op_vocab[i]);
    o.weights[sp.op_vocab[i]] = it != table.end() ? it->second : 0.0;
  }
  return o;
}

// Longest directed path (in edges). "none"-labelled OOE edges represent a
// disconnected pair and do not carry information, so they are skipped.
inline int longest_path(const ArchDag& a) {
  const SpaceSpec& sp = *a.space;
  std::vector<int> lp(a.v, 0);
  if (sp.kind == SpaceKind::oon) {
    for (int dst = 0; dst < a.v; ++dst)
      for (int src : a.preds[dst]) lp[dst] = std::max(lp[dst], lp[src] + 1);
  } else {
    const int none_tok = sp.op_index("none");
    for (const auto& e : a.edges)
      if (e.op != none_tok) lp[e.dst] = std::max(lp[e.dst], lp[e.src] + 1);
  }
  int best = 0;
  for (int v : lp) best = std::max(best, v);
  return best;
}

inline double synth_perf(const ArchDag& a, const OracleSpec& oracle) {
  const SpaceSpec& sp = *a.space;
  oracle.check_covers(sp);
  const ArchDag c = canonicalize(a);
  double sum = 0.0;
  int cnt = 0;
  if (sp.kind == SpaceKind::oon) {
    for (int i = sp.num_inputs; i < c.v - 1; ++i) {
      sum += oracle.weights.at(sp.op_vocab[c.node_ops[i]]);
      ++cnt;
    }
  } else {
    const int none_tok = sp.op_index("none");
    for (const auto& e : c.edges) {
      if (e.op == none_tok) continue;
      sum += oracle.weights.at(sp.op_vocab[e.op]);
      ++cnt;
    }
  }
  const double mean_w = cnt > 0 ? sum / cnt : 0.0;
  const double depth = static_cast<double>(longest_path(c)) / sp.max_nodes;
  Rng noise(derive_seed(oracle.seed, "noise", fnv1a64(serialize_key(c))));
  const double u = 2.0 * noise.uniform() - 1.0;
  const double z = mean_w + oracle.depth_coef * depth + oracle.noise_coef * u;
  return 1.0 / (1.0 + std::exp(-z));
}

// --- synthetic dataset generation -----------------------------------------------

inline std::string make_arch_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "a%06zu", i);
  return buf;
}

// `count` architectures, distinct by canonical form, with oracle performance.
inline Dataset gen_synth_dataset(const SpaceSpec& sp, std::size_t count,
                                 const OracleSpec& oracle, std::uint64_t seed) {
  if (count < 1) throw Error("gen_synth_dataset: count must be >= 1");
  oracle.check_covers(sp);
  Rng rng(derive_seed(seed, "gen"));
  Dataset ds;
  std::unordered_set<std::string> seen;
  std::size_t stall = 0;
  const std::size_t stall_budget = 200000;
  while (ds.size() < count) {
    ArchDag a = sample_random(sp, rng);
    const std::string key = canonical_key(a);
    if (!seen.insert(key).second) {
      if (++stall > stall_budget)
        throw SpaceError("gen_synth_dataset: space appears to have fewer than " +
                         std::to_string(count) + " distinct architectures");
      continue;
    }
    stall = 0;
    EvalRecord r;
    r.id = make_arch_id(ds.size());
    r.arch = std::move(a);
    r.perf = synth_perf(r.arch, oracle);
    ds.push_back(std::move(r));
  }
  return ds;
}

// --- exhaustive enumeration (small spaces only) ---------------------------------

// All architectures of a small space, one representative per canonical form,
// in a deterministic order. Used by the search experiments to identify the
// true optimum.
inline std::vector<ArchDag> enumerate_space(const SpaceSpec& sp) {
  sp.validate();
  const auto ops = sp.sampleable_ops();
  std::vector<ArchDag> out;
  std::unordered_set<std::string> seen;

  auto push_unique = [&](const ArchDag& a) {
    if (validate_error(a)) return;
    const std::string key = canonical_key(a);
    if (seen.insert(key).second) out.push_back(canonicalize(a));
  };

  if (sp.kind == SpaceKind::oon) {
    const int lo = std::max(sp.min_sample_nodes, sp.num_inputs + 1);
    const int hi = std::min(sp.max_sample_nodes, sp.max_nodes);
    double raw = 0.0;
    for (int v = lo; v <= hi; ++v) {
      const int m = v * (v - 1) / 2;
      raw += std::pow(2.0, m) * std::pow(static_cast<double>(ops.size()),
                                         std::max(0, v - 1 - sp.num_inputs));
    }
    if (raw > 2e6)
      throw SizeError("enumerate_space: " + sp.id + " too large (" +
                      std::to_string(static_cast<long long>(raw)) + " raw graphs)");
    for (int v = lo; v <= hi; ++v) {
      std::vector<std::pair<int, int>> slots;  // candidate edges (dst, src)
      for (int dst = sp.num_inputs; dst < v; ++dst)
        for (int src = 0; src < dst; ++src) slots.emplace_back(dst, src);
      const int m = static_cast<int>(slots.size());
      const int internal = v - 1 - sp.num_inputs;
      for (long long mask = 0; mask < (1LL << m); ++mask) {
        ArchDag base;
        base.space = &sp;
        base.v = v;
        base.preds.resize(v);
        int edges = 0;
        for (int e = 0; e < m; ++e)
          if (mask & (1LL << e)) {
            base.preds[slots[e].first].push_back(slots[e].second);
            ++edges;
          }
        if (sp.max_edges >= 0 && edges > sp.max_edges) continue;
        bool ok = true;
        for (int dst = sp.num_inputs; dst < v && ok; ++dst)
          if (base.preds[dst].empty()) ok = false;
        if (!ok) continue;
        base.node_ops.assign(v, 0);
        for (int i = 0; i < sp.num_inputs; ++i) base.node_ops[i] = sp.op_index("input");
        base.node_ops[v - 1] = sp.op_index("output");
        // odometer over internal op assignments
        std::vector<int> assign(std::max(internal, 0), 0);
        for (;;) {
          for (int i = 0; i < internal; ++i)
            base.node_ops[sp.num_inputs + i] = ops[assign[i]];
          push_unique(base);
          int d = internal - 1;
          while (d >= 0 && ++assign[d] == static_cast<int>(ops.size())) assign[d--] = 0;
          if (d < 0) break;
        }
      }
    }
    return out;
  }

  if (sp.topology != OoeTopology::complete_pairs)
    throw SizeError("enumerate_space: only complete-pair OOE spaces are enumerable");
  const int V = sp.max_nodes;
  std::vector<std::pair<int, int>> pairs;
  for (int dst = 1; dst < V; ++dst)
    for (int src = 0; src < dst; ++src) pairs.emplace_back(dst, src);
  const double raw = std::pow(static_cast<double>(ops.size()),
                              static_cast<double>(pairs.size()));
  if (raw > 2e6)
    throw SizeError("enumerate_space: " + sp.id + " too large");
  std::vector<int> assign(pairs.size(), 0);
  for (;;) {
    ArchDag a;
    a.space = &sp;
    a.v = V;
    for (std::size_t e = 0; e < pairs.size(); ++e)
      a.edges.push_back({pairs[e].second, pairs[e].first, 0, ops[assign[e]]});
    normalize_slots(a);
    push_unique(a);
    int d = static_cast<int>(pairs.size()) - 1;
    while (d >= 0 && ++assign[d] == static_cast<int>(ops.size())) assign[d--] = 0;
    if (d < 0) break;
  }
  return out;
}

}  // namespace gateslab
