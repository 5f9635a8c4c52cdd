#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "gateslab/encoders.hpp"
#include "gateslab/errors.hpp"

namespace gateslab {

// Versioned text checkpoint: header with the encoder configuration, then one
// named tensor per block (shape line followed by %.17g row-major values).
// Emission is canonical, so load + save round-trips byte-for-byte.

inline std::string checkpoint_to_string(const Predictor& pred) {
  std::ostringstream os;
  os << "gateslab-ckpt v1\n";
  os << "space " << pred.space->id << '\n';
  os << "encoder " << encoder_name(pred.cfg.kind) << '\n';
  os << "layers " << pred.cfg.layers << '\n';
  os << "hidden " << pred.cfg.hidden << '\n';
  os << "emb_dim " << pred.cfg.emb_dim << '\n';
  os << "self_loop " << (pred.cfg.self_loop ? 1 : 0) << '\n';
  os << "reinject_input " << (pred.cfg.reinject_input ? 1 : 0) << '\n';
  os << "comparator " << (pred.cfg.comparator ? 1 : 0) << '\n';
  os << "mlp_widths";
  for (int w : pred.cfg.mlp_widths) os << ' ' << w;
  os << '\n';
  os << "head_widths";
  for (int w : pred.cfg.head_widths) os << ' ' << w;
  os << '\n';
  os << "params " << pred.params.names().size() << '\n';
  for (const auto& name : pred.params.names()) {
    const Tensor& t = pred.params.get(name);
    os << "tensor " << name << ' ' << t.rank();
    for (std::size_t d : t.shape) os << ' ' << d;
    os << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i) os << ' ';
      os << fmt_g17(t.data[i]);
    }
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

inline void save_checkpoint(const std::string& path, const Predictor& pred) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_string(pred);
}

inline Predictor checkpoint_from_stream(std::istream& in) {
  std::string tok;
  auto expect = [&](const std::string& want) {
    in >> tok;
    if (tok != want) throw ParseError("checkpoint: expected '" + want + "', got '" + tok + "'");
  };
  expect("gateslab-ckpt");
  expect("v1");

  Predictor pred;
  expect("space");
  in >> tok;
  pred.space = &space_by_id(tok);
  expect("encoder");
  in >> tok;
  pred.cfg.kind = encoder_from_name(tok);
  auto read_int = [&](const std::string& key) {
    expect(key);
    int v;
    in >> v;
    return v;
  };
  pred.cfg.layers = read_int("layers");
  pred.cfg.hidden = read_int("hidden");
  pred.cfg.emb_dim = read_int("emb_dim");
  pred.cfg.self_loop = read_int("self_loop") != 0;
  pred.cfg.reinject_input = read_int("reinject_input") != 0;
  pred.cfg.comparator = read_int("comparator") != 0;
  expect("mlp_widths");
  pred.cfg.mlp_widths.clear();
  while (in >> tok && tok != "head_widths") pred.cfg.mlp_widths.push_back(std::stoi(tok));
  pred.cfg.head_widths.clear();
  while (in >> tok && tok != "params") pred.cfg.head_widths.push_back(std::stoi(tok));
  std::size_t nparams;
  in >> nparams;
  for (std::size_t p = 0; p < nparams; ++p) {
    expect("tensor");
    std::string name;
    std::size_t rank;
    in >> name >> rank;
    Shape shape(rank);
    for (auto& d : shape) in >> d;
    Tensor t{shape, 0.0};
    for (auto& v : t.data)
      if (!(in >> v)) throw ParseError("checkpoint: truncated tensor '" + name + "'");
    pred.params.add(name, std::move(t));
  }
  expect("end");
  return pred;
}

inline Predictor load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  try {
    return checkpoint_from_stream(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace gateslab
