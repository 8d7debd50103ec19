#ifndef VERGE_TRACE_IO_HPP
#define VERGE_TRACE_IO_HPP

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "verge/chain_state.hpp"
#include "verge/common.hpp"

namespace verge {

using json = nlohmann::json;

namespace detail {

inline json vector_to_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const json& a) {
  Vector v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<int>(i)) = a[i].get<double>();
  return v;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i).transpose()));
  return rows;
}

}  // namespace detail

// Trace files are JSON lines: a meta object first, then one object per
// retained draw. Kernel parameters and beta are stored per included predictor.
inline void write_trace_jsonl(const Trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("trace: cannot write " + path);
  json meta = {{"type", "meta"},
               {"n", trace.meta.n},
               {"P", trace.meta.P},
               {"K", trace.meta.K},
               {"total_iterations", trace.meta.total_iterations},
               {"burn_in", trace.meta.burn_in},
               {"thin", trace.meta.thin},
               {"seed", trace.meta.seed},
               {"chain", trace.meta.chain}};
  out << meta.dump() << "\n";
  for (const auto& rec : trace.records) {
    json gt = json::array(), rho = json::array(), la = json::array(), lz = json::array(),
         r = json::array(), beta = json::array();
    for (const auto& p : rec.params) {
      gt.push_back(p.gamma_tilde);
      rho.push_back(detail::vector_to_json(p.rho));
      la.push_back(p.lambda_a);
      lz.push_back(p.lambda_z);
      r.push_back(p.r);
    }
    for (const auto& b : rec.beta) beta.push_back(detail::vector_to_json(b));
    json edges = json::array();
    for (const auto& e : rec.edges) edges.push_back({e.first, e.second});
    json line = {{"type", "sample"}, {"iteration", rec.iteration}, {"tau2", rec.tau2},
                 {"included", rec.included}, {"gamma_tilde", gt}, {"rho", rho},
                 {"lambda_a", la}, {"lambda_z", lz}, {"r", r}, {"beta", beta},
                 {"edges", edges}};
    out << line.dump() << "\n";
  }
  if (!out) throw ValidationError("trace: write failed for " + path);
}

inline Trace read_trace_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("trace: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trace: empty file " + path);
  Trace trace;
  try {
    json meta = json::parse(line);
    if (meta.value("type", "") != "meta")
      throw ValidationError("trace: first line of " + path + " is not a meta record");
    trace.meta.n = meta.at("n").get<int>();
    trace.meta.P = meta.at("P").get<int>();
    trace.meta.K = meta.at("K").get<int>();
    trace.meta.total_iterations = meta.at("total_iterations").get<long>();
    trace.meta.burn_in = meta.at("burn_in").get<long>();
    trace.meta.thin = meta.at("thin").get<int>();
    trace.meta.seed = meta.at("seed").get<std::uint64_t>();
    trace.meta.chain = meta.at("chain").get<int>();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json rec = json::parse(line);
      if (rec.value("type", "") != "sample") continue;
      TraceRecord r;
      r.iteration = rec.at("iteration").get<long>();
      r.tau2 = rec.at("tau2").get<double>();
      r.included = rec.at("included").get<std::vector<int>>();
      const auto& gt = rec.at("gamma_tilde");
      const auto& rho = rec.at("rho");
      const auto& la = rec.at("lambda_a");
      const auto& lz = rec.at("lambda_z");
      const auto& rr = rec.at("r");
      const auto& beta = rec.at("beta");
      for (std::size_t i = 0; i < r.included.size(); ++i) {
        KernelParams p;
        p.gamma_tilde = gt[i].get<std::vector<int>>();
        p.rho = detail::vector_from_json(rho[i]);
        p.lambda_a = la[i].get<double>();
        p.lambda_z = lz[i].get<double>();
        p.r = rr[i].get<double>();
        r.params.push_back(std::move(p));
        r.beta.push_back(detail::vector_from_json(beta[i]));
      }
      for (const auto& e : rec.at("edges"))
        r.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
      trace.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError("trace: malformed JSON in " + path + ": " + e.what());
  }
  return trace;
}

// Full sampler state written when a numerical fault aborts a run, for
// post-mortem inspection.
inline void write_state_dump(const ChainState& state, long iteration, const std::string& path) {
  json dump = {{"iteration", iteration},
               {"tau2", state.tau2},
               {"gamma", std::vector<int>(state.gamma.data(), state.gamma.data() + state.gamma.size())},
               {"rho", detail::matrix_to_json(state.rho)},
               {"lambda_a", detail::vector_to_json(state.lambda_a)},
               {"lambda_z", detail::vector_to_json(state.lambda_z)},
               {"r", detail::vector_to_json(state.r)},
               {"omega", detail::matrix_to_json(state.omega)},
               {"beta", detail::matrix_to_json(state.beta)}};
  json gt = json::array(), edge = json::array();
  for (int i = 0; i < state.P(); ++i) {
    std::vector<int> grow(state.K()), erow(state.P());
    for (int k = 0; k < state.K(); ++k) grow[k] = state.gamma_tilde(i, k);
    for (int j = 0; j < state.P(); ++j) erow[j] = state.edge(i, j);
    gt.push_back(grow);
    edge.push_back(erow);
  }
  dump["gamma_tilde"] = gt;
  dump["edge"] = edge;
  std::ofstream out(path);
  if (out) out << dump.dump(2) << "\n";
}

}  // namespace verge

#endif  // VERGE_TRACE_IO_HPP
