#pragma once

// Checkpoint and report serialization. Reals are written with 17 significant
// digits so a load reproduces every parameter bit for bit.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phnet/config.hpp"
#include "phnet/controller.hpp"
#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/train.hpp"
#include "phnet/verify.hpp"

namespace phnet {

using Json = nlohmann::ordered_json;

/// Serializes `j`, printing floating-point values with %.17g.
inline void write_json(std::ostream& os, const Json& j, int indent = 2, int level = 0) {
  const std::string pad(static_cast<std::size_t>(indent * (level + 1)), ' ');
  const std::string pad_close(static_cast<std::size_t>(indent * level), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << Json(it.key()).dump() << ": ";
        write_json(os, it.value(), indent, level + 1);
      }
      os << '\n' << pad_close << '}';
      return;
    }
    case Json::value_t::array: {
      // Arrays of scalars stay on one line.
      bool scalars = true;
      for (const auto& v : j) scalars = scalars && !v.is_structured();
      if (j.empty() || scalars) {
        os << '[';
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          write_json(os, j[i], indent, level + 1);
        }
        os << ']';
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json(os, j[i], indent, level + 1);
      }
      os << '\n' << pad_close << ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      require(std::isfinite(v), ErrorKind::numeric, "write_json: non-finite real");
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      std::string s(buf);
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      os << s;
      return;
    }
    default: os << j.dump(); return;
  }
}

inline std::string json_text(const Json& j) {
  std::ostringstream os;
  write_json(os, j);
  os << '\n';
  return os.str();
}

inline Json mat_to_json(const Mat& m) {
  Json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  Json data = Json::array();
  for (double v : m.values()) data.push_back(v);
  j["data"] = std::move(data);
  return j;
}

inline Mat mat_from_json(const Json& j) {
  const auto r = j.at("rows").get<std::size_t>();
  const auto c = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  require_dims(data.size() == r * c, "checkpoint: matrix data length does not match rows*cols");
  return Mat(r, c, data);
}

inline Json train_config_to_json(const TrainConfig& t) {
  Json j;
  j["epochs"] = t.epochs;
  j["S"] = t.S;
  j["lr"] = t.lr;
  j["seed"] = t.seed;
  j["alpha_grad"] = to_string(t.alpha_grad);
  j["clip"] = t.clip_norm;
  j["dt"] = t.rollout.dt;
  j["T"] = t.rollout.horizon;
  j["beta"] = t.rollout.beta;
  j["normalize_by_T"] = t.rollout.normalize_by_horizon;
  return j;
}

/// Stored controller: free parameters, node-level communication mask, the
/// damping alpha it was certified with, and provenance of the run.
struct Checkpoint {
  PhParams params;
  BlockMask comm;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  Json train_config = Json::object();

  std::vector<std::size_t> h_dims() const {
    std::vector<std::size_t> h;
    for (const auto& k : params.ham.K_blocks) h.push_back(k.rows());
    return h;
  }
};

inline Checkpoint make_checkpoint(const Experiment& e, const PhParams& params) {
  Checkpoint ck;
  ck.params = params;
  ck.comm = e.comm;
  ck.alpha = assemble(params, e.comm).alpha();
  ck.seed = e.seed();
  ck.config_hash = hash_hex(e.cfg.config_hash);
  ck.train_config = train_config_to_json(e.cfg.train);
  return ck;
}

inline Json checkpoint_to_json(const Checkpoint& ck) {
  const PhParams& p = ck.params;
  const std::size_t n = p.nodes();
  Json j;
  j["epsilon"] = p.epsilon;
  j["q_dims"] = p.q_dims;
  j["h_dims"] = ck.h_dims();
  j["p_dims"] = p.p_dims;
  Json mask = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    Json row = Json::array();
    for (std::size_t k = 0; k < n; ++k) row.push_back(ck.comm.allowed(i, k) ? 1 : 0);
    mask.push_back(std::move(row));
  }
  j["mask"] = std::move(mask);
  Json a = Json::array();
  for (const auto& m : p.A_blocks) a.push_back(mat_to_json(m));
  j["A_blocks"] = std::move(a);
  j["d"] = p.d;
  Json g = Json::array();
  for (const auto& [idx, m] : p.G_blocks) {
    Json b = mat_to_json(m);
    b["i"] = idx.first;
    b["j"] = idx.second;
    g.push_back(std::move(b));
  }
  j["G_blocks"] = std::move(g);
  Json k = Json::array();
  for (const auto& m : p.ham.K_blocks) k.push_back(mat_to_json(m));
  j["K_blocks"] = std::move(k);
  j["ham_kind"] = to_string(p.ham.kind);
  j["alpha"] = ck.alpha;
  j["seed"] = ck.seed;
  j["config_hash"] = ck.config_hash;
  j["train_config"] = ck.train_config;
  return j;
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  try {
    Checkpoint ck;
    PhParams& p = ck.params;
    p.epsilon = j.at("epsilon").get<double>();
    p.q_dims = j.at("q_dims").get<std::vector<std::size_t>>();
    p.p_dims = j.at("p_dims").get<std::vector<std::size_t>>();
    const auto h = j.at("h_dims").get<std::vector<std::size_t>>();
    const std::size_t n = p.q_dims.size();
    require_dims(p.p_dims.size() == n && h.size() == n, "checkpoint: per-node dimension lists differ in length");

    const auto mask = j.at("mask").get<std::vector<std::vector<int>>>();
    require_dims(mask.size() == n, "checkpoint: mask must be n x n");
    std::vector<std::uint8_t> bits;
    for (std::size_t i = 0; i < n; ++i) {
      require_dims(mask[i].size() == n, "checkpoint: mask must be n x n");
      for (std::size_t k = 0; k < n; ++k) {
        require(mask[i][k] == 0 || mask[i][k] == 1, ErrorKind::structure, "checkpoint: mask entries must be 0 or 1");
        bits.push_back(static_cast<std::uint8_t>(mask[i][k]));
      }
    }
    ck.comm = BlockMask::scalar(n, std::move(bits));

    for (const auto& m : j.at("A_blocks")) p.A_blocks.push_back(mat_from_json(m));
    p.d = j.at("d").get<Vec>();
    for (const auto& b : j.at("G_blocks"))
      p.G_blocks.emplace(BlockIndex{b.at("i").get<std::size_t>(), b.at("j").get<std::size_t>()}, mat_from_json(b));
    for (const auto& m : j.at("K_blocks")) p.ham.K_blocks.push_back(mat_from_json(m));
    require_dims(p.ham.K_blocks.size() == n, "checkpoint: one K block per node required");
    for (std::size_t i = 0; i < n; ++i)
      require_dims(p.ham.K_blocks[i].rows() == h[i], "checkpoint: K block rows disagree with h_dims");
    p.ham.kind = parse_hamiltonian_kind(j.at("ham_kind").get<std::string>());

    ck.alpha = j.at("alpha").get<double>();
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.config_hash = j.at("config_hash").get<std::string>();
    if (j.contains("train_config")) ck.train_config = j.at("train_config");
    return ck;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::configuration, std::string("checkpoint: malformed JSON (") + ex.what() + ")");
  }
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::configuration, "cannot write '" + path + "'");
  f << json_text(checkpoint_to_json(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::configuration, "checkpoint: cannot parse '" + path + "' (" + ex.what() + ")");
  }
  return checkpoint_from_json(j);
}

/// Assembles the stored controller with its stored alpha, so the verifier
/// audits the damping actually recorded rather than a recomputed one.
inline PhController checkpoint_controller(const Checkpoint& ck) { return assemble(ck.params, ck.comm, ck.alpha); }

/// Throws a dimension error unless the checkpoint fits the experiment.
inline void check_compatible(const Checkpoint& ck, const Experiment& e) {
  require_dims(ck.params.nodes() == e.cfg.n, "checkpoint: node count " + std::to_string(ck.params.nodes()) +
                                                 " does not match config n = " + std::to_string(e.cfg.n));
  require_dims(ck.params.q_dims == e.q_dims, "checkpoint: q_dims do not match the config");
  require_dims(ck.h_dims() == e.h_dims, "checkpoint: h_dims do not match the config");
  require_dims(ck.params.p_dims == e.p_dims, "checkpoint: p_dims do not match the plant");
}

inline Json report_to_json(const CertificateReport& r) {
  Json j;
  j["dt"] = r.dt;
  j["n_inits"] = r.n_inits;
  j["n_probes"] = r.n_probes;
  j["probe_seed"] = r.probe_seed;
  j["alpha"] = r.alpha;
  j["certified_alpha"] = r.certified_alpha;
  j["matrix_residual"] = r.matrix_residual;
  j["matrix_tol"] = r.matrix_tol;
  j["controller_osp_residual"] = r.controller_residual;
  j["plant_passivity_residual"] = r.plant_residual;
  j["max_traj_residual"] = std::max(r.controller_residual, r.plant_residual);
  j["dissipation_tol"] = r.dissipation_tol;
  j["empirical_gain"] = r.empirical_gain;
  j["bias_b"] = r.bias_b;
  j["max_gain_ratio"] = r.max_gain_ratio;
  j["gain_bound"] = r.gain_bound;
  j["r_at_T"] = r.r_at_horizon;
  j["r_min_T_2T"] = r.r_post_min;
  j["consensus_drop_tol"] = r.consensus_drop;
  j["domain_exits"] = r.domain_exits;
  Json v = Json::object();
  for (const auto& [k, ok] : r.verdicts) v[k] = ok;
  j["verdicts"] = std::move(v);
  j["all_pass"] = r.all_pass();
  j["probes"] = r.probe_descriptions;
  return j;
}

}  // namespace phnet
