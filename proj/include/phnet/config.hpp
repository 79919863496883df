#pragma once

// Run configuration: flat "key = value" text, '#' starts a comment, lists are
// comma separated, booleans true/false. Unknown keys are rejected.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "phnet/controller.hpp"
#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/rng.hpp"
#include "phnet/simulate.hpp"
#include "phnet/topology.hpp"
#include "phnet/train.hpp"

namespace phnet {

enum class CommPattern { same, decentralized, complete };

inline std::string to_string(CommPattern c) {
  switch (c) {
    case CommPattern::same: return "same";
    case CommPattern::decentralized: return "decentralized";
    case CommPattern::complete: return "complete";
  }
  return "same";
}

struct RunConfig {
  TopologyKind topology = topo::Complete{};
  std::size_t n = 64;
  CommPattern comm = CommPattern::same;

  double plant_K = 1.0;
  std::optional<Vec> omega;  // explicit natural frequencies, else U[0, omega_max)
  double omega_max = 4.0;

  double epsilon = 0.85;
  std::vector<std::size_t> q{4};  // one entry (broadcast) or one per node
  std::vector<std::size_t> h{8};
  HamiltonianKind ham = HamiltonianKind::log_cosh;

  TrainConfig train;
  std::size_t verify_inits = 4;
  std::uint64_t probe_seed = 7;
  std::string output_dir = "out";

  std::uint64_t config_hash = fnv1a64("");

  std::vector<std::size_t> q_dims() const { return broadcast(q, "controller.q"); }
  std::vector<std::size_t> h_dims() const { return broadcast(h, "controller.h"); }

  void validate() const {
    require(n >= 1, ErrorKind::configuration, "config: topology.n must be at least 1");
    if (const auto* sq = std::get_if<topo::SquareLattice>(&topology))
      require(sq->rows * sq->cols == n, ErrorKind::configuration,
              "config: topology.rows * topology.cols must equal topology.n");
    require(plant_K > 0.0, ErrorKind::configuration, "config: plant.K must be positive");
    require(!omega || omega->size() == n, ErrorKind::configuration, "config: plant.omega must list n values");
    require(omega_max >= 0.0, ErrorKind::configuration, "config: plant.omega_max must be non-negative");
    require(epsilon > 0.0, ErrorKind::configuration, "config: controller.epsilon must be positive");
    const auto qd = q_dims(), hd = h_dims();
    for (std::size_t i = 0; i < n; ++i) {
      require(qd[i] >= 1, ErrorKind::configuration, "config: controller.q entries must be positive");
      require(hd[i] >= qd[i], ErrorKind::configuration, "config: controller.h entries must be >= controller.q");
    }
    require(verify_inits >= 1, ErrorKind::configuration, "config: verify.inits must be at least 1");
    train.validate();
  }

 private:
  std::vector<std::size_t> broadcast(const std::vector<std::size_t>& v, const char* key) const {
    if (v.size() == 1) return std::vector<std::size_t>(n, v[0]);
    require(v.size() == n, ErrorKind::configuration, std::string("config: ") + key + " must have 1 or n entries");
    return v;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size() && std::isfinite(out), ErrorKind::configuration,
          "config: key '" + key + "' expects a real, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  require(ec == std::errc() && ptr == v.data() + v.size(), ErrorKind::configuration,
          "config: key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error(ErrorKind::configuration, "config: key '" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace detail

/// Parses configuration text. Topology parameters may appear in any order
/// relative to topology.kind.
inline RunConfig parse_config(const std::string& text) {
  using detail::parse_bool, detail::parse_real, detail::parse_uint;
  RunConfig cfg;
  cfg.config_hash = fnv1a64(text);

  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    require(eq != std::string::npos, ErrorKind::configuration,
            "config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    require(!key.empty(), ErrorKind::configuration, "config: empty key on line " + std::to_string(lineno));
    require(kv.emplace(key, value).second, ErrorKind::configuration, "config: duplicate key '" + key + "'");
  }

  auto take = [&kv](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };

  std::string kind = "complete";
  if (auto v = take("topology.kind")) kind = *v;
  if (auto v = take("topology.n")) cfg.n = parse_uint("topology.n", *v);
  double p = 0.3, p_rewire = 0.3;
  std::size_t rows = 0, cols = 0, k = 5;
  if (auto v = take("topology.p")) p = parse_real("topology.p", *v);
  if (auto v = take("topology.rows")) rows = parse_uint("topology.rows", *v);
  if (auto v = take("topology.cols")) cols = parse_uint("topology.cols", *v);
  if (auto v = take("topology.k")) k = parse_uint("topology.k", *v);
  if (auto v = take("topology.p_rewire")) p_rewire = parse_real("topology.p_rewire", *v);
  if (kind == "complete") {
    cfg.topology = topo::Complete{};
  } else if (kind == "erdos_renyi") {
    cfg.topology = topo::ErdosRenyi{p};
  } else if (kind == "square_lattice") {
    if (rows == 0 && cols == 0) {
      rows = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.n))));
      cols = rows == 0 ? 0 : cfg.n / rows;
    }
    cfg.topology = topo::SquareLattice{rows, cols};
  } else if (kind == "watts_strogatz") {
    cfg.topology = topo::WattsStrogatz{k, p_rewire};
  } else {
    throw Error(ErrorKind::configuration, "config: key 'topology.kind' has unknown value '" + kind + "'");
  }
  if (auto v = take("topology.comm")) {
    if (*v == "same") cfg.comm = CommPattern::same;
    else if (*v == "decentralized") cfg.comm = CommPattern::decentralized;
    else if (*v == "complete") cfg.comm = CommPattern::complete;
    else throw Error(ErrorKind::configuration, "config: key 'topology.comm' has unknown value '" + *v + "'");
  }

  if (auto v = take("plant.K")) cfg.plant_K = parse_real("plant.K", *v);
  if (auto v = take("plant.omega")) {
    Vec w;
    for (const auto& s : detail::split_list(*v)) w.push_back(parse_real("plant.omega", s));
    cfg.omega = std::move(w);
  }
  if (auto v = take("plant.omega_max")) cfg.omega_max = parse_real("plant.omega_max", *v);

  if (auto v = take("controller.epsilon")) cfg.epsilon = parse_real("controller.epsilon", *v);
  auto dims = [](const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : detail::split_list(v)) out.push_back(parse_uint(key, s));
    return out;
  };
  if (auto v = take("controller.q")) cfg.q = dims("controller.q", *v);
  if (auto v = take("controller.h")) cfg.h = dims("controller.h", *v);
  if (auto v = take("controller.hamiltonian")) {
    try {
      cfg.ham = parse_hamiltonian_kind(*v);
    } catch (const Error&) {
      throw Error(ErrorKind::configuration, "config: key 'controller.hamiltonian' has unknown value '" + *v + "'");
    }
  }

  if (auto v = take("rollout.dt")) cfg.train.rollout.dt = parse_real("rollout.dt", *v);
  if (auto v = take("rollout.T")) cfg.train.rollout.horizon = parse_real("rollout.T", *v);
  if (auto v = take("rollout.beta")) cfg.train.rollout.beta = parse_real("rollout.beta", *v);
  if (auto v = take("rollout.normalize_by_T"))
    cfg.train.rollout.normalize_by_horizon = parse_bool("rollout.normalize_by_T", *v);

  if (auto v = take("train.epochs")) cfg.train.epochs = parse_uint("train.epochs", *v);
  if (auto v = take("train.S")) cfg.train.S = parse_uint("train.S", *v);
  if (auto v = take("train.lr")) cfg.train.lr = parse_real("train.lr", *v);
  if (auto v = take("train.seed")) cfg.train.seed = parse_uint("train.seed", *v);
  if (auto v = take("train.alpha_grad")) {
    try {
      cfg.train.alpha_grad = parse_alpha_grad(*v);
    } catch (const Error&) {
      throw Error(ErrorKind::configuration, "config: key 'train.alpha_grad' has unknown value '" + *v + "'");
    }
  }
  if (auto v = take("train.clip")) cfg.train.clip_norm = parse_real("train.clip", *v);
  if (auto v = take("train.record_wall_time")) cfg.train.record_wall_time = parse_bool("train.record_wall_time", *v);

  if (auto v = take("verify.inits")) cfg.verify_inits = parse_uint("verify.inits", *v);
  if (auto v = take("verify.probe_seed")) cfg.probe_seed = parse_uint("verify.probe_seed", *v);
  if (auto v = take("output_dir")) cfg.output_dir = *v;

  require(kv.empty(), ErrorKind::configuration,
          kv.empty() ? std::string() : "config: unknown key '" + kv.begin()->first + "'");
  cfg.validate();
  return cfg;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::configuration, "cannot read file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Everything derived from a configuration and its seed: graph, plant, masks
/// and per-node dimensions. All randomness comes from named streams of the
/// single run seed.
struct Experiment {
  RunConfig cfg;
  Graph graph;
  KuramotoPlant plant;
  BlockMask comm;
  std::vector<std::size_t> q_dims, h_dims, p_dims;

  std::uint64_t seed() const noexcept { return cfg.train.seed; }
  std::size_t q_total() const {
    std::size_t s = 0;
    for (auto q : q_dims) s += q;
    return s;
  }
};

inline Experiment make_experiment(const RunConfig& cfg) {
  cfg.validate();
  Experiment e;
  e.cfg = cfg;
  SeededRng trng(cfg.train.seed, "topology");
  e.graph = generate(cfg.topology, cfg.n, trng);

  KuramotoParams kp;
  kp.n = cfg.n;
  kp.coupling = cfg.plant_K;
  kp.adjacency = adjacency(e.graph);
  if (cfg.omega) {
    kp.omega = *cfg.omega;
  } else {
    SeededRng orng(cfg.train.seed, "omega");
    kp.omega.resize(cfg.n);
    for (double& w : kp.omega) w = orng.uniform(0.0, cfg.omega_max);
  }
  e.plant = KuramotoPlant(std::move(kp));

  switch (cfg.comm) {
    case CommPattern::same: e.comm = comm_mask(e.graph); break;
    case CommPattern::decentralized: e.comm = comm_mask(empty_graph(cfg.n)); break;
    case CommPattern::complete: e.comm = comm_mask(generate(topo::Complete{}, cfg.n, trng)); break;
  }
  e.q_dims = cfg.q_dims();
  e.h_dims = cfg.h_dims();
  e.p_dims.assign(cfg.n, 1);
  return e;
}

inline PhParams initial_params(const Experiment& e) {
  SeededRng rng(e.seed(), "params");
  return initialize_params(e.comm, e.q_dims, e.h_dims, e.p_dims, e.cfg.ham, e.cfg.epsilon, rng);
}

/// The S training initial conditions, drawn once per run.
inline std::vector<ClosedLoopState> training_inits(const Experiment& e) {
  SeededRng rng(e.seed(), "inits");
  return sample_initials(e.cfg.train.S, e.cfg.n, e.q_total(), rng);
}

/// Held-out initial conditions for simulation and verification.
inline std::vector<ClosedLoopState> holdout_inits(const Experiment& e, std::size_t count) {
  SeededRng rng(e.seed(), "holdout");
  return sample_initials(count, e.cfg.n, e.q_total(), rng);
}

}  // namespace phnet
