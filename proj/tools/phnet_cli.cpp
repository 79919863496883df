// phnet_cli: train, simulate, verify and baseline runs of distributed
// port-Hamiltonian controllers on Kuramoto networks.
//
// Exit status: 0 success, 1 configuration error, 2 numeric/divergence error,
// 3 verification failure. Failures print one line on stderr:
//   error kind=<kind> exit=<code> message="<text>"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "phnet/phnet.hpp"

namespace fs = std::filesystem;
using namespace phnet;

namespace {

struct Options {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::configuration:
    case ErrorKind::dimension:
    case ErrorKind::structure:
    case ErrorKind::parametrization: return 1;
    case ErrorKind::numeric:
    case ErrorKind::divergence:
    case ErrorKind::convergence: return 2;
    case ErrorKind::verification: return 3;
  }
  return 2;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

int fail(std::string_view kind, int code, const std::string& msg) {
  std::cerr << "error kind=" << kind << " exit=" << code << " message=\"" << one_line(msg) << "\"\n";
  return code;
}

Experiment load_experiment(const Options& o) {
  require(!o.config.empty(), ErrorKind::configuration, "--config is required");
  RunConfig cfg = load_config(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  return make_experiment(cfg);
}

fs::path output_dir(const Options& o, const Experiment& e) {
  fs::path dir = o.out.empty() ? fs::path(e.cfg.output_dir) : fs::path(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::configuration, "cannot create output directory '" + dir.string() + "'");
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::configuration, "cannot write '" + p.string() + "'");
  return f;
}

void rank_warning(const Options& o, const PhController& c) {
  const double smin = min_singular_value(c.G());
  if (smin < 1e-8 && !o.quiet) std::cerr << "warning: G_c is near rank deficient (sigma_min=" << smin << ")\n";
}

Checkpoint load_matching_checkpoint(const Options& o, const Experiment& e) {
  require(!o.checkpoint.empty(), ErrorKind::configuration, "--checkpoint is required");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  check_compatible(ck, e);
  return ck;
}

RolloutConfig double_horizon(const RolloutConfig& r) {
  RolloutConfig out = r;
  out.horizon = 2.0 * r.horizon;
  return out;
}

CertificateReport run_verify(const Experiment& e, const PhController& c) {
  VerifyOptions vo;
  vo.probe_seed = e.cfg.probe_seed;
  const auto inits = holdout_inits(e, e.cfg.verify_inits);
  return closed_loop_check(e.plant, c, inits, e.cfg.train.rollout, vo);
}

int cmd_generate_topology(const Options& o) {
  const Experiment e = load_experiment(o);
  const fs::path dir = output_dir(o, e);
  open_out(dir / "topology.txt") << to_edge_list(e.graph);
  if (!o.quiet)
    std::cout << "topology " << topology_name(e.cfg.topology) << " n=" << e.graph.n << " edges=" << e.graph.edges.size()
              << " -> " << (dir / "topology.txt").string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const Experiment e = load_experiment(o);
  const fs::path dir = output_dir(o, e);
  const auto inits = training_inits(e);
  const TrainResult res = train(e.cfg.train, e.plant, e.comm, initial_params(e), inits, [&](const EpochRecord& r) {
    if (!o.quiet && (r.epoch % 50 == 0 || r.epoch + 1 == e.cfg.train.epochs))
      std::cerr << "epoch " << r.epoch << " loss " << r.loss << " grad_norm " << r.grad_norm << '\n';
  });

  const Checkpoint ck = make_checkpoint(e, res.params);
  save_checkpoint((dir / "checkpoint.json").string(), ck);
  {
    auto f = open_out(dir / "training_log.csv");
    write_training_log_csv(f, res.log);
  }
  const PhController c = checkpoint_controller(ck);
  rank_warning(o, c);
  const auto hold = holdout_inits(e, 1);
  const RolloutConfig ext = double_horizon(e.cfg.train.rollout);
  const Trajectory tr = rollout(e.plant, c, hold[0], ext);
  {
    auto f = open_out(dir / "trajectory.csv");
    write_trajectory_csv(f, tr);
  }
  const CertificateReport rep = run_verify(e, c);
  Json rj = report_to_json(rep);
  rj["config_hash"] = ck.config_hash;
  rj["seed"] = ck.seed;
  open_out(dir / "verify_report.json") << json_text(rj);

  const double rT = tr.r[e.cfg.train.rollout.steps()];
  std::cout << "final_loss=" << res.final_loss << " r_T=" << rT << " clip_count=" << res.clip_count
            << " verdicts=" << (rep.all_pass() ? "pass" : "fail") << '\n';
  return 0;
}

int cmd_simulate(const Options& o) {
  const Experiment e = load_experiment(o);
  const Checkpoint ck = load_matching_checkpoint(o, e);
  const PhController c = checkpoint_controller(ck);
  rank_warning(o, c);
  const fs::path dir = output_dir(o, e);
  const RolloutConfig ext = double_horizon(e.cfg.train.rollout);
  const auto hold = holdout_inits(e, e.cfg.verify_inits);
  for (std::size_t k = 0; k < hold.size(); ++k) {
    const Trajectory tr = rollout(e.plant, c, hold[k], ext);
    auto f = open_out(dir / ("trajectory_" + std::to_string(k) + ".csv"));
    write_trajectory_csv(f, tr);
    if (!o.quiet)
      std::cout << "init " << k << " r_0=" << tr.r.front() << " r_T=" << tr.r[e.cfg.train.rollout.steps()]
                << " r_2T=" << tr.r.back() << '\n';
  }
  return 0;
}

int cmd_baseline(const Options& o) {
  const Experiment e = load_experiment(o);
  const fs::path dir = output_dir(o, e);
  const auto hold = holdout_inits(e, 1);
  const Vec u(e.cfg.n, 1.0);
  const PhaseTrajectory tr =
      simulate_first_order(e.plant.params(), hold[0].theta, u, e.cfg.train.rollout.dt, e.cfg.train.rollout.steps());
  auto f = open_out(dir / "baseline.csv");
  write_phase_csv(f, tr);
  if (!o.quiet)
    std::cout << "baseline r_0=" << tr.r.front() << " r_max=" << *std::max_element(tr.r.begin(), tr.r.end())
              << " r_T=" << tr.r.back() << '\n';
  return 0;
}

int cmd_verify(const Options& o) {
  const Experiment e = load_experiment(o);
  const Checkpoint ck = load_matching_checkpoint(o, e);
  const PhController c = checkpoint_controller(ck);
  rank_warning(o, c);
  const fs::path dir = output_dir(o, e);
  const CertificateReport rep = run_verify(e, c);
  Json rj = report_to_json(rep);
  rj["config_hash"] = ck.config_hash;
  rj["seed"] = ck.seed;
  open_out(dir / "verify_report.json") << json_text(rj);
  if (!o.quiet)
    for (const auto& [name, ok] : rep.verdicts) std::cout << name << ' ' << (ok ? "pass" : "FAIL") << '\n';
  if (!rep.all_pass()) {
    std::string failed;
    for (const auto& [name, ok] : rep.verdicts)
      if (!ok) failed += (failed.empty() ? "" : ",") + name;
    return fail("verification", 3, "failed verdicts: " + failed);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed port-Hamiltonian controllers for Kuramoto networks"};
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", o.config, "Run configuration file")->required();
    if (needs_checkpoint) sub->add_option("--checkpoint", o.checkpoint, "Controller checkpoint JSON")->required();
    sub->add_option("--out", o.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Run seed (overrides train.seed)");
    sub->add_flag("--quiet", o.quiet, "Suppress progress output");
  };
  auto* gen = app.add_subcommand("generate-topology", "Write the configured graph as an edge list");
  auto* tr = app.add_subcommand("train", "Train a controller and write checkpoint, log, trajectory, report");
  auto* sim = app.add_subcommand("simulate", "Roll out a stored controller to 2T");
  auto* base = app.add_subcommand("baseline", "Simulate the uncontrolled first-order network");
  auto* ver = app.add_subcommand("verify", "Certify a stored controller");
  add_common(gen, false);
  add_common(tr, false);
  add_common(sim, true);
  add_common(base, false);
  add_common(ver, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("configuration", 1, e.what());
  }

  for (auto* sub : {gen, tr, sim, base, ver})
    if (sub->parsed() && sub->count("--seed") > 0) o.seed = seed;

  try {
    if (gen->parsed()) return cmd_generate_topology(o);
    if (tr->parsed()) return cmd_train(o);
    if (sim->parsed()) return cmd_simulate(o);
    if (base->parsed()) return cmd_baseline(o);
    if (ver->parsed()) return cmd_verify(o);
  } catch (const Error& e) {
    return fail(to_string(e.kind()), exit_code(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail("numeric", 2, e.what());
  }
  return 1;
}
