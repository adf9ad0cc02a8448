// Command-line front end: simulate | identify | control | verify | reproduce.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "fkmpc/baselines.hpp"
#include "fkmpc/experiments.hpp"
#include "fkmpc/io.hpp"
#include "fkmpc/pipeline.hpp"
#include "fkmpc/selfcheck.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string task;
  int n_pendulums = -1;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double duration = -1.0;
  int n_traj = -1;
  std::string profile;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_task_positional) {
  cmd->add_option("--config", o.config_path, "run configuration file (key = value sections)");
  if (with_task_positional) {
    cmd->add_option("task", o.task, "stable | swing_up | periodic")->required();
  } else {
    cmd->add_option("--task", o.task, "stable | swing_up | periodic");
  }
  cmd->add_option("--n", o.n_pendulums, "number of pendulums");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "master seed")->each([&o](const std::string&) {
    o.seed_set = true;
  });
  cmd->add_option("--duration", o.duration, "simulated run length [s]");
  cmd->add_option("--n-traj", o.n_traj, "identification trajectories");
  cmd->add_option("--profile", o.profile, "simulation | hardware_budget");
}

fkmpc::RunConfig resolve_config(const CommonOpts& o) {
  fkmpc::RunConfig cfg;
  if (!o.config_path.empty()) {
    // the task kind selects the remaining defaults, so it has a single
    // source: the file or the flag, never both
    if (!o.task.empty()) {
      throw fkmpc::ConfigError("--task and --config are mutually exclusive; "
                               "set the kind in the config file");
    }
    std::ifstream in(o.config_path, std::ios::binary);
    if (!in) throw fkmpc::ConfigError("cannot open config file '" + o.config_path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    cfg = fkmpc::parse_config(ss.str());
  } else {
    cfg = fkmpc::default_run_config(
        fkmpc::parse_task_kind(o.task.empty() ? "stable" : o.task));
  }
  if (o.n_pendulums > 0) cfg.n_pendulums = o.n_pendulums;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.seed_set) cfg.seed = o.seed;
  if (o.duration > 0.0) cfg.duration = o.duration;
  if (o.n_traj > 0) cfg.n_traj = o.n_traj;
  if (!o.profile.empty()) {
    if (o.profile == "simulation") cfg.profile = fkmpc::MpcProfile::simulation;
    else if (o.profile == "hardware_budget") cfg.profile = fkmpc::MpcProfile::hardware_budget;
    else throw fkmpc::ConfigError("unknown profile '" + o.profile + "'");
  }
  if (const char* env = std::getenv("FK_SEED")) {
    cfg.seed = std::stoull(env);
  }
  return cfg;
}

int run_simulate(const fkmpc::RunConfig& cfg, const std::string& policy_name) {
  using namespace fkmpc;
  const TaskSpec task = to_task_spec(cfg);
  const CouplingStructure coupling = build_coupling(cfg.n_pendulums, cfg.chain);

  SimConfig sim;
  sim.control_dt = task.control_dt;
  sim.substeps_per_control = task.substeps;
  sim.duration = task.duration;
  sim.seed = task.seed;

  ChainState x0 = ChainState::Zero(2 * cfg.n_pendulums);
  Rng ic_rng(derive_seed(task.seed, kStreamRunIc));
  const double center = task.kind == TaskKind::swing_up ? M_PI : 0.0;
  for (int i = 0; i < cfg.n_pendulums; ++i) {
    x0(2 * i) = center + ic_rng.uniform(-task.ic_angle_spread, task.ic_angle_spread);
  }

  Trajectory traj;
  if (policy_name == "zero") {
    if (task.kind == TaskKind::swing_up) x0 = equilibrium(EquilibriumKind::stable, cfg.n_pendulums);
    traj = simulate(x0, [](int, double, const ChainState&) { return 0.0; }, sim, cfg.chain,
                    coupling);
  } else if (policy_name == "ident") {
    TaskSpec one = task;
    one.n_traj = 1;
    one.traj_len = sim.n_steps();
    IdentificationData data = collect_identification_data(one, cfg.chain, coupling);
    traj = std::move(data.trajectories.front());
  } else {
    throw ConfigError("unknown policy '" + policy_name + "' (zero | ident)");
  }
  traj.meta.task = to_string(task.kind);
  traj.meta.config_hash = config_hash(cfg);

  std::filesystem::create_directories(cfg.out_dir);
  const RunPaths paths{cfg.out_dir};
  write_trajectory_csv(traj, paths.trajectory());
  emit_plots(traj, cfg.out_dir, task.u_limit);
  std::cout << "wrote " << paths.trajectory() << " (" << traj.states.size() << " samples)\n";
  if (traj.meta.error) {
    std::cerr << "simulation truncated: " << traj.meta.error_message << "\n";
    return 2;
  }
  return 0;
}

void print_result(const fkmpc::TaskResult& result, const fkmpc::RunConfig& cfg) {
  const auto& rep = result.report;
  std::cout << "task " << fkmpc::to_string(cfg.task) << ", N=" << cfg.n_pendulums
            << ", seed " << cfg.seed << "\n";
  if (std::isfinite(rep.time_to_sync)) {
    std::cout << "  time to sync: " << rep.time_to_sync << " s (epsilon " << rep.epsilon
              << " rad)\n";
  } else {
    std::cout << "  time to sync: not reached (epsilon " << rep.epsilon << " rad)\n";
  }
  if (!std::isnan(rep.baseline_time_to_sync)) {
    if (std::isfinite(rep.baseline_time_to_sync)) {
      std::cout << "  uncontrolled baseline: " << rep.baseline_time_to_sync << " s\n";
    } else {
      std::cout << "  uncontrolled baseline: not reached\n";
    }
  }
  std::cout << "  max |u|: " << rep.max_abs_torque << " N m, qp warnings "
            << result.qp_warnings << "\n";
  std::cout << "  artifacts in " << cfg.out_dir << "/\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Koopman MPC synchronization toolkit for torsion-coupled pendulum chains"};
  app.require_subcommand(1);

  CommonOpts sim_opts, ident_opts, control_opts, repro_opts;
  std::string sim_policy = "zero";
  std::string predictor_path;

  auto* sim_cmd = app.add_subcommand("simulate", "open-loop or baseline-policy run");
  add_common(sim_cmd, sim_opts, false);
  sim_cmd->add_option("--policy", sim_policy, "zero | ident");

  auto* ident_cmd = app.add_subcommand("identify", "collect data and fit the lifted predictor");
  add_common(ident_cmd, ident_opts, false);

  auto* control_cmd = app.add_subcommand("control", "run a task with an existing predictor");
  add_common(control_cmd, control_opts, false);
  control_cmd->add_option("--predictor", predictor_path, "predictor artifact path");

  auto* verify_cmd = app.add_subcommand("verify", "run the invariant/oracle suite");

  auto* repro_cmd =
      app.add_subcommand("reproduce", "identify + control end-to-end from the master seed");
  add_common(repro_cmd, repro_opts, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      return run_simulate(resolve_config(sim_opts), sim_policy);
    }
    if (ident_cmd->parsed()) {
      const fkmpc::RunConfig cfg = resolve_config(ident_opts);
      fkmpc::EdmdReport rep;
      fkmpc::pipeline_identify(cfg, &rep);
      std::cout << "predictor written to " << fkmpc::RunPaths{cfg.out_dir}.predictor()
                << " (samples " << rep.n_samples << ", relative residual "
                << rep.relative_residual << ")\n";
      return 0;
    }
    if (control_cmd->parsed()) {
      const fkmpc::RunConfig cfg = resolve_config(control_opts);
      const std::string path =
          predictor_path.empty() ? fkmpc::RunPaths{cfg.out_dir}.predictor() : predictor_path;
      const fkmpc::LiftedPredictor pred = fkmpc::load_predictor(path);
      const fkmpc::TaskResult result = fkmpc::pipeline_control(cfg, pred);
      print_result(result, cfg);
      return result.trajectory.meta.error ? 2 : 0;
    }
    if (verify_cmd->parsed()) {
      const int failures = fkmpc::run_verification(std::cout);
      if (failures > 0) {
        std::cerr << failures << " verification check(s) failed\n";
        return 2;
      }
      std::cout << "all verification checks passed\n";
      return 0;
    }
    if (repro_cmd->parsed()) {
      const fkmpc::RunConfig cfg = resolve_config(repro_opts);
      const fkmpc::TaskResult result = fkmpc::pipeline_reproduce(cfg);
      print_result(result, cfg);
      return result.trajectory.meta.error ? 2 : 0;
    }
  } catch (const fkmpc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
