#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "fkmpc/experiments.hpp"
#include "fkmpc/io.hpp"

namespace fkmpc {

// Artifact names inside a run's output directory.
struct RunPaths {
  std::string dir;
  std::string predictor() const { return dir + "/predictor.txt"; }
  std::string trajectory() const { return dir + "/trajectory.csv"; }
  std::string baseline_trajectory() const { return dir + "/baseline_trajectory.csv"; }
  std::string report() const { return dir + "/report.txt"; }
  std::string identification() const { return dir + "/identification.txt"; }
  std::string config() const { return dir + "/config.txt"; }
};

// Collect identification data, fit the predictor, and persist the artifact
// plus a fit summary.
inline LiftedPredictor pipeline_identify(const RunConfig& cfg, EdmdReport* report = nullptr) {
  const RunPaths paths{cfg.out_dir};
  std::filesystem::create_directories(paths.dir);
  const TaskSpec task = to_task_spec(cfg);
  const CouplingStructure coupling = build_coupling(cfg.n_pendulums, cfg.chain);

  EdmdReport rep;
  IdentificationData data;
  const LiftedPredictor pred = fit_task_predictor(task, cfg.chain, coupling, &rep, &data);
  save_predictor(pred, paths.predictor(), cfg.seed, config_hash(cfg));

  {
    std::ofstream out(paths.config(), std::ios::binary);
    out << serialize_config(cfg);
  }
  {
    std::ofstream out(paths.identification(), std::ios::binary);
    out << "fkmpc identification report\n";
    out << "task: " << to_string(cfg.task) << "\n";
    out << "n_pendulums: " << cfg.n_pendulums << "\n";
    out << "seed: " << cfg.seed << "\n";
    out << "config: " << config_hash(cfg) << "\n";
    out << "n_trajectories: " << data.trajectories.size() << "\n";
    out << "regenerated: " << data.regenerated << "\n";
    out << "n_samples: " << rep.n_samples << "\n";
    out << "residual_frobenius: " << detail::fmt_double(rep.residual_frobenius) << "\n";
    out << "relative_residual: " << detail::fmt_double(rep.relative_residual) << "\n";
    out << "gram_condition: " << detail::fmt_double(rep.gram_condition) << "\n";
    out << "rank: " << rep.rank << "\n";
    out << "rank_deficient: " << (rep.rank_deficient ? "yes" : "no") << "\n";
    out << "underdetermined: " << (rep.underdetermined ? "yes" : "no") << "\n";
  }
  if (report) *report = rep;
  return pred;
}

// Run the closed loop with a fitted predictor and persist trajectory, report
// and plots.
inline TaskResult pipeline_control(const RunConfig& cfg, const LiftedPredictor& pred) {
  const RunPaths paths{cfg.out_dir};
  std::filesystem::create_directories(paths.dir);
  const TaskSpec task = to_task_spec(cfg);
  const CouplingStructure coupling = build_coupling(cfg.n_pendulums, cfg.chain);

  TaskResult result = run_task(task, pred, cfg.chain, coupling);
  result.trajectory.meta.config_hash = config_hash(cfg);
  write_trajectory_csv(result.trajectory, paths.trajectory());
  if (!result.baseline.states.empty()) {
    result.baseline.meta.config_hash = result.trajectory.meta.config_hash;
    write_trajectory_csv(result.baseline, paths.baseline_trajectory());
  }
  write_report(result.report, result, cfg, paths.report());
  emit_plots(result.trajectory, paths.dir, task.u_limit);
  return result;
}

// identify + control end-to-end from the master seed. The control stage
// reads the predictor back from disk, so running `identify` and `control`
// separately is byte-for-byte the same as `reproduce`.
inline TaskResult pipeline_reproduce(const RunConfig& cfg) {
  pipeline_identify(cfg);
  const LiftedPredictor pred = load_predictor(RunPaths{cfg.out_dir}.predictor());
  return pipeline_control(cfg, pred);
}

}  // namespace fkmpc
