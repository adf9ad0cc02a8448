#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkmpc/edmd.hpp"
#include "fkmpc/experiments.hpp"
#include "fkmpc/integrator.hpp"

namespace fkmpc {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MpcProfile { simulation, hardware_budget };

inline const char* to_string(MpcProfile p) {
  return p == MpcProfile::simulation ? "simulation" : "hardware_budget";
}

inline int profile_horizon(MpcProfile p) {
  return p == MpcProfile::simulation ? 50 : 20;
}

// Everything one reproduction needs: task selection, chain constants,
// simulation grid, identification protocol, controller profile, output
// location and the master seed.
struct RunConfig {
  TaskKind task = TaskKind::stable_eq;
  int n_pendulums = 5;
  double epsilon = 0.05;
  double q_s = 1.0;
  double ic_angle_spread = 0.5;

  ChainParams chain;

  double control_dt = 0.005;
  int substeps = 10;
  double duration = 12.0;

  int n_traj = 200;
  int traj_len = 1000;
  double ridge = 0.0;

  MpcProfile profile = MpcProfile::simulation;
  double u_limit = 0.1;

  std::string out_dir = "out";
  std::uint64_t seed = 1;
};

inline RunConfig default_run_config(TaskKind kind) {
  RunConfig cfg;
  cfg.task = kind;
  const TaskSpec t = make_task(kind, cfg.n_pendulums, cfg.seed);
  cfg.epsilon = t.epsilon;
  cfg.duration = t.duration;
  cfg.n_traj = t.n_traj;
  cfg.traj_len = t.traj_len;
  cfg.q_s = t.q_s;
  cfg.ic_angle_spread = t.ic_angle_spread;
  return cfg;
}

inline TaskSpec to_task_spec(const RunConfig& cfg) {
  TaskSpec t = make_task(cfg.task, cfg.n_pendulums, cfg.seed);
  t.epsilon = cfg.epsilon;
  t.q_s = cfg.q_s;
  t.ic_angle_spread = cfg.ic_angle_spread;  // rate-spread protocol fields keep task defaults
  t.control_dt = cfg.control_dt;
  t.substeps = cfg.substeps;
  t.duration = cfg.duration;
  t.n_traj = cfg.n_traj;
  t.traj_len = cfg.traj_len;
  t.ridge = cfg.ridge;
  // the simulation profile keeps the per-task horizon; the hardware budget
  // caps every task at 20 steps
  if (cfg.profile == MpcProfile::hardware_budget) t.horizon = 20;
  t.u_limit = cfg.u_limit;
  return t;
}

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "stable" || s == "stable_eq") return TaskKind::stable_eq;
  if (s == "swing_up" || s == "swingup" || s == "swing-up") return TaskKind::swing_up;
  if (s == "periodic") return TaskKind::periodic;
  throw ConfigError("unknown task kind '" + s + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse number from '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("key '" + key + "': trailing junk in '" + v + "'");
  return d;
}

inline int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  const int i = static_cast<int>(std::llround(d));
  if (d != static_cast<double>(i)) throw ConfigError("key '" + key + "': expected integer");
  return i;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t u = std::stoull(v, &pos);
    if (pos != v.size()) throw ConfigError("");
    return u;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse unsigned integer from '" + v + "'");
  }
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Parses the "key = value" sectioned configuration text. Unknown sections or
// keys are rejected with the offending name; '#' starts a comment.
inline RunConfig parse_config(const std::string& text) {
  std::vector<std::pair<std::string, std::pair<std::string, std::string>>> entries;
  std::string section;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header '" + line + "'");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key in section [" + section + "]");
    entries.push_back({section, {key, value}});
  }

  // the task kind decides the defaults the remaining keys override
  TaskKind kind = TaskKind::stable_eq;
  for (const auto& [sec, kv] : entries) {
    if (sec == "task" && kv.first == "kind") kind = parse_task_kind(kv.second);
  }
  RunConfig cfg = default_run_config(kind);

  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_u64;
  for (const auto& [sec, kv] : entries) {
    const std::string& key = kv.first;
    const std::string& value = kv.second;
    if (sec == "task") {
      if (key == "kind") continue;  // handled above
      else if (key == "n_pendulums") cfg.n_pendulums = parse_int(key, value);
      else if (key == "epsilon") cfg.epsilon = parse_double(key, value);
      else if (key == "q_s") cfg.q_s = parse_double(key, value);
      else if (key == "ic_angle_spread") cfg.ic_angle_spread = parse_double(key, value);
      else throw ConfigError("unknown key '" + key + "' in section [task]");
    } else if (sec == "chain") {
      if (key == "inertia") cfg.chain.inertia = parse_double(key, value);
      else if (key == "mass") cfg.chain.mass = parse_double(key, value);
      else if (key == "rod_length") cfg.chain.rod_length = parse_double(key, value);
      else if (key == "gravity") cfg.chain.gravity = parse_double(key, value);
      else if (key == "spring_k") cfg.chain.spring_k = parse_double(key, value);
      else if (key == "spring_damping") cfg.chain.spring_damping = parse_double(key, value);
      else if (key == "pivot_damping") cfg.chain.pivot_damping = parse_double(key, value);
      else throw ConfigError("unknown key '" + key + "' in section [chain]");
    } else if (sec == "sim") {
      if (key == "control_dt") cfg.control_dt = parse_double(key, value);
      else if (key == "substeps") cfg.substeps = parse_int(key, value);
      else if (key == "duration") cfg.duration = parse_double(key, value);
      else throw ConfigError("unknown key '" + key + "' in section [sim]");
    } else if (sec == "edmd") {
      if (key == "n_traj") cfg.n_traj = parse_int(key, value);
      else if (key == "traj_len") cfg.traj_len = parse_int(key, value);
      else if (key == "ridge") cfg.ridge = parse_double(key, value);
      else throw ConfigError("unknown key '" + key + "' in section [edmd]");
    } else if (sec == "mpc") {
      if (key == "profile") {
        if (value == "simulation") cfg.profile = MpcProfile::simulation;
        else if (value == "hardware_budget") cfg.profile = MpcProfile::hardware_budget;
        else throw ConfigError("key 'profile': expected simulation|hardware_budget");
      } else if (key == "u_limit") {
        cfg.u_limit = parse_double(key, value);
      } else {
        throw ConfigError("unknown key '" + key + "' in section [mpc]");
      }
    } else if (sec == "output") {
      if (key == "dir") cfg.out_dir = value;
      else if (key == "seed") cfg.seed = parse_u64(key, value);
      else throw ConfigError("unknown key '" + key + "' in section [output]");
    } else {
      throw ConfigError("unknown section [" + sec + "]");
    }
  }
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  using detail::fmt_double;
  std::ostringstream out;
  out << "# fkmpc run configuration\n";
  out << "[task]\n";
  out << "kind = " << to_string(cfg.task) << "\n";
  out << "n_pendulums = " << cfg.n_pendulums << "\n";
  out << "epsilon = " << fmt_double(cfg.epsilon) << "\n";
  out << "q_s = " << fmt_double(cfg.q_s) << "\n";
  out << "ic_angle_spread = " << fmt_double(cfg.ic_angle_spread) << "\n";
  out << "\n[chain]\n";
  out << "inertia = " << fmt_double(cfg.chain.inertia) << "\n";
  out << "mass = " << fmt_double(cfg.chain.mass) << "\n";
  out << "rod_length = " << fmt_double(cfg.chain.rod_length) << "\n";
  out << "gravity = " << fmt_double(cfg.chain.gravity) << "\n";
  out << "spring_k = " << fmt_double(cfg.chain.spring_k) << "\n";
  out << "spring_damping = " << fmt_double(cfg.chain.spring_damping) << "\n";
  out << "pivot_damping = " << fmt_double(cfg.chain.pivot_damping) << "\n";
  out << "\n[sim]\n";
  out << "control_dt = " << fmt_double(cfg.control_dt) << "\n";
  out << "substeps = " << cfg.substeps << "\n";
  out << "duration = " << fmt_double(cfg.duration) << "\n";
  out << "\n[edmd]\n";
  out << "n_traj = " << cfg.n_traj << "\n";
  out << "traj_len = " << cfg.traj_len << "\n";
  out << "ridge = " << fmt_double(cfg.ridge) << "\n";
  out << "\n[mpc]\n";
  out << "profile = " << to_string(cfg.profile) << "\n";
  out << "u_limit = " << fmt_double(cfg.u_limit) << "\n";
  out << "\n[output]\n";
  out << "dir = " << cfg.out_dir << "\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hash of the experiment definition. The output directory is storage
// metadata, not part of the experiment, so the same run written to two
// places carries the same hash.
inline std::string config_hash(const RunConfig& cfg) {
  RunConfig keyed = cfg;
  keyed.out_dir.clear();
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_config(keyed))));
  return buf;
}

// ---------------------------------------------------------------------------
// trajectory CSV

namespace detail {

inline std::string fmt_csv(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9e", v);
  return buf;
}

}  // namespace detail

// Header t,u,phi_1,dphi_1,...,phi_N,dphi_N[,ref_phi,ref_dphi]; one row per
// control period; '#' lines carry the seed and config hash.
inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  if (traj.states.empty()) throw std::invalid_argument("write_trajectory_csv: empty trajectory");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  const int n = traj.n_pendulums();
  const bool with_ref = traj.references.size() == traj.states.size();

  out << "# fkmpc trajectory\n";
  out << "# task: " << (traj.meta.task.empty() ? "-" : traj.meta.task) << "\n";
  out << "# seed: " << traj.meta.seed << "\n";
  out << "# config: " << (traj.meta.config_hash.empty() ? "-" : traj.meta.config_hash) << "\n";
  if (traj.meta.error) out << "# error: " << traj.meta.error_message << "\n";
  out << "t,u";
  for (int i = 1; i <= n; ++i) out << ",phi_" << i << ",dphi_" << i;
  if (with_ref) out << ",ref_phi,ref_dphi";
  out << "\n";

  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    out << detail::fmt_csv(static_cast<double>(k) * traj.dt);
    out << ',' << detail::fmt_csv(k < traj.inputs.size() ? traj.inputs[k] : 0.0);
    for (int i = 0; i < 2 * n; ++i) out << ',' << detail::fmt_csv(traj.states[k](i));
    if (with_ref) {
      out << ',' << detail::fmt_csv(traj.references[k](0));
      out << ',' << detail::fmt_csv(traj.references[k](1));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_trajectory_csv: write failed for " + path);
}

inline Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_trajectory_csv: cannot open " + path);
  Trajectory traj;
  std::string line;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto set_meta = [&](const std::string& tag, std::string& dst) {
        if (line.rfind("# " + tag + ": ", 0) == 0) dst = line.substr(tag.size() + 4);
      };
      set_meta("task", traj.meta.task);
      set_meta("config", traj.meta.config_hash);
      if (line.rfind("# seed: ", 0) == 0) traj.meta.seed = std::stoull(line.substr(8));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header.empty()) {
      header = cells;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::stod(c));
    if (row.size() != header.size()) {
      throw std::runtime_error("read_trajectory_csv: ragged row in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (header.size() < 4 || header[0] != "t" || header[1] != "u") {
    throw std::runtime_error("read_trajectory_csv: unexpected header in " + path);
  }
  const bool with_ref = header.back() == "ref_dphi";
  const int n = static_cast<int>(header.size() - 2 - (with_ref ? 2 : 0)) / 2;
  if (rows.empty()) throw std::runtime_error("read_trajectory_csv: no data rows in " + path);
  traj.dt = rows.size() > 1 ? rows[1][0] - rows[0][0] : 0.005;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    ChainState x(2 * n);
    for (int i = 0; i < 2 * n; ++i) x(i) = rows[k][2 + i];
    traj.states.push_back(std::move(x));
    if (k + 1 < rows.size()) traj.inputs.push_back(rows[k][1]);
    if (with_ref) {
      traj.references.emplace_back(rows[k][2 + 2 * n], rows[k][3 + 2 * n]);
    }
  }
  return traj;
}

// ---------------------------------------------------------------------------
// predictor artifact: dimension header + row-major text blocks, full
// precision so a reloaded predictor reproduces the same control bytes.

inline void save_predictor(const LiftedPredictor& pred, const std::string& path,
                           std::uint64_t seed = 0, const std::string& config_hash = "-") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_predictor: cannot open " + path);
  out << "fkmpc-predictor v1\n";
  out << "seed " << seed << "\n";
  out << "config " << (config_hash.empty() ? "-" : config_hash) << "\n";
  out << "n_pendulums " << pred.n_pendulums << "\n";
  out << "dt " << detail::fmt_double(pred.dt) << "\n";
  const auto dump = [&out](const char* name, const Eigen::MatrixXd& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (c) out << ' ';
        out << detail::fmt_double(m(r, c));
      }
      out << '\n';
    }
  };
  dump("A", pred.A);
  dump("B", pred.B);
  dump("C", pred.C);
  if (!out) throw std::runtime_error("save_predictor: write failed for " + path);
}

inline LiftedPredictor load_predictor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_predictor: cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "fkmpc-predictor" || version != "v1") {
    throw std::runtime_error("load_predictor: bad header in " + path);
  }
  LiftedPredictor pred;
  std::string tag, skip;
  in >> tag;
  if (tag == "seed") {  // provenance lines, not needed to rebuild the predictor
    in >> skip >> tag >> skip >> tag;
  }
  in >> pred.n_pendulums;
  if (tag != "n_pendulums") throw std::runtime_error("load_predictor: malformed " + path);
  in >> tag >> pred.dt;
  if (tag != "dt") throw std::runtime_error("load_predictor: malformed " + path);
  const auto slurp = [&in, &path](const char* name) {
    std::string t;
    Eigen::Index rows = 0, cols = 0;
    in >> t >> rows >> cols;
    if (t != name || rows <= 0 || cols <= 0) {
      throw std::runtime_error("load_predictor: malformed block in " + path);
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!(in >> m(r, c))) {
          throw std::runtime_error("load_predictor: truncated block in " + path);
        }
      }
    }
    return m;
  };
  pred.A = slurp("A");
  pred.B = slurp("B");
  pred.C = slurp("C");
  if (pred.A.rows() != 6 * pred.n_pendulums || pred.C.rows() != 2 * pred.n_pendulums) {
    throw std::runtime_error("load_predictor: inconsistent dimensions in " + path);
  }
  return pred;
}

// ---------------------------------------------------------------------------
// run report

inline void write_report(const SyncReport& rep, const TaskResult& result,
                         const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report: cannot open " + path);
  const auto num = [](double v) {
    return std::isfinite(v) ? detail::fmt_double(v) : std::string("inf");
  };
  out << "fkmpc run report\n";
  out << "task: " << to_string(cfg.task) << "\n";
  out << "n_pendulums: " << cfg.n_pendulums << "\n";
  out << "seed: " << cfg.seed << "\n";
  out << "config: " << config_hash(cfg) << "\n";
  out << "duration_s: " << num(cfg.duration) << "\n";
  out << "epsilon_rad: " << num(rep.epsilon) << "\n";
  out << "time_to_sync_s: " << num(rep.time_to_sync) << "\n";
  if (!std::isnan(rep.baseline_time_to_sync)) {
    out << "baseline_time_to_sync_s: " << num(rep.baseline_time_to_sync) << "\n";
  }
  out << "terminal_angle_error_rad:";
  for (Eigen::Index i = 0; i < rep.terminal_angle_error.size(); ++i) {
    out << ' ' << num(rep.terminal_angle_error(i));
  }
  out << "\nterminal_rate_error_rad:";
  for (Eigen::Index i = 0; i < rep.terminal_rate_error.size(); ++i) {
    out << ' ' << num(rep.terminal_rate_error(i));
  }
  out << "\nmax_abs_torque_Nm: " << num(rep.max_abs_torque) << "\n";
  out << "dissipation_integral_J: " << num(rep.dissipation_integral) << "\n";
  out << "dissipation_first_5s_J: " << num(rep.dissipation_first_5s) << "\n";
  out << "dissipation_last_5s_J: " << num(rep.dissipation_last_5s) << "\n";
  out << "qp_avg_iterations: " << num(result.avg_qp_iterations) << "\n";
  out << "qp_max_wall_ms: " << num(result.max_qp_wall_ms) << "\n";
  out << "qp_warnings: " << result.qp_warnings << "\n";
  out << "simulation_error: "
      << (result.trajectory.meta.error ? result.trajectory.meta.error_message : "none")
      << "\n";
}

// ---------------------------------------------------------------------------
// SVG plots

namespace svg {

struct Series {
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  bool dashed = false;
  std::string id;
};

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
      "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors;
}

struct HLine {
  double y = 0.0;
  std::string id;
};

// Minimal self-contained line plot. Pixel origin is top-left; data are
// mapped into the margin box with 5 linear ticks per axis.
inline void write_line_plot(const std::string& path, const std::string& title,
                            const std::string& x_label, const std::string& y_label,
                            const std::vector<Series>& series,
                            const std::vector<HLine>& hlines = {},
                            const std::string& provenance = {}) {
  constexpr double width = 820, height = 420;
  constexpr double ml = 70, mr = 20, mt = 34, mb = 46;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  for (const auto& h : hlines) {
    ymin = std::min(ymin, h.y);
    ymax = std::max(ymax, h.y);
  }
  if (first) {
    xmin = ymin = 0;
    xmax = ymax = 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  const double pad = 0.06 * (ymax - ymin < 1e-12 ? 1.0 : ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  const auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  const auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return std::string(buf);
  };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_line_plot: cannot open " + path);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!provenance.empty()) out << "<!-- " << provenance << " -->\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";

  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4.0;
    const double yv = ymin + (ymax - ymin) * t / 4.0;
    out << "<line x1=\"" << px(xv) << "\" y1=\"" << py(ymin) << "\" x2=\"" << px(xv)
        << "\" y2=\"" << py(ymax) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(yv) << "\" x2=\"" << px(xmax)
        << "\" y2=\"" << py(yv) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << px(xv) << "\" y=\"" << height - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(xv)
        << "</text>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(yv)
        << "</text>\n";
  }
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << width - ml - mr
      << "\" height=\"" << height - mt - mb
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"" << height - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << height / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << height / 2 << ")\">" << y_label << "</text>\n";

  for (const auto& h : hlines) {
    out << "<line";
    if (!h.id.empty()) out << " id=\"" << h.id << "\"";
    out << " x1=\"" << px(xmin) << "\" y1=\"" << py(h.y) << "\" x2=\"" << px(xmax)
        << "\" y2=\"" << py(h.y)
        << "\" stroke=\"#888888\" stroke-width=\"1.5\" stroke-dasharray=\"2,3\"/>\n";
  }
  for (const auto& s : series) {
    out << "<polyline";
    if (!s.id.empty()) out << " id=\"" << s.id << "\"";
    out << " fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
    if (s.dashed) out << " stroke-dasharray=\"6,4\"";
    out << " points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (i) out << ' ';
      out << px(s.x[i]) << ',' << py(s.y[i]);
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

}  // namespace svg

// angles-vs-time, input-vs-time with the torque bounds drawn in, and the
// log-scale synchronization error. Plot failures are swallowed: plots are a
// convenience, never the run result.
inline bool emit_plots(const Trajectory& traj, const std::string& dir,
                       double u_bound = 0.1) try {
  if (traj.states.empty()) return false;
  const std::string provenance =
      "fkmpc seed: " + std::to_string(traj.meta.seed) + " config: " +
      (traj.meta.config_hash.empty() ? "-" : traj.meta.config_hash);
  const int n = traj.n_pendulums();
  std::vector<double> t(traj.states.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k) * traj.dt;
  const bool with_ref = traj.references.size() == traj.states.size();

  {
    std::vector<svg::Series> series;
    for (int i = 0; i < n; ++i) {
      svg::Series s;
      s.x = t;
      s.y.resize(t.size());
      for (std::size_t k = 0; k < t.size(); ++k) s.y[k] = traj.states[k](2 * i);
      s.color = svg::palette()[i % svg::palette().size()];
      s.id = "phi_" + std::to_string(i + 1);
      series.push_back(std::move(s));
    }
    if (with_ref) {
      svg::Series s;
      s.x = t;
      s.y.resize(t.size());
      for (std::size_t k = 0; k < t.size(); ++k) s.y[k] = traj.references[k](0);
      s.color = "#000000";
      s.dashed = true;
      s.id = "reference";
      series.push_back(std::move(s));
    }
    svg::write_line_plot(dir + "/angles.svg", "pendulum angles", "t [s]", "phi [rad]",
                         series, {}, provenance);
  }

  {
    svg::Series s;
    s.id = "input";
    s.color = "#1f77b4";
    for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
      s.x.push_back(static_cast<double>(k) * traj.dt);
      s.y.push_back(traj.inputs[k]);
    }
    svg::write_line_plot(dir + "/input.svg", "control torque", "t [s]", "u [N m]", {s},
                         {{u_bound, "bound_upper"}, {-u_bound, "bound_lower"}}, provenance);
  }

  if (with_ref) {
    svg::Series s;
    s.id = "sync_error";
    s.color = "#d62728";
    s.x = t;
    s.y.resize(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      double worst = 0.0;
      for (int i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(traj.states[k](2 * i) - traj.references[k](0)));
      }
      s.y[k] = std::log10(std::max(worst, 1e-9));
    }
    svg::write_line_plot(dir + "/sync_error.svg", "synchronization error",
                         "t [s]", "log10 max |phi_i - phi*| [rad]", {s}, {}, provenance);
  }
  return true;
} catch (const std::exception&) {
  return false;
}

}  // namespace fkmpc
