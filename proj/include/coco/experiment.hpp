#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "coco/analysis.hpp"
#include "coco/config.hpp"
#include "coco/dynamics.hpp"
#include "coco/error.hpp"

namespace coco {

/// Worker count: explicit value, else COCO_PARALLELISM, else hardware threads.
inline unsigned resolve_parallelism(std::optional<unsigned> requested = std::nullopt) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("COCO_PARALLELISM")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs every seed of the ensemble on a bounded pool. Results are indexed by
/// run number, so the output does not depend on scheduling.
inline std::vector<TrajectoryRecord> run_ensemble(const ExperimentConfig& cfg, unsigned parallelism) {
  std::vector<TrajectoryRecord> records(cfg.runs);
  std::vector<std::exception_ptr> errors(cfg.runs);
  std::atomic<std::uint64_t> next{0};
  auto worker = [&] {
    for (std::uint64_t k = next++; k < cfg.runs; k = next++) {
      try {
        records[k] = run_trajectory(cfg.run_for(k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(cfg.runs)));
  {
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

struct ExperimentResult {
  explicit ExperimentResult(ExperimentConfig c) : config(std::move(c)) {}

  ExperimentConfig config;
  std::vector<TrajectoryRecord> records;
  EnsembleStats stats;
  TheoreticalConstants constants;
  BoundReport report;
  std::optional<RateFit> rate_fit;
  std::string rate_fit_error;
  ConvergenceReport convergence;
};

/// Runs the ensemble and every analysis. Throws DivergenceError naming the
/// first diverged seed.
inline ExperimentResult run_analysis(const ExperimentConfig& cfg, unsigned parallelism) {
  ExperimentResult res(cfg);
  res.records = run_ensemble(cfg, parallelism);
  for (const auto& rec : res.records) {
    if (rec.diverged_at) throw DivergenceError(rec.seed, *rec.diverged_at);
  }
  res.stats = aggregate(res.records);
  res.constants = compute_constants(cfg.run);
  res.report = check_bounds(res.stats, res.constants, cfg.run);
  try {
    res.rate_fit = fit_decay_rate(res.stats, cfg.fit_window(), cfg.rate_fit.series);
  } catch (const ValidationError& e) {
    res.rate_fit_error = e.what();
  }
  res.convergence = as_convergence_check(res.records, cfg.convergence);
  return res;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* ensemble_csv_header =
    "t,mean_residual_sq,se_residual_sq,mean_shadow_residual_sq,se_shadow,mean_U_norm_sq,se_U,"
    "mean_dist_xstar_sq,se_dist,time_avg_residual,theory_bound_last_iterate,theory_bound_time_avg";

inline std::string render_ensemble_csv(const EnsembleStats& stats, const TheoreticalConstants& c) {
  std::ostringstream os;
  os << ensemble_csv_header << "\n";
  for (const EnsembleRow& r : stats.rows) {
    os << r.t;
    for (double v : {r.residual_sq.mean, r.residual_sq.standard_error, r.shadow_residual_sq.mean,
                     r.shadow_residual_sq.standard_error, r.U_norm_sq.mean, r.U_norm_sq.standard_error,
                     r.dist_xstar_sq.mean, r.dist_xstar_sq.standard_error, r.time_avg_residual().mean,
                     last_iterate_bound(c, r.t), time_average_bound(c, r.t)}) {
      os << ',' << format_g17(v);
    }
    os << "\n";
  }
  return os.str();
}

inline constexpr const char* trajectory_csv_header =
    "t,residual_sq,shadow_residual_sq,U_norm_sq,dist_ne_sq,dist_xstar_sq,weighted_sum,"
    "shadow_weighted_sum,prefix_residual_sum";

inline std::string render_trajectory_csv(const TrajectoryRecord& rec) {
  std::ostringstream os;
  os << trajectory_csv_header << "\n";
  for (const CheckpointRow& r : rec.rows) {
    os << r.t;
    for (double v : {r.residual_sq, r.shadow_residual_sq, r.U_norm_sq, r.dist_ne_sq, r.dist_xstar_sq,
                     r.weighted_sum, r.shadow_weighted_sum, r.prefix_residual_sum}) {
      os << ',' << format_g17(v);
    }
    os << "\n";
  }
  return os.str();
}

inline json to_json(const TheoreticalConstants& c) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {
      {"regime", to_string(c.regime)},
      {"inputs",
       {{"lambda", c.inputs.lambda},
        {"sigma_affine", c.inputs.sigma},
        {"b", c.inputs.b.str()},
        {"T0", c.inputs.T0},
        {"x0_dist_sq", c.inputs.x0_dist_sq},
        {"xstar_norm_sq", c.inputs.xstar_norm_sq}}},
      {"D1", c.D1},
      {"D2", c.D2},
      {"Gamma1", c.Gamma1},
      {"Gamma2", c.Gamma2},
      {"Gamma3", c.Gamma3},
      {"Gamma4", c.Gamma4},
      {"Gamma5", c.Gamma5},
      {"Gamma6", opt(c.Gamma6)},
      {"Gamma7", opt(c.Gamma7)},
      {"Gamma8", opt(c.Gamma8)},
      {"C1", c.C1},
      {"C2", opt(c.C2)},
      {"C3", opt(c.C3)},
      {"C4", opt(c.C4)},
      {"power_series", opt(c.power_series)},
  };
}

inline json to_json(const BoundCheck& c) {
  return {{"check_name", c.check_name}, {"checkpoint", c.checkpoint}, {"estimate", c.estimate},
          {"standard_error", c.standard_error}, {"bound", c.bound}, {"pass", c.pass},
          {"status", to_string(c.status)}};
}

inline json to_json(const BoundReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks) checks.push_back(to_json(c));
  return {{"rule", "pass iff estimate - 2*standard_error <= bound"},
          {"summary",
           {{"pass", report.count(CheckStatus::Pass)},
            {"fail", report.count(CheckStatus::Fail)},
            {"inconclusive", report.count(CheckStatus::Inconclusive)}}},
          {"checks", checks}};
}

inline json rate_fit_json(const ExperimentResult& res) {
  const FitWindow w = res.config.fit_window();
  json j = {{"series", to_string(res.config.rate_fit.series)}, {"t_min", w.t_min}, {"t_max", w.t_max}};
  if (res.rate_fit) {
    j["slope"] = res.rate_fit->slope;
    j["intercept"] = res.rate_fit->intercept;
    j["r2"] = res.rate_fit->r2;
    j["points"] = res.rate_fit->points;
  } else {
    j["error"] = res.rate_fit_error;
  }
  return j;
}

/// All artifact files keyed by path relative to the output directory.
inline std::map<std::string, std::string> render_artifacts(const ExperimentResult& res) {
  std::map<std::string, std::string> files;
  const auto& emit = res.config.emit;
  files["config_resolved.json"] = to_json(res.config).dump(2) + "\n";
  if (emit.contains(Artifact::Constants)) files["constants.json"] = to_json(res.constants).dump(2) + "\n";
  if (emit.contains(Artifact::Ensemble)) files["ensemble.csv"] = render_ensemble_csv(res.stats, res.constants);
  if (emit.contains(Artifact::BoundReport)) files["bound_report.json"] = to_json(res.report).dump(2) + "\n";
  if (emit.contains(Artifact::RateFit)) files["rate_fit.json"] = rate_fit_json(res).dump(2) + "\n";
  if (emit.contains(Artifact::Trajectories)) {
    for (const auto& rec : res.records) {
      files["trajectories/seed_" + std::to_string(rec.seed) + ".csv"] = render_trajectory_csv(rec);
    }
  }
  return files;
}

/// Each file goes to a temporary sibling first and is renamed into place.
inline void write_artifacts(const std::filesystem::path& dir,
                            const std::map<std::string, std::string>& files) {
  namespace fs = std::filesystem;
  for (const auto& [name, content] : files) {
    const fs::path target = dir / name;
    fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot write '" + tmp.string() + "'");
      out << content;
      if (!out.flush()) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, target);
  }
}

inline std::string summary_text(const ExperimentResult& res) {
  std::ostringstream os;
  const auto& c = res.constants;
  os << "regime        " << to_string(c.regime) << " (b = " << c.inputs.b.str()
     << ", T0 = " << c.inputs.T0 << ", lambda = " << c.inputs.lambda << ")\n";
  os << "runs          " << res.stats.runs << ", horizon " << res.config.run.horizon << "\n";
  if (res.rate_fit) {
    os << "rate fit      slope " << res.rate_fit->slope << ", r2 " << res.rate_fit->r2 << " ("
       << to_string(res.config.rate_fit.series) << ")\n";
  } else {
    os << "rate fit      unavailable: " << res.rate_fit_error << "\n";
  }
  os << "bound checks  " << res.report.count(CheckStatus::Pass) << " pass, "
     << res.report.count(CheckStatus::Fail) << " fail, "
     << res.report.count(CheckStatus::Inconclusive) << " inconclusive\n";
  os << "convergence   " << res.convergence.fraction_passed * 100.0
     << "% of seeds reached factor " << res.config.convergence.factor << " of early distance\n";
  return os.str();
}

} // namespace coco
