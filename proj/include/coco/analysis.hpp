#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "coco/dynamics.hpp"
#include "coco/error.hpp"
#include "coco/schedule.hpp"
#include "coco/summation.hpp"

namespace coco {

// ---------------------------------------------------------------------------
// Closed-form constants
// ---------------------------------------------------------------------------

/// Which last-iterate rate applies: b < 2/3, b = 2/3 or b > 2/3.
enum class Regime { Low, Critical, High };

inline const char* to_string(Regime regime) {
  switch (regime) {
  case Regime::Low: return "low";
  case Regime::Critical: return "critical";
  case Regime::High: return "high";
  }
  return "low";
}

inline Regime regime_of(const Rational& b) {
  const int c = b.compare(2, 3);
  return c < 0 ? Regime::Low : (c == 0 ? Regime::Critical : Regime::High);
}

/// Scalars the constants depend on. Kept separate from RunConfig so that the
/// formulas can be evaluated (and cross-checked) without building a game.
struct ConstantInputs {
  double lambda = 0.0;
  /// sigma of an affine bound E||M||^2 <= sigma^2 (1 + ||x||^2) that the
  /// configured noise satisfies.
  double sigma = 0.0;
  Rational b;
  double T0 = 1.0;
  double x0_dist_sq = 0.0;  // ||x0 - x*||^2
  double xstar_norm_sq = 0.0;  // ||x*||^2
  double D1 = 0.0;  // upper bound on sum_t beta_t^2
};

struct TheoreticalConstants {
  ConstantInputs inputs;
  Regime regime = Regime::Low;
  double D1 = 0.0;
  double D2 = 0.0;
  double Gamma1 = 0.0;
  double Gamma2 = 0.0;
  double Gamma3 = 0.0;
  double Gamma4 = 0.0;
  double Gamma5 = 0.0;
  std::optional<double> Gamma6;
  std::optional<double> Gamma7;
  std::optional<double> Gamma8;
  double C1 = 0.0;
  std::optional<double> C2;
  std::optional<double> C3;
  std::optional<double> C4;
  /// sum_{j>=0} (j+1)^(1-3b), populated for b > 2/3.
  std::optional<double> power_series;
};

/// Upper bound on sum_{j>=0} (j+1)^p for p < -1: explicit terms j <= K plus
/// the integral tail (K+1)^(p+1) / -(p+1).
inline double power_series_upper_bound(double p, std::uint64_t explicit_terms = 1'000'000) {
  if (!(p < -1.0)) throw ValidationError("power series diverges for exponent >= -1");
  CompensatedSum sum;
  for (std::uint64_t j = 0; j <= explicit_terms; ++j) {
    sum += std::pow(static_cast<double>(j) + 1.0, p);
  }
  const double k1 = static_cast<double>(explicit_terms) + 1.0;
  return sum.value() + std::pow(k1, p + 1.0) / -(p + 1.0);
}

inline TheoreticalConstants compute_constants(const ConstantInputs& in) {
  TheoreticalConstants c;
  c.inputs = in;
  c.regime = regime_of(in.b);
  const double lam = in.lambda;
  const double s2 = in.sigma * in.sigma;
  const double b = in.b.value();
  const double D1 = in.D1;
  c.D1 = D1;

  c.Gamma1 = std::exp(2.0 * s2 * D1) * (in.x0_dist_sq + s2 * (1.0 + 2.0 * in.xstar_norm_sq) * D1);
  c.Gamma2 = (in.x0_dist_sq + s2 * D1 * (1.0 + 2.0 * in.xstar_norm_sq + 2.0 * c.Gamma1)) / lam;
  c.D2 = s2 * (1.0 + 2.0 * c.Gamma1 + 2.0 * in.xstar_norm_sq);
  c.Gamma3 = 2.0 * c.D2;
  c.Gamma4 = 2.0 * c.Gamma2 + 2.0 * c.Gamma3 * D1 / (lam * lam);
  const double inv = 1.0 + 1.0 / lam;
  c.Gamma5 = inv * inv * c.Gamma3 / lam;

  const double t0b = std::pow(in.T0, b);
  c.C1 = c.Gamma2 * t0b;
  const double noise_term = 2.0 * c.Gamma3 / (lam * lam);
  switch (c.regime) {
  case Regime::Low:
    c.Gamma6 = c.Gamma4 * t0b + c.Gamma5 * t0b / ((1.0 - b) * (2.0 - 3.0 * b));
    c.C2 = 2.0 * *c.Gamma6 + noise_term;
    break;
  case Regime::Critical: {
    const double t0_23 = std::pow(in.T0, 2.0 / 3.0);
    c.Gamma7 = c.Gamma4 * t0_23 / std::numbers::ln2 + 6.0 * c.Gamma5 * t0_23;
    c.C3 = 2.0 * *c.Gamma7 + noise_term;
    break;
  }
  case Regime::High:
    c.power_series = power_series_upper_bound(1.0 - 3.0 * b);
    c.Gamma8 = c.Gamma4 * t0b + (c.Gamma5 * t0b / (1.0 - b)) * *c.power_series;
    c.C4 = 2.0 * *c.Gamma8 + noise_term;
    break;
  }
  return c;
}

/// sigma for the affine form implied by each noise model. Absolute noise is
/// affine with the same sigma; relative noise tau ||v(x)||^2 is bounded via
/// ||v(x)|| <= ||x - x*|| / lambda and ||x - x*||^2 <= 2||x||^2 + 2||x*||^2.
inline double effective_affine_sigma(const NoiseModel& noise, double lambda, double xstar_norm_sq) {
  switch (noise.kind) {
  case NoiseKind::Affine:
  case NoiseKind::Absolute: return noise.sigma;
  case NoiseKind::Relative:
    return std::sqrt(2.0 * noise.tau * std::max(1.0, xstar_norm_sq)) / lambda;
  }
  return noise.sigma;
}

inline ConstantInputs constant_inputs(const RunConfig& config) {
  const ActionProfile x_star = config.reference_equilibrium();
  ConstantInputs in;
  in.lambda = config.game.lambda();
  in.xstar_norm_sq = x_star.squaredNorm();
  in.sigma = effective_affine_sigma(config.noise, in.lambda, in.xstar_norm_sq);
  in.b = config.schedule.exponent();
  in.T0 = config.schedule.T0();
  in.x0_dist_sq = (config.x0 - x_star).squaredNorm();
  in.D1 = config.schedule.d1_upper_bound();
  return in;
}

inline TheoreticalConstants compute_constants(const RunConfig& config) {
  return compute_constants(constant_inputs(config));
}

/// Shape factor g(t) of the last-iterate rate, so that bound = constant * g(t).
inline double last_iterate_shape(Regime regime, double b, std::uint64_t t) {
  const double tp1 = static_cast<double>(t) + 1.0;
  switch (regime) {
  case Regime::Low: return std::pow(tp1, -(2.0 * b - 1.0));
  case Regime::Critical: return std::log(tp1) / std::cbrt(tp1);
  case Regime::High: return std::pow(tp1, -(1.0 - b));
  }
  return 0.0;
}

/// C2, C3 or C4 times the regime's rate.
inline double last_iterate_bound(const TheoreticalConstants& c, std::uint64_t t) {
  const double k = c.regime == Regime::Low ? *c.C2 : (c.regime == Regime::Critical ? *c.C3 : *c.C4);
  return k * last_iterate_shape(c.regime, c.inputs.b.value(), t);
}

/// Gamma6, Gamma7 or Gamma8 times the regime's rate.
inline double shadow_last_iterate_bound(const TheoreticalConstants& c, std::uint64_t t) {
  const double k = c.regime == Regime::Low ? *c.Gamma6
                                           : (c.regime == Regime::Critical ? *c.Gamma7 : *c.Gamma8);
  return k * last_iterate_shape(c.regime, c.inputs.b.value(), t);
}

/// C1 / (t+1)^(1-b).
inline double time_average_bound(const TheoreticalConstants& c, std::uint64_t t) {
  return c.C1 * std::pow(static_cast<double>(t) + 1.0, -(1.0 - c.inputs.b.value()));
}

// ---------------------------------------------------------------------------
// Ensemble statistics
// ---------------------------------------------------------------------------

struct Estimate {
  double mean = 0.0;
  /// sample stdev / sqrt(runs); 0 for a single run.
  double standard_error = 0.0;
};

struct EnsembleRow {
  std::uint64_t t = 0;
  Estimate residual_sq;
  Estimate shadow_residual_sq;
  Estimate U_norm_sq;
  Estimate dist_ne_sq;
  Estimate dist_xstar_sq;
  Estimate weighted_sum;
  Estimate shadow_weighted_sum;
  Estimate prefix_residual_sum;

  /// prefix_residual_sum / (t + 1).
  Estimate time_avg_residual() const {
    const double n = static_cast<double>(t) + 1.0;
    return {prefix_residual_sum.mean / n, prefix_residual_sum.standard_error / n};
  }
};

struct EnsembleStats {
  std::size_t runs = 0;
  std::vector<EnsembleRow> rows;
};

namespace detail {

// Sorting first makes the result independent of record order, bit for bit.
inline Estimate estimate(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  CompensatedSum sum;
  for (double v : values) sum += v;
  const double mean = sum.value() / n;
  if (values.size() < 2) return {mean, 0.0};
  CompensatedSum sq;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq.value() / (n - 1.0)) / std::sqrt(n)};
}

} // namespace detail

inline EnsembleStats aggregate(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) throw ValidationError("aggregate: no records");
  const auto& first = records.front().rows;
  for (const auto& rec : records) {
    if (rec.diverged_at) {
      throw ValidationError("aggregate: run with seed " + std::to_string(rec.seed) +
                            " diverged at step " + std::to_string(*rec.diverged_at));
    }
    if (rec.rows.size() != first.size()) {
      throw ValidationError("aggregate: records have mismatched checkpoints");
    }
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (rec.rows[i].t != first[i].t) {
        throw ValidationError("aggregate: records have mismatched checkpoints");
      }
    }
  }

  EnsembleStats stats;
  stats.runs = records.size();
  stats.rows.resize(first.size());
  std::vector<double> column(records.size());
  auto fill = [&](std::size_t i, double CheckpointRow::*field) {
    for (std::size_t r = 0; r < records.size(); ++r) column[r] = records[r].rows[i].*field;
    return detail::estimate(column);
  };
  for (std::size_t i = 0; i < first.size(); ++i) {
    EnsembleRow& row = stats.rows[i];
    row.t = first[i].t;
    row.residual_sq = fill(i, &CheckpointRow::residual_sq);
    row.shadow_residual_sq = fill(i, &CheckpointRow::shadow_residual_sq);
    row.U_norm_sq = fill(i, &CheckpointRow::U_norm_sq);
    row.dist_ne_sq = fill(i, &CheckpointRow::dist_ne_sq);
    row.dist_xstar_sq = fill(i, &CheckpointRow::dist_xstar_sq);
    row.weighted_sum = fill(i, &CheckpointRow::weighted_sum);
    row.shadow_weighted_sum = fill(i, &CheckpointRow::shadow_weighted_sum);
    row.prefix_residual_sum = fill(i, &CheckpointRow::prefix_residual_sum);
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Bound checks
// ---------------------------------------------------------------------------

enum class CheckStatus { Pass, Fail, Inconclusive };

inline const char* to_string(CheckStatus s) {
  switch (s) {
  case CheckStatus::Pass: return "pass";
  case CheckStatus::Fail: return "fail";
  case CheckStatus::Inconclusive: return "inconclusive";
  }
  return "fail";
}

/// One estimate compared with one bound at one checkpoint.
///
/// pass = estimate - 2 SE <= bound. The status refines this: "fail" when the
/// lower 2-SE limit exceeds the bound, "pass" when even estimate + 2 SE is
/// within it, and "inconclusive" when the bound falls inside the 2-SE band or
/// the rate's shape factor is zero at t (log(t+1) = 0 at t = 0).
struct BoundCheck {
  std::string check_name;
  std::uint64_t checkpoint = 0;
  double estimate = 0.0;
  double standard_error = 0.0;
  double bound = 0.0;
  bool pass = false;
  CheckStatus status = CheckStatus::Fail;
};

struct BoundReport {
  std::vector<BoundCheck> checks;

  std::size_t count(CheckStatus s) const {
    return static_cast<std::size_t>(std::count_if(
        checks.begin(), checks.end(), [s](const BoundCheck& c) { return c.status == s; }));
  }
  bool all_conclusive_pass() const { return count(CheckStatus::Fail) == 0; }
};

namespace check_names {
inline constexpr const char* time_average = "time_average_residual";
inline constexpr const char* last_iterate = "last_iterate_residual";
inline constexpr const char* iterate_distance = "iterate_distance";
inline constexpr const char* weighted_sum = "weighted_residual_sum";
inline constexpr const char* averaged_noise = "averaged_noise";
inline constexpr const char* shadow_weighted_sum = "shadow_weighted_sum";
inline constexpr const char* shadow_last_iterate = "shadow_last_iterate";
} // namespace check_names

inline BoundCheck make_check(std::string name, std::uint64_t t, Estimate est, double bound,
                             bool degenerate = false) {
  BoundCheck c;
  c.check_name = std::move(name);
  c.checkpoint = t;
  c.estimate = est.mean;
  c.standard_error = est.standard_error;
  c.bound = bound;
  c.pass = est.mean - 2.0 * est.standard_error <= bound;
  if (degenerate) {
    c.status = CheckStatus::Inconclusive;
  } else if (!c.pass) {
    c.status = CheckStatus::Fail;
  } else if (est.mean + 2.0 * est.standard_error > bound) {
    c.status = CheckStatus::Inconclusive;
  } else {
    c.status = CheckStatus::Pass;
  }
  return c;
}

/// Compares every ensemble estimate against its closed-form bound at every
/// checkpoint: time-average and last-iterate residuals, iterate distance,
/// the two weighted sums, averaged noise, and the shadow last iterate.
inline BoundReport check_bounds(const EnsembleStats& stats, const TheoreticalConstants& c,
                                const StepsizeSchedule& schedule) {
  BoundReport report;
  report.checks.reserve(stats.rows.size() * 7);
  const bool critical = c.regime == Regime::Critical;
  for (const EnsembleRow& row : stats.rows) {
    const std::uint64_t t = row.t;
    const bool degenerate_rate = critical && t == 0;
    report.checks.push_back(make_check(check_names::time_average, t, row.time_avg_residual(),
                                       time_average_bound(c, t)));
    report.checks.push_back(make_check(check_names::last_iterate, t, row.residual_sq,
                                       last_iterate_bound(c, t), degenerate_rate));
    report.checks.push_back(
        make_check(check_names::iterate_distance, t, row.dist_xstar_sq, c.Gamma1));
    report.checks.push_back(
        make_check(check_names::weighted_sum, t, row.weighted_sum, c.Gamma2));
    report.checks.push_back(
        make_check(check_names::averaged_noise, t, row.U_norm_sq, c.Gamma3 * schedule(t)));
    report.checks.push_back(
        make_check(check_names::shadow_weighted_sum, t, row.shadow_weighted_sum, c.Gamma4));
    report.checks.push_back(make_check(check_names::shadow_last_iterate, t,
                                       row.shadow_residual_sq, shadow_last_iterate_bound(c, t),
                                       degenerate_rate));
  }
  return report;
}

inline BoundReport check_bounds(const EnsembleStats& stats, const TheoreticalConstants& c,
                                const RunConfig& config) {
  return check_bounds(stats, c, config.schedule);
}

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

enum class Series {
  ResidualSq,
  ShadowResidualSq,
  UNormSq,
  DistNeSq,
  DistXstarSq,
  TimeAvgResidual,
};

inline const char* to_string(Series s) {
  switch (s) {
  case Series::ResidualSq: return "mean_residual_sq";
  case Series::ShadowResidualSq: return "mean_shadow_residual_sq";
  case Series::UNormSq: return "mean_U_norm_sq";
  case Series::DistNeSq: return "mean_dist_ne_sq";
  case Series::DistXstarSq: return "mean_dist_xstar_sq";
  case Series::TimeAvgResidual: return "time_avg_residual";
  }
  return "mean_residual_sq";
}

inline double series_value(const EnsembleRow& row, Series s) {
  switch (s) {
  case Series::ResidualSq: return row.residual_sq.mean;
  case Series::ShadowResidualSq: return row.shadow_residual_sq.mean;
  case Series::UNormSq: return row.U_norm_sq.mean;
  case Series::DistNeSq: return row.dist_ne_sq.mean;
  case Series::DistXstarSq: return row.dist_xstar_sq.mean;
  case Series::TimeAvgResidual: return row.time_avg_residual().mean;
  }
  return 0.0;
}

struct FitWindow {
  std::uint64_t t_min = 0;
  std::uint64_t t_max = 0;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// OLS of log(y) on log(t+1) over (t, y) pairs.
inline RateFit fit_log_log(const std::vector<std::pair<std::uint64_t, double>>& points) {
  if (points.size() < 4) {
    throw ValidationError("rate fit needs at least 4 checkpoints in the window, got " +
                          std::to_string(points.size()));
  }
  std::vector<double> xs, ys;
  for (const auto& [t, y] : points) {
    if (!(y > 0.0)) {
      throw ValidationError("rate fit: nonpositive estimate at t = " + std::to_string(t) +
                            "; enlarge the ensemble or the window");
    }
    xs.push_back(std::log(static_cast<double>(t) + 1.0));
    ys.push_back(std::log(y));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  RateFit fit;
  fit.points = xs.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += r * r;
  }
  // A flat series is fit exactly by slope 0.
  fit.r2 = syy <= 1e-300 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

inline RateFit fit_decay_rate(const EnsembleStats& stats, FitWindow window, Series series) {
  std::vector<std::pair<std::uint64_t, double>> points;
  for (const EnsembleRow& row : stats.rows) {
    if (row.t >= window.t_min && row.t <= window.t_max) {
      points.emplace_back(row.t, series_value(row, series));
    }
  }
  return fit_log_log(points);
}

// ---------------------------------------------------------------------------
// Almost-sure convergence proxy
// ---------------------------------------------------------------------------

struct ConvergenceCriterion {
  /// Checkpoints t <= early_t_max form the early window.
  std::uint64_t early_t_max = 10;
  /// Final dist_ne_sq must be at most factor * (early-window minimum).
  double factor = 0.25;
};

struct SeedConvergence {
  std::uint64_t seed = 0;
  double early_min = 0.0;
  double final_value = 0.0;
  bool passed = false;
  /// Median over the later half of checkpoints <= median over the earlier half.
  bool median_decrease = false;
  bool strictly_decreasing = false;
};

struct ConvergenceReport {
  std::vector<SeedConvergence> seeds;
  double fraction_passed = 0.0;
  double fraction_median_decrease = 0.0;
  double fraction_strictly_decreasing = 0.0;
};

namespace detail {
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
} // namespace detail

inline ConvergenceReport as_convergence_check(const std::vector<TrajectoryRecord>& records,
                                              ConvergenceCriterion criterion = {}) {
  ConvergenceReport report;
  std::size_t passed = 0, median_ok = 0, strict = 0;
  for (const TrajectoryRecord& rec : records) {
    SeedConvergence sc;
    sc.seed = rec.seed;
    if (rec.rows.empty() || rec.diverged_at) {
      report.seeds.push_back(sc);
      continue;
    }
    std::vector<double> d;
    sc.early_min = std::numeric_limits<double>::infinity();
    for (const CheckpointRow& row : rec.rows) {
      d.push_back(row.dist_ne_sq);
      if (row.t <= criterion.early_t_max) sc.early_min = std::min(sc.early_min, row.dist_ne_sq);
    }
    sc.final_value = d.back();
    sc.passed = sc.final_value <= criterion.factor * sc.early_min;
    const std::size_t half = d.size() / 2;
    if (half > 0) {
      sc.median_decrease = detail::median({d.begin() + static_cast<std::ptrdiff_t>(d.size() - half), d.end()}) <=
                           detail::median({d.begin(), d.begin() + static_cast<std::ptrdiff_t>(half)});
    }
    sc.strictly_decreasing = d.size() > 1;
    for (std::size_t i = 1; i < d.size(); ++i) {
      if (!(d[i] < d[i - 1])) sc.strictly_decreasing = false;
    }
    passed += sc.passed;
    median_ok += sc.median_decrease;
    strict += sc.strictly_decreasing;
    report.seeds.push_back(sc);
  }
  if (!records.empty()) {
    const double n = static_cast<double>(records.size());
    report.fraction_passed = static_cast<double>(passed) / n;
    report.fraction_median_decrease = static_cast<double>(median_ok) / n;
    report.fraction_strictly_decreasing = static_cast<double>(strict) / n;
  }
  return report;
}

} // namespace coco
