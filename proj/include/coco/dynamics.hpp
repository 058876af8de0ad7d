#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coco/error.hpp"
#include "coco/game.hpp"
#include "coco/noise.hpp"
#include "coco/rng.hpp"
#include "coco/schedule.hpp"
#include "coco/summation.hpp"

namespace coco {

/// Any coordinate beyond this magnitude aborts the run.
inline constexpr double divergence_threshold = 1e12;

/// {0} u {floor(10^(k/8))} u {T}, sorted and deduplicated.
inline std::vector<std::uint64_t> default_checkpoints(std::uint64_t horizon) {
  std::set<std::uint64_t> points{0, horizon};
  for (int k = 0;; ++k) {
    const double p = std::floor(std::pow(10.0, k / 8.0));
    if (p > static_cast<double>(horizon)) break;
    points.insert(static_cast<std::uint64_t>(p));
  }
  return {points.begin(), points.end()};
}

struct RunConfig {
  GameSpec game;
  NoiseModel noise;
  StepsizeSchedule schedule;
  ActionProfile x0;
  std::uint64_t horizon = 0;
  std::vector<std::uint64_t> checkpoints;
  std::uint64_t seed = 0;

  void validate() const {
    game.check_dimension(x0, "x0");
    if (!x0.allFinite()) throw ValidationError("x0 has non-finite entries");
    noise.validate();
    schedule.validate_for(game.lambda());
    if (horizon == 0) throw ValidationError("horizon must be a positive integer");
    if (checkpoints.empty() || checkpoints.front() != 0 || checkpoints.back() != horizon) {
      throw ValidationError("checkpoints must start at 0 and end at the horizon");
    }
    if (!std::is_sorted(checkpoints.begin(), checkpoints.end()) ||
        std::adjacent_find(checkpoints.begin(), checkpoints.end()) != checkpoints.end()) {
      throw ValidationError("checkpoints must be strictly increasing");
    }
  }

  /// Reference equilibrium: the projection of x0.
  ActionProfile reference_equilibrium() const { return project_to_ne(game, x0); }
};

/// x_t, the averaged noise U_t (U_0 = 0) and the last noise draw.
/// The shadow iterate z_t = x_t - U_t is derived on demand.
struct IterateState {
  std::uint64_t t = 0;
  ActionProfile x;
  Vector U;
  Vector last_M;

  static IterateState initial(const ActionProfile& x0) {
    return {0, x0, Vector::Zero(x0.size()), Vector::Zero(x0.size())};
  }

  Vector shadow() const { return x - U; }
};

namespace detail {

inline bool escaped(const Vector& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(std::abs(x(i)) <= divergence_threshold)) return true;
  }
  return false;
}

// One SGD step given v(x_t) already evaluated.
inline void advance(IterateState& state, const Vector& v, double beta, const NoiseModel& noise,
                    RngStream& rng, std::uint64_t seed) {
  sample_noise_into(noise, state.x, v, rng, state.last_M);
  state.x += beta * (v + state.last_M);
  state.U = (1.0 - beta) * state.U + beta * state.last_M;
  ++state.t;
  if (escaped(state.x)) throw DivergenceError(seed, state.t);
}

} // namespace detail

/// x' = x + beta_t (v(x) + M), U' = (1 - beta_t) U + beta_t M.
/// Throws DivergenceError when x' leaves the finite region.
inline IterateState step(IterateState state, const RunConfig& config, RngStream& rng) {
  config.game.check_dimension(state.x);
  const Vector v = evaluate_gradient(config.game, state.x);
  detail::advance(state, v, config.schedule(state.t), config.noise, rng, config.seed);
  return state;
}

/// e_t = v(x_t) - v(z_t) + U_t.
inline Vector shadow_error(const IterateState& state, const GameSpec& game) {
  return evaluate_gradient(game, state.x) - evaluate_gradient(game, state.shadow()) + state.U;
}

struct CheckpointRow {
  std::uint64_t t = 0;
  double residual_sq = 0.0;
  double shadow_residual_sq = 0.0;
  double U_norm_sq = 0.0;
  double dist_ne_sq = 0.0;
  double dist_xstar_sq = 0.0;
  /// sum_{i<=t} beta_i ||v(x_i)||^2
  double weighted_sum = 0.0;
  /// sum_{i<=t} beta_i ||v(z_i)||^2
  double shadow_weighted_sum = 0.0;
  /// sum_{i<=t} ||v(x_i)||^2
  double prefix_residual_sum = 0.0;

  bool operator==(const CheckpointRow&) const = default;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::vector<CheckpointRow> rows;
  /// Step index at which the iterate escaped, if it did.
  std::optional<std::uint64_t> diverged_at;
  /// Iterate at the final checkpoint reached.
  ActionProfile final_x;

  bool operator==(const TrajectoryRecord& other) const {
    return seed == other.seed && rows == other.rows && diverged_at == other.diverged_at &&
           final_x.size() == other.final_x.size() && final_x == other.final_x;
  }
};

/// Runs x_0 .. x_T, recording at checkpoints and accumulating the weighted
/// sums at every step. Reproducible from (config, seed) alone.
inline TrajectoryRecord run_trajectory(const RunConfig& config) {
  config.validate();
  const GameSpec& game = config.game;
  const ActionProfile x_star = config.reference_equilibrium();

  TrajectoryRecord record;
  record.seed = config.seed;
  record.rows.reserve(config.checkpoints.size());

  RngStream rng(config.seed);
  IterateState state = IterateState::initial(config.x0);
  Vector v(game.dimension());
  Vector z(game.dimension());
  Vector vz(game.dimension());
  CompensatedSum weighted, shadow_weighted, prefix;
  std::size_t next_checkpoint = 0;

  for (std::uint64_t t = 0;; ++t) {
    game.gradient_into(state.x, v);
    z = state.x - state.U;
    game.gradient_into(z, vz);
    const double residual = v.squaredNorm();
    const double shadow_residual = vz.squaredNorm();
    const double beta = config.schedule(t);
    weighted += beta * residual;
    shadow_weighted += beta * shadow_residual;
    prefix += residual;

    if (config.checkpoints[next_checkpoint] == t) {
      CheckpointRow row;
      row.t = t;
      row.residual_sq = residual;
      row.shadow_residual_sq = shadow_residual;
      row.U_norm_sq = state.U.squaredNorm();
      row.dist_ne_sq = (state.x - project_to_ne(game, state.x)).squaredNorm();
      row.dist_xstar_sq = (state.x - x_star).squaredNorm();
      row.weighted_sum = weighted.value();
      row.shadow_weighted_sum = shadow_weighted.value();
      row.prefix_residual_sum = prefix.value();
      record.rows.push_back(row);
      ++next_checkpoint;
    }
    if (t == config.horizon) break;

    try {
      detail::advance(state, v, beta, config.noise, rng, config.seed);
    } catch (const DivergenceError& err) {
      record.diverged_at = err.step();
      break;
    }
  }
  record.final_x = state.x;
  return record;
}

} // namespace coco
