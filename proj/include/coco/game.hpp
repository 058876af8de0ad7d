#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "coco/error.hpp"
#include "coco/rng.hpp"

namespace coco {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Joint action x = (x_1, ..., x_N), each block of length d.
using ActionProfile = Vector;

enum class GameKind { Quadratic, AggregatePotential };

inline const char* to_string(GameKind kind) {
  return kind == GameKind::Quadratic ? "quadratic" : "aggregate";
}

namespace tolerance {
inline constexpr double symmetry = 1e-12;
inline constexpr double zero_eigenvalue = 1e-10;
} // namespace tolerance

/// The equilibrium set {x : v(x) = 0}. For a quadratic game this is ker(Q),
/// held as an orthonormal basis; for the aggregate game it is the affine set
/// sum_n x_n = phi / gamma.
class NeSetDescriptor {
public:
  static NeSetDescriptor kernel(Matrix basis) {
    NeSetDescriptor ne;
    ne.kernel_basis_ = std::move(basis);
    return ne;
  }

  static NeSetDescriptor aggregate_sum(int players, Vector target_sum) {
    NeSetDescriptor ne;
    ne.players_ = players;
    ne.target_sum_ = std::move(target_sum);
    return ne;
  }

  bool is_kernel() const noexcept { return players_ == 0; }
  const Matrix& kernel_basis() const noexcept { return kernel_basis_; }
  const Vector& target_sum() const noexcept { return target_sum_; }

  /// Orthogonal projection onto the set.
  Vector project(const Vector& x) const {
    if (is_kernel()) {
      return kernel_basis_ * (kernel_basis_.transpose() * x);
    }
    const auto d = target_sum_.size();
    Vector excess = -target_sum_;
    for (int n = 0; n < players_; ++n) {
      excess += x.segment(n * d, d);
    }
    excess /= static_cast<double>(players_);
    Vector out = x;
    for (int n = 0; n < players_; ++n) {
      out.segment(n * d, d) -= excess;
    }
    return out;
  }

private:
  Matrix kernel_basis_;
  int players_ = 0;
  Vector target_sum_;
};

/// A co-coercive game instance. Immutable once built; construct through
/// `quadratic` or `aggregate`, which validate and fix lambda in closed form.
class GameSpec {
public:
  /// v(x) = Q x with Q symmetric negative semidefinite and not identically 0.
  static GameSpec quadratic(int players, int action_dim, const Matrix& q) {
    check_sizes(players, action_dim);
    const Eigen::Index dim = static_cast<Eigen::Index>(players) * action_dim;
    if (q.rows() != dim || q.cols() != dim) {
      std::ostringstream msg;
      msg << "interaction matrix must be " << dim << "x" << dim << ", got "
          << q.rows() << "x" << q.cols();
      throw DimensionError(msg.str());
    }
    if (!q.allFinite()) {
      throw ValidationError("interaction matrix has non-finite entries");
    }
    const double asym = (q - q.transpose()).cwiseAbs().maxCoeff();
    if (asym > tolerance::symmetry) {
      std::ostringstream msg;
      msg << "interaction matrix not symmetric (max |Q - Q^T| = " << asym << ")";
      throw ValidationError(msg.str());
    }
    GameSpec game;
    game.kind_ = GameKind::Quadratic;
    game.players_ = players;
    game.action_dim_ = action_dim;
    game.q_ = 0.5 * (q + q.transpose());

    Eigen::SelfAdjointEigenSolver<Matrix> eig(game.q_);
    const Vector& values = eig.eigenvalues();
    const double largest = values.maxCoeff();
    if (largest > tolerance::zero_eigenvalue) {
      std::ostringstream msg;
      msg << "interaction matrix not negative semidefinite (eigenvalue "
          << largest << ")";
      throw ValidationError(msg.str());
    }
    const double smallest = values.minCoeff();
    if (smallest >= -tolerance::zero_eigenvalue) {
      throw ValidationError(
          "trivial game: interaction matrix has no negative eigenvalue");
    }
    game.lambda_ = 1.0 / std::abs(smallest);

    Eigen::Index kernel_dim = 0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (std::abs(values(i)) < tolerance::zero_eigenvalue) ++kernel_dim;
    }
    Matrix basis(dim, kernel_dim);
    for (Eigen::Index i = 0, col = 0; i < dim; ++i) {
      if (std::abs(values(i)) < tolerance::zero_eigenvalue) {
        basis.col(col++) = eig.eigenvectors().col(i);
      }
    }
    game.ne_ = NeSetDescriptor::kernel(std::move(basis));
    return game;
  }

  /// u_n(x) = <phi, x_n> - (gamma/2) ||sum_m x_m||^2.
  static GameSpec aggregate(int players, int action_dim, const Vector& phi,
                            double gamma) {
    check_sizes(players, action_dim);
    if (phi.size() != action_dim) {
      throw DimensionError("phi must have length action_dim = " +
                           std::to_string(action_dim));
    }
    if (!phi.allFinite()) {
      throw ValidationError("phi has non-finite entries");
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw ValidationError("gamma must be a positive finite number");
    }
    GameSpec game;
    game.kind_ = GameKind::AggregatePotential;
    game.players_ = players;
    game.action_dim_ = action_dim;
    game.phi_ = phi;
    game.gamma_ = gamma;
    game.lambda_ = 1.0 / (gamma * players);
    game.ne_ = NeSetDescriptor::aggregate_sum(players, phi / gamma);
    return game;
  }

  GameKind kind() const noexcept { return kind_; }
  int players() const noexcept { return players_; }
  int action_dim() const noexcept { return action_dim_; }
  Eigen::Index dimension() const noexcept {
    return static_cast<Eigen::Index>(players_) * action_dim_;
  }
  /// Co-coercivity parameter: 1/|lambda_min(Q)| or 1/(gamma N).
  double lambda() const noexcept { return lambda_; }

  const Matrix& interaction() const noexcept { return q_; }
  const Vector& phi() const noexcept { return phi_; }
  double gamma() const noexcept { return gamma_; }
  const NeSetDescriptor& ne_set() const noexcept { return ne_; }

  void check_dimension(const Vector& x, const char* what = "action profile") const {
    if (x.size() != dimension()) {
      std::ostringstream msg;
      msg << what << " has length " << x.size() << ", game expects "
          << dimension() << " (N=" << players_ << ", d=" << action_dim_ << ")";
      throw DimensionError(msg.str());
    }
  }

  /// Writes v(x) into `out` without allocating when `out` is already sized.
  void gradient_into(const Vector& x, Vector& out) const {
    if (kind_ == GameKind::Quadratic) {
      out.noalias() = q_ * x;
      return;
    }
    const auto d = action_dim_;
    out.resize(x.size());
    auto head = out.segment(0, d);
    head = x.segment(0, d);
    for (int n = 1; n < players_; ++n) head += x.segment(n * d, d);
    head = phi_ - gamma_ * head;
    for (int n = 1; n < players_; ++n) out.segment(n * d, d) = head;
  }

private:
  GameSpec() = default;

  static void check_sizes(int players, int action_dim) {
    if (players < 1) throw ValidationError("players must be a positive integer");
    if (action_dim < 1) throw ValidationError("action_dim must be a positive integer");
  }

  GameKind kind_ = GameKind::Quadratic;
  int players_ = 0;
  int action_dim_ = 0;
  double lambda_ = 0.0;
  Matrix q_;
  Vector phi_;
  double gamma_ = 0.0;
  NeSetDescriptor ne_;
};

inline Vector evaluate_gradient(const GameSpec& game, const ActionProfile& x) {
  game.check_dimension(x);
  Vector out(x.size());
  game.gradient_into(x, out);
  return out;
}

inline double cocoercivity_parameter(const GameSpec& game) noexcept {
  return game.lambda();
}

inline ActionProfile project_to_ne(const GameSpec& game, const ActionProfile& x) {
  game.check_dimension(x);
  if (evaluate_gradient(game, x).isZero(0.0)) return x;
  return game.ne_set().project(x);
}

inline double distance_to_ne(const GameSpec& game, const ActionProfile& x) {
  return (x - project_to_ne(game, x)).norm();
}

/// -lambda ||v(x') - v(x)||^2 - <x' - x, v(x') - v(x)>; nonnegative for every
/// pair exactly when the game is lambda-co-coercive.
inline double cocoercivity_slack(const GameSpec& game, const Vector& x,
                                 const Vector& x_prime, double lambda) {
  const Vector dv = evaluate_gradient(game, x_prime) - evaluate_gradient(game, x);
  const Vector dx = x_prime - x;
  return -lambda * dv.squaredNorm() - dx.dot(dv);
}

struct CocoercivityReport {
  double min_slack = 0.0;
  bool holds = true;
};

struct LipschitzReport {
  double max_ratio = 0.0;
  bool holds = true;
};

namespace detail {
inline Vector sample_point(RngStream& rng, Eigen::Index dim) {
  Vector x(dim);
  for (Eigen::Index i = 0; i < dim; ++i) x(i) = 10.0 * rng.next_normal();
  return x;
}
} // namespace detail

/// Falsification test for co-coercivity over random pairs with N(0, 10^2)
/// entries. Passing is evidence, not proof. `lambda` defaults to the game's.
inline CocoercivityReport verify_cocoercivity(const GameSpec& game, std::uint64_t num_pairs,
                                              std::uint64_t rng_seed,
                                              std::optional<double> lambda = std::nullopt) {
  if (num_pairs == 0) throw ValidationError("num_pairs must be at least 1");
  const double lam = lambda.value_or(game.lambda());
  RngStream rng(rng_seed);
  CocoercivityReport report;
  report.min_slack = std::numeric_limits<double>::infinity();
  for (std::uint64_t k = 0; k < num_pairs; ++k) {
    const Vector x = detail::sample_point(rng, game.dimension());
    const Vector xp = detail::sample_point(rng, game.dimension());
    const double slack = cocoercivity_slack(game, x, xp, lam);
    report.min_slack = std::min(report.min_slack, slack);
    if (slack < -1e-9 * (1.0 + x.squaredNorm() + xp.squaredNorm())) {
      report.holds = false;
    }
  }
  return report;
}

/// Largest sampled ||v(x) - v(x')|| / ||x - x'||, checked against 1/lambda.
inline LipschitzReport lipschitz_check(const GameSpec& game, std::uint64_t num_pairs,
                                       std::uint64_t rng_seed) {
  if (num_pairs == 0) throw ValidationError("num_pairs must be at least 1");
  RngStream rng(rng_seed);
  LipschitzReport report;
  for (std::uint64_t k = 0; k < num_pairs; ++k) {
    const Vector x = detail::sample_point(rng, game.dimension());
    const Vector xp = detail::sample_point(rng, game.dimension());
    const double dx = (x - xp).norm();
    if (dx < 1e-12) continue;
    const double dv = (evaluate_gradient(game, x) - evaluate_gradient(game, xp)).norm();
    report.max_ratio = std::max(report.max_ratio, dv / dx);
  }
  report.holds = report.max_ratio <= 1.0 / game.lambda() + 1e-9;
  return report;
}

} // namespace coco
