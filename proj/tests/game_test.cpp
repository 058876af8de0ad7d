#include "coco/game.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace coco;

namespace {

Matrix two_player_q() {
  Matrix q(2, 2);
  q << -1, -1, -1, -1;
  return q;
}

GameSpec two_player() { return GameSpec::quadratic(2, 1, two_player_q()); }

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Random symmetric NSD matrix -A^T A with rank deficiency so ker(Q) != {0}.
Matrix random_nsd(Eigen::Index dim, std::mt19937_64& gen) {
  std::normal_distribution<double> n01;
  const Eigen::Index rank = std::max<Eigen::Index>(1, dim - 1 - dim / 3);
  Matrix a(rank, dim);
  for (Eigen::Index r = 0; r < rank; ++r)
    for (Eigen::Index c = 0; c < dim; ++c) a(r, c) = n01(gen);
  Matrix q = -a.transpose() * a;
  return 0.5 * (q + q.transpose());
}

std::vector<GameSpec> game_grid() {
  std::vector<GameSpec> games;
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n01;
  for (int n : {2, 5, 10}) {
    for (int d : {1, 3}) {
      games.push_back(GameSpec::quadratic(n, d, random_nsd(n * d, gen)));
      Vector phi(d);
      for (int i = 0; i < d; ++i) phi(i) = n01(gen);
      games.push_back(GameSpec::aggregate(n, d, phi, 0.5 + std::abs(n01(gen))));
    }
  }
  return games;
}

} // namespace

TEST(Gradient, QuadraticExamples) {
  const auto game = two_player();
  EXPECT_TRUE(evaluate_gradient(game, vec({1, -1})).isZero(0.0));
  const Vector g = evaluate_gradient(game, vec({1, 0}));
  EXPECT_DOUBLE_EQ(g(0), -1.0);
  EXPECT_DOUBLE_EQ(g(1), -1.0);
}

TEST(Gradient, AggregateAtEquilibrium) {
  const auto game = GameSpec::aggregate(2, 1, vec({1}), 1.0);
  EXPECT_TRUE(evaluate_gradient(game, vec({0.5, 0.5})).isZero(0.0));
}

TEST(Gradient, AggregateBlocksAreIdentical) {
  const auto game = GameSpec::aggregate(3, 2, vec({1, -2}), 0.5);
  const Vector x = vec({1, 2, 3, 4, 5, 6});
  const Vector g = evaluate_gradient(game, x);
  // sum x_m = (9, 12); v_n = phi - gamma * sum = (1 - 4.5, -2 - 6)
  for (int n = 0; n < 3; ++n) {
    EXPECT_DOUBLE_EQ(g(2 * n), -3.5);
    EXPECT_DOUBLE_EQ(g(2 * n + 1), -8.0);
  }
}

TEST(Gradient, DimensionMismatchThrows) {
  EXPECT_THROW(evaluate_gradient(two_player(), vec({1, 2, 3})), DimensionError);
  EXPECT_THROW(project_to_ne(two_player(), vec({1})), DimensionError);
}

TEST(Gradient, QuadraticIsLinear) {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> n01;
  for (const auto& game : game_grid()) {
    if (game.kind() != GameKind::Quadratic) continue;
    for (int rep = 0; rep < 50; ++rep) {
      Vector x(game.dimension()), y(game.dimension());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        x(i) = n01(gen);
        y(i) = n01(gen);
      }
      const double a = n01(gen), b = n01(gen);
      const Vector lhs = evaluate_gradient(game, a * x + b * y);
      const Vector rhs = a * evaluate_gradient(game, x) + b * evaluate_gradient(game, y);
      EXPECT_LE((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-10);
    }
  }
}

TEST(Cocoercivity, ClosedForms) {
  EXPECT_NEAR(cocoercivity_parameter(two_player()), 0.5, 1e-14);
  EXPECT_DOUBLE_EQ(cocoercivity_parameter(GameSpec::aggregate(2, 1, vec({1}), 1.0)), 0.5);
  EXPECT_NEAR(cocoercivity_parameter(GameSpec::quadratic(2, 1, -Matrix::Identity(2, 2))), 1.0, 1e-14);
  EXPECT_DOUBLE_EQ(cocoercivity_parameter(GameSpec::aggregate(3, 2, vec({1, 1}), 1.0)), 1.0 / 3.0);
}

TEST(Cocoercivity, InvalidMatrices) {
  EXPECT_THROW(GameSpec::quadratic(2, 1, Matrix::Zero(2, 2)), ValidationError);
  try {
    GameSpec::quadratic(2, 1, Matrix::Zero(2, 2));
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("trivial game"), std::string::npos);
  }

  Matrix indefinite(2, 2);
  indefinite << 0.1, 0, 0, -1;
  try {
    GameSpec::quadratic(2, 1, indefinite);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("not negative semidefinite"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("0.1"), std::string::npos);
  }

  Matrix asym(2, 2);
  asym << -1, -1, -0.9, -1;
  EXPECT_THROW(GameSpec::quadratic(2, 1, asym), ValidationError);
  EXPECT_THROW(GameSpec::quadratic(2, 1, Matrix::Zero(3, 3)), DimensionError);
  EXPECT_THROW(GameSpec::aggregate(2, 1, vec({1}), 0.0), ValidationError);
  EXPECT_THROW(GameSpec::aggregate(2, 2, vec({1}), 1.0), DimensionError);
}

TEST(Cocoercivity, TinyAsymmetryIsSymmetrized) {
  Matrix q = two_player_q();
  q(0, 1) += 5e-13;
  const auto game = GameSpec::quadratic(2, 1, q);
  EXPECT_EQ(game.interaction(), game.interaction().transpose());
}

TEST(Projection, Examples) {
  const auto game = two_player();
  Vector p = project_to_ne(game, vec({1, -1}));
  EXPECT_NEAR(p(0), 1.0, 1e-15);
  EXPECT_NEAR(p(1), -1.0, 1e-15);
  p = project_to_ne(game, vec({1, 1}));
  EXPECT_NEAR(p(0), 0.0, 1e-15);
  EXPECT_NEAR(p(1), 0.0, 1e-15);

  const auto agg = GameSpec::aggregate(2, 1, vec({1}), 1.0);
  p = project_to_ne(agg, vec({0, 0}));
  EXPECT_DOUBLE_EQ(p(0), 0.5);
  EXPECT_DOUBLE_EQ(p(1), 0.5);
}

TEST(Projection, Distances) {
  EXPECT_NEAR(distance_to_ne(two_player(), vec({1, -1})), 0.0, 1e-15);
  EXPECT_NEAR(distance_to_ne(two_player(), vec({1, 1})), std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(distance_to_ne(GameSpec::aggregate(2, 1, vec({1}), 1.0), vec({0, 0})),
              1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Projection, LandsOnEquilibriaAndIsIdempotent) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n01;
  for (const auto& game : game_grid()) {
    for (int rep = 0; rep < 1000; ++rep) {
      Vector x(game.dimension());
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 10.0 * n01(gen);
      const Vector p = project_to_ne(game, x);
      EXPECT_LE(evaluate_gradient(game, p).norm(), 1e-9 * (1.0 + x.norm()));
      EXPECT_LE((project_to_ne(game, p) - p).norm(), 1e-12 * (1.0 + p.norm()));
      // residual of an orthogonal projection onto an affine set
      EXPECT_NEAR(distance_to_ne(game, x), (x - p).norm(), 1e-12 * (1.0 + x.norm()));
    }
  }
}

TEST(Cocoercivity, SlackVanishesOnIdenticalPoints) {
  const Vector x = vec({3, -7});
  EXPECT_EQ(cocoercivity_slack(two_player(), x, x, 0.5), 0.0);
}

TEST(Cocoercivity, SampledCheckAcrossGrid) {
  for (const auto& game : game_grid()) {
    const auto report = verify_cocoercivity(game, 10'000, 42);
    EXPECT_TRUE(report.holds) << to_string(game.kind()) << " N=" << game.players()
                              << " d=" << game.action_dim() << " min_slack=" << report.min_slack;
  }
  EXPECT_TRUE(verify_cocoercivity(two_player(), 10'000, 1).holds);
}

TEST(Cocoercivity, OversizedLambdaIsRejected) {
  const auto report = verify_cocoercivity(two_player(), 10'000, 1, 10.0);
  EXPECT_FALSE(report.holds);
  EXPECT_LT(report.min_slack, 0.0);
}

TEST(Lipschitz, Examples) {
  const auto q = lipschitz_check(two_player(), 10'000, 5);
  EXPECT_TRUE(q.holds);
  EXPECT_LE(q.max_ratio, 2.0 + 1e-9);

  const auto id = GameSpec::quadratic(2, 1, -Matrix::Identity(2, 2));
  const auto r = lipschitz_check(id, 1000, 5);
  EXPECT_DOUBLE_EQ(r.max_ratio, 1.0);

  const auto agg = lipschitz_check(GameSpec::aggregate(2, 1, vec({1}), 1.0), 10'000, 5);
  EXPECT_TRUE(agg.holds);
  EXPECT_LE(agg.max_ratio, 2.0 + 1e-9);
}

TEST(Lipschitz, HoldsAcrossGrid) {
  for (const auto& game : game_grid()) {
    EXPECT_TRUE(lipschitz_check(game, 10'000, 9).holds);
  }
}
