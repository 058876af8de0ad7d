#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>

#include "coco/error.hpp"
#include "coco/summation.hpp"

namespace coco {

/// Exact p/q with q > 0 and gcd(p, q) = 1. The stepsize exponent is held this
/// way so the regime split at 2/3 is an exact comparison.
class Rational {
public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw ValidationError("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num, den);
    num_ = num / g;
    den_ = den / g;
  }

  /// Best rational approximation via continued fractions, accepted only when
  /// it reproduces the double to within a few ulps. 0.6666666666666666 maps to
  /// 2/3, while 0.6667 stays 6667/10000.
  static Rational from_double(double value) {
    if (!std::isfinite(value)) throw ValidationError("exponent must be finite");
    const double target = value;
    const double tol = 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value));
    std::int64_t h_prev = 1, h = static_cast<std::int64_t>(std::floor(value));
    std::int64_t k_prev = 0, k = 1;
    double frac = value - std::floor(value);
    for (int iter = 0; iter < 64; ++iter) {
      if (std::abs(static_cast<double>(h) / static_cast<double>(k) - target) <= tol) break;
      if (frac == 0.0) break;
      const double inv = 1.0 / frac;
      const double a_d = std::floor(inv);
      if (a_d > 1e12) break;
      const auto a = static_cast<std::int64_t>(a_d);
      frac = inv - a_d;
      const std::int64_t h_next = a * h + h_prev;
      const std::int64_t k_next = a * k + k_prev;
      if (k_next > 1'000'000'000'000LL) break;
      h_prev = h;
      h = h_next;
      k_prev = k;
      k = k_next;
    }
    return Rational(h, k);
  }

  /// Accepts "p/q" or a decimal literal.
  static Rational parse(std::string_view text) {
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) {
      double v = 0.0;
      try {
        std::size_t used = 0;
        const std::string s(text);
        v = std::stod(s, &used);
        if (used != s.size()) throw ValidationError("");
      } catch (...) {
        throw ValidationError("cannot parse '" + std::string(text) + "' as a number or p/q");
      }
      return from_double(v);
    }
    auto parse_int = [&](std::string_view part) {
      std::int64_t out = 0;
      const auto res = std::from_chars(part.data(), part.data() + part.size(), out);
      if (res.ec != std::errc{} || res.ptr != part.data() + part.size()) {
        throw ValidationError("cannot parse '" + std::string(text) + "' as p/q");
      }
      return out;
    };
    return Rational(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
  }

  constexpr std::int64_t num() const noexcept { return num_; }
  constexpr std::int64_t den() const noexcept { return den_; }
  double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  std::string str() const {
    return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
  }

  /// Sign of (this - p/q), computed without rounding.
  int compare(std::int64_t p, std::int64_t q) const noexcept {
    const __int128 lhs = static_cast<__int128>(num_) * q;
    const __int128 rhs = static_cast<__int128>(p) * den_;
    return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
  }

  bool operator==(const Rational&) const = default;

private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// Smallest admissible offset: max{1, lambda^(-1/b), (2b)^(1/(1-b))}.
inline double min_T0(double lambda, double b) {
  if (!(b > 0.5 && b < 1.0)) {
    std::ostringstream msg;
    msg << "stepsize exponent b = " << b << " outside the admissible range (0.5, 1)";
    throw ValidationError(msg.str());
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("co-coercivity parameter must be positive");
  }
  return std::max({1.0, std::pow(lambda, -1.0 / b), std::pow(2.0 * b, 1.0 / (1.0 - b))});
}

struct PartialSums {
  double sum_beta = 0.0;
  double sum_beta_sq = 0.0;
};

/// beta_t = (t + T0)^(-b).
class StepsizeSchedule {
public:
  /// Number of explicit terms before the integral tail in d1_upper_bound.
  static constexpr std::uint64_t d1_explicit_terms = 1'000'000;

  StepsizeSchedule(Rational b, double t0) : b_(b), b_value_(b.value()), t0_(t0) {
    if (b.compare(1, 2) <= 0 || b.compare(1, 1) >= 0) {
      throw ValidationError("stepsize exponent b = " + b.str() +
                            " outside the admissible range (0.5, 1)");
    }
    if (!(t0 >= 1.0) || !std::isfinite(t0)) {
      throw ValidationError("stepsize T0 must be a finite number >= 1");
    }
  }

  /// Schedule with the smallest integer T0 admissible for `lambda`.
  static StepsizeSchedule with_default_offset(Rational b, double lambda) {
    return StepsizeSchedule(b, std::ceil(min_T0(lambda, b.value())));
  }

  const Rational& exponent() const noexcept { return b_; }
  double b() const noexcept { return b_value_; }
  double T0() const noexcept { return t0_; }

  double operator()(std::uint64_t t) const noexcept {
    return std::pow(static_cast<double>(t) + t0_, -b_value_);
  }

  /// Throws unless T0 meets the admissibility bound for `lambda`.
  void validate_for(double lambda) const {
    const double bound = min_T0(lambda, b_value_);
    if (t0_ < bound * (1.0 - 1e-12)) {
      std::ostringstream msg;
      msg.precision(12);
      msg << "T0 below admissible minimum " << bound << " (T0 = " << t0_
          << ", lambda = " << lambda << ", b = " << b_.str() << ")";
      throw ValidationError(msg.str());
    }
  }

  PartialSums partial_sums(std::uint64_t t) const {
    CompensatedSum s, s2;
    for (std::uint64_t i = 0; i <= t; ++i) {
      const double beta = (*this)(i);
      s += beta;
      s2 += beta * beta;
    }
    return {s.value(), s2.value()};
  }

  /// Upper bound on D1 = sum_{i>=0} beta_i^2: explicit terms up to K plus
  /// the integral tail (K + T0)^(1-2b) / (2b - 1).
  double d1_upper_bound() const {
    const double head = partial_sums(d1_explicit_terms).sum_beta_sq;
    const double tail = std::pow(static_cast<double>(d1_explicit_terms) + t0_, 1.0 - 2.0 * b_value_) /
                        (2.0 * b_value_ - 1.0);
    return head + tail;
  }

private:
  Rational b_;
  double b_value_;
  double t0_;
};

inline double stepsize(const StepsizeSchedule& schedule, std::uint64_t t) { return schedule(t); }

inline PartialSums partial_sums(const StepsizeSchedule& schedule, std::uint64_t t) {
  return schedule.partial_sums(t);
}

} // namespace coco
