#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "coco/error.hpp"
#include "coco/game.hpp"
#include "coco/rng.hpp"

namespace coco {

enum class NoiseKind { Affine, Relative, Absolute };

inline const char* to_string(NoiseKind kind) {
  switch (kind) {
  case NoiseKind::Affine: return "affine";
  case NoiseKind::Relative: return "relative";
  case NoiseKind::Absolute: return "absolute";
  }
  return "affine";
}

inline NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "affine") return NoiseKind::Affine;
  if (name == "relative") return NoiseKind::Relative;
  if (name == "absolute") return NoiseKind::Absolute;
  throw ValidationError("unknown noise kind '" + std::string(name) +
                        "' (expected affine, relative or absolute)");
}

/// Isotropic Gaussian martingale-difference noise. The total conditional
/// second moment is split evenly over the N*d coordinates:
///   affine    E||M||^2 = sigma^2 (1 + ||x||^2)
///   relative  E||M||^2 = tau ||v(x)||^2
///   absolute  E||M||^2 = sigma^2
struct NoiseModel {
  NoiseKind kind = NoiseKind::Affine;
  double sigma = 0.0;
  double tau = 0.0;

  void validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
      throw ValidationError("noise.sigma must be a finite nonnegative number");
    }
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
      throw ValidationError("noise.tau must be a finite nonnegative number");
    }
  }

  /// Conditional E||M||^2 at state x with gradient v_x.
  double total_variance(const Vector& x, const Vector& v_x) const {
    switch (kind) {
    case NoiseKind::Affine: return sigma * sigma * (1.0 + x.squaredNorm());
    case NoiseKind::Relative: return tau * v_x.squaredNorm();
    case NoiseKind::Absolute: return sigma * sigma;
    }
    return 0.0;
  }
};

/// Fills `out` with one draw of M_{t+1}. The stream is consumed only when the
/// variance is positive, so a zero-noise run never touches it.
inline void sample_noise_into(const NoiseModel& model, const Vector& x, const Vector& v_x,
                              RngStream& rng, Vector& out) {
  out.resize(x.size());
  const double variance = model.total_variance(x, v_x);
  if (variance == 0.0) {
    out.setZero();
    return;
  }
  const double scale = std::sqrt(variance / static_cast<double>(x.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) = scale * rng.next_normal();
}

inline Vector sample_noise(const NoiseModel& model, const Vector& x, const Vector& v_x,
                           RngStream& rng) {
  if (x.size() != v_x.size()) {
    throw DimensionError("noise: state and gradient lengths differ");
  }
  Vector out(x.size());
  sample_noise_into(model, x, v_x, rng, out);
  return out;
}

} // namespace coco
