#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace coco {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes that do not agree with the owning game.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A value violates a type invariant (game, schedule, noise, config).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// A trajectory left the finite region; carries the step where it happened.
class DivergenceError : public Error {
public:
  DivergenceError(std::uint64_t seed, std::uint64_t step)
      : Error("run with seed " + std::to_string(seed) + " diverged at step " +
              std::to_string(step)),
        seed_(seed), step_(step) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t step() const noexcept { return step_; }

private:
  std::uint64_t seed_;
  std::uint64_t step_;
};

} // namespace coco
