#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coco/analysis.hpp"
#include "coco/dynamics.hpp"
#include "coco/error.hpp"
#include "coco/game.hpp"
#include "coco/noise.hpp"
#include "coco/schedule.hpp"

namespace coco {

using json = nlohmann::json;

/// Artifacts an experiment may write.
enum class Artifact { Trajectories, Ensemble, Constants, BoundReport, RateFit };

inline const char* to_string(Artifact a) {
  switch (a) {
  case Artifact::Trajectories: return "trajectories";
  case Artifact::Ensemble: return "ensemble";
  case Artifact::Constants: return "constants";
  case Artifact::BoundReport: return "bound_report";
  case Artifact::RateFit: return "rate_fit";
  }
  return "ensemble";
}

struct RateFitSettings {
  Series series = Series::ResidualSq;
  std::uint64_t t_min = 1000;
  /// Defaults to the horizon.
  std::optional<std::uint64_t> t_max;
};

/// Everything in a RunConfig plus the ensemble description. Seeds are
/// base_seed, base_seed + 1, ..., base_seed + runs - 1.
struct ExperimentConfig {
  explicit ExperimentConfig(RunConfig r) : run(std::move(r)) {}

  RunConfig run;
  std::uint64_t runs = 1;
  std::uint64_t base_seed = 0;
  std::string output_dir = "out";
  std::set<Artifact> emit{Artifact::Ensemble, Artifact::Constants, Artifact::BoundReport,
                          Artifact::RateFit};
  RateFitSettings rate_fit;
  ConvergenceCriterion convergence;

  RunConfig run_for(std::uint64_t k) const {
    RunConfig r = run;
    r.seed = base_seed + k;
    return r;
  }

  FitWindow fit_window() const {
    return {rate_fit.t_min, rate_fit.t_max.value_or(run.horizon)};
  }
};

/// A config problem located by key path and, when found, source line.
struct Diagnostic {
  std::string path;
  int line = 0;
  std::string message;

  std::string str() const {
    std::ostringstream os;
    if (line > 0) os << "line " << line << ": ";
    if (!path.empty()) os << path << ": ";
    os << message;
    return os.str();
  }
};

class ConfigError : public ValidationError {
public:
  explicit ConfigError(std::vector<Diagnostic> diagnostics)
      : ValidationError(join(diagnostics)), diagnostics_(std::move(diagnostics)) {}

  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

private:
  static std::string join(const std::vector<Diagnostic>& diags) {
    std::string out;
    for (const auto& d : diags) {
      if (!out.empty()) out += "\n";
      out += d.str();
    }
    return out;
  }
  std::vector<Diagnostic> diagnostics_;
};

namespace detail {

inline int line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the innermost key in a dotted path, found by scanning for each
// quoted key after the previous one. Returns 0 when not found.
inline int locate_key(std::string_view text, std::string_view path) {
  std::size_t pos = 0;
  std::size_t begin = 0;
  while (begin <= path.size()) {
    auto end = path.find('.', begin);
    if (end == std::string_view::npos) end = path.size();
    const std::string needle = "\"" + std::string(path.substr(begin, end - begin)) + "\"";
    const auto found = text.find(needle, pos);
    if (found == std::string_view::npos) return 0;
    pos = found;
    begin = end + 1;
  }
  return line_of_offset(text, pos);
}

inline Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ValidationError(std::string(what) + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(std::string(what) + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

// Accepts rows ([[..],[..]]) or a flat row-major array of length dim*dim.
inline Matrix matrix_from_json(const json& j, Eigen::Index dim) {
  if (!j.is_array()) throw ValidationError("Q must be an array");
  if (!j.empty() && j.front().is_array()) {
    Matrix m(static_cast<Eigen::Index>(j.size()), j.front().size());
    for (std::size_t r = 0; r < j.size(); ++r) {
      if (!j[r].is_array() || j[r].size() != j.front().size()) {
        throw ValidationError("Q rows must all have the same length");
      }
      for (std::size_t c = 0; c < j[r].size(); ++c) {
        if (!j[r][c].is_number()) throw ValidationError("Q entries must be numbers");
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
      }
    }
    return m;
  }
  if (static_cast<Eigen::Index>(j.size()) != dim * dim) {
    throw DimensionError("flat Q must have " + std::to_string(dim * dim) + " entries");
  }
  Matrix m(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      const json& e = j[static_cast<std::size_t>(r * dim + c)];
      if (!e.is_number()) throw ValidationError("Q entries must be numbers");
      m(r, c) = e.get<double>();
    }
  }
  return m;
}

inline std::uint64_t as_count(const json& j, const char* what) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (d >= 0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
  }
  throw ValidationError(std::string(what) + " must be a nonnegative integer");
}

inline Series parse_series(std::string_view name) {
  for (Series s : {Series::ResidualSq, Series::ShadowResidualSq, Series::UNormSq, Series::DistNeSq,
                   Series::DistXstarSq, Series::TimeAvgResidual}) {
    if (name == to_string(s)) return s;
  }
  throw ValidationError("unknown rate-fit series '" + std::string(name) + "'");
}

inline Artifact parse_artifact(std::string_view name) {
  for (Artifact a : {Artifact::Trajectories, Artifact::Ensemble, Artifact::Constants,
                     Artifact::BoundReport, Artifact::RateFit}) {
    if (name == to_string(a)) return a;
  }
  throw ValidationError("unknown artifact '" + std::string(name) + "'");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Component serialization
// ---------------------------------------------------------------------------

inline json to_json(const GameSpec& game) {
  json j;
  j["kind"] = to_string(game.kind());
  j["players"] = game.players();
  j["action_dim"] = game.action_dim();
  if (game.kind() == GameKind::Quadratic) {
    json rows = json::array();
    const Matrix& q = game.interaction();
    for (Eigen::Index r = 0; r < q.rows(); ++r) rows.push_back(detail::vector_to_json(q.row(r).transpose()));
    j["Q"] = rows;
  } else {
    j["phi"] = detail::vector_to_json(game.phi());
    j["gamma"] = game.gamma();
  }
  return j;
}

inline GameSpec game_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("game must be an object");
  const std::string kind = j.value("kind", "");
  const int players = static_cast<int>(detail::as_count(j.at("players"), "players"));
  const int action_dim = j.contains("action_dim")
                             ? static_cast<int>(detail::as_count(j.at("action_dim"), "action_dim"))
                             : 1;
  if (kind == "quadratic") {
    const Eigen::Index dim = static_cast<Eigen::Index>(players) * action_dim;
    return GameSpec::quadratic(players, action_dim, detail::matrix_from_json(j.at("Q"), dim));
  }
  if (kind == "aggregate") {
    return GameSpec::aggregate(players, action_dim, detail::vector_from_json(j.at("phi"), "phi"),
                               j.at("gamma").get<double>());
  }
  throw ValidationError("unknown game kind '" + kind + "' (expected quadratic or aggregate)");
}

inline json to_json(const NoiseModel& noise) {
  return {{"kind", to_string(noise.kind)}, {"sigma", noise.sigma}, {"tau", noise.tau}};
}

inline NoiseModel noise_from_json(const json& j) {
  NoiseModel n;
  n.kind = parse_noise_kind(j.value("kind", "affine"));
  n.sigma = j.value("sigma", 0.0);
  n.tau = j.value("tau", 0.0);
  n.validate();
  return n;
}

inline Rational rational_from_json(const json& j) {
  if (j.is_string()) return Rational::parse(j.get<std::string>());
  if (j.is_number()) return Rational::from_double(j.get<double>());
  if (j.is_array() && j.size() == 2) return Rational(j[0].get<std::int64_t>(), j[1].get<std::int64_t>());
  throw ValidationError("b must be a number, a \"p/q\" string or a [p, q] pair");
}

// ---------------------------------------------------------------------------
// Experiment config
// ---------------------------------------------------------------------------

inline json to_json(const ExperimentConfig& cfg) {
  json j;
  j["game"] = to_json(cfg.run.game);
  j["noise"] = to_json(cfg.run.noise);
  j["stepsize"] = {{"b", cfg.run.schedule.exponent().str()}, {"T0", cfg.run.schedule.T0()}};
  j["x0"] = detail::vector_to_json(cfg.run.x0);
  j["horizon"] = cfg.run.horizon;
  j["checkpoints"] = cfg.run.checkpoints;
  j["runs"] = cfg.runs;
  j["base_seed"] = cfg.base_seed;
  j["output_dir"] = cfg.output_dir;
  json emit = json::array();
  for (Artifact a : cfg.emit) emit.push_back(to_string(a));
  j["emit"] = emit;
  j["rate_fit"] = {{"series", to_string(cfg.rate_fit.series)},
                   {"t_min", cfg.rate_fit.t_min},
                   {"t_max", cfg.fit_window().t_max}};
  j["convergence"] = {{"early_t_max", cfg.convergence.early_t_max},
                      {"factor", cfg.convergence.factor}};
  return j;
}

/// Parses and validates; collects one diagnostic per failing section.
/// `source` is the raw text, used only to attach line numbers.
inline ExperimentConfig experiment_from_json(const json& j, std::string_view source = {}) {
  std::vector<Diagnostic> diags;
  auto fail = [&](const std::string& path, const std::string& message) {
    diags.push_back({path, source.empty() ? 0 : detail::locate_key(source, path), message});
  };
  auto guard = [&](const std::string& path, auto&& fn) {
    try {
      fn();
    } catch (const json::exception& e) {
      fail(path, e.what());
    } catch (const std::exception& e) {
      fail(path, e.what());
    }
  };

  if (!j.is_object()) throw ConfigError({{"", 1, "config must be a JSON object"}});
  for (const char* key : {"game", "noise", "stepsize", "x0", "horizon"}) {
    if (!j.contains(key)) fail(key, "missing required key");
  }
  if (!diags.empty()) throw ConfigError(diags);

  std::optional<GameSpec> game;
  guard("game", [&] { game = game_from_json(j.at("game")); });
  NoiseModel noise;
  guard("noise", [&] { noise = noise_from_json(j.at("noise")); });

  std::optional<Rational> b;
  guard("stepsize.b", [&] {
    b = rational_from_json(j.at("stepsize").at("b"));
    if (b->compare(1, 2) <= 0 || b->compare(1, 1) >= 0) {
      const auto bad = *b;
      b.reset();
      throw ValidationError("stepsize exponent b = " + bad.str() +
                            " outside the admissible range (0.5, 1)");
    }
  });
  std::optional<StepsizeSchedule> schedule;
  if (b && game) {
    guard("stepsize.T0", [&] {
      const json& s = j.at("stepsize");
      if (s.contains("T0") && !s.at("T0").is_null()) {
        schedule.emplace(*b, s.at("T0").get<double>());
        schedule->validate_for(game->lambda());
      } else {
        schedule.emplace(StepsizeSchedule::with_default_offset(*b, game->lambda()));
      }
    });
  }

  Vector x0;
  guard("x0", [&] {
    x0 = detail::vector_from_json(j.at("x0"), "x0");
    if (game) game->check_dimension(x0, "x0");
  });
  std::uint64_t horizon = 0;
  guard("horizon", [&] {
    horizon = detail::as_count(j.at("horizon"), "horizon");
    if (horizon == 0) throw ValidationError("horizon must be a positive integer");
  });
  std::vector<std::uint64_t> checkpoints;
  guard("checkpoints", [&] {
    if (!j.contains("checkpoints") || j.at("checkpoints").is_null() ||
        j.at("checkpoints") == "default") {
      checkpoints = default_checkpoints(horizon);
    } else {
      for (const auto& c : j.at("checkpoints")) checkpoints.push_back(detail::as_count(c, "checkpoint"));
      if (checkpoints.empty() || checkpoints.front() != 0 || checkpoints.back() != horizon) {
        throw ValidationError("checkpoints must include 0 and the horizon");
      }
      if (std::adjacent_find(checkpoints.begin(), checkpoints.end(),
                             [](auto a, auto b2) { return a >= b2; }) != checkpoints.end()) {
        throw ValidationError("checkpoints must be strictly increasing");
      }
    }
  });

  ExperimentConfig cfg(RunConfig{.game = game.value_or(GameSpec::aggregate(1, 1, Vector::Zero(1), 1.0)),
                               .noise = noise,
                               .schedule = schedule.value_or(StepsizeSchedule(Rational(2, 3), 1.0)),
                               .x0 = x0,
                               .horizon = horizon,
                               .checkpoints = checkpoints,
                               .seed = 0});
  guard("runs", [&] {
    cfg.runs = j.contains("runs") ? detail::as_count(j.at("runs"), "runs") : 1;
    if (cfg.runs == 0) throw ValidationError("runs must be at least 1");
  });
  guard("base_seed", [&] {
    cfg.base_seed = j.contains("base_seed") ? detail::as_count(j.at("base_seed"), "base_seed") : 0;
  });
  guard("output_dir", [&] { cfg.output_dir = j.value("output_dir", std::string("out")); });
  guard("emit", [&] {
    if (j.contains("emit")) {
      cfg.emit.clear();
      for (const auto& e : j.at("emit")) cfg.emit.insert(detail::parse_artifact(e.get<std::string>()));
    }
  });
  guard("rate_fit", [&] {
    if (!j.contains("rate_fit")) return;
    const json& r = j.at("rate_fit");
    if (r.contains("series")) cfg.rate_fit.series = detail::parse_series(r.at("series").get<std::string>());
    if (r.contains("t_min")) cfg.rate_fit.t_min = detail::as_count(r.at("t_min"), "t_min");
    if (r.contains("t_max") && !r.at("t_max").is_null()) {
      cfg.rate_fit.t_max = detail::as_count(r.at("t_max"), "t_max");
    }
  });
  guard("convergence", [&] {
    if (!j.contains("convergence")) return;
    const json& c = j.at("convergence");
    cfg.convergence.early_t_max = c.contains("early_t_max")
                                      ? detail::as_count(c.at("early_t_max"), "early_t_max")
                                      : cfg.convergence.early_t_max;
    cfg.convergence.factor = c.value("factor", cfg.convergence.factor);
  });

  if (diags.empty()) {
    guard("", [&] { cfg.run.validate(); });
  }
  if (!diags.empty()) throw ConfigError(diags);
  cfg.run.seed = cfg.base_seed;
  return cfg;
}

/// Applies `key.path=value` overrides. The value is parsed as JSON when
/// possible and taken as a string otherwise.
inline void apply_overrides(json& j, const std::vector<std::string>& overrides) {
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError({{"", 0, "override '" + ov + "' is not of the form key=value"}});
    }
    const std::string key = ov.substr(0, eq);
    const std::string raw = ov.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &j;
    std::size_t begin = 0;
    while (true) {
      const auto dot = key.find('.', begin);
      const std::string part = key.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      begin = dot + 1;
    }
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses config text (with overrides) into a validated ExperimentConfig.
inline ExperimentConfig parse_experiment_config(const std::string& text,
                                                const std::vector<std::string>& overrides = {}) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({{"", detail::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), e.what()}});
  }
  apply_overrides(j, overrides);
  return experiment_from_json(j, text);
}

inline ExperimentConfig load_experiment_config(const std::string& path,
                                               const std::vector<std::string>& overrides = {}) {
  return parse_experiment_config(read_text_file(path), overrides);
}

/// Empty when the file holds a valid config. Throws Error when unreadable.
inline std::vector<Diagnostic> validate_config(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e.diagnostics();
  }
  return {};
}

} // namespace coco
