// coco: run, validate and inspect SGD experiments on co-coercive games.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "coco/coco.hpp"

namespace {

enum ExitCode : int { Ok = 0, ChecksFailed = 1, InvalidConfig = 2, Diverged = 3, IoError = 4 };

void print_diagnostics(const std::vector<coco::Diagnostic>& diags) {
  for (const auto& d : diags) std::cerr << "error: " << d.str() << "\n";
}

int cmd_run(const std::string& path, const std::vector<std::string>& overrides,
            const std::optional<std::string>& out_dir, std::optional<unsigned> parallelism) {
  coco::ExperimentConfig cfg = [&] {
    auto ov = overrides;
    if (out_dir) ov.push_back("output_dir=\"" + *out_dir + "\"");
    return coco::load_experiment_config(path, ov);
  }();
  const unsigned workers = coco::resolve_parallelism(parallelism);
  const coco::ExperimentResult res = coco::run_analysis(cfg, workers);
  coco::write_artifacts(cfg.output_dir, coco::render_artifacts(res));
  std::cout << coco::summary_text(res);
  std::cout << "artifacts     " << cfg.output_dir << "\n";
  return res.report.all_conclusive_pass() ? Ok : ChecksFailed;
}

int cmd_validate(const std::string& path) {
  const auto diags = coco::validate_config(path);
  if (diags.empty()) {
    std::cout << path << ": ok\n";
    return Ok;
  }
  print_diagnostics(diags);
  return InvalidConfig;
}

int cmd_constants(const std::string& path, const std::vector<std::string>& overrides) {
  const auto cfg = coco::load_experiment_config(path, overrides);
  std::cout << coco::to_json(coco::compute_constants(cfg.run)).dump(2) << "\n";
  return Ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGD in co-coercive games: simulation and bound verification"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out_dir;
  std::optional<unsigned> parallelism;

  auto* run = app.add_subcommand("run", "Run a seeded ensemble and write artifacts");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--override", overrides, "key.path=value override (repeatable)");
  run->add_option("--out", out_dir, "Output directory (overrides output_dir)");
  run->add_option("--parallelism", parallelism, "Worker threads (default: COCO_PARALLELISM or hardware)");

  auto* validate = app.add_subcommand("validate", "Check a config and list problems");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* constants = app.add_subcommand("constants", "Print the theoretical constants as JSON");
  constants->add_option("config", config_path, "Experiment config (JSON)")->required();
  constants->add_option("--override", overrides, "key.path=value override (repeatable)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, overrides, out_dir, parallelism);
    if (*validate) return cmd_validate(config_path);
    if (*constants) return cmd_constants(config_path, overrides);
  } catch (const coco::ConfigError& e) {
    print_diagnostics(e.diagnostics());
    return InvalidConfig;
  } catch (const coco::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Diverged;
  } catch (const coco::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return InvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return IoError;
  }
  return Ok;
}
