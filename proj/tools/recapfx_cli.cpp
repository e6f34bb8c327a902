#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "recapfx/config.hpp"
#include "recapfx/error.hpp"
#include "recapfx/pipeline.hpp"

namespace {

int exit_code(recapfx::ErrorKind kind) {
  switch (kind) {
    case recapfx::ErrorKind::config: return 2;
    case recapfx::ErrorKind::data: return 3;
    case recapfx::ErrorKind::training: return 4;
  }
  return 1;
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  bool paper_mode = false;
};

recapfx::PipelineConfig resolve(const Globals& g) {
  auto cfg = g.config_path.empty() ? recapfx::default_config() : recapfx::load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  if (g.threads) cfg.threads = *g.threads;
  if (g.paper_mode) cfg.paper_mode = true;
  return cfg;
}

void print_findings(const std::vector<recapfx::Finding>& findings) {
  for (const auto& f : findings)
    std::cerr << recapfx::to_string(f.severity) << ": " << f.key << ": " << f.message << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Forex feature-importance recap and stacking toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Config file (key = value or JSON)");
  app.add_option("--seed", g.seed, "Global seed; overrides the config");
  app.add_option("--out", g.out, "Output directory; overrides the config");
  app.add_option("--threads", g.threads, "Worker threads; results do not depend on it");
  app.add_flag("--paper-mode", g.paper_mode, "Use the published windows and test-set selection (leaks; warns)");

  const std::pair<const char*, recapfx::Stage> stages[] = {
      {"ingest", recapfx::Stage::ingest}, {"features", recapfx::Stage::features},
      {"recap", recapfx::Stage::recap},   {"train", recapfx::Stage::train},
      {"stack", recapfx::Stage::stack},   {"run", recapfx::Stage::stack}};
  const char* help[] = {"Load or generate candles",
                        "Compute indicators, ARIMA features and labels; clean",
                        "Run the feature importance recap",
                        "Evaluate sequence models and fit the layer-one models",
                        "Run the 31-way stacking search",
                        "Full pipeline"};
  std::optional<recapfx::Stage> chosen;
  for (std::size_t i = 0; i < std::size(stages); ++i) {
    auto* sub = app.add_subcommand(stages[i].first, help[i]);
    const auto stage = stages[i].second;
    sub->callback([&chosen, stage] { chosen = stage; });
  }
  bool validate_only = false;
  app.add_subcommand("validate", "Check the config and print findings")->callback([&] { validate_only = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto cfg = resolve(g);
    if (validate_only) {
      const auto findings = recapfx::validate_config(cfg);
      print_findings(findings);
      bool errors = false;
      for (const auto& f : findings) errors = errors || f.severity == recapfx::Finding::Severity::error;
      std::cout << (errors ? "config invalid" : "config ok") << " (" << findings.size() << " findings)\n";
      return errors ? 2 : 0;
    }
    const auto result = recapfx::run_pipeline(cfg, *chosen);
    print_findings(result.findings);
    std::cout << "wrote " << result.artifacts.size() << " artifacts to " << cfg.output_dir.string() << "\n";
    if (result.report.contains("stacking"))
      std::cout << "selected stacking combination: "
                << result.report["stacking"]["selected_combination"].get<std::string>() << "\n";
    return 0;
  } catch (const recapfx::Error& e) {
    std::cerr << "error (" << (e.kind() == recapfx::ErrorKind::config ? "config"
                               : e.kind() == recapfx::ErrorKind::data ? "data"
                                                                      : "training")
              << "): " << e.what() << "\n";
    return exit_code(e.kind());
  }
}
