#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mtcb/config.hpp"
#include "mtcb/error.hpp"
#include "mtcb/experiments.hpp"
#include "mtcb/version.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  bool verbose = false;
};

void add_common(CLI::App* cmd, Options& opt, bool config_required) {
  auto* c = cmd->add_option("--config", opt.config, "Experiment config (.ini, or a manifest .json)");
  if (config_required) c->required();
  c->check(CLI::ExistingFile);
  cmd->add_option("--seed", opt.seed, "Run a single seed instead of the configured list");
  cmd->add_option("--out", opt.out, "Output directory (default: experiment.output_dir)");
  cmd->add_option("--format", opt.format, "Summary format")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_flag("-v,--verbose", opt.verbose, "Debug logging");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task contextual bandit experiments"};
  app.set_version_flag("--version", std::string(mtcb::kVersion));
  app.require_subcommand(1);

  Options opt;
  struct Command {
    const char* name;
    const char* help;
    mtcb::ExperimentKind kind;
    bool config_required;
  };
  const Command commands[] = {
      {"sim-sweep", "MSE versus training similarity on GP-sampled tasks",
       mtcb::ExperimentKind::sim_sweep, false},
      {"bandit", "Regret of similarity methods on the synthetic bandit",
       mtcb::ExperimentKind::synthetic_bandit, false},
      {"trace", "Regret on a trace-driven k-NN simulator", mtcb::ExperimentKind::trace_bandit, true},
      {"theory", "Numerical checks of the information-gain bounds",
       mtcb::ExperimentKind::theory_checks, false},
      {"similarity", "Estimate a task-similarity matrix and cache it as CSV",
       mtcb::ExperimentKind::similarity, false},
  };
  for (const auto& c : commands) add_common(app.add_subcommand(c.name, c.help), opt, c.config_required);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return kExitConfig;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("mtcb"));
  spdlog::set_level(opt.verbose ? spdlog::level::debug : spdlog::level::warn);

  const Command* chosen = nullptr;
  for (const auto& c : commands) {
    if (app.got_subcommand(c.name)) chosen = &c;
  }

  mtcb::ExperimentConfig config;
  mtcb::OutputFormat format = mtcb::OutputFormat::csv;
  std::filesystem::path out;
  try {
    if (!opt.config.empty()) config = mtcb::load_config(opt.config);
    const bool kind_given = !opt.config.empty() && config.kind != chosen->kind;
    if (kind_given && !(chosen->kind == mtcb::ExperimentKind::similarity)) {
      // a config written for another experiment is almost certainly a mistake
      throw mtcb::ConfigError(fmt::format("config is for '{}', not '{}'",
                                          mtcb::to_string(config.kind), chosen->name));
    }
    config.kind = chosen->kind;
    if (opt.seed) config.seeds = {*opt.seed};
    config.validate();
    format = mtcb::parse_output_format(opt.format);
    out = opt.out.empty() ? config.output_dir : std::filesystem::path(opt.out);
    config.output_dir = out;
  } catch (const mtcb::Error& e) {
    std::cerr << "mtcb: config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const auto files = mtcb::run_experiment(config, out, format);
    std::cout << fmt::format("wrote {} files and manifest.json to {}\n", files.size(), out.string());
  } catch (const mtcb::ConfigError& e) {
    std::cerr << "mtcb: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "mtcb: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return EXIT_SUCCESS;
}
