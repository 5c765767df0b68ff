// kt-career: command-line driver over the ktcareer C API.
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "ktcareer/ktcareer.h"

namespace {

int fail(ktc_status status, const std::string& context) {
  std::fprintf(stderr, "kt-career: %s: %s\n", context.c_str(), ktc_last_error());
  return ktc_exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge tracing and career prediction pipeline"};
  app.set_version_flag("--version", std::string(ktc_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;

  struct CommandInfo {
    const char* name;
    const char* help;
  };
  const CommandInfo commands[] = {
      {"generate", "Write a synthetic cohort (clickstream, profiles, ground truth)"},
      {"train-kt", "Train the DKT / DKT+ knowledge tracing models"},
      {"extract", "Build feature matrices from last knowledge states and profiles"},
      {"train-predictor", "Grid-search and fit the career classifiers"},
      {"evaluate", "Cross-validated evaluation report for every feature set and family"},
      {"analyze", "Profile t-tests, per-skill t maps, LDA histograms and learning gains"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the configured seed");
    sub->add_option("--out", out_dir, "Override the output directory");
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  CLI::App* chosen = nullptr;
  for (auto* sub : subs)
    if (sub->parsed()) chosen = sub;
  const std::string command = chosen->get_name();

  ktc_run_config* config = nullptr;
  if (auto st = ktc_run_config_load(config_path.c_str(), &config); st != KTC_OK) return fail(st, "config");
  ktc_status st = KTC_OK;
  if (chosen->count("--seed")) st = ktc_run_config_set(config, "seed", std::to_string(seed).c_str());
  if (st == KTC_OK && chosen->count("--out")) st = ktc_run_config_set(config, "out_dir", out_dir.c_str());
  if (st == KTC_OK) st = ktc_run_command(config, command.c_str());
  ktc_run_config_free(config);
  for (std::size_t i = 0; i < ktc_warning_count(); ++i) std::fprintf(stderr, "kt-career: warning: %s\n", ktc_warning(i));
  if (st != KTC_OK) return fail(st, command);
  return 0;
}
