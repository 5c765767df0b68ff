#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ktcareer/classifiers.hpp"
#include "ktcareer/cohort.hpp"
#include "ktcareer/dkt.hpp"
#include "ktcareer/error.hpp"
#include "ktcareer/features.hpp"

namespace ktc {

inline constexpr const char* kVersion = "1.0.0";

// Flat `key = value` run configuration. '#' starts a comment; blank lines are
// ignored; a repeated key is an error. Keys are documented in the README.
class RunConfig {
 public:
  static RunConfig parse(std::istream& in, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // FNV-1a over the canonical `key=value\n` listing (sorted by key).
  std::uint64_t hash() const;
  std::string canonical() const;

 private:
  std::map<std::string, std::string> entries_;
};

// A named feature set: one of SP, DKT, DKT+, DKT&SP, DKT+&SP.
struct FeatureSet {
  std::string name;
  FeatureMode mode = FeatureMode::kProfile;
  std::string kt_model;  // "dkt" or "dkt_plus"; empty for SP

  std::string file_stem() const;
};

std::optional<FeatureSet> parse_feature_set(std::string_view name);

struct RunSettings {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  std::optional<std::filesystem::path> clickstream;
  std::optional<std::filesystem::path> profiles;

  CohortConfig cohort;
  TrainConfig kt;              // shared settings; lambdas are the DKT+ weights
  std::vector<std::string> kt_models = {"dkt", "dkt_plus"};

  std::vector<FeatureSet> feature_sets;
  std::vector<Family> families;
  std::map<Family, std::vector<ClassifierSpec>> grids;
  std::size_t folds = 5;
  bool nested_cv = true;
  bool rfe = false;
  std::vector<std::size_t> rfe_sizes;

  std::size_t nlg_window = 10;
  std::size_t histogram_bins = 30;

  std::string config_canonical;
  std::uint64_t config_hash = 0;

  std::filesystem::path clickstream_path() const;
  std::filesystem::path profiles_path() const;
};

// Validates every key and fills defaults; `seed` is mandatory.
RunSettings resolve(const RunConfig& config);

enum class Command { kGenerate, kTrainKt, kExtract, kTrainPredictor, kEvaluate, kAnalyze };

const char* to_string(Command command);
std::optional<Command> parse_command(std::string_view name);

struct CommandResult {
  std::vector<std::string> warnings;
  std::vector<std::filesystem::path> outputs;
};

CommandResult run_command(Command command, const RunSettings& settings);

CommandResult cmd_generate(const RunSettings& settings);
CommandResult cmd_train_kt(const RunSettings& settings);
CommandResult cmd_extract(const RunSettings& settings);
CommandResult cmd_train_predictor(const RunSettings& settings);
CommandResult cmd_evaluate(const RunSettings& settings);
CommandResult cmd_analyze(const RunSettings& settings);

// 0 success, 1 validation (and I/O), 2 numerical, 3 dependency.
int exit_code(ErrorKind kind);

}  // namespace ktc
