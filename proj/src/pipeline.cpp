#include "ktcareer/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "ktcareer/analysis.hpp"
#include "ktcareer/data_model.hpp"
#include "ktcareer/eval.hpp"
#include "text_io.hpp"

namespace ktc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- RunConfig

RunConfig RunConfig::parse(std::istream& in, const std::string& source) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_line_ending(line);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(source + ":" + std::to_string(line_no) + ": empty key");
    if (config.entries_.count(key)) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    config.entries_[key] = value;
  }
  return config;
}

RunConfig RunConfig::load(const fs::path& path) {
  auto in = detail::open_input(path);
  return parse(in, path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::optional<std::string> RunConfig::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------- settings

std::string FeatureSet::file_stem() const {
  std::string stem = kt_model;
  if (mode == FeatureMode::kProfile) return "sp";
  if (mode == FeatureMode::kCombined) stem += "_sp";
  return stem;
}

std::optional<FeatureSet> parse_feature_set(std::string_view name) {
  if (name == "SP") return FeatureSet{"SP", FeatureMode::kProfile, ""};
  if (name == "DKT") return FeatureSet{"DKT", FeatureMode::kKnowledge, "dkt"};
  if (name == "DKT+") return FeatureSet{"DKT+", FeatureMode::kKnowledge, "dkt_plus"};
  if (name == "DKT&SP") return FeatureSet{"DKT&SP", FeatureMode::kCombined, "dkt"};
  if (name == "DKT+&SP") return FeatureSet{"DKT+&SP", FeatureMode::kCombined, "dkt_plus"};
  return std::nullopt;
}

fs::path RunSettings::clickstream_path() const { return clickstream.value_or(out_dir / "cohort" / "clickstream.csv"); }
fs::path RunSettings::profiles_path() const { return profiles.value_or(out_dir / "cohort" / "profiles.csv"); }

namespace {

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  for (auto& item : detail::split_fields(value, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

class KeyReader {
 public:
  explicit KeyReader(const RunConfig& config) : config_(config) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    return config_.get(key);
  }

  void real(const std::string& key, double& target) {
    if (auto v = raw(key)) {
      const auto d = detail::parse_double(*v);
      if (!d || !std::isfinite(*d)) throw ValidationError("config: '" + key + "' must be a number, got '" + *v + "'");
      target = *d;
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& target) {
    if (auto v = raw(key)) target = static_cast<Int>(parse_unsigned(key, *v));
  }

  void boolean(const std::string& key, bool& target) {
    if (auto v = raw(key)) {
      if (*v == "true" || *v == "yes" || *v == "on" || *v == "1") target = true;
      else if (*v == "false" || *v == "no" || *v == "off" || *v == "0") target = false;
      else throw ValidationError("config: '" + key + "' must be true or false, got '" + *v + "'");
    }
  }

  std::optional<std::vector<double>> reals(const std::string& key) {
    auto v = raw(key);
    if (!v) return std::nullopt;
    std::vector<double> out;
    for (const auto& item : split_list(*v)) {
      const auto d = detail::parse_double(item);
      if (!d) throw ValidationError("config: '" + key + "' has a non-numeric entry '" + item + "'");
      out.push_back(*d);
    }
    if (out.empty()) throw ValidationError("config: '" + key + "' is empty");
    return out;
  }

  std::optional<std::vector<std::size_t>> sizes(const std::string& key) {
    auto v = raw(key);
    if (!v) return std::nullopt;
    std::vector<std::size_t> out;
    for (const auto& item : split_list(*v)) out.push_back(parse_unsigned(key, item));
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : config_.entries()) {
      if (!used_.count(key)) throw ValidationError("config: unknown key '" + key + "'");
    }
  }

  static std::size_t parse_unsigned(const std::string& key, const std::string& text) {
    std::uint64_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
      throw ValidationError("config: '" + key + "' must be a non-negative integer, got '" + text + "'");
    }
    return static_cast<std::size_t>(value);
  }

 private:
  const RunConfig& config_;
  std::set<std::string> used_;
};

}  // namespace

RunSettings resolve(const RunConfig& config) {
  RunSettings s;
  KeyReader r(config);
  const auto seed = r.raw("seed");
  if (!seed) throw ValidationError("config: 'seed' is required");
  s.seed = KeyReader::parse_unsigned("seed", *seed);
  if (auto v = r.raw("out_dir")) s.out_dir = *v;
  if (auto v = r.raw("clickstream")) s.clickstream = fs::path(*v);
  if (auto v = r.raw("profiles")) s.profiles = fs::path(*v);
  if (s.clickstream.has_value() != s.profiles.has_value()) {
    throw ValidationError("config: 'clickstream' and 'profiles' must be given together");
  }

  auto& c = s.cohort;
  c.seed = s.seed;
  r.integer("cohort.n_students", c.n_students);
  r.integer("cohort.n_unlabeled", c.n_unlabeled);
  r.integer("cohort.n_duplicates", c.n_duplicates);
  r.integer("cohort.num_skills", c.num_skills);
  r.integer("cohort.min_length", c.min_length);
  r.integer("cohort.max_length", c.max_length);
  r.real("cohort.stem_fraction", c.stem_fraction);
  r.real("cohort.ability_gap", c.ability_gap);
  r.real("cohort.learn_gap", c.learn_gap);
  r.real("cohort.ability_sd", c.ability_sd);
  r.real("cohort.skill_jitter_sd", c.skill_jitter_sd);
  if (auto v = r.sizes("cohort.advantaged_skills")) c.advantaged_skills = *v;
  r.real("cohort.p_init_min", c.p_init_min);
  r.real("cohort.p_init_max", c.p_init_max);
  r.real("cohort.p_learn_min", c.p_learn_min);
  r.real("cohort.p_learn_max", c.p_learn_max);
  r.real("cohort.p_guess", c.p_guess);
  r.real("cohort.p_slip", c.p_slip);
  r.real("cohort.summary_noise_sd", c.summary_noise_sd);
  r.real("cohort.affect_noise_sd", c.affect_noise_sd);
  c.validate();

  auto& k = s.kt;
  k.seed = s.seed;
  r.real("kt.learning_rate", k.learning_rate);
  r.real("kt.dropout", k.dropout_rate);
  r.real("kt.clip_norm", k.clip_norm);
  r.integer("kt.hidden", k.hidden);
  r.integer("kt.batch_size", k.batch_size);
  r.integer("kt.max_epochs", k.max_epochs);
  r.integer("kt.patience", k.patience);
  r.real("kt.init_std", k.init_std);
  r.real("kt.validation_fraction", k.validation_fraction);
  r.integer("kt.segment_length", k.segment_length);
  if (auto v = r.raw("kt.optimizer")) {
    if (*v == "adam") k.optimizer = Optimizer::kAdam;
    else if (*v == "sgd") k.optimizer = Optimizer::kSgd;
    else throw ValidationError("config: 'kt.optimizer' must be adam or sgd");
  }
  r.real("kt.lambda_r", k.lambdas.lambda_r);
  r.real("kt.lambda_w1", k.lambdas.lambda_w1);
  r.real("kt.lambda_w2", k.lambdas.lambda_w2);
  k.validate();
  if (auto v = r.raw("kt.models")) {
    s.kt_models = split_list(*v);
    for (const auto& m : s.kt_models)
      if (m != "dkt" && m != "dkt_plus") throw ValidationError("config: unknown KT model '" + m + "'");
  }

  std::vector<std::string> feature_names;
  if (auto v = r.raw("features")) {
    feature_names = split_list(*v);
  } else {
    feature_names = {"SP", "DKT", "DKT+", "DKT&SP", "DKT+&SP"};
    std::erase_if(feature_names, [&](const std::string& n) {
      const auto fsn = parse_feature_set(n);
      return !fsn->kt_model.empty() &&
             std::find(s.kt_models.begin(), s.kt_models.end(), fsn->kt_model) == s.kt_models.end();
    });
  }
  for (const auto& name : feature_names) {
    auto fsn = parse_feature_set(name);
    if (!fsn) throw ValidationError("config: unknown feature set '" + name + "' (SP, DKT, DKT+, DKT&SP, DKT+&SP)");
    if (!fsn->kt_model.empty() &&
        std::find(s.kt_models.begin(), s.kt_models.end(), fsn->kt_model) == s.kt_models.end()) {
      throw ValidationError("config: feature set '" + name + "' needs KT model '" + fsn->kt_model +
                            "' which is not in kt.models");
    }
    s.feature_sets.push_back(*fsn);
  }

  if (auto v = r.raw("families")) {
    for (const auto& f : split_list(*v)) s.families.push_back(parse_family(f));
  } else {
    s.families = {Family::kGbdt, Family::kLda, Family::kLr, Family::kSvm};
  }
  r.integer("folds", s.folds);
  if (s.folds < 2) throw ValidationError("config: 'folds' must be at least 2");
  r.boolean("nested_cv", s.nested_cv);
  r.boolean("rfe", s.rfe);
  s.rfe_sizes = r.sizes("rfe.sizes").value_or(default_rfe_sizes());

  for (auto family : s.families) s.grids[family] = default_grid(family);
  {
    const auto trees = r.sizes("grid.gbdt.trees");
    const auto depth = r.sizes("grid.gbdt.depth");
    const auto leaf = r.sizes("grid.gbdt.min_leaf");
    std::optional<std::vector<double>> shrink = r.reals("grid.gbdt.shrinkage");
    if (trees || depth || leaf || shrink) {
      auto& g = s.grids[Family::kGbdt];
      g.clear();
      for (auto t : trees.value_or(std::vector<std::size_t>{10, 25, 50, 120, 300}))
        for (auto d : depth.value_or(std::vector<std::size_t>{2, 3, 5, 8}))
          for (auto l : leaf.value_or(std::vector<std::size_t>{1, 2, 5, 10}))
            for (auto sh : shrink.value_or(std::vector<double>{0.1})) {
              auto spec = ClassifierSpec::gbdt_spec(t, d, l);
              spec.gbdt.shrinkage = sh;
              spec.validate();
              g.push_back(spec);
            }
    }
    if (auto v = r.raw("grid.lda.solvers")) {
      auto& g = s.grids[Family::kLda];
      g.clear();
      for (const auto& name : split_list(*v)) {
        if (name == "SVD") g.push_back(ClassifierSpec::lda_spec(LdaSolver::kSvd));
        else if (name == "LSQR") g.push_back(ClassifierSpec::lda_spec(LdaSolver::kLsqr));
        else if (name == "EIGEN") g.push_back(ClassifierSpec::lda_spec(LdaSolver::kEigen));
        else throw ValidationError("config: unknown LDA solver '" + name + "'");
      }
    }
    const auto lr_c = r.reals("grid.lr.c");
    const auto lr_pen = r.raw("grid.lr.penalty");
    if (lr_c || lr_pen) {
      auto& g = s.grids[Family::kLr];
      g.clear();
      std::vector<Penalty> pens;
      for (const auto& p : split_list(lr_pen.value_or("L1,L2"))) {
        if (p == "L1") pens.push_back(Penalty::kL1);
        else if (p == "L2") pens.push_back(Penalty::kL2);
        else throw ValidationError("config: unknown LR penalty '" + p + "'");
      }
      for (double cv : lr_c.value_or(std::vector<double>{0.001, 0.01, 0.1, 1, 10, 100}))
        for (auto p : pens) {
          auto spec = ClassifierSpec::lr_spec(cv, p);
          spec.validate();
          g.push_back(spec);
        }
    }
    const auto svm_c = r.reals("grid.svm.c");
    const auto svm_gamma = r.reals("grid.svm.gamma");
    if (svm_c || svm_gamma) {
      auto& g = s.grids[Family::kSvm];
      g.clear();
      for (double cv : svm_c.value_or(std::vector<double>{0.001, 0.01, 0.1, 1, 10, 100})) {
        if (svm_gamma) {
          for (double gm : *svm_gamma) {
            auto spec = ClassifierSpec::svm_spec(cv);
            spec.svm.gamma = gm;
            spec.validate();
            g.push_back(spec);
          }
        } else {
          auto spec = ClassifierSpec::svm_spec(cv);
          spec.validate();
          g.push_back(spec);
        }
      }
    }
  }
  for (auto& [family, grid] : s.grids)
    for (auto& spec : grid) spec.svm.seed = s.seed;

  r.integer("analysis.nlg_window", s.nlg_window);
  r.integer("analysis.histogram_bins", s.histogram_bins);
  if (s.nlg_window < 1) throw ValidationError("config: 'analysis.nlg_window' must be >= 1");
  if (s.histogram_bins < 1) throw ValidationError("config: 'analysis.histogram_bins' must be >= 1");

  r.reject_unknown();
  s.config_canonical = config.canonical();
  s.config_hash = config.hash();
  return s;
}

// ---------------------------------------------------------------- commands

const char* to_string(Command command) {
  switch (command) {
    case Command::kGenerate: return "generate";
    case Command::kTrainKt: return "train-kt";
    case Command::kExtract: return "extract";
    case Command::kTrainPredictor: return "train-predictor";
    case Command::kEvaluate: return "evaluate";
    case Command::kAnalyze: return "analyze";
  }
  return "?";
}

std::optional<Command> parse_command(std::string_view name) {
  for (auto c : {Command::kGenerate, Command::kTrainKt, Command::kExtract, Command::kTrainPredictor,
                 Command::kEvaluate, Command::kAnalyze}) {
    if (name == to_string(c)) return c;
  }
  return std::nullopt;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumerical: return 2;
    case ErrorKind::kDependency: return 3;
    default: return 1;
  }
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path manifest_path(const RunSettings& s, Command c) {
  return s.out_dir / "manifests" / (std::string(to_string(c)) + ".json");
}

void write_manifest(const RunSettings& s, Command c, const CommandResult& result,
                    const std::vector<Command>& upstream) {
  nlohmann::ordered_json j;
  j["command"] = to_string(c);
  j["version"] = kVersion;
  j["seed"] = s.seed;
  j["config_hash"] = hex64(s.config_hash);
  j["config"] = s.config_canonical;
  auto outputs = nlohmann::ordered_json::array();
  for (const auto& p : result.outputs) outputs.push_back(p.lexically_relative(s.out_dir).generic_string());
  j["outputs"] = outputs;
  auto up = nlohmann::ordered_json::array();
  for (auto u : upstream) up.push_back(to_string(u));
  j["upstream"] = up;
  auto out = detail::open_output(manifest_path(s, c));
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest for '" + std::string(to_string(c)) + "'");
}

// Missing manifest or artifact -> dependency error naming the producer; a
// different config hash -> staleness warning.
void require_stage(const RunSettings& s, Command producer, CommandResult& result) {
  const auto path = manifest_path(s, producer);
  const std::string hint = "run 'kt-career " + std::string(to_string(producer)) + "' first";
  if (!fs::exists(path)) {
    throw DependencyError("missing artifacts of '" + std::string(to_string(producer)) + "' in '" +
                          s.out_dir.string() + "': " + hint);
  }
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    throw DependencyError("manifest '" + path.string() + "' is unreadable: " + hint);
  }
  for (const auto& rel : j.value("outputs", nlohmann::json::array())) {
    if (!fs::exists(s.out_dir / rel.get<std::string>())) {
      throw DependencyError("artifact '" + rel.get<std::string>() + "' of '" + std::string(to_string(producer)) +
                            "' is missing: " + hint);
    }
  }
  if (j.value("config_hash", std::string()) != hex64(s.config_hash)) {
    result.warnings.push_back("artifacts of '" + std::string(to_string(producer)) +
                              "' were produced with a different configuration (stale); consider re-running it");
  }
}

// Inputs come from the config paths when given, otherwise from `generate`.
void require_inputs(const RunSettings& s, CommandResult& result) {
  if (!s.clickstream) {
    require_stage(s, Command::kGenerate, result);
    return;
  }
  for (const auto& p : {*s.clickstream, *s.profiles})
    if (!fs::exists(p)) throw ValidationError("input file '" + p.string() + "' does not exist");
}

fs::path kt_dir(const RunSettings& s) { return s.out_dir / "kt"; }
fs::path checkpoint_path(const RunSettings& s, const std::string& model) { return kt_dir(s) / (model + ".ckpt"); }
fs::path feature_path(const RunSettings& s, const FeatureSet& f) {
  return s.out_dir / "features" / (f.file_stem() + ".csv");
}
fs::path model_path(const RunSettings& s, const FeatureSet& f, Family family) {
  std::string fam = to_string(family);
  std::transform(fam.begin(), fam.end(), fam.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s.out_dir / "models" / (f.file_stem() + "_" + fam + ".model");
}

std::vector<EncodedSequence> encode_all(const std::vector<StudentSequence>& sequences) {
  std::vector<EncodedSequence> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) out.push_back(encode_sequence(s));
  return out;
}

// Labeled, de-duplicated students joined with their clickstream sequence.
struct StudyPopulation {
  std::vector<LabeledStudent> students;
  std::vector<const StudentSequence*> sequences;  // parallel to students; null if absent
};

StudyPopulation study_population(const std::vector<ProfileRecord>& records, const ClickstreamData& clicks,
                                 bool require_sequences, CommandResult& result) {
  auto dedup = deduplicate_labeled(labeled_only(records));
  if (dedup.removed) {
    result.warnings.push_back("removed " + std::to_string(dedup.removed) + " duplicate labeled profile row(s)");
  }
  std::unordered_map<std::string, const StudentSequence*> by_id;
  for (const auto& seq : clicks.sequences) by_id[seq.student_id] = &seq;
  StudyPopulation pop;
  std::size_t missing = 0;
  for (auto& st : dedup.students) {
    const auto it = by_id.find(st.profile.student_id);
    const StudentSequence* seq = it == by_id.end() ? nullptr : it->second;
    if (require_sequences && (!seq || seq->size() == 0)) {
      ++missing;
      continue;
    }
    pop.students.push_back(std::move(st));
    pop.sequences.push_back(seq);
  }
  if (missing) {
    result.warnings.push_back("skipped " + std::to_string(missing) + " labeled student(s) without clickstream data");
  }
  if (pop.students.empty()) throw ValidationError("no labeled students to work with");
  return pop;
}

void note_rejected(const ClickstreamData& clicks, CommandResult& result) {
  if (clicks.rejected_rows) {
    result.warnings.push_back("rejected " + std::to_string(clicks.rejected_rows) +
                              " clickstream row(s) with a missing field");
  }
}

std::vector<int> labels_of(const StudyPopulation& pop) {
  std::vector<int> y;
  for (const auto& s : pop.students) y.push_back(s.label);
  return y;
}

std::string fmt(double v) { return detail::format_exact(v); }

}  // namespace

CommandResult cmd_generate(const RunSettings& s) {
  CommandResult result;
  const auto cohort = generate_cohort(s.cohort);
  const auto dir = s.out_dir / "cohort";
  write_cohort(dir, cohort);
  for (const char* name : {"clickstream.csv", "profiles.csv", "vocabulary.csv", "ground_truth.csv"}) {
    result.outputs.push_back(dir / name);
  }
  write_manifest(s, Command::kGenerate, result, {});
  return result;
}

CommandResult cmd_train_kt(const RunSettings& s) {
  CommandResult result;
  require_inputs(s, result);
  const auto clicks = parse_clickstream(s.clickstream_path());
  note_rejected(clicks, result);
  const auto encoded = encode_all(clicks.sequences);
  const auto vocab_path = kt_dir(s) / "vocabulary.csv";
  {
    auto out = detail::open_output(vocab_path);
    write_vocabulary(out, clicks.vocabulary);
  }
  result.outputs.push_back(vocab_path);
  for (const auto& model : s.kt_models) {
    TrainConfig config = s.kt;
    if (model == "dkt") config.lambdas = RegularizerWeights::dkt();
    const auto trained = train(encoded, clicks.vocabulary.size(), config);
    save_checkpoint(checkpoint_path(s, model), trained.params, config);
    const auto log_path = kt_dir(s) / (model + "_log.csv");
    auto out = detail::open_output(log_path);
    write_training_log(out, trained.log);
    result.outputs.push_back(checkpoint_path(s, model));
    result.outputs.push_back(log_path);
  }
  std::vector<Command> upstream;
  if (!s.clickstream) upstream.push_back(Command::kGenerate);
  write_manifest(s, Command::kTrainKt, result, upstream);
  return result;
}

CommandResult cmd_extract(const RunSettings& s) {
  CommandResult result;
  require_inputs(s, result);
  require_stage(s, Command::kTrainKt, result);
  const auto vocab = read_vocabulary(kt_dir(s) / "vocabulary.csv");
  const auto clicks = parse_clickstream(s.clickstream_path(), &vocab);
  note_rejected(clicks, result);
  const auto records = parse_profiles(s.profiles_path());
  const bool needs_kt = std::any_of(s.feature_sets.begin(), s.feature_sets.end(),
                                    [](const FeatureSet& f) { return !f.kt_model.empty(); });
  const auto pop = study_population(records, clicks, needs_kt, result);

  std::map<std::string, std::vector<Eigen::VectorXd>> states;
  for (const auto& f : s.feature_sets) {
    if (f.kt_model.empty() || states.count(f.kt_model)) continue;
    const auto params = load_checkpoint(checkpoint_path(s, f.kt_model));
    if (params.num_skills() != vocab.size()) {
      throw ValidationError("checkpoint '" + f.kt_model + "' has " + std::to_string(params.num_skills()) +
                            " skills but the vocabulary has " + std::to_string(vocab.size()));
    }
    auto& out = states[f.kt_model];
    for (const auto* seq : pop.sequences) out.push_back(extract_last_state(params, encode_sequence(*seq)));
  }

  const auto labels = labels_of(pop);
  for (const auto& f : s.feature_sets) {
    FeatureMatrix m;
    m.schema = feature_schema(f.mode, vocab.names());
    m.labels = labels;
    m.values.resize(static_cast<Eigen::Index>(pop.students.size()), static_cast<Eigen::Index>(m.schema.size()));
    for (std::size_t i = 0; i < pop.students.size(); ++i) {
      std::span<const double> state;
      if (!f.kt_model.empty()) {
        const auto& v = states[f.kt_model][i];
        state = {v.data(), static_cast<std::size_t>(v.size())};
      }
      const auto fv = build_features(pop.students[i].profile, state, f.mode, vocab.names());
      for (std::size_t j = 0; j < fv.values.size(); ++j) {
        m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fv.values[j];
      }
      m.student_ids.push_back(pop.students[i].profile.student_id);
    }
    write_feature_matrix(feature_path(s, f), m);
    result.outputs.push_back(feature_path(s, f));
  }
  write_manifest(s, Command::kExtract, result, {Command::kTrainKt});
  return result;
}

CommandResult cmd_train_predictor(const RunSettings& s) {
  CommandResult result;
  require_stage(s, Command::kExtract, result);
  const auto selection_path = s.out_dir / "models" / "selection.csv";
  std::ostringstream selection;
  selection << "Features,Model,GridIndex,GridSize,Spec,CvCombined,CvCombined_std\n";
  for (const auto& f : s.feature_sets) {
    const auto matrix = read_feature_matrix(feature_path(s, f));
    for (auto family : s.families) {
      const auto& grid = s.grids.at(family);
      const auto search = grid_search(grid, matrix.values, matrix.labels, s.folds, s.seed);
      const auto model = fit(search.best, matrix.values, matrix.labels, matrix.schema);
      for (const auto& w : model.warnings()) result.warnings.push_back(f.name + "/" + to_string(family) + ": " + w);
      save_classifier(model_path(s, f, family), model);
      result.outputs.push_back(model_path(s, f, family));
      const auto& best = search.results[search.best_index];
      selection << f.name << ',' << to_string(family) << ',' << search.best_index << ',' << grid.size() << ",\""
                << search.best.describe() << "\"," << detail::format_fixed(best.test.combined.mean, 6) << ','
                << detail::format_fixed(best.test.combined.std, 6) << '\n';
    }
  }
  {
    auto out = detail::open_output(selection_path);
    out << selection.str();
  }
  result.outputs.push_back(selection_path);
  write_manifest(s, Command::kTrainPredictor, result, {Command::kExtract});
  return result;
}

CommandResult cmd_evaluate(const RunSettings& s) {
  CommandResult result;
  require_stage(s, Command::kTrainPredictor, result);
  std::vector<EvalRow> rows;
  for (const auto& f : s.feature_sets) {
    const auto matrix = read_feature_matrix(feature_path(s, f));
    const auto folds = stratified_kfold(matrix.labels, s.folds, s.seed);
    for (auto family : s.families) {
      const auto model = load_classifier(model_path(s, f, family));
      const auto& spec = model.spec();
      const auto cv = cross_validate(spec, matrix.values, matrix.labels, folds, s.folds);
      EvalRow row;
      row.model = to_string(family);
      row.features = f.name;
      row.spec = spec.describe();
      row.standardized = spec.uses_standardization();
      row.train = cv.train;
      row.test = cv.test;
      if (s.nested_cv) {
        const auto nested = nested_cross_validate(s.grids.at(family), matrix.values, matrix.labels, s.folds, s.seed);
        row.nested_combined = nested.test.combined;
        if (nested.test.combined.mean + 0.02 < cv.test.combined.mean) {
          result.warnings.push_back(f.name + "/" + row.model + ": nested CV combined score is " +
                                    detail::format_fixed(cv.test.combined.mean - nested.test.combined.mean, 3) +
                                    " below the tuned score (selection optimism)");
        }
      }
      rows.push_back(row);
      if (s.rfe && family != Family::kSvm) {
        const auto sel = rfe(spec, matrix.values, matrix.labels, s.rfe_sizes, s.folds, s.seed);
        const auto& cols = sel.subsets.at(sel.best_size);
        const auto sub = matrix.select_columns(cols);
        const auto rcv = cross_validate(spec, sub.values, sub.labels, folds, s.folds);
        EvalRow rrow = row;
        rrow.features = f.name + "/RFE";
        rrow.train = rcv.train;
        rrow.test = rcv.test;
        rrow.nested_combined.reset();
        rrow.selected_features = sub.schema;
        rows.push_back(rrow);
      }
    }
  }
  const auto report_path = s.out_dir / "reports" / "eval_report.csv";
  auto out = detail::open_output(report_path);
  write_eval_report(out, rows);
  out.close();
  result.outputs.push_back(report_path);
  write_manifest(s, Command::kEvaluate, result, {Command::kTrainPredictor});
  return result;
}

CommandResult cmd_analyze(const RunSettings& s) {
  CommandResult result;
  require_inputs(s, result);
  require_stage(s, Command::kTrainKt, result);
  const auto vocab = read_vocabulary(kt_dir(s) / "vocabulary.csv");
  const auto clicks = parse_clickstream(s.clickstream_path(), &vocab);
  const auto records = parse_profiles(s.profiles_path());
  const auto pop = study_population(records, clicks, true, result);
  const auto labels = labels_of(pop);
  const auto n = pop.students.size();
  const auto dir = s.out_dir / "reports";

  // Profile comparison, STEM against non-STEM.
  Eigen::MatrixXd profile(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kProfileFeatureNames.size()));
  for (std::size_t i = 0; i < n; ++i) {
    const auto v = pop.students[i].profile.feature_values();
    for (std::size_t j = 0; j < v.size(); ++j) profile(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
  }
  {
    const auto path = dir / "profile_ttests.csv";
    auto out = detail::open_output(path);
    out << "feature,mean_stem,std_stem,mean_nonstem,std_nonstem,t,p,cohens_d\n";
    for (std::size_t j = 0; j < kProfileFeatureNames.size(); ++j) {
      std::vector<double> stem, other;
      for (std::size_t i = 0; i < n; ++i) (labels[i] ? stem : other).push_back(profile(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      TTestResult t;
      try {
        t = t_test(stem, other);
      } catch (const Error& e) {
        result.warnings.push_back(std::string(kProfileFeatureNames[j]) + ": " + e.what());
        t.degenerate = true;
        t.t_score = t.p_value = t.cohens_d = std::numeric_limits<double>::quiet_NaN();
        t.mean_a = sample_mean(stem);
        t.mean_b = sample_mean(other);
      }
      out << kProfileFeatureNames[j] << ',' << fmt(t.mean_a) << ',' << fmt(t.std_a) << ',' << fmt(t.mean_b) << ','
          << fmt(t.std_b) << ',' << fmt(t.t_score) << ',' << fmt(t.p_value) << ',' << fmt(t.cohens_d) << '\n';
    }
    result.outputs.push_back(path);
  }

  struct ProjectionSet {
    std::string name;
    Eigen::MatrixXd x;
  };
  std::vector<ProjectionSet> projections = {{"SP", profile}};
  std::map<std::string, std::vector<TTestResult>> skill_maps;
  std::vector<std::vector<std::string>> nlg_rows;
  for (const auto& model : s.kt_models) {
    const auto params = load_checkpoint(checkpoint_path(s, model));
    if (params.num_skills() != vocab.size()) throw ValidationError("checkpoint '" + model + "' does not match the vocabulary");
    const auto m = static_cast<Eigen::Index>(vocab.size());
    Eigen::MatrixXd last(static_cast<Eigen::Index>(n), m);
    std::vector<double> gain_stem, gain_other;
    for (std::size_t i = 0; i < n; ++i) {
      const auto trajectory = forward(params, encode_sequence(*pop.sequences[i]));
      last.row(static_cast<Eigen::Index>(i)) = trajectory.row(trajectory.rows() - 1);
      (labels[i] ? gain_stem : gain_other).push_back(nlg(trajectory, s.nlg_window));
    }
    std::vector<Eigen::Index> stem_rows, other_rows;
    for (std::size_t i = 0; i < n; ++i) (labels[i] ? stem_rows : other_rows).push_back(static_cast<Eigen::Index>(i));
    skill_maps[model] = skill_ttest_map(last(stem_rows, Eigen::all), last(other_rows, Eigen::all));
    projections.push_back({model == "dkt" ? "DKT" : "DKT+", last});
    const auto g = compare_nlg(gain_stem, gain_other);
    nlg_rows.push_back({model == "dkt" ? "DKT" : "DKT+", fmt(g.mean_stem), fmt(g.std_stem), fmt(g.mean_nonstem),
                        fmt(g.std_nonstem), fmt(g.p_pooled), fmt(g.p_welch), std::to_string(g.nlg_stem.size()),
                        std::to_string(g.nlg_nonstem.size())});
  }

  {
    const auto path = dir / "skill_ttests.csv";
    auto out = detail::open_output(path);
    out << "skill";
    for (const auto& [model, map] : skill_maps) out << ",t_" << model << ",p_" << model;
    out << '\n';
    for (std::size_t k = 0; k < vocab.size(); ++k) {
      out << vocab.name(k);
      for (const auto& [model, map] : skill_maps) out << ',' << fmt(map[k].t_score) << ',' << fmt(map[k].p_value);
      out << '\n';
    }
    result.outputs.push_back(path);
  }
  {
    const auto hist_path = dir / "lda_histograms.csv";
    const auto overlap_path = dir / "lda_overlap.csv";
    auto hist = detail::open_output(hist_path);
    auto overlap = detail::open_output(overlap_path);
    hist << "features,bin,lower,upper,count_nonstem,count_stem\n";
    overlap << "features,overlap,ridge_applied\n";
    for (const auto& p : projections) {
      const auto proj = lda_project_1d(p.x, labels);
      const auto h = class_histograms(proj.projections, labels, s.histogram_bins);
      for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
        hist << p.name << ',' << b << ',' << fmt(h.edges[b]) << ',' << fmt(h.edges[b + 1]) << ','
             << h.counts_negative[b] << ',' << h.counts_positive[b] << '\n';
      }
      overlap << p.name << ',' << fmt(overlap_coefficient(h)) << ',' << (proj.ridge_applied ? "yes" : "no") << '\n';
      if (proj.ridge_applied) result.warnings.push_back(p.name + ": singular within-class scatter, ridge applied");
    }
    result.outputs.push_back(hist_path);
    result.outputs.push_back(overlap_path);
  }
  {
    const auto path = dir / "nlg.csv";
    auto out = detail::open_output(path);
    out << "model,mean_stem,std_stem,mean_nonstem,std_nonstem,p_one_tailed_pooled,p_one_tailed_welch,n_stem,n_nonstem\n";
    for (const auto& row : nlg_rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
    result.outputs.push_back(path);
  }
  write_manifest(s, Command::kAnalyze, result, {Command::kTrainKt});
  return result;
}

CommandResult run_command(Command command, const RunSettings& settings) {
  switch (command) {
    case Command::kGenerate: return cmd_generate(settings);
    case Command::kTrainKt: return cmd_train_kt(settings);
    case Command::kExtract: return cmd_extract(settings);
    case Command::kTrainPredictor: return cmd_train_predictor(settings);
    case Command::kEvaluate: return cmd_evaluate(settings);
    case Command::kAnalyze: return cmd_analyze(settings);
  }
  throw ValidationError("unknown command");
}

}  // namespace ktc
