#include "ktcareer/ktcareer.h"

#include <exception>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "ktcareer/analysis.hpp"
#include "ktcareer/classifiers.hpp"
#include "ktcareer/dkt.hpp"
#include "ktcareer/error.hpp"
#include "ktcareer/features.hpp"
#include "ktcareer/metrics.hpp"
#include "ktcareer/pipeline.hpp"

struct ktc_run_config {
  ktc::RunConfig config;
};

struct ktc_dkt_model {
  ktc::DktParams params;
};

struct ktc_classifier {
  ktc::TrainedClassifier model;
};

namespace {

thread_local std::string last_error;
thread_local std::vector<std::string> last_warnings;

ktc_status status_of(ktc::ErrorKind kind) {
  switch (kind) {
    case ktc::ErrorKind::kValidation: return KTC_ERR_VALIDATION;
    case ktc::ErrorKind::kNumerical: return KTC_ERR_NUMERICAL;
    case ktc::ErrorKind::kDependency: return KTC_ERR_DEPENDENCY;
    case ktc::ErrorKind::kIo: return KTC_ERR_IO;
    case ktc::ErrorKind::kUnsupported: return KTC_ERR_UNSUPPORTED;
  }
  return KTC_ERR_INTERNAL;
}

template <typename F>
ktc_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return KTC_OK;
  } catch (const ktc::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return KTC_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (!p) throw ktc::ValidationError(std::string(what) + " must not be null");
}


}  // namespace

extern "C" {

const char* ktc_version(void) { return ktc::kVersion; }

const char* ktc_last_error(void) { return last_error.c_str(); }

int ktc_exit_code(ktc_status status) {
  switch (status) {
    case KTC_OK: return 0;
    case KTC_ERR_NUMERICAL: return 2;
    case KTC_ERR_DEPENDENCY: return 3;
    default: return 1;
  }
}

ktc_status ktc_run_config_load(const char* path, ktc_run_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ktc_run_config{ktc::RunConfig::load(path)};
  });
}

ktc_status ktc_run_config_new(ktc_run_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new ktc_run_config{};
  });
}

ktc_status ktc_run_config_set(ktc_run_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
  });
}

void ktc_run_config_free(ktc_run_config* config) { delete config; }

ktc_status ktc_run_command(const ktc_run_config* config, const char* command) {
  last_warnings.clear();
  return guarded([&] {
    require(config, "config");
    require(command, "command");
    const auto cmd = ktc::parse_command(command);
    if (!cmd) throw ktc::ValidationError("unknown command '" + std::string(command) + "'");
    const auto settings = ktc::resolve(config->config);
    auto result = ktc::run_command(*cmd, settings);
    last_warnings = std::move(result.warnings);
  });
}

size_t ktc_warning_count(void) { return last_warnings.size(); }

const char* ktc_warning(size_t index) { return index < last_warnings.size() ? last_warnings[index].c_str() : ""; }

ktc_status ktc_dkt_load(const char* checkpoint_path, ktc_dkt_model** out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(out, "out");
    *out = new ktc_dkt_model{ktc::load_checkpoint(checkpoint_path)};
  });
}

void ktc_dkt_free(ktc_dkt_model* model) { delete model; }

size_t ktc_dkt_num_skills(const ktc_dkt_model* model) { return model ? model->params.num_skills() : 0; }

size_t ktc_dkt_hidden(const ktc_dkt_model* model) { return model ? model->params.hidden() : 0; }

ktc_status ktc_dkt_last_state(const ktc_dkt_model* model, const uint32_t* skills, const int* correct, size_t length,
                              double* out_state) {
  return guarded([&] {
    require(model, "model");
    require(skills, "skills");
    require(correct, "correct");
    require(out_state, "out_state");
    if (length == 0) throw ktc::ValidationError("sequence must not be empty");
    ktc::EncodedSequence seq;
    for (size_t t = 0; t < length; ++t) {
      if (skills[t] >= model->params.num_skills()) {
        throw ktc::ValidationError("skill id " + std::to_string(skills[t]) + " out of range");
      }
      if (correct[t] != 0 && correct[t] != 1) throw ktc::ValidationError("correct must be 0 or 1");
      seq.skills.push_back(skills[t]);
      seq.correct.push_back(correct[t]);
    }
    const auto state = ktc::extract_last_state(model->params, seq);
    for (Eigen::Index k = 0; k < state.size(); ++k) out_state[k] = state(k);
  });
}

ktc_status ktc_classifier_load(const char* path, ktc_classifier** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ktc_classifier{ktc::load_classifier(path)};
  });
}

void ktc_classifier_free(ktc_classifier* model) { delete model; }

size_t ktc_classifier_num_features(const ktc_classifier* model) {
  if (!model) return 0;
  if (!model->model.schema().empty()) return model->model.schema().size();
  if (const auto* l = model->model.linear()) return static_cast<size_t>(l->coef.size());
  if (const auto* s = model->model.svm()) return static_cast<size_t>(s->support_vectors.cols());
  if (const auto* g = model->model.gbdt()) return static_cast<size_t>(g->importances.size());
  return 0;
}

ktc_status ktc_classifier_predict_proba(const ktc_classifier* model, const double* x, size_t rows, size_t cols,
                                        double* out_probabilities) {
  return guarded([&] {
    require(model, "model");
    require(x, "x");
    require(out_probabilities, "out_probabilities");
    const auto expected = ktc_classifier_num_features(model);
    if (expected && cols != expected) {
      throw ktc::ValidationError("expected " + std::to_string(expected) + " features, got " + std::to_string(cols));
    }
    const Eigen::MatrixXd m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        x, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto p = ktc::predict_proba(model->model, m);
    for (Eigen::Index i = 0; i < p.size(); ++i) out_probabilities[i] = p(i);
  });
}

ktc_status ktc_auc(const double* scores, const int* labels, size_t n, double* out) {
  return guarded([&] {
    require(scores, "scores");
    require(labels, "labels");
    require(out, "out");
    *out = ktc::auc(std::span<const double>(scores, n), std::span<const int>(labels, n));
  });
}

ktc_status ktc_average_precision(const double* scores, const int* labels, size_t n, double* out) {
  return guarded([&] {
    require(scores, "scores");
    require(labels, "labels");
    require(out, "out");
    *out = ktc::average_precision(std::span<const double>(scores, n), std::span<const int>(labels, n));
  });
}

ktc_status ktc_rmse(const double* probabilities, const int* labels, size_t n, double* out) {
  return guarded([&] {
    require(probabilities, "probabilities");
    require(labels, "labels");
    require(out, "out");
    *out = ktc::rmse(std::span<const double>(probabilities, n), std::span<const int>(labels, n));
  });
}

double ktc_combined_score(double auc, double rmse) { return ktc::combined_score(auc, rmse); }

ktc_status ktc_t_test(const double* a, size_t n_a, const double* b, size_t n_b, int welch, ktc_t_test_result* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    const auto r = ktc::t_test(std::span<const double>(a, n_a), std::span<const double>(b, n_b),
                               welch ? ktc::VarianceModel::kWelch : ktc::VarianceModel::kPooled);
    *out = {r.t_score, r.p_value, r.cohens_d, r.df};
  });
}

ktc_status ktc_one_tailed_mean_test(const double* a, size_t n_a, const double* b, size_t n_b, int welch,
                                    double* out_p) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out_p, "out_p");
    *out_p = ktc::one_tailed_mean_test(std::span<const double>(a, n_a), std::span<const double>(b, n_b),
                                       welch ? ktc::VarianceModel::kWelch : ktc::VarianceModel::kPooled);
  });
}

ktc_status ktc_nlg(const double* states, size_t steps, size_t skills, size_t window, double* out) {
  return guarded([&] {
    require(states, "states");
    require(out, "out");
    const Eigen::MatrixXd m = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        states, static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(skills));
    *out = ktc::nlg(m, window);
  });
}

}  // extern "C"
