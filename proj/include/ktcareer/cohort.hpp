#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "ktcareer/data_model.hpp"

namespace ktc {

// Per-skill Bayesian knowledge tracing parameters.
struct SkillModel {
  double p_init = 0.3;
  double p_learn = 0.1;
  double p_guess = 0.1;
  double p_slip = 0.1;

  void validate() const;
};

// Posterior probability of mastery after observing one answer.
double bkt_posterior(double p_mastered, int correct, const SkillModel& skill);

// Posterior followed by the learning transition. No validation beyond
// p_mastered in [0,1]; degenerate guess/slip values are allowed.
double bkt_filter_update(double p_mastered, int correct, const SkillModel& skill);

struct CohortConfig {
  std::size_t n_students = 467;      // labeled students
  std::size_t n_unlabeled = 0;       // extra students present only in the clickstream
  std::size_t n_duplicates = 0;      // labeled profile rows emitted twice
  std::size_t num_skills = 10;
  std::size_t min_length = 50;
  std::size_t max_length = 150;
  double stem_fraction = 117.0 / 467.0;

  // Latent ability = N(0, ability_sd) + ability_gap * label. The gap part is
  // applied only to `advantaged_skills` (all skills when empty); the shared
  // part to every skill. Each (student, skill) also gets N(0, skill_jitter_sd).
  double ability_gap = 0.0;
  double learn_gap = 0.0;  // extra p_learn shift for STEM students on advantaged skills
  double ability_sd = 0.05;
  double skill_jitter_sd = 0.05;
  std::vector<std::size_t> advantaged_skills;

  double p_init_min = 0.2, p_init_max = 0.5;
  double p_learn_min = 0.05, p_learn_max = 0.2;
  double p_guess = 0.1;
  double p_slip = 0.1;

  double summary_noise_sd = 0.0;  // added to ave_know / ave_correct / ave_carelessness
  double affect_noise_sd = 0.05;  // affect and disengagement columns are noise around fixed means

  bool record_trajectories = false;
  std::uint64_t seed = 7;

  void validate() const;
};

struct GroundTruthRecord {
  std::string student_id;
  int label = 0;
  bool labeled = true;
  double ability = 0.0;
  std::vector<double> final_mastery;    // latent P(mastered) per skill at the end
  std::vector<double> final_estimate;   // BKT-filtered estimate per skill at the end
  double nlg = 0.0;                     // on the filtered trajectory, window 10
};

struct Cohort {
  std::vector<StudentSequence> sequences;
  std::vector<ProfileRecord> profiles;
  SkillVocabulary vocabulary;
  std::vector<SkillModel> skills;
  std::vector<GroundTruthRecord> truth;
  // Filtered per-step knowledge state (T x M) per sequence, when requested.
  std::vector<Eigen::MatrixXd> trajectories;
  std::size_t total_interactions = 0;
};

Cohort generate_cohort(const CohortConfig& config);

void write_ground_truth(std::ostream& out, const Cohort& cohort);

// Writes clickstream.csv, profiles.csv, vocabulary.csv and ground_truth.csv.
void write_cohort(const std::filesystem::path& dir, const Cohort& cohort);

}  // namespace ktc
