#include "ktcareer/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "ktcareer/analysis.hpp"
#include "ktcareer/error.hpp"
#include "text_io.hpp"

namespace ktc {

namespace {

bool open_unit(double p) { return p > 0.0 && p < 1.0; }

double clamp_probability(double p) { return std::clamp(p, 0.01, 0.99); }

std::string student_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%05zu", index);
  return buf;
}

std::string skill_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "skill_%03zu", index);
  return buf;
}

// Mean values of the noise-only profile columns.
struct AffectMeans {
  double bored = 0.25, engcon = 0.65, conf = 0.10, frust = 0.12, offtask = 0.20, gaming = 0.05;
};

}  // namespace

void SkillModel::validate() const {
  if (!open_unit(p_init) || !open_unit(p_learn) || !open_unit(p_guess) || !open_unit(p_slip)) {
    throw ValidationError("skill model probabilities must lie in (0,1)");
  }
  if (p_guess + p_slip >= 1.0) throw ValidationError("skill model requires p_guess + p_slip < 1");
}

double bkt_posterior(double p, int correct, const SkillModel& s) {
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p_mastered must lie in [0,1]");
  const double mastered = correct ? p * (1.0 - s.p_slip) : p * s.p_slip;
  const double unmastered = correct ? (1.0 - p) * s.p_guess : (1.0 - p) * (1.0 - s.p_guess);
  const double evidence = mastered + unmastered;
  if (evidence <= 0.0) return p;  // observation impossible under the model; keep the prior
  return mastered / evidence;
}

double bkt_filter_update(double p, int correct, const SkillModel& s) {
  const double post = bkt_posterior(p, correct, s);
  return std::clamp(post + (1.0 - post) * s.p_learn, 0.0, 1.0);
}

void CohortConfig::validate() const {
  if (n_students == 0) throw ValidationError("config error: n_students must be positive");
  if (num_skills == 0) throw ValidationError("config error: num_skills must be positive");
  if (max_length == 0) throw ValidationError("config error: max_length must be positive");
  if (min_length == 0 || min_length > max_length) {
    throw ValidationError("config error: need 1 <= min_length <= max_length");
  }
  if (!(stem_fraction > 0.0 && stem_fraction < 1.0)) {
    throw ValidationError("config error: stem_fraction must lie in (0,1)");
  }
  if (n_duplicates > n_students) throw ValidationError("config error: n_duplicates > n_students");
  for (auto s : advantaged_skills) {
    if (s >= num_skills) throw ValidationError("config error: advantaged skill out of range");
  }
  if (ability_sd < 0 || skill_jitter_sd < 0 || summary_noise_sd < 0 || affect_noise_sd < 0) {
    throw ValidationError("config error: noise scales must be non-negative");
  }
  SkillModel{p_init_min, p_learn_min, p_guess, p_slip}.validate();
  SkillModel{p_init_max, p_learn_max, p_guess, p_slip}.validate();
}

Cohort generate_cohort(const CohortConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto m = config.num_skills;

  Cohort cohort;
  for (std::size_t s = 0; s < m; ++s) {
    cohort.vocabulary.intern(skill_name(s));
    SkillModel sk;
    sk.p_init = config.p_init_min + (config.p_init_max - config.p_init_min) * unit(rng);
    sk.p_learn = config.p_learn_min + (config.p_learn_max - config.p_learn_min) * unit(rng);
    sk.p_guess = config.p_guess;
    sk.p_slip = config.p_slip;
    cohort.skills.push_back(sk);
  }

  std::vector<bool> advantaged(m, config.advantaged_skills.empty());
  for (auto s : config.advantaged_skills) advantaged[s] = true;

  // Exactly round(stem_fraction * n) labeled STEM students, placed at random.
  const auto n_labeled = config.n_students;
  const auto n_stem = static_cast<std::size_t>(std::llround(config.stem_fraction * n_labeled));
  std::vector<int> labels(n_labeled, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_stem), 1);
  std::shuffle(labels.begin(), labels.end(), rng);

  const std::size_t total = n_labeled + config.n_unlabeled;
  std::uniform_int_distribution<std::size_t> length_dist(config.min_length, config.max_length);
  std::uniform_int_distribution<std::size_t> skill_dist(0, m - 1);
  const std::array<const char*, 3> years = {"2004-2005", "2005-2006", "2006-2007"};
  const AffectMeans affect;

  for (std::size_t i = 0; i < total; ++i) {
    const bool labeled = i < n_labeled;
    const int label = labeled ? labels[i] : (unit(rng) < config.stem_fraction ? 1 : 0);
    const double shared = config.ability_sd * normal(rng);
    const double ability = shared + config.ability_gap * label;

    std::vector<SkillModel> personal(m);
    std::vector<double> latent_prob(m);
    std::vector<int> latent(m);
    std::vector<double> estimate(m);
    for (std::size_t s = 0; s < m; ++s) {
      const double shift = shared + (advantaged[s] ? config.ability_gap * label : 0.0) +
                           config.skill_jitter_sd * normal(rng);
      personal[s] = cohort.skills[s];
      personal[s].p_init = clamp_probability(cohort.skills[s].p_init + shift);
      personal[s].p_learn = clamp_probability(cohort.skills[s].p_learn + shift +
                                              (advantaged[s] ? config.learn_gap * label : 0.0));
      latent_prob[s] = personal[s].p_init;
      latent[s] = unit(rng) < personal[s].p_init ? 1 : 0;
      estimate[s] = cohort.skills[s].p_init;
    }

    const auto length = length_dist(rng);
    StudentSequence seq{student_name(i), {}};
    seq.interactions.reserve(length);
    Eigen::MatrixXd trajectory(config.record_trajectories ? length : 0, m);
    std::vector<bool> practiced(m, false);
    std::size_t n_correct = 0, n_slips = 0;
    for (std::size_t t = 0; t < length; ++t) {
      const auto s = skill_dist(rng);
      const auto& sk = personal[s];
      const double p_correct = latent[s] ? 1.0 - sk.p_slip : sk.p_guess;
      const int correct = unit(rng) < p_correct ? 1 : 0;
      if (latent[s] && !correct) ++n_slips;
      n_correct += static_cast<std::size_t>(correct);
      practiced[s] = true;
      seq.interactions.push_back(Interaction{seq.student_id, s, correct, t});

      if (!latent[s] && unit(rng) < sk.p_learn) latent[s] = 1;
      latent_prob[s] += (1.0 - latent_prob[s]) * sk.p_learn;
      estimate[s] = bkt_filter_update(estimate[s], correct, cohort.skills[s]);
      if (config.record_trajectories) {
        for (std::size_t j = 0; j < m; ++j) trajectory(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = estimate[j];
      }
    }

    double know_sum = 0.0;
    std::size_t know_count = 0;
    for (std::size_t s = 0; s < m; ++s) {
      if (practiced[s]) {
        know_sum += estimate[s];
        ++know_count;
      }
    }
    const auto noisy = [&](double v, double sd) { return std::clamp(v + sd * normal(rng), 0.0, 1.0); };
    ProfileRecord rec;
    auto& p = rec.profile;
    p.student_id = seq.student_id;
    p.usage_year = years[i % years.size()];
    p.num_actions = static_cast<double>(length);
    p.ave_know = noisy(know_sum / static_cast<double>(know_count), config.summary_noise_sd);
    p.ave_correct = noisy(static_cast<double>(n_correct) / static_cast<double>(length), config.summary_noise_sd);
    p.ave_carelessness = noisy(static_cast<double>(n_slips) / static_cast<double>(length), config.summary_noise_sd);
    p.ave_res_bored = noisy(affect.bored, config.affect_noise_sd);
    p.ave_res_engcon = noisy(affect.engcon, config.affect_noise_sd);
    p.ave_res_conf = noisy(affect.conf, config.affect_noise_sd);
    p.ave_res_frust = noisy(affect.frust, config.affect_noise_sd);
    p.ave_res_offtask = noisy(affect.offtask, config.affect_noise_sd);
    p.ave_res_gaming = noisy(affect.gaming, config.affect_noise_sd);
    if (labeled) rec.label = label;

    GroundTruthRecord truth;
    truth.student_id = seq.student_id;
    truth.label = label;
    truth.labeled = labeled;
    truth.ability = ability;
    truth.final_mastery = latent_prob;
    truth.final_estimate = estimate;
    if (config.record_trajectories && length >= 2) {
      // Filtered estimates stay below 1 for guess > 0, so the pre-score is valid.
      truth.nlg = nlg(trajectory, 10);
    }

    cohort.total_interactions += length;
    cohort.sequences.push_back(std::move(seq));
    cohort.profiles.push_back(std::move(rec));
    cohort.truth.push_back(std::move(truth));
    if (config.record_trajectories) cohort.trajectories.push_back(std::move(trajectory));
  }

  for (std::size_t d = 0; d < config.n_duplicates; ++d) cohort.profiles.push_back(cohort.profiles[d]);
  return cohort;
}

void write_ground_truth(std::ostream& out, const Cohort& cohort) {
  const auto m = cohort.vocabulary.size();
  out << "student_id,label,labeled,ability,nlg";
  for (std::size_t s = 0; s < m; ++s) out << ",mastery_" << cohort.vocabulary.name(s);
  for (std::size_t s = 0; s < m; ++s) out << ",estimate_" << cohort.vocabulary.name(s);
  out << '\n';
  for (const auto& t : cohort.truth) {
    out << t.student_id << ',' << t.label << ',' << (t.labeled ? 1 : 0) << ','
        << detail::format_exact(t.ability) << ',' << detail::format_exact(t.nlg);
    for (double v : t.final_mastery) out << ',' << detail::format_exact(v);
    for (double v : t.final_estimate) out << ',' << detail::format_exact(v);
    out << '\n';
  }
}

void write_cohort(const std::filesystem::path& dir, const Cohort& cohort) {
  {
    auto out = detail::open_output(dir / "clickstream.csv");
    write_clickstream(out, cohort.sequences, cohort.vocabulary);
  }
  {
    auto out = detail::open_output(dir / "profiles.csv");
    write_profiles(out, cohort.profiles);
  }
  {
    auto out = detail::open_output(dir / "vocabulary.csv");
    write_vocabulary(out, cohort.vocabulary);
  }
  {
    auto out = detail::open_output(dir / "ground_truth.csv");
    write_ground_truth(out, cohort);
  }
}

}  // namespace ktc
