#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "check_error.hpp"
#include "ktcareer/analysis.hpp"
#include "ktcareer/cohort.hpp"
#include "ktcareer/error.hpp"

using namespace ktc;

TEST_CASE("BKT posterior by Bayes rule") {
  const SkillModel sk{0.3, 0.1, 0.2, 0.1};
  // P(L|correct) = 0.3*0.9 / (0.3*0.9 + 0.7*0.2)
  CHECK(bkt_posterior(0.3, 1, sk) == doctest::Approx(0.27 / (0.27 + 0.14)).epsilon(1e-14));
  CHECK(bkt_posterior(0.3, 0, sk) == doctest::Approx(0.03 / (0.03 + 0.56)).epsilon(1e-14));
  const double post = bkt_posterior(0.3, 1, sk);
  CHECK(bkt_filter_update(0.3, 1, sk) == doctest::Approx(post + (1.0 - post) * 0.1).epsilon(1e-14));
}

TEST_CASE("BKT filter update stays a probability and a correct answer never lowers it") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 0.45);
  for (int i = 0; i < 1000; ++i) {
    SkillModel sk{u(rng) * 2.0, u(rng), u(rng), u(rng)};
    const double p = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double up = bkt_filter_update(p, 1, sk);
    const double down = bkt_filter_update(p, 0, sk);
    CHECK(up >= 0.0);
    CHECK(up <= 1.0);
    CHECK(down >= 0.0);
    CHECK(down <= up + 1e-15);
    if (1.0 - sk.p_slip > sk.p_guess) CHECK(bkt_posterior(p, 1, sk) >= p - 1e-15);
  }
}

TEST_CASE("skill model validation") {
  CHECK_ERROR(kValidation, (SkillModel{0.3, 0.1, 0.6, 0.5}.validate()));
  CHECK_ERROR(kValidation, (SkillModel{0.0, 0.1, 0.1, 0.1}.validate()));
  CHECK_NOTHROW((SkillModel{0.3, 0.1, 0.1, 0.1}.validate()));
}

TEST_CASE("cohort shape, class counts and lengths") {
  CohortConfig c;
  c.n_students = 467;
  c.n_unlabeled = 20;
  c.n_duplicates = 5;
  c.seed = 4;
  const auto cohort = generate_cohort(c);
  CHECK(cohort.sequences.size() == 487);
  CHECK(cohort.profiles.size() == 492);
  CHECK(cohort.vocabulary.size() == 10);
  std::size_t stem = 0, labeled = 0, total = 0;
  for (const auto& p : cohort.profiles) {
    if (p.label) {
      ++labeled;
      stem += static_cast<std::size_t>(*p.label);
    }
  }
  CHECK(labeled == 472);
  std::set<std::string> ids;
  std::size_t labeled_stem = 0;
  for (std::size_t i = 0; i < 467; ++i) labeled_stem += static_cast<std::size_t>(*cohort.profiles[i].label);
  CHECK(labeled_stem == 117);
  for (const auto& s : cohort.sequences) {
    CHECK(s.size() >= 50);
    CHECK(s.size() <= 150);
    total += s.size();
    ids.insert(s.student_id);
  }
  CHECK(ids.size() == 487);
  CHECK(total == cohort.total_interactions);
  for (std::size_t i = 467; i < 487; ++i) CHECK_FALSE(cohort.profiles[i].label.has_value());
  for (const auto& p : cohort.profiles) CHECK_NOTHROW(p.profile.validate());
}

TEST_CASE("cohort generation is deterministic per seed") {
  CohortConfig c;
  c.n_students = 50;
  c.seed = 12;
  const auto a = generate_cohort(c);
  const auto b = generate_cohort(c);
  std::ostringstream sa, sb;
  write_ground_truth(sa, a);
  write_ground_truth(sb, b);
  CHECK(sa.str() == sb.str());
  c.seed = 13;
  std::ostringstream sc;
  write_ground_truth(sc, generate_cohort(c));
  CHECK(sc.str() != sa.str());
}

TEST_CASE("profile summaries agree with the sequences") {
  CohortConfig c;
  c.n_students = 60;
  c.seed = 21;
  const auto cohort = generate_cohort(c);
  for (std::size_t i = 0; i < cohort.sequences.size(); ++i) {
    const auto& seq = cohort.sequences[i];
    const auto& p = cohort.profiles[i].profile;
    double correct = 0;
    for (const auto& x : seq.interactions) correct += x.correct;
    CHECK(p.num_actions == seq.size());
    CHECK(p.ave_correct == doctest::Approx(correct / static_cast<double>(seq.size())));
    CHECK(p.ave_carelessness <= p.ave_correct + 1.0);
  }
}

TEST_CASE("planted ability gap shows in mastery of advantaged skills only") {
  CohortConfig c;
  c.n_students = 400;
  c.ability_gap = 0.2;
  c.advantaged_skills = {0, 1};
  c.seed = 5;
  const auto cohort = generate_cohort(c);
  double gap_adv = 0, gap_other = 0;
  double n1 = 0, n0 = 0;
  std::vector<double> adv(2), other(2);
  for (const auto& t : cohort.truth) {
    const double a = (t.final_mastery[0] + t.final_mastery[1]) / 2.0;
    double o = 0;
    for (std::size_t s = 2; s < 10; ++s) o += t.final_mastery[s] / 8.0;
    (t.label ? n1 : n0) += 1;
    adv[static_cast<std::size_t>(t.label)] += a;
    other[static_cast<std::size_t>(t.label)] += o;
  }
  gap_adv = adv[1] / n1 - adv[0] / n0;
  gap_other = other[1] / n1 - other[0] / n0;
  CHECK(gap_adv > 0.1);
  CHECK(std::fabs(gap_other) < 0.03);
}

TEST_CASE("trajectories are recorded on request and give the ground-truth NLG") {
  CohortConfig c;
  c.n_students = 30;
  c.record_trajectories = true;
  const auto cohort = generate_cohort(c);
  REQUIRE(cohort.trajectories.size() == 30);
  for (std::size_t i = 0; i < 30; ++i) {
    CHECK(cohort.trajectories[i].rows() == static_cast<Eigen::Index>(cohort.sequences[i].size()));
    CHECK(cohort.trajectories[i].cols() == 10);
    CHECK(cohort.truth[i].nlg == doctest::Approx(nlg(cohort.trajectories[i], 10)));
    const auto last = cohort.trajectories[i].row(cohort.trajectories[i].rows() - 1);
    for (int s = 0; s < 10; ++s) CHECK(last(s) == cohort.truth[i].final_estimate[static_cast<std::size_t>(s)]);
  }
}

TEST_CASE("cohort config validation") {
  CohortConfig c;
  c.min_length = 10;
  c.max_length = 5;
  CHECK_ERROR(kValidation, c.validate());
  c = {};
  c.advantaged_skills = {10};
  CHECK_ERROR(kValidation, c.validate());
  c = {};
  c.stem_fraction = 1.0;
  CHECK_ERROR(kValidation, c.validate());
}
