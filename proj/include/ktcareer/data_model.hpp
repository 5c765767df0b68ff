#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ktc {

struct Interaction {
  std::string student_id;
  std::size_t skill_id = 0;
  int correct = 0;
  std::size_t order = 0;
};

struct StudentSequence {
  std::string student_id;
  std::vector<Interaction> interactions;

  std::size_t size() const { return interactions.size(); }
};

// Dense bidirectional skill-name <-> id map. Ids are assigned in insertion order.
class SkillVocabulary {
 public:
  SkillVocabulary() = default;
  explicit SkillVocabulary(std::vector<std::string> names);

  std::size_t intern(std::string_view name);
  std::optional<std::size_t> find(std::string_view name) const;
  const std::string& name(std::size_t id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Profile attributes in modeling order; usage_year is carried but never modeled.
inline constexpr std::array<std::string_view, 10> kProfileFeatureNames = {
    "num_actions",      "ave_know",      "ave_correct",      "ave_carelessness",
    "ave_res_bored",    "ave_res_engcon", "ave_res_conf",    "ave_res_frust",
    "ave_res_offtask",  "ave_res_gaming"};

struct StudentProfile {
  std::string student_id;
  std::string usage_year;
  double num_actions = 1.0;
  double ave_know = 0.0;
  double ave_correct = 0.0;
  double ave_carelessness = 0.0;
  double ave_res_bored = 0.0;
  double ave_res_engcon = 0.0;
  double ave_res_conf = 0.0;
  double ave_res_frust = 0.0;
  double ave_res_offtask = 0.0;
  double ave_res_gaming = 0.0;

  // The ten modeled attributes, ordered as kProfileFeatureNames.
  std::array<double, 10> feature_values() const;
  void validate() const;
};

struct LabeledStudent {
  StudentProfile profile;
  int label = 0;  // 1 = STEM
};

struct ProfileRecord {
  StudentProfile profile;
  std::optional<int> label;
};

struct ClickstreamData {
  std::vector<StudentSequence> sequences;
  SkillVocabulary vocabulary;
  std::size_t rejected_rows = 0;
  std::size_t accepted_rows = 0;
};

// Reads `student_id,skill,correct` rows (extra columns ignored). When
// `fixed_vocabulary` is given, unknown skills are an error and ids follow it.
ClickstreamData parse_clickstream(std::istream& in,
                                  const SkillVocabulary* fixed_vocabulary = nullptr);
ClickstreamData parse_clickstream(const std::filesystem::path& path,
                                  const SkillVocabulary* fixed_vocabulary = nullptr);

std::vector<ProfileRecord> parse_profiles(std::istream& in);
std::vector<ProfileRecord> parse_profiles(const std::filesystem::path& path);

struct DedupResult {
  std::vector<LabeledStudent> students;
  std::size_t removed = 0;
};

DedupResult deduplicate_labeled(const std::vector<LabeledStudent>& students);

// Labeled subset of a profile table, in file order.
std::vector<LabeledStudent> labeled_only(const std::vector<ProfileRecord>& records);

// 2M-wide input vector: one-hot skill in [0,M), one-hot skill again in [M,2M)
// when the answer is correct.
std::vector<std::uint8_t> encode_interaction(std::size_t skill_id, int correct, std::size_t num_skills);

struct DecodedInteraction {
  std::size_t skill_id;
  int correct;
};
DecodedInteraction decode_interaction(const std::vector<std::uint8_t>& encoded);

void write_clickstream(std::ostream& out, const std::vector<StudentSequence>& sequences,
                       const SkillVocabulary& vocabulary);
void write_profiles(std::ostream& out, const std::vector<ProfileRecord>& records);
void write_vocabulary(std::ostream& out, const SkillVocabulary& vocabulary);
SkillVocabulary read_vocabulary(const std::filesystem::path& path);

}  // namespace ktc
