#include "ktcareer/data_model.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

#include "ktcareer/error.hpp"
#include "text_io.hpp"

namespace ktc {

SkillVocabulary::SkillVocabulary(std::vector<std::string> names) {
  for (auto& n : names) {
    if (ids_.count(n)) throw ValidationError("duplicate skill name '" + n + "' in vocabulary");
    intern(n);
  }
}

std::size_t SkillVocabulary::intern(std::string_view name) {
  const std::string key(name);
  if (auto it = ids_.find(key); it != ids_.end()) return it->second;
  const auto id = names_.size();
  names_.push_back(key);
  ids_.emplace(key, id);
  return id;
}

std::optional<std::size_t> SkillVocabulary::find(std::string_view name) const {
  if (auto it = ids_.find(std::string(name)); it != ids_.end()) return it->second;
  return std::nullopt;
}

std::array<double, 10> StudentProfile::feature_values() const {
  return {num_actions,   ave_know,       ave_correct,  ave_carelessness, ave_res_bored,
          ave_res_engcon, ave_res_conf, ave_res_frust, ave_res_offtask,  ave_res_gaming};
}

void StudentProfile::validate() const {
  if (!(num_actions >= 1.0)) {
    throw ValidationError("student '" + student_id + "': num_actions must be >= 1");
  }
  const auto values = feature_values();
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] >= 0.0 && values[i] <= 1.0)) {
      throw ValidationError("student '" + student_id + "': " + std::string(kProfileFeatureNames[i]) +
                            " must lie in [0,1]");
    }
  }
}

namespace {

std::size_t require_column(const std::vector<std::string>& header, std::string_view name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw ValidationError("schema error: missing required column '" + std::string(name) + "'");
  }
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

ClickstreamData parse_clickstream(std::istream& in, const SkillVocabulary* fixed_vocabulary) {
  std::string line;
  if (!detail::read_header(in, line)) throw ValidationError("schema error: empty clickstream file");
  const auto header = detail::split_fields(line);
  const auto student_col = require_column(header, "student_id");
  const auto skill_col = require_column(header, "skill");
  const auto correct_col = require_column(header, "correct");
  const auto needed = std::max({student_col, skill_col, correct_col}) + 1;

  ClickstreamData data;
  if (fixed_vocabulary) data.vocabulary = *fixed_vocabulary;
  std::unordered_map<std::string, std::size_t> slot;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_line_ending(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (fields.size() < needed || fields[student_col].empty() || fields[skill_col].empty() ||
        fields[correct_col].empty()) {
      ++data.rejected_rows;
      continue;
    }
    const auto& c = fields[correct_col];
    if (c != "0" && c != "1") {
      throw ValidationError("row error at line " + std::to_string(line_no) +
                            ": correctness must be 0 or 1, got '" + c + "'");
    }
    std::size_t skill_id = 0;
    if (fixed_vocabulary) {
      const auto id = data.vocabulary.find(fields[skill_col]);
      if (!id) {
        throw ValidationError("vocabulary error at line " + std::to_string(line_no) +
                              ": unknown skill '" + fields[skill_col] + "'");
      }
      skill_id = *id;
    } else {
      skill_id = data.vocabulary.intern(fields[skill_col]);
    }
    const auto& sid = fields[student_col];
    auto [it, inserted] = slot.try_emplace(sid, data.sequences.size());
    if (inserted) data.sequences.push_back(StudentSequence{sid, {}});
    auto& seq = data.sequences[it->second];
    seq.interactions.push_back(Interaction{sid, skill_id, c == "1" ? 1 : 0, seq.interactions.size()});
    ++data.accepted_rows;
  }
  return data;
}

ClickstreamData parse_clickstream(const std::filesystem::path& path,
                                  const SkillVocabulary* fixed_vocabulary) {
  auto in = detail::open_input(path);
  return parse_clickstream(in, fixed_vocabulary);
}

std::vector<ProfileRecord> parse_profiles(std::istream& in) {
  std::string line;
  if (!detail::read_header(in, line)) throw ValidationError("schema error: empty profile file");
  const auto header = detail::split_fields(line);
  const auto id_col = require_column(header, "student_id");
  const auto year_col = require_column(header, "usage_year");
  std::array<std::size_t, 10> value_cols{};
  for (std::size_t i = 0; i < kProfileFeatureNames.size(); ++i) {
    value_cols[i] = require_column(header, kProfileFeatureNames[i]);
  }
  const auto label_it = std::find(header.begin(), header.end(), "label");
  const std::optional<std::size_t> label_col =
      label_it == header.end() ? std::nullopt
                               : std::optional<std::size_t>(label_it - header.begin());

  std::vector<ProfileRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_line_ending(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    const auto at = [&](std::size_t col) -> const std::string& {
      static const std::string empty;
      return col < fields.size() ? fields[col] : empty;
    };
    ProfileRecord rec;
    rec.profile.student_id = at(id_col);
    if (rec.profile.student_id.empty()) {
      throw ValidationError("row error at line " + std::to_string(line_no) + ": empty student_id");
    }
    rec.profile.usage_year = at(year_col);
    std::array<double, 10> values{};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto v = detail::parse_double(at(value_cols[i]));
      if (!v) {
        throw ValidationError("row error at line " + std::to_string(line_no) + ": column '" +
                              std::string(kProfileFeatureNames[i]) + "' is not a number");
      }
      values[i] = *v;
    }
    auto& p = rec.profile;
    p.num_actions = values[0];
    p.ave_know = values[1];
    p.ave_correct = values[2];
    p.ave_carelessness = values[3];
    p.ave_res_bored = values[4];
    p.ave_res_engcon = values[5];
    p.ave_res_conf = values[6];
    p.ave_res_frust = values[7];
    p.ave_res_offtask = values[8];
    p.ave_res_gaming = values[9];
    try {
      p.validate();
    } catch (const Error& e) {
      throw ValidationError("row error at line " + std::to_string(line_no) + ": " + e.what());
    }
    if (label_col && !at(*label_col).empty()) {
      const auto& l = at(*label_col);
      if (l != "0" && l != "1") {
        throw ValidationError("row error at line " + std::to_string(line_no) +
                              ": label must be 0, 1 or blank");
      }
      rec.label = l == "1" ? 1 : 0;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ProfileRecord> parse_profiles(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return parse_profiles(in);
}

DedupResult deduplicate_labeled(const std::vector<LabeledStudent>& students) {
  DedupResult result;
  std::unordered_map<std::string, std::size_t> seen;
  std::set<std::string> conflicts;
  for (const auto& s : students) {
    auto [it, inserted] = seen.try_emplace(s.profile.student_id, result.students.size());
    if (inserted) {
      result.students.push_back(s);
    } else {
      if (result.students[it->second].label != s.label) conflicts.insert(s.profile.student_id);
      ++result.removed;
    }
  }
  if (!conflicts.empty()) {
    std::string ids;
    for (const auto& id : conflicts) ids += (ids.empty() ? "" : ", ") + id;
    throw ValidationError("conflicting labels for duplicated students: " + ids);
  }
  return result;
}

std::vector<LabeledStudent> labeled_only(const std::vector<ProfileRecord>& records) {
  std::vector<LabeledStudent> out;
  for (const auto& r : records) {
    if (r.label) out.push_back(LabeledStudent{r.profile, *r.label});
  }
  return out;
}

std::vector<std::uint8_t> encode_interaction(std::size_t skill_id, int correct, std::size_t num_skills) {
  if (skill_id >= num_skills) {
    throw ValidationError("range error: skill id " + std::to_string(skill_id) +
                          " outside vocabulary of size " + std::to_string(num_skills));
  }
  std::vector<std::uint8_t> x(2 * num_skills, 0);
  x[skill_id] = 1;
  if (correct) x[num_skills + skill_id] = 1;
  return x;
}

DecodedInteraction decode_interaction(const std::vector<std::uint8_t>& encoded) {
  const auto m = encoded.size() / 2;
  const auto first = std::find(encoded.begin(), encoded.begin() + static_cast<std::ptrdiff_t>(m), 1);
  const auto skill = static_cast<std::size_t>(first - encoded.begin());
  return {skill, skill < m && encoded[m + skill] ? 1 : 0};
}

void write_clickstream(std::ostream& out, const std::vector<StudentSequence>& sequences,
                       const SkillVocabulary& vocabulary) {
  out << "student_id,skill,correct\n";
  for (const auto& seq : sequences) {
    for (const auto& it : seq.interactions) {
      out << seq.student_id << ',' << vocabulary.name(it.skill_id) << ',' << it.correct << '\n';
    }
  }
}

void write_profiles(std::ostream& out, const std::vector<ProfileRecord>& records) {
  out << "student_id,usage_year";
  for (auto name : kProfileFeatureNames) out << ',' << name;
  out << ",label\n";
  for (const auto& r : records) {
    out << r.profile.student_id << ',' << r.profile.usage_year;
    for (double v : r.profile.feature_values()) out << ',' << detail::format_exact(v);
    out << ',';
    if (r.label) out << *r.label;
    out << '\n';
  }
}

void write_vocabulary(std::ostream& out, const SkillVocabulary& vocabulary) {
  out << "skill_id,skill\n";
  for (std::size_t i = 0; i < vocabulary.size(); ++i) out << i << ',' << vocabulary.name(i) << '\n';
}

SkillVocabulary read_vocabulary(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string line;
  if (!detail::read_header(in, line)) throw ValidationError("empty vocabulary file");
  const auto header = detail::split_fields(line);
  const auto skill_col = require_column(header, "skill");
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    detail::strip_line_ending(line);
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (skill_col >= fields.size() || fields[skill_col].empty()) {
      throw ValidationError("vocabulary file has an empty skill name");
    }
    names.push_back(fields[skill_col]);
  }
  return SkillVocabulary(std::move(names));
}

}  // namespace ktc
