#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "check_error.hpp"
#include "ktcareer/data_model.hpp"
#include "ktcareer/error.hpp"

using namespace ktc;

namespace {

const char* kProfileHeader =
    "student_id,usage_year,num_actions,ave_know,ave_correct,ave_carelessness,ave_res_bored,ave_res_engcon,"
    "ave_res_conf,ave_res_frust,ave_res_offtask,ave_res_gaming,label\n";

std::string profile_row(const std::string& id, const std::string& label, double know = 0.4) {
  std::ostringstream os;
  os << id << ",2004," << 120 << ',' << know << ",0.5,0.1,0.2,0.6,0.1,0.1,0.2,0.05," << label << '\n';
  return os.str();
}

}  // namespace

TEST_CASE("clickstream groups rows per student in file order") {
  std::istringstream in("student_id,skill,correct\ns1,add,1\ns2,sub,0\ns1,sub,0\ns1,add,1\n");
  const auto data = parse_clickstream(in);
  REQUIRE(data.sequences.size() == 2);
  CHECK(data.vocabulary.size() == 2);
  CHECK(data.accepted_rows == 4);
  const auto& s1 = data.sequences[0];
  CHECK(s1.student_id == "s1");
  REQUIRE(s1.size() == 3);
  CHECK(s1.interactions[0].skill_id == 0);
  CHECK(s1.interactions[1].skill_id == 1);
  CHECK(s1.interactions[2].correct == 1);
  CHECK(s1.interactions[2].order == 2);
}

TEST_CASE("clickstream tolerates BOM, CRLF and extra columns") {
  std::istringstream in("\xEF\xBB\xBFtime,student_id,correct,skill\r\n5,a,1,x\r\n6,a,0,y\r\n");
  const auto data = parse_clickstream(in);
  REQUIRE(data.sequences.size() == 1);
  CHECK(data.sequences[0].size() == 2);
  CHECK(data.vocabulary.name(1) == "y");
}

TEST_CASE("clickstream rows with an empty required field are rejected and counted") {
  std::istringstream in("student_id,skill,correct\ns1,add,1\n,add,1\ns1,,0\ns1,add,\ns1,sub,0\n");
  const auto data = parse_clickstream(in);
  CHECK(data.rejected_rows == 3);
  CHECK(data.accepted_rows == 2);
  CHECK(data.sequences.at(0).size() == 2);
}

TEST_CASE("clickstream correctness outside 0/1 is a row error with the line number") {
  std::istringstream in("student_id,skill,correct\ns1,add,1\ns1,add,2\n");
  try {
    parse_clickstream(in);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kValidation);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("clickstream with a missing column is a schema error") {
  std::istringstream in("student_id,skill\ns1,add\n");
  CHECK_ERROR_MSG(kValidation, "'correct'", parse_clickstream(in));
}

TEST_CASE("fixed vocabulary keeps ids and rejects unknown skills") {
  SkillVocabulary vocab({"b", "a"});
  std::istringstream ok("student_id,skill,correct\ns,a,1\ns,b,0\n");
  const auto data = parse_clickstream(ok, &vocab);
  CHECK(data.sequences[0].interactions[0].skill_id == 1);
  CHECK(data.sequences[0].interactions[1].skill_id == 0);
  std::istringstream bad("student_id,skill,correct\ns,c,1\n");
  CHECK_ERROR_MSG(kValidation, "unknown skill 'c'", parse_clickstream(bad, &vocab));
}

TEST_CASE("vocabulary rejects duplicate names") {
  CHECK_ERROR(kValidation, SkillVocabulary({"a", "b", "a"}));
  SkillVocabulary v;
  CHECK(v.intern("x") == 0);
  CHECK(v.intern("y") == 1);
  CHECK(v.intern("x") == 0);
  CHECK_FALSE(v.find("z").has_value());
}

TEST_CASE("vocabulary round-trips through a file") {
  SkillVocabulary v({"alpha", "beta", "gamma"});
  std::ostringstream out;
  write_vocabulary(out, v);
  const auto path = std::filesystem::temp_directory_path() / "ktc_vocab_roundtrip.csv";
  {
    std::ofstream f(path);
    f << out.str();
  }
  const auto back = read_vocabulary(path);
  CHECK(back.names() == v.names());
  std::filesystem::remove(path);
}

TEST_CASE("profiles parse labels, blanks and enforce ranges") {
  std::string text = kProfileHeader;
  text += profile_row("a", "1") + profile_row("b", "") + profile_row("c", "0");
  std::istringstream in(text);
  const auto rec = parse_profiles(in);
  REQUIRE(rec.size() == 3);
  CHECK(rec[0].label == 1);
  CHECK_FALSE(rec[1].label.has_value());
  CHECK(rec[2].label == 0);
  CHECK(rec[0].profile.ave_know == doctest::Approx(0.4));
  CHECK(labeled_only(rec).size() == 2);

  std::istringstream bad(std::string(kProfileHeader) + profile_row("d", "1", 1.5));
  CHECK_ERROR_MSG(kValidation, "ave_know", parse_profiles(bad));
  std::istringstream bad_label(std::string(kProfileHeader) + profile_row("d", "2"));
  CHECK_ERROR(kValidation, parse_profiles(bad_label));
}

TEST_CASE("profile feature order is fixed") {
  StudentProfile p;
  p.num_actions = 10;
  p.ave_know = 0.1;
  p.ave_res_gaming = 0.9;
  const auto v = p.feature_values();
  CHECK(v[0] == 10);
  CHECK(v[1] == 0.1);
  CHECK(v[9] == 0.9);
  CHECK(kProfileFeatureNames[3] == "ave_carelessness");
}

TEST_CASE("deduplication keeps first occurrences and reports conflicts") {
  auto make = [](const char* id, int label) {
    LabeledStudent s;
    s.profile.student_id = id;
    s.label = label;
    return s;
  };
  const auto r = deduplicate_labeled({make("a", 1), make("b", 0), make("a", 1), make("a", 1)});
  CHECK(r.students.size() == 2);
  CHECK(r.removed == 2);
  CHECK(r.students[0].profile.student_id == "a");
  CHECK_ERROR_MSG(kValidation, "x", deduplicate_labeled({make("x", 1), make("y", 0), make("x", 0)}));
}

TEST_CASE("interaction encoding is a bijection") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + rng() % 40;
    const std::size_t skill = rng() % m;
    const int correct = static_cast<int>(rng() % 2);
    const auto x = encode_interaction(skill, correct, m);
    REQUIRE(x.size() == 2 * m);
    int ones = 0;
    for (auto b : x) ones += b;
    CHECK(ones == 1 + correct);
    const auto d = decode_interaction(x);
    CHECK(d.skill_id == skill);
    CHECK(d.correct == correct);
  }
  CHECK_ERROR_MSG(kValidation, "range error", encode_interaction(5, 1, 5));
}

TEST_CASE("clickstream writer and parser round-trip") {
  std::istringstream in("student_id,skill,correct\ns1,add,1\ns2,sub,0\ns1,sub,0\n");
  const auto data = parse_clickstream(in);
  std::ostringstream out;
  write_clickstream(out, data.sequences, data.vocabulary);
  std::istringstream again(out.str());
  const auto back = parse_clickstream(again);
  REQUIRE(back.sequences.size() == data.sequences.size());
  for (std::size_t i = 0; i < back.sequences.size(); ++i) {
    REQUIRE(back.sequences[i].size() == data.sequences[i].size());
    for (std::size_t t = 0; t < back.sequences[i].size(); ++t) {
      CHECK(back.vocabulary.name(back.sequences[i].interactions[t].skill_id) ==
            data.vocabulary.name(data.sequences[i].interactions[t].skill_id));
      CHECK(back.sequences[i].interactions[t].correct == data.sequences[i].interactions[t].correct);
    }
  }
}
