#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "clinpath/corpus.hpp"
#include "clinpath/io_util.hpp"
#include "clinpath/rng.hpp"

using namespace clinpath;
using namespace clinpath::corpus;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream(path, std::ios::trunc) << content;
  return path;
}

const char* kThreeNotes =
    R"({"patient_id":"p1","note_id":"n3","category":"nursing","chart_time":"2020-01-03T08:00:00Z","text":"day three"}
{"patient_id":"p1","note_id":"n1","category":"nursing","chart_time":"2020-01-01T08:00:00Z","text":"day one"}
{"patient_id":"p1","note_id":"n2","category":"nursing","chart_time":"2020-01-02T08:00:00Z","text":"day two"}
)";

}  // namespace

TEST_CASE("iso8601 parsing") {
  auto t = parse_iso8601("2020-01-02T03:04:05Z");
  REQUIRE(t.has_value());
  CHECK(t->civil_day == days_from_civil(2020, 1, 2));
  CHECK(t->epoch_seconds == t->civil_day * 86400 + 3 * 3600 + 4 * 60 + 5);
  CHECK(format_iso8601(*t) == "2020-01-02T03:04:05Z");

  CHECK(parse_iso8601("2020-01-02 03:04:05").has_value());
  CHECK(parse_iso8601("2020-01-02T03:04:05.123Z").has_value());
  CHECK(parse_iso8601("2020-01-02T03:04").has_value());
  // offsets are normalized to UTC
  auto off = parse_iso8601("2020-01-02T03:04:05+02:00");
  REQUIRE(off.has_value());
  CHECK(off->epoch_seconds == t->epoch_seconds - 2 * 3600);
  CHECK_FALSE(parse_iso8601("not a time").has_value());
  CHECK_FALSE(parse_iso8601("2020-13-02T03:04:05Z").has_value());
}

TEST_CASE("load_notes: empty file is fatal") {
  const auto path = write_temp("clinpath_empty.jsonl", "");
  CHECK_THROWS_WITH_AS(load_notes(path), doctest::Contains("no records"), std::runtime_error);
}

TEST_CASE("load_notes: single valid record") {
  const auto path = write_temp(
      "clinpath_one.jsonl",
      R"({"patient_id":"p1","note_id":"n1","category":"nursing","chart_time":"2020-01-01T00:00:00Z","text":"ok"})"
      "\n");
  const auto loaded = load_notes(path);
  REQUIRE(loaded.notes.size() == 1);
  CHECK(loaded.rejects.empty());
  CHECK(loaded.notes[0].patient_id == "p1");
  CHECK(loaded.notes[0].category == NoteCategory::Nursing);
}

TEST_CASE("load_notes: shuffled timestamps come back sorted") {
  const auto path = write_temp("clinpath_three.jsonl", kThreeNotes);
  const auto loaded = load_notes(path);
  REQUIRE(loaded.notes.size() == 3);
  CHECK(loaded.notes[0].note_id == "n1");
  CHECK(loaded.notes[1].note_id == "n2");
  CHECK(loaded.notes[2].note_id == "n3");
}

TEST_CASE("load_notes: malformed line recorded with line number, loading continues") {
  const auto path = write_temp(
      "clinpath_bad.jsonl",
      "this is not json\n"
      R"({"patient_id":"p1","note_id":"n1","category":"nursing","chart_time":"2020-01-01T00:00:00Z","text":"ok"})"
      "\n"
      R"({"patient_id":"p1","note_id":"n2","category":"telepathy","chart_time":"2020-01-01T00:00:00Z","text":"ok"})"
      "\n");
  const auto loaded = load_notes(path);
  CHECK(loaded.notes.size() == 1);
  REQUIRE(loaded.rejects.size() == 2);
  CHECK(loaded.rejects[0].line == 1);
  CHECK(loaded.rejects[1].line == 3);
  CHECK(loaded.rejects[1].reason == "unknown category");
}

TEST_CASE("load_notes is deterministic") {
  const auto path = write_temp("clinpath_det.jsonl", kThreeNotes);
  const auto a = load_notes(path);
  const auto b = load_notes(path);
  REQUIRE(a.notes.size() == b.notes.size());
  for (std::size_t i = 0; i < a.notes.size(); ++i) {
    CHECK(a.notes[i].note_id == b.notes[i].note_id);
    CHECK(a.notes[i].text == b.notes[i].text);
  }
}

TEST_CASE("load_vitals: range checks and grouping") {
  const auto path = write_temp("clinpath_vitals.csv",
                               "patient_id,chart_time,item,value\n"
                               "p1,2020-01-01T00:00:00Z,temp_c,37.0\n"
                               "p1,2020-01-01T01:00:00Z,temp_c,99.1\n"
                               "p1,2020-01-01T02:00:00Z,heart_rate,80\n"
                               "p1,2020-01-01T03:00:00Z,wbc,9.5\n"
                               "p2,2020-01-01T00:00:00Z,resp_rate,18\n"
                               "p2,2020-01-01T01:00:00Z,systolic_bp,120\n"
                               "p2,2020-01-01T02:00:00Z,mean_arterial_pressure,85\n"
                               "p2,2020-01-01T03:00:00Z,oxygen,97\n");
  const auto loaded = load_vitals(path);
  CHECK(loaded.records.size() == 6);  // two patients x three accepted rows
  REQUIRE(loaded.rejects.size() == 2);
  CHECK(loaded.rejects[0].reason == "out of range");  // the Fahrenheit temperature
  CHECK(loaded.rejects[1].reason == "unknown item");
  std::size_t p1 = 0, p2 = 0;
  for (const auto& r : loaded.records) (r.patient_id == "p1" ? p1 : p2)++;
  CHECK(p1 == 3);
  CHECK(p2 == 3);
}

TEST_CASE("accepted vitals always satisfy their range invariant") {
  Rng rng(99);
  std::string csv = "patient_id,chart_time,item,value\n";
  const char* items[] = {"temp_c", "heart_rate", "resp_rate", "wbc", "systolic_bp",
                         "mean_arterial_pressure"};
  for (int i = 0; i < 300; ++i) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "p%d,2020-01-01T00:00:00Z,%s,%.2f\n",
                  static_cast<int>(rng.below(5)), items[rng.below(6)],
                  rng.uniform(-50.0, 400.0));
    csv += buf;
  }
  const auto loaded = parse_vitals(csv, "random");
  for (const auto& rec : loaded.records) {
    const auto [lo, hi] = plausible_range(rec.item);
    CHECK(rec.value >= lo);
    CHECK(rec.value <= hi);
  }
}

namespace {

Patient patient_with_summary(const std::string& text) {
  Patient p;
  p.patient_id = "p1";
  ClinicalNote note;
  note.patient_id = "p1";
  note.note_id = "n1";
  note.category = NoteCategory::DischargeSummary;
  note.chart_time = *parse_iso8601("2020-01-05T12:00:00Z");
  note.text = text;
  p.anchor_day = days_from_civil(2020, 1, 1);
  p.notes.push_back(std::move(note));
  return p;
}

}  // namespace

TEST_CASE("extract_disposition keyword cases") {
  const auto patterns = DeceasePatterns::defaults();
  auto check_status = [&](const std::string& text, DischargeStatus expected) {
    const auto d = extract_disposition(patient_with_summary(text), patterns);
    REQUIRE(d.has_value());
    CHECK(d->status == expected);
  };
  check_status("Patient expired at 0310.", DischargeStatus::Decease);
  check_status("Discharged home in stable condition.", DischargeStatus::Discharge);
  check_status("Family meeting held; patient deceased peacefully.", DischargeStatus::Decease);
  check_status("Patient passed away surrounded by family.", DischargeStatus::Decease);
  // whole-word matching: substrings do not fire
  check_status("Fears about deathly outcomes were discussed.", DischargeStatus::Discharge);
  check_status("The unexpired medication list was reviewed.", DischargeStatus::Discharge);

  // discharge day is relative to the admission anchor
  const auto d = extract_disposition(patient_with_summary("expired"), patterns);
  CHECK(d->discharge_day == 5);
}

TEST_CASE("decease pattern file round-trips") {
  const auto patterns = DeceasePatterns::load(std::string(CLINPATH_RESOURCE_DIR) +
                                              "/decease_patterns.txt");
  REQUIRE(patterns.patterns.size() == 4);
  CHECK(matches_decease_pattern("patient EXPIRED overnight", patterns));
  CHECK(matches_decease_pattern("has passed away", patterns));
  CHECK_FALSE(matches_decease_pattern("passed the away team", patterns));
}

TEST_CASE("extract_disposition absent without a discharge summary") {
  Patient p;
  p.patient_id = "p1";
  ClinicalNote note;
  note.patient_id = "p1";
  note.category = NoteCategory::Nursing;
  note.chart_time = *parse_iso8601("2020-01-01T00:00:00Z");
  note.text = "patient expired";  // not a summary; ignored
  p.notes.push_back(note);
  CHECK_FALSE(extract_disposition(p, DeceasePatterns::defaults()).has_value());
}

TEST_CASE("build_cohort anchors day 1 at the first event and keeps only the first admission") {
  NotesLoad notes;
  auto add_note = [&](const char* id, const char* time, NoteCategory cat, const char* text) {
    ClinicalNote n;
    n.patient_id = "p1";
    n.note_id = id;
    n.category = cat;
    n.chart_time = *parse_iso8601(time);
    n.text = text;
    notes.notes.push_back(std::move(n));
  };
  add_note("n1", "2020-01-02T08:00:00Z", NoteCategory::Nursing, "first note");
  add_note("n2", "2020-01-04T08:00:00Z", NoteCategory::DischargeSummary, "Discharged home.");
  add_note("n3", "2020-02-01T08:00:00Z", NoteCategory::Nursing, "readmission note");

  VitalsLoad vitals;
  VitalsRecord rec;
  rec.patient_id = "p1";
  rec.chart_time = *parse_iso8601("2020-01-01T06:00:00Z");  // earliest event
  rec.item = VitalItem::HeartRate;
  rec.value = 80.0;
  vitals.records.push_back(rec);

  const auto cohort = build_cohort(notes, vitals, {}, DeceasePatterns::defaults());
  REQUIRE(cohort.patients.size() == 1);
  const Patient& p = cohort.patients[0];
  CHECK(p.anchor_day == days_from_civil(2020, 1, 1));
  CHECK(p.los_days == 4);  // the readmission note is dropped
  CHECK(p.notes.size() == 2);
  REQUIRE(p.disposition.has_value());
  CHECK(p.disposition->discharge_day == 4);
  CHECK(day_index(p.anchor_day, *parse_iso8601("2020-01-02T23:59:00Z")) == 2);
}

TEST_CASE("cohort_stats") {
  Cohort cohort;
  auto add = [&](const char* pid, int los, const char* sex, int age) {
    Patient p;
    p.patient_id = pid;
    p.los_days = los;
    Demographics d;
    d.patient_id = pid;
    d.sex = sex;
    d.age_years = age;
    p.demographics = d;
    cohort.patients.push_back(std::move(p));
  };

  SUBCASE("single male patient") {
    add("p1", 5, "M", 70);
    const auto s = cohort_stats(cohort);
    CHECK(s.n_patients == 1);
    CHECK(s.pct_male == doctest::Approx(100.0));
    CHECK(s.mean_length_of_stay_days == doctest::Approx(5.0));
    CHECK(s.pct_age_61_80 == doctest::Approx(100.0));
  }

  SUBCASE("mean length of stay") {
    add("p1", 4, "M", 30);
    add("p2", 8, "F", 85);
    const auto s = cohort_stats(cohort);
    CHECK(s.mean_length_of_stay_days == doctest::Approx(6.0));
    CHECK(s.pct_male == doctest::Approx(50.0));
    CHECK(s.pct_female == doctest::Approx(50.0));
    CHECK(s.pct_male + s.pct_female == doctest::Approx(100.0).epsilon(1e-3));
    CHECK(s.pct_age_18_40 == doctest::Approx(50.0));
    CHECK(s.pct_age_gt80 == doctest::Approx(50.0));
  }

  SUBCASE("zero patients is an error") {
    CHECK_THROWS_AS(cohort_stats(cohort), std::runtime_error);
  }
}
