#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clinpath/severity.hpp"
#include "support/oracles.hpp"

using namespace clinpath;
using namespace clinpath::severity;

namespace {

const SeverityThresholds kThresholds;

StageClinicalFeatures vitals(double temp, double hr, double rr, double wbc) {
  StageClinicalFeatures f;
  f.temp_max = f.temp_min = temp;
  f.hr_max = hr;
  f.rr_max = rr;
  f.wbc_max = f.wbc_min = wbc;
  return f;
}

// grid cell -> features; SIRS counts 0..4 are realized through actual vitals
StageClinicalFeatures grid_features(bool infection, bool organ, bool hypo_flag, bool fluids,
                                    int sirs, bool hypo_vitals) {
  StageClinicalFeatures f;
  f.infection_suspected = infection;
  f.organ_dysfunction = organ;
  f.hypotension_documented = hypo_flag;
  f.iv_fluids_given = fluids;
  f.temp_max = f.temp_min = sirs >= 1 ? 39.0 : 37.0;
  f.hr_max = sirs >= 2 ? 120.0 : 80.0;
  f.rr_max = sirs >= 3 ? 28.0 : 14.0;
  f.wbc_max = f.wbc_min = sirs >= 4 ? 15.0 : 8.0;
  f.sbp_min = hypo_vitals ? 82.0 : 118.0;
  f.map_min = hypo_vitals ? 58.0 : 82.0;
  return f;
}

}  // namespace

TEST_CASE("score-enum correspondence is exact") {
  CHECK(score(SepsisState::Sirs) == 1);
  CHECK(score(SepsisState::Sepsis) == 2);
  CHECK(score(SepsisState::SevereSepsis) == 3);
  CHECK(score(SepsisState::SepticShock) == 4);
  CHECK(score(SepsisState::Unknown) == 0);
}

TEST_CASE("sirs_count examples") {
  CHECK(sirs_count(vitals(39, 120, 24, 15), kThresholds) == 4);
  CHECK(sirs_count(vitals(37, 80, 14, 8), kThresholds) == 0);

  StageClinicalFeatures partial;
  partial.temp_max = partial.temp_min = 36.5;
  partial.hr_max = 95.0;  // only satisfied criterion
  CHECK(sirs_count(partial, kThresholds) == 1);

  // low-side criteria
  CHECK(sirs_count(vitals(35.0, 80, 14, 3.0), kThresholds) == 2);

  StageClinicalFeatures none;
  CHECK_FALSE(sirs_count(none, kThresholds).has_value());
}

TEST_CASE("classify_severity ladder examples") {
  // infection + 3 SIRS criteria, no organ dysfunction -> Sepsis
  auto f = vitals(39, 120, 24, 8);
  f.infection_suspected = true;
  CHECK(classify_severity(f, kThresholds) == SepsisState::Sepsis);

  // infection + organ dysfunction + hypotension + fluids -> Septic Shock
  f.organ_dysfunction = true;
  f.hypotension_documented = true;
  f.iv_fluids_given = true;
  CHECK(classify_severity(f, kThresholds) == SepsisState::SepticShock);

  // hypotension via vitals instead of the documented flag
  f.hypotension_documented = false;
  f.sbp_min = 82.0;
  CHECK(classify_severity(f, kThresholds) == SepsisState::SepticShock);

  // no fluids: hypotension alone stays severe sepsis
  f.iv_fluids_given = false;
  CHECK(classify_severity(f, kThresholds) == SepsisState::SevereSepsis);

  // no infection, 2 SIRS criteria -> SIRS
  auto g = vitals(39, 120, 14, 8);
  CHECK(classify_severity(g, kThresholds) == SepsisState::Sirs);

  // nothing at all -> Unknown
  StageClinicalFeatures empty;
  CHECK(classify_severity(empty, kThresholds) == SepsisState::Unknown);
}

TEST_CASE("classify_severity equals the truth-table oracle over the full grid") {
  for (int mask = 0; mask < 16; ++mask) {
    const bool infection = mask & 1, organ = mask & 2, hypo_flag = mask & 4, fluids = mask & 8;
    for (int sirs = 0; sirs <= 4; ++sirs) {
      for (int hypo_vitals = 0; hypo_vitals <= 1; ++hypo_vitals) {
        const auto f = grid_features(infection, organ, hypo_flag, fluids, sirs, hypo_vitals != 0);
        const auto expected = oracles::severity_truth_table(infection, organ, hypo_flag, fluids,
                                                            sirs, hypo_vitals != 0);
        CHECK(classify_severity(f, kThresholds) == expected);
      }
    }
  }
}

TEST_CASE("monotonicity: adding a criterion or flag never lowers the score") {
  for (int mask = 0; mask < 16; ++mask) {
    const bool infection = mask & 1, organ = mask & 2, hypo_flag = mask & 4, fluids = mask & 8;
    for (int sirs = 0; sirs <= 4; ++sirs) {
      for (int hypo_vitals = 0; hypo_vitals <= 1; ++hypo_vitals) {
        const auto base = grid_features(infection, organ, hypo_flag, fluids, sirs, hypo_vitals != 0);
        const int base_score = score(classify_severity(base, kThresholds));

        // single-flag increments
        for (int bit = 0; bit < 4; ++bit) {
          auto up = base;
          if (bit == 0) up.infection_suspected = true;
          if (bit == 1) up.organ_dysfunction = true;
          if (bit == 2) up.hypotension_documented = true;
          if (bit == 3) up.iv_fluids_given = true;
          CHECK(score(classify_severity(up, kThresholds)) >= base_score);
        }
        // one more SIRS criterion
        if (sirs < 4) {
          const auto up = grid_features(infection, organ, hypo_flag, fluids, sirs + 1,
                                        hypo_vitals != 0);
          CHECK(score(classify_severity(up, kThresholds)) >= base_score);
        }
        // hypotensive vitals
        if (hypo_vitals == 0) {
          const auto up = grid_features(infection, organ, hypo_flag, fluids, sirs, true);
          CHECK(score(classify_severity(up, kThresholds)) >= base_score);
        }
      }
    }
  }
}

TEST_CASE("flag cui sets load from the fixture") {
  const auto flags = FlagCuiSets::load(std::string(CLINPATH_RESOURCE_DIR) + "/flags.json");
  CHECK(flags.infection.count("C0036690") == 1);       // sepsis
  CHECK(flags.organ_dysfunction.count("C2609414") == 1);  // acute kidney injury
  CHECK(flags.hypotension.count("C0020649") == 1);
  CHECK(flags.iv_fluids.count("C0455142") == 1);
  // round-trip
  const auto reparsed = FlagCuiSets::parse(flags.serialize());
  CHECK(reparsed.infection == flags.infection);
  CHECK(reparsed.iv_fluids == flags.iv_fluids);
}

namespace {

corpus::VitalsRecord vital_on(int day, corpus::VitalItem item, double value) {
  corpus::VitalsRecord rec;
  rec.patient_id = "p1";
  rec.chart_time.civil_day = day - 1;  // anchor at civil day 0
  rec.chart_time.epoch_seconds = rec.chart_time.civil_day * 86400 + 3600;
  rec.item = item;
  rec.value = value;
  return rec;
}

}  // namespace

TEST_CASE("assemble_features aggregates worst-case vitals over the stage days") {
  timeline::Stage stage;
  stage.index = 2;
  stage.day_begin = 3;
  stage.day_end = 5;

  std::vector<corpus::VitalsRecord> vitals_list = {
      vital_on(3, corpus::VitalItem::TempC, 37.0),
      vital_on(4, corpus::VitalItem::TempC, 39.5),
      vital_on(5, corpus::VitalItem::TempC, 35.5),
      vital_on(4, corpus::VitalItem::SystolicBp, 130.0),
      vital_on(5, corpus::VitalItem::SystolicBp, 85.0),
      vital_on(2, corpus::VitalItem::HeartRate, 150.0),  // outside the stage: ignored
  };
  const auto flags = FlagCuiSets{};
  const auto f = assemble_features(stage, vitals_list, 0, flags);
  CHECK(f.temp_max == doctest::Approx(39.5));
  CHECK(f.temp_min == doctest::Approx(35.5));
  CHECK(f.sbp_min == doctest::Approx(85.0));
  CHECK_FALSE(f.hr_max.has_value());
}

TEST_CASE("severity_timeline: flags come only from positive CUIs") {
  FlagCuiSets flags;
  flags.hypotension.insert("C0020649");
  flags.infection.insert("C0036690");

  timeline::StageSeries series;
  series.patient_id = "p1";
  timeline::Stage s1;
  s1.index = 1;
  s1.day_begin = 1;
  s1.day_end = 2;
  s1.conditions["C0020649"] = Polarity::Negative;  // "neg hypotension"
  series.stages.push_back(s1);
  timeline::Stage s2;
  s2.index = 2;
  s2.day_begin = 3;
  s2.day_end = 3;
  series.stages.push_back(s2);  // no vitals, no flags

  const auto timeline = severity_timeline(series, {}, 0, flags, kThresholds);
  REQUIRE(timeline.stages.size() == 2);
  CHECK_FALSE(timeline.stages[0].features.hypotension_documented);
  CHECK(timeline.stages[0].state == SepsisState::Unknown);  // nothing else present
  CHECK(timeline.stages[1].state == SepsisState::Unknown);
}

TEST_CASE("severity csv round-trip") {
  SeverityTimeline t;
  t.patient_id = "p1";
  t.stages.push_back({SepsisState::Sepsis, {}});
  t.stages.push_back({SepsisState::Unknown, {}});
  t.stages.push_back({SepsisState::SepticShock, {}});
  const auto csv = severity_to_csv({t});
  CHECK(csv.find("p1,1,Sepsis,2") != std::string::npos);
  CHECK(csv.find("p1,2,Unknown,") != std::string::npos);
  CHECK(csv.find("p1,3,SepticShock,4") != std::string::npos);
  const auto parsed = severity_from_csv(csv);
  REQUIRE(parsed.size() == 1);
  REQUIRE(parsed[0].stages.size() == 3);
  CHECK(parsed[0].stages[0].state == SepsisState::Sepsis);
  CHECK(parsed[0].stages[1].state == SepsisState::Unknown);
  CHECK(parsed[0].stages[2].state == SepsisState::SepticShock);
}
