#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clinpath/corpus.hpp"
#include "clinpath/timeline.hpp"

namespace clinpath::severity {

struct StageClinicalFeatures {
  std::optional<double> temp_max, temp_min;
  std::optional<double> hr_max, rr_max;
  std::optional<double> wbc_max, wbc_min;
  std::optional<double> sbp_min, map_min;
  bool infection_suspected = false;
  bool organ_dysfunction = false;
  bool hypotension_documented = false;
  bool iv_fluids_given = false;

  bool has_any_vital() const {
    return temp_max || hr_max || rr_max || wbc_max;
  }
};

// SIRS and hypotension cutoffs; the framework fixes the states, the numbers
// are configuration.
struct SeverityThresholds {
  double temp_high = 38.0, temp_low = 36.0;
  double hr_high = 90.0;
  double rr_high = 20.0;
  double wbc_high = 12.0, wbc_low = 4.0;
  double sbp_low = 90.0, map_low = 65.0;
};

enum class SepsisState { Unknown = 0, Sirs = 1, Sepsis = 2, SevereSepsis = 3, SepticShock = 4 };

// SIRS: 1, Sepsis: 2, Severe Sepsis: 3, Septic Shock: 4; Unknown scores 0.
int score(SepsisState s);
std::string_view to_string(SepsisState s);

// Count of satisfied SIRS criteria (temperature, heart rate, respiratory
// rate, WBC); missing vitals contribute 0. Empty when all four are missing.
std::optional<int> sirs_count(const StageClinicalFeatures& f, const SeverityThresholds& t);

// Severity ladder: septic shock needs infection + organ dysfunction +
// hypotension despite fluids; severe sepsis infection + organ dysfunction;
// sepsis infection + >= 2 SIRS criteria; SIRS >= 2 criteria; else Unknown.
SepsisState classify_severity(const StageClinicalFeatures& f, const SeverityThresholds& t);

struct FlagCuiSets {
  std::set<std::string> infection;
  std::set<std::string> organ_dysfunction;
  std::set<std::string> hypotension;
  std::set<std::string> iv_fluids;

  static FlagCuiSets parse(std::string_view json_text);
  static FlagCuiSets load(const std::string& path);
  std::string serialize() const;
};

struct StageSeverity {
  SepsisState state = SepsisState::Unknown;
  StageClinicalFeatures features;
};

struct SeverityTimeline {
  std::string patient_id;
  std::vector<StageSeverity> stages;
  std::optional<corpus::Disposition> disposition;
};

// Vitals aggregates are worst-case over the stage's days; note flags derive
// from Positive CUIs only.
StageClinicalFeatures assemble_features(const timeline::Stage& stage,
                                        const std::vector<corpus::VitalsRecord>& patient_vitals,
                                        std::int64_t anchor_day, const FlagCuiSets& flags);

SeverityTimeline severity_timeline(const timeline::StageSeries& series,
                                   const std::vector<corpus::VitalsRecord>& patient_vitals,
                                   std::int64_t anchor_day, const FlagCuiSets& flags,
                                   const SeverityThresholds& thresholds);

// patient_id,stage,state,score (score empty for Unknown)
std::string severity_to_csv(const std::vector<SeverityTimeline>& timelines);
std::vector<SeverityTimeline> severity_from_csv(std::string_view csv);

}  // namespace clinpath::severity
