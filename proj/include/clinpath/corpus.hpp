#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clinpath/iso8601.hpp"

namespace clinpath::corpus {

enum class NoteCategory { Nursing, Radiology, Ecg, DischargeSummary };

std::optional<NoteCategory> note_category_from_string(std::string_view s);
std::string_view to_string(NoteCategory c);

struct ClinicalNote {
  std::string patient_id;
  std::string note_id;
  NoteCategory category = NoteCategory::Nursing;
  Timestamp chart_time;
  std::string text;
};

enum class VitalItem { TempC, HeartRate, RespRate, Wbc, SystolicBp, MeanArterialPressure };
inline constexpr int kVitalItemCount = 6;

std::optional<VitalItem> vital_item_from_string(std::string_view s);
std::string_view to_string(VitalItem item);
// item-specific plausible range, inclusive
std::pair<double, double> plausible_range(VitalItem item);

struct VitalsRecord {
  std::string patient_id;
  Timestamp chart_time;
  VitalItem item = VitalItem::TempC;
  double value = 0.0;
};

enum class DischargeStatus { Decease, Discharge };
std::string_view to_string(DischargeStatus s);

struct Disposition {
  std::string patient_id;
  DischargeStatus status = DischargeStatus::Discharge;
  int discharge_day = 1;  // day 1 = admission day
};

struct Demographics {
  std::string patient_id;
  std::optional<std::string> sex;  // "M" / "F"
  std::optional<int> age_years;
};

struct RejectRecord {
  std::string source;
  std::size_t line = 0;
  std::string reason;
};

std::string rejects_to_csv(const std::vector<RejectRecord>& rejects);

struct NotesLoad {
  std::vector<ClinicalNote> notes;  // sorted by (patient_id, chart_time)
  std::vector<RejectRecord> rejects;
};

struct VitalsLoad {
  std::vector<VitalsRecord> records;  // sorted by (patient_id, chart_time)
  std::vector<RejectRecord> rejects;
};

// JSONL, one object per line; malformed lines are recorded and skipped.
// Throws if no valid record remains.
NotesLoad load_notes(const std::string& path);
NotesLoad parse_notes(std::string_view jsonl, std::string_view source_name);

// CSV with header patient_id,chart_time,item,value.
VitalsLoad load_vitals(const std::string& path);
VitalsLoad parse_vitals(std::string_view csv, std::string_view source_name);

std::vector<Demographics> load_demographics(const std::string& path);
std::vector<Demographics> parse_demographics(std::string_view jsonl);

struct DeceasePatterns {
  // matched case-insensitively as whole-word phrases
  std::vector<std::string> patterns;
  static DeceasePatterns defaults();
  static DeceasePatterns load(const std::string& path);  // one pattern per line
};

bool matches_decease_pattern(std::string_view text, const DeceasePatterns& patterns);

struct Patient {
  std::string patient_id;
  std::vector<ClinicalNote> notes;    // chart_time ascending
  std::vector<VitalsRecord> vitals;   // chart_time ascending
  std::optional<Demographics> demographics;
  std::int64_t anchor_day = 0;  // civil day of the first event; maps to day 1
  int los_days = 1;             // day index of the last event
  std::optional<Disposition> disposition;
};

struct Cohort {
  std::vector<Patient> patients;  // sorted by patient_id
  const Patient* find(std::string_view patient_id) const;
};

// 1-based hospital-day index relative to the patient's anchor day.
int day_index(std::int64_t anchor_day, const Timestamp& t);

// Assembles per-patient trajectories. Events after the first discharge
// summary's day belong to a later admission and are dropped.
Cohort build_cohort(const NotesLoad& notes, const VitalsLoad& vitals,
                    const std::vector<Demographics>& demographics,
                    const DeceasePatterns& decease_patterns);

// Scans a patient's discharge summaries; absent when the patient has none.
std::optional<Disposition> extract_disposition(const Patient& patient,
                                               const DeceasePatterns& patterns);

struct CohortSummary {
  std::size_t n_patients = 0;
  double pct_male = 0.0, pct_female = 0.0;
  double pct_age_lt18 = 0.0, pct_age_18_40 = 0.0, pct_age_41_60 = 0.0,
         pct_age_61_80 = 0.0, pct_age_gt80 = 0.0;
  double mean_length_of_stay_days = 0.0;
};

CohortSummary cohort_stats(const Cohort& cohort);  // throws on zero patients

std::string summary_to_json(const CohortSummary& s);

}  // namespace clinpath::corpus
