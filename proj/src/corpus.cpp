#include "clinpath/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/io_util.hpp"

namespace clinpath::corpus {

using nlohmann::json;

std::optional<NoteCategory> note_category_from_string(std::string_view s) {
  if (s == "nursing") return NoteCategory::Nursing;
  if (s == "radiology") return NoteCategory::Radiology;
  if (s == "ecg") return NoteCategory::Ecg;
  if (s == "discharge_summary") return NoteCategory::DischargeSummary;
  return std::nullopt;
}

std::string_view to_string(NoteCategory c) {
  switch (c) {
    case NoteCategory::Nursing: return "nursing";
    case NoteCategory::Radiology: return "radiology";
    case NoteCategory::Ecg: return "ecg";
    case NoteCategory::DischargeSummary: return "discharge_summary";
  }
  return "nursing";
}

std::optional<VitalItem> vital_item_from_string(std::string_view s) {
  if (s == "temp_c") return VitalItem::TempC;
  if (s == "heart_rate") return VitalItem::HeartRate;
  if (s == "resp_rate") return VitalItem::RespRate;
  if (s == "wbc") return VitalItem::Wbc;
  if (s == "systolic_bp") return VitalItem::SystolicBp;
  if (s == "mean_arterial_pressure") return VitalItem::MeanArterialPressure;
  return std::nullopt;
}

std::string_view to_string(VitalItem item) {
  switch (item) {
    case VitalItem::TempC: return "temp_c";
    case VitalItem::HeartRate: return "heart_rate";
    case VitalItem::RespRate: return "resp_rate";
    case VitalItem::Wbc: return "wbc";
    case VitalItem::SystolicBp: return "systolic_bp";
    case VitalItem::MeanArterialPressure: return "mean_arterial_pressure";
  }
  return "temp_c";
}

std::pair<double, double> plausible_range(VitalItem item) {
  switch (item) {
    case VitalItem::TempC: return {25.0, 45.0};
    case VitalItem::HeartRate: return {0.0, 300.0};
    case VitalItem::RespRate: return {0.0, 80.0};
    case VitalItem::Wbc: return {0.0, 200.0};
    case VitalItem::SystolicBp: return {0.0, 300.0};
    case VitalItem::MeanArterialPressure: return {0.0, 300.0};
  }
  return {0.0, 0.0};
}

std::string_view to_string(DischargeStatus s) {
  return s == DischargeStatus::Decease ? "Decease" : "Discharge";
}

std::string rejects_to_csv(const std::vector<RejectRecord>& rejects) {
  std::ostringstream out;
  out << "source,line,reason\n";
  for (const auto& r : rejects) {
    std::string reason = r.reason;
    for (char& c : reason) {
      if (c == ',') c = ';';
    }
    out << r.source << ',' << r.line << ',' << reason << '\n';
  }
  return out.str();
}

NotesLoad parse_notes(std::string_view jsonl, std::string_view source_name) {
  NotesLoad out;
  const auto lines = split_lines(jsonl);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const std::size_t line_no = i + 1;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      out.rejects.push_back({std::string(source_name), line_no, "malformed json"});
      continue;
    }
    ClinicalNote note;
    try {
      note.patient_id = obj.at("patient_id").get<std::string>();
      note.note_id = obj.at("note_id").get<std::string>();
      const auto category = note_category_from_string(obj.at("category").get<std::string>());
      if (!category) {
        out.rejects.push_back({std::string(source_name), line_no, "unknown category"});
        continue;
      }
      note.category = *category;
      const auto ts = parse_iso8601(obj.at("chart_time").get<std::string>());
      if (!ts) {
        out.rejects.push_back({std::string(source_name), line_no, "invalid chart_time"});
        continue;
      }
      note.chart_time = *ts;
      note.text = obj.at("text").get<std::string>();
    } catch (const json::exception&) {
      out.rejects.push_back({std::string(source_name), line_no, "missing or mistyped field"});
      continue;
    }
    if (note.text.empty()) {
      out.rejects.push_back({std::string(source_name), line_no, "empty text"});
      continue;
    }
    out.notes.push_back(std::move(note));
  }
  if (out.notes.empty()) throw std::runtime_error("no records in " + std::string(source_name));
  std::stable_sort(out.notes.begin(), out.notes.end(),
                   [](const ClinicalNote& a, const ClinicalNote& b) {
                     if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
                     return a.chart_time < b.chart_time;
                   });
  return out;
}

NotesLoad load_notes(const std::string& path) {
  return parse_notes(read_file(path), path);
}

VitalsLoad parse_vitals(std::string_view csv, std::string_view source_name) {
  VitalsLoad out;
  const auto lines = split_lines(csv);
  if (lines.empty()) throw std::runtime_error("empty vitals file: " + std::string(source_name));
  if (trim(lines[0]) != "patient_id,chart_time,item,value") {
    throw std::runtime_error("vitals header mismatch in " + std::string(source_name));
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const std::size_t line_no = i + 1;
    const auto fields = split(line, ',');
    if (fields.size() != 4) {
      out.rejects.push_back({std::string(source_name), line_no, "expected 4 fields"});
      continue;
    }
    VitalsRecord rec;
    rec.patient_id = fields[0];
    const auto ts = parse_iso8601(fields[1]);
    if (!ts) {
      out.rejects.push_back({std::string(source_name), line_no, "invalid chart_time"});
      continue;
    }
    rec.chart_time = *ts;
    const auto item = vital_item_from_string(fields[2]);
    if (!item) {
      out.rejects.push_back({std::string(source_name), line_no, "unknown item"});
      continue;
    }
    rec.item = *item;
    try {
      std::size_t consumed = 0;
      rec.value = std::stod(fields[3], &consumed);
      if (consumed != fields[3].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      out.rejects.push_back({std::string(source_name), line_no, "invalid value"});
      continue;
    }
    if (!std::isfinite(rec.value)) {
      out.rejects.push_back({std::string(source_name), line_no, "non-finite value"});
      continue;
    }
    const auto [lo, hi] = plausible_range(rec.item);
    if (rec.value < lo || rec.value > hi) {
      out.rejects.push_back({std::string(source_name), line_no, "out of range"});
      continue;
    }
    out.records.push_back(std::move(rec));
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const VitalsRecord& a, const VitalsRecord& b) {
                     if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
                     return a.chart_time < b.chart_time;
                   });
  return out;
}

VitalsLoad load_vitals(const std::string& path) {
  return parse_vitals(read_file(path), path);
}

std::vector<Demographics> parse_demographics(std::string_view jsonl) {
  std::vector<Demographics> out;
  for (const std::string_view raw : split_lines(jsonl)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("patient_id")) continue;
    Demographics d;
    d.patient_id = obj.at("patient_id").get<std::string>();
    if (obj.contains("sex") && obj.at("sex").is_string()) {
      const std::string sex = obj.at("sex").get<std::string>();
      if (sex == "M" || sex == "F") d.sex = sex;
    }
    if (obj.contains("age_years") && obj.at("age_years").is_number()) {
      d.age_years = obj.at("age_years").get<int>();
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Demographics> load_demographics(const std::string& path) {
  return parse_demographics(read_file(path));
}

DeceasePatterns DeceasePatterns::defaults() {
  return {{"expired", "deceased", "death", "passed away"}};
}

DeceasePatterns DeceasePatterns::load(const std::string& path) {
  DeceasePatterns out;
  const std::string text = read_file(path);
  for (const std::string_view raw : split_lines(text)) {
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    out.patterns.push_back(to_lower(line));
  }
  if (out.patterns.empty()) out = defaults();
  return out;
}

namespace {

// word tokens of the lowercased text (alnum runs)
std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace

bool matches_decease_pattern(std::string_view text, const DeceasePatterns& patterns) {
  const auto tokens = word_tokens(text);
  for (const std::string& pattern : patterns.patterns) {
    const auto pat_tokens = word_tokens(pattern);
    if (pat_tokens.empty() || pat_tokens.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + pat_tokens.size() <= tokens.size(); ++i) {
      bool match = true;
      for (std::size_t j = 0; j < pat_tokens.size(); ++j) {
        if (tokens[i + j] != pat_tokens[j]) {
          match = false;
          break;
        }
      }
      if (match) return true;
    }
  }
  return false;
}

int day_index(std::int64_t anchor_day, const Timestamp& t) {
  return static_cast<int>(t.civil_day - anchor_day) + 1;
}

std::optional<Disposition> extract_disposition(const Patient& patient,
                                               const DeceasePatterns& patterns) {
  const ClinicalNote* summary = nullptr;
  for (const auto& note : patient.notes) {
    if (note.category == NoteCategory::DischargeSummary) {
      summary = &note;  // the last summary of the admission wins
    }
  }
  if (summary == nullptr) return std::nullopt;
  Disposition d;
  d.patient_id = patient.patient_id;
  d.status = matches_decease_pattern(summary->text, patterns) ? DischargeStatus::Decease
                                                              : DischargeStatus::Discharge;
  d.discharge_day = day_index(patient.anchor_day, summary->chart_time);
  return d;
}

const Patient* Cohort::find(std::string_view patient_id) const {
  const auto it = std::lower_bound(patients.begin(), patients.end(), patient_id,
                                   [](const Patient& p, std::string_view id) {
                                     return p.patient_id < id;
                                   });
  if (it == patients.end() || it->patient_id != patient_id) return nullptr;
  return &*it;
}

Cohort build_cohort(const NotesLoad& notes, const VitalsLoad& vitals,
                    const std::vector<Demographics>& demographics,
                    const DeceasePatterns& decease_patterns) {
  std::map<std::string, Patient> by_id;
  for (const auto& note : notes.notes) {
    Patient& p = by_id[note.patient_id];
    p.patient_id = note.patient_id;
    p.notes.push_back(note);
  }
  for (const auto& rec : vitals.records) {
    Patient& p = by_id[rec.patient_id];
    p.patient_id = rec.patient_id;
    p.vitals.push_back(rec);
  }
  for (const auto& demo : demographics) {
    const auto it = by_id.find(demo.patient_id);
    if (it != by_id.end()) it->second.demographics = demo;
  }

  Cohort cohort;
  for (auto& [id, p] : by_id) {
    std::int64_t anchor = 0;
    bool seen = false;
    for (const auto& n : p.notes) {
      if (!seen || n.chart_time.civil_day < anchor) anchor = n.chart_time.civil_day;
      seen = true;
    }
    for (const auto& v : p.vitals) {
      if (!seen || v.chart_time.civil_day < anchor) anchor = v.chart_time.civil_day;
      seen = true;
    }
    if (!seen) continue;
    p.anchor_day = anchor;

    // Only the first admission is used: drop events after the first
    // discharge summary's day.
    std::int64_t cutoff_day = -1;
    for (const auto& n : p.notes) {
      if (n.category == NoteCategory::DischargeSummary) {
        cutoff_day = n.chart_time.civil_day;
        break;  // notes are time-sorted
      }
    }
    if (cutoff_day >= 0) {
      std::erase_if(p.notes, [&](const ClinicalNote& n) {
        return n.chart_time.civil_day > cutoff_day;
      });
      std::erase_if(p.vitals, [&](const VitalsRecord& v) {
        return v.chart_time.civil_day > cutoff_day;
      });
    }

    int los = 1;
    for (const auto& n : p.notes) los = std::max(los, day_index(anchor, n.chart_time));
    for (const auto& v : p.vitals) los = std::max(los, day_index(anchor, v.chart_time));
    p.los_days = los;
    p.disposition = extract_disposition(p, decease_patterns);
    cohort.patients.push_back(std::move(p));
  }
  return cohort;
}

CohortSummary cohort_stats(const Cohort& cohort) {
  if (cohort.patients.empty()) throw std::runtime_error("cohort_stats: zero patients");
  CohortSummary s;
  s.n_patients = cohort.patients.size();

  std::size_t n_sex = 0, n_male = 0;
  std::size_t n_age = 0, lt18 = 0, a18_40 = 0, a41_60 = 0, a61_80 = 0, gt80 = 0;
  double los_sum = 0.0;
  for (const auto& p : cohort.patients) {
    los_sum += p.los_days;
    if (p.demographics && p.demographics->sex) {
      ++n_sex;
      if (*p.demographics->sex == "M") ++n_male;
    }
    if (p.demographics && p.demographics->age_years) {
      ++n_age;
      const int age = *p.demographics->age_years;
      if (age < 18) ++lt18;
      else if (age <= 40) ++a18_40;
      else if (age <= 60) ++a41_60;
      else if (age <= 80) ++a61_80;
      else ++gt80;
    }
  }
  s.mean_length_of_stay_days = los_sum / static_cast<double>(s.n_patients);
  if (n_sex > 0) {
    s.pct_male = 100.0 * static_cast<double>(n_male) / static_cast<double>(n_sex);
    s.pct_female = 100.0 - s.pct_male;
  }
  if (n_age > 0) {
    const double d = static_cast<double>(n_age);
    s.pct_age_lt18 = 100.0 * lt18 / d;
    s.pct_age_18_40 = 100.0 * a18_40 / d;
    s.pct_age_41_60 = 100.0 * a41_60 / d;
    s.pct_age_61_80 = 100.0 * a61_80 / d;
    s.pct_age_gt80 = 100.0 * gt80 / d;
  }
  return s;
}

std::string summary_to_json(const CohortSummary& s) {
  json j;
  j["n_patients"] = s.n_patients;
  j["pct_male"] = s.pct_male;
  j["pct_female"] = s.pct_female;
  j["pct_age_lt18"] = s.pct_age_lt18;
  j["pct_age_18_40"] = s.pct_age_18_40;
  j["pct_age_41_60"] = s.pct_age_41_60;
  j["pct_age_61_80"] = s.pct_age_61_80;
  j["pct_age_gt80"] = s.pct_age_gt80;
  j["mean_length_of_stay_days"] = s.mean_length_of_stay_days;
  return j.dump(2) + "\n";
}

}  // namespace clinpath::corpus
