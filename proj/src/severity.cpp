#include "clinpath/severity.hpp"

#include <map>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/io_util.hpp"

namespace clinpath::severity {

using nlohmann::json;

int score(SepsisState s) {
  return static_cast<int>(s);
}

std::string_view to_string(SepsisState s) {
  switch (s) {
    case SepsisState::Unknown: return "Unknown";
    case SepsisState::Sirs: return "SIRS";
    case SepsisState::Sepsis: return "Sepsis";
    case SepsisState::SevereSepsis: return "SevereSepsis";
    case SepsisState::SepticShock: return "SepticShock";
  }
  return "Unknown";
}

std::optional<int> sirs_count(const StageClinicalFeatures& f, const SeverityThresholds& t) {
  if (!f.has_any_vital()) return std::nullopt;
  int count = 0;
  if ((f.temp_max && *f.temp_max > t.temp_high) || (f.temp_min && *f.temp_min < t.temp_low)) {
    ++count;
  }
  if (f.hr_max && *f.hr_max > t.hr_high) ++count;
  if (f.rr_max && *f.rr_max > t.rr_high) ++count;
  if ((f.wbc_max && *f.wbc_max > t.wbc_high) || (f.wbc_min && *f.wbc_min < t.wbc_low)) {
    ++count;
  }
  return count;
}

SepsisState classify_severity(const StageClinicalFeatures& f, const SeverityThresholds& t) {
  const bool hypotensive = f.hypotension_documented ||
                           (f.sbp_min && *f.sbp_min < t.sbp_low) ||
                           (f.map_min && *f.map_min < t.map_low);
  if (f.infection_suspected && f.organ_dysfunction && hypotensive && f.iv_fluids_given) {
    return SepsisState::SepticShock;  // hypotension despite resuscitation
  }
  if (f.infection_suspected && f.organ_dysfunction) return SepsisState::SevereSepsis;
  const std::optional<int> sirs = sirs_count(f, t);
  if (sirs && *sirs >= 2) {
    return f.infection_suspected ? SepsisState::Sepsis : SepsisState::Sirs;
  }
  return SepsisState::Unknown;
}

FlagCuiSets FlagCuiSets::parse(std::string_view json_text) {
  const json j = json::parse(json_text);
  FlagCuiSets out;
  auto read = [&](const char* key, std::set<std::string>& target) {
    if (!j.contains(key)) return;
    for (const auto& cui : j.at(key)) target.insert(cui.get<std::string>());
  };
  read("infection_suspected", out.infection);
  read("organ_dysfunction", out.organ_dysfunction);
  read("hypotension_documented", out.hypotension);
  read("iv_fluids_given", out.iv_fluids);
  return out;
}

FlagCuiSets FlagCuiSets::load(const std::string& path) {
  return parse(read_file(path));
}

std::string FlagCuiSets::serialize() const {
  json j;
  j["infection_suspected"] = infection;
  j["organ_dysfunction"] = organ_dysfunction;
  j["hypotension_documented"] = hypotension;
  j["iv_fluids_given"] = iv_fluids;
  return j.dump(2) + "\n";
}

StageClinicalFeatures assemble_features(const timeline::Stage& stage,
                                        const std::vector<corpus::VitalsRecord>& patient_vitals,
                                        std::int64_t anchor_day, const FlagCuiSets& flags) {
  StageClinicalFeatures f;
  auto take_max = [](std::optional<double>& slot, double v) {
    if (!slot || v > *slot) slot = v;
  };
  auto take_min = [](std::optional<double>& slot, double v) {
    if (!slot || v < *slot) slot = v;
  };
  for (const auto& rec : patient_vitals) {
    const int day = corpus::day_index(anchor_day, rec.chart_time);
    if (day < stage.day_begin || day > stage.day_end) continue;
    switch (rec.item) {
      case corpus::VitalItem::TempC:
        take_max(f.temp_max, rec.value);
        take_min(f.temp_min, rec.value);
        break;
      case corpus::VitalItem::HeartRate:
        take_max(f.hr_max, rec.value);
        break;
      case corpus::VitalItem::RespRate:
        take_max(f.rr_max, rec.value);
        break;
      case corpus::VitalItem::Wbc:
        take_max(f.wbc_max, rec.value);
        take_min(f.wbc_min, rec.value);
        break;
      case corpus::VitalItem::SystolicBp:
        take_min(f.sbp_min, rec.value);
        break;
      case corpus::VitalItem::MeanArterialPressure:
        take_min(f.map_min, rec.value);
        break;
    }
  }
  for (const auto& [cui, polarity] : stage.conditions) {
    if (polarity != Polarity::Positive) continue;  // negative mentions never set flags
    if (flags.infection.count(cui)) f.infection_suspected = true;
    if (flags.organ_dysfunction.count(cui)) f.organ_dysfunction = true;
    if (flags.hypotension.count(cui)) f.hypotension_documented = true;
    if (flags.iv_fluids.count(cui)) f.iv_fluids_given = true;
  }
  return f;
}

SeverityTimeline severity_timeline(const timeline::StageSeries& series,
                                   const std::vector<corpus::VitalsRecord>& patient_vitals,
                                   std::int64_t anchor_day, const FlagCuiSets& flags,
                                   const SeverityThresholds& thresholds) {
  SeverityTimeline out;
  out.patient_id = series.patient_id;
  out.disposition = series.disposition;
  for (const auto& stage : series.stages) {
    StageSeverity s;
    s.features = assemble_features(stage, patient_vitals, anchor_day, flags);
    s.state = classify_severity(s.features, thresholds);
    out.stages.push_back(std::move(s));
  }
  return out;
}

std::string severity_to_csv(const std::vector<SeverityTimeline>& timelines) {
  std::string out = "patient_id,stage,state,score\n";
  for (const auto& t : timelines) {
    for (std::size_t i = 0; i < t.stages.size(); ++i) {
      const SepsisState state = t.stages[i].state;
      out += t.patient_id;
      out += ',';
      out += std::to_string(i + 1);
      out += ',';
      out += to_string(state);
      out += ',';
      if (state != SepsisState::Unknown) out += std::to_string(score(state));
      out += '\n';
    }
  }
  return out;
}

std::vector<SeverityTimeline> severity_from_csv(std::string_view csv) {
  std::map<std::string, std::vector<std::pair<int, SepsisState>>> rows;
  const auto lines = split_lines(csv);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() < 3) throw std::runtime_error("severity csv: malformed row");
    SepsisState state = SepsisState::Unknown;
    for (SepsisState s : {SepsisState::Sirs, SepsisState::Sepsis, SepsisState::SevereSepsis,
                          SepsisState::SepticShock}) {
      if (fields[2] == to_string(s)) state = s;
    }
    rows[fields[0]].emplace_back(std::stoi(fields[1]), state);
  }
  std::vector<SeverityTimeline> out;
  for (auto& [pid, stages] : rows) {
    std::sort(stages.begin(), stages.end());
    SeverityTimeline t;
    t.patient_id = pid;
    for (const auto& [_, state] : stages) t.stages.push_back({state, {}});
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace clinpath::severity
