#include "clinpath/timeline.hpp"

#include <set>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/io_util.hpp"

namespace clinpath::timeline {

using nlohmann::json;

DailyConditionMap align_days(const std::string& patient_id, int los,
                             const std::vector<textproc::StructuredNote>& notes) {
  if (los < 1) throw std::invalid_argument("align_days: los must be >= 1");
  DailyConditionMap out;
  out.patient_id = patient_id;
  out.los = los;
  out.days.resize(static_cast<std::size_t>(los));
  for (const auto& note : notes) {
    if (note.day_index < 1 || note.day_index > los) continue;
    auto& day = out.days[static_cast<std::size_t>(note.day_index - 1)];
    for (const auto& [cui, polarity] : note.conditions) {
      const auto [it, inserted] = day.try_emplace(cui, polarity);
      if (!inserted) it->second = merge_polarity(it->second, polarity);
    }
  }
  return out;
}

DailyConditionMap impute_missing(const DailyConditionMap& daily) {
  DailyConditionMap out = daily;
  const int los = daily.los;
  if (los < 1) return out;

  std::set<std::string> cuis;
  for (const auto& day : daily.days) {
    for (const auto& [cui, _] : day) cuis.insert(cui);
  }

  for (const std::string& cui : cuis) {
    // recorded polarities along the day axis (as loaded, not as imputed)
    auto recorded = [&](int day) -> const Polarity* {
      const auto& m = daily.days[static_cast<std::size_t>(day - 1)];
      const auto it = m.find(cui);
      return it == m.end() ? nullptr : &it->second;
    };

    // Pass A: single-gap rules. Each decision reads only recorded values,
    // so gaps longer than one day stay unset.
    for (int day = 2; day <= los - 1; ++day) {
      if (recorded(day) != nullptr) continue;
      const Polarity* prev = recorded(day - 1);
      const Polarity* next = recorded(day + 1);
      if (prev == nullptr || next == nullptr) continue;
      if (*prev == Polarity::Positive) {
        // rule 1 (next positive) and rule 3 (next negative) both fill positive
        out.days[static_cast<std::size_t>(day - 1)][cui] = Polarity::Positive;
      } else if (*next == Polarity::Negative) {
        // rule 2
        out.days[static_cast<std::size_t>(day - 1)][cui] = Polarity::Negative;
      }
      // prev negative, next positive: not covered by the rules; left unset
    }

    // Pass B (rule 4): a negative day with no later positive mention makes
    // every later day negative.
    int fill_from = 0;
    for (int day = 1; day <= los; ++day) {
      const Polarity* rec = recorded(day);
      if (rec == nullptr) continue;
      if (*rec == Polarity::Negative) {
        if (fill_from == 0) fill_from = day;
      } else {
        fill_from = 0;  // a later positive cancels any earlier candidate
      }
    }
    if (fill_from > 0) {
      for (int day = fill_from + 1; day <= los; ++day) {
        out.days[static_cast<std::size_t>(day - 1)].try_emplace(cui, Polarity::Negative);
      }
    }
  }
  return out;
}

std::vector<std::pair<int, int>> stage_day_ranges(int los) {
  if (los < 2) throw std::invalid_argument("stage_day_ranges: stay shorter than 2 days is excluded");
  std::vector<std::pair<int, int>> ranges;
  ranges.emplace_back(1, 2);
  if (los == 2) return ranges;  // the initial stage doubles as the discharge stage
  int day = 3;
  while (day <= los - 1) {
    const int end = std::min(day + 2, los - 1);
    ranges.emplace_back(day, end);
    day = end + 1;
  }
  ranges.emplace_back(los, los);
  return ranges;
}

StageSeries segment_stages(const DailyConditionMap& daily,
                           std::optional<corpus::Disposition> disposition) {
  StageSeries out;
  out.patient_id = daily.patient_id;
  out.disposition = std::move(disposition);
  const auto ranges = stage_day_ranges(daily.los);
  int index = 1;
  for (const auto& [begin, end] : ranges) {
    Stage stage;
    stage.index = index++;
    stage.day_begin = begin;
    stage.day_end = end;
    for (int day = begin; day <= end; ++day) {
      for (const auto& [cui, polarity] : daily.days[static_cast<std::size_t>(day - 1)]) {
        const auto [it, inserted] = stage.conditions.try_emplace(cui, polarity);
        if (!inserted) it->second = merge_polarity(it->second, polarity);
      }
    }
    out.stages.push_back(std::move(stage));
  }
  return out;
}

std::string stages_to_jsonl(const std::vector<StageSeries>& series) {
  std::string out;
  for (const auto& s : series) {
    for (const auto& stage : s.stages) {
      json j;
      j["patient_id"] = s.patient_id;
      j["stage"] = stage.index;
      j["day_range"] = json::array({stage.day_begin, stage.day_end});
      json positives = json::array(), negatives = json::array();
      for (const auto& [cui, polarity] : stage.conditions) {
        (polarity == Polarity::Positive ? positives : negatives).push_back(cui);
      }
      j["positives"] = std::move(positives);
      j["negatives"] = std::move(negatives);
      if (s.disposition) {
        j["disposition"] = std::string(corpus::to_string(s.disposition->status));
      }
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::vector<StageSeries> stages_from_jsonl(std::string_view jsonl) {
  std::map<std::string, StageSeries> by_patient;
  for (const std::string_view raw : split_lines(jsonl)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string pid = j.at("patient_id").get<std::string>();
    StageSeries& series = by_patient[pid];
    series.patient_id = pid;
    Stage stage;
    stage.index = j.at("stage").get<int>();
    stage.day_begin = j.at("day_range").at(0).get<int>();
    stage.day_end = j.at("day_range").at(1).get<int>();
    for (const auto& cui : j.at("positives")) {
      stage.conditions[cui.get<std::string>()] = Polarity::Positive;
    }
    for (const auto& cui : j.at("negatives")) {
      stage.conditions[cui.get<std::string>()] = Polarity::Negative;
    }
    if (j.contains("disposition")) {
      corpus::Disposition d;
      d.patient_id = pid;
      d.status = j.at("disposition").get<std::string>() == "Decease"
                     ? corpus::DischargeStatus::Decease
                     : corpus::DischargeStatus::Discharge;
      d.discharge_day = stage.day_end;
      series.disposition = d;
    }
    series.stages.push_back(std::move(stage));
  }
  std::vector<StageSeries> out;
  out.reserve(by_patient.size());
  for (auto& [pid, series] : by_patient) {
    std::sort(series.stages.begin(), series.stages.end(),
              [](const Stage& a, const Stage& b) { return a.index < b.index; });
    if (series.disposition) {
      series.disposition->discharge_day = series.stages.back().day_end;
    }
    out.push_back(std::move(series));
  }
  return out;
}

}  // namespace clinpath::timeline
