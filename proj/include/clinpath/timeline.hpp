#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clinpath/corpus.hpp"
#include "clinpath/textproc.hpp"
#include "clinpath/types.hpp"

namespace clinpath::timeline {

struct DailyConditionMap {
  std::string patient_id;
  int los = 0;
  // days[d-1]: cui -> polarity; an absent cui means "not mentioned"
  std::vector<std::map<std::string, Polarity>> days;
};

// Union per day with Positive-wins conflict resolution; days without notes
// stay empty.
DailyConditionMap align_days(const std::string& patient_id, int los,
                             const std::vector<textproc::StructuredNote>& notes);

// Single-gap rules first (one left-to-right sweep reading only recorded
// values, so multi-day gaps are not bridged), then the negative forward
// fill. Recorded polarities are never overwritten.
DailyConditionMap impute_missing(const DailyConditionMap& daily);

struct Stage {
  int index = 1;  // 1-based
  int day_begin = 1, day_end = 1;
  std::map<std::string, Polarity> conditions;
};

struct StageSeries {
  std::string patient_id;
  std::vector<Stage> stages;
  std::optional<corpus::Disposition> disposition;
};

// Day 1-2 form stage 1, the discharge day stands alone, and the days in
// between are grouped into 3-day windows (the last window may hold 1-2
// days). A 2-day stay collapses to the single stage [1,2]. Throws for
// los < 2 (such patients are excluded).
std::vector<std::pair<int, int>> stage_day_ranges(int los);

StageSeries segment_stages(const DailyConditionMap& daily,
                           std::optional<corpus::Disposition> disposition);

std::string stages_to_jsonl(const std::vector<StageSeries>& series);
std::vector<StageSeries> stages_from_jsonl(std::string_view jsonl);

}  // namespace clinpath::timeline
