#include "clinpath/synthcohort.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/io_util.hpp"
#include "clinpath/iso8601.hpp"
#include "clinpath/rng.hpp"
#include "clinpath/timeline.hpp"

namespace clinpath::synth {

using nlohmann::json;
using pathways::Outcome;
using pathways::PriorState;

double OutcomeRow::value(Outcome o) const {
  switch (o) {
    case Outcome::Discharge: return discharge;
    case Outcome::Improve: return improve;
    case Outcome::Persistent: return persistent;
    case Outcome::Deteriorate: return deteriorate;
    case Outcome::Decease: return decease;
    case Outcome::Unknown: return 0.0;
  }
  return 0.0;
}

namespace {

constexpr std::array<Outcome, 5> kRowOutcomes = {Outcome::Discharge, Outcome::Improve,
                                                 Outcome::Persistent, Outcome::Deteriorate,
                                                 Outcome::Decease};

// surfaces that drive the severity flags; kept out of cluster signatures
// except for hypotension, which is harmless without the other shock factors
const char* kInfectionSurface = "sepsis";
const char* kOrganSurface = "acute kidney injury";
const char* kHypotensionSurface = "hypotension";
const char* kFluidsSurface = "iv fluids";

const std::array<const char*, 5> kHemorrhageSurfaces = {
    "hemorrhage", "bleeding", "blood loss", "oozing of blood", "hemorrage"};

const std::array<const char*, 4> kPositiveTemplates = {
    "Patient reports %s.", "Exam notable for %s.", "Ongoing %s today.",
    "Assessment significant for %s."};

const std::array<const char*, 4> kNegativeTemplates = {
    "Patient denies %s.", "No %s noted.", "Negative for %s.", "%s ruled out."};

std::string format_one(const char* tmpl, const std::string& arg) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), tmpl, arg.c_str());
  return buf;
}

Outcome sample_row(const OutcomeRow& row, Rng& rng) {
  double x = rng.uniform() * row.sum();
  for (Outcome o : kRowOutcomes) {
    const double p = row.value(o);
    if (x < p) return o;
    x -= p;
  }
  return Outcome::Persistent;
}

std::set<std::string> severity_surfaces(int score) {
  std::set<std::string> s;
  if (score >= 2) s.insert(kInfectionSurface);
  if (score >= 3) s.insert(kOrganSurface);
  if (score >= 4) {
    s.insert(kHypotensionSurface);
    s.insert(kFluidsSurface);
  }
  return s;
}

struct DayText {
  std::vector<std::string> positives;  // surfaces
  std::vector<std::string> negatives;
};

}  // namespace

double planted_probability(const GeneratorConfig& config, int cluster, int stage,
                           PriorState prior, Outcome outcome) {
  if (outcome == Outcome::Unknown) return 0.0;
  if (stage >= config.max_boundaries) {
    return outcome == Outcome::Discharge ? 1.0 : 0.0;
  }
  const ClusterSpec& spec = config.clusters.at(static_cast<std::size_t>(cluster));
  if (stage == 1) {
    return prior == PriorState::Start ? spec.start_row.value(outcome) : 0.0;
  }
  switch (prior) {
    case PriorState::Improve: return spec.after_improve.value(outcome);
    case PriorState::Persistent: return spec.after_persistent.value(outcome);
    case PriorState::Deteriorate: return spec.after_deteriorate.value(outcome);
    case PriorState::Start: return 0.0;
  }
  return 0.0;
}

GeneratedCohort generate_cohort(const GeneratorConfig& config) {
  if (config.clusters.empty()) throw std::invalid_argument("generate_cohort: no clusters configured");
  if (config.n_patients < 1) throw std::invalid_argument("generate_cohort: n_patients must be positive");
  if (config.max_boundaries < 1) throw std::invalid_argument("generate_cohort: max_boundaries must be positive");
  for (const auto& spec : config.clusters) {
    for (const OutcomeRow* row :
         {&spec.start_row, &spec.after_improve, &spec.after_persistent, &spec.after_deteriorate}) {
      if (std::abs(row->sum() - 1.0) > 1e-9) {
        throw std::invalid_argument("generate_cohort: transition row of cluster '" + spec.name +
                                    "' does not sum to 1");
      }
    }
    if (spec.initial_severity < 1 || spec.initial_severity > 4) {
      throw std::invalid_argument("generate_cohort: initial severity out of range");
    }
  }

  const std::int64_t anchor_day = days_from_civil(2019, 3, 1);

  GeneratedCohort out;
  out.truth.config = config;
  out.vitals_csv = "patient_id,chart_time,item,value\n";

  char buf[256];
  for (int pi = 0; pi < config.n_patients; ++pi) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(pi)));
    std::snprintf(buf, sizeof(buf), "P%05d", pi);
    const std::string pid = buf;

    const int cluster = static_cast<int>(rng.below(config.clusters.size()));
    const ClusterSpec& spec = config.clusters[static_cast<std::size_t>(cluster)];

    // 1. severity trajectory: outcome per boundary, score per stage
    std::vector<int> scores{spec.initial_severity};
    std::vector<Outcome> outcomes;
    PriorState prior = PriorState::Start;
    for (int t = 1; t <= config.max_boundaries; ++t) {
      Outcome o;
      if (t == config.max_boundaries) {
        o = Outcome::Discharge;
      } else if (t == 1) {
        o = sample_row(spec.start_row, rng);
      } else {
        switch (prior) {
          case PriorState::Improve: o = sample_row(spec.after_improve, rng); break;
          case PriorState::Persistent: o = sample_row(spec.after_persistent, rng); break;
          case PriorState::Deteriorate: o = sample_row(spec.after_deteriorate, rng); break;
          default: o = Outcome::Persistent; break;
        }
      }
      // scores are bounded 1..4; an infeasible move flattens to Persistent
      if (o == Outcome::Improve && scores.back() == 1) o = Outcome::Persistent;
      if (o == Outcome::Deteriorate && scores.back() == 4) o = Outcome::Persistent;
      outcomes.push_back(o);
      if (o == Outcome::Discharge || o == Outcome::Decease) {
        scores.push_back(scores.back());  // discharge-stage score, unused for labeling
        break;
      }
      int next = scores.back();
      if (o == Outcome::Improve) --next;
      if (o == Outcome::Deteriorate) ++next;
      scores.push_back(next);
      prior = o == Outcome::Improve ? PriorState::Improve
              : o == Outcome::Deteriorate ? PriorState::Deteriorate
                                          : PriorState::Persistent;
    }

    const int n_stages = static_cast<int>(scores.size());
    const int delta = n_stages == 2 ? 0 : static_cast<int>(rng.below(3));
    const int los = 3 * (n_stages - 1) - delta;
    const auto ranges = timeline::stage_day_ranges(los);

    // 2. per-stage note conditions
    std::vector<std::vector<std::pair<std::string, bool>>> stage_conditions(
        static_cast<std::size_t>(n_stages));  // (surface, positive)
    auto add = [&](int stage, const std::string& surface, bool positive) {
      stage_conditions[static_cast<std::size_t>(stage - 1)].emplace_back(surface, positive);
    };

    for (const auto& surface : spec.signature) {
      if (rng.uniform() < spec.signature_prevalence) add(1, surface, true);
    }
    for (const auto& [surface, prevalence] : config.background) {
      if (rng.uniform() < prevalence) add(1, surface, true);
    }
    for (const auto& surface : config.denial_pool) {
      if (rng.uniform() < config.negation_rate) add(1, surface, false);
    }
    for (int s = 1; s <= n_stages; ++s) {
      for (const auto& surface : severity_surfaces(scores[static_cast<std::size_t>(s - 1)])) {
        add(s, surface, true);
      }
      if (s >= 2) {
        // conditions that resolved with an improving score are denied
        const auto prev = severity_surfaces(scores[static_cast<std::size_t>(s - 2)]);
        const auto cur = severity_surfaces(scores[static_cast<std::size_t>(s - 1)]);
        for (const auto& surface : prev) {
          if (!cur.count(surface)) add(s, surface, false);
        }
      }
    }
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
      const int stage = static_cast<int>(t) + 1;  // boundary stage -> stage+1
      // planted from the second boundary onward so that stage-1 vectors stay
      // outcome-independent (the cluster structure must not split on them)
      if (outcomes[t] == Outcome::Improve && stage >= 2) {
        add(stage, config.treated_surface, true);
        add(stage + 1, config.treated_surface, false);
      } else if (outcomes[t] == Outcome::Deteriorate) {
        add(stage + 1, config.emerging_surface, true);
      }
    }

    // 3. distribute stage conditions over days: first and last day of the
    // stage, leaving the middle day of 3-day windows as a gap the
    // imputation rules must close
    std::vector<DayText> days(static_cast<std::size_t>(los));
    for (int s = 1; s <= n_stages; ++s) {
      const auto& [day_begin, day_end] = ranges[static_cast<std::size_t>(s - 1)];
      for (auto& [surface, positive] : stage_conditions[static_cast<std::size_t>(s - 1)]) {
        std::string rendered = surface;
        if (surface == kHemorrhageSurfaces[0]) {
          rendered = kHemorrhageSurfaces[rng.below(kHemorrhageSurfaces.size())];
        }
        auto& first = days[static_cast<std::size_t>(day_begin - 1)];
        (positive ? first.positives : first.negatives).push_back(rendered);
        if (day_end > day_begin && positive) {
          auto& last = days[static_cast<std::size_t>(day_end - 1)];
          last.positives.push_back(rendered);
        }
      }
    }

    // 4. render notes
    int note_seq = 0;
    for (int day = 1; day <= los; ++day) {
      const DayText& dt = days[static_cast<std::size_t>(day - 1)];
      std::string text;
      std::size_t pos = 0, neg = 0;
      if (!dt.positives.empty() && !dt.negatives.empty() && rng.bernoulli(0.5)) {
        // scope-break sentence pairing an affirmed and a denied finding
        text += "The patient has " + dt.positives[0] + " but denies any " + dt.negatives[0] + ". ";
        pos = 1;
        neg = 1;
      }
      for (; pos < dt.positives.size(); ++pos) {
        text += format_one(kPositiveTemplates[rng.below(kPositiveTemplates.size())],
                           dt.positives[pos]);
        text += ' ';
      }
      for (; neg < dt.negatives.size(); ++neg) {
        text += format_one(kNegativeTemplates[rng.below(kNegativeTemplates.size())],
                           dt.negatives[neg]);
        text += ' ';
      }
      if (text.empty()) text = "Stable day. ";
      text += "Continue current plan.";

      Timestamp note_time;
      note_time.civil_day = anchor_day + day - 1;
      note_time.epoch_seconds = note_time.civil_day * 86400 + 9 * 3600 +
                                static_cast<std::int64_t>(rng.below(1800));
      json note;
      note["patient_id"] = pid;
      note["note_id"] = pid + "-n" + std::to_string(++note_seq);
      note["category"] = "nursing";
      note["chart_time"] = format_iso8601(note_time);
      note["text"] = text;
      out.notes_jsonl += note.dump();
      out.notes_jsonl += '\n';

      // vitals realizing the stage's severity
      int stage_of_day = 1;
      for (std::size_t s = 0; s < ranges.size(); ++s) {
        if (day >= ranges[s].first && day <= ranges[s].second) {
          stage_of_day = static_cast<int>(s) + 1;
        }
      }
      const int score = scores[static_cast<std::size_t>(stage_of_day - 1)];
      Timestamp vt;
      vt.civil_day = anchor_day + day - 1;
      vt.epoch_seconds = vt.civil_day * 86400 + 6 * 3600 + static_cast<std::int64_t>(rng.below(900));
      const std::string when = format_iso8601(vt);
      auto vital = [&](const char* item, double value) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.1f\n", pid.c_str(), when.c_str(), item, value);
        out.vitals_csv += buf;
      };
      vital("temp_c", 38.6 + rng.uniform() * 1.2);     // SIRS: temperature criterion
      vital("heart_rate", 105.0 + rng.uniform() * 30); // SIRS: heart-rate criterion
      vital("resp_rate", 14.0 + rng.uniform() * 4);
      vital("wbc", 6.0 + rng.uniform() * 4);
      if (score >= 4) {
        vital("systolic_bp", 75.0 + rng.uniform() * 10);
        vital("mean_arterial_pressure", 52.0 + rng.uniform() * 8);
      } else {
        vital("systolic_bp", 105.0 + rng.uniform() * 20);
        vital("mean_arterial_pressure", 75.0 + rng.uniform() * 13);
      }
    }

    // discharge summary on the last day
    {
      Timestamp ts;
      ts.civil_day = anchor_day + los - 1;
      ts.epoch_seconds = ts.civil_day * 86400 + 18 * 3600 + static_cast<std::int64_t>(rng.below(1800));
      const bool deceased = outcomes.back() == Outcome::Decease;
      json note;
      note["patient_id"] = pid;
      note["note_id"] = pid + "-n" + std::to_string(++note_seq);
      note["category"] = "discharge_summary";
      note["chart_time"] = format_iso8601(ts);
      note["text"] = deceased
                         ? "Family meeting held; patient expired despite maximal therapy."
                         : "Discharged home in stable condition with follow-up arranged.";
      out.notes_jsonl += note.dump();
      out.notes_jsonl += '\n';
    }

    // demographics
    {
      json demo;
      demo["patient_id"] = pid;
      demo["sex"] = rng.bernoulli(0.54) ? "M" : "F";
      const double band = rng.uniform();
      int age;
      if (band < 0.001) age = 14;
      else if (band < 0.071) age = 18 + static_cast<int>(rng.below(23));
      else if (band < 0.301) age = 41 + static_cast<int>(rng.below(20));
      else if (band < 0.731) age = 61 + static_cast<int>(rng.below(20));
      else age = 81 + static_cast<int>(rng.below(15));
      demo["age_years"] = age;
      out.demographics_jsonl += demo.dump();
      out.demographics_jsonl += '\n';
    }

    PatientTruth truth;
    truth.patient_id = pid;
    truth.cluster = cluster;
    truth.los = los;
    truth.stage_scores = scores;
    truth.outcomes = outcomes;
    out.truth.patients.push_back(std::move(truth));
  }
  return out;
}

namespace {

json row_to_json(const OutcomeRow& row) {
  return json::array({row.discharge, row.improve, row.persistent, row.deteriorate, row.decease});
}

OutcomeRow row_from_json(const json& j) {
  OutcomeRow row;
  row.discharge = j.at(0).get<double>();
  row.improve = j.at(1).get<double>();
  row.persistent = j.at(2).get<double>();
  row.deteriorate = j.at(3).get<double>();
  row.decease = j.at(4).get<double>();
  return row;
}

}  // namespace

std::string ground_truth_report(const GroundTruth& truth) {
  json j;
  j["seed"] = truth.config.seed;
  j["n_patients"] = truth.config.n_patients;
  j["max_boundaries"] = truth.config.max_boundaries;
  j["treated_surface"] = truth.config.treated_surface;
  j["emerging_surface"] = truth.config.emerging_surface;
  json clusters = json::array();
  for (const auto& spec : truth.config.clusters) {
    json cj;
    cj["name"] = spec.name;
    cj["signature"] = spec.signature;
    cj["signature_prevalence"] = spec.signature_prevalence;
    cj["initial_severity"] = spec.initial_severity;
    cj["start_row"] = row_to_json(spec.start_row);
    cj["after_improve"] = row_to_json(spec.after_improve);
    cj["after_persistent"] = row_to_json(spec.after_persistent);
    cj["after_deteriorate"] = row_to_json(spec.after_deteriorate);
    clusters.push_back(std::move(cj));
  }
  j["clusters"] = std::move(clusters);
  json patients = json::array();
  for (const auto& p : truth.patients) {
    json pj;
    pj["patient_id"] = p.patient_id;
    pj["cluster"] = p.cluster;
    pj["los"] = p.los;
    pj["stage_scores"] = p.stage_scores;
    json outcomes = json::array();
    for (Outcome o : p.outcomes) outcomes.push_back(std::string(pathways::to_string(o)));
    pj["outcomes"] = std::move(outcomes);
    patients.push_back(std::move(pj));
  }
  j["patients"] = std::move(patients);
  return j.dump(2) + "\n";
}

GroundTruth ground_truth_from_json(const std::string& text) {
  const json j = json::parse(text);
  GroundTruth truth;
  truth.config.seed = j.at("seed").get<std::uint64_t>();
  truth.config.n_patients = j.at("n_patients").get<int>();
  truth.config.max_boundaries = j.at("max_boundaries").get<int>();
  truth.config.treated_surface = j.at("treated_surface").get<std::string>();
  truth.config.emerging_surface = j.at("emerging_surface").get<std::string>();
  for (const auto& cj : j.at("clusters")) {
    ClusterSpec spec;
    spec.name = cj.at("name").get<std::string>();
    spec.signature = cj.at("signature").get<std::vector<std::string>>();
    spec.signature_prevalence = cj.at("signature_prevalence").get<double>();
    spec.initial_severity = cj.at("initial_severity").get<int>();
    spec.start_row = row_from_json(cj.at("start_row"));
    spec.after_improve = row_from_json(cj.at("after_improve"));
    spec.after_persistent = row_from_json(cj.at("after_persistent"));
    spec.after_deteriorate = row_from_json(cj.at("after_deteriorate"));
    truth.config.clusters.push_back(std::move(spec));
  }
  for (const auto& pj : j.at("patients")) {
    PatientTruth p;
    p.patient_id = pj.at("patient_id").get<std::string>();
    p.cluster = pj.at("cluster").get<int>();
    p.los = pj.at("los").get<int>();
    p.stage_scores = pj.at("stage_scores").get<std::vector<int>>();
    for (const auto& o : pj.at("outcomes")) {
      p.outcomes.push_back(*pathways::outcome_from_string(o.get<std::string>()));
    }
    truth.patients.push_back(std::move(p));
  }
  return truth;
}

void write_cohort(const GeneratedCohort& cohort, const std::string& dir) {
  atomic_write_file(dir + "/notes.jsonl", cohort.notes_jsonl);
  atomic_write_file(dir + "/vitals.csv", cohort.vitals_csv);
  atomic_write_file(dir + "/demographics.jsonl", cohort.demographics_jsonl);
  atomic_write_file(dir + "/ground_truth.json", ground_truth_report(cohort.truth));
}

GeneratorConfig GeneratorConfig::demo(int n_patients, int n_clusters, std::uint64_t seed) {
  if (n_clusters < 1 || n_clusters > 8) {
    throw std::invalid_argument("demo config supports 1..8 clusters");
  }
  static const std::vector<std::vector<std::string>> kSignatures = {
      {"hypotension", "acidosis", "diabetes", "respiratory distress"},
      {"loose stool", "pain", "fever", "erythema"},
      {"dyspnea", "airway disease", "thick sputum", "basilar rales"},
      {"skin infection", "urinary tract infection", "kidney disease", "edema"},
      {"premature ventricular contraction", "heart disease", "atrial fibrillation",
       "atrial premature complexes"},
      {"myocardial infarction", "bundle branch block", "ventricular hypertrophy",
       "anterior fascicular block"},
      {"hemorrhage", "fistula", "anxiety", "tachycardia"},
      {"chest pain", "pressure ulcer", "hyperglycemia", "pleural effusion"},
  };
  static const std::vector<OutcomeRow> kStartRows = {
      {0.04, 0.62, 0.22, 0.08, 0.04}, {0.04, 0.22, 0.60, 0.10, 0.04},
      {0.03, 0.15, 0.27, 0.50, 0.05}, {0.05, 0.55, 0.25, 0.10, 0.05},
      {0.04, 0.25, 0.55, 0.12, 0.04}, {0.03, 0.18, 0.29, 0.45, 0.05},
      {0.05, 0.58, 0.22, 0.10, 0.05}, {0.04, 0.20, 0.58, 0.13, 0.05},
  };

  GeneratorConfig config;
  config.n_patients = n_patients;
  config.seed = seed;
  config.max_boundaries = 5;
  config.background = {{"vomiting", 0.10}, {"confusion", 0.08}};
  config.denial_pool = {"vomiting", "confusion"};
  config.negation_rate = 0.15;
  for (int c = 0; c < n_clusters; ++c) {
    ClusterSpec spec;
    spec.name = "A" + std::to_string(c + 1);
    spec.signature = kSignatures[static_cast<std::size_t>(c)];
    spec.signature_prevalence = 0.97;
    spec.initial_severity = c % 2 == 0 ? 3 : 2;
    spec.start_row = kStartRows[static_cast<std::size_t>(c)];
    spec.after_improve = {0.50 + 0.01 * c, 0.0, 0.36 - 0.01 * c, 0.07, 0.07};
    spec.after_persistent = {0.12, 0.30, 0.40, 0.13, 0.05};
    spec.after_deteriorate = {0.05, 0.22, 0.38, 0.0, 0.35};
    config.clusters.push_back(std::move(spec));
  }
  return config;
}

GeneratorConfig GeneratorConfig::markov_demo(int n_patients, std::uint64_t seed) {
  GeneratorConfig config;
  config.n_patients = n_patients;
  config.seed = seed;
  config.max_boundaries = 3;
  config.background = {{"vomiting", 0.10}};
  config.denial_pool = {"confusion"};
  config.negation_rate = 0.10;

  ClusterSpec c0;
  c0.name = "M1";
  c0.signature = {"hypotension", "acidosis", "diabetes", "respiratory distress"};
  c0.initial_severity = 3;
  c0.start_row = {0.04, 0.85, 0.04, 0.03, 0.04};
  c0.after_improve = {0.50, 0.0, 0.40, 0.05, 0.05};
  c0.after_persistent = {0.20, 0.40, 0.30, 0.05, 0.05};
  c0.after_deteriorate = {0.05, 0.30, 0.40, 0.0, 0.25};

  ClusterSpec c1 = c0;
  c1.name = "M2";
  c1.signature = {"dyspnea", "airway disease", "thick sputum", "basilar rales"};
  c1.initial_severity = 3;
  c1.start_row = {0.04, 0.04, 0.85, 0.03, 0.04};

  config.clusters = {std::move(c0), std::move(c1)};
  return config;
}

}  // namespace clinpath::synth
