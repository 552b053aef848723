#include "clinpath/pathways.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace clinpath::pathways {

using nlohmann::json;

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Discharge: return "Discharge";
    case Outcome::Improve: return "Improve";
    case Outcome::Persistent: return "Persistent";
    case Outcome::Deteriorate: return "Deteriorate";
    case Outcome::Decease: return "Decease";
    case Outcome::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::optional<Outcome> outcome_from_string(std::string_view s) {
  for (int i = 0; i < kOutcomeCount; ++i) {
    const Outcome o = static_cast<Outcome>(i);
    if (s == to_string(o)) return o;
  }
  return std::nullopt;
}

std::string_view to_string(PriorState s) {
  switch (s) {
    case PriorState::Start: return "Start";
    case PriorState::Improve: return "Improve";
    case PriorState::Persistent: return "Persistent";
    case PriorState::Deteriorate: return "Deteriorate";
  }
  return "Start";
}

Outcome boundary_outcome(severity::SepsisState from, severity::SepsisState to) {
  if (from == severity::SepsisState::Unknown || to == severity::SepsisState::Unknown) {
    return Outcome::Unknown;
  }
  const int delta = severity::score(to) - severity::score(from);
  if (delta < 0) return Outcome::Improve;
  if (delta > 0) return Outcome::Deteriorate;
  return Outcome::Persistent;
}

std::vector<Outcome> label_transitions(const severity::SeverityTimeline& timeline) {
  std::vector<Outcome> out;
  const std::size_t n = timeline.stages.size();
  if (n < 2) return out;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    if (t + 2 == n) {
      // the stay ends at stage t+2 (the discharge stage)
      if (!timeline.disposition) {
        out.push_back(Outcome::Unknown);
      } else if (timeline.disposition->status == corpus::DischargeStatus::Decease) {
        out.push_back(Outcome::Decease);
      } else {
        out.push_back(Outcome::Discharge);
      }
    } else {
      out.push_back(boundary_outcome(timeline.stages[t].state, timeline.stages[t + 1].state));
    }
  }
  return out;
}

double TransitionMatrix::row_total(int prior) const {
  double total = 0.0;
  for (int o = 0; o < kOutcomeCount; ++o) {
    if (static_cast<Outcome>(o) == Outcome::Unknown) continue;
    total += counts[static_cast<std::size_t>(prior)][static_cast<std::size_t>(o)];
  }
  return total;
}

namespace {

std::optional<PriorState> prior_from_outcome(Outcome o) {
  switch (o) {
    case Outcome::Improve: return PriorState::Improve;
    case Outcome::Persistent: return PriorState::Persistent;
    case Outcome::Deteriorate: return PriorState::Deteriorate;
    default: return std::nullopt;  // terminal or unknown: no onward row
  }
}

void normalize_rows(TransitionMatrix& m) {
  for (int p = 0; p < kPriorStateCount; ++p) {
    const double total = m.row_total(p);
    if (total <= 0.0) continue;
    for (int o = 0; o < kOutcomeCount; ++o) {
      if (static_cast<Outcome>(o) == Outcome::Unknown) continue;
      m.probs[static_cast<std::size_t>(p)][static_cast<std::size_t>(o)] =
          m.counts[static_cast<std::size_t>(p)][static_cast<std::size_t>(o)] / total;
    }
  }
}

}  // namespace

std::vector<TransitionMatrix> estimate_transitions(
    const std::vector<std::vector<Outcome>>& outcome_sequences,
    const std::vector<int>& subgroup_of_sequence, int n_subgroups) {
  if (outcome_sequences.size() != subgroup_of_sequence.size()) {
    throw std::invalid_argument("estimate_transitions: size mismatch");
  }
  std::map<std::pair<int, int>, TransitionMatrix> matrices;  // (subgroup, stage)
  for (std::size_t i = 0; i < outcome_sequences.size(); ++i) {
    const int subgroup = subgroup_of_sequence[i];
    if (subgroup < 0 || subgroup >= n_subgroups) continue;
    const auto& seq = outcome_sequences[i];
    std::optional<PriorState> prior = PriorState::Start;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const int stage = static_cast<int>(t) + 1;
      if (prior) {
        auto [it, inserted] = matrices.try_emplace({subgroup, stage});
        if (inserted) {
          it->second.subgroup = subgroup;
          it->second.stage = stage;
        }
        it->second.counts[static_cast<std::size_t>(*prior)]
                         [static_cast<std::size_t>(seq[t])] += 1.0;
      }
      prior = prior_from_outcome(seq[t]);
    }
  }
  std::vector<TransitionMatrix> out;
  out.reserve(matrices.size());
  for (auto& [key, m] : matrices) {
    normalize_rows(m);
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Stage2Row> stage2_distribution(const std::vector<std::vector<Outcome>>& sequences,
                                           const std::vector<int>& subgroup_of_sequence,
                                           int n_subgroups) {
  std::vector<Stage2Row> rows(static_cast<std::size_t>(n_subgroups));
  for (int s = 0; s < n_subgroups; ++s) rows[static_cast<std::size_t>(s)].subgroup = s;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].empty()) continue;
    const int subgroup = subgroup_of_sequence[i];
    if (subgroup < 0 || subgroup >= n_subgroups) continue;
    rows[static_cast<std::size_t>(subgroup)]
        .counts[static_cast<std::size_t>(sequences[i].front())] += 1.0;
  }
  for (auto& row : rows) {
    double total = 0.0;
    for (int o = 0; o < kOutcomeCount; ++o) {
      if (static_cast<Outcome>(o) == Outcome::Unknown) continue;
      total += row.counts[static_cast<std::size_t>(o)];
    }
    if (total <= 0.0) continue;
    for (int o = 0; o < kOutcomeCount; ++o) {
      if (static_cast<Outcome>(o) == Outcome::Unknown) continue;
      row.probs[static_cast<std::size_t>(o)] = row.counts[static_cast<std::size_t>(o)] / total;
    }
  }
  return rows;
}

std::string stage2_to_csv(const std::vector<Stage2Row>& rows) {
  std::string out = "subgroup";
  for (int o = 0; o < kOutcomeCount; ++o) {
    if (static_cast<Outcome>(o) == Outcome::Unknown) continue;
    out += ',';
    out += to_string(static_cast<Outcome>(o));
  }
  out += '\n';
  char buf[32];
  for (const auto& row : rows) {
    out += std::to_string(row.subgroup);
    double total = 0.0;
    for (int o = 0; o < kOutcomeCount; ++o) total += row.counts[static_cast<std::size_t>(o)];
    for (int o = 0; o < kOutcomeCount; ++o) {
      if (static_cast<Outcome>(o) == Outcome::Unknown) continue;
      out += ',';
      if (total > 0.0) {
        std::snprintf(buf, sizeof(buf), "%.4f", row.probs[static_cast<std::size_t>(o)]);
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

TransitionAnnotation annotate_transition(
    const std::vector<const std::map<std::string, Polarity>*>& prev_stages,
    const std::vector<const std::map<std::string, Polarity>*>& next_stages, int top_m) {
  if (prev_stages.size() != next_stages.size() || prev_stages.empty()) {
    throw std::invalid_argument("annotate_transition: need matched, non-empty stage maps");
  }
  const double n = static_cast<double>(prev_stages.size());

  std::map<std::string, double> treated_counts, emerging_counts;
  for (std::size_t i = 0; i < prev_stages.size(); ++i) {
    const auto& prev = *prev_stages[i];
    const auto& next = *next_stages[i];
    for (const auto& [cui, polarity] : prev) {
      if (polarity != Polarity::Positive) continue;
      const auto it = next.find(cui);
      if (it == next.end() || it->second == Polarity::Negative) treated_counts[cui] += 1.0;
    }
    for (const auto& [cui, polarity] : next) {
      if (polarity != Polarity::Positive) continue;
      const auto it = prev.find(cui);
      if (it == prev.end() || it->second == Polarity::Negative) emerging_counts[cui] += 1.0;
    }
  }

  auto top = [&](const std::map<std::string, double>& counts) {
    std::vector<AnnotationEntry> entries;
    for (const auto& [cui, count] : counts) entries.push_back({cui, count / n});
    std::sort(entries.begin(), entries.end(), [](const AnnotationEntry& a, const AnnotationEntry& b) {
      if (a.fraction != b.fraction) return a.fraction > b.fraction;
      return a.cui < b.cui;
    });
    if (static_cast<int>(entries.size()) > top_m) entries.resize(static_cast<std::size_t>(top_m));
    return entries;
  };

  TransitionAnnotation out;
  out.treated = top(treated_counts);
  out.emerging = top(emerging_counts);
  return out;
}

std::string_view to_string(EdgeColor c) {
  switch (c) {
    case EdgeColor::Black: return "black";
    case EdgeColor::Red: return "red";
    case EdgeColor::Violet: return "violet";
    case EdgeColor::Turquoise: return "turquoise";
  }
  return "black";
}

EdgeColor edge_color(double probability) {
  if (probability >= 0.5) return EdgeColor::Black;
  if (probability >= 0.3) return EdgeColor::Red;
  if (probability >= 0.1) return EdgeColor::Violet;
  return EdgeColor::Turquoise;
}

namespace {

std::string node_name(int stage, std::string_view state) {
  return "stage" + std::to_string(stage) + ":" + std::string(state);
}

struct EdgeRecord {
  int subgroup, stage;
  PriorState from;
  Outcome to;
  double count, prob;
  const TransitionAnnotation* annotation = nullptr;
};

std::vector<EdgeRecord> collect_edges(const std::vector<TransitionMatrix>& matrices,
                                      const std::vector<TransitionAnnotation>& annotations) {
  std::map<std::tuple<int, int, int, int>, const TransitionAnnotation*> ann_index;
  for (const auto& a : annotations) {
    ann_index[{a.subgroup, a.stage, static_cast<int>(a.from), static_cast<int>(a.to)}] = &a;
  }
  std::vector<EdgeRecord> edges;
  for (const auto& m : matrices) {
    for (int p = 0; p < kPriorStateCount; ++p) {
      for (int o = 0; o < kOutcomeCount; ++o) {
        const double count = m.counts[static_cast<std::size_t>(p)][static_cast<std::size_t>(o)];
        if (count <= 0.0 || static_cast<Outcome>(o) == Outcome::Unknown) continue;
        EdgeRecord e;
        e.subgroup = m.subgroup;
        e.stage = m.stage;
        e.from = static_cast<PriorState>(p);
        e.to = static_cast<Outcome>(o);
        e.count = count;
        e.prob = m.probs[static_cast<std::size_t>(p)][static_cast<std::size_t>(o)];
        const auto it = ann_index.find({m.subgroup, m.stage, p, o});
        if (it != ann_index.end()) e.annotation = it->second;
        edges.push_back(e);
      }
    }
  }
  return edges;
}

std::string annotation_label(const TransitionAnnotation& a) {
  std::string label;
  char buf[64];
  auto append = [&](const char* tag, const std::vector<AnnotationEntry>& entries) {
    if (entries.empty()) return;
    label += tag;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s %s (%.2f)", i == 0 ? "" : ",", entries[i].cui.c_str(),
                    entries[i].fraction);
      label += buf;
    }
  };
  append("treated:", a.treated);
  if (!label.empty() && !a.emerging.empty()) label += "\\n";
  append("emerging:", a.emerging);
  return label;
}

std::string render_dot(const std::vector<EdgeRecord>& edges, const NetworkRenderOptions& options) {
  std::set<int> subgroups;
  for (const auto& e : edges) subgroups.insert(e.subgroup);

  std::string out;
  char buf[64];
  for (int subgroup : subgroups) {
    out += "digraph subgroup_" + std::to_string(subgroup) + " {\n";
    out += "  rankdir=LR;\n  node [shape=ellipse];\n";
    std::set<std::string> nodes;
    std::string body;
    for (const auto& e : edges) {
      if (e.subgroup != subgroup) continue;
      if (e.count < static_cast<double>(options.min_support)) continue;
      const std::string src = node_name(e.stage, to_string(e.from));
      const std::string dst = node_name(e.stage + 1, to_string(e.to));
      nodes.insert(src);
      nodes.insert(dst);
      std::snprintf(buf, sizeof(buf), "%.4f", e.prob);
      std::string label = buf;
      if (e.annotation != nullptr) {
        const std::string ann = annotation_label(*e.annotation);
        if (!ann.empty()) label += "\\n" + ann;
      }
      body += "  \"" + src + "\" -> \"" + dst + "\" [label=\"" + label + "\", color=" +
              std::string(to_string(edge_color(e.prob))) + "];\n";
    }
    for (const auto& node : nodes) {
      out += "  \"" + node + "\";\n";
    }
    out += body;
    out += "}\n";
  }
  if (subgroups.empty()) out = "digraph empty {\n}\n";
  return out;
}

std::string render_json(const std::vector<EdgeRecord>& edges) {
  json by_subgroup = json::object();
  for (const auto& e : edges) {
    json ej;
    ej["stage"] = e.stage;
    ej["from"] = node_name(e.stage, to_string(e.from));
    ej["to"] = node_name(e.stage + 1, to_string(e.to));
    ej["count"] = e.count;
    ej["probability"] = e.prob;
    ej["color"] = to_string(edge_color(e.prob));
    if (e.annotation != nullptr) {
      json treated = json::array(), emerging = json::array();
      for (const auto& t : e.annotation->treated) {
        treated.push_back(json::array({t.cui, t.fraction}));
      }
      for (const auto& t : e.annotation->emerging) {
        emerging.push_back(json::array({t.cui, t.fraction}));
      }
      ej["treated"] = std::move(treated);
      ej["emerging"] = std::move(emerging);
    }
    by_subgroup[std::to_string(e.subgroup)].push_back(std::move(ej));
  }
  json j;
  j["subgroups"] = std::move(by_subgroup);
  return j.dump(2) + "\n";
}

}  // namespace

std::string export_network(const std::vector<TransitionMatrix>& matrices,
                           const std::vector<TransitionAnnotation>& annotations,
                           const std::string& format, const NetworkRenderOptions& options) {
  const auto edges = collect_edges(matrices, annotations);
  if (format == "dot") return render_dot(edges, options);
  if (format == "json") return render_json(edges);
  throw std::invalid_argument("export_network: unsupported format '" + format + "'");
}

}  // namespace clinpath::pathways
