#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clinpath/severity.hpp"
#include "clinpath/timeline.hpp"
#include "clinpath/types.hpp"

namespace clinpath::pathways {

enum class Outcome { Discharge, Improve, Persistent, Deteriorate, Decease, Unknown };
inline constexpr int kOutcomeCount = 6;

std::string_view to_string(Outcome o);
std::optional<Outcome> outcome_from_string(std::string_view s);

// Row states of the transition matrices: the virtual Start state feeds the
// first boundary, later boundaries condition on the previous outcome.
enum class PriorState { Start, Improve, Persistent, Deteriorate };
inline constexpr int kPriorStateCount = 4;

std::string_view to_string(PriorState s);

// One outcome per stage boundary t -> t+1. The final boundary is labeled by
// disposition (Discharge/Decease, Unknown when no disposition is recorded);
// earlier boundaries compare severity scores, Unknown when either side is.
Outcome boundary_outcome(severity::SepsisState from, severity::SepsisState to);
std::vector<Outcome> label_transitions(const severity::SeverityTimeline& timeline);

struct TransitionMatrix {
  int subgroup = 0;
  int stage = 1;  // boundary index t (stage t -> t+1)
  // counts[prior][outcome]; probabilities exclude Unknown from numerator
  // and denominator, rows without support stay empty (all zero)
  std::array<std::array<double, kOutcomeCount>, kPriorStateCount> counts{};
  std::array<std::array<double, kOutcomeCount>, kPriorStateCount> probs{};

  double row_total(int prior) const;  // non-Unknown count
};

// Maximum-likelihood estimates per (subgroup, boundary). A transition is
// counted when the prior state is Start or a known score-comparison outcome
// and the next outcome is not Unknown.
std::vector<TransitionMatrix> estimate_transitions(
    const std::vector<std::vector<Outcome>>& outcome_sequences,
    const std::vector<int>& subgroup_of_sequence, int n_subgroups);

struct Stage2Row {
  int subgroup = 0;
  std::array<double, kOutcomeCount> counts{};
  std::array<double, kOutcomeCount> probs{};  // normalized over non-Unknown
};

// First-boundary outcome distribution per subgroup.
std::vector<Stage2Row> stage2_distribution(const std::vector<std::vector<Outcome>>& sequences,
                                           const std::vector<int>& subgroup_of_sequence,
                                           int n_subgroups);

// rows = subgroups, cols = outcomes
std::string stage2_to_csv(const std::vector<Stage2Row>& rows);

struct AnnotationEntry {
  std::string cui;
  double fraction = 0.0;
};

struct TransitionAnnotation {
  int subgroup = 0;
  int stage = 1;
  PriorState from = PriorState::Start;
  Outcome to = Outcome::Persistent;
  std::vector<AnnotationEntry> treated;   // positive before, cleared after
  std::vector<AnnotationEntry> emerging;  // absent before, positive after
};

// treated(c): fraction of edge patients with c positive in the previous
// stage and negative-or-absent in the next; emerging(c) the reverse. Ranked
// by fraction, ties toward the smaller CUI, top_m of each kept.
TransitionAnnotation annotate_transition(
    const std::vector<const std::map<std::string, Polarity>*>& prev_stages,
    const std::vector<const std::map<std::string, Polarity>*>& next_stages, int top_m = 2);

enum class EdgeColor { Black, Red, Violet, Turquoise };
std::string_view to_string(EdgeColor c);

// black >= 0.5, red [0.3, 0.5), violet [0.1, 0.3), turquoise below 0.1
EdgeColor edge_color(double probability);

struct NetworkRenderOptions {
  // edges below this patient count are left out of the DOT render (the JSON
  // document keeps everything)
  int min_support = 1;
};

// One digraph per subgroup ("dot") or a mirror document ("json"). Nodes are
// labeled stage{t}:{state}; edges carry the probability (4 decimals), the
// color bucket, and any annotations. Throws on an unsupported format name.
std::string export_network(const std::vector<TransitionMatrix>& matrices,
                           const std::vector<TransitionAnnotation>& annotations,
                           const std::string& format, const NetworkRenderOptions& options = {});

}  // namespace clinpath::pathways
