#include "clinpath/textproc.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include <json.hpp>

#include "clinpath/io_util.hpp"

namespace clinpath::textproc {

using nlohmann::json;

std::optional<SemanticType> semantic_type_from_string(std::string_view s) {
  if (s == "Disease") return SemanticType::Disease;
  if (s == "Sign or Symptom") return SemanticType::SignOrSymptom;
  if (s == "Disease or Syndrome") return SemanticType::DiseaseOrSyndrome;
  if (s == "Acquired Abnormality") return SemanticType::AcquiredAbnormality;
  if (s == "Anatomical Abnormality") return SemanticType::AnatomicalAbnormality;
  if (s == "Congenital Abnormality") return SemanticType::CongenitalAbnormality;
  if (s == "Injury or Poisoning") return SemanticType::InjuryOrPoisoning;
  if (s == "Mental Process") return SemanticType::MentalProcess;
  if (s == "Mental or Behavioral Dysfunction") return SemanticType::MentalOrBehavioralDysfunction;
  return std::nullopt;
}

std::string_view to_string(SemanticType t) {
  switch (t) {
    case SemanticType::Disease: return "Disease";
    case SemanticType::SignOrSymptom: return "Sign or Symptom";
    case SemanticType::DiseaseOrSyndrome: return "Disease or Syndrome";
    case SemanticType::AcquiredAbnormality: return "Acquired Abnormality";
    case SemanticType::AnatomicalAbnormality: return "Anatomical Abnormality";
    case SemanticType::CongenitalAbnormality: return "Congenital Abnormality";
    case SemanticType::InjuryOrPoisoning: return "Injury or Poisoning";
    case SemanticType::MentalProcess: return "Mental Process";
    case SemanticType::MentalOrBehavioralDysfunction: return "Mental or Behavioral Dysfunction";
  }
  return "Sign or Symptom";
}

namespace {

int count_tokens(std::string_view canonical) {
  if (canonical.empty()) return 0;
  return 1 + static_cast<int>(std::count(canonical.begin(), canonical.end(), ' '));
}

std::vector<LexiconEntry> parse_lexicon_tsv(std::string_view tsv, std::string_view source_name) {
  std::vector<LexiconEntry> entries;
  const auto lines = split_lines(tsv);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    if (trim(line).empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw std::runtime_error(std::string(source_name) + ":" + std::to_string(i + 1) +
                               ": expected 4 tab-separated fields");
    }
    LexiconEntry e;
    e.surface = canonical_key(fields[0]);
    e.cui = std::string(trim(fields[1]));
    const auto type = semantic_type_from_string(trim(fields[2]));
    if (!type) {
      throw std::runtime_error(std::string(source_name) + ":" + std::to_string(i + 1) +
                               ": unknown semantic type '" + fields[2] + "'");
    }
    e.type = *type;
    e.preferred_name = std::string(trim(fields[3]));
    if (e.surface.empty() || e.cui.empty()) {
      throw std::runtime_error(std::string(source_name) + ":" + std::to_string(i + 1) +
                               ": empty surface or cui");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace

ConceptLexicon ConceptLexicon::from_entries(std::vector<LexiconEntry> entries) {
  ConceptLexicon lex;
  for (auto& e : entries) {
    e.surface = canonical_key(e.surface);
    const auto [it, inserted] = lex.index_.try_emplace(e.surface, lex.entries_.size());
    if (!inserted) continue;  // first occurrence wins
    lex.max_surface_tokens_ = std::max(lex.max_surface_tokens_, count_tokens(e.surface));
    lex.entries_.push_back(std::move(e));
  }
  return lex;
}

ConceptLexicon ConceptLexicon::parse(std::string_view tsv, std::string_view source_name) {
  return from_entries(parse_lexicon_tsv(tsv, source_name));
}

ConceptLexicon ConceptLexicon::load(const std::string& path) {
  return parse(read_file(path), path);
}

const LexiconEntry* ConceptLexicon::find(std::string_view canonical_surface) const {
  const auto it = index_.find(std::string(canonical_surface));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

ConceptDictionary ConceptDictionary::from_entries(std::vector<LexiconEntry> entries) {
  ConceptDictionary dict;
  for (auto& e : entries) {
    e.surface = canonical_key(e.surface);
    const auto [it, inserted] = dict.index_.try_emplace(e.surface, dict.entries_.size());
    if (!inserted) continue;
    dict.entries_.push_back(std::move(e));
  }
  return dict;
}

ConceptDictionary ConceptDictionary::parse(std::string_view tsv, std::string_view source_name) {
  return from_entries(parse_lexicon_tsv(tsv, source_name));
}

ConceptDictionary ConceptDictionary::load(const std::string& path) {
  return parse(read_file(path), path);
}

const LexiconEntry* ConceptDictionary::find_exact(std::string_view canonical_surface) const {
  const auto it = index_.find(std::string(canonical_surface));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

std::map<std::string, std::string> ConceptDictionary::preferred_names() const {
  std::map<std::string, std::string> names;
  for (const auto& e : entries_) names.try_emplace(e.cui, e.preferred_name);
  return names;
}

TokenizedText tokenize(std::string_view text) {
  TokenizedText out;
  out.lower = to_lower(text);
  std::size_t i = 0;
  const std::size_t n = out.lower.size();
  bool pending_boundary = false;
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(out.lower[i]);
    if (std::isalnum(c)) {
      std::size_t begin = i;
      while (i < n && std::isalnum(static_cast<unsigned char>(out.lower[i]))) ++i;
      if (!out.tokens.empty()) out.boundary_after.push_back(pending_boundary);
      out.tokens.push_back({begin, i});
      pending_boundary = false;
    } else {
      if (c == '.' || c == ';' || c == '\n') pending_boundary = true;
      ++i;
    }
  }
  return out;
}

namespace {

// true when no sentence boundary falls strictly inside tokens [begin, end)
bool contiguous_span(const TokenizedText& toks, std::size_t begin, std::size_t end) {
  for (std::size_t k = begin; k + 1 < end; ++k) {
    if (toks.boundary_after[k]) return false;
  }
  return true;
}

std::string join_tokens(const TokenizedText& toks, std::size_t begin, std::size_t end) {
  std::string key;
  for (std::size_t k = begin; k < end; ++k) {
    if (k > begin) key.push_back(' ');
    key.append(toks.token_text(k));
  }
  return key;
}

}  // namespace

std::vector<EntityMention> extract_entities(std::string_view text, const TokenizedText& toks,
                                            const ConceptLexicon& lexicon) {
  std::vector<EntityMention> mentions;
  const std::size_t n = toks.tokens.size();
  const std::size_t max_n =
      std::min<std::size_t>(kMaxNgramTokens, static_cast<std::size_t>(lexicon.max_surface_tokens()));
  std::size_t i = 0;
  while (i < n) {
    bool matched = false;
    for (std::size_t len = std::min(max_n, n - i); len >= 1; --len) {
      if (!contiguous_span(toks, i, i + len)) continue;
      const LexiconEntry* entry = lexicon.find(join_tokens(toks, i, i + len));
      if (entry == nullptr) continue;
      EntityMention m;
      m.token_begin = i;
      m.token_end = i + len;
      m.begin = toks.tokens[i].begin;
      m.end = toks.tokens[i + len - 1].end;
      m.surface = std::string(text.substr(m.begin, m.end - m.begin));
      m.type = entry->type;
      mentions.push_back(std::move(m));
      i += len;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  return mentions;
}

std::vector<EntityMention> extract_entities(std::string_view text, const ConceptLexicon& lexicon) {
  const TokenizedText toks = tokenize(text);
  return extract_entities(text, toks, lexicon);
}

std::optional<TriggerRole> trigger_role_from_string(std::string_view s) {
  if (s == "pre_negation") return TriggerRole::PreNegation;
  if (s == "post_negation") return TriggerRole::PostNegation;
  if (s == "pseudo_negation") return TriggerRole::PseudoNegation;
  if (s == "termination") return TriggerRole::Termination;
  return std::nullopt;
}

std::string_view to_string(TriggerRole r) {
  switch (r) {
    case TriggerRole::PreNegation: return "pre_negation";
    case TriggerRole::PostNegation: return "post_negation";
    case TriggerRole::PseudoNegation: return "pseudo_negation";
    case TriggerRole::Termination: return "termination";
  }
  return "pre_negation";
}

NegationTriggerSet NegationTriggerSet::from_entries(std::vector<Entry> entries) {
  NegationTriggerSet set;
  for (auto& e : entries) {
    e.phrase = canonical_key(e.phrase);
    const auto [it, inserted] = set.index_.try_emplace(e.phrase, set.entries_.size());
    if (!inserted) continue;
    set.max_phrase_tokens_ = std::max(set.max_phrase_tokens_, count_tokens(e.phrase));
    set.entries_.push_back(std::move(e));
  }
  return set;
}

NegationTriggerSet NegationTriggerSet::parse(std::string_view tsv, std::string_view source_name) {
  std::vector<Entry> entries;
  const auto lines = split_lines(tsv);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    if (trim(line).empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) {
      throw std::runtime_error(std::string(source_name) + ":" + std::to_string(i + 1) +
                               ": expected phrase<TAB>role");
    }
    const auto role = trigger_role_from_string(trim(fields[1]));
    if (!role) {
      throw std::runtime_error(std::string(source_name) + ":" + std::to_string(i + 1) +
                               ": unknown trigger role '" + fields[1] + "'");
    }
    entries.push_back({canonical_key(fields[0]), *role});
  }
  return from_entries(std::move(entries));
}

NegationTriggerSet NegationTriggerSet::load(const std::string& path) {
  return parse(read_file(path), path);
}

NegationTriggerSet NegationTriggerSet::defaults() {
  return from_entries({
      {"no", TriggerRole::PreNegation},
      {"not", TriggerRole::PreNegation},
      {"without", TriggerRole::PreNegation},
      {"denies", TriggerRole::PreNegation},
      {"denied", TriggerRole::PreNegation},
      {"deny", TriggerRole::PreNegation},
      {"absent", TriggerRole::PreNegation},
      {"absence of", TriggerRole::PreNegation},
      {"negative for", TriggerRole::PreNegation},
      {"free of", TriggerRole::PreNegation},
      {"no evidence of", TriggerRole::PreNegation},
      {"no sign of", TriggerRole::PreNegation},
      {"no signs of", TriggerRole::PreNegation},
      {"refuses", TriggerRole::PreNegation},
      {"declines", TriggerRole::PreNegation},
      {"rules out", TriggerRole::PreNegation},
      {"ruled out", TriggerRole::PostNegation},
      {"was ruled out", TriggerRole::PostNegation},
      {"unlikely", TriggerRole::PostNegation},
      {"resolved", TriggerRole::PostNegation},
      {"has resolved", TriggerRole::PostNegation},
      {"no increase", TriggerRole::PseudoNegation},
      {"no change", TriggerRole::PseudoNegation},
      {"not ruled out", TriggerRole::PseudoNegation},
      {"no further", TriggerRole::PseudoNegation},
      {"but", TriggerRole::Termination},
      {"however", TriggerRole::Termination},
      {"except", TriggerRole::Termination},
      {"although", TriggerRole::Termination},
      {"aside from", TriggerRole::Termination},
      {"apart from", TriggerRole::Termination},
  });
}

const NegationTriggerSet::Entry* NegationTriggerSet::find(std::string_view canonical_phrase) const {
  const auto it = index_.find(std::string(canonical_phrase));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

namespace {

struct TriggerOccurrence {
  std::size_t token_begin = 0, token_end = 0;  // [begin, end)
  TriggerRole role = TriggerRole::PreNegation;
};

// Greedy longest-match scan; a longer phrase claims its tokens, so the "no"
// inside a pseudo-negation like "no increase" cannot fire on its own.
std::vector<TriggerOccurrence> find_triggers(const TokenizedText& toks,
                                             const NegationTriggerSet& triggers) {
  std::vector<TriggerOccurrence> occ;
  const std::size_t n = toks.tokens.size();
  const std::size_t max_n = static_cast<std::size_t>(triggers.max_phrase_tokens());
  std::size_t i = 0;
  while (i < n) {
    bool matched = false;
    for (std::size_t len = std::min(max_n, n - i); len >= 1; --len) {
      if (!contiguous_span(toks, i, i + len)) continue;
      const auto* entry = triggers.find(join_tokens(toks, i, i + len));
      if (entry == nullptr) continue;
      occ.push_back({i, i + len, entry->role});
      i += len;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  return occ;
}

}  // namespace

void detect_negations(const TokenizedText& toks, std::vector<EntityMention>& mentions,
                      const NegationTriggerSet& triggers, const NegexConfig& config) {
  const std::size_t n = toks.tokens.size();
  if (n == 0 || mentions.empty()) return;

  std::vector<int> mention_of(n, -1);
  for (std::size_t mi = 0; mi < mentions.size(); ++mi) {
    for (std::size_t t = mentions[mi].token_begin; t < mentions[mi].token_end; ++t) {
      mention_of[t] = static_cast<int>(mi);
    }
  }

  const auto occurrences = find_triggers(toks, triggers);
  // trigger lookup by last and by first token
  std::vector<int> occ_ending_at(n, -1), occ_starting_at(n, -1);
  for (std::size_t oi = 0; oi < occurrences.size(); ++oi) {
    occ_ending_at[occurrences[oi].token_end - 1] = static_cast<int>(oi);
    occ_starting_at[occurrences[oi].token_begin] = static_cast<int>(oi);
  }

  const long w = config.scope_window;

  for (std::size_t mi = 0; mi < mentions.size(); ++mi) {
    EntityMention& m = mentions[mi];
    bool negative = false;

    // backward scan for pre-negation triggers
    {
      long j = static_cast<long>(m.token_begin) - 1;
      const long limit = static_cast<long>(m.token_begin) - w;
      while (j >= 0 && j >= limit) {
        if (toks.boundary_after[j]) break;  // sentence boundary between j and j+1
        if (mention_of[j] >= 0 && mention_of[j] != static_cast<int>(mi)) break;
        const int oi = occ_ending_at[j];
        if (oi >= 0) {
          const TriggerOccurrence& o = occurrences[static_cast<std::size_t>(oi)];
          if (o.role == TriggerRole::PreNegation) {
            negative = true;
            break;
          }
          if (o.role == TriggerRole::Termination) break;
          // pseudo-negation and post-negation phrases are inert here
          j = static_cast<long>(o.token_begin) - 1;
          continue;
        }
        --j;
      }
    }

    // forward scan for post-negation triggers
    if (!negative) {
      const long last = static_cast<long>(m.token_end) - 1;
      long j = last + 1;
      const long limit = last + w;
      while (j < static_cast<long>(n) && j <= limit) {
        if (toks.boundary_after[j - 1]) break;
        if (mention_of[j] >= 0 && mention_of[j] != static_cast<int>(mi)) break;
        const int oi = occ_starting_at[j];
        if (oi >= 0) {
          const TriggerOccurrence& o = occurrences[static_cast<std::size_t>(oi)];
          if (o.role == TriggerRole::PostNegation) {
            negative = true;
            break;
          }
          if (o.role == TriggerRole::Termination) break;
          j = static_cast<long>(o.token_end);
          continue;
        }
        ++j;
      }
    }

    m.polarity = negative ? Polarity::Negative : Polarity::Positive;
  }
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  const std::size_t na = a.size(), nb = b.size();
  if (na == 0) return nb;
  if (nb == 0) return na;
  std::vector<std::size_t> prev(nb + 1), cur(nb + 1);
  for (std::size_t j = 0; j <= nb; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= na; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= nb; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[nb];
}

double normalized_levenshtein(std::string_view a, std::string_view b) {
  const std::size_t m = std::max(a.size(), b.size());
  if (m == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(m);
}

std::string local_identifier(std::string_view surface) {
  std::string canonical = canonical_key(surface);
  for (char& c : canonical) {
    if (c == ' ') c = '_';
  }
  return "LOCAL:" + canonical;
}

std::string normalize_surface(std::string_view surface, const ConceptDictionary& dictionary,
                              const NormalizeConfig& config) {
  const std::string key = canonical_key(surface);
  if (const LexiconEntry* exact = dictionary.find_exact(key)) return exact->cui;

  double best_d = 2.0;
  const std::string* best_cui = nullptr;
  for (const auto& entry : dictionary.entries()) {
    const double d = normalized_levenshtein(key, entry.surface);
    if (d < best_d || (d == best_d && best_cui != nullptr && entry.cui < *best_cui)) {
      best_d = d;
      best_cui = &entry.cui;
    }
  }
  if (best_cui != nullptr && best_d <= config.theta) return *best_cui;
  return local_identifier(key);
}

StructuredNote process_note(const corpus::ClinicalNote& note, int day_index,
                            const TextResources& resources) {
  const TokenizedText toks = tokenize(note.text);
  std::vector<EntityMention> mentions = extract_entities(note.text, toks, resources.lexicon);
  detect_negations(toks, mentions, resources.triggers, resources.negex);

  StructuredNote out;
  out.patient_id = note.patient_id;
  out.note_id = note.note_id;
  out.day_index = day_index;
  for (auto& m : mentions) {
    m.cui = normalize_surface(m.surface, resources.dictionary, resources.normalize);
    const auto [it, inserted] = out.conditions.try_emplace(m.cui, m.polarity);
    if (!inserted) it->second = merge_polarity(it->second, m.polarity);
  }
  return out;
}

std::map<std::string, std::vector<ExternalAnnotation>> parse_annotations(std::string_view jsonl) {
  std::map<std::string, std::vector<ExternalAnnotation>> out;
  for (const std::string_view raw : split_lines(jsonl)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("note_id")) continue;
    auto& list = out[obj.at("note_id").get<std::string>()];
    for (const auto& a : obj.value("annotations", json::array())) {
      ExternalAnnotation ann;
      ann.start = a.at("start").get<std::size_t>();
      ann.end = a.at("end").get<std::size_t>();
      ann.surface = a.value("surface", std::string());
      const auto type = semantic_type_from_string(a.value("semantic_type", "Sign or Symptom"));
      ann.type = type.value_or(SemanticType::SignOrSymptom);
      list.push_back(std::move(ann));
    }
  }
  return out;
}

StructuredNote process_note_with_annotations(const corpus::ClinicalNote& note, int day_index,
                                             const std::vector<ExternalAnnotation>& annotations,
                                             const TextResources& resources) {
  const TokenizedText toks = tokenize(note.text);
  std::vector<EntityMention> mentions;
  for (const auto& ann : annotations) {
    if (ann.start >= ann.end || ann.end > note.text.size()) continue;
    EntityMention m;
    m.begin = ann.start;
    m.end = ann.end;
    m.surface = ann.surface.empty()
                    ? std::string(std::string_view(note.text).substr(ann.start, ann.end - ann.start))
                    : ann.surface;
    m.type = ann.type;
    // covering token range, for negation scope
    m.token_begin = toks.tokens.size();
    m.token_end = 0;
    for (std::size_t t = 0; t < toks.tokens.size(); ++t) {
      if (toks.tokens[t].end <= ann.start) continue;
      if (toks.tokens[t].begin >= ann.end) break;
      m.token_begin = std::min(m.token_begin, t);
      m.token_end = std::max(m.token_end, t + 1);
    }
    if (m.token_begin >= m.token_end) continue;  // span covers no token
    mentions.push_back(std::move(m));
  }
  std::sort(mentions.begin(), mentions.end(),
            [](const EntityMention& a, const EntityMention& b) { return a.begin < b.begin; });
  // mentions must not overlap; later-starting duplicates lose
  std::vector<EntityMention> kept;
  for (auto& m : mentions) {
    if (kept.empty() || m.begin >= kept.back().end) kept.push_back(std::move(m));
  }
  mentions = std::move(kept);
  detect_negations(toks, mentions, resources.triggers, resources.negex);

  StructuredNote out;
  out.patient_id = note.patient_id;
  out.note_id = note.note_id;
  out.day_index = day_index;
  for (auto& m : mentions) {
    m.cui = normalize_surface(m.surface, resources.dictionary, resources.normalize);
    const auto [it, inserted] = out.conditions.try_emplace(m.cui, m.polarity);
    if (!inserted) it->second = merge_polarity(it->second, m.polarity);
  }
  return out;
}

}  // namespace clinpath::textproc
