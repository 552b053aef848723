#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clinpath/corpus.hpp"
#include "clinpath/types.hpp"

namespace clinpath::textproc {

enum class SemanticType {
  Disease,
  SignOrSymptom,
  DiseaseOrSyndrome,
  AcquiredAbnormality,
  AnatomicalAbnormality,
  CongenitalAbnormality,
  InjuryOrPoisoning,
  MentalProcess,
  MentalOrBehavioralDysfunction,
};

std::optional<SemanticType> semantic_type_from_string(std::string_view s);
std::string_view to_string(SemanticType t);

struct LexiconEntry {
  std::string surface;  // canonical (lowercase, single spaces)
  std::string cui;
  SemanticType type = SemanticType::SignOrSymptom;
  std::string preferred_name;
};

// Surface-term table for span detection. Duplicate canonical surfaces keep
// the first occurrence, which doubles as the equal-length tie rule.
class ConceptLexicon {
 public:
  static ConceptLexicon load(const std::string& path);
  static ConceptLexicon parse(std::string_view tsv, std::string_view source_name);
  static ConceptLexicon from_entries(std::vector<LexiconEntry> entries);

  const LexiconEntry* find(std::string_view canonical_surface) const;
  const std::vector<LexiconEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  int max_surface_tokens() const { return max_surface_tokens_; }

 private:
  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  int max_surface_tokens_ = 1;
};

// Normalization dictionary; same TSV schema, typically a superset of the
// matcher lexicon.
class ConceptDictionary {
 public:
  static ConceptDictionary load(const std::string& path);
  static ConceptDictionary parse(std::string_view tsv, std::string_view source_name);
  static ConceptDictionary from_entries(std::vector<LexiconEntry> entries);

  const LexiconEntry* find_exact(std::string_view canonical_surface) const;
  const std::vector<LexiconEntry>& entries() const { return entries_; }
  // cui -> preferred name of its first entry
  std::map<std::string, std::string> preferred_names() const;

 private:
  std::vector<LexiconEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Token {
  std::size_t begin = 0, end = 0;  // [begin, end) byte span
};

struct TokenizedText {
  std::string lower;          // lowercased copy of the input
  std::vector<Token> tokens;  // alnum runs
  // boundary_after[i]: a sentence boundary (. ; or newline) occurs between
  // token i and token i+1
  std::vector<bool> boundary_after;

  std::string_view token_text(std::size_t i) const {
    return std::string_view(lower).substr(tokens[i].begin, tokens[i].end - tokens[i].begin);
  }
};

TokenizedText tokenize(std::string_view text);

struct EntityMention {
  std::size_t begin = 0, end = 0;              // byte span in the note text
  std::size_t token_begin = 0, token_end = 0;  // [token_begin, token_end)
  std::string surface;                         // original-text slice
  SemanticType type = SemanticType::SignOrSymptom;
  Polarity polarity = Polarity::Positive;
  std::string cui;  // empty until normalize()
};

inline constexpr int kMaxNgramTokens = 6;

// Greedy longest-match scan over token n-grams (n <= 6). Mentions come back
// sorted by start offset and pairwise non-overlapping; polarity Positive,
// cui unset.
std::vector<EntityMention> extract_entities(std::string_view text, const TokenizedText& toks,
                                            const ConceptLexicon& lexicon);
std::vector<EntityMention> extract_entities(std::string_view text, const ConceptLexicon& lexicon);

enum class TriggerRole { PreNegation, PostNegation, PseudoNegation, Termination };
std::optional<TriggerRole> trigger_role_from_string(std::string_view s);
std::string_view to_string(TriggerRole r);

class NegationTriggerSet {
 public:
  struct Entry {
    std::string phrase;  // canonical
    TriggerRole role = TriggerRole::PreNegation;
  };

  static NegationTriggerSet load(const std::string& path);
  static NegationTriggerSet parse(std::string_view tsv, std::string_view source_name);
  static NegationTriggerSet from_entries(std::vector<Entry> entries);
  // classic NegEx core vocabulary; used when no resource file is given
  static NegationTriggerSet defaults();

  const Entry* find(std::string_view canonical_phrase) const;
  const std::vector<Entry>& entries() const { return entries_; }
  int max_phrase_tokens() const { return max_phrase_tokens_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  int max_phrase_tokens_ = 1;
};

struct NegexConfig {
  int scope_window = 6;  // tokens
};

// NegEx: flips mentions to Negative when a pre-negation trigger ends within
// the scope window before the mention (or a post-negation trigger starts
// within the window after it), with the scope cut at termination phrases,
// sentence boundaries and other mentions. Pseudo-negation phrases never
// negate. Only the polarity field changes.
void detect_negations(const TokenizedText& toks, std::vector<EntityMention>& mentions,
                      const NegationTriggerSet& triggers, const NegexConfig& config = {});

std::size_t levenshtein(std::string_view a, std::string_view b);
// lev(a,b) / max(|a|,|b|); 0 when both empty
double normalized_levenshtein(std::string_view a, std::string_view b);

struct NormalizeConfig {
  double theta = 0.2;  // acceptance threshold on normalized distance
};

// "LOCAL:" + lowercase surface with whitespace runs collapsed to '_'
std::string local_identifier(std::string_view surface);

// Exact match, else nearest dictionary surface by normalized Levenshtein
// distance (ties toward the lexicographically smallest CUI), else a minted
// LOCAL identifier.
std::string normalize_surface(std::string_view surface, const ConceptDictionary& dictionary,
                              const NormalizeConfig& config = {});

struct StructuredNote {
  std::string patient_id;
  std::string note_id;
  int day_index = 1;
  // unique per cui; same-note polarity conflicts resolved Positive-wins
  std::map<std::string, Polarity> conditions;
};

struct TextResources {
  ConceptLexicon lexicon;
  NegationTriggerSet triggers;
  ConceptDictionary dictionary;
  NegexConfig negex;
  NormalizeConfig normalize;
};

StructuredNote process_note(const corpus::ClinicalNote& note, int day_index,
                            const TextResources& resources);

// Pre-computed annotation ingestion (bypasses the lexicon matcher; negation
// and normalization still run). Spans must lie within the note text.
struct ExternalAnnotation {
  std::size_t start = 0, end = 0;
  std::string surface;
  SemanticType type = SemanticType::SignOrSymptom;
};

// note_id -> annotations
std::map<std::string, std::vector<ExternalAnnotation>> parse_annotations(std::string_view jsonl);

StructuredNote process_note_with_annotations(const corpus::ClinicalNote& note, int day_index,
                                             const std::vector<ExternalAnnotation>& annotations,
                                             const TextResources& resources);

}  // namespace clinpath::textproc
