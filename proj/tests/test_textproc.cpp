#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clinpath/io_util.hpp"
#include "clinpath/rng.hpp"
#include "clinpath/textproc.hpp"
#include "support/oracles.hpp"

using namespace clinpath;
using namespace clinpath::textproc;

namespace {

ConceptLexicon fixture_lexicon() {
  return ConceptLexicon::load(std::string(CLINPATH_RESOURCE_DIR) + "/lexicon.tsv");
}

ConceptDictionary fixture_dictionary() {
  return ConceptDictionary::load(std::string(CLINPATH_RESOURCE_DIR) + "/concept_dictionary.tsv");
}

NegationTriggerSet fixture_triggers() {
  return NegationTriggerSet::load(std::string(CLINPATH_RESOURCE_DIR) + "/negation_triggers.tsv");
}

TextResources fixture_resources() {
  TextResources r;
  r.lexicon = fixture_lexicon();
  r.dictionary = fixture_dictionary();
  r.triggers = fixture_triggers();
  return r;
}

const std::string kPaperSentence =
    "The patient has shortness of breath but denies any chest pain";

}  // namespace

TEST_CASE("extract_entities finds the paper sentence's two mentions") {
  const auto lexicon = fixture_lexicon();
  const auto mentions = extract_entities(kPaperSentence, lexicon);
  REQUIRE(mentions.size() == 2);
  CHECK(mentions[0].surface == "shortness of breath");
  CHECK(mentions[1].surface == "chest pain");
  CHECK(mentions[0].polarity == Polarity::Positive);
  CHECK(mentions[1].polarity == Polarity::Positive);  // before negation detection
}

TEST_CASE("extract_entities: empty text") {
  CHECK(extract_entities("", fixture_lexicon()).empty());
}

TEST_CASE("extract_entities: repeated term yields distinct non-overlapping mentions") {
  const auto mentions = extract_entities("chest pain chest pain", fixture_lexicon());
  REQUIRE(mentions.size() == 2);
  CHECK(mentions[0].begin == 0);
  CHECK(mentions[0].end == 10);
  CHECK(mentions[1].begin == 11);
  CHECK(mentions[1].end == 21);
}

TEST_CASE("extract_entities prefers the longest match") {
  const auto mentions = extract_entities("known urinary tract infection today", fixture_lexicon());
  REQUIRE(mentions.size() == 1);
  CHECK(mentions[0].surface == "urinary tract infection");
}

TEST_CASE("extract_entities does not match across sentence boundaries") {
  // "chest" ends one sentence, "pain" starts the next; no mention of chest pain
  const auto mentions = extract_entities("pressure in chest. pain resolved later", fixture_lexicon());
  for (const auto& m : mentions) CHECK(m.surface != "chest. pain");
  // the standalone "pain" still matches
  bool has_pain = false;
  for (const auto& m : mentions) has_pain = has_pain || m.surface == "pain";
  CHECK(has_pain);
}

TEST_CASE("mentions are sorted and pairwise non-overlapping on random concatenations") {
  const auto lexicon = fixture_lexicon();
  Rng rng(7);
  const std::vector<std::string> words = {"fever", "and", "chest", "pain", "of", "breath",
                                          "shortness", "denies", "edema", "the", "no"};
  for (int round = 0; round < 200; ++round) {
    std::string text;
    for (int i = 0; i < 12; ++i) {
      text += words[rng.below(words.size())];
      text += rng.bernoulli(0.1) ? ". " : " ";
    }
    const auto mentions = extract_entities(text, lexicon);
    for (std::size_t i = 1; i < mentions.size(); ++i) {
      CHECK(mentions[i - 1].end <= mentions[i].begin);
    }
  }
}

TEST_CASE("duplicate surfaces keep the first lexicon entry (equal-length tie rule)") {
  const auto lexicon = ConceptLexicon::from_entries({
      {"Night  Sweats", "C0028081", SemanticType::SignOrSymptom, "Night sweats"},
      {"night sweats", "C9999999", SemanticType::SignOrSymptom, "Duplicate"},
  });
  CHECK(lexicon.size() == 1);
  const auto mentions = extract_entities("has night sweats", lexicon);
  REQUIRE(mentions.size() == 1);
  const auto* entry = lexicon.find("night sweats");
  REQUIRE(entry != nullptr);
  CHECK(entry->cui == "C0028081");
}

TEST_CASE("detect_negations on the paper sentence") {
  const auto resources = fixture_resources();
  const auto toks = tokenize(kPaperSentence);
  auto mentions = extract_entities(kPaperSentence, toks, resources.lexicon);
  detect_negations(toks, mentions, resources.triggers);
  REQUIRE(mentions.size() == 2);
  CHECK(mentions[0].surface == "shortness of breath");
  CHECK(mentions[0].polarity == Polarity::Positive);
  CHECK(mentions[1].surface == "chest pain");
  CHECK(mentions[1].polarity == Polarity::Negative);
}

namespace {

std::vector<EntityMention> negated(const std::string& text) {
  static const TextResources resources = fixture_resources();
  const auto toks = tokenize(text);
  auto mentions = extract_entities(text, toks, resources.lexicon);
  detect_negations(toks, mentions, resources.triggers);
  return mentions;
}

Polarity polarity_of(const std::vector<EntityMention>& mentions, const std::string& surface) {
  for (const auto& m : mentions) {
    if (to_lower(m.surface) == surface) return m.polarity;
  }
  FAIL("no mention with surface ", surface);
  return Polarity::Positive;
}

}  // namespace

TEST_CASE("negex cases") {
  CHECK(polarity_of(negated("no fever"), "fever") == Polarity::Negative);
  // scope cut at "but"
  const auto m = negated("denies nausea but reports vomiting");
  CHECK(polarity_of(m, "nausea") == Polarity::Negative);
  CHECK(polarity_of(m, "vomiting") == Polarity::Positive);
  // sentence boundary blocks the trigger
  CHECK(polarity_of(negated("no fever. chest pain persists"), "chest pain") == Polarity::Positive);
  // post-negation
  CHECK(polarity_of(negated("chest pain ruled out"), "chest pain") == Polarity::Negative);
  // pseudo-negation never negates
  CHECK(polarity_of(negated("no increase in edema"), "edema") == Polarity::Positive);
  CHECK(polarity_of(negated("pneumonia not ruled out"), "pneumonia") == Polarity::Positive);
  // window edge: a trigger exactly six tokens back still fires, seven does not
  CHECK(polarity_of(negated("no a1 b2 c3 d4 e5 fever"), "fever") == Polarity::Negative);
  CHECK(polarity_of(negated("no a1 b2 c3 d4 e5 f6 fever"), "fever") == Polarity::Positive);
  CHECK(polarity_of(negated("no one of the seven prior visits documented any new fever"),
                    "fever") == Polarity::Positive);
  // another mention cuts the scope
  const auto chain = negated("denies nausea with vomiting");
  CHECK(polarity_of(chain, "nausea") == Polarity::Negative);
  CHECK(polarity_of(chain, "vomiting") == Polarity::Positive);
}

TEST_CASE("detect_negations changes only polarity") {
  const auto resources = fixture_resources();
  const std::string text = "denies fever and chest pain today";
  const auto toks = tokenize(text);
  const auto before = extract_entities(text, toks, resources.lexicon);
  auto after = before;
  detect_negations(toks, after, resources.triggers);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(before[i].begin == after[i].begin);
    CHECK(before[i].end == after[i].end);
    CHECK(before[i].surface == after[i].surface);
  }
}

TEST_CASE("levenshtein basics") {
  CHECK(levenshtein("", "") == 0);
  CHECK(levenshtein("abc", "") == 3);
  CHECK(levenshtein("kitten", "sitting") == 3);
  CHECK(levenshtein("hemorrage", "hemorrhage") == 1);
  CHECK(normalized_levenshtein("hemorrage", "hemorrhage") == doctest::Approx(0.1));
  CHECK(normalized_levenshtein("", "") == 0.0);
}

TEST_CASE("normalized levenshtein matches the full-matrix oracle on random strings") {
  Rng rng(12345);
  const std::string alphabet = "abcdef ";
  for (int i = 0; i < 2000; ++i) {
    std::string a, b;
    const std::size_t la = rng.below(12), lb = rng.below(12);
    for (std::size_t k = 0; k < la; ++k) a += alphabet[rng.below(alphabet.size())];
    for (std::size_t k = 0; k < lb; ++k) b += alphabet[rng.below(alphabet.size())];
    const std::size_t expect = oracles::levenshtein_full_matrix(a, b);
    CHECK(levenshtein(a, b) == expect);
    const double nd = normalized_levenshtein(a, b);
    CHECK(nd == normalized_levenshtein(b, a));  // symmetry
    CHECK(nd >= 0.0);
    CHECK(nd <= 1.0);
    CHECK((nd == 0.0) == (a == b));
  }
}

TEST_CASE("normalize: synonyms collapse to one CUI") {
  const auto dictionary = fixture_dictionary();
  const std::string expected = normalize_surface("hemorrhage", dictionary);
  CHECK(expected == "C0019080");
  CHECK(normalize_surface("bleeding", dictionary) == expected);
  CHECK(normalize_surface("blood loss", dictionary) == expected);
  CHECK(normalize_surface("oozing of blood", dictionary) == expected);
}

TEST_CASE("normalize: approximate match within theta") {
  const auto dictionary = fixture_dictionary();
  CHECK(normalize_surface("hemorrage", dictionary) == "C0019080");
  // case and whitespace are canonicalized before matching
  CHECK(normalize_surface("  Chest   Pain ", dictionary) == "C0008031");
}

TEST_CASE("normalize: fallback mints a stable local identifier") {
  const auto dictionary = fixture_dictionary();
  CHECK(normalize_surface("zzqx", dictionary) == "LOCAL:zzqx");
  CHECK(normalize_surface("Waxing  Waning Zz", dictionary) == "LOCAL:waxing_waning_zz");
  CHECK(local_identifier("A  B\tC") == "LOCAL:a_b_c");
}

TEST_CASE("normalize: ties resolve to the lexicographically smallest CUI") {
  auto dictionary = ConceptDictionary::from_entries({
      {"abcdx", "C0000002", SemanticType::SignOrSymptom, "B"},
      {"abcdy", "C0000001", SemanticType::SignOrSymptom, "A"},
  });
  // "abcdz" is distance 1/5 = 0.2 from both entries
  CHECK(normalize_surface("abcdz", dictionary) == "C0000001");
}

TEST_CASE("normalize is idempotent over dictionary preferred names") {
  const auto dictionary = fixture_dictionary();
  for (const auto& [cui, name] : dictionary.preferred_names()) {
    CHECK(normalize_surface(name, dictionary) == cui);
  }
}

TEST_CASE("process_note composes extraction, negation and normalization") {
  const auto resources = fixture_resources();
  corpus::ClinicalNote note;
  note.patient_id = "p1";
  note.note_id = "n1";
  note.text = kPaperSentence;

  const auto structured = process_note(note, 1, resources);
  REQUIRE(structured.conditions.size() == 2);
  CHECK(structured.conditions.at("C0013404") == Polarity::Positive);  // dyspnea
  CHECK(structured.conditions.at("C0008031") == Polarity::Negative);  // chest pain
  CHECK(structured.day_index == 1);
}

TEST_CASE("process_note deduplicates and applies positive-wins") {
  const auto resources = fixture_resources();
  corpus::ClinicalNote note;
  note.patient_id = "p1";

  note.text = "fever today. fever persists";
  auto structured = process_note(note, 2, resources);
  REQUIRE(structured.conditions.size() == 1);
  CHECK(structured.conditions.at("C0015967") == Polarity::Positive);

  note.text = "no fever this morning. fever spiked overnight";
  structured = process_note(note, 2, resources);
  REQUIRE(structured.conditions.size() == 1);
  CHECK(structured.conditions.at("C0015967") == Polarity::Positive);
}

TEST_CASE("process_note is deterministic") {
  const auto resources = fixture_resources();
  corpus::ClinicalNote note;
  note.patient_id = "p1";
  note.text = "denies chest pain but reports fever and bleeding; no edema seen";
  const auto a = process_note(note, 3, resources);
  const auto b = process_note(note, 3, resources);
  CHECK(a.conditions == b.conditions);
}

TEST_CASE("tokenizer and matcher survive arbitrary bytes") {
  const auto resources = fixture_resources();
  Rng rng(999);
  for (int round = 0; round < 200; ++round) {
    std::string text;
    const std::size_t len = 1 + rng.below(200);
    for (std::size_t i = 0; i < len; ++i) {
      text.push_back(static_cast<char>(rng.below(256)));
    }
    corpus::ClinicalNote note;
    note.patient_id = "p";
    note.text = text;
    const auto structured = process_note(note, 1, resources);
    for (const auto& [cui, _] : structured.conditions) CHECK_FALSE(cui.empty());
  }
}

TEST_CASE("overlapping external annotations are reduced to a non-overlapping set") {
  const auto resources = fixture_resources();
  corpus::ClinicalNote note;
  note.patient_id = "p1";
  note.note_id = "n1";
  note.text = "severe chest pain today";

  std::vector<ExternalAnnotation> annotations;
  annotations.push_back({7, 17, "chest pain", SemanticType::SignOrSymptom});
  annotations.push_back({13, 17, "pain", SemanticType::SignOrSymptom});  // overlaps; dropped
  const auto structured = process_note_with_annotations(note, 1, annotations, resources);
  REQUIRE(structured.conditions.size() == 1);
  CHECK(structured.conditions.count("C0008031") == 1);
}

TEST_CASE("external annotations bypass the matcher but keep negation and normalization") {
  const auto resources = fixture_resources();
  corpus::ClinicalNote note;
  note.patient_id = "p1";
  note.note_id = "n1";
  note.text = "denies any nausea this morning";

  const std::string jsonl =
      R"({"note_id":"n1","annotations":[{"start":11,"end":17,"surface":"nausea","semantic_type":"Sign or Symptom"}]})"
      "\n";
  const auto parsed = parse_annotations(jsonl);
  REQUIRE(parsed.count("n1") == 1);
  const auto structured = process_note_with_annotations(note, 1, parsed.at("n1"), resources);
  REQUIRE(structured.conditions.size() == 1);
  CHECK(structured.conditions.at("C0027497") == Polarity::Negative);
}
