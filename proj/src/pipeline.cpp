#include "clinpath/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>

#include <json.hpp>

#include "clinpath/corpus.hpp"
#include "clinpath/io_util.hpp"
#include "clinpath/pathways.hpp"
#include "clinpath/predict.hpp"
#include "clinpath/rng.hpp"
#include "clinpath/subgroups.hpp"
#include "clinpath/synthcohort.hpp"
#include "clinpath/textproc.hpp"
#include "clinpath/timeline.hpp"
#include "clinpath/vectors.hpp"

namespace clinpath::pipeline {

using nlohmann::json;

std::string PipelineConfig::notes_path() const {
  return notes.empty() ? out + "/synth/notes.jsonl" : notes;
}
std::string PipelineConfig::vitals_path() const {
  return vitals.empty() ? out + "/synth/vitals.csv" : vitals;
}
std::string PipelineConfig::demographics_path() const {
  return demographics.empty() ? out + "/synth/demographics.jsonl" : demographics;
}

namespace {

template <typename T>
void read_field(const json& section, const char* key, T& target) {
  if (section.contains(key)) target = section.at(key).get<T>();
}

void check_known_keys(const json& section, const std::set<std::string>& known,
                      const std::string& where) {
  for (const auto& [key, _] : section.items()) {
    if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError("config: not a JSON object");
  check_known_keys(j, {"paths", "corpus", "textproc", "vectors", "cluster", "explain",
                       "severity", "pathways", "predict", "synth", "seed"},
                   "top level");
  PipelineConfig c;
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    check_known_keys(p, {"notes", "vitals", "demographics", "lexicon", "dictionary", "triggers",
                         "flags", "decease_patterns", "annotations", "external_features", "out"},
                     "paths");
    read_field(p, "notes", c.notes);
    read_field(p, "vitals", c.vitals);
    read_field(p, "demographics", c.demographics);
    read_field(p, "lexicon", c.lexicon);
    read_field(p, "dictionary", c.dictionary);
    read_field(p, "triggers", c.triggers);
    read_field(p, "flags", c.flags);
    read_field(p, "decease_patterns", c.decease_patterns);
    read_field(p, "annotations", c.annotations);
    read_field(p, "external_features", c.external_features);
    read_field(p, "out", c.out);
  }
  if (j.contains("corpus")) {
    const json& s = j.at("corpus");
    check_known_keys(s, {"min_note_day_fraction"}, "corpus");
    read_field(s, "min_note_day_fraction", c.min_note_day_fraction);
  }
  if (j.contains("textproc")) {
    const json& s = j.at("textproc");
    check_known_keys(s, {"theta", "scope_window"}, "textproc");
    read_field(s, "theta", c.theta);
    read_field(s, "scope_window", c.scope_window);
  }
  if (j.contains("vectors")) {
    const json& s = j.at("vectors");
    check_known_keys(s, {"latent", "encoder_hidden", "epochs", "learning_rate", "batch_size",
                         "train_on"},
                     "vectors");
    read_field(s, "latent", c.latent);
    read_field(s, "encoder_hidden", c.encoder_hidden);
    read_field(s, "epochs", c.ae_epochs);
    read_field(s, "learning_rate", c.ae_learning_rate);
    read_field(s, "batch_size", c.ae_batch);
    read_field(s, "train_on", c.ae_train_on);
  }
  if (j.contains("cluster")) {
    const json& s = j.at("cluster");
    check_known_keys(s, {"k_min", "k_max"}, "cluster");
    read_field(s, "k_min", c.k_min);
    read_field(s, "k_max", c.k_max);
  }
  if (j.contains("explain")) {
    const json& s = j.at("explain");
    check_known_keys(s, {"n_trees", "max_depth", "min_leaf", "feature_subsample", "top_m"},
                     "explain");
    read_field(s, "n_trees", c.n_trees);
    read_field(s, "max_depth", c.max_depth);
    read_field(s, "min_leaf", c.min_leaf);
    read_field(s, "feature_subsample", c.feature_subsample);
    read_field(s, "top_m", c.top_m);
  }
  if (j.contains("severity")) {
    const json& s = j.at("severity");
    check_known_keys(s, {"temp_high", "temp_low", "hr_high", "rr_high", "wbc_high", "wbc_low",
                         "sbp_low", "map_low"},
                     "severity");
    read_field(s, "temp_high", c.thresholds.temp_high);
    read_field(s, "temp_low", c.thresholds.temp_low);
    read_field(s, "hr_high", c.thresholds.hr_high);
    read_field(s, "rr_high", c.thresholds.rr_high);
    read_field(s, "wbc_high", c.thresholds.wbc_high);
    read_field(s, "wbc_low", c.thresholds.wbc_low);
    read_field(s, "sbp_low", c.thresholds.sbp_low);
    read_field(s, "map_low", c.thresholds.map_low);
  }
  if (j.contains("pathways")) {
    const json& s = j.at("pathways");
    check_known_keys(s, {"min_support"}, "pathways");
    read_field(s, "min_support", c.min_support);
  }
  if (j.contains("predict")) {
    const json& s = j.at("predict");
    check_known_keys(s, {"subgroup_model", "state_hidden", "epochs", "learning_rate",
                         "batch_size", "representation", "holdout"},
                     "predict");
    read_field(s, "subgroup_model", c.subgroup_model);
    read_field(s, "state_hidden", c.state_hidden);
    read_field(s, "epochs", c.state_epochs);
    read_field(s, "learning_rate", c.state_learning_rate);
    read_field(s, "batch_size", c.state_batch);
    read_field(s, "representation", c.representation);
    read_field(s, "holdout", c.holdout);
  }
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    check_known_keys(s, {"n_patients", "n_clusters"}, "synth");
    read_field(s, "n_patients", c.synth_patients);
    read_field(s, "n_clusters", c.synth_clusters);
  }
  read_field(j, "seed", c.seed);
  c.validate();
  return c;
}

std::string PipelineConfig::to_json() const {
  json j;
  j["paths"] = {{"notes", notes},
                {"vitals", vitals},
                {"demographics", demographics},
                {"lexicon", lexicon},
                {"dictionary", dictionary},
                {"triggers", triggers},
                {"flags", flags},
                {"decease_patterns", decease_patterns},
                {"annotations", annotations},
                {"external_features", external_features},
                {"out", out}};
  j["corpus"] = {{"min_note_day_fraction", min_note_day_fraction}};
  j["textproc"] = {{"theta", theta}, {"scope_window", scope_window}};
  j["vectors"] = {{"latent", latent},
                  {"encoder_hidden", encoder_hidden},
                  {"epochs", ae_epochs},
                  {"learning_rate", ae_learning_rate},
                  {"batch_size", ae_batch},
                  {"train_on", ae_train_on}};
  j["cluster"] = {{"k_min", k_min}, {"k_max", k_max}};
  j["explain"] = {{"n_trees", n_trees},
                  {"max_depth", max_depth},
                  {"min_leaf", min_leaf},
                  {"feature_subsample", feature_subsample},
                  {"top_m", top_m}};
  j["severity"] = {{"temp_high", thresholds.temp_high}, {"temp_low", thresholds.temp_low},
                   {"hr_high", thresholds.hr_high},     {"rr_high", thresholds.rr_high},
                   {"wbc_high", thresholds.wbc_high},   {"wbc_low", thresholds.wbc_low},
                   {"sbp_low", thresholds.sbp_low},     {"map_low", thresholds.map_low}};
  j["pathways"] = {{"min_support", min_support}};
  j["predict"] = {{"subgroup_model", subgroup_model},
                  {"state_hidden", state_hidden},
                  {"epochs", state_epochs},
                  {"learning_rate", state_learning_rate},
                  {"batch_size", state_batch},
                  {"representation", representation},
                  {"holdout", holdout}};
  j["synth"] = {{"n_patients", synth_patients}, {"n_clusters", synth_clusters}};
  j["seed"] = seed;
  return j.dump(2) + "\n";
}

std::string PipelineConfig::config_hash() const {
  PipelineConfig copy = *this;
  copy.out.clear();
  return fnv1a64_hex(copy.to_json());
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& message) { throw ConfigError("config: " + message); };
  if (theta < 0.0 || theta > 1.0) fail("textproc.theta must be in [0,1]");
  if (scope_window < 1) fail("textproc.scope_window must be >= 1");
  if (min_note_day_fraction < 0.0 || min_note_day_fraction > 1.0) {
    fail("corpus.min_note_day_fraction must be in [0,1]");
  }
  if (latent < 1) fail("vectors.latent must be >= 1");
  if (ae_epochs < 0) fail("vectors.epochs must be >= 0");
  if (ae_learning_rate <= 0.0) fail("vectors.learning_rate must be positive");
  if (ae_batch < 1) fail("vectors.batch_size must be >= 1");
  if (ae_train_on != "all" && ae_train_on != "stage1") fail("vectors.train_on must be all|stage1");
  if (k_min < 2) fail("cluster.k_min must be >= 2");
  if (k_max < k_min) fail("cluster.k_max must be >= k_min");
  if (n_trees < 1) fail("explain.n_trees must be >= 1");
  if (max_depth < 1) fail("explain.max_depth must be >= 1");
  if (min_leaf < 1) fail("explain.min_leaf must be >= 1");
  if (feature_subsample < 0) fail("explain.feature_subsample must be >= 0");
  if (top_m < 1) fail("explain.top_m must be >= 1");
  if (min_support < 0) fail("pathways.min_support must be >= 0");
  if (subgroup_model != "random_forest" && subgroup_model != "decision_tree") {
    fail("predict.subgroup_model must be random_forest|decision_tree");
  }
  if (representation != "ternary" && representation != "dense") {
    fail("predict.representation must be ternary|dense");
  }
  if (holdout <= 0.0 || holdout >= 1.0) fail("predict.holdout must be in (0,1)");
  if (state_epochs < 0) fail("predict.epochs must be >= 0");
  if (state_learning_rate <= 0.0) fail("predict.learning_rate must be positive");
  if (state_batch < 1) fail("predict.batch_size must be >= 1");
  if (synth_patients < 1) fail("synth.n_patients must be >= 1");
  if (synth_clusters < 1 || synth_clusters > 8) fail("synth.n_clusters must be in 1..8");
}

namespace {

std::string require_resource(const std::string& path, const std::string& what) {
  if (!file_exists(path)) throw ConfigError("missing " + what + " file: " + path);
  return path;
}

std::string require_artifact(const std::string& path, const std::string& producer) {
  if (!file_exists(path)) {
    throw DataError("missing artifact " + path + ": run `" + producer + "` first");
  }
  return path;
}

// paths inside the output directory are recorded relative to it
std::string manifest_key(const PipelineConfig& config, const std::string& path) {
  const std::string prefix = config.out + "/";
  if (path.rfind(prefix, 0) == 0) return path.substr(prefix.size());
  return path;
}

class Manifest {
 public:
  Manifest(const PipelineConfig& config, std::string subcommand)
      : config_(config), subcommand_(std::move(subcommand)) {}

  void input(const std::string& path) {
    inputs_[manifest_key(config_, path)] = fnv1a64_hex(read_file(path));
  }

  void output(const std::string& path, std::string_view content) {
    atomic_write_file(path, content);
    outputs_[manifest_key(config_, path)] = fnv1a64_hex(content);
  }

  void detail(const std::string& key, const json& value) { details_[key] = value; }

  void write() const {
    json j;
    j["subcommand"] = subcommand_;
    j["version"] = kVersion;
    j["config_hash"] = config_.config_hash();
    j["seed"] = config_.seed;
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!details_.empty()) j["details"] = details_;
    atomic_write_file(config_.out + "/" + subcommand_ + ".manifest.json", j.dump(2) + "\n");
  }

 private:
  const PipelineConfig& config_;
  std::string subcommand_;
  std::map<std::string, std::string> inputs_, outputs_;
  json details_ = json::object();
};

struct PatientMeta {
  std::int64_t anchor_day = 0;
  int los = 1;
  std::optional<corpus::Disposition> disposition;
  std::optional<std::string> sex;
  std::optional<int> age_years;
};

std::string patients_to_jsonl(const corpus::Cohort& cohort) {
  std::string out;
  for (const auto& p : cohort.patients) {
    json j;
    j["patient_id"] = p.patient_id;
    j["anchor_day"] = p.anchor_day;
    j["los"] = p.los_days;
    if (p.disposition) {
      j["disposition"] = std::string(corpus::to_string(p.disposition->status));
      j["discharge_day"] = p.disposition->discharge_day;
    }
    if (p.demographics && p.demographics->sex) j["sex"] = *p.demographics->sex;
    if (p.demographics && p.demographics->age_years) j["age_years"] = *p.demographics->age_years;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::map<std::string, PatientMeta> patients_from_jsonl(std::string_view jsonl) {
  std::map<std::string, PatientMeta> out;
  for (const std::string_view raw : split_lines(jsonl)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const json j = json::parse(line);
    PatientMeta meta;
    const std::string pid = j.at("patient_id").get<std::string>();
    meta.anchor_day = j.at("anchor_day").get<std::int64_t>();
    meta.los = j.at("los").get<int>();
    if (j.contains("disposition")) {
      corpus::Disposition d;
      d.patient_id = pid;
      d.status = j.at("disposition").get<std::string>() == "Decease"
                     ? corpus::DischargeStatus::Decease
                     : corpus::DischargeStatus::Discharge;
      d.discharge_day = j.value("discharge_day", meta.los);
      meta.disposition = d;
    }
    if (j.contains("sex")) meta.sex = j.at("sex").get<std::string>();
    if (j.contains("age_years")) meta.age_years = j.at("age_years").get<int>();
    out[pid] = std::move(meta);
  }
  return out;
}

std::string notes_to_jsonl(const corpus::Cohort& cohort) {
  std::string out;
  for (const auto& p : cohort.patients) {
    for (const auto& note : p.notes) {
      json j;
      j["patient_id"] = note.patient_id;
      j["note_id"] = note.note_id;
      j["category"] = std::string(corpus::to_string(note.category));
      j["chart_time"] = format_iso8601(note.chart_time);
      j["text"] = note.text;
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::string vitals_to_csv(const corpus::Cohort& cohort) {
  std::string out = "patient_id,chart_time,item,value\n";
  char buf[160];
  for (const auto& p : cohort.patients) {
    for (const auto& rec : p.vitals) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g\n", rec.patient_id.c_str(),
                    format_iso8601(rec.chart_time).c_str(),
                    std::string(corpus::to_string(rec.item)).c_str(), rec.value);
      out += buf;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void run_synth(const PipelineConfig& config) {
  Manifest manifest(config, "synth");
  const auto gen_config =
      synth::GeneratorConfig::demo(config.synth_patients, config.synth_clusters, config.seed);
  const auto cohort = synth::generate_cohort(gen_config);
  manifest.output(config.out + "/synth/notes.jsonl", cohort.notes_jsonl);
  manifest.output(config.out + "/synth/vitals.csv", cohort.vitals_csv);
  manifest.output(config.out + "/synth/demographics.jsonl", cohort.demographics_jsonl);
  manifest.output(config.out + "/synth/ground_truth.json", synth::ground_truth_report(cohort.truth));
  manifest.write();
}

void run_ingest(const PipelineConfig& config) {
  Manifest manifest(config, "ingest");
  const std::string notes_path = config.notes_path();
  if (!file_exists(notes_path)) {
    throw DataError("missing notes file " + notes_path +
                    ": point paths.notes at your data or run `synth` first");
  }
  manifest.input(notes_path);
  corpus::NotesLoad notes;
  try {
    notes = corpus::load_notes(notes_path);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }

  corpus::VitalsLoad vitals;
  if (file_exists(config.vitals_path())) {
    manifest.input(config.vitals_path());
    try {
      vitals = corpus::load_vitals(config.vitals_path());
    } catch (const std::exception& e) {
      throw DataError(e.what());
    }
  }

  std::vector<corpus::Demographics> demographics;
  if (file_exists(config.demographics_path())) {
    manifest.input(config.demographics_path());
    demographics = corpus::load_demographics(config.demographics_path());
  }

  corpus::DeceasePatterns patterns = file_exists(config.decease_patterns)
                                         ? corpus::DeceasePatterns::load(config.decease_patterns)
                                         : corpus::DeceasePatterns::defaults();

  const corpus::Cohort cohort = corpus::build_cohort(notes, vitals, demographics, patterns);

  std::vector<corpus::RejectRecord> rejects = notes.rejects;
  rejects.insert(rejects.end(), vitals.rejects.begin(), vitals.rejects.end());

  manifest.output(config.out + "/ingest/notes_clean.jsonl", notes_to_jsonl(cohort));
  manifest.output(config.out + "/ingest/vitals_clean.csv", vitals_to_csv(cohort));
  manifest.output(config.out + "/ingest/patients.jsonl", patients_to_jsonl(cohort));
  manifest.output(config.out + "/ingest/rejects.csv", corpus::rejects_to_csv(rejects));
  manifest.output(config.out + "/ingest/cohort_summary.json",
                  corpus::summary_to_json(corpus::cohort_stats(cohort)));
  manifest.detail("n_patients", cohort.patients.size());
  manifest.detail("n_rejects", rejects.size());
  manifest.write();
}

textproc::TextResources load_text_resources(const PipelineConfig& config) {
  textproc::TextResources resources;
  resources.lexicon = textproc::ConceptLexicon::load(require_resource(config.lexicon, "lexicon"));
  resources.dictionary =
      textproc::ConceptDictionary::load(require_resource(config.dictionary, "dictionary"));
  resources.triggers = file_exists(config.triggers)
                           ? textproc::NegationTriggerSet::load(config.triggers)
                           : textproc::NegationTriggerSet::defaults();
  resources.negex.scope_window = config.scope_window;
  resources.normalize.theta = config.theta;
  return resources;
}

void run_structure(const PipelineConfig& config) {
  Manifest manifest(config, "structure");
  const std::string notes_path =
      require_artifact(config.out + "/ingest/notes_clean.jsonl", "ingest");
  const std::string patients_path =
      require_artifact(config.out + "/ingest/patients.jsonl", "ingest");
  manifest.input(notes_path);
  manifest.input(patients_path);
  manifest.input(config.lexicon);
  manifest.input(config.dictionary);
  if (file_exists(config.triggers)) manifest.input(config.triggers);

  const auto resources = load_text_resources(config);
  const auto notes = corpus::parse_notes(read_file(notes_path), notes_path);
  const auto patients = patients_from_jsonl(read_file(patients_path));

  std::map<std::string, std::vector<textproc::ExternalAnnotation>> annotations;
  if (!config.annotations.empty()) {
    manifest.input(require_resource(config.annotations, "annotations"));
    annotations = textproc::parse_annotations(read_file(config.annotations));
  }

  // note-day coverage per patient, for the sparse-record exclusion below
  std::map<std::string, std::set<int>> note_days;
  for (const auto& note : notes.notes) {
    const auto it = patients.find(note.patient_id);
    if (it == patients.end()) continue;
    note_days[note.patient_id].insert(corpus::day_index(it->second.anchor_day, note.chart_time));
  }
  std::set<std::string> excluded;
  if (config.min_note_day_fraction > 0.0) {
    for (const auto& [pid, meta] : patients) {
      const double covered = static_cast<double>(note_days[pid].size());
      if (covered / static_cast<double>(meta.los) < config.min_note_day_fraction) {
        excluded.insert(pid);
      }
    }
  }

  std::string out_jsonl;
  for (const auto& note : notes.notes) {
    const auto it = patients.find(note.patient_id);
    if (it == patients.end() || excluded.count(note.patient_id)) continue;
    const int day = corpus::day_index(it->second.anchor_day, note.chart_time);
    if (day < 1 || day > it->second.los) continue;
    textproc::StructuredNote structured;
    const auto ann = annotations.find(note.note_id);
    if (ann != annotations.end()) {
      structured = textproc::process_note_with_annotations(note, day, ann->second, resources);
    } else {
      structured = textproc::process_note(note, day, resources);
    }
    json j;
    j["patient_id"] = structured.patient_id;
    j["note_id"] = structured.note_id;
    j["day_index"] = structured.day_index;
    json positives = json::array(), negatives = json::array();
    for (const auto& [cui, polarity] : structured.conditions) {
      (polarity == Polarity::Positive ? positives : negatives).push_back(cui);
    }
    j["positives"] = std::move(positives);
    j["negatives"] = std::move(negatives);
    out_jsonl += j.dump();
    out_jsonl += '\n';
  }
  manifest.output(config.out + "/structure/structured_notes.jsonl", out_jsonl);
  manifest.detail("excluded_sparse_patients", excluded.size());
  manifest.write();
}

std::map<std::string, std::vector<textproc::StructuredNote>> structured_from_jsonl(
    std::string_view jsonl) {
  std::map<std::string, std::vector<textproc::StructuredNote>> out;
  for (const std::string_view raw : split_lines(jsonl)) {
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const json j = json::parse(line);
    textproc::StructuredNote note;
    note.patient_id = j.at("patient_id").get<std::string>();
    note.note_id = j.value("note_id", std::string());
    note.day_index = j.at("day_index").get<int>();
    for (const auto& cui : j.at("positives")) {
      note.conditions[cui.get<std::string>()] = Polarity::Positive;
    }
    for (const auto& cui : j.at("negatives")) {
      note.conditions.try_emplace(cui.get<std::string>(), Polarity::Negative);
    }
    out[note.patient_id].push_back(std::move(note));
  }
  return out;
}

void run_stages(const PipelineConfig& config) {
  Manifest manifest(config, "stages");
  const std::string structured_path =
      require_artifact(config.out + "/structure/structured_notes.jsonl", "structure");
  const std::string patients_path =
      require_artifact(config.out + "/ingest/patients.jsonl", "ingest");
  manifest.input(structured_path);
  manifest.input(patients_path);

  const auto by_patient = structured_from_jsonl(read_file(structured_path));
  const auto patients = patients_from_jsonl(read_file(patients_path));

  std::vector<timeline::StageSeries> all_series;
  std::size_t excluded_short = 0;
  for (const auto& [pid, meta] : patients) {
    if (meta.los < 2) {
      ++excluded_short;  // very short stays are excluded
      continue;
    }
    const auto notes_it = by_patient.find(pid);
    static const std::vector<textproc::StructuredNote> kNone;
    const auto& notes = notes_it == by_patient.end() ? kNone : notes_it->second;
    const auto daily = timeline::impute_missing(timeline::align_days(pid, meta.los, notes));
    all_series.push_back(timeline::segment_stages(daily, meta.disposition));
  }
  manifest.output(config.out + "/stages/stages.jsonl", timeline::stages_to_jsonl(all_series));
  manifest.detail("excluded_short_stays", excluded_short);
  manifest.detail("n_patients", all_series.size());
  manifest.write();
}

void run_vectors(const PipelineConfig& config) {
  Manifest manifest(config, "vectors");
  const std::string stages_path = require_artifact(config.out + "/stages/stages.jsonl", "stages");
  manifest.input(stages_path);

  const auto series = timeline::stages_from_jsonl(read_file(stages_path));
  if (series.empty()) throw DataError("stages.jsonl holds no patients");
  const auto vocabulary = vectors::ConceptVocabulary::build(series);
  const auto ternary = vectors::build_all_ternary_vectors(series, vocabulary);

  Matrix train_rows;
  if (config.ae_train_on == "stage1") {
    std::vector<vectors::TernaryVector> stage1;
    for (const auto& v : ternary) {
      if (v.stage == 1) stage1.push_back(v);
    }
    train_rows = vectors::to_dense_matrix(stage1);
  } else {
    train_rows = vectors::to_dense_matrix(ternary);
  }

  vectors::AutoencoderConfig ae;
  ae.latent = std::min<int>(config.latent, static_cast<int>(vocabulary.size()));
  ae.encoder_hidden = config.encoder_hidden;
  ae.epochs = config.ae_epochs;
  ae.learning_rate = config.ae_learning_rate;
  ae.batch_size = config.ae_batch;
  ae.seed = config.seed;
  const auto model = vectors::train_autoencoder(train_rows, ae);
  const auto dense = vectors::encode_vectors(model, ternary);

  manifest.output(config.out + "/vectors/vocabulary.txt", vocabulary.serialize());
  manifest.output(config.out + "/vectors/ternary.jsonl", vectors::ternary_to_jsonl(ternary));
  manifest.output(config.out + "/vectors/autoencoder.json", vectors::model_to_json(model));
  manifest.output(config.out + "/vectors/dense.csv", vectors::dense_to_csv(dense));
  manifest.detail("vocabulary_size", vocabulary.size());
  manifest.detail("final_loss", model.loss_curve.back());
  manifest.write();
}

void run_cluster(const PipelineConfig& config) {
  Manifest manifest(config, "cluster");
  const std::string dense_path = require_artifact(config.out + "/vectors/dense.csv", "vectors");
  manifest.input(dense_path);

  const auto dense = vectors::dense_from_csv(read_file(dense_path));
  std::vector<std::string> patient_ids;
  std::vector<const vectors::DenseVector*> stage1;
  for (const auto& v : dense) {
    if (v.stage == 1) {
      stage1.push_back(&v);
      patient_ids.push_back(v.patient_id);
    }
  }
  if (stage1.size() < 3) throw DataError("cluster: need at least 3 stage-1 vectors");

  Matrix points(static_cast<Eigen::Index>(stage1.size()), stage1.front()->values.size());
  for (std::size_t i = 0; i < stage1.size(); ++i) {
    points.row(static_cast<Eigen::Index>(i)) = stage1[i]->values.transpose();
  }

  const int k_max = std::min<int>(config.k_max, static_cast<int>(stage1.size()) - 1);
  const auto report = subgroups::select_k(points, config.k_min, k_max, config.seed);
  const auto clustering = subgroups::kmeans(
      points, report.chosen_k, derive_seed(config.seed, static_cast<std::uint64_t>(report.chosen_k)));

  manifest.output(config.out + "/cluster/silhouette.csv", subgroups::silhouette_to_csv(report));
  manifest.output(config.out + "/cluster/clusters.csv",
                  subgroups::clusters_to_csv(patient_ids, clustering.assignment));
  manifest.detail("chosen_k", report.chosen_k);
  manifest.detail("inertia", clustering.inertia);
  manifest.write();
}

std::map<std::string, int> clusters_from_csv(std::string_view csv) {
  std::map<std::string, int> out;
  const auto lines = split_lines(csv);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2) continue;
    out[fields[0]] = std::stoi(fields[1]);
  }
  return out;
}

void run_explain(const PipelineConfig& config) {
  Manifest manifest(config, "explain");
  const std::string ternary_path =
      require_artifact(config.out + "/vectors/ternary.jsonl", "vectors");
  const std::string vocab_path =
      require_artifact(config.out + "/vectors/vocabulary.txt", "vectors");
  const std::string clusters_path =
      require_artifact(config.out + "/cluster/clusters.csv", "cluster");
  manifest.input(ternary_path);
  manifest.input(vocab_path);
  manifest.input(clusters_path);
  manifest.input(config.dictionary);

  const auto vocabulary = vectors::ConceptVocabulary::load(vocab_path);
  const auto assignment_map = clusters_from_csv(read_file(clusters_path));
  const auto all_ternary = vectors::ternary_from_jsonl(read_file(ternary_path));
  const auto dictionary = textproc::ConceptDictionary::load(
      require_resource(config.dictionary, "dictionary"));

  std::vector<const vectors::TernaryVector*> stage1;
  std::vector<int> labels;
  std::vector<std::string> patient_ids;
  for (const auto& v : all_ternary) {
    if (v.stage != 1) continue;
    const auto it = assignment_map.find(v.patient_id);
    if (it == assignment_map.end()) continue;
    stage1.push_back(&v);
    labels.push_back(it->second);
    patient_ids.push_back(v.patient_id);
  }
  if (stage1.empty()) throw DataError("explain: no stage-1 vectors with cluster labels");

  Matrix x(static_cast<Eigen::Index>(stage1.size()), static_cast<Eigen::Index>(vocabulary.size()));
  x.setZero();
  for (std::size_t i = 0; i < stage1.size(); ++i) {
    for (const auto& [idx, val] : stage1[i]->entries) {
      x(static_cast<Eigen::Index>(i), idx) = static_cast<double>(val);
    }
  }

  subgroups::ForestConfig fc;
  fc.n_trees = config.n_trees;
  fc.max_depth = config.max_depth;
  fc.min_leaf = config.min_leaf;
  fc.feature_subsample = config.feature_subsample;
  fc.seed = config.seed;
  const auto forest = subgroups::train_forest(x, labels, fc);

  const auto result = subgroups::explain_subgroups(forest, x, labels, patient_ids, vocabulary,
                                                   dictionary.preferred_names(), config.top_m);
  manifest.output(config.out + "/explain/forest.json", subgroups::forest_to_json(forest));
  manifest.output(config.out + "/explain/shap_summary.json", subgroups::explain_to_json(result));
  manifest.detail("oob_accuracy", forest.oob_accuracy);
  manifest.detail("n_misclassified", result.misclassified.size());
  manifest.write();
}

void run_severity(const PipelineConfig& config) {
  Manifest manifest(config, "severity");
  const std::string stages_path = require_artifact(config.out + "/stages/stages.jsonl", "stages");
  const std::string vitals_path =
      require_artifact(config.out + "/ingest/vitals_clean.csv", "ingest");
  const std::string patients_path =
      require_artifact(config.out + "/ingest/patients.jsonl", "ingest");
  manifest.input(stages_path);
  manifest.input(vitals_path);
  manifest.input(patients_path);
  manifest.input(require_resource(config.flags, "flags"));

  const auto flags = severity::FlagCuiSets::load(config.flags);
  const auto series = timeline::stages_from_jsonl(read_file(stages_path));
  const auto patients = patients_from_jsonl(read_file(patients_path));
  const auto vitals = corpus::parse_vitals(read_file(vitals_path), vitals_path);

  std::map<std::string, std::vector<corpus::VitalsRecord>> vitals_by_patient;
  for (const auto& rec : vitals.records) vitals_by_patient[rec.patient_id].push_back(rec);

  std::vector<severity::SeverityTimeline> timelines;
  static const std::vector<corpus::VitalsRecord> kNoVitals;
  for (const auto& s : series) {
    const auto meta = patients.find(s.patient_id);
    if (meta == patients.end()) continue;
    const auto v = vitals_by_patient.find(s.patient_id);
    timelines.push_back(severity::severity_timeline(
        s, v == vitals_by_patient.end() ? kNoVitals : v->second, meta->second.anchor_day, flags,
        config.thresholds));
  }
  manifest.output(config.out + "/severity/severity.csv", severity::severity_to_csv(timelines));
  manifest.detail("n_patients", timelines.size());
  manifest.write();
}

struct OutcomeData {
  std::vector<std::string> patient_ids;                  // sorted
  std::vector<std::vector<pathways::Outcome>> sequences; // aligned with patient_ids
  std::vector<int> subgroups;
  int n_subgroups = 0;
  std::map<std::string, const timeline::StageSeries*> series_of;
};

OutcomeData assemble_outcomes(const std::vector<timeline::StageSeries>& series,
                              std::vector<severity::SeverityTimeline>& timelines,
                              const std::map<std::string, int>& assignment) {
  OutcomeData data;
  std::map<std::string, const timeline::StageSeries*> series_of;
  for (const auto& s : series) series_of[s.patient_id] = &s;
  for (auto& t : timelines) {
    const auto sit = series_of.find(t.patient_id);
    if (sit == series_of.end()) continue;
    t.disposition = sit->second->disposition;
    const auto ait = assignment.find(t.patient_id);
    if (ait == assignment.end()) continue;
    data.patient_ids.push_back(t.patient_id);
    data.sequences.push_back(pathways::label_transitions(t));
    data.subgroups.push_back(ait->second);
    data.n_subgroups = std::max(data.n_subgroups, ait->second + 1);
  }
  data.series_of = std::move(series_of);
  return data;
}

void run_pathways(const PipelineConfig& config) {
  Manifest manifest(config, "pathways");
  const std::string severity_path =
      require_artifact(config.out + "/severity/severity.csv", "severity");
  const std::string stages_path = require_artifact(config.out + "/stages/stages.jsonl", "stages");
  const std::string clusters_path =
      require_artifact(config.out + "/cluster/clusters.csv", "cluster");
  manifest.input(severity_path);
  manifest.input(stages_path);
  manifest.input(clusters_path);

  auto timelines = severity::severity_from_csv(read_file(severity_path));
  const auto series = timeline::stages_from_jsonl(read_file(stages_path));
  const auto assignment = clusters_from_csv(read_file(clusters_path));
  const OutcomeData data = assemble_outcomes(series, timelines, assignment);
  if (data.sequences.empty()) throw DataError("pathways: no labeled outcome sequences");

  const auto matrices =
      pathways::estimate_transitions(data.sequences, data.subgroups, data.n_subgroups);
  const auto stage2 = pathways::stage2_distribution(data.sequences, data.subgroups,
                                                    data.n_subgroups);

  // annotations for edges into non-terminal outcomes
  std::map<std::tuple<int, int, int, int>,
           std::pair<std::vector<const std::map<std::string, Polarity>*>,
                     std::vector<const std::map<std::string, Polarity>*>>>
      edge_patients;
  for (std::size_t i = 0; i < data.sequences.size(); ++i) {
    const auto& seq = data.sequences[i];
    const auto* s = data.series_of.at(data.patient_ids[i]);
    pathways::PriorState prior = pathways::PriorState::Start;
    bool prior_valid = true;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const pathways::Outcome o = seq[t];
      const bool annotatable = o == pathways::Outcome::Improve ||
                               o == pathways::Outcome::Persistent ||
                               o == pathways::Outcome::Deteriorate;
      if (prior_valid && annotatable && t + 1 < s->stages.size()) {
        auto& bucket = edge_patients[{data.subgroups[i], static_cast<int>(t) + 1,
                                      static_cast<int>(prior), static_cast<int>(o)}];
        bucket.first.push_back(&s->stages[t].conditions);
        bucket.second.push_back(&s->stages[t + 1].conditions);
      }
      switch (o) {
        case pathways::Outcome::Improve: prior = pathways::PriorState::Improve; prior_valid = true; break;
        case pathways::Outcome::Persistent: prior = pathways::PriorState::Persistent; prior_valid = true; break;
        case pathways::Outcome::Deteriorate: prior = pathways::PriorState::Deteriorate; prior_valid = true; break;
        default: prior_valid = false; break;
      }
    }
  }
  std::vector<pathways::TransitionAnnotation> annotations;
  for (const auto& [key, maps] : edge_patients) {
    pathways::TransitionAnnotation a = pathways::annotate_transition(maps.first, maps.second, 2);
    a.subgroup = std::get<0>(key);
    a.stage = std::get<1>(key);
    a.from = static_cast<pathways::PriorState>(std::get<2>(key));
    a.to = static_cast<pathways::Outcome>(std::get<3>(key));
    annotations.push_back(std::move(a));
  }

  pathways::NetworkRenderOptions options;
  options.min_support = config.min_support;
  manifest.output(config.out + "/pathways/network.dot",
                  pathways::export_network(matrices, annotations, "dot", options));
  manifest.output(config.out + "/pathways/network.json",
                  pathways::export_network(matrices, annotations, "json", options));
  manifest.output(config.out + "/pathways/stage2_heatmap.csv", pathways::stage2_to_csv(stage2));
  manifest.detail("n_matrices", matrices.size());
  manifest.write();
}

Matrix external_features_matrix(const std::string& csv, const std::vector<std::string>& order) {
  std::map<std::string, std::vector<double>> rows;
  const auto lines = split_lines(csv);
  std::size_t width = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() < 2) continue;
    std::vector<double> values;
    for (std::size_t f = 1; f < fields.size(); ++f) values.push_back(std::stod(fields[f]));
    width = std::max(width, values.size());
    rows[fields[0]] = std::move(values);
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(order.size()),
                            static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto it = rows.find(order[i]);
    if (it == rows.end()) {
      throw DataError("external_features: no row for patient " + order[i]);
    }
    for (std::size_t f = 0; f < it->second.size(); ++f) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = it->second[f];
    }
  }
  return out;
}

void run_predict(const PipelineConfig& config) {
  Manifest manifest(config, "predict");
  const std::string ternary_path =
      require_artifact(config.out + "/vectors/ternary.jsonl", "vectors");
  const std::string dense_path = require_artifact(config.out + "/vectors/dense.csv", "vectors");
  const std::string clusters_path =
      require_artifact(config.out + "/cluster/clusters.csv", "cluster");
  const std::string severity_path =
      require_artifact(config.out + "/severity/severity.csv", "severity");
  const std::string stages_path = require_artifact(config.out + "/stages/stages.jsonl", "stages");
  manifest.input(ternary_path);
  manifest.input(dense_path);
  manifest.input(clusters_path);
  manifest.input(severity_path);
  manifest.input(stages_path);

  const auto assignment = clusters_from_csv(read_file(clusters_path));
  const auto all_ternary = vectors::ternary_from_jsonl(read_file(ternary_path));
  const auto dense = vectors::dense_from_csv(read_file(dense_path));
  auto timelines = severity::severity_from_csv(read_file(severity_path));
  const auto series = timeline::stages_from_jsonl(read_file(stages_path));

  // stage-1 vectors per patient, in sorted patient order
  std::map<std::string, const vectors::TernaryVector*> stage1_ternary;
  for (const auto& v : all_ternary) {
    if (v.stage == 1) stage1_ternary[v.patient_id] = &v;
  }
  std::map<std::string, const vectors::DenseVector*> stage1_dense;
  for (const auto& v : dense) {
    if (v.stage == 1) stage1_dense[v.patient_id] = &v;
  }

  std::vector<std::string> patient_ids;
  std::vector<int> cluster_labels;
  for (const auto& [pid, v] : stage1_ternary) {
    const auto it = assignment.find(pid);
    if (it == assignment.end()) continue;
    patient_ids.push_back(pid);
    cluster_labels.push_back(it->second);
  }
  if (patient_ids.empty()) throw DataError("predict: no labeled stage-1 vectors");

  const std::size_t dim = stage1_ternary.begin()->second->dim;
  Matrix x_ternary = Matrix::Zero(static_cast<Eigen::Index>(patient_ids.size()),
                                  static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    for (const auto& [idx, val] : stage1_ternary.at(patient_ids[i])->entries) {
      x_ternary(static_cast<Eigen::Index>(i), idx) = static_cast<double>(val);
    }
  }

  Matrix representation;
  if (!config.external_features.empty()) {
    manifest.input(require_resource(config.external_features, "external_features"));
    representation = external_features_matrix(read_file(config.external_features), patient_ids);
  } else if (config.representation == "dense") {
    const Eigen::Index latent = stage1_dense.begin()->second->values.size();
    representation = Matrix::Zero(static_cast<Eigen::Index>(patient_ids.size()), latent);
    for (std::size_t i = 0; i < patient_ids.size(); ++i) {
      representation.row(static_cast<Eigen::Index>(i)) =
          stage1_dense.at(patient_ids[i])->values.transpose();
    }
  } else {
    representation = x_ternary;
  }

  // subgroup classifier on stage-1 ternary vectors
  predict::SubgroupClassifierConfig sc;
  sc.kind = config.subgroup_model == "decision_tree" ? predict::ClassifierKind::DecisionTree
                                                     : predict::ClassifierKind::RandomForest;
  sc.forest.n_trees = config.n_trees;
  sc.forest.max_depth = config.max_depth;
  sc.forest.min_leaf = config.min_leaf;
  sc.forest.feature_subsample = config.feature_subsample;
  sc.holdout_fraction = config.holdout;
  sc.seed = config.seed;
  const auto subgroup_model = predict::train_subgroup_classifier(x_ternary, cluster_labels, sc);

  // stage-2 outcome task
  const OutcomeData outcome_data = assemble_outcomes(series, timelines, assignment);
  std::map<std::string, pathways::Outcome> first_outcome;
  for (std::size_t i = 0; i < outcome_data.patient_ids.size(); ++i) {
    if (!outcome_data.sequences[i].empty()) {
      first_outcome[outcome_data.patient_ids[i]] = outcome_data.sequences[i].front();
    }
  }
  std::vector<int> rows_kept;
  std::vector<int> state_labels, state_subgroups;
  std::map<std::string, std::size_t> excluded{{"discharge", 0}, {"decease", 0}, {"unknown", 0},
                                              {"single_stage", 0}};
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    const auto it = first_outcome.find(patient_ids[i]);
    if (it == first_outcome.end()) {
      ++excluded["single_stage"];
      continue;
    }
    const auto cls = predict::state_class_of(it->second);
    if (!cls) {
      if (it->second == pathways::Outcome::Discharge) ++excluded["discharge"];
      else if (it->second == pathways::Outcome::Decease) ++excluded["decease"];
      else ++excluded["unknown"];
      continue;
    }
    rows_kept.push_back(static_cast<int>(i));
    state_labels.push_back(*cls);
    state_subgroups.push_back(cluster_labels[i]);
  }
  if (state_labels.empty()) throw DataError("predict: no patients eligible for the stage-2 task");

  Matrix state_x(static_cast<Eigen::Index>(rows_kept.size()), representation.cols());
  for (std::size_t i = 0; i < rows_kept.size(); ++i) {
    state_x.row(static_cast<Eigen::Index>(i)) = representation.row(rows_kept[i]);
  }

  predict::StateClassifierConfig st;
  st.hidden = config.state_hidden;
  st.epochs = config.state_epochs;
  st.learning_rate = config.state_learning_rate;
  st.batch_size = config.state_batch;
  st.holdout_fraction = config.holdout;
  st.seed = config.seed;
  st.with_subgroup_feature = true;
  const auto with_model =
      predict::train_state_classifier(state_x, state_subgroups, state_labels, st);
  st.with_subgroup_feature = false;
  const auto without_model =
      predict::train_state_classifier(state_x, state_subgroups, state_labels, st);

  json metrics;
  metrics["seed"] = config.seed;
  metrics["subgroup_classifier"] = json::parse(predict::metrics_to_json(subgroup_model.heldout));
  metrics["subgroup_classifier"]["kind"] = config.subgroup_model;
  metrics["state_classifier"]["with_subgroup"] =
      json::parse(predict::metrics_to_json(with_model.heldout));
  metrics["state_classifier"]["without_subgroup"] =
      json::parse(predict::metrics_to_json(without_model.heldout));
  metrics["state_classifier"]["excluded"] = excluded;
  metrics["config"] = {{"representation",
                        config.external_features.empty() ? config.representation : "external"},
                       {"state_hidden", config.state_hidden},
                       {"epochs", config.state_epochs},
                       {"learning_rate", config.state_learning_rate},
                       {"batch_size", config.state_batch},
                       {"holdout", config.holdout}};

  // per-patient pathway predictions from the fitted models
  std::string predictions = "patient_id,predicted_subgroup,p_improve,p_persistent,p_deteriorate\n";
  char buf[128];
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    const int predicted = subgroup_model.model.predict(x_ternary.row(static_cast<Eigen::Index>(i))
                                                            .transpose());
    const Vector probs = with_model.predict_proba(
        representation.row(static_cast<Eigen::Index>(i)).transpose(), predicted);
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f\n", patient_ids[i].c_str(), predicted,
                  probs(0), probs(1), probs(2));
    predictions += buf;
  }

  manifest.output(config.out + "/predict/metrics.json", metrics.dump(2) + "\n");
  manifest.output(config.out + "/predict/predictions.csv", predictions);
  manifest.detail("subgroup_heldout_accuracy", subgroup_model.heldout.accuracy);
  manifest.detail("state_with_accuracy", with_model.heldout.accuracy);
  manifest.detail("state_without_accuracy", without_model.heldout.accuracy);
  manifest.write();
}

}  // namespace

void run(const std::string& subcommand, const PipelineConfig& config) {
  config.validate();
  if (subcommand == "synth") return run_synth(config);
  if (subcommand == "ingest") return run_ingest(config);
  if (subcommand == "structure") return run_structure(config);
  if (subcommand == "stages") return run_stages(config);
  if (subcommand == "vectors") return run_vectors(config);
  if (subcommand == "cluster") return run_cluster(config);
  if (subcommand == "explain") return run_explain(config);
  if (subcommand == "severity") return run_severity(config);
  if (subcommand == "pathways") return run_pathways(config);
  if (subcommand == "predict") return run_predict(config);
  if (subcommand == "all") {
    for (const char* step : {"ingest", "structure", "stages", "vectors", "cluster", "explain",
                             "severity", "pathways", "predict"}) {
      run(step, config);
    }
    return;
  }
  throw ConfigError("unknown subcommand: " + subcommand);
}

}  // namespace clinpath::pipeline
