#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include <json.hpp>

#include "clinpath/io_util.hpp"
#include "clinpath/pipeline.hpp"

using namespace clinpath;
using namespace clinpath::pipeline;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config(const std::string& out) {
  PipelineConfig config;
  const std::string dir = CLINPATH_RESOURCE_DIR;
  config.lexicon = dir + "/lexicon.tsv";
  config.dictionary = dir + "/concept_dictionary.tsv";
  config.triggers = dir + "/negation_triggers.tsv";
  config.flags = dir + "/flags.json";
  config.decease_patterns = dir + "/decease_patterns.txt";
  config.out = out;
  config.synth_patients = 150;
  config.synth_clusters = 3;
  config.latent = 8;
  config.ae_epochs = 30;
  config.k_min = 2;
  config.k_max = 6;
  config.n_trees = 30;
  config.state_epochs = 30;
  config.seed = 11;
  return config;
}

std::string fresh_dir(const std::string& name) {
  const auto path = fs::temp_directory_path() / name;
  fs::remove_all(path);
  fs::create_directories(path);
  return path.string();
}

// digests of every artifact, keyed by out-relative path
std::map<std::string, std::string> artifact_digests(const std::string& out) {
  std::map<std::string, std::string> digests;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), out).string();
    digests[rel] = fnv1a64_hex(read_file(entry.path().string()));
  }
  return digests;
}

}  // namespace

TEST_CASE("config json round-trip and validation") {
  const auto config = small_config("out");
  const auto parsed = PipelineConfig::from_json(config.to_json());
  CHECK(parsed.to_json() == config.to_json());
  CHECK(parsed.config_hash() == config.config_hash());

  // the hash ignores the output directory
  auto moved = config;
  moved.out = "elsewhere";
  CHECK(moved.config_hash() == config.config_hash());

  CHECK_THROWS_AS(PipelineConfig::from_json("{\"bogus\":1}"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json("{\"textproc\":{\"theta\":3.0}}"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json("{\"cluster\":{\"k_min\":1}}"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json("not json"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::from_json("{\"predict\":{\"representation\":\"magic\"}}"),
                  ConfigError);
}

TEST_CASE("subcommands require their upstream artifacts") {
  const auto out = fresh_dir("clinpath_pipe_upstream");
  const auto config = small_config(out);
  CHECK_THROWS_WITH_AS(run("cluster", config), doctest::Contains("run `vectors` first"),
                       DataError);
  CHECK_THROWS_WITH_AS(run("structure", config), doctest::Contains("run `ingest` first"),
                       DataError);
  CHECK_THROWS_AS(run("ingest", config), DataError);  // no notes yet
  CHECK_THROWS_AS(run("nonsense", config), ConfigError);
}

TEST_CASE("synth then all produces the full artifact set, reproducibly") {
  const auto out1 = fresh_dir("clinpath_pipe_run1");
  const auto out2 = fresh_dir("clinpath_pipe_run2");
  const auto shared = fresh_dir("clinpath_pipe_inputs");

  // generate inputs once, outside both output directories
  auto gen = small_config(shared);
  run("synth", gen);

  auto config1 = small_config(out1);
  config1.notes = shared + "/synth/notes.jsonl";
  config1.vitals = shared + "/synth/vitals.csv";
  config1.demographics = shared + "/synth/demographics.jsonl";
  auto config2 = config1;
  config2.out = out2;

  run("all", config1);
  run("all", config2);

  const char* expected[] = {
      "ingest/notes_clean.jsonl", "ingest/vitals_clean.csv", "ingest/patients.jsonl",
      "ingest/rejects.csv",       "ingest/cohort_summary.json",
      "structure/structured_notes.jsonl",
      "stages/stages.jsonl",
      "vectors/vocabulary.txt",   "vectors/ternary.jsonl", "vectors/autoencoder.json",
      "vectors/dense.csv",
      "cluster/clusters.csv",     "cluster/silhouette.csv",
      "explain/forest.json",      "explain/shap_summary.json",
      "severity/severity.csv",
      "pathways/network.dot",     "pathways/network.json", "pathways/stage2_heatmap.csv",
      "predict/metrics.json",     "predict/predictions.csv"};
  for (const char* artifact : expected) {
    CHECK_MESSAGE(file_exists(out1 + "/" + artifact), artifact);
  }

  // two runs with identical config and inputs: identical digests throughout,
  // manifests included
  const auto d1 = artifact_digests(out1);
  const auto d2 = artifact_digests(out2);
  REQUIRE(d1.size() == d2.size());
  for (const auto& [rel, digest] : d1) {
    REQUIRE(d2.count(rel) == 1);
    CHECK_MESSAGE(d2.at(rel) == digest, rel);
  }

  // no leftover temp files from atomic writes
  for (const auto& entry : fs::recursive_directory_iterator(out1)) {
    CHECK(entry.path().extension() != ".tmp");
  }

  // manifest sanity: inputs recorded, config hash matches
  const auto manifest = nlohmann::json::parse(read_file(out1 + "/cluster.manifest.json"));
  CHECK(manifest.at("config_hash").get<std::string>() == config1.config_hash());
  CHECK(manifest.at("inputs").contains("vectors/dense.csv"));
  CHECK(manifest.at("outputs").contains("cluster/clusters.csv"));
  CHECK(manifest.at("seed").get<std::uint64_t>() == 11);

  // the three planted subgroups are recovered end to end
  CHECK(manifest.at("details").at("chosen_k").get<int>() == 3);

  // profile drivers surface planted signature or severity concepts
  const auto shap = nlohmann::json::parse(read_file(out1 + "/explain/shap_summary.json"));
  const std::set<std::string> plausible = {
      "C0020649", "C0001122", "C0011849", "C0476273",  // cluster A1 signature
      "C0221198", "C0030193", "C0015967", "C0041834",  // cluster A2 signature
      "C0013404", "C0004096", "C0241235", "C0034642",  // cluster A3 signature
      "C0036690", "C2609414"};                         // severity drivers
  REQUIRE(shap.at("profiles").size() == 3);
  for (const auto& profile : shap.at("profiles")) {
    REQUIRE_FALSE(profile.at("presence").empty());
    const std::string top = profile.at("presence").at(0).at(0).get<std::string>();
    CHECK_MESSAGE(plausible.count(top) == 1, "unexpected top driver ", top);
  }
}

TEST_CASE("default input paths fall back to the synth outputs") {
  const auto out = fresh_dir("clinpath_pipe_default");
  auto config = small_config(out);
  config.synth_patients = 40;
  run("synth", config);
  run("ingest", config);  // reads out/synth/... implicitly
  CHECK(file_exists(out + "/ingest/patients.jsonl"));
  const auto summary = nlohmann::json::parse(read_file(out + "/ingest/cohort_summary.json"));
  CHECK(summary.at("n_patients").get<int>() == 40);
}

TEST_CASE("min_note_day_fraction excludes sparse patients") {
  const auto out = fresh_dir("clinpath_pipe_sparse");
  auto config = small_config(out);
  config.synth_patients = 30;
  run("synth", config);
  run("ingest", config);

  config.min_note_day_fraction = 1.01;  // impossible bar: everyone is excluded
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config.min_note_day_fraction = 1.0;  // satisfied: synth notes cover every day
  run("structure", config);
  const auto manifest = nlohmann::json::parse(read_file(out + "/structure.manifest.json"));
  CHECK(manifest.at("details").at("excluded_sparse_patients").get<int>() == 0);
}

TEST_CASE("predict accepts an externally supplied feature matrix") {
  const auto out = fresh_dir("clinpath_pipe_external");
  auto config = small_config(out);
  config.synth_patients = 60;
  run("synth", config);
  for (const char* step : {"ingest", "structure", "stages", "vectors", "cluster", "severity"}) {
    run(step, config);
  }

  // external features keyed by patient id: two informative columns
  const auto clusters = read_file(out + "/cluster/clusters.csv");
  std::string csv = "patient_id,f1,f2\n";
  for (const auto& line : split_lines(clusters)) {
    if (line.empty() || line.substr(0, 10) == "patient_id") continue;
    const auto fields = split(line, ',');
    csv += fields[0] + "," + fields[1] + ".0,0.5\n";
  }
  const std::string features_path = out + "/external_features.csv";
  atomic_write_file(features_path, csv);
  config.external_features = features_path;
  run("predict", config);

  const auto metrics = nlohmann::json::parse(read_file(out + "/predict/metrics.json"));
  CHECK(metrics.at("config").at("representation").get<std::string>() == "external");
  CHECK(file_exists(out + "/predict/predictions.csv"));

  // a feature file missing a patient is a data error
  atomic_write_file(features_path, "patient_id,f1\nP00000,1.0\n");
  CHECK_THROWS_AS(run("predict", config), DataError);
}

TEST_CASE("CLI exit codes: 0 success, 1 usage/config error, 2 data error") {
  const std::string cli = CLINPATH_CLI_PATH;
  const auto out = fresh_dir("clinpath_cli_codes");
  auto exit_code = [&](const std::string& args) {
    const int status = std::system(("\"" + cli + "\" " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  CHECK(exit_code("--print-config") == 0);
  CHECK(exit_code("--bogus-flag") == 1);
  CHECK(exit_code("synth --config /nonexistent/config.json --out " + out) == 1);
  // ingest without inputs is a data error
  CHECK(exit_code("ingest --out " + out + "/empty") == 2);

  // --seed overrides the config and lands in the manifest
  CHECK(exit_code("synth --out " + out + " --seed 123") == 0);
  const auto manifest = nlohmann::json::parse(read_file(out + "/synth.manifest.json"));
  CHECK(manifest.at("seed").get<std::uint64_t>() == 123);
}

TEST_CASE("atomic write leaves no temp file and replaces content") {
  const auto out = fresh_dir("clinpath_pipe_atomic");
  const std::string path = out + "/sub/dir/file.txt";
  atomic_write_file(path, "one");
  CHECK(read_file(path) == "one");
  atomic_write_file(path, "two");
  CHECK(read_file(path) == "two");
  CHECK_FALSE(file_exists(path + ".tmp"));
}
