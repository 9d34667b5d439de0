#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hybridboost/dataset.hpp"
#include "hybridboost/errors.hpp"
#include "hybridboost/feature_io.hpp"
#include "hybridboost/pipeline.hpp"
#include "support.hpp"

using namespace hybridboost;
using namespace hybridboost::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json small_overrides() {
  return json{{"train", {{"epochs", 1}}}, {"mlp", {{"epochs", 5}}}, {"adaboost", {{"rounds", 5}}}};
}

ExperimentConfig small_config(Phase phase, const json& data) {
  json j = small_overrides();
  j["seed"] = 5;
  j["data"] = data;
  return parse_config(j, phase, std::nullopt);
}

std::size_t csv_rows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  while (std::getline(in, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing") {
  CHECK_THROWS_AS(parse_config(json::object(), Phase::detect, std::nullopt), ConfigError);
  const ExperimentConfig d = parse_config(json::object(), Phase::detect, 3);
  CHECK(d.seed == 3);
  CHECK(d.train_fraction == 0.6);
  CHECK(d.svm.kernel.kind == clf::KernelKind::rbf);
  const ExperimentConfig c = parse_config(json{{"seed", 1}}, Phase::classify, std::nullopt);
  CHECK(c.train_fraction == 0.8);
  CHECK(c.svm.kernel.kind == clf::KernelKind::polynomial);
  CHECK(c.svm.kernel.degree == 2);
  CHECK(c.train.learning_rate == 0.001);
  CHECK(c.train.momentum == 0.95);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.epochs == 10);

  json two = {{"seed", 1}, {"data", {{"synth", {{"kind", "detect2"}}}, {"image_dir", "x"}}}};
  CHECK_THROWS_AS(parse_config(two, Phase::detect, std::nullopt), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"seed", 1}, {"train_fraction", 2}}, Phase::detect, std::nullopt),
                  ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"seed", 1}, {"svm", {{"kernel", {{"kind", "cubic"}}}}}},
                               Phase::detect, std::nullopt),
                  ConfigError);

  const ExperimentConfig round = parse_config(config_to_json(c), std::nullopt, std::nullopt);
  CHECK(config_to_json(round) == config_to_json(c));
}

TEST_CASE("detect run writes a complete, deterministic run directory") {
  const ExperimentConfig cfg =
      small_config(Phase::detect, json{{"synth", {{"kind", "detect2"}, {"n_per_class", 15}}}});
  const fs::path a = support::scratch_dir("detect_a");
  const fs::path b = support::scratch_dir("detect_b");
  const RunResult ra = run_experiment(cfg, a);
  const RunResult rb = run_experiment(cfg, b);
  CHECK(ra.body_sha256 == rb.body_sha256);
  CHECK(ra.body_sha256 == sha256_hex(ra.body.dump()));

  for (const auto& f : ra.body["files"]) {
    CAPTURE(f.get<std::string>());
    CHECK(fs::exists(a / f.get<std::string>()));
  }
  for (const auto& entry : fs::directory_iterator(a / "models")) {
    CHECK(support::read_bytes(entry.path()) == support::read_bytes(b / "models" / entry.path().filename()));
  }

  std::ifstream summary(a / "summary.csv");
  std::string header;
  std::getline(summary, header);
  CHECK(header == "method,acc,rec,pre,f1,mcc,auc_roc,auc_pr");

  std::vector<std::string> methods;
  for (const auto& m : ra.body["methods"]) methods.push_back(m["name"]);
  CHECK(std::find(methods.begin(), methods.end(), "dbfs-ec") != methods.end());
  CHECK(std::find(methods.begin(), methods.end(), "renet/svm") != methods.end());
  CHECK(std::find(methods.begin(), methods.end(), "dbfs/svm") != methods.end());

  const std::size_t test_rows = ra.body["split"]["test"].get<std::size_t>();
  CHECK(csv_rows(a / "scatter_dbfs.csv") == test_rows);
  CHECK(ra.body.contains("reference_context"));
}

TEST_CASE("single feature file source") {
  const data::Dataset ds = data::synth_dataset(data::SynthKind::detect2, 20, 16, 3);
  FeatureMatrix f;
  f.values = Matrix(ds.size(), 4);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    f.values(i, 0) = ds.images[i].mean();
    f.values(i, 1) = ds.images[i].pixels[8 * 16 + 8];
    f.values(i, 2) = static_cast<double>(i % 3);
    f.values(i, 3) = 1.0;
  }
  f.labels = ds.labels;
  const fs::path dir = support::scratch_dir("featsrc");
  data::write_feature_file(f, dir / "means.dbfs");
  const ExperimentConfig cfg = small_config(Phase::detect, json{{"feature_files", {(dir / "means.dbfs").string()}}});
  const RunResult r = run_experiment(cfg, dir / "out");
  CHECK(!r.body["methods"].empty());
  CHECK(fs::exists(dir / "out" / "report.json"));
}

TEST_CASE("classify run reports fused and ablation rows") {
  const ExperimentConfig cfg =
      small_config(Phase::classify, json{{"synth", {{"kind", "classify3"}, {"n_per_class", 8}}}});
  const fs::path out = support::scratch_dir("classify");
  const RunResult r = run_experiment(cfg, out);
  std::vector<std::string> methods;
  for (const auto& m : r.body["methods"]) methods.push_back(m["name"]);
  CHECK(methods.front() == "hff/svm");
  CHECK(std::find(methods.begin(), methods.end(), "renet/svm") != methods.end());
  CHECK(std::find(methods.begin(), methods.end(), "hog/svm") != methods.end());
}

TEST_CASE("chained classify never sees normal samples") {
  json j = small_overrides();
  j["seed"] = 2;
  j["chained"] = true;
  j["data"] = {{"synth", {{"kind", "screen4"}, {"n_per_class", 8}}}};
  const ExperimentConfig cfg = parse_config(j, Phase::classify, std::nullopt);
  const RunResult r = run_experiment(cfg, support::scratch_dir("chained"));
  REQUIRE(r.body.contains("chain"));
  const auto& chain = r.body["chain"];
  // screen4 holds one normal and three lesion classes; the test split keeps 20% of each
  const std::size_t lesion_test_rows = chain["flagged_lesions_classified"].get<std::size_t>() +
                                       chain["lesions_screened_out"].get<std::size_t>();
  CHECK(lesion_test_rows == 3 * r.body["split"]["test"].get<std::size_t>() / 4);
  for (const auto& m : r.body["methods"]) {
    if (m["name"].get<std::string>().rfind("screen_", 0) == 0) continue;
    CAPTURE(m["name"].get<std::string>());
    CHECK(m["metrics"]["confusion"].size() == 3);
    CHECK(m["test_rows"].get<std::size_t>() == chain["flagged_lesions_classified"].get<std::size_t>());
  }
}

TEST_CASE("test rows do not influence training") {
  const data::Dataset ds = data::synth_dataset(data::SynthKind::detect2, 12, 64, 6);
  const fs::path root = support::scratch_dir("leak");
  data::write_image_directory(ds, root / "clean");
  data::write_image_directory(ds, root / "poisoned");

  json j = small_overrides();
  j["seed"] = 11;
  j["data"] = {{"image_dir", (root / "clean").string()}};
  const ExperimentConfig clean = parse_config(j, Phase::detect, std::nullopt);
  const data::Dataset loaded = load_dataset(clean.data, clean.image_size, clean.seed);
  const data::Split split =
      data::stratified_split(loaded.labels, clean.train_fraction, derive_seed(clean.seed, 3),
                             clean.validation_fraction);
  REQUIRE(!split.test.empty());

  // overwrite every test image on disk with noise
  std::vector<fs::path> files;
  for (const auto& cls : loaded.class_names)
    for (const auto& e : fs::directory_iterator(root / "poisoned" / cls))
      if (e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return a.parent_path() != b.parent_path() ? a.parent_path() < b.parent_path()
                                              : a.filename() < b.filename();
  });
  REQUIRE(files.size() == loaded.size());
  Rng rng(99);
  for (std::size_t i : split.test) {
    data::GrayImage noise(64, 64);
    for (double& p : noise.pixels) p = uniform01(rng);
    data::save_pgm(noise, files[i]);
  }

  j["data"] = {{"image_dir", (root / "poisoned").string()}};
  const ExperimentConfig poisoned = parse_config(j, Phase::detect, std::nullopt);
  const data::Dataset loaded_p = load_dataset(poisoned.data, poisoned.image_size, poisoned.seed);
  for (std::size_t i : split.training_portion()) CHECK(loaded_p.images[i] == loaded.images[i]);

  run_experiment(clean, root / "run_clean");
  run_experiment(poisoned, root / "run_poisoned");
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(root / "run_clean" / "models")) {
    CAPTURE(e.path().filename().string());
    CHECK(support::read_bytes(e.path()) ==
          support::read_bytes(root / "run_poisoned" / "models" / e.path().filename()));
    ++compared;
  }
  CHECK(compared > 0);
}

}
