// Command-line front end: data synthesis, feature extraction, fusion and the
// two pipeline phases.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hybridboost/binary_io.hpp"
#include "hybridboost/brain_renet.hpp"
#include "hybridboost/classifiers.hpp"
#include "hybridboost/errors.hpp"
#include "hybridboost/feature_io.hpp"
#include "hybridboost/fusion.hpp"
#include "hybridboost/hog.hpp"
#include "hybridboost/image.hpp"
#include "hybridboost/metrics.hpp"
#include "hybridboost/parallel.hpp"
#include "hybridboost/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hybridboost;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kConvergence = 4 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  bool paper_literal = false;
  std::size_t threads = 0;
  bool strict = false;
};

json load_config_json(const Globals& g) {
  if (g.config_path.empty()) return json::object();
  std::ifstream in(g.config_path);
  if (!in) throw ConfigError("cannot open config file " + g.config_path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + g.config_path + ": " + e.what());
  }
}

pipeline::ExperimentConfig experiment(const Globals& g, pipeline::Phase phase, bool seed_required = true) {
  json j = load_config_json(g);
  std::optional<std::uint64_t> seed = g.seed;
  if (!seed_required && !seed && !j.contains("seed")) seed = 0;
  pipeline::ExperimentConfig c = pipeline::parse_config(j, phase, seed);
  if (g.paper_literal) c.metric_mode = metrics::MetricMode::paper_literal;
  return c;
}

// --data overrides the config's data block: a directory is an image tree, a
// file a manifest.
data::Dataset dataset_for(const Globals& g, const std::string& data_path, pipeline::Phase phase) {
  pipeline::ExperimentConfig c = experiment(g, phase, false);
  if (!data_path.empty()) {
    c.data = {};
    if (fs::is_directory(data_path)) c.data.image_dir = data_path;
    else c.data.manifest = data_path;
  }
  return pipeline::load_dataset(c.data, c.image_size, c.seed);
}

void write_features(const FeatureMatrix& fm, const fs::path& path) {
  if (path.extension() == ".csv") data::write_feature_csv(fm, path);
  else data::write_feature_file(fm, path);
}

void print_run(const pipeline::RunResult& r, const fs::path& out) {
  std::printf("report: %s\nbody sha256: %s\n", (out / "report.json").string().c_str(),
              r.body_sha256.c_str());
  for (const auto& m : r.body.at("methods")) {
    const auto& mt = m.at("metrics");
    const json& acc = mt.contains("macro") ? mt.at("macro").at("accuracy") : mt.at("accuracy");
    std::printf("  %-24s acc %.4f\n", m.at("name").get<std::string>().c_str(), acc.get<double>());
  }
  for (const auto& w : r.convergence_warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

int finish_run(const Globals& g, const pipeline::RunResult& r, const fs::path& out) {
  print_run(r, out);
  if (g.strict && !r.convergence_warnings.empty()) return kConvergence;
  return kOk;
}

void write_error_report(const fs::path& out, const std::string& kind, const std::string& what) {
  try {
    json report = {{"error", {{"type", kind}, {"message", what}}}};
    io::write_text(out / "report.json", report.dump(2) + "\n");
  } catch (...) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybridboost: CNN + HOG feature fusion and ensemble classifiers"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON experiment config");
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory or file");
  app.add_flag("--paper-literal-metrics", g.paper_literal, "Report precision/MCC as printed variants");
  app.add_option("--threads", g.threads, "Worker threads (also HYBRIDBOOST_THREADS)");
  app.add_flag("--strict", g.strict, "Exit 4 when a solver stops at its iteration cap");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic image dataset");
  std::string synth_kind = "detect2";
  std::size_t n_per_class = 100, size = 64;
  double noise = 0.05;
  synth->add_option("--kind", synth_kind, "detect2 | classify3 | screen4");
  synth->add_option("--n-per-class", n_per_class);
  synth->add_option("--size", size);
  synth->add_option("--noise", noise);

  // train-cnn
  auto* train_cnn = app.add_subcommand("train-cnn", "Train BRAIN-RENet on an image dataset");
  std::string data_path;
  std::optional<std::size_t> epochs;
  train_cnn->add_option("--data", data_path, "Image directory or manifest CSV");
  train_cnn->add_option("--epochs", epochs);

  // extract
  auto* extract = app.add_subcommand("extract", "Write fc1 deep features of a dataset");
  std::string model_path;
  extract->add_option("--model", model_path, "BRNR model file")->required();
  extract->add_option("--data", data_path);

  // hog
  auto* hog_cmd = app.add_subcommand("hog", "Write HOG features of a dataset");
  hog_cmd->add_option("--data", data_path);

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Concatenate feature files");
  std::vector<std::string> feature_paths;
  bool normalize = false;
  fuse->add_option("--features", feature_paths, "Feature files in fusion order")->required();
  fuse->add_flag("--normalize", normalize, "Z-score each part on all of its rows first");

  // detect / classify
  auto* detect = app.add_subcommand("detect", "Run the detection phase (feature boosting + ensemble)");
  detect->add_option("--data", data_path);
  detect->add_option("--features", feature_paths, "External feature files instead of images");
  auto* classify = app.add_subcommand("classify", "Run the classification phase (CNN + HOG fusion SVM)");
  classify->add_option("--data", data_path);
  std::optional<int> degree;
  bool chained = false;
  classify->add_option("--degree", degree, "Polynomial SVM degree");
  classify->add_flag("--chained", chained, "Screen with a detection stage first");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a saved classifier on a feature file");
  std::string features_path;
  eval->add_option("--model", model_path, "CLSF classifier or ensemble file")->required();
  eval->add_option("--features", features_path)->required();

  // scatter
  auto* scatter = app.add_subcommand("scatter", "PCA top-2 scatter of a feature file");
  scatter->add_option("--features", features_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  if (g.threads > 0) set_thread_count(g.threads);
  std::cerr << "hybridboost " << HYBRIDBOOST_VERSION << " (png input: "
            << (data::png_supported() ? "yes" : "no") << ")\n";
  const fs::path out = g.out;

  try {
    if (*synth) {
      const std::uint64_t seed = g.seed.value_or(0);
      const auto ds = data::synth_dataset(data::parse_synth_kind(synth_kind), n_per_class, size, seed, noise);
      data::write_image_directory(ds, out);
      std::printf("wrote %zu images to %s\n", ds.size(), out.string().c_str());
    } else if (*train_cnn) {
      pipeline::ExperimentConfig c = experiment(g, pipeline::Phase::classify);
      if (epochs) c.train.epochs = *epochs;
      data::Dataset ds = dataset_for(g, data_path, pipeline::Phase::classify);
      const auto split = data::stratified_split(ds.labels, 1.0, derive_seed(c.seed, 3), c.validation_fraction);
      renet::BrainReNetConfig rc = c.renet;
      rc.input_height = rc.input_width = c.image_size;
      rc.num_classes = ds.num_classes();
      const auto tr = renet::train(renet::build_model(rc, derive_seed(c.seed, 10)),
                                   data::subset(ds, split.train), data::subset(ds, split.validation),
                                   c.train, derive_seed(c.seed, 11));
      fs::create_directories(out);
      renet::save_model(tr.model, out / "model.brnr");
      json hist = {{"selected_epoch", tr.history.selected_epoch},
                   {"train_loss", tr.history.train_loss},
                   {"train_accuracy", tr.history.train_accuracy},
                   {"val_loss", tr.history.val_loss},
                   {"val_accuracy", tr.history.val_accuracy},
                   {"class_names", ds.class_names}};
      io::write_text(out / "history.json", hist.dump(2) + "\n");
      std::printf("selected epoch %d, model %s\n", tr.history.selected_epoch,
                  (out / "model.brnr").string().c_str());
    } else if (*extract) {
      const auto model = renet::load_model(model_path);
      const auto ds = dataset_for(g, data_path, pipeline::Phase::classify);
      write_features(renet::extract_deep_features(model, ds), out);
      std::printf("wrote %zu x %zu features to %s\n", ds.size(), model.config.fc1_width, out.string().c_str());
    } else if (*hog_cmd) {
      const pipeline::ExperimentConfig c = experiment(g, pipeline::Phase::classify, false);
      const auto ds = dataset_for(g, data_path, pipeline::Phase::classify);
      const FeatureMatrix fm = hog::hog_features(ds, c.hog);
      write_features(fm, out);
      std::printf("wrote %zu x %zu features to %s\n", fm.n(), fm.dim(), out.string().c_str());
    } else if (*fuse) {
      std::vector<FeatureMatrix> parts;
      for (const auto& p : feature_paths) {
        FeatureMatrix fm = data::read_feature_file(p);
        if (normalize) fm = fusion::apply_normalizer(fusion::fit_normalizer(fm), fm);
        parts.push_back(std::move(fm));
      }
      const FeatureMatrix fused = fusion::concat_features(parts);
      write_features(fused, out);
      std::printf("wrote %zu x %zu features to %s\n", fused.n(), fused.dim(), out.string().c_str());
    } else if (*detect || *classify) {
      const auto phase = *detect ? pipeline::Phase::detect : pipeline::Phase::classify;
      pipeline::ExperimentConfig c = experiment(g, phase);
      if (!data_path.empty() || !feature_paths.empty()) {
        c.data = {};
        if (!feature_paths.empty()) {
          for (const auto& p : feature_paths) c.data.feature_files.emplace_back(p);
        } else if (fs::is_directory(data_path)) {
          c.data.image_dir = data_path;
        } else {
          c.data.manifest = data_path;
        }
      }
      if (degree) {
        c.svm.kernel.kind = clf::KernelKind::polynomial;
        c.svm.kernel.degree = *degree;
      }
      if (chained) c.chained = true;
      c.validate();
      try {
        const auto r = pipeline::run_experiment(c, out);
        return finish_run(g, r, out);
      } catch (const ConfigError& e) {
        write_error_report(out, "config", e.what());
        throw;
      } catch (const DataError& e) {
        write_error_report(out, "data", e.what());
        throw;
      } catch (const Error& e) {
        write_error_report(out, "error", e.what());
        throw;
      }
    } else if (*eval) {
      const FeatureMatrix fm = data::read_feature_file(features_path);
      auto bytes = io::read_file(model_path);
      std::vector<int> pred;
      Matrix scores;
      std::size_t classes = 2;
      // Ensemble and single-classifier files share the CLSF header; the tag
      // word after it tells them apart.
      const bool is_ensemble = bytes.size() >= 12 && bytes[8] == 3;
      if (is_ensemble) {
        const auto ens = clf::decode_ensemble(std::move(bytes), model_path);
        const auto p = clf::ensemble_predict(ens, fm.values);
        pred = p.vote.labels;
        scores = Matrix(pred.size(), 1, p.vote.scores);
      } else {
        const auto model = clf::decode_classifier(std::move(bytes), model_path);
        const auto p = clf::classifier_predict(model, fm.values);
        pred = p.labels;
        scores = p.scores;
        if (const auto* svm = std::get_if<clf::OvrSvmModel>(&model)) classes = svm->num_classes;
        if (const auto* mlp = std::get_if<clf::MlpModel>(&model)) classes = mlp->num_classes();
      }
      const auto mode = g.paper_literal ? metrics::MetricMode::paper_literal : metrics::MetricMode::standard;
      json report;
      if (classes == 2) {
        report["metrics"] = metrics::binary_metrics(metrics::confusion_counts(fm.labels, pred, 1), mode);
        const std::size_t col = scores.cols() == 1 ? 0 : 1;
        std::vector<double> s(scores.rows());
        for (std::size_t r = 0; r < s.size(); ++r) s[r] = scores(r, col);
        std::vector<metrics::CurveSeries> curves{
            metrics::ranking_curve(s, fm.labels, metrics::CurveKind::roc),
            metrics::ranking_curve(s, fm.labels, metrics::CurveKind::pr)};
        report["auc_roc"] = curves[0].auc;
        report["auc_pr"] = curves[1].auc;
        fs::create_directories(out);
        metrics::write_curves_csv(curves, out / "curves.csv");
      } else {
        report["metrics"] = metrics::multiclass_metrics(fm.labels, pred, classes, mode);
      }
      fs::create_directories(out);
      io::write_text(out / "eval.json", report.dump(2) + "\n");
      std::cout << report.dump(2) << "\n";
    } else if (*scatter) {
      const FeatureMatrix fm = data::read_feature_file(features_path);
      const auto pca = fusion::pca_top_k(fm, 2);
      fs::create_directories(out);
      const std::string stem = "scatter_" + fm.source_tag;
      fusion::write_scatter(pca, fm.labels, out / (stem + ".csv"), out / (stem + ".json"),
                            {{"source", features_path}});
      std::printf("wrote %s\n", (out / (stem + ".csv")).string().c_str());
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kData;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "convergence error: %s (residual %g)\n", e.what(), e.residual());
    return kConvergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
