#include "hybridboost/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"
#include "hybridboost/feature_io.hpp"
#include "hybridboost/fusion.hpp"
#include "hybridboost/parallel.hpp"

namespace hybridboost::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string phase_name(Phase phase) { return phase == Phase::detect ? "detect" : "classify"; }

// ---- config --------------------------------------------------------------------

void DataSource::validate() const {
  const int set = (synth ? 1 : 0) + (image_dir ? 1 : 0) + (manifest ? 1 : 0) +
                  (feature_files.empty() ? 0 : 1);
  if (set != 1) {
    throw ConfigError("data must name exactly one source (synth, image_dir, manifest or "
                      "feature_files), got " + std::to_string(set));
  }
  if (synth && synth->n_per_class < 3) throw ConfigError("synth n_per_class must be at least 3");
}

void ExperimentConfig::validate() const {
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1]");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
  if (image_size == 0) throw ConfigError("image_size must be positive");
  if (!data.is_features()) {
    if (sources.empty()) throw ConfigError("sources must name at least one of renet, hog");
    std::set<std::string> seen;
    for (const auto& s : sources) {
      if (s != "renet" && s != "hog") throw ConfigError("unknown feature source '" + s + "'");
      if (!seen.insert(s).second) throw ConfigError("feature source '" + s + "' listed twice");
    }
  }
  if (phase == Phase::classify && data.is_features()) {
    throw ConfigError("classify needs images (it trains the CNN); feature files are detect-only");
  }
  if (chained && phase != Phase::classify) throw ConfigError("chained mode applies to classify only");
  train.validate();
  hog.validate();
  svm.validate();
  mlp.validate();
  adaboost.validate();
}

ExperimentConfig default_config(Phase phase) {
  ExperimentConfig c;
  c.phase = phase;
  if (phase == Phase::detect) {
    c.train_fraction = 0.6;
    c.svm.kernel.kind = clf::KernelKind::rbf;
  } else {
    c.train_fraction = 0.8;
    c.svm.kernel.kind = clf::KernelKind::polynomial;
    c.svm.kernel.degree = 2;
  }
  return c;
}

namespace {

template <class T>
void opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

Phase parse_phase(const std::string& s) {
  if (s == "detect") return Phase::detect;
  if (s == "classify") return Phase::classify;
  throw ConfigError("unknown phase '" + s + "'");
}

metrics::MetricMode parse_mode(const std::string& s) {
  if (s == "standard") return metrics::MetricMode::standard;
  if (s == "paper_literal") return metrics::MetricMode::paper_literal;
  throw ConfigError("unknown metric_mode '" + s + "'");
}

}  // namespace

ExperimentConfig parse_config(const json& j, std::optional<Phase> phase,
                              std::optional<std::uint64_t> seed_override) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Phase p = phase.value_or(Phase::detect);
  if (j.contains("phase")) {
    const Phase declared = parse_phase(j.at("phase").get<std::string>());
    if (phase && *phase != declared) {
      throw ConfigError("config declares phase '" + phase_name(declared) + "' but '" +
                        phase_name(*phase) + "' was requested");
    }
    p = declared;
  }
  ExperimentConfig c = default_config(p);
  try {
    if (seed_override) {
      c.seed = *seed_override;
    } else if (j.contains("seed")) {
      c.seed = j.at("seed").get<std::uint64_t>();
    } else {
      throw ConfigError("a seed is required (config field 'seed' or --seed)");
    }
    if (j.contains("data")) {
      const json& d = j.at("data");
      if (d.contains("synth")) {
        const json& s = d.at("synth");
        SynthSource src;
        src.kind = p == Phase::detect ? data::SynthKind::detect2 : data::SynthKind::classify3;
        if (s.contains("kind")) src.kind = data::parse_synth_kind(s.at("kind").get<std::string>());
        opt(s, "n_per_class", src.n_per_class);
        opt(s, "noise", src.noise);
        if (s.contains("image_size")) c.image_size = s.at("image_size").get<std::size_t>();
        c.data.synth = src;
      }
      if (d.contains("image_dir")) c.data.image_dir = d.at("image_dir").get<std::string>();
      if (d.contains("manifest")) c.data.manifest = d.at("manifest").get<std::string>();
      if (d.contains("feature_files")) {
        for (const auto& f : d.at("feature_files")) c.data.feature_files.emplace_back(f.get<std::string>());
      }
    }
    opt(j, "image_size", c.image_size);
    opt(j, "train_fraction", c.train_fraction);
    opt(j, "validation_fraction", c.validation_fraction);
    opt(j, "sources", c.sources);
    if (j.contains("renet")) renet::from_json(j.at("renet"), c.renet);
    c.train.shuffle_seed = derive_seed(c.seed, 2);
    if (j.contains("train")) renet::from_json(j.at("train"), c.train);
    if (j.contains("hog")) hog::from_json(j.at("hog"), c.hog);
    if (j.contains("svm")) clf::from_json(j.at("svm"), c.svm);
    if (j.contains("mlp")) clf::from_json(j.at("mlp"), c.mlp);
    if (j.contains("adaboost")) clf::from_json(j.at("adaboost"), c.adaboost);
    opt(j, "normalize", c.normalize);
    if (j.contains("metric_mode")) c.metric_mode = parse_mode(j.at("metric_mode").get<std::string>());
    opt(j, "chained", c.chained);
    opt(j, "scatter", c.scatter);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  if (!c.data.synth && !c.data.image_dir && !c.data.manifest && c.data.feature_files.empty()) {
    SynthSource src;
    src.kind = p == Phase::detect ? data::SynthKind::detect2 : data::SynthKind::classify3;
    c.data.synth = src;
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json data = json::object();
  if (c.data.synth) {
    data["synth"] = {{"kind", data::synth_kind_name(c.data.synth->kind)},
                     {"n_per_class", c.data.synth->n_per_class},
                     {"noise", c.data.synth->noise}};
  }
  if (c.data.image_dir) data["image_dir"] = c.data.image_dir->string();
  if (c.data.manifest) data["manifest"] = c.data.manifest->string();
  if (!c.data.feature_files.empty()) {
    json files = json::array();
    for (const auto& f : c.data.feature_files) files.push_back(f.string());
    data["feature_files"] = files;
  }
  json renet_cfg = c.renet;
  json train_cfg = c.train;
  return {{"phase", phase_name(c.phase)},
          {"seed", c.seed},
          {"data", data},
          {"image_size", c.image_size},
          {"train_fraction", c.train_fraction},
          {"validation_fraction", c.validation_fraction},
          {"sources", c.sources},
          {"renet", renet_cfg},
          {"train", train_cfg},
          {"hog", c.hog},
          {"svm", c.svm},
          {"mlp", c.mlp},
          {"adaboost", c.adaboost},
          {"normalize", c.normalize},
          {"metric_mode", metrics::mode_name(c.metric_mode)},
          {"chained", c.chained},
          {"scatter", c.scatter}};
}

data::Dataset load_dataset(const DataSource& source, std::size_t image_size, std::uint64_t seed) {
  data::Dataset ds;
  if (source.synth) {
    ds = data::synth_dataset(source.synth->kind, source.synth->n_per_class, image_size,
                             derive_seed(seed, 1), source.synth->noise);
  } else if (source.image_dir) {
    ds = data::load_image_directory(*source.image_dir);
  } else if (source.manifest) {
    ds = data::load_manifest(*source.manifest);
  } else {
    throw ConfigError("data source holds no images");
  }
  ds.validate();
  return data::resize_all(ds, image_size, image_size);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

void write_report(const RunResult& result, const fs::path& out_dir) {
  json report = {{"body", result.body},
                 {"body_sha256", result.body_sha256},
                 {"timings_seconds", result.timings},
                 {"output_dir", fs::absolute(out_dir).string()}};
  io::write_text(out_dir / "report.json", report.dump(2) + "\n");
}

// ---- run -------------------------------------------------------------------------

namespace {

class Run {
 public:
  Run(const ExperimentConfig& cfg, fs::path out) : cfg_(cfg), out_(std::move(out)) {}

  template <class Fn>
  auto timed(const std::string& stage, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      timings_[stage] = seconds_since(t0);
    } else {
      auto r = fn();
      timings_[stage] = seconds_since(t0);
      return r;
    }
  }

  void add_file(const fs::path& rel) { files_.push_back(rel); }
  fs::path path(const fs::path& rel) const { return out_ / rel; }

  void save_bytes(const fs::path& rel, std::span<const std::uint8_t> bytes) {
    io::write_file(path(rel), bytes);
    add_file(rel);
  }

  void warn_convergence(const std::string& what) { convergence_.push_back(what); }

  json& body() { return body_; }

  // Adds one evaluated method; returns its curves.
  std::vector<metrics::CurveSeries> add_method(const std::string& name, const std::string& space,
                                               const std::string& classifier,
                                               std::span<const int> truth,
                                               std::span<const int> pred, const Matrix& scores,
                                               std::size_t num_classes, bool headline = false);

  const ExperimentConfig& cfg() const { return cfg_; }

  RunResult finish();

 private:
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  const ExperimentConfig& cfg_;
  fs::path out_;
  json body_ = json::object();
  json methods_ = json::array();
  std::vector<std::array<double, 7>> summary_;
  std::vector<std::string> summary_names_;
  std::map<std::string, double> timings_;
  std::vector<fs::path> files_;
  std::vector<std::string> convergence_;
  std::vector<metrics::CurveSeries> headline_;
};

std::string file_safe(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == ' ') c = '_';
  }
  return s;
}

std::vector<metrics::CurveSeries> Run::add_method(const std::string& name, const std::string& space,
                                                  const std::string& classifier,
                                                  std::span<const int> truth,
                                                  std::span<const int> pred, const Matrix& scores,
                                                  std::size_t num_classes, bool headline) {
  const auto mode = cfg_.metric_mode;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  json entry = {{"name", name}, {"space", space}, {"classifier", classifier}, {"test_rows", truth.size()}};
  std::vector<metrics::CurveSeries> curves;
  metrics::MetricReport top;
  double auc_roc = nan, auc_pr = nan;
  if (num_classes == 2) {
    top = metrics::binary_metrics(metrics::confusion_counts(truth, pred, 1), mode);
    entry["metrics"] = top;
    const std::size_t col = scores.cols() == 1 ? 0 : 1;
    std::vector<double> s(scores.rows());
    for (std::size_t r = 0; r < s.size(); ++r) s[r] = scores(r, col);
    try {
      curves.push_back(metrics::ranking_curve(s, truth, metrics::CurveKind::roc));
      curves.push_back(metrics::ranking_curve(s, truth, metrics::CurveKind::pr));
      auc_roc = curves[0].auc;
      auc_pr = curves[1].auc;
    } catch (const DegenerateError& e) {
      entry["curve_error"] = e.what();
    }
  } else {
    const metrics::MulticlassReport mc = metrics::multiclass_metrics(truth, pred, num_classes, mode);
    top = mc.macro;
    entry["metrics"] = mc;
    double roc_sum = 0.0, pr_sum = 0.0;
    bool ok = true;
    for (std::size_t c = 0; c < num_classes && ok; ++c) {
      std::vector<double> s(scores.rows());
      for (std::size_t r = 0; r < s.size(); ++r) s[r] = scores(r, c);
      try {
        auto roc = metrics::ranking_curve(s, truth, metrics::CurveKind::roc, static_cast<int>(c));
        auto pr = metrics::ranking_curve(s, truth, metrics::CurveKind::pr, static_cast<int>(c));
        roc.tag = "roc/class" + std::to_string(c);
        pr.tag = "pr/class" + std::to_string(c);
        roc_sum += roc.auc;
        pr_sum += pr.auc;
        curves.push_back(std::move(roc));
        curves.push_back(std::move(pr));
      } catch (const DegenerateError& e) {
        entry["curve_error"] = e.what();
        ok = false;
      }
    }
    if (ok) {
      auc_roc = roc_sum / static_cast<double>(num_classes);
      auc_pr = pr_sum / static_cast<double>(num_classes);
    }
    entry["auc_averaging"] = "macro one-vs-rest";
  }
  entry["auc_roc"] = auc_roc;
  entry["auc_pr"] = auc_pr;
  if (!curves.empty()) {
    const fs::path rel = fs::path("curves") / (file_safe(name) + ".csv");
    metrics::write_curves_csv(curves, path(rel));
    add_file(rel);
    entry["curves_file"] = rel.generic_string();
  }
  if (headline && headline_.empty()) {
    headline_ = curves;
    body_["headline_method"] = name;
  }
  methods_.push_back(entry);
  summary_names_.push_back(name);
  summary_.push_back({top.accuracy, top.recall, top.precision, top.f1,
                      top.mcc, auc_roc, auc_pr});
  return curves;
}

RunResult Run::finish() {
  std::ostringstream csv;
  csv.precision(10);
  csv << "method,acc,rec,pre,f1,mcc,auc_roc,auc_pr\n";
  for (std::size_t i = 0; i < summary_.size(); ++i) {
    csv << summary_names_[i];
    for (double v : summary_[i]) {
      csv << ',';
      if (std::isnan(v)) csv << "nan";
      else csv << v;
    }
    csv << '\n';
  }
  io::write_text(path("summary.csv"), csv.str());
  add_file("summary.csv");
  // roc.csv / pr.csv carry the headline method's curves.
  for (const auto kind : {metrics::CurveKind::roc, metrics::CurveKind::pr}) {
    std::vector<metrics::CurveSeries> sel;
    for (const auto& c : headline_) {
      if (c.kind == kind) sel.push_back(c);
    }
    const std::string file = metrics::curve_kind_name(kind) + ".csv";
    metrics::write_curves_csv(sel, path(file));
    add_file(file);
  }

  body_["methods"] = methods_;
  body_["convergence_warnings"] = convergence_;
  json files = json::array();
  for (const auto& f : files_) files.push_back(f.generic_string());
  files.push_back("report.json");
  body_["files"] = files;

  RunResult r;
  r.body = body_;
  r.body_sha256 = sha256_hex(body_.dump());
  for (const auto& [k, v] : timings_) r.timings[k] = v;
  r.convergence_warnings = convergence_;
  r.files = files_;
  r.files.emplace_back("report.json");
  write_report(r, out_);
  return r;
}

// One normalized feature block per source, covering every dataset row.
struct Sources {
  std::vector<FeatureMatrix> blocks;
  std::optional<renet::BrainReNetModel> renet_model;
  Matrix renet_probs;
};

Sources build_sources(Run& run, const data::Dataset& ds, const data::Split& split,
                      std::uint64_t seed, const std::string& model_prefix, json& info) {
  const ExperimentConfig& cfg = run.cfg();
  Sources out;
  for (const std::string& src : cfg.sources) {
    if (src == "renet") {
      renet::BrainReNetConfig rc = cfg.renet;
      rc.input_height = cfg.image_size;
      rc.input_width = cfg.image_size;
      rc.num_classes = ds.num_classes();
      const renet::TrainResult tr = run.timed(model_prefix + "renet_train", [&] {
        return renet::train(renet::build_model(rc, derive_seed(seed, 10)),
                            data::subset(ds, split.train), data::subset(ds, split.validation),
                            cfg.train, derive_seed(seed, 11));
      });
      info["renet"] = {{"parameter_count", tr.model.parameter_count()},
                       {"selected_epoch", tr.history.selected_epoch},
                       {"train_loss", tr.history.train_loss},
                       {"train_accuracy", tr.history.train_accuracy},
                       {"val_loss", tr.history.val_loss},
                       {"val_accuracy", tr.history.val_accuracy}};
      run.save_bytes(fs::path("models") / (model_prefix + "renet.brnr"), renet::encode_model(tr.model));
      out.blocks.push_back(run.timed(model_prefix + "renet_extract",
                                     [&] { return renet::extract_deep_features(tr.model, ds); }));
      out.renet_probs = renet::predict_proba(tr.model, ds);
      out.renet_model = tr.model;
    } else {
      out.blocks.push_back(run.timed(model_prefix + "hog", [&] { return hog::hog_features(ds, cfg.hog); }));
    }
  }
  return out;
}

void normalize_blocks(std::vector<FeatureMatrix>& blocks, std::span<const std::size_t> train_rows,
                      bool enabled) {
  if (!enabled) return;
  for (auto& b : blocks) {
    const auto stats = fusion::fit_normalizer(b.select_rows(train_rows));
    b = fusion::apply_normalizer(stats, b);
  }
}

struct Space {
  std::string name;
  FeatureMatrix features;
};

std::vector<Space> make_spaces(const std::vector<FeatureMatrix>& blocks, const std::string& fused_name) {
  std::vector<Space> spaces;
  for (const auto& b : blocks) spaces.push_back({b.source_tag, b});
  if (blocks.size() > 1) {
    FeatureMatrix fused = fusion::concat_features(blocks);
    fused.source_tag = fused_name;
    spaces.push_back({fused_name, std::move(fused)});
  }
  return spaces;
}

std::vector<int> pick(std::span<const int> v, std::span<const std::size_t> rows) {
  std::vector<int> out;
  for (std::size_t r : rows) out.push_back(v[r]);
  return out;
}

void note_svm(Run& run, const clf::OvrSvmModel& m, const std::string& where) {
  for (std::size_t c = 0; c < m.machines.size(); ++c) {
    if (!m.machines[c].converged) {
      run.warn_convergence("svm (" + where + ", machine " + std::to_string(c) +
                           ") hit its iteration cap with KKT gap " +
                           std::to_string(m.machines[c].violation));
    }
  }
}

void scatter(Run& run, const std::string& space, const FeatureMatrix& test_rows, json& out) {
  if (!run.cfg().scatter) return;
  if (test_rows.n() < 3 || test_rows.dim() < 2) return;
  try {
    const auto pca = fusion::pca_top_k(test_rows, 2);
    const std::string stem = "scatter_" + file_safe(space);
    fusion::write_scatter(pca, test_rows.labels, run.path(stem + ".csv"), run.path(stem + ".json"),
                          {{"space", space}, {"rows", test_rows.n()}, {"dim", test_rows.dim()}});
    run.add_file(stem + ".csv");
    run.add_file(stem + ".json");
    out[space] = {{"explained_variance", pca.explained_variance}, {"total_variance", pca.total_variance}};
  } catch (const ConvergenceError& e) {
    out[space] = {{"error", e.what()}};
  }
}

FeatureMatrix raw_pixels(const data::Dataset& ds, std::span<const std::size_t> rows) {
  const std::size_t d = ds.images.at(0).pixels.size();
  FeatureMatrix fm{Matrix(rows.size(), d), {}, "raw"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& px = ds.images[rows[i]].pixels;
    std::copy(px.begin(), px.end(), fm.values.row(i).begin());
    fm.labels.push_back(ds.labels[rows[i]]);
  }
  return fm;
}

json split_json(const data::Split& split) {
  return {{"train", split.train.size()},
          {"validation", split.validation.size()},
          {"test", split.test.size()},
          {"warnings", split.warnings}};
}

json dataset_json(std::span<const int> labels, const std::vector<std::string>& names) {
  std::vector<std::size_t> counts(names.size(), 0);
  for (int l : labels) ++counts.at(static_cast<std::size_t>(l));
  return {{"rows", labels.size()}, {"classes", names}, {"class_counts", counts}};
}

json reference_context(Phase phase) {
  json ref = {{"note",
               "published results on clinical MRI corpora with pretrained extractors; shown for "
               "context only, not reproducible on synthetic data, never asserted"}};
  if (phase == Phase::detect) {
    ref["ensemble"] = {{"acc", 0.9956}, {"rec", 0.9899}, {"pre", 0.9991}, {"f1", 0.9945}, {"mcc", 0.9892}};
  } else {
    ref["hybrid_fusion_svm"] = {{"acc", 0.9920}, {"rec", 0.9906}, {"pre", 0.9913}, {"f1", 0.9909}};
  }
  return ref;
}

json common_notes(const ExperimentConfig& cfg) {
  json notes = json::array();
  notes.push_back(cfg.normalize
                      ? "each feature source is z-scored with statistics from training-portion rows"
                      : "feature normalization disabled");
  notes.push_back("classifiers train on the training portion (train + validation rows); "
                  "validation rows also select the CNN epoch");
  notes.push_back("CNN weight decay is " + std::to_string(cfg.train.weight_decay) +
                  " (train.weight_decay)");
  notes.push_back("augmentation shear range is the asymmetric [-0.5, 0.05] unless overridden "
                  "through train.augment_spec.shear");
  notes.push_back(std::string("metric mode: ") + metrics::mode_name(cfg.metric_mode));
  return notes;
}

struct DetectOutcome {
  std::vector<int> test_pred;  // ensemble labels for split.test rows
};

// Binary detection over `blocks`; members train on the training portion.
DetectOutcome detect_stage(Run& run, const std::vector<FeatureMatrix>& blocks,
                           std::span<const int> labels, const data::Split& split,
                           std::uint64_t seed, const std::string& prefix, bool emit_members) {
  const ExperimentConfig& cfg = run.cfg();
  const std::vector<std::size_t> train_rows = split.training_portion();
  const std::vector<int> y_train = pick(labels, train_rows);
  const std::vector<int> y_test = pick(labels, split.test);
  const std::vector<Space> spaces = make_spaces(blocks, "dbfs");
  DetectOutcome outcome;
  for (std::size_t s = 0; s < spaces.size(); ++s) {
    const Space& sp = spaces[s];
    const Matrix X_train = sp.features.values.select_rows(train_rows);
    const Matrix X_test = sp.features.values.select_rows(split.test);
    const bool ensemble_space = s + 1 == spaces.size();
    if (!emit_members && !ensemble_space) continue;

    clf::EnsembleModel ens;
    run.timed(prefix + sp.name + "_classifiers", [&] {
      ens.members.emplace_back(clf::one_vs_rest(X_train, y_train, 2, cfg.svm));
      ens.members.emplace_back(clf::mlp_train(X_train, y_train, 2, cfg.mlp, derive_seed(seed, 100 + s)));
      ens.members.emplace_back(clf::adaboost_m1_train(X_train, clf::to_signed(y_train), cfg.adaboost));
    });
    note_svm(run, std::get<clf::OvrSvmModel>(ens.members[0]), prefix + sp.name);
    const clf::EnsemblePrediction ep = clf::ensemble_predict(ens, X_test);
    for (std::size_t m = 0; m < ens.members.size(); ++m) {
      const std::string clf_name = clf::classifier_name(ens.members[m]);
      run.save_bytes(fs::path("models") / (prefix + sp.name + "_" + clf_name + ".clsf"),
                     clf::encode_classifier(ens.members[m]));
      if (emit_members) {
        run.add_method(prefix + sp.name + "/" + clf_name, sp.name, clf_name, y_test,
                       ep.members[m].labels, ep.members[m].scores, 2);
      }
    }
    if (ensemble_space) {
      run.save_bytes(fs::path("models") / (prefix + "ensemble.clsf"), clf::encode_ensemble(ens));
      const std::string name = prefix + (sp.name == "dbfs" ? "dbfs-ec" : sp.name + "-ec");
      run.add_method(name, sp.name, "ensemble", y_test, ep.vote.labels,
                     Matrix(y_test.size(), 1, ep.vote.scores), 2, emit_members);
      outcome.test_pred = ep.vote.labels;
    }
  }
  return outcome;
}

RunResult run_detect(const ExperimentConfig& cfg, const fs::path& out) {
  Run run(cfg, out);
  json& body = run.body();
  data::Dataset ds;
  std::vector<FeatureMatrix> blocks;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  if (cfg.data.is_features()) {
    for (const auto& f : cfg.data.feature_files) blocks.push_back(data::read_feature_file(f));
    fusion::concat_features(blocks);  // alignment check up front
    labels = blocks[0].labels;
    class_names = {"class0", "class1"};
  } else {
    ds = run.timed("load", [&] { return load_dataset(cfg.data, cfg.image_size, cfg.seed); });
    labels = ds.labels;
    class_names = ds.class_names;
  }
  for (int l : labels) {
    if (l != 0 && l != 1) {
      throw LabelError("detect needs binary labels {0, 1}, found " + std::to_string(l));
    }
  }
  const data::Split split =
      data::stratified_split(labels, cfg.train_fraction, derive_seed(cfg.seed, 3), cfg.validation_fraction);
  if (split.test.empty()) throw DataError("detect needs a non-empty test split (train_fraction < 1)");
  const std::vector<std::size_t> train_rows = split.training_portion();

  body["library"] = {{"name", "hybridboost"}, {"version", HYBRIDBOOST_VERSION}};
  body["phase"] = "detect";
  body["config"] = config_to_json(cfg);
  body["dataset"] = dataset_json(labels, class_names);
  body["split"] = split_json(split);

  std::optional<Sources> sources;
  if (!cfg.data.is_features()) {
    json info = json::object();
    sources = build_sources(run, ds, split, cfg.seed, "", info);
    blocks = sources->blocks;
    body["sources"] = info;
  }
  normalize_blocks(blocks, train_rows, cfg.normalize);
  json spaces = json::array();
  for (const auto& b : blocks) spaces.push_back({{"name", b.source_tag}, {"dim", b.dim()}});
  if (blocks.size() > 1) {
    std::size_t dim = 0;
    for (const auto& b : blocks) dim += b.dim();
    spaces.push_back({{"name", "dbfs"}, {"dim", dim}});
  }
  body["spaces"] = spaces;

  detect_stage(run, blocks, labels, split, cfg.seed, "", true);
  if (sources && sources->renet_model) {
    const std::vector<int> y_test = pick(labels, split.test);
    const Matrix probs = sources->renet_probs.select_rows(split.test);
    std::vector<int> pred;
    for (std::size_t r = 0; r < probs.rows(); ++r) pred.push_back(probs(r, 1) > probs(r, 0) ? 1 : 0);
    run.add_method("renet-softmax", "renet", "softmax", y_test, pred, probs, 2);
  }

  json scatter_info = json::object();
  run.timed("scatter", [&] {
    if (!cfg.data.is_features()) scatter(run, "raw", raw_pixels(ds, split.test), scatter_info);
    for (const auto& sp : make_spaces(blocks, "dbfs")) {
      scatter(run, sp.name, sp.features.select_rows(split.test), scatter_info);
    }
  });
  body["scatter"] = scatter_info;

  body["notes"] = common_notes(cfg);
  body["reference_context"] = reference_context(Phase::detect);
  return run.finish();
}

// Hybrid fusion classification of `ds` over `split`.
void classify_stage(Run& run, const data::Dataset& ds, const data::Split& split,
                    std::uint64_t seed, const std::string& prefix) {
  const ExperimentConfig& cfg = run.cfg();
  json& body = run.body();
  const std::vector<std::size_t> train_rows = split.training_portion();
  json info = json::object();
  Sources src = build_sources(run, ds, split, seed, prefix, info);
  normalize_blocks(src.blocks, train_rows, cfg.normalize);
  body[prefix + "sources"] = info;

  const std::vector<int> y_train = pick(ds.labels, train_rows);
  const std::vector<int> y_test = pick(ds.labels, split.test);
  const std::vector<Space> spaces = make_spaces(src.blocks, "hff");
  json space_json = json::array();
  // Fused row first in reports, then the single-source ablations.
  std::vector<std::size_t> order(spaces.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::rotate(order.begin(), order.end() - 1, order.end());
  for (std::size_t s : order) {
    const Space& sp = spaces[s];
    space_json.push_back({{"name", sp.name}, {"dim", sp.features.dim()}});
    const Matrix X_train = sp.features.values.select_rows(train_rows);
    const Matrix X_test = sp.features.values.select_rows(split.test);
    const clf::OvrSvmModel svm = run.timed(prefix + sp.name + "_svm", [&] {
      return clf::one_vs_rest(X_train, y_train, ds.num_classes(), cfg.svm);
    });
    note_svm(run, svm, prefix + sp.name);
    run.save_bytes(fs::path("models") / (prefix + sp.name + "_svm.clsf"), clf::encode_classifier(svm));
    const clf::Prediction p = clf::classifier_predict(svm, X_test);
    run.add_method(prefix + sp.name + "/svm", sp.name, "svm", y_test, p.labels, p.scores,
                   ds.num_classes(), true);
  }
  body[prefix + "spaces"] = space_json;
  if (src.renet_model) {
    const Matrix probs = src.renet_probs.select_rows(split.test);
    std::vector<int> pred;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      const auto row = probs.row(r);
      pred.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
    run.add_method(prefix + "renet-softmax", "renet", "softmax", y_test, pred, probs, ds.num_classes());
  }
  json scatter_info = json::object();
  run.timed(prefix + "scatter", [&] {
    scatter(run, prefix + "raw", raw_pixels(ds, split.test), scatter_info);
    for (const auto& sp : spaces) scatter(run, prefix + sp.name, sp.features.select_rows(split.test), scatter_info);
  });
  body[prefix + "scatter"] = scatter_info;
}

RunResult run_classify(const ExperimentConfig& cfg, const fs::path& out) {
  Run run(cfg, out);
  json& body = run.body();
  const data::Dataset ds = run.timed("load", [&] { return load_dataset(cfg.data, cfg.image_size, cfg.seed); });
  body["library"] = {{"name", "hybridboost"}, {"version", HYBRIDBOOST_VERSION}};
  body["phase"] = "classify";
  body["config"] = config_to_json(cfg);
  body["dataset"] = dataset_json(ds.labels, ds.class_names);
  if (ds.num_classes() < 2) throw DegenerateError("classify needs at least two classes");
  const data::Split split =
      data::stratified_split(ds.labels, cfg.train_fraction, derive_seed(cfg.seed, 3), cfg.validation_fraction);
  if (split.test.empty()) throw DataError("classify needs a non-empty test split (train_fraction < 1)");
  body["split"] = split_json(split);

  if (!cfg.chained) {
    body["mode"] = "ground_truth";
    classify_stage(run, ds, split, cfg.seed, "");
  } else {
    body["mode"] = "chained";
    const auto normal_it = std::find(ds.class_names.begin(), ds.class_names.end(), "normal");
    if (normal_it == ds.class_names.end()) {
      throw DataError("chained mode needs a class named 'normal' to screen out");
    }
    const int normal = static_cast<int>(normal_it - ds.class_names.begin());

    // Screening stage on binary labels (normal = 0, lesion = 1).
    data::Dataset screen = ds;
    for (int& l : screen.labels) l = l == normal ? 0 : 1;
    screen.class_names = {"normal", "lesion"};
    json info = json::object();
    Sources ssrc = build_sources(run, screen, split, derive_seed(cfg.seed, 20), "screen_", info);
    normalize_blocks(ssrc.blocks, split.training_portion(), cfg.normalize);
    body["screen_sources"] = info;
    const DetectOutcome det =
        detect_stage(run, ssrc.blocks, screen.labels, split, derive_seed(cfg.seed, 21), "screen_", false);

    // Classification stage sees lesion rows only.
    std::vector<std::size_t> keep;
    std::vector<int> remap(ds.num_classes(), -1);
    data::Dataset lesions;
    for (std::size_t c = 0, next = 0; c < ds.num_classes(); ++c) {
      if (static_cast<int>(c) == normal) continue;
      remap[c] = static_cast<int>(next++);
      lesions.class_names.push_back(ds.class_names[c]);
    }
    std::vector<long> new_index(ds.size(), -1);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] == normal) continue;
      new_index[i] = static_cast<long>(lesions.images.size());
      lesions.images.push_back(ds.images[i]);
      lesions.labels.push_back(remap[static_cast<std::size_t>(ds.labels[i])]);
    }
    data::Split sub;
    for (std::size_t i : split.train) {
      if (new_index[i] >= 0) sub.train.push_back(static_cast<std::size_t>(new_index[i]));
    }
    for (std::size_t i : split.validation) {
      if (new_index[i] >= 0) sub.validation.push_back(static_cast<std::size_t>(new_index[i]));
    }
    std::size_t leaked_normals = 0, missed_lesions = 0;
    for (std::size_t k = 0; k < split.test.size(); ++k) {
      const std::size_t i = split.test[k];
      const bool flagged = det.test_pred[k] == 1;
      if (new_index[i] < 0) {
        leaked_normals += flagged;
      } else if (flagged) {
        sub.test.push_back(static_cast<std::size_t>(new_index[i]));
      } else {
        ++missed_lesions;
      }
    }
    body["chain"] = {{"flagged_lesions_classified", sub.test.size()},
                     {"normals_flagged_as_lesion", leaked_normals},
                     {"lesions_screened_out", missed_lesions}};
    if (sub.test.empty()) throw DataError("screening flagged no lesion test rows to classify");
    classify_stage(run, lesions, sub, cfg.seed, "");
  }
  body["notes"] = common_notes(cfg);
  body["reference_context"] = reference_context(Phase::classify);
  return run.finish();
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  return config.phase == Phase::detect ? run_detect(config, out_dir) : run_classify(config, out_dir);
}

}  // namespace hybridboost::pipeline
