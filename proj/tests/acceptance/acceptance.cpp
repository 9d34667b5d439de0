// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Pass criterion numbers as arguments to run a
// subset, e.g. `acceptance 1 4`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "hybridboost/augment.hpp"
#include "hybridboost/brain_renet.hpp"
#include "hybridboost/classifiers.hpp"
#include "hybridboost/dataset.hpp"
#include "hybridboost/feature_io.hpp"
#include "hybridboost/grad_check.hpp"
#include "hybridboost/hog.hpp"
#include "hybridboost/metrics.hpp"
#include "hybridboost/pipeline.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hybridboost;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); }

// ---- 1 ----------------------------------------------------------------------

nn::LayerProbe random_probe(nn::LayerKind kind, Rng& rng) {
  using namespace nn;
  LayerProbe p;
  p.kind = kind;
  const std::size_t n = pick(rng, 1, 3), c = pick(rng, 1, 3);
  const std::size_t h = pick(rng, 4, 9), w = pick(rng, 4, 9);
  switch (kind) {
    case LayerKind::conv2d:
      p.input_shape = rng() % 2 ? Shape{n, c, h, w} : Shape{c, h, w};
      p.out_channels = pick(rng, 1, 3);
      p.conv.kernel_height = pick(rng, 1, 3);
      p.conv.kernel_width = pick(rng, 1, 3);
      if (rng() % 2) {
        p.conv.padding = Padding::same;
      } else {
        p.conv.stride = pick(rng, 1, 2);
      }
      break;
    case LayerKind::avg_pool:
    case LayerKind::max_pool:
      p.input_shape = Shape{n, c, h, w};
      p.pool.window = pick(rng, 2, 3);
      p.pool.stride = rng() % 2 ? 0 : 1;
      break;
    case LayerKind::dense:
      p.input_shape = Shape{n, pick(rng, 1, 6)};
      p.out_channels = pick(rng, 1, 5);
      break;
    case LayerKind::relu:
      p.input_shape = Shape{n, c, h, w};
      break;
    case LayerKind::batch_norm:
      // at least four entries per channel; with two the normalized output is
      // ±1 whatever the input and the input gradient is pure rounding noise
      p.input_shape = rng() % 2 ? Shape{pick(rng, 2, 4), c, h, w} : Shape{pick(rng, 4, 8), c};
      break;
    case LayerKind::softmax_cross_entropy:
      p.input_shape = Shape{n + 1};
      p.out_channels = pick(rng, 2, 6);
      break;
  }
  return p;
}

Outcome criterion1() {
  Timer t;
  Outcome o;
  Rng rng(2024);
  const nn::LayerKind kinds[] = {nn::LayerKind::conv2d,     nn::LayerKind::dense,
                                 nn::LayerKind::relu,       nn::LayerKind::batch_norm,
                                 nn::LayerKind::max_pool,   nn::LayerKind::avg_pool,
                                 nn::LayerKind::softmax_cross_entropy};
  std::ostringstream detail;
  for (nn::LayerKind kind : kinds) {
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
      const nn::LayerProbe probe = random_probe(kind, rng);
      worst = std::max(worst, nn::grad_check_layer(probe, rng()));
    }
    o.pass &= worst <= 1e-4;
    detail << nn::layer_name(kind) << " " << fmt("%.1e", worst) << ", ";
  }
  double toy = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) toy = std::max(toy, support::toy_network_grad_error(seed));
  o.pass &= toy <= 1e-4;
  const double secs = t.seconds();
  o.pass &= secs < 60.0;
  detail << "toy net " << fmt("%.1e", toy) << ", " << fmt("%.1f s", secs);
  o.detail = detail.str();
  return o;
}

// ---- 2 ----------------------------------------------------------------------

Outcome criterion2() {
  Outcome o;
  Rng rng(7);
  double worst_std = 0.0, worst_lit = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = pick(rng, 1, 200);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % 2);
      pred[i] = static_cast<int>(rng() % 2);
    }
    const auto counts = metrics::confusion_counts(truth, pred);
    const auto ref = oracle::recount(truth, pred);
    for (int lit = 0; lit < 2; ++lit) {
      const auto r = metrics::binary_metrics(
          counts, lit ? metrics::MetricMode::paper_literal : metrics::MetricMode::standard);
      const auto want = lit ? oracle::literal_metrics(ref) : oracle::standard_metrics(ref);
      const double got[] = {r.accuracy, r.recall, r.precision, r.f1, r.mcc};
      double& worst = lit ? worst_lit : worst_std;
      for (int k = 0; k < 5; ++k) worst = std::max(worst, std::abs(got[k] - want[k]));
    }
  }
  const auto hand = metrics::binary_metrics({50, 40, 5, 5});
  o.pass = worst_std <= 1e-12 && worst_lit <= 1e-12 && hand.accuracy == 0.9;
  o.detail = "standard max diff " + fmt("%.1e", worst_std) + ", literal max diff " +
             fmt("%.1e", worst_lit) + ", hand-case accuracy " + fmt("%.17g", hand.accuracy);
  return o;
}

// ---- 3 ----------------------------------------------------------------------

Outcome criterion3() {
  Outcome o;
  Rng rng(31);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = pick(rng, 2, 200);
    const std::size_t levels = pick(rng, 1, 2 * n);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % levels) / static_cast<double>(levels);
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    const double auc = metrics::ranking_curve(s, y, metrics::CurveKind::roc).auc;
    worst = std::max(worst, std::abs(auc - oracle::mann_whitney(s, y)));
  }
  const std::vector<int> y{0, 1, 0, 1, 1, 0};
  const double perfect =
      metrics::ranking_curve(std::vector<double>{0.1, 0.9, 0.2, 0.8, 0.7, 0.3}, y, metrics::CurveKind::roc).auc;
  const double constant =
      metrics::ranking_curve(std::vector<double>(6, 0.4), y, metrics::CurveKind::roc).auc;
  o.pass = worst <= 1e-12 && perfect == 1.0 && constant == 0.5;
  o.detail = "max |auc - mann-whitney| " + fmt("%.1e", worst) + ", perfect " + fmt("%g", perfect) +
             ", constant " + fmt("%g", constant);
  return o;
}

// ---- 4 ----------------------------------------------------------------------

Outcome criterion4() {
  Outcome o;
  const hog::HogConfig cfg;
  Rng rng(44);
  double worst = 0.0;
  bool shift_exact = true;
  for (int i = 0; i < 50; ++i) {
    data::GrayImage img(64, 64);
    for (double& p : img.pixels) p = uniform01(rng);
    const auto fast = hog::hog_descriptor(img, cfg).values;
    const auto slow = oracle::naive_hog(img, cfg.cell_size, cfg.block_cells, cfg.bins, cfg.l2hys_clip);
    if (fast.size() != slow.size()) return {false, "length mismatch against the reference"};
    for (std::size_t k = 0; k < fast.size(); ++k) worst = std::max(worst, std::abs(fast[k] - slow[k]));

    // dyadic intensities keep the shifted arithmetic exact
    data::GrayImage q = img;
    for (double& p : q.pixels) p = std::floor(p * 256.0) / 512.0;
    data::GrayImage shifted = q;
    const double c = static_cast<double>(pick(rng, 1, 255)) / 512.0;
    for (double& p : shifted.pixels) p += c;
    shift_exact &= hog::hog_descriptor(q, cfg).values == hog::hog_descriptor(shifted, cfg).values;
  }
  const std::size_t length = hog::hog_descriptor(data::GrayImage(64, 64, 0.3), cfg).values.size();
  bool zero = true;
  for (double v : hog::hog_descriptor(data::GrayImage(64, 64, 0.3), cfg).values) zero &= v == 0.0;
  o.pass = worst <= 1e-6 && length == 1764 && zero && shift_exact;
  o.detail = "max diff " + fmt("%.1e", worst) + ", length " + std::to_string(length) +
             (zero ? ", constant -> zeros" : ", constant -> NONZERO") +
             (shift_exact ? ", shift exact" : ", shift NOT exact");
  return o;
}

// ---- 5 ----------------------------------------------------------------------

Outcome criterion5() {
  Timer t;
  Outcome o;
  Matrix X;
  std::vector<int> y;
  oracle::separable_blobs(200, 5, X, y);
  clf::SvmConfig lin;
  lin.tol = 1e-3;
  const auto r = clf::svm_train_binary(X, y, lin);
  const auto f = clf::svm_decision(r.model, X);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += (f[i] >= 0 ? 1 : -1) == y[i];
  const double kkt = clf::svm_kkt_violation(r.model, X, y, r.alphas);
  bool box = true;
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    box &= r.alphas[i] >= 0.0 && r.alphas[i] <= lin.C;
    sum += r.alphas[i] * y[i];
  }

  Matrix xor_x(4, 2, std::vector<double>{-1, -1, -1, 1, 1, -1, 1, 1});
  const std::vector<int> xor_y{1, -1, -1, 1};
  clf::SvmConfig poly;
  poly.kernel.kind = clf::KernelKind::polynomial;
  poly.kernel.degree = 2;
  const auto px = clf::svm_train_binary(xor_x, xor_y, poly);
  const auto fx = clf::svm_decision(px.model, xor_x);
  std::size_t xor_correct = 0;
  for (std::size_t i = 0; i < 4; ++i) xor_correct += (fx[i] >= 0 ? 1 : -1) == xor_y[i];
  double xor_sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    box &= px.alphas[i] >= 0.0 && px.alphas[i] <= poly.C;
    xor_sum += px.alphas[i] * xor_y[i];
  }

  const double secs = t.seconds();
  o.pass = correct == 200 && kkt <= 1e-3 && xor_correct == 4 && box && std::abs(sum) <= 1e-6 &&
           std::abs(xor_sum) <= 1e-6 && secs < 30.0;
  o.detail = "blobs " + std::to_string(correct) + "/200, kkt " + fmt("%.1e", kkt) + ", xor " +
             std::to_string(xor_correct) + "/4, box " + (box ? "ok" : "VIOLATED") + ", |sum a y| " +
             fmt("%.1e", std::max(std::abs(sum), std::abs(xor_sum))) + ", " + fmt("%.2f s", secs);
  return o;
}

// ---- 6, 7, 8 ----------------------------------------------------------------

fs::path g_run_root;

double method_accuracy(const nlohmann::json& body, const std::string& name) {
  for (const auto& m : body["methods"]) {
    if (m["name"] == name) {
      const auto& metrics = m["metrics"];
      return metrics.contains("macro") ? metrics["macro"]["accuracy"].get<double>()
                                       : metrics["accuracy"].get<double>();
    }
  }
  return -1.0;
}

struct BenchRun {
  pipeline::RunResult result;
  double seconds = 0.0;
  fs::path dir;
};

BenchRun run_bench(pipeline::Phase phase, const std::string& kind, std::size_t per_class,
                   const std::string& tag) {
  nlohmann::json j = {{"seed", 42}, {"data", {{"synth", {{"kind", kind}, {"n_per_class", per_class}}}}}};
  const auto cfg = pipeline::parse_config(j, phase, std::nullopt);
  BenchRun b;
  b.dir = g_run_root / tag;
  fs::remove_all(b.dir);
  Timer t;
  b.result = pipeline::run_experiment(cfg, b.dir);
  pipeline::write_report(b.result, b.dir);
  b.seconds = t.seconds();
  return b;
}

std::optional<BenchRun> g_classify, g_detect;

Outcome criterion6() {
  g_classify = run_bench(pipeline::Phase::classify, "classify3", 200, "classify3_a");
  const auto& body = g_classify->result.body;
  const double fused = method_accuracy(body, "hff/svm");
  const double deep = method_accuracy(body, "renet/svm");
  const double hog = method_accuracy(body, "hog/svm");
  Outcome o;
  o.pass = fused >= 0.90 && fused >= std::max(deep, hog) - 0.01 && g_classify->seconds < 600.0;
  o.detail = "fused " + fmt("%.4f", fused) + ", deep-only " + fmt("%.4f", deep) + ", hog-only " +
             fmt("%.4f", hog) + ", " + fmt("%.0f s", g_classify->seconds);
  return o;
}

Outcome criterion7() {
  g_detect = run_bench(pipeline::Phase::detect, "detect2", 300, "detect2_a");
  const auto& body = g_detect->result.body;
  const double ensemble = method_accuracy(body, "dbfs-ec");
  Outcome o;
  o.pass = ensemble >= 0.0;
  std::ostringstream members;
  bool has_single = false, has_concat = false;
  double best = 0.0;
  for (const auto& m : body["methods"]) {
    const std::string name = m["name"];
    if (name == "dbfs-ec" || m["classifier"] == "softmax") continue;
    const double acc = method_accuracy(body, name);
    o.pass &= ensemble >= acc - 0.01;
    best = std::max(best, acc);
    (m["space"] == "dbfs" ? has_concat : has_single) = true;
  }
  o.pass &= has_single && has_concat && g_detect->seconds < 600.0;
  o.detail = "dbfs-ec " + fmt("%.4f", ensemble) + ", best member " + fmt("%.4f", best) +
             (has_concat && has_single ? ", single and concatenated spaces reported" : ", spaces MISSING") +
             ", " + fmt("%.0f s", g_detect->seconds);
  return o;
}

bool same_models(const fs::path& a, const fs::path& b, std::size_t& count) {
  bool same = true;
  for (const auto& e : fs::directory_iterator(a / "models")) {
    const fs::path other = b / "models" / e.path().filename();
    same &= fs::exists(other) && support::read_bytes(e.path()) == support::read_bytes(other);
    ++count;
  }
  for (const auto& e : fs::directory_iterator(b / "models")) same &= fs::exists(a / "models" / e.path().filename());
  return same;
}

Outcome criterion8() {
  if (!g_classify) g_classify = run_bench(pipeline::Phase::classify, "classify3", 200, "classify3_a");
  if (!g_detect) g_detect = run_bench(pipeline::Phase::detect, "detect2", 300, "detect2_a");
  const BenchRun c2 = run_bench(pipeline::Phase::classify, "classify3", 200, "classify3_b");
  const BenchRun d2 = run_bench(pipeline::Phase::detect, "detect2", 300, "detect2_b");
  std::size_t models = 0;
  const bool body_c = c2.result.body_sha256 == g_classify->result.body_sha256 &&
                      c2.result.body.dump() == g_classify->result.body.dump();
  const bool body_d = d2.result.body_sha256 == g_detect->result.body_sha256 &&
                      d2.result.body.dump() == g_detect->result.body.dump();
  const bool models_c = same_models(g_classify->dir, c2.dir, models);
  const bool models_d = same_models(g_detect->dir, d2.dir, models);
  Outcome o;
  o.pass = body_c && body_d && models_c && models_d;
  o.detail = std::string("classify body ") + (body_c ? "identical" : "DIFFERS") + ", detect body " +
             (body_d ? "identical" : "DIFFERS") + ", " + std::to_string(models) + " model files " +
             (models_c && models_d ? "identical" : "DIFFER");
  return o;
}

// ---- 9 ----------------------------------------------------------------------

Outcome criterion9() {
  Outcome o;
  Rng rng(99);
  bool splits_ok = true;
  for (int pair = 0; pair < 100; ++pair) {
    const std::size_t classes = pick(rng, 2, 5);
    std::vector<int> labels;
    std::vector<std::size_t> per_class(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      per_class[c] = pick(rng, 3, 120);
      labels.insert(labels.end(), per_class[c], static_cast<int>(c));
    }
    std::shuffle(labels.begin(), labels.end(), rng);
    const double fraction = 0.5 + 0.4 * uniform01(rng);
    const data::Split s = data::stratified_split(labels, fraction, rng());
    std::vector<int> seen(labels.size(), 0);
    std::vector<double> portion(classes, 0.0);
    for (std::size_t i : s.train) ++seen[i], portion[labels[i]] += 1;
    for (std::size_t i : s.validation) ++seen[i], portion[labels[i]] += 1;
    for (std::size_t i : s.test) ++seen[i];
    for (int v : seen) splits_ok &= v == 1;
    for (std::size_t c = 0; c < classes; ++c) {
      splits_ok &= std::abs(portion[c] - fraction * static_cast<double>(per_class[c])) <= 1.0;
    }
  }

  bool identity = true, reflect = true;
  const data::AugmentSpec zero_rotation{0.0, 0.0, 0.0, 0.0, 1.0, 1.0, false};
  for (int i = 0; i < 10; ++i) {
    data::GrayImage img(32 + i, 24 + 2 * i);
    for (double& p : img.pixels) p = uniform01(rng);
    const data::GrayImage same = data::augment(img, zero_rotation, rng);
    for (std::size_t k = 0; k < img.pixels.size(); ++k) identity &= std::abs(same.pixels[k] - img.pixels[k]) <= 1e-12;
    data::AffineParams mirror;
    mirror.reflect = true;
    reflect &= data::apply_affine(data::apply_affine(img, mirror), mirror) == img;
  }

  FeatureMatrix f;
  f.values = Matrix(17, 9);
  for (double& v : f.values.data()) v = static_cast<float>(standard_normal(rng));
  for (std::size_t i = 0; i < 17; ++i) f.labels.push_back(static_cast<int>(i % 3) - 1);
  const fs::path dir = g_run_root / "roundtrip";
  fs::create_directories(dir);
  data::write_feature_file(f, dir / "f.dbfs");
  const FeatureMatrix back = data::read_feature_file(dir / "f.dbfs");
  data::write_feature_file(back, dir / "g.dbfs");
  const bool features = back.values == f.values && back.labels == f.labels &&
                        support::read_bytes(dir / "f.dbfs") == support::read_bytes(dir / "g.dbfs");

  renet::BrainReNetConfig rc;
  rc.num_classes = 3;
  const renet::BrainReNetModel m = renet::build_model(rc, 12);
  renet::save_model(m, dir / "a.brnr");
  const renet::BrainReNetModel loaded = renet::load_model(dir / "a.brnr");
  renet::save_model(loaded, dir / "b.brnr");
  Matrix X;
  std::vector<int> y;
  oracle::separable_blobs(30, 3, X, y);
  std::vector<int> y01;
  for (int v : y) y01.push_back(v > 0);
  clf::MlpConfig mc;
  mc.epochs = 3;
  const auto ens = clf::ensemble_train(X, y01, {}, mc, {5}, 4);
  const auto ens_bytes = clf::encode_ensemble(ens);
  const bool models = support::read_bytes(dir / "a.brnr") == support::read_bytes(dir / "b.brnr") &&
                      clf::encode_ensemble(clf::decode_ensemble(ens_bytes, "mem")) == ens_bytes;

  o.pass = splits_ok && identity && reflect && features && models;
  o.detail = std::string("splits ") + (splits_ok ? "ok" : "BAD") + ", rotation-0 identity " +
             (identity ? "ok" : "BAD") + ", double reflection " + (reflect ? "exact" : "INEXACT") +
             ", feature file " + (features ? "bit-exact" : "DIFFERS") + ", model files " +
             (models ? "bit-exact" : "DIFFER");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  g_run_root = fs::current_path() / "acceptance_runs";
  fs::create_directories(g_run_root);

  const std::function<Outcome()> criteria[] = {criterion1, criterion2, criterion3,
                                               criterion4, criterion5, criterion6,
                                               criterion7, criterion8, criterion9};
  bool all = true;
  for (int k = 1; k <= 9; ++k) {
    if (!wanted.empty() && !wanted.count(k)) continue;
    Outcome o;
    try {
      o = criteria[k - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all &= o.pass;
    std::printf("criterion %d: %s  (%s)\n", k, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
