#include "hybridboost/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"
#include "hybridboost/rng.hpp"

namespace hybridboost::data {

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (int l : labels) {
    if (l >= 0 && static_cast<std::size_t>(l) < counts.size()) ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

void Dataset::validate() const {
  if (images.size() != labels.size()) {
    throw DataError("dataset has " + std::to_string(images.size()) + " images but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes()) {
      throw LabelError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                       " outside [0," + std::to_string(num_classes()) + ")");
    }
  }
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.class_names = dataset.class_names;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(dataset.images.at(i));
    out.labels.push_back(dataset.labels.at(i));
  }
  return out;
}

Dataset resize_all(const Dataset& dataset, std::size_t width, std::size_t height) {
  Dataset out = dataset;
  for (auto& image : out.images) {
    if (image.width != width || image.height != height) image = resize_bilinear(image, width, height);
  }
  return out;
}

std::vector<std::size_t> Split::training_portion() const {
  std::vector<std::size_t> out = train;
  out.insert(out.end(), validation.begin(), validation.end());
  return out;
}

Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed,
                       double validation_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in (0,1], got " + std::to_string(train_fraction));
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in [0,1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.empty()) throw DataError("cannot split an empty dataset");
  for (const auto& [label, members] : by_class) {
    if (members.size() < 3) {
      throw DataError("class " + std::to_string(label) + " has " +
                      std::to_string(members.size()) + " samples; at least 3 are required");
    }
  }
  Split split;
  Rng rng(seed);
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n = static_cast<double>(members.size());
    const auto portion = static_cast<std::size_t>(std::lround(n * train_fraction));
    const auto n_val =
        static_cast<std::size_t>(std::lround(static_cast<double>(portion) * validation_fraction));
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (k < n_val) {
        split.validation.push_back(members[k]);
      } else if (k < portion) {
        split.train.push_back(members[k]);
      } else {
        split.test.push_back(members[k]);
      }
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  if (split.test.empty()) split.warnings.push_back("test partition is empty");
  if (split.validation.empty()) split.warnings.push_back("validation partition is empty");
  return split;
}

namespace {

bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".pgm" || (ext == ".png" && png_supported());
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

Dataset load_image_directory(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw IoError("image directory " + root.string() + " not found");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  Dataset ds;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    const int label = static_cast<int>(ds.class_names.size());
    ds.class_names.push_back(dir.filename().string());
    for (const auto& f : files) {
      ds.images.push_back(load_image(f));
      ds.labels.push_back(label);
    }
  }
  if (ds.images.empty()) throw DataError("no images found under " + root.string());
  return ds;
}

Dataset load_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest " + manifest.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label") {
    throw FormatError(manifest.string() + ": manifest header must be 'path,label'");
  }
  struct Row {
    std::filesystem::path path;
    std::string label;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw FormatError(manifest.string() + ": line " + std::to_string(line_no) +
                        " lacks a label column");
    }
    std::filesystem::path p = trim(line.substr(0, comma));
    if (p.is_relative()) p = manifest.parent_path() / p;
    rows.push_back({p, trim(line.substr(comma + 1))});
  }
  const bool numeric = std::all_of(rows.begin(), rows.end(), [](const Row& r) {
    return !r.label.empty() && std::all_of(r.label.begin(), r.label.end(), ::isdigit);
  });
  Dataset ds;
  if (numeric) {
    int max_label = -1;
    for (const auto& r : rows) max_label = std::max(max_label, std::stoi(r.label));
    for (int c = 0; c <= max_label; ++c) ds.class_names.push_back(std::to_string(c));
  } else {
    std::vector<std::string> names;
    for (const auto& r : rows) names.push_back(r.label);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    ds.class_names = names;
  }
  for (const auto& r : rows) {
    ds.images.push_back(load_image(r.path));
    if (numeric) {
      ds.labels.push_back(std::stoi(r.label));
    } else {
      const auto it = std::find(ds.class_names.begin(), ds.class_names.end(), r.label);
      ds.labels.push_back(static_cast<int>(it - ds.class_names.begin()));
    }
  }
  if (ds.images.empty()) throw DataError("manifest " + manifest.string() + " lists no images");
  return ds;
}

void write_image_directory(const Dataset& dataset, const std::filesystem::path& root) {
  dataset.validate();
  std::ostringstream manifest;
  manifest << "path,label\n";
  std::vector<std::size_t> next(dataset.num_classes(), 0);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto label = static_cast<std::size_t>(dataset.labels[i]);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.pgm", next[label]++);
    const std::filesystem::path rel = std::filesystem::path(dataset.class_names[label]) / name;
    save_pgm(dataset.images[i], root / rel);
    manifest << rel.generic_string() << "," << dataset.class_names[label] << "\n";
  }
  io::write_text(root / "manifest.csv", manifest.str());
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "detect2") return SynthKind::detect2;
  if (name == "classify3") return SynthKind::classify3;
  if (name == "screen4") return SynthKind::screen4;
  throw ConfigError("unknown synthetic dataset kind '" + name +
                    "' (expected detect2, classify3 or screen4)");
}

std::string synth_kind_name(SynthKind kind) {
  switch (kind) {
    case SynthKind::detect2: return "detect2";
    case SynthKind::classify3: return "classify3";
    case SynthKind::screen4: return "screen4";
  }
  return "unknown";
}

namespace {

enum class Lesion { none, ellipse, disk, annulus, bar };

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct Ellipse {
  double cx, cy, a, b, angle;

  // Normalized radial coordinate: 1 on the boundary.
  double radius(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / a;
    const double v = (-s * dx + c * dy) / b;
    return std::sqrt(u * u + v * v);
  }

  // Soft indicator with an edge about 0.7 px wide.
  double mask(double x, double y) const {
    return sigmoid((1.0 - radius(x, y)) * std::min(a, b) / 0.7);
  }
};

void paint_background(GrayImage& img, Rng& rng, Ellipse& brain) {
  const double size = static_cast<double>(img.width);
  brain = {size / 2.0 + uniform(rng, -0.03, 0.03) * size,
           size / 2.0 + uniform(rng, -0.03, 0.03) * size, uniform(rng, 0.36, 0.44) * size,
           uniform(rng, 0.36, 0.44) * size, uniform(rng, 0.0, std::numbers::pi)};
  struct Blob {
    double x, y, amp, sigma;
  };
  std::vector<Blob> blobs(4);
  for (auto& blob : blobs) {
    const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double r = uniform(rng, 0.0, 0.6);
    blob.x = brain.cx + r * brain.a * std::cos(t);
    blob.y = brain.cy + r * brain.b * std::sin(t);
    blob.amp = uniform(rng, 0.04, 0.12);
    blob.sigma = uniform(rng, 0.06, 0.15) * size;
  }
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      const double inside = sigmoid((1.0 - brain.radius(fx, fy)) * 10.0);
      double v = 0.25;
      for (const auto& blob : blobs) {
        const double d2 = (fx - blob.x) * (fx - blob.x) + (fy - blob.y) * (fy - blob.y);
        v += blob.amp * std::exp(-d2 / (2.0 * blob.sigma * blob.sigma));
      }
      img.at(x, y) = v * inside;
    }
  }
}

void paint_lesion(GrayImage& img, Rng& rng, const Ellipse& brain, Lesion kind) {
  if (kind == Lesion::none) return;
  const double size = static_cast<double>(img.width);
  const double t = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double r = uniform(rng, 0.0, 0.2) * size;
  const double cx = brain.cx + r * std::cos(t);
  const double cy = brain.cy + r * std::sin(t);
  const double angle = uniform(rng, 0.0, std::numbers::pi);
  const double amp = uniform(rng, 0.4, 0.6);
  Ellipse outer{cx, cy, 1.0, 1.0, angle};
  Ellipse inner{cx, cy, 1.0, 1.0, angle};
  switch (kind) {
    case Lesion::ellipse:
      outer.a = uniform(rng, 0.06, 0.13) * size;
      outer.b = uniform(rng, 0.06, 0.13) * size;
      break;
    case Lesion::disk:
      outer.a = outer.b = uniform(rng, 0.10, 0.15) * size;
      break;
    case Lesion::annulus:
      outer.a = outer.b = uniform(rng, 0.12, 0.17) * size;
      inner.a = inner.b = uniform(rng, 0.5, 0.6) * outer.a;
      break;
    case Lesion::bar:
      outer.a = uniform(rng, 0.18, 0.25) * size;
      outer.b = uniform(rng, 0.035, 0.05) * size;
      break;
    case Lesion::none:
      break;
  }
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const double fx = static_cast<double>(x), fy = static_cast<double>(y);
      double m = outer.mask(fx, fy);
      if (kind == Lesion::annulus) m *= 1.0 - inner.mask(fx, fy);
      img.at(x, y) += amp * m;
    }
  }
}

}  // namespace

Dataset synth_dataset(SynthKind kind, std::size_t n_per_class, std::size_t image_size,
                      std::uint64_t seed, double noise_sigma) {
  if (n_per_class < 3) throw ConfigError("synthetic datasets need at least 3 samples per class");
  if (image_size < 8) throw ConfigError("synthetic image size must be at least 8");
  std::vector<Lesion> lesions;
  Dataset ds;
  switch (kind) {
    case SynthKind::detect2:
      ds.class_names = {"normal", "tumor"};
      lesions = {Lesion::none, Lesion::ellipse};
      break;
    case SynthKind::classify3:
      ds.class_names = {"disk", "annulus", "bar"};
      lesions = {Lesion::disk, Lesion::annulus, Lesion::bar};
      break;
    case SynthKind::screen4:
      ds.class_names = {"normal", "disk", "annulus", "bar"};
      lesions = {Lesion::none, Lesion::disk, Lesion::annulus, Lesion::bar};
      break;
  }
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (std::size_t c = 0; c < lesions.size(); ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      GrayImage img(image_size, image_size);
      Ellipse brain{};
      paint_background(img, rng, brain);
      paint_lesion(img, rng, brain, lesions[c]);
      if (noise_sigma > 0.0) {
        for (double& p : img.pixels) p += noise(rng);
      }
      img.clamp_unit();
      ds.images.push_back(std::move(img));
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

}  // namespace hybridboost::data
