#include "hybridboost/feature_io.hpp"

#include <charconv>
#include <cstring>
#include <sstream>
#include <string>

#include "hybridboost/binary_io.hpp"
#include "hybridboost/errors.hpp"

namespace hybridboost::data {
namespace {
constexpr std::string_view kMagic = "DBFS";
}

std::vector<std::uint8_t> encode_feature_file(const FeatureMatrix& features) {
  features.validate();
  io::ByteWriter w;
  w.magic(kMagic);
  w.u32(kFeatureFileVersion);
  w.u32(static_cast<std::uint32_t>(features.n()));
  w.u32(static_cast<std::uint32_t>(features.dim()));
  for (std::size_t i = 0; i < features.n(); ++i) {
    w.i32(features.labels[i]);
    w.f32s(features.values.row(i));
  }
  return w.bytes();
}

FeatureMatrix decode_feature_file(std::vector<std::uint8_t> bytes, const std::string& origin) {
  io::ByteReader r(std::move(bytes), origin);
  r.expect_magic(kMagic);
  r.expect_version(kFeatureFileVersion);
  const std::uint64_t n = r.u32();
  const std::uint64_t d = r.u32();
  const std::uint64_t expected = 16 + n * (4 + 4 * d);
  if (expected != r.size()) {
    throw CorruptionError(origin + ": header declares n=" + std::to_string(n) + ", d=" +
                          std::to_string(d) + " (" + std::to_string(expected) +
                          " bytes) but file has " + std::to_string(r.size()) + " bytes");
  }
  FeatureMatrix fm{Matrix(n, d), std::vector<int>(n), ""};
  for (std::size_t i = 0; i < n; ++i) {
    fm.labels[i] = r.i32();
    r.f32s(fm.values.row(i));
  }
  r.expect_end();
  return fm;
}

void write_feature_file(const FeatureMatrix& features, const std::filesystem::path& path) {
  io::write_file(path, encode_feature_file(features));
}

namespace {

FeatureMatrix parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("label", 0) != 0) {
    throw FormatError(origin + ": neither a DBFS feature file nor a CSV with a 'label,...' header");
  }
  std::size_t dim = 0;
  for (char c : line) dim += c == ',';
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != dim + 1) {
      throw FormatError(origin + ": line " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(dim + 1));
    }
    try {
      labels.push_back(std::stoi(cells[0]));
      for (std::size_t j = 1; j < cells.size(); ++j) values.push_back(std::stod(cells[j]));
    } catch (const std::exception&) {
      throw FormatError(origin + ": unparsable number on line " + std::to_string(line_no));
    }
  }
  const std::size_t n = labels.size();
  return {Matrix(n, dim, std::move(values)), std::move(labels), ""};
}

}  // namespace

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
  auto bytes = io::read_file(path);
  FeatureMatrix fm;
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic.data(), 4) == 0) {
    fm = decode_feature_file(std::move(bytes), path.string());
  } else {
    fm = parse_csv(std::string(bytes.begin(), bytes.end()), path.string());
  }
  fm.source_tag = path.stem().string();
  fm.validate();
  return fm;
}

void write_feature_csv(const FeatureMatrix& features, const std::filesystem::path& path) {
  features.validate();
  std::string out = "label";
  for (std::size_t j = 0; j < features.dim(); ++j) out += ",f" + std::to_string(j);
  out += "\n";
  char buf[64];
  for (std::size_t i = 0; i < features.n(); ++i) {
    out += std::to_string(features.labels[i]);
    for (double v : features.values.row(i)) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out += ",";
      out.append(buf, res.ptr);
    }
    out += "\n";
  }
  io::write_text(path, out);
}

}  // namespace hybridboost::data
