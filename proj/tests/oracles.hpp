#pragma once

// Independent reference implementations used by unit and acceptance tests.
// They are deliberately slow and written from the definitions, without
// sharing code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "hybridboost/image.hpp"
#include "hybridboost/matrix.hpp"

namespace oracle {

/// Brute-force HOG: per-pixel central differences with clamped borders,
/// triangular votes to every bin by circular distance to its center, then
/// L2-Hys per block.
inline std::vector<double> naive_hog(const hybridboost::data::GrayImage& img, std::size_t cell,
                                     std::size_t block, std::size_t bins, double clip) {
  const long W = static_cast<long>(img.width);
  const long H = static_cast<long>(img.height);
  auto px = [&](long x, long y) {
    x = std::clamp(x, 0L, W - 1);
    y = std::clamp(y, 0L, H - 1);
    return img.pixels[static_cast<std::size_t>(y * W + x)];
  };
  const std::size_t cells_x = img.width / cell;
  const std::size_t cells_y = img.height / cell;
  const double width = 180.0 / static_cast<double>(bins);
  std::vector<std::vector<std::vector<double>>> hist(
      cells_y, std::vector<std::vector<double>>(cells_x, std::vector<double>(bins, 0.0)));
  for (long y = 0; y < static_cast<long>(cells_y * cell); ++y) {
    for (long x = 0; x < static_cast<long>(cells_x * cell); ++x) {
      const double dx = 0.5 * (px(x + 1, y) - px(x - 1, y));
      const double dy = 0.5 * (px(x, y + 1) - px(x, y - 1));
      const double mag = std::sqrt(dx * dx + dy * dy);
      double deg = std::atan2(dy, dx) * 180.0 / M_PI;
      while (deg < 0.0) deg += 180.0;
      while (deg >= 180.0) deg -= 180.0;
      auto& h = hist[static_cast<std::size_t>(y) / cell][static_cast<std::size_t>(x) / cell];
      for (std::size_t k = 0; k < bins; ++k) {
        const double center = (static_cast<double>(k) + 0.5) * width;
        double d = std::abs(deg - center);
        d = std::min(d, 180.0 - d);
        const double w = 1.0 - d / width;
        if (w > 0.0) h[k] += mag * w;
      }
    }
  }
  std::vector<double> out;
  for (std::size_t by = 0; by + block <= cells_y; ++by) {
    for (std::size_t bx = 0; bx + block <= cells_x; ++bx) {
      std::vector<double> v;
      for (std::size_t cy = 0; cy < block; ++cy)
        for (std::size_t cx = 0; cx < block; ++cx)
          for (double b : hist[by + cy][bx + cx]) v.push_back(b);
      double ss = 0.0;
      for (double a : v) ss += a * a;
      if (std::sqrt(ss) < 1e-12) {
        std::fill(v.begin(), v.end(), 0.0);
      } else {
        for (double& a : v) a = std::min(a / std::sqrt(ss), clip);
        double ss2 = 0.0;
        for (double a : v) ss2 += a * a;
        if (ss2 > 0.0)
          for (double& a : v) a /= std::sqrt(ss2);
      }
      out.insert(out.end(), v.begin(), v.end());
    }
  }
  return out;
}

/// Fraction of positive/negative pairs ordered correctly, ties count half.
inline double mann_whitney(const std::vector<double>& scores, const std::vector<int>& truth) {
  double good = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truth[j] == 1) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / pairs;
}

struct Recount {
  double tp = 0, tn = 0, fp = 0, fn = 0;
};

inline Recount recount(const std::vector<int>& truth, const std::vector<int>& pred) {
  Recount r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1 && pred[i] == 1) r.tp += 1;
    if (truth[i] == 0 && pred[i] == 0) r.tn += 1;
    if (truth[i] == 0 && pred[i] == 1) r.fp += 1;
    if (truth[i] == 1 && pred[i] == 0) r.fn += 1;
  }
  return r;
}

inline double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

/// Textbook metric values {acc, rec, pre, f1, mcc}.
inline std::vector<double> standard_metrics(const Recount& r) {
  const double n = r.tp + r.tn + r.fp + r.fn;
  const double rec = safe_div(r.tp, r.tp + r.fn);
  const double pre = safe_div(r.tp, r.tp + r.fp);
  const double f1 = safe_div(2 * pre * rec, pre + rec);
  const double mcc = safe_div(r.tp * r.tn - r.fp * r.fn,
                              std::sqrt((r.tp + r.fp) * (r.tp + r.fn) * (r.tn + r.fp) * (r.tn + r.fn)));
  return {(r.tp + r.tn) / n, rec, pre, f1, mcc};
}

/// Literal printed variants: precision TN/(TN+FP) and the MCC denominator
/// (TP+FP)(FP+FN)(TN+FP)(TN+FN).
inline std::vector<double> literal_metrics(const Recount& r) {
  const double n = r.tp + r.tn + r.fp + r.fn;
  const double rec = safe_div(r.tp, r.tp + r.fn);
  const double pre = safe_div(r.tn, r.tn + r.fp);
  const double f1 = safe_div(2 * pre * rec, pre + rec);
  const double mcc = safe_div(r.tp * r.tn - r.fp * r.fn,
                              std::sqrt((r.tp + r.fp) * (r.fp + r.fn) * (r.tn + r.fp) * (r.tn + r.fn)));
  return {(r.tp + r.tn) / n, rec, pre, f1, mcc};
}

/// Deterministic two-blob 2-D set with a guaranteed margin: class +1 around
/// (2,2), class -1 around (-2,-2), every point at least 0.5 from x + y = 0.
inline void separable_blobs(std::size_t n, unsigned seed, hybridboost::Matrix& X,
                            std::vector<int>& y) {
  X = hybridboost::Matrix(n, 2);
  y.assign(n, 0);
  unsigned s = seed;
  auto next = [&]() {
    s = s * 1103515245u + 12345u;
    return static_cast<double>((s >> 8) & 0xFFFF) / 65535.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    double a, b;
    do {
      a = label * 2.0 + (next() - 0.5) * 3.0;
      b = label * 2.0 + (next() - 0.5) * 3.0;
    } while (label * (a + b) < 0.5 * std::sqrt(2.0));
    X(i, 0) = a;
    X(i, 1) = b;
    y[i] = label;
  }
}

}  // namespace oracle
