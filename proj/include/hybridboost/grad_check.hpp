#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "hybridboost/layers.hpp"

namespace hybridboost::nn {

/// |a-b| / max(|a|, |b|, 1e-12).
double relative_error(double a, double b);

/// Central-difference check of `analytic` against `loss` for every entry of
/// `values`, using the fourth-order stencil over ±eps and ±2eps. Each entry
/// is perturbed in place and restored. Returns the largest relative error.
/// Entries where both gradients are at most `zero_floor` in magnitude are
/// treated as agreeing: a vanishing gradient has no meaningful relative error
/// and its difference quotient is pure rounding noise.
double grad_check(std::span<double> values, const std::function<double()>& loss,
                  std::span<const double> analytic, double eps, double zero_floor = 1e-8);

enum class LayerKind { conv2d, avg_pool, max_pool, dense, relu, batch_norm, softmax_cross_entropy };

const char* layer_name(LayerKind kind);

/// A randomly initialized layer to check. For dense the input is [N, in_dim]
/// taken from input_shape[0] and the product of the remaining extents.
struct LayerProbe {
  LayerKind kind = LayerKind::dense;
  Shape input_shape{2, 4};
  std::size_t out_channels = 3;  // conv2d filters, dense out_dim, softmax classes
  ConvSpec conv{};
  PoolSpec pool{};
};

/// Builds the probe with random inputs and parameters from `seed`, scalarizes
/// its output with a fixed random projection, and returns the largest
/// relative error over all input and parameter gradients.
double grad_check_layer(const LayerProbe& probe, std::uint64_t seed, double eps = 1e-4);

}  // namespace hybridboost::nn
