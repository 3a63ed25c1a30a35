#pragma once

// Per-target-domain mapper network: a 2-layer MLP from a source image
// feature to an adapted (unnormalized) feature,
//
//   out = act(f * W1 + b1) * W2 + b2,   W1: d x h, W2: h x d (row-major).
//
// All parameters live in one contiguous vector so the optimizer and the
// finite-difference checks can treat them uniformly.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ldfs/feature_core.hpp"

namespace ldfs {

enum class Activation { linear, gelu };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

struct MapperParams {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  Activation activation = Activation::gelu;
  int target_domain = -1;
  std::vector<double> values;  // [W1 | b1 | W2 | b2]

  static MapperParams zeros(std::size_t dim, std::size_t hidden, Activation activation, int target_domain);

  /// Orthogonal W1/W2 scaled so the map starts close to the identity:
  /// W1 = s * Q, W2 = Q^T / (s * act'(0)), biases zero. With hidden < dim
  /// the start is a projection onto a random hidden-dimensional subspace.
  static MapperParams near_identity(std::size_t dim, std::size_t hidden, Activation activation, int target_domain,
                                    std::uint64_t seed, double init_scale = 0.5);

  std::size_t parameter_count() const noexcept { return values.size(); }

  std::span<double> w1() { return {values.data(), dim * hidden}; }
  std::span<double> b1() { return {values.data() + dim * hidden, hidden}; }
  std::span<double> w2() { return {values.data() + dim * hidden + hidden, hidden * dim}; }
  std::span<double> b2() { return {values.data() + 2 * dim * hidden + hidden, dim}; }
  std::span<const double> w1() const { return {values.data(), dim * hidden}; }
  std::span<const double> b1() const { return {values.data() + dim * hidden, hidden}; }
  std::span<const double> w2() const { return {values.data() + dim * hidden + hidden, hidden * dim}; }
  std::span<const double> b2() const { return {values.data() + 2 * dim * hidden + hidden, dim}; }

  void validate() const;

  friend bool operator==(const MapperParams&, const MapperParams&) = default;
};

inline std::size_t mapper_parameter_count(std::size_t dim, std::size_t hidden) { return 2 * dim * hidden + hidden + dim; }

/// Raw (unnormalized) mapper output for one feature.
Vector mapper_forward(const MapperParams& params, const UnitVector& f);

/// Intermediate values of a batched forward pass, kept for backprop.
struct MapperTape {
  Matrix input;       // B x d
  Matrix pre;         // B x h
  Matrix hidden_out;  // B x h
  Matrix output;      // B x d, raw
};

void mapper_forward_batch(const MapperParams& params, const Matrix& inputs, MapperTape& tape);

/// Accumulates dLoss/dparams into `grad` (same layout as params.values)
/// given dLoss/doutput.
void mapper_backward(const MapperParams& params, const MapperTape& tape, const Matrix& grad_output,
                     std::span<double> grad);

/// Writes `mapper.json` (shape, activation, target domain plus `extra`)
/// and `mapper.f32` into `dir`.
void save_mapper(const std::filesystem::path& dir, const MapperParams& params, const nlohmann::json& extra = {});
MapperParams load_mapper(const std::filesystem::path& dir);

}  // namespace ldfs
