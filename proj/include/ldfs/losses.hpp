#pragma once

// Stage-1 objective for one mapper:
//
//   total = L_ld + alpha * L_cc + beta * L_pair
//
// L_ld   mean over the batch of 1 - cos(dI, dT), with
//        dT = Norm(t_target) - Norm(t_source) and dI = Norm(F(f)) - Norm(f).
// L_cc   mean cross-entropy of softmax(cos(Norm(F(f)), e_c) / tau).
// L_pair mean over unordered pairs s < w of
//        (cos(f_s, f_w) - cos(F'_s, F'_w))^2, F' the normalized outputs.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "ldfs/feature_core.hpp"
#include "ldfs/mapper.hpp"
#include "ldfs/random.hpp"
#include "ldfs/text_engine.hpp"

namespace ldfs {

enum class DirectionMode { instance, global };
enum class NoiseMode { text, text_widening, image, none };

std::string_view direction_mode_name(DirectionMode m);
std::string_view noise_mode_name(NoiseMode m);
DirectionMode parse_direction_mode(std::string_view s);
NoiseMode parse_noise_mode(std::string_view s);

struct LossConfig {
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.1;
  double tau = 0.01;
  DirectionMode direction_mode = DirectionMode::instance;
  NoiseMode noise_mode = NoiseMode::text;
  bool independent_noise = false;  // separate z for source and target text
  std::size_t top_k = 5;           // attributes sampled per instance

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Inputs of one optimization step; descriptions already perturbed.
struct SynthesisBatch {
  Matrix source;  // B x d unit rows
  std::vector<int> labels;
  std::vector<InstanceDescriptionPair> pairs;

  std::size_t size() const noexcept { return labels.size(); }
  /// Shape and unit-norm checks; throws Error when a pair has identical
  /// source and target embeddings (zero text direction).
  void validate() const;
  /// Rows Norm(t_target) - Norm(t_source).
  Matrix text_directions() const;
};

/// Applies the configured perturbation to a clean batch:
///   text           shared-z noise on both descriptions
///   text_widening  same, with the noise component along the text-minus-image
///                  centroid direction flipped to point away from the images
///   image          noise on the source features instead
///   none           unchanged
SynthesisBatch apply_noise(const SynthesisBatch& clean, const LossConfig& cfg, Rng& rng);

struct LossTerms {
  double ld = 0.0;
  double cc = 0.0;
  double pair = 0.0;
  double total = 0.0;
  std::size_t degenerate_directions = 0;  // instances with dI == 0
  bool pair_defined = true;               // false when B < 2
};

// Losses on already-normalized adapted rows. When `grad` is non-null, the
// gradient of `weight * loss` with respect to the adapted rows is added to it.
double direction_loss(const Matrix& source, const Matrix& adapted, const Matrix& text_directions, Matrix* grad = nullptr,
                      double weight = 1.0, std::size_t* degenerate = nullptr);
double class_consistency_loss(const Matrix& adapted, std::span<const int> labels, const ClassTextBank& bank, double tau,
                              Matrix* grad = nullptr, double weight = 1.0);
double pair_loss(const Matrix& source, const Matrix& adapted, Matrix* grad = nullptr, double weight = 1.0);

double loss_ld(const SynthesisBatch& batch, const MapperParams& params);
double loss_cc(const SynthesisBatch& batch, const MapperParams& params, const ClassTextBank& bank, double tau);
double loss_pair(const Matrix& source, const Matrix& adapted);

/// Total objective; when `grad` is non-empty it receives dTotal/dparams
/// (overwritten, same layout as params.values).
LossTerms total_loss(const SynthesisBatch& batch, const MapperParams& params, const ClassTextBank& bank,
                     const LossConfig& cfg, std::span<double> grad = {});

/// Row-normalized copy of the raw mapper outputs.
Matrix normalize_rows(const Matrix& raw);

}  // namespace ldfs
