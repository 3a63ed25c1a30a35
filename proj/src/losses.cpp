#include "ldfs/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ldfs/kernels.hpp"

namespace ldfs {

namespace {
constexpr double kDegenerateNorm = 1e-12;
}

std::string_view direction_mode_name(DirectionMode m) { return m == DirectionMode::instance ? "instance" : "global"; }

std::string_view noise_mode_name(NoiseMode m) {
  switch (m) {
    case NoiseMode::text:
      return "text";
    case NoiseMode::text_widening:
      return "text_widening";
    case NoiseMode::image:
      return "image";
    case NoiseMode::none:
      return "none";
  }
  return "none";
}

DirectionMode parse_direction_mode(std::string_view s) {
  if (s == "instance") return DirectionMode::instance;
  if (s == "global") return DirectionMode::global;
  throw ConfigError("unknown direction_mode '" + std::string(s) + "'");
}

NoiseMode parse_noise_mode(std::string_view s) {
  for (auto m : {NoiseMode::text, NoiseMode::text_widening, NoiseMode::image, NoiseMode::none}) {
    if (noise_mode_name(m) == s) return m;
  }
  throw ConfigError("unknown noise_mode '" + std::string(s) + "'");
}

void LossConfig::validate() const {
  for (double v : {alpha, beta, gamma, tau}) {
    if (!std::isfinite(v)) throw ConfigError("loss weights must be finite");
  }
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("alpha, beta and gamma must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
}

void SynthesisBatch::validate() const {
  if (source.rows() != labels.size() || pairs.size() != labels.size()) {
    throw DimensionMismatch("synthesis batch: feature, label and description counts differ");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!is_unit(source.row(i))) throw DegenerateEmbedding("synthesis batch: source feature " + std::to_string(i) + " is not unit length");
    if (pairs[i].source.dim() != source.cols() || pairs[i].target.dim() != source.cols()) {
      throw DimensionMismatch("synthesis batch: description dimension differs from features");
    }
  }
  const Matrix dirs = text_directions();
  for (std::size_t i = 0; i < size(); ++i) {
    if (l2_norm(dirs.row(i)) < kDegenerateNorm) {
      throw Error("synthesis batch: identical source and target descriptions for instance " + std::to_string(i) +
                  " (attribute \"" + pairs[i].attribute + "\")");
    }
  }
}

Matrix SynthesisBatch::text_directions() const {
  Matrix dirs(size(), source.cols());
  for (std::size_t i = 0; i < size(); ++i) {
    auto row = dirs.row(i);
    const auto t = pairs[i].target.components();
    const auto s = pairs[i].source.components();
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = t[j] - s[j];
  }
  return dirs;
}

SynthesisBatch apply_noise(const SynthesisBatch& clean, const LossConfig& cfg, Rng& rng) {
  SynthesisBatch out = clean;
  if (cfg.noise_mode == NoiseMode::none) return out;
  const std::size_t d = clean.source.cols();

  Vector gap_dir;
  if (cfg.noise_mode == NoiseMode::text_widening && clean.size() > 0) {
    Vector text_mean(d, 0.0);
    for (const auto& p : clean.pairs) {
      kernels::axpy(0.5, p.source.components().data(), text_mean.data(), d);
      kernels::axpy(0.5, p.target.components().data(), text_mean.data(), d);
    }
    const Vector image_mean = centroid(clean.source);
    gap_dir.resize(d);
    for (std::size_t j = 0; j < d; ++j) gap_dir[j] = text_mean[j] / static_cast<double>(clean.size()) - image_mean[j];
    const double n = l2_norm(gap_dir);
    if (n > kDegenerateNorm) {
      kernels::scale(1.0 / n, gap_dir.data(), d);
    } else {
      gap_dir.clear();
    }
  }

  // Noise component along the gap direction is made non-negative.
  auto widen = [&](Vector& z) {
    if (gap_dir.empty()) return;
    const double along = kernels::dot(z.data(), gap_dir.data(), d);
    if (along < 0.0) kernels::axpy(-2.0 * along, gap_dir.data(), z.data(), d);
  };

  for (std::size_t i = 0; i < clean.size(); ++i) {
    Vector z = standard_normal(rng, d);
    if (cfg.noise_mode == NoiseMode::image) {
      if (cfg.gamma > 0.0) {
        auto row = out.source.row(i);
        kernels::axpy(cfg.gamma, z.data(), row.data(), d);
        normalize_in_place(row);
      }
      continue;
    }
    Vector z_target = cfg.independent_noise ? standard_normal(rng, d) : z;
    if (cfg.noise_mode == NoiseMode::text_widening) {
      widen(z);
      widen(z_target);
    }
    out.pairs[i].source = perturb_text(clean.pairs[i].source, cfg.gamma, z);
    out.pairs[i].target = perturb_text(clean.pairs[i].target, cfg.gamma, z_target);
  }
  return out;
}

Matrix normalize_rows(const Matrix& raw) {
  Matrix out = raw;
  for (std::size_t i = 0; i < out.rows(); ++i) normalize_in_place(out.row(i));
  return out;
}

double direction_loss(const Matrix& source, const Matrix& adapted, const Matrix& text_directions, Matrix* grad,
                      double weight, std::size_t* degenerate) {
  const std::size_t b = source.rows();
  const std::size_t d = source.cols();
  if (adapted.rows() != b || text_directions.rows() != b || adapted.cols() != d || text_directions.cols() != d) {
    throw DimensionMismatch("direction loss: shape mismatch");
  }
  if (b == 0) return 0.0;
  double total = 0.0;
  Vector delta_i(d);
  for (std::size_t s = 0; s < b; ++s) {
    const auto f = source.row(s);
    const auto u = adapted.row(s);
    const auto dt = text_directions.row(s);
    for (std::size_t j = 0; j < d; ++j) delta_i[j] = u[j] - f[j];
    const double ni = l2_norm(delta_i);
    const double nt = l2_norm(dt);
    if (nt < kDegenerateNorm) throw Error("direction loss: zero text direction at instance " + std::to_string(s));
    if (ni < kDegenerateNorm) {
      // Adapted feature coincides with the source: maximal contribution, no gradient.
      total += 1.0;
      if (degenerate != nullptr) ++*degenerate;
      continue;
    }
    const double raw_cos = kernels::dot(delta_i.data(), dt.data(), d) / (ni * nt);
    total += 1.0 - std::clamp(raw_cos, -1.0, 1.0);
    if (grad != nullptr) {
      // d(1 - c)/d(dI) = -(dT/|dT| - c * dI/|dI|) / |dI|
      auto g = grad->row(s);
      const double w = weight / static_cast<double>(b);
      for (std::size_t j = 0; j < d; ++j) {
        g[j] -= w * (dt[j] / nt - raw_cos * delta_i[j] / ni) / ni;
      }
    }
  }
  return total / static_cast<double>(b);
}

double class_consistency_loss(const Matrix& adapted, std::span<const int> labels, const ClassTextBank& bank, double tau,
                              Matrix* grad, double weight) {
  if (!(tau > 0.0)) throw Error("class consistency loss: tau must be positive");
  const std::size_t b = adapted.rows();
  if (labels.size() != b) throw DimensionMismatch("class consistency loss: label count mismatch");
  if (bank.dim() != adapted.cols()) throw DimensionMismatch("class consistency loss: bank dimension mismatch");
  if (b == 0) return 0.0;
  const std::size_t classes = bank.size();
  Vector logits(classes);
  double total = 0.0;
  for (std::size_t s = 0; s < b; ++s) {
    const int y = labels[s];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw Error("class consistency loss: label " + std::to_string(y) + " outside the class bank");
    }
    const auto u = adapted.row(s);
    for (std::size_t c = 0; c < classes; ++c) logits[c] = kernels::dot(u.data(), bank.row(c).data(), u.size()) / tau;
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double z : logits) denom += std::exp(z - max_logit);
    const double log_norm = max_logit + std::log(denom);
    total += log_norm - logits[static_cast<std::size_t>(y)];
    if (grad != nullptr) {
      auto g = grad->row(s);
      const double w = weight / static_cast<double>(b);
      for (std::size_t c = 0; c < classes; ++c) {
        const double p = std::exp(logits[c] - log_norm) - (static_cast<int>(c) == y ? 1.0 : 0.0);
        kernels::axpy(w * p / tau, bank.row(c).data(), g.data(), g.size());
      }
    }
  }
  return total / static_cast<double>(b);
}

double pair_loss(const Matrix& source, const Matrix& adapted, Matrix* grad, double weight) {
  const std::size_t b = source.rows();
  if (adapted.rows() != b || adapted.cols() != source.cols()) throw DimensionMismatch("pair loss: shape mismatch");
  if (b < 2) return 0.0;
  const std::size_t d = source.cols();
  const double pairs = static_cast<double>(b * (b - 1) / 2);
  double total = 0.0;
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t w = s + 1; w < b; ++w) {
      const double orig = kernels::dot(source.row(s).data(), source.row(w).data(), d);
      const double adap = kernels::dot(adapted.row(s).data(), adapted.row(w).data(), d);
      const double diff = orig - adap;
      total += diff * diff;
      if (grad != nullptr) {
        const double c = -2.0 * diff * weight / pairs;
        kernels::axpy(c, adapted.row(w).data(), grad->row(s).data(), d);
        kernels::axpy(c, adapted.row(s).data(), grad->row(w).data(), d);
      }
    }
  }
  return total / pairs;
}

namespace {

Matrix forward_unit(const SynthesisBatch& batch, const MapperParams& params, MapperTape& tape) {
  mapper_forward_batch(params, batch.source, tape);
  return normalize_rows(tape.output);
}

}  // namespace

double loss_ld(const SynthesisBatch& batch, const MapperParams& params) {
  MapperTape tape;
  const Matrix adapted = forward_unit(batch, params, tape);
  return direction_loss(batch.source, adapted, batch.text_directions());
}

double loss_cc(const SynthesisBatch& batch, const MapperParams& params, const ClassTextBank& bank, double tau) {
  if (!(tau > 0.0)) throw Error("class consistency loss: tau must be positive");
  MapperTape tape;
  const Matrix adapted = forward_unit(batch, params, tape);
  return class_consistency_loss(adapted, batch.labels, bank, tau);
}

double loss_pair(const Matrix& source, const Matrix& adapted) { return pair_loss(source, adapted); }

LossTerms total_loss(const SynthesisBatch& batch, const MapperParams& params, const ClassTextBank& bank,
                     const LossConfig& cfg, std::span<double> grad) {
  cfg.validate();
  MapperTape tape;
  const Matrix adapted = forward_unit(batch, params, tape);
  const bool want_grad = !grad.empty();
  Matrix grad_unit;
  if (want_grad) grad_unit.resize(adapted.rows(), adapted.cols());
  Matrix* g = want_grad ? &grad_unit : nullptr;

  LossTerms terms;
  terms.ld = direction_loss(batch.source, adapted, batch.text_directions(), g, 1.0, &terms.degenerate_directions);
  terms.cc = class_consistency_loss(adapted, batch.labels, bank, cfg.tau, g, cfg.alpha);
  terms.pair = pair_loss(batch.source, adapted, g, cfg.beta);
  terms.pair_defined = batch.size() >= 2;
  terms.total = terms.ld + cfg.alpha * terms.cc + cfg.beta * terms.pair;

  if (want_grad) {
    // Back through the row normalization: dL/dy = (g - (g.u) u) / |y|.
    Matrix grad_raw(adapted.rows(), adapted.cols());
    for (std::size_t s = 0; s < adapted.rows(); ++s) {
      const auto u = adapted.row(s);
      const auto gu = grad_unit.row(s);
      auto gy = grad_raw.row(s);
      const double norm = l2_norm(tape.output.row(s));
      const double radial = kernels::dot(gu.data(), u.data(), u.size());
      for (std::size_t j = 0; j < u.size(); ++j) gy[j] = (gu[j] - radial * u[j]) / norm;
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    mapper_backward(params, tape, grad_raw, grad);
  }
  return terms;
}

}  // namespace ldfs
