#include "ldfs/mapper.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "ldfs/cache_io.hpp"
#include "ldfs/kernels.hpp"
#include "ldfs/random.hpp"

namespace ldfs {

using nlohmann::json;

std::string_view activation_name(Activation a) { return a == Activation::linear ? "linear" : "gelu"; }

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::linear;
  if (name == "gelu") return Activation::gelu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double x) {
  if (a == Activation::linear) return x;
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double activate_derivative(Activation a, double x) {
  if (a == Activation::linear) return 1.0;
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

MapperParams MapperParams::zeros(std::size_t dim, std::size_t hidden, Activation activation, int target_domain) {
  if (dim == 0 || hidden == 0) throw ConfigError("mapper dimensions must be positive");
  MapperParams p{dim, hidden, activation, target_domain, {}};
  p.values.assign(mapper_parameter_count(dim, hidden), 0.0);
  return p;
}

namespace {

// n x m matrix (n <= m) with orthonormal rows, via modified Gram-Schmidt
// on Gaussian rows.
Matrix orthonormal_rows(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t d = n;
  const std::size_t h = m;
  Matrix q(d, h);
  for (std::size_t i = 0; i < d; ++i) {
    for (;;) {
      auto row = q.row(i);
      const Vector g = standard_normal(rng, h);
      std::copy(g.begin(), g.end(), row.begin());
      for (std::size_t j = 0; j < i; ++j) {
        const double proj = kernels::dot(q.row(j).data(), row.data(), h);
        kernels::axpy(-proj, q.row(j).data(), row.data(), h);
      }
      const double n = l2_norm(row);
      if (n > 1e-8) {
        kernels::scale(1.0 / n, row.data(), h);
        break;
      }
    }
  }
  return q;
}

}  // namespace

MapperParams MapperParams::near_identity(std::size_t dim, std::size_t hidden, Activation activation,
                                         int target_domain, std::uint64_t seed, double init_scale) {
  if (!(init_scale > 0.0)) throw ConfigError("init scale must be positive");
  MapperParams p = zeros(dim, hidden, activation, target_domain);
  // Q is d x h with orthonormal rows when h >= d (Q Q^T = I) and orthonormal
  // columns otherwise (Q Q^T projects onto an h-dimensional subspace).
  const bool wide = hidden >= dim;
  const Matrix basis = wide ? orthonormal_rows(dim, hidden, seed) : orthonormal_rows(hidden, dim, seed);
  auto q = [&](std::size_t i, std::size_t j) { return wide ? basis(i, j) : basis(j, i); };
  const double slope = activate_derivative(activation, 0.0);
  auto w1 = p.w1();
  auto w2 = p.w2();
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < hidden; ++j) {
      w1[i * hidden + j] = init_scale * q(i, j);
      w2[j * dim + i] = q(i, j) / (init_scale * slope);
    }
  }
  return p;
}

void MapperParams::validate() const {
  if (dim == 0 || hidden == 0) throw FormatError("mapper has zero dimension");
  if (values.size() != mapper_parameter_count(dim, hidden)) throw FormatError("mapper parameter count mismatch");
  for (double v : values) {
    if (!std::isfinite(v)) throw FormatError("mapper has non-finite parameters");
  }
}

void mapper_forward_batch(const MapperParams& params, const Matrix& inputs, MapperTape& tape) {
  if (inputs.cols() != params.dim) {
    throw DimensionMismatch("mapper expects dimension " + std::to_string(params.dim) + ", got " +
                            std::to_string(inputs.cols()));
  }
  tape.input = inputs;
  matmul(inputs, params.w1(), params.hidden, tape.pre);
  const auto b1 = params.b1();
  tape.hidden_out.resize(inputs.rows(), params.hidden);
  for (std::size_t r = 0; r < inputs.rows(); ++r) {
    auto pre = tape.pre.row(r);
    auto act = tape.hidden_out.row(r);
    for (std::size_t j = 0; j < params.hidden; ++j) {
      pre[j] += b1[j];
      act[j] = activate(params.activation, pre[j]);
    }
  }
  matmul(tape.hidden_out, params.w2(), params.dim, tape.output);
  const auto b2 = params.b2();
  for (std::size_t r = 0; r < inputs.rows(); ++r) kernels::axpy(1.0, b2.data(), tape.output.row(r).data(), params.dim);
}

Vector mapper_forward(const MapperParams& params, const UnitVector& f) {
  Matrix in(1, f.dim());
  std::copy(f.components().begin(), f.components().end(), in.row(0).begin());
  MapperTape tape;
  mapper_forward_batch(params, in, tape);
  const auto out = tape.output.row(0);
  return Vector(out.begin(), out.end());
}

void mapper_backward(const MapperParams& params, const MapperTape& tape, const Matrix& grad_output,
                     std::span<double> grad) {
  const std::size_t d = params.dim;
  const std::size_t h = params.hidden;
  if (grad.size() != params.values.size()) throw DimensionMismatch("gradient buffer has the wrong size");
  std::span<double> g_w1(grad.data(), d * h);
  std::span<double> g_b1(grad.data() + d * h, h);
  std::span<double> g_w2(grad.data() + d * h + h, h * d);
  std::span<double> g_b2(grad.data() + 2 * d * h + h, d);

  matmul_tn_accumulate(tape.hidden_out, grad_output, g_w2);
  for (std::size_t r = 0; r < grad_output.rows(); ++r) kernels::axpy(1.0, grad_output.row(r).data(), g_b2.data(), d);

  Matrix grad_pre;
  matmul_nt(grad_output, params.w2(), h, grad_pre);
  for (std::size_t r = 0; r < grad_pre.rows(); ++r) {
    auto g = grad_pre.row(r);
    const auto pre = tape.pre.row(r);
    for (std::size_t j = 0; j < h; ++j) g[j] *= activate_derivative(params.activation, pre[j]);
    kernels::axpy(1.0, g.data(), g_b1.data(), h);
  }
  matmul_tn_accumulate(tape.input, grad_pre, g_w1);
}

void save_mapper(const std::filesystem::path& dir, const MapperParams& params, const json& extra) {
  std::filesystem::create_directories(dir);
  json manifest = {
      {"format", "ldfs-mapper"},
      {"version", 1},
      {"dim", params.dim},
      {"hidden", params.hidden},
      {"activation", activation_name(params.activation)},
      {"target_domain", params.target_domain},
      {"parameter_count", params.parameter_count()},
      {"layout", "w1[dim*hidden] b1[hidden] w2[hidden*dim] b2[dim], row-major float32 little-endian"},
  };
  if (extra.is_object()) {
    for (const auto& [k, v] : extra.items()) manifest[k] = v;
  }
  std::ofstream out(dir / "mapper.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write mapper manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
  write_f32_blob(dir / "mapper.f32", params.values);
}

MapperParams load_mapper(const std::filesystem::path& dir) {
  std::ifstream in(dir / "mapper.json");
  if (!in) throw FormatError("no mapper manifest in " + dir.string());
  try {
    const auto manifest = json::parse(in);
    MapperParams p = MapperParams::zeros(manifest.at("dim").get<std::size_t>(), manifest.at("hidden").get<std::size_t>(),
                                         parse_activation(manifest.at("activation").get<std::string>()),
                                         manifest.at("target_domain").get<int>());
    p.values = read_f32_blob(dir / "mapper.f32", p.values.size());
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
}

}  // namespace ldfs
