#include <gtest/gtest.h>

#include <cmath>

#include "ldfs/mapper.hpp"
#include "ldfs/random.hpp"
#include "test_support.hpp"

namespace ldfs {
namespace {

MapperParams random_params(std::size_t d, std::size_t h, Activation act, std::uint64_t seed) {
  auto p = MapperParams::zeros(d, h, act, 1);
  Rng rng(seed);
  const auto v = standard_normal(rng, p.parameter_count());
  for (std::size_t i = 0; i < v.size(); ++i) p.values[i] = 0.3 * v[i];
  return p;
}

UnitVector random_unit(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return normalize(standard_normal(rng, d));
}

TEST(Mapper, ZeroParamsGiveBias) {
  auto p = MapperParams::zeros(3, 5, Activation::gelu, 0);
  p.b2()[0] = 0.25;
  p.b2()[2] = -1.0;
  const auto out = mapper_forward(p, random_unit(3, 1));
  EXPECT_EQ(out, (Vector{0.25, 0.0, -1.0}));
}

TEST(Mapper, IdentityLinearMapperReturnsInput) {
  const std::size_t d = 4;
  auto p = MapperParams::zeros(d, d, Activation::linear, 0);
  for (std::size_t i = 0; i < d; ++i) {
    p.w1()[i * d + i] = 1.0;
    p.w2()[i * d + i] = 1.0;
  }
  const auto f = random_unit(d, 2);
  const auto out = mapper_forward(p, f);
  for (std::size_t i = 0; i < d; ++i) EXPECT_DOUBLE_EQ(out[i], f[i]);
}

TEST(Mapper, MatchesStraightLineOracle) {
  for (auto act : {Activation::linear, Activation::gelu}) {
    const std::size_t d = 6, h = 5;
    const auto p = random_params(d, h, act, 7);
    const auto f = random_unit(d, 8);
    // out_j = sum_k W2[k][j] * act(sum_i f_i W1[i][k] + b1_k) + b2_j
    Vector hidden(h);
    for (std::size_t k = 0; k < h; ++k) {
      double s = p.values[d * h + k];
      for (std::size_t i = 0; i < d; ++i) s += f[i] * p.values[i * h + k];
      hidden[k] = act == Activation::linear ? s : 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
    }
    const auto out = mapper_forward(p, f);
    for (std::size_t j = 0; j < d; ++j) {
      double s = p.values[2 * d * h + h + j];
      for (std::size_t k = 0; k < h; ++k) s += hidden[k] * p.values[d * h + h + k * d + j];
      EXPECT_NEAR(out[j], s, 1e-12);
    }
  }
}

TEST(Mapper, DimensionMismatch) {
  const auto p = MapperParams::zeros(3, 3, Activation::gelu, 0);
  EXPECT_THROW(mapper_forward(p, random_unit(4, 0)), DimensionMismatch);
}

TEST(Mapper, ParameterBudgetAt512) {
  EXPECT_EQ(mapper_parameter_count(512, 380), 390012u);
  EXPECT_EQ(MapperParams::zeros(512, 380, Activation::gelu, 0).parameter_count(), 390012u);
}

TEST(Mapper, NearIdentityStartsCloseToInput) {
  for (std::size_t h : {16u, 24u}) {
    const auto p = MapperParams::near_identity(16, h, Activation::gelu, 0, 3);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto f = random_unit(16, 100 + s);
      const auto out = mapper_forward(p, f);
      EXPECT_GT(cosine(normalize(out), f), 0.95);
    }
  }
  const auto lin = MapperParams::near_identity(8, 8, Activation::linear, 0, 3);
  const auto f = random_unit(8, 9);
  const auto out = mapper_forward(lin, f);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(out[i], f[i], 1e-12);
}

TEST(Mapper, NearIdentityIsSeedDeterministic) {
  EXPECT_EQ(MapperParams::near_identity(8, 8, Activation::gelu, 0, 5), MapperParams::near_identity(8, 8, Activation::gelu, 0, 5));
  EXPECT_NE(MapperParams::near_identity(8, 8, Activation::gelu, 0, 5), MapperParams::near_identity(8, 8, Activation::gelu, 0, 6));
}

TEST(Mapper, BackwardMatchesFiniteDifferences) {
  const std::size_t d = 5, h = 4, b = 3;
  const auto p = random_params(d, h, Activation::gelu, 11);
  Matrix inputs(b, d);
  for (std::size_t r = 0; r < b; ++r) {
    const auto u = random_unit(d, 20 + r);
    std::copy(u.components().begin(), u.components().end(), inputs.row(r).begin());
  }
  Matrix weights(b, d);
  Rng rng(4);
  const auto w = standard_normal(rng, b * d);
  std::copy(w.begin(), w.end(), weights.values().begin());
  // scalar objective: sum(weights .* output)
  auto objective = [&](const MapperParams& q) {
    MapperTape tape;
    mapper_forward_batch(q, inputs, tape);
    double s = 0;
    for (std::size_t i = 0; i < b * d; ++i) s += tape.output.values()[i] * weights.values()[i];
    return s;
  };
  MapperTape tape;
  mapper_forward_batch(p, inputs, tape);
  std::vector<double> grad(p.parameter_count(), 0.0);
  mapper_backward(p, tape, weights, grad);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < p.parameter_count(); ++i) {
    auto plus = p, minus = p;
    plus.values[i] += eps;
    minus.values[i] -= eps;
    const double fd = (objective(plus) - objective(minus)) / (2 * eps);
    EXPECT_NEAR(grad[i], fd, 1e-7 * std::max(1.0, std::abs(fd))) << "parameter " << i;
  }
}

TEST(Mapper, SaveLoadRoundTrip) {
  test::TempDir tmp;
  auto p = MapperParams::zeros(3, 2, Activation::linear, 2);
  for (std::size_t i = 0; i < p.parameter_count(); ++i) p.values[i] = 0.125 * static_cast<double>(i) - 1.0;
  save_mapper(tmp.path() / "m", p, {{"seed", 4}});
  EXPECT_EQ(load_mapper(tmp.path() / "m"), p);

  auto q = random_params(4, 4, Activation::gelu, 1);
  save_mapper(tmp.path() / "q", q);
  const auto r = load_mapper(tmp.path() / "q");
  EXPECT_EQ(r.activation, Activation::gelu);
  EXPECT_EQ(r.target_domain, 1);
  for (std::size_t i = 0; i < q.parameter_count(); ++i) {
    EXPECT_EQ(r.values[i], static_cast<double>(static_cast<float>(q.values[i])));
  }
}

TEST(Mapper, LoadRejectsNonFinite) {
  test::TempDir tmp;
  auto p = MapperParams::zeros(2, 2, Activation::linear, 0);
  p.values[3] = std::nan("");
  save_mapper(tmp.path() / "m", p);
  EXPECT_THROW(load_mapper(tmp.path() / "m"), FormatError);
}

TEST(Activation, NamesRoundTrip) {
  EXPECT_EQ(parse_activation(activation_name(Activation::gelu)), Activation::gelu);
  EXPECT_EQ(parse_activation("linear"), Activation::linear);
  EXPECT_THROW(parse_activation("relu"), ConfigError);
  EXPECT_NEAR(activate(Activation::gelu, 1.0), 0.8413447460685429, 1e-15);
  EXPECT_DOUBLE_EQ(activate_derivative(Activation::gelu, 0.0), 0.5);
}

}  // namespace
}  // namespace ldfs
