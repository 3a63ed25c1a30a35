#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ldfs/losses.hpp"
#include "ldfs/toy_fixture.hpp"
#include "ldfs/trainer.hpp"
#include "test_support.hpp"

namespace ldfs {
namespace {

UnitVector unit(Vector v) { return normalize(v); }

InstanceDescriptionPair pair_of(Vector s, Vector t, int label_domain = 1) {
  return {unit(std::move(s)), unit(std::move(t)), label_domain, ""};
}

// f = (1,0) mapped by a constant mapper (zero weights, b2 = out).
SynthesisBatch single(Vector f, const InstanceDescriptionPair& p) {
  SynthesisBatch b;
  b.source.resize(1, f.size());
  normalize_in_place(f);
  std::copy(f.begin(), f.end(), b.source.row(0).begin());
  b.labels = {0};
  b.pairs = {p};
  return b;
}

MapperParams constant_mapper(Vector out) {
  auto p = MapperParams::zeros(out.size(), out.size(), Activation::gelu, 1);
  std::copy(out.begin(), out.end(), p.b2().begin());
  return p;
}

SynthesisBatch random_batch(std::size_t b, std::size_t d, std::size_t classes, Rng& rng) {
  SynthesisBatch batch;
  batch.source.resize(b, d);
  for (std::size_t i = 0; i < b; ++i) {
    auto v = standard_normal(rng, d);
    normalize_in_place(v);
    std::copy(v.begin(), v.end(), batch.source.row(i).begin());
    batch.labels.push_back(static_cast<int>(i % classes));
    batch.pairs.push_back({normalize(standard_normal(rng, d)), normalize(standard_normal(rng, d)), 1, "a"});
  }
  return batch;
}

ClassTextBank random_bank(std::size_t classes, std::size_t d, Rng& rng) {
  Matrix m(classes, d);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto v = standard_normal(rng, d);
    std::copy(v.begin(), v.end(), m.row(c).begin());
  }
  std::vector<std::string> names;
  for (std::size_t c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
  return ClassTextBank::from_raw(names, m);
}

MapperParams random_mapper(std::size_t d, std::size_t h, Rng& rng) {
  auto p = MapperParams::near_identity(d, h, Activation::gelu, 1, rng());
  const auto jitter = standard_normal(rng, p.parameter_count());
  for (std::size_t i = 0; i < jitter.size(); ++i) p.values[i] += 0.1 * jitter[i];
  return p;
}

TEST(LossLd, AlignedDirectionsGiveZero) {
  const auto batch = single({1, 0}, pair_of({1, 0}, {0, 1}));
  EXPECT_NEAR(loss_ld(batch, constant_mapper({0, 1})), 0.0, 1e-15);
}

TEST(LossLd, HandComputedCosine) {
  const auto batch = single({1, 0}, pair_of({1, 0}, {0, 1}));
  const double expected = 1.0 - 1.2 / (std::sqrt(0.8) * std::sqrt(2.0));
  EXPECT_NEAR(loss_ld(batch, constant_mapper({0.6, 0.8})), expected, 1e-12);
  EXPECT_NEAR(loss_ld(batch, constant_mapper({0.6, 0.8})), 0.05132, 1e-5);
}

TEST(LossLd, AntiAlignedGivesTwo) {
  const auto batch = single({1, 0}, pair_of({0, 1}, {1, 0}));
  EXPECT_NEAR(loss_ld(batch, constant_mapper({0, 1})), 2.0, 1e-15);
}

TEST(LossLd, DegenerateImageDirectionCountsAsMaximum) {
  const auto batch = single({1, 0}, pair_of({1, 0}, {0, 1}));
  std::vector<double> grad(constant_mapper({2, 0}).parameter_count());
  ClassTextBank bank({"a"}, test::matrix({{1, 0}}));
  LossConfig cfg;
  cfg.alpha = cfg.beta = 0;
  const auto terms = total_loss(batch, constant_mapper({2, 0}), bank, cfg, grad);
  EXPECT_EQ(terms.ld, 1.0);
  EXPECT_EQ(terms.degenerate_directions, 1u);
  for (double g : grad) EXPECT_EQ(g, 0.0);
}

TEST(LossLd, IdenticalDescriptionsRejectedAtBatchConstruction) {
  const auto batch = single({1, 0}, pair_of({1, 1}, {1, 1}));
  EXPECT_THROW(batch.validate(), Error);
}

TEST(LossLd, RangeProperty) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto batch = random_batch(4, 6, 2, rng);
    const double v = loss_ld(batch, random_mapper(6, 6, rng));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 2.0);
  }
}

TEST(LossCc, TwoClassClosedForm) {
  ClassTextBank bank({"a", "b"}, test::matrix({{1, 0}, {0, 1}}));
  const std::vector<int> labels{0};
  EXPECT_NEAR(class_consistency_loss(test::matrix({{1, 0}}), labels, bank, 1.0), std::log1p(std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(class_consistency_loss(test::matrix({{1, 0}}), labels, bank, 1.0), 0.31326, 1e-5);
}

TEST(LossCc, EquidistantGivesLogC) {
  ClassTextBank bank({"a", "b", "c"}, test::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  const double r = 1.0 / std::sqrt(3.0);
  const std::vector<int> labels{2};
  for (double tau : {0.01, 0.5, 3.0}) {
    EXPECT_NEAR(class_consistency_loss(test::matrix({{r, r, r}}), labels, bank, tau), std::log(3.0), 1e-12);
  }
}

TEST(LossCc, SmallTemperatureLimit) {
  ClassTextBank bank({"a", "b"}, test::matrix({{1, 0}, {0, 1}}));
  const std::vector<int> labels{0};
  EXPECT_LT(class_consistency_loss(test::matrix({{0.8, 0.6}}), labels, bank, 0.01), 1e-3);
}

TEST(LossCc, ThroughMapperAndErrors) {
  ClassTextBank bank({"a", "b"}, test::matrix({{1, 0}, {0, 1}}));
  const auto batch = single({0, 1}, pair_of({1, 0}, {0, 1}));
  EXPECT_NEAR(loss_cc(batch, constant_mapper({3, 0}), bank, 1.0), 0.31326, 1e-5);
  EXPECT_THROW(loss_cc(batch, constant_mapper({3, 0}), bank, 0.0), Error);
  const std::vector<int> bad{2};
  EXPECT_THROW(class_consistency_loss(test::matrix({{1, 0}}), bad, bank, 1.0), Error);
}

TEST(LossPair, Examples) {
  const auto src = test::matrix({{1, 0}, {0, 1}});
  EXPECT_EQ(loss_pair(src, src), 0.0);
  EXPECT_NEAR(loss_pair(src, test::matrix({{1, 0}, {1, 0}})), 1.0, 1e-15);
  EXPECT_EQ(loss_pair(test::matrix({{1, 0}}), test::matrix({{0, 1}})), 0.0);
}

TEST(LossPair, RotationAndPermutationInvariance) {
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto batch = random_batch(5, 3, 1, rng);
    const double a = rng() % 628 / 100.0, b = rng() % 628 / 100.0;
    // rotation about z followed by rotation about x
    const double r[3][3] = {{std::cos(a), -std::sin(a), 0},
                            {std::cos(b) * std::sin(a), std::cos(b) * std::cos(a), -std::sin(b)},
                            {std::sin(b) * std::sin(a), std::sin(b) * std::cos(a), std::cos(b)}};
    Matrix rotated(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t k = 0; k < 3; ++k) rotated(i, j) += r[j][k] * batch.source(i, k);
      }
    }
    EXPECT_NEAR(loss_pair(batch.source, rotated), 0.0, 1e-24);

    Matrix other(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto v = normalize(standard_normal(rng, 3));
      std::copy(v.components().begin(), v.components().end(), other.row(i).begin());
    }
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    Matrix ps(5, 3), po(5, 3);
    for (std::size_t i = 0; i < 5; ++i) {
      std::copy(batch.source.row(perm[i]).begin(), batch.source.row(perm[i]).end(), ps.row(i).begin());
      std::copy(other.row(perm[i]).begin(), other.row(perm[i]).end(), po.row(i).begin());
    }
    const double base = loss_pair(batch.source, other);
    EXPECT_GE(base, 0.0);
    EXPECT_NEAR(loss_pair(ps, po), base, 1e-12);
  }
}

TEST(TotalLoss, ZeroWeightsEqualLd) {
  Rng rng(1);
  const auto batch = random_batch(4, 8, 3, rng);
  const auto bank = random_bank(3, 8, rng);
  const auto p = random_mapper(8, 8, rng);
  LossConfig cfg;
  cfg.alpha = 0;
  cfg.beta = 0;
  EXPECT_EQ(total_loss(batch, p, bank, cfg).total, loss_ld(batch, p));
}

TEST(TotalLoss, CombinesTerms) {
  Rng rng(2);
  const auto batch = random_batch(4, 8, 3, rng);
  const auto bank = random_bank(3, 8, rng);
  const auto p = random_mapper(8, 8, rng);
  LossConfig cfg;
  cfg.alpha = 0.5;
  cfg.beta = 1.0;
  const auto terms = total_loss(batch, p, bank, cfg);
  EXPECT_NEAR(terms.total, terms.ld + 0.5 * terms.cc + terms.pair, 1e-14);
  EXPECT_NEAR(terms.cc, loss_cc(batch, p, bank, cfg.tau), 1e-14);
  EXPECT_TRUE(terms.pair_defined);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  for (auto noise : {NoiseMode::text, NoiseMode::text_widening, NoiseMode::image, NoiseMode::none}) {
    const auto clean = random_batch(4, 8, 3, rng);
    const auto bank = random_bank(3, 8, rng);
    auto p = random_mapper(8, 8, rng);
    LossConfig cfg;
    cfg.noise_mode = noise;
    cfg.tau = 0.5;  // keeps logits moderate so the difference quotient stays accurate
    const auto batch = apply_noise(clean, cfg, rng);
    std::vector<double> grad(p.parameter_count());
    total_loss(batch, p, bank, cfg, grad);
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.parameter_count(); ++i) {
      const double keep = p.values[i];
      p.values[i] = keep + eps;
      const double up = total_loss(batch, p, bank, cfg).total;
      p.values[i] = keep - eps;
      const double down = total_loss(batch, p, bank, cfg).total;
      p.values[i] = keep;
      const double fd = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(grad[i] - fd) / std::max(1e-3, std::abs(fd) + std::abs(grad[i])));
    }
    EXPECT_LE(worst, 1e-4) << noise_mode_name(noise);
  }
}

TEST(ApplyNoise, NoneAndZeroGammaLeaveBatchUnchanged) {
  Rng rng(4);
  const auto clean = random_batch(3, 5, 2, rng);
  LossConfig cfg;
  cfg.noise_mode = NoiseMode::none;
  const auto same = apply_noise(clean, cfg, rng);
  EXPECT_EQ(same.source, clean.source);
  cfg.noise_mode = NoiseMode::text;
  cfg.gamma = 0.0;
  const auto zero = apply_noise(clean, cfg, rng);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(zero.pairs[i].target, clean.pairs[i].target);
}

TEST(ApplyNoise, TextModeSharesNoiseAcrossPair) {
  Rng rng(4);
  const auto clean = random_batch(3, 5, 2, rng);
  LossConfig cfg;
  cfg.gamma = 0.3;
  Rng a(77), replay(77);
  const auto noisy = apply_noise(clean, cfg, a);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto z = standard_normal(replay, 5);
    EXPECT_EQ(noisy.pairs[i].source, perturb_text(clean.pairs[i].source, 0.3, z));
    EXPECT_EQ(noisy.pairs[i].target, perturb_text(clean.pairs[i].target, 0.3, z));
  }
  EXPECT_EQ(noisy.source, clean.source);
}

TEST(ApplyNoise, ImageModePerturbsFeaturesOnly) {
  Rng rng(4);
  const auto clean = random_batch(3, 5, 2, rng);
  LossConfig cfg;
  cfg.noise_mode = NoiseMode::image;
  const auto noisy = apply_noise(clean, cfg, rng);
  EXPECT_NE(noisy.source, clean.source);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(is_unit(noisy.source.row(i)));
    EXPECT_EQ(noisy.pairs[i].source, clean.pairs[i].source);
  }
}

TEST(ApplyNoise, WideningReflectsNoiseTowardTextSide) {
  Rng rng(8);
  const std::size_t d = 6;
  for (int t = 0; t < 20; ++t) {
    // Images near e0, texts near e1.
    SynthesisBatch clean;
    clean.source.resize(4, d);
    for (std::size_t i = 0; i < 4; ++i) {
      Vector f = standard_normal(rng, d), s = standard_normal(rng, d), g = standard_normal(rng, d);
      for (std::size_t j = 0; j < d; ++j) {
        f[j] *= 0.1;
        s[j] *= 0.1;
        g[j] *= 0.1;
      }
      f[0] += 1.0;
      s[1] += 1.0;
      g[1] += 1.0;
      normalize_in_place(f);
      std::copy(f.begin(), f.end(), clean.source.row(i).begin());
      clean.labels.push_back(0);
      clean.pairs.push_back({normalize(s), normalize(g), 1, "a"});
    }
    Vector gap = centroid(clean.source);
    for (auto& x : gap) x = -x;
    for (const auto& p : clean.pairs) {
      for (std::size_t j = 0; j < d; ++j) gap[j] += (p.source[j] + p.target[j]) / 8.0;
    }
    const double n = l2_norm(gap);
    for (auto& x : gap) x /= n;

    LossConfig cfg;
    cfg.noise_mode = NoiseMode::text_widening;
    cfg.gamma = 0.5;
    const std::uint64_t seed = rng();
    Rng a(seed), replay(seed);
    const auto noisy = apply_noise(clean, cfg, a);
    for (std::size_t i = 0; i < 4; ++i) {
      Vector z = standard_normal(replay, d);
      const double along = dot(z, gap);
      if (along < 0) {
        for (std::size_t j = 0; j < d; ++j) z[j] -= 2 * along * gap[j];
      }
      EXPECT_GE(dot(z, gap), -1e-12);
      const auto expect_s = perturb_text(clean.pairs[i].source, 0.5, z);
      const auto expect_t = perturb_text(clean.pairs[i].target, 0.5, z);
      for (std::size_t j = 0; j < d; ++j) {
        EXPECT_NEAR(noisy.pairs[i].source[j], expect_s[j], 1e-12);
        EXPECT_NEAR(noisy.pairs[i].target[j], expect_t[j], 1e-12);
      }
    }
  }
}

TEST(DirectionMode, GlobalEqualsInstanceWithNoAttributes) {
  ToyFixtureOptions opt;
  opt.samples_per_cell = 4;
  const auto fx = generate_toy_fixture(opt);
  CachedTextEncoder enc(fx.text_cache);
  SynthesisContext ctx{fx.class_bank, fx.attributes, fx.templates, enc};
  const auto source = fx.images.domain_subset(0);

  LossConfig global;
  global.direction_mode = DirectionMode::global;
  LossConfig instance;
  instance.direction_mode = DirectionMode::instance;
  instance.top_k = 0;
  const auto cg = description_candidates(source, 1, ctx, global);
  const auto ci = description_candidates(source, 1, ctx, instance);
  ASSERT_EQ(cg.size(), ci.size());
  for (std::size_t i = 0; i < cg.size(); ++i) {
    ASSERT_EQ(cg[i].size(), 1u);
    ASSERT_EQ(ci[i].size(), 1u);
    EXPECT_EQ(cg[i][0].target, ci[i][0].target);
    EXPECT_EQ(cg[i][0].source, ci[i][0].source);
    EXPECT_EQ(cg[i][0].attribute, "");
  }

  Schedule schedule;
  schedule.epochs = 3;
  schedule.batch_size = 5;
  schedule.seed = 2;
  const auto rg = train_mapper(source, 1, ctx, global, schedule);
  const auto ri = train_mapper(source, 1, ctx, instance, schedule);
  EXPECT_EQ(rg.params, ri.params);

  instance.top_k = 3;
  const auto ck = description_candidates(source, 1, ctx, instance);
  EXPECT_EQ(ck[0].size(), 3u);
  EXPECT_NE(ck[0][0].attribute, "");
}

TEST(LossConfig, Validation) {
  LossConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.tau = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.gamma = std::nan("");
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_noise_mode("text_widening"), NoiseMode::text_widening);
  EXPECT_EQ(parse_direction_mode("global"), DirectionMode::global);
  EXPECT_THROW(parse_noise_mode("loud"), ConfigError);
}

}  // namespace
}  // namespace ldfs
