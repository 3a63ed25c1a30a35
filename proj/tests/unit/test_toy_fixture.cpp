#include <gtest/gtest.h>

#include <fstream>

#include "json.hpp"
#include "ldfs/cache_io.hpp"
#include "ldfs/config.hpp"
#include "ldfs/metrics.hpp"
#include "ldfs/toy_fixture.hpp"
#include "test_support.hpp"

namespace ldfs {
namespace {

TEST(ToyFixture, SeedDeterminesEverything) {
  ToyFixtureOptions opt;
  opt.samples_per_cell = 8;
  const auto a = generate_toy_fixture(opt);
  const auto b = generate_toy_fixture(opt);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.text_cache, b.text_cache);
  EXPECT_EQ(a.basis, b.basis);
  opt.seed = 1;
  EXPECT_NE(generate_toy_fixture(opt).images, a.images);
}

TEST(ToyFixture, ShapeAndIds) {
  const auto fx = generate_toy_fixture({});
  EXPECT_EQ(fx.images.size(), 3u * 3u * 64u);
  EXPECT_EQ(fx.images.dim(), 32u);
  EXPECT_EQ(fx.images.instance_id(0), "domain0/class0/0000");
  EXPECT_EQ(fx.class_bank.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(fx.attributes.attributes(static_cast<int>(c)).size(), 16u);
  for (std::size_t i = 0; i < fx.images.size(); ++i) ASSERT_TRUE(is_unit(fx.images.row(i), 1e-12));
  // Basis is orthonormal.
  for (std::size_t r = 0; r < 32; ++r) {
    for (std::size_t s = 0; s <= r; ++s) EXPECT_NEAR(dot(fx.basis.row(r), fx.basis.row(s)), r == s ? 1.0 : 0.0, 1e-10);
  }
  EXPECT_EQ(fx.biased_class[0], -1);
}

TEST(ToyFixture, ZeroDispersionCollapsesToCentroids) {
  ToyFixtureOptions opt;
  opt.dispersion = 0.0;
  opt.samples_per_cell = 5;
  const auto fx = generate_toy_fixture(opt);
  for (std::size_t i = 0; i < fx.images.size(); ++i) {
    const auto cell = static_cast<std::size_t>(fx.images.domain(i)) * opt.classes + static_cast<std::size_t>(fx.images.label(i));
    for (std::size_t j = 0; j < opt.dim; ++j) EXPECT_EQ(fx.images.row(i)[j], fx.cell_centroids(cell, j));
  }
}

TEST(ToyFixture, ZeroDispersionDomainOracleIsExact) {
  ToyFixtureOptions opt;
  opt.dispersion = 0.0;
  opt.samples_per_cell = 4;
  const auto fx = generate_toy_fixture(opt);
  for (int k = 0; k < 3; ++k) {
    // Every sample, treated as synthesized for its own domain, has its NN in that domain.
    EXPECT_EQ(da_score(fx.images.domain_subset(k), fx.images), 1.0);
  }
  EXPECT_EQ(cc_score(fx.images, fx.images), 1.0);
}

TEST(ToyFixture, InfeasibleGeometryRejected) {
  ToyFixtureOptions opt;
  opt.dim = 8;
  opt.classes = 3;
  opt.domains = 3;
  EXPECT_THROW(generate_toy_fixture(opt), ConfigError);
  opt.dim = 9;
  EXPECT_NO_THROW(generate_toy_fixture(opt));
  opt.classes = 1;
  EXPECT_THROW(generate_toy_fixture(opt), ConfigError);
}

TEST(ToyFixture, OptionsJsonRoundTrip) {
  ToyFixtureOptions opt;
  opt.dim = 40;
  opt.noise = 0.25;
  opt.seed = 9;
  const auto back = ToyFixtureOptions::from_json(opt.to_json());
  EXPECT_EQ(back.to_json(), opt.to_json());
  EXPECT_THROW(ToyFixtureOptions::from_json({{"colour", 1}}), ConfigError);
}

TEST(ToyFixture, TextCacheCoversEveryDescription) {
  const auto fx = generate_toy_fixture({});
  CachedTextEncoder enc(fx.text_cache);
  for (std::size_t c = 0; c < 3; ++c) {
    const auto name = toy_class_name(c);
    EXPECT_TRUE(enc.contains(expand_template(fx.templates.class_prompt, name)));
    for (const auto& a : fx.attributes.attributes(static_cast<int>(c))) {
      EXPECT_TRUE(enc.contains(a.phrase));
      for (const auto& [domain, _] : fx.templates.targets) {
        const auto texts = compose_description_texts(name, a.phrase, fx.templates, domain);
        EXPECT_TRUE(enc.contains(texts.source));
        EXPECT_TRUE(enc.contains(texts.target));
      }
    }
  }
}

TEST(ToyFixture, WrittenBundleLoads) {
  test::TempDir tmp;
  ToyFixtureOptions opt;
  opt.samples_per_cell = 6;
  const auto fx = generate_toy_fixture(opt);
  write_toy_fixture(tmp.path(), fx);
  const auto loaded = read_feature_cache(tmp.path() / "features");
  EXPECT_EQ(loaded.labels(), fx.images.labels());
  EXPECT_EQ(loaded.domain_tags(), fx.images.domain_tags());
  EXPECT_EQ(loaded.instance_ids(), fx.images.instance_ids());
  EXPECT_EQ(loaded.class_names(), fx.images.class_names());
  EXPECT_EQ(loaded.domain_names(), fx.images.domain_names());
  ASSERT_EQ(loaded.values().size(), fx.images.values().size());
  for (std::size_t i = 0; i < loaded.values().size(); ++i) {
    ASSERT_EQ(loaded.values()[i], static_cast<double>(static_cast<float>(fx.images.values()[i]))) << i;
  }
  const auto cfg = ExperimentConfig::load(tmp.path() / "config.json");
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.source_domain, "domain0");
  EXPECT_EQ(cfg.target_domains, (std::vector<std::string>{"domain1", "domain2"}));
  const auto transform = nlohmann::json::parse(std::ifstream(tmp.path() / "fixture.json"));
  EXPECT_EQ(transform.at("basis").size(), 32u * 32u);
}

}  // namespace
}  // namespace ldfs
