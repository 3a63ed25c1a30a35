#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "ldfs/report.hpp"
#include "test_support.hpp"

namespace ldfs {
namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EvalReport sample_report() {
  EvalReport r;
  r.scores = SynthesisScores{0.95, 1.0, 0.875, 0.1 + 0.2, 96};
  r.accuracy.per_domain = {{"sketch", 0.5}, {"art", 2.0 / 3.0}};
  r.accuracy.average = (0.5 + 2.0 / 3.0) / 2;
  r.zero_shot_accuracy.per_domain = {{"sketch", 0.25}, {"art", 0.75}};
  r.zero_shot_accuracy.average = 0.5;
  r.source_validation_accuracy = 1.0;
  r.sphere_deviation = 0.0123456789;
  r.gap_curve = {{0.0, 0.8}, {0.1, 0.7}};
  r.nn_table = {{"photo/dog/1", 0, 1, "sketch/dog/7", 1, 0, 0.9}};
  return r;
}

TEST(Report, JsonRoundTripIsExact) {
  test::TempDir tmp;
  const auto r = sample_report();
  save_report(tmp.path() / "r.json", r);
  const auto back = load_report(tmp.path() / "r.json");
  EXPECT_EQ(report_to_json(back), report_to_json(r));
  EXPECT_EQ(back.scores->ds, 0.1 + 0.2);
  EXPECT_EQ(back.accuracy.per_domain.at("art"), 2.0 / 3.0);
  save_report(tmp.path() / "again.json", back);
  EXPECT_EQ(slurp(tmp.path() / "r.json"), slurp(tmp.path() / "again.json"));
}

TEST(Report, MissingScoresSerializeAsNull) {
  EvalReport r = sample_report();
  r.scores.reset();
  const auto doc = report_to_json(r);
  EXPECT_TRUE(doc.at("scores").is_null());
  EXPECT_FALSE(report_from_json(doc).scores.has_value());
}

TEST(Report, RejectsMalformedAndOutOfRange) {
  EXPECT_THROW(report_from_json({{"scores", nullptr}}), FormatError);
  auto doc = report_to_json(sample_report());
  doc["scores"]["cc"] = 1.5;
  EXPECT_THROW(report_from_json(doc), Error);
}

TEST(Report, BundleCsvContent) {
  test::TempDir tmp;
  write_report_bundle(tmp.path(), sample_report());
  EXPECT_EQ(slurp(tmp.path() / "accuracy.csv"),
            "domain,accuracy,zero_shot_accuracy\n"
            "art,0.666667,0.750000\n"
            "sketch,0.500000,0.250000\n"
            "average,0.583333,0.500000\n");
  EXPECT_EQ(slurp(tmp.path() / "gap_curve.csv"), "gamma,gap\n0.000000,0.800000\n0.100000,0.700000\n");
  EXPECT_NE(slurp(tmp.path() / "scores.csv").find("cc,0.875000\n"), std::string::npos);
  EXPECT_NE(slurp(tmp.path() / "nn_table.csv").find("photo/dog/1,0,1,sketch/dog/7,1,0,0.900000"), std::string::npos);
  for (const char* svg : {"gap_curve.svg", "accuracy.svg"}) {
    const auto text = slurp(tmp.path() / svg);
    EXPECT_EQ(text.rfind("<svg", 0), 0u) << svg;
    EXPECT_NE(text.find("</svg>"), std::string::npos) << svg;
  }
}

TEST(Report, SummaryCsv) {
  test::TempDir tmp;
  EvalReport empty;
  write_summary_csv(tmp.path() / "s.csv", {{"full/seed-0", sample_report()}, {"baseline", empty}});
  const auto text = slurp(tmp.path() / "s.csv");
  EXPECT_NE(text.find("full/seed-0,0.950000,1.000000,0.875000,0.300000,0.012346,0.583333\n"), std::string::npos);
  EXPECT_NE(text.find("baseline,,,,,0.000000,0.000000\n"), std::string::npos);
}

TEST(Report, SvgHandlesEmptyCurve) {
  EXPECT_NE(gap_curve_svg({}).find("</svg>"), std::string::npos);
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333");
}

}  // namespace
}  // namespace ldfs
