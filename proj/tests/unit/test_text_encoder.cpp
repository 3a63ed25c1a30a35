#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "ldfs/text_engine.hpp"

namespace ldfs {
namespace {

using nlohmann::json;

// Embeds each text as a one-hot on (length mod dim).
class FakeService {
 public:
  explicit FakeService(bool wrapped) {
    server_.Post("/embed", [wrapped, this](const httplib::Request& req, httplib::Response& res) {
      ++calls_;
      const auto body = json::parse(req.body);
      json rows = json::array();
      for (const auto& t : body.at("texts")) {
        std::vector<double> v(4, 0.0);
        v[t.get<std::string>().size() % 4] = 2.0;
        rows.push_back(v);
      }
      res.set_content((wrapped ? json{{"embeddings", rows}} : rows).dump(), "application/json");
    });
    server_.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }
  int calls() const { return calls_; }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
};

TEST(HttpTextEncoder, AcceptsBareArrayReply) {
  FakeService service(false);
  HttpTextEncoder enc(service.url("/embed"), 4);
  const std::vector<std::string> texts{"ab", "abc"};
  const auto out = enc.encode(texts);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0][2], 1.0);  // normalized
  EXPECT_EQ(out[1][3], 1.0);
}

TEST(HttpTextEncoder, AcceptsWrappedReply) {
  FakeService service(true);
  HttpTextEncoder enc(service.url("/embed"), 4);
  EXPECT_EQ(enc.encode_one("a")[1], 1.0);
}

TEST(HttpTextEncoder, WrongDimensionRejected) {
  FakeService service(false);
  HttpTextEncoder enc(service.url("/embed"), 3);
  EXPECT_THROW(enc.encode_one("a"), DimensionMismatch);
}

TEST(HttpTextEncoder, ServiceErrorsSurface) {
  FakeService service(false);
  HttpTextEncoder enc(service.url("/broken"), 4);
  EXPECT_THROW(enc.encode_one("a"), Error);
  EXPECT_THROW(HttpTextEncoder("ftp://x", 4), ConfigError);
}

TEST(ChainedTextEncoder, FallsBackOnlyForMissingPhrases) {
  FakeService service(false);
  FeatureMatrix cache(4);
  cache.add_row(std::vector<double>{0, 0, 0, 1}, kUnlabeled, -1, phrase_key("cached"));
  ChainedTextEncoder enc(std::make_unique<CachedTextEncoder>(cache), std::make_unique<HttpTextEncoder>(service.url("/embed"), 4));
  const std::vector<std::string> hits{"cached"};
  EXPECT_EQ(enc.encode(hits)[0][3], 1.0);
  EXPECT_EQ(service.calls(), 0);
  const std::vector<std::string> mixed{"a", "cached", "a"};
  const auto out = enc.encode(mixed);
  EXPECT_EQ(service.calls(), 1);
  EXPECT_EQ(out[0][1], 1.0);
  EXPECT_EQ(out[1][3], 1.0);
  EXPECT_EQ(out[2][1], 1.0);
}

TEST(MakeTextEncoder, EnvironmentSelectsService) {
  FakeService service(false);
  FeatureMatrix cache(4);
  cache.add_row(std::vector<double>{1, 0, 0, 0}, kUnlabeled, -1, phrase_key("x"));

  ::unsetenv(kTextEncoderUrlEnv);
  auto offline = make_text_encoder(cache);
  EXPECT_THROW(offline->encode_one("abc"), MissingPhrase);

  ::setenv(kTextEncoderUrlEnv, service.url("/embed").c_str(), 1);
  auto online = make_text_encoder(cache);
  ::unsetenv(kTextEncoderUrlEnv);
  EXPECT_EQ(online->encode_one("abc")[3], 1.0);
  EXPECT_EQ(online->encode_one("x")[0], 1.0);
}

}  // namespace
}  // namespace ldfs
