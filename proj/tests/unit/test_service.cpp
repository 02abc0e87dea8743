#include <gtest/gtest.h>

#include <thread>

#include "lensforge/service.hpp"
#include "oracles.hpp"

// After the Eigen-based headers: <resolv.h> defines a `_res` macro.
#include <httplib.h>
#include <nlohmann/json.hpp>

using namespace lensforge;
namespace lt = lensforge::testing;
using nlohmann::json;

namespace {

class Server {
 public:
  explicit Server(AssetRegistry reg) : service_(std::move(reg), ServiceConfig{}) {
    port_ = service_.bind_any_port();
    if (port_ > 0) thread_ = std::thread([this] { service_.listen_after_bind(); });
    while (port_ > 0 && !service_.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Server() {
    service_.stop();
    if (thread_.joinable()) thread_.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  int port() const { return port_; }

 private:
  DofService service_;
  int port_ = -1;
  std::thread thread_;
};

std::string as_string(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::uint64_t seed = 1;
    for (const char* id : {"MOS-S1", "MOS-S2", "DoubleGauss", "6P"}) {
      save_psflib(lt::random_library(id, 4, 6, 16, 7, inverse_uniform_depths(11), seed++),
                  dir_ / (std::string(id) + ".psfl"));
    }
    server_ = std::make_unique<Server>(AssetRegistry::load_dir(dir_.path()));
    ASSERT_GT(server_->port(), 0);
    std::mt19937_64 rng(3);
    image_ = lt::random_image(48, 80, rng);
    image_ = decode_png(encode_png(image_));  // on the 8-bit grid
    depth_ = lt::random_depth(48, 80, rng, 0.5, 9.0);
  }

  std::string upload(const RgbImage& img, const DepthMap& depth, httplib::Result* out = nullptr) {
    auto c = server_->client();
    httplib::MultipartFormDataItems items = {
        {"image", as_string(encode_png(img)), "image.png", "image/png"},
        {"depth", as_string(encode_pfm(depth)), "depth.pfm", "application/octet-stream"},
    };
    auto res = c.Post("/api/session", items);
    if (!res || res->status != 200) {
      if (out) *out = std::move(res);
      return {};
    }
    return json::parse(res->body).at("session_id").get<std::string>();
  }

  httplib::Result render(const json& body) {
    auto c = server_->client();
    return c.Post("/api/render", body.dump(), "application/json");
  }

  lt::TempDir dir_;
  std::unique_ptr<Server> server_;
  RgbImage image_;
  DepthMap depth_;
};

}  // namespace

TEST_F(ServiceTest, LensListIsCompleteAndDeterministic) {
  auto c = server_->client();
  auto a = c.Get("/api/lenses");
  auto b = c.Get("/api/lenses");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->status, 200);
  EXPECT_EQ(a->body, b->body);
  const auto j = json::parse(a->body);
  ASSERT_EQ(j["lenses"].size(), 4u);
  bool found = false;
  for (const auto& l : j["lenses"]) {
    if (l["id"] == "MOS-S1") {
      found = true;
      EXPECT_EQ(l["focal_length"].get<double>(), 20.0);
      EXPECT_EQ(l["f_number"].get<double>(), 5.0);
    }
  }
  EXPECT_TRUE(found);
}

TEST(ServiceEmpty, NoAssetsGives503) {
  Server s{AssetRegistry{}};
  ASSERT_GT(s.port(), 0);
  auto c = s.client();
  auto r = c.Get("/api/lenses");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 503);
  EXPECT_TRUE(json::parse(r->body).contains("error"));
}

TEST_F(ServiceTest, SessionReportsClampedStatsAndHoles) {
  DepthMap d = depth_;
  for (int x = 0; x < 8; ++x) d.set_missing(0, x);
  auto c = server_->client();
  httplib::MultipartFormDataItems items = {
      {"image", as_string(encode_png(image_)), "image.png", "image/png"},
      {"depth", as_string(encode_pfm(d)), "depth.pfm", "application/octet-stream"},
  };
  auto r = c.Post("/api/session", items);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = json::parse(r->body);
  EXPECT_GE(j["depth_stats"]["min"].get<double>(), 0.7 - 1e-6);
  EXPECT_NEAR(j["depth_stats"]["hole_fraction"].get<double>(), 8.0 / (48 * 80), 1e-12);
  EXPECT_EQ(j["width"], 80);
  EXPECT_EQ(j["downsample"], 1);
}

TEST_F(ServiceTest, SessionRejectsMismatchAndGarbage) {
  httplib::Result r1;
  EXPECT_EQ(upload(image_, DepthMap(40, 80, 2.0f), &r1), "");
  ASSERT_TRUE(r1);
  EXPECT_EQ(r1->status, 400);
  EXPECT_EQ(json::parse(r1->body)["field"], "depth");

  auto c = server_->client();
  httplib::MultipartFormDataItems items = {
      {"image", "not a png", "image.png", "image/png"},
      {"depth", as_string(encode_pfm(depth_)), "depth.pfm", "application/octet-stream"},
  };
  auto r2 = c.Post("/api/session", items);
  ASSERT_TRUE(r2);
  EXPECT_EQ(r2->status, 400);
  httplib::MultipartFormDataItems missing = {{"image", as_string(encode_png(image_)), "image.png", "image/png"}};
  auto r3 = c.Post("/api/session", missing);
  ASSERT_TRUE(r3);
  EXPECT_EQ(r3->status, 400);
}

TEST_F(ServiceTest, AllSharpRenderIsPixelEqualAndCached) {
  const auto sid = upload(image_, depth_);
  ASSERT_FALSE(sid.empty());
  const json body{{"session_id", sid}, {"lens_id", "MOS-S2"}, {"sharp_lo_m", 0.7}, {"sharp_hi_m", nullptr}};
  auto a = render(body);
  ASSERT_TRUE(a);
  ASSERT_EQ(a->status, 200);
  EXPECT_EQ(a->get_header_value("Content-Type"), "image/png");
  const auto png = std::vector<std::uint8_t>(a->body.begin(), a->body.end());
  EXPECT_EQ(decode_png(png), image_);
  EXPECT_EQ(a->get_header_value("X-Cache"), "miss");
  auto b = render(body);
  ASSERT_TRUE(b);
  EXPECT_EQ(b->get_header_value("X-Cache"), "hit");
  EXPECT_EQ(a->body, b->body);
}

TEST_F(ServiceTest, DifferentLensesGiveDifferentImages) {
  const auto sid = upload(image_, depth_);
  ASSERT_FALSE(sid.empty());
  auto a = render({{"session_id", sid}, {"lens_id", "MOS-S1"}, {"sharp_lo_m", 1.0}, {"sharp_hi_m", 1.2}});
  auto b = render({{"session_id", sid}, {"lens_id", "6P"}, {"sharp_lo_m", 1.0}, {"sharp_hi_m", 1.2}});
  ASSERT_TRUE(a && b);
  ASSERT_EQ(a->status, 200);
  ASSERT_EQ(b->status, 200);
  const auto ia = decode_png(std::vector<std::uint8_t>(a->body.begin(), a->body.end()));
  const auto ib = decode_png(std::vector<std::uint8_t>(b->body.begin(), b->body.end()));
  double l1 = 0.0;
  for (std::size_t i = 0; i < ia.data.size(); ++i) l1 += std::abs(ia.data[i] - ib.data[i]);
  EXPECT_GT(l1, 0.0);
}

TEST_F(ServiceTest, RenderErrorStatuses) {
  const auto sid = upload(image_, depth_);
  ASSERT_FALSE(sid.empty());
  auto inverted = render({{"session_id", sid}, {"lens_id", "MOS-S1"}, {"sharp_lo_m", 3.0}, {"sharp_hi_m", 2.0}});
  ASSERT_TRUE(inverted);
  EXPECT_EQ(inverted->status, 422);
  auto no_session = render({{"session_id", "nope"}, {"lens_id", "MOS-S1"}, {"sharp_lo_m", 1.0}});
  ASSERT_TRUE(no_session);
  EXPECT_EQ(no_session->status, 404);
  auto no_lens = render({{"session_id", sid}, {"lens_id", "Zeiss"}, {"sharp_lo_m", 1.0}});
  ASSERT_TRUE(no_lens);
  EXPECT_EQ(no_lens->status, 404);
  auto no_field = render({{"session_id", sid}, {"lens_id", "MOS-S1"}, {"sharp_lo_m", 1.0}, {"source", "field"}});
  ASSERT_TRUE(no_field);
  EXPECT_EQ(no_field->status, 400);
  auto c = server_->client();
  auto bad_json = c.Post("/api/render", "{oops", "application/json");
  ASSERT_TRUE(bad_json);
  EXPECT_EQ(bad_json->status, 400);
}
