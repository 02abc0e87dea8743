#include "lensforge/service.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <mutex>
#include <random>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "lensforge/error.hpp"

namespace lensforge {
namespace {

using nlohmann::json;

struct Session {
  RgbImage image;
  DepthMap depth;
  int downsample = 1;
  std::mutex render_mutex;  // renders within one session are serialized
  std::deque<std::pair<std::string, std::shared_ptr<const std::string>>> cache;  // param hash -> PNG
};

std::string random_session_id() {
  static std::mutex mu;
  static std::random_device rd;
  std::lock_guard lock(mu);
  char buf[33];
  for (int i = 0; i < 4; ++i) std::snprintf(buf + 8 * i, 9, "%08x", static_cast<unsigned>(rd()));
  return std::string(buf, 32);
}

std::string param_hash(const std::string& canonical) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Integer box downsampling so that previews fit the lens grid.
RgbImage box_downsample(const RgbImage& img, int f) {
  RgbImage out(img.height / f, img.width / f);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        double s = 0.0;
        for (int dy = 0; dy < f; ++dy) {
          for (int dx = 0; dx < f; ++dx) s += img.at(c, y * f + dy, x * f + dx);
        }
        out.at(c, y, x) = static_cast<float>(s / (f * f));
      }
    }
  }
  return out;
}

DepthMap box_downsample(const DepthMap& d, int f) {
  DepthMap out(d.height / f, d.width / f);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double s = 0.0;
      int n = 0;
      for (int dy = 0; dy < f; ++dy) {
        for (int dx = 0; dx < f; ++dx) {
          if (d.is_valid(y * f + dy, x * f + dx)) {
            s += d.at(y * f + dy, x * f + dx);
            ++n;
          }
        }
      }
      if (n) {
        out.at(y, x) = static_cast<float>(s / n);
      } else {
        out.set_missing(y, x);
      }
    }
  }
  return out;
}

double json_depth(const json& v, const char* name) {
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
  }
  throw ValidationError(std::string(name) + " must be a number, \"inf\" or null");
}

}  // namespace

struct DofService::Impl {
  AssetRegistry assets;
  ServiceConfig config;
  httplib::Server server;
  std::mutex sessions_mutex;
  std::map<std::string, std::shared_ptr<Session>> sessions;
  int max_height = 0;
  int max_width = 0;

  Impl(AssetRegistry a, ServiceConfig c) : assets(std::move(a)), config(std::move(c)) {
    // Uploads larger than every lens grid are box-downsampled to fit the smallest one.
    for (const auto& asset : assets.assets()) {
      const int h = asset.n_h * asset.m;
      const int w = asset.n_w * asset.m;
      if (max_height == 0 || h < max_height) max_height = h;
      if (max_width == 0 || w < max_width) max_width = w;
    }
    routes();
  }

  void routes() {
    server.Get("/api/lenses", [this](const httplib::Request&, httplib::Response& res) { lenses(res); });
    server.Post("/api/session",
                [this](const httplib::Request& req, httplib::Response& res) { create_session(req, res); });
    server.Post("/api/render", [this](const httplib::Request& req, httplib::Response& res) { render(req, res); });
    if (!config.static_dir.empty()) {
      if (!server.set_mount_point("/", config.static_dir.string())) {
        spdlog::warn("static directory {} not found; UI bundle will not be served", config.static_dir.string());
      }
    }
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "internal error");
      }
    });
  }

  void lenses(httplib::Response& res) {
    if (assets.empty()) {
      send_error(res, 503, "no lens assets loaded");
      return;
    }
    json list = json::array();
    for (const auto& a : assets.assets()) {
      json sources = json::array();
      if (a.library) sources.push_back("library");
      if (a.field) sources.push_back("field");
      list.push_back({{"id", a.id},
                      {"focal_length", a.focal_length},
                      {"f_number", a.f_number},
                      {"fov", a.fov_full},
                      {"source", a.library ? "library" : "field"},
                      {"sources", sources}});
    }
    res.set_content(json{{"lenses", list}}.dump(), "application/json");
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    if (assets.empty()) {
      send_error(res, 503, "no lens assets loaded");
      return;
    }
    if (!req.has_file("image")) return send_error(res, 400, "missing multipart field", "image");
    if (!req.has_file("depth")) return send_error(res, 400, "missing multipart field", "depth");
    const auto image_part = req.get_file_value("image");
    const auto depth_part = req.get_file_value("depth");
    double scale_mm = 1.0;
    if (req.has_file("depth_scale_mm")) {
      try {
        scale_mm = std::stod(req.get_file_value("depth_scale_mm").content);
      } catch (const std::exception&) {
        return send_error(res, 400, "depth scale is not a number", "depth_scale_mm");
      }
    }
    auto session = std::make_shared<Session>();
    auto bytes = [](const std::string& s) {
      return std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
    };
    try {
      session->image = decode_png(bytes(image_part.content));
    } catch (const Error& e) {
      return send_error(res, 400, std::string("image is not a readable PNG: ") + e.what(), "image");
    }
    try {
      session->depth = decode_depth(bytes(depth_part.content), scale_mm);
    } catch (const Error& e) {
      return send_error(res, 400, std::string("depth is not a readable PFM or 16-bit PNG: ") + e.what(), "depth");
    }
    if (session->image.height != session->depth.height || session->image.width != session->depth.width) {
      return send_error(res, 400,
                        "image is " + std::to_string(session->image.height) + "x" +
                            std::to_string(session->image.width) + " but depth is " +
                            std::to_string(session->depth.height) + "x" + std::to_string(session->depth.width),
                        "depth");
    }
    if (session->depth.valid_count() == 0) return send_error(res, 400, "depth map has no valid pixels", "depth");
    int f = 1;
    while (session->image.height / f > max_height || session->image.width / f > max_width) ++f;
    if (f > 1) {
      session->image = box_downsample(session->image, f);
      session->depth = box_downsample(session->depth, f);
    }
    session->downsample = f;
    clamp_near_depths(session->depth);
    const DepthStats st = depth_stats(session->depth);
    const std::string id = random_session_id();
    {
      std::lock_guard lock(sessions_mutex);
      sessions[id] = session;
    }
    json body{{"session_id", id},
              {"width", session->image.width},
              {"height", session->image.height},
              {"downsample", f},
              {"depth_stats",
               {{"min", st.min},
                {"max", st.max},
                {"median", st.median},
                {"hole_fraction", st.hole_fraction},
                {"valid_pixels", st.valid}}}};
    res.set_content(body.dump(), "application/json");
  }

  void render(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, 400, "request body is not valid JSON");
    }
    if (!body.is_object()) return send_error(res, 400, "request body must be a JSON object");
    const std::string sid = body.value("session_id", "");
    std::shared_ptr<Session> session;
    {
      std::lock_guard lock(sessions_mutex);
      auto it = sessions.find(sid);
      if (it != sessions.end()) session = it->second;
    }
    if (!session) return send_error(res, 404, "unknown session", "session_id");
    const std::string lens_id = body.value("lens_id", "");
    const LensAsset* asset = assets.find(lens_id);
    if (!asset) return send_error(res, 404, "unknown lens id '" + lens_id + "'", "lens_id");
    RenderRequest rr;
    try {
      rr.source = parse_psf_source(body.value("source", asset->library ? "library" : "field"));
    } catch (const ValidationError& e) {
      return send_error(res, 400, e.what(), "source");
    }
    if (!asset->has(rr.source)) {
      return send_error(res, 400, "lens '" + lens_id + "' has no " + to_string(rr.source) + " source", "source");
    }
    try {
      if (!body.contains("sharp_lo_m")) throw ValidationError("sharp_lo_m is required");
      rr.sharp.lo = json_depth(body["sharp_lo_m"], "sharp_lo_m");
      rr.sharp.hi = body.contains("sharp_hi_m") ? json_depth(body["sharp_hi_m"], "sharp_hi_m")
                                                : std::numeric_limits<double>::infinity();
      rr.sharp.validate();
    } catch (const ValidationError& e) {
      return send_error(res, 422, e.what(), "sharp_interval");
    }
    const std::string key = param_hash(lens_id + "|" + to_string(rr.source) + "|" + std::to_string(rr.sharp.lo) +
                                       "|" + std::to_string(rr.sharp.hi));
    std::lock_guard session_lock(session->render_mutex);
    std::shared_ptr<const std::string> png;
    for (const auto& [k, v] : session->cache) {
      if (k == key) png = v;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const bool hit = png != nullptr;
    if (!hit) {
      rr.image = session->image;
      rr.depth = session->depth;
      rr.lens_id = lens_id;
      RgbImage out;
      try {
        out = render_dof(rr, *asset);
      } catch (const ValidationError& e) {
        return send_error(res, 400, e.what());
      }
      const auto encoded = encode_png(out);
      png = std::make_shared<const std::string>(encoded.begin(), encoded.end());
      session->cache.emplace_back(key, png);
      while (session->cache.size() > config.cache_entries_per_session) session->cache.pop_front();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.set_header("X-Render-Time-Ms", std::to_string(ms));
    res.set_header("X-Cache", hit ? "hit" : "miss");
    res.set_header("ETag", "\"" + key + "\"");
    res.set_content(*png, "image/png");
  }
};

DofService::DofService(AssetRegistry assets, ServiceConfig config)
    : impl_(std::make_unique<Impl>(std::move(assets), std::move(config))) {}

DofService::~DofService() { stop(); }

bool DofService::listen() { return impl_->server.listen(impl_->config.host, impl_->config.port); }

int DofService::bind_any_port() { return impl_->server.bind_to_any_port(impl_->config.host); }

bool DofService::listen_after_bind() { return impl_->server.listen_after_bind(); }

void DofService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

bool DofService::running() const { return impl_->server.is_running(); }

}  // namespace lensforge
