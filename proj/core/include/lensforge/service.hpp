#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "lensforge/dof.hpp"

namespace lensforge {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8787;
  std::filesystem::path static_dir;  // served at "/", optional
  std::size_t cache_entries_per_session = 16;
};

/// Local HTTP front end for interactive depth-of-field rendering.
///
///   GET  /api/lenses   lens list (503 when no assets are loaded)
///   POST /api/session  multipart "image" (PNG) + "depth" (PFM or 16-bit PNG)
///   POST /api/render   JSON {session_id, lens_id, sharp_lo_m, sharp_hi_m, source} -> PNG
class DofService {
 public:
  DofService(AssetRegistry assets, ServiceConfig config);
  ~DofService();
  DofService(const DofService&) = delete;
  DofService& operator=(const DofService&) = delete;

  /// Bind and serve until stop(); returns false if the socket cannot be bound.
  bool listen();
  /// Bind to an ephemeral port (for tests); returns the port or -1.
  int bind_any_port();
  bool listen_after_bind();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lensforge
