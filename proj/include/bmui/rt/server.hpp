#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "bmui/rt/pipeline.hpp"

namespace bmui::rt {

struct ServerConfig {
  std::string address = "0.0.0.0";
  int port = 8080;  // 0 binds an ephemeral port
  std::filesystem::path static_dir;  // empty: built-in status page only
};

/// HTTP + WebSocket front end. Serves files from `static_dir` at `/`, and
/// the "bmui-ws/1" protocol at `/ws`: a hello frame on connect, telemetry
/// frames as they are produced, one ack/err reply per client message.
class Server {
 public:
  // Subscribes to `pipeline`; construct before pipeline.start().
  Server(Pipeline& pipeline, ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts the I/O thread; returns the bound port. startup_error on failure.
  int start();
  void stop();
  // Queues a text frame for every connected client.
  void broadcast(const std::string& text);
  std::size_t clients() const;

  // Per-client backlog beyond which unsent telemetry is discarded.
  static constexpr std::size_t kMaxBacklog = 16;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Content type for a file extension; "application/octet-stream" when unknown.
std::string mime_type(const std::filesystem::path& path);

/// Maps a request target under `root`; nullopt for traversal attempts.
std::optional<std::filesystem::path> resolve_static(const std::filesystem::path& root, std::string_view target);

}  // namespace bmui::rt
