#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "bmui/rt/decoder.hpp"
#include "bmui/rt/queue.hpp"
#include "bmui/rt/source.hpp"

namespace bmui::rt {

inline constexpr std::string_view kProtocol = "bmui-ws/1";
inline constexpr std::size_t kQueueDepth = 4;
inline constexpr std::size_t kPreviewChannels = 4;
inline constexpr double kMaxGain = 4.0;

struct IntentEvent {
  long chunk = 0;  // applied before this chunk is generated
  Direction direction = Direction::rest;
  double level = 0.0;
};

struct PipelineConfig {
  double chunk_ms = 50.0;
  std::string source = "synthetic:1";
  bool fast = false;      // unpaced, lossless telemetry
  long max_chunks = 0;    // 0: until stopped or the source runs out
  bool start_paused = false;
  std::vector<control::ControlCommand> command_script;  // per chunk; rest after the end
  std::vector<IntentEvent> intent_script;
  int port = 8080;

  // invalid_config unless chunk_ms divides the model stride and the port is in [1024, 65535].
  void validate(double stride_ms = 50.0) const;
};

struct TelemetryFrame {
  long t_step = 0;
  double elbow_angle_deg = 0.0;
  double angular_velocity_deg_s = 0.0;
  Direction direction = Direction::rest;
  double magnitude = 0.0;
  bool warming_up = true;
  std::vector<double> pred_envelope;
  Matrix eeg_preview;  // [kPreviewChannels x samples]
  double processing_latency_ms = 0.0;
  double gain = 1.0;
  double threshold_fraction = 0.0;
  std::string source;
};

std::string telemetry_json(const TelemetryFrame& f);

struct RunSummary {
  long frames = 0;
  long dropped_frames = 0;  // telemetry evicted under back-pressure (paced mode only)
  double p50_latency_ms = 0.0;
  double p95_latency_ms = 0.0;
  double max_latency_ms = 0.0;
  double final_angle_deg = 0.0;
  std::string end_reason;
};

std::string summary_json(const RunSummary& s);

/// Three stages on their own threads: source/ingest -> inference+control ->
/// broadcast, joined by queues of depth kQueueDepth. The control path blocks
/// when full; telemetry drops its oldest frame when paced.
class Pipeline {
 public:
  using Subscriber = std::function<void(const std::string& json, const TelemetryFrame& frame)>;

  // startup_error when the source or models do not fit together.
  Pipeline(PipelineConfig cfg, Models models);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  // Register before start(); called on the broadcast thread.
  void subscribe(Subscriber s);
  void start();
  void request_stop();
  RunSummary wait();

  /// Control message in, "ack"/"err" JSON out. Thread-safe; takes effect at
  /// the next chunk the owning stage handles.
  std::string handle_message(const std::string& text);

  std::string hello_json() const;
  long last_step() const noexcept { return last_step_.load(); }

 private:
  struct Chunk {
    Matrix eeg;
    long index = 0;
    long source_epoch = 0;
    double rate_hz = 0.0;
    std::string source;
    std::chrono::steady_clock::time_point acquired;
  };

  void source_stage();
  void inference_stage();
  void broadcast_stage();

  PipelineConfig cfg_;
  Models models_;
  std::size_t n_eeg_ch_;

  std::mutex source_mu_;
  std::unique_ptr<Source> source_;
  std::unique_ptr<Source> pending_source_;
  std::vector<std::pair<Direction, double>> pending_intents_;

  std::atomic<double> gain_{1.0};
  std::atomic<double> threshold_{0.0};
  std::atomic<bool> reset_arm_{false};
  std::atomic<bool> paused_{false};
  std::atomic<bool> stop_{false};
  std::atomic<long> last_step_{-1};
  std::mutex pause_mu_;
  std::condition_variable pause_cv_;

  BoundedQueue<Chunk> chunks_{kQueueDepth};
  BoundedQueue<TelemetryFrame> frames_{kQueueDepth};
  std::vector<Subscriber> subscribers_;
  std::vector<std::thread> threads_;

  std::mutex summary_mu_;
  RunSummary summary_;
  std::vector<double> latencies_;
  std::atomic<long> dropped_{0};
  bool started_ = false;
};

// Script file: one "<direction> <magnitude> [repeat]" per line, '#' comments.
std::vector<control::ControlCommand> load_command_script(const std::filesystem::path& path);
// Intent file: one "<chunk> <direction> <level>" per line.
std::vector<IntentEvent> load_intent_script(const std::filesystem::path& path);

}  // namespace bmui::rt
