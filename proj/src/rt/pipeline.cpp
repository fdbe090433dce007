#include "bmui/rt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bmui/error.hpp"
#include "json.hpp"

namespace bmui::rt {
using nlohmann::json;
using Clock = std::chrono::steady_clock;

void PipelineConfig::validate(double stride_ms) const {
  if (!(chunk_ms > 0.0)) throw Error(ErrorCode::invalid_config, "chunk_ms must be positive");
  const double ratio = stride_ms / chunk_ms;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
    throw Error(ErrorCode::invalid_config, "chunk_ms must divide the model stride");
  }
  if (port < 1024 || port > 65535) throw Error(ErrorCode::invalid_config, "port must be in [1024, 65535]");
  if (max_chunks < 0) throw Error(ErrorCode::invalid_config, "max_chunks must be non-negative");
}

std::string telemetry_json(const TelemetryFrame& f) {
  json preview = json::array();
  for (std::size_t c = 0; c < f.eeg_preview.rows(); ++c) {
    auto row = f.eeg_preview.row(c);
    preview.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json j = {{"type", "telemetry"},
            {"t_step", f.t_step},
            {"elbow_angle_deg", f.elbow_angle_deg},
            {"angular_velocity_deg_s", f.angular_velocity_deg_s},
            {"direction", std::string(to_string(f.direction))},
            {"magnitude", f.magnitude},
            {"warming_up", f.warming_up},
            {"pred_envelope", f.pred_envelope},
            {"eeg_preview", preview},
            {"processing_latency_ms", f.processing_latency_ms},
            {"gain", f.gain},
            {"threshold_fraction", f.threshold_fraction},
            {"source", f.source}};
  return j.dump();
}

std::string summary_json(const RunSummary& s) {
  return json{{"type", "summary"},
              {"frames", s.frames},
              {"dropped_frames", s.dropped_frames},
              {"p50_latency_ms", s.p50_latency_ms},
              {"p95_latency_ms", s.p95_latency_ms},
              {"max_latency_ms", s.max_latency_ms},
              {"final_angle_deg", s.final_angle_deg},
              {"end_reason", s.end_reason}}
      .dump();
}

Pipeline::Pipeline(PipelineConfig cfg, Models models) : cfg_(std::move(cfg)), models_(std::move(models)) {
  if (!models_.regressor || !models_.classifier) throw Error(ErrorCode::startup_error, "models not loaded");
  try {
    // Synthetic sources take their channel count from the model.
    source_ = make_source(cfg_.source, models_.regressor->config().n_in);
  } catch (const Error& e) {
    throw Error(ErrorCode::startup_error, e.what());
  }
  n_eeg_ch_ = source_->n_channels();
  OnlineDecoder probe(models_, source_->rate_hz(), n_eeg_ch_);  // throws on shape mismatch
  paused_ = cfg_.start_paused;
}

Pipeline::~Pipeline() {
  request_stop();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
}

void Pipeline::subscribe(Subscriber s) {
  if (started_) throw Error(ErrorCode::invalid_argument, "subscribe before start");
  subscribers_.push_back(std::move(s));
}

void Pipeline::start() {
  if (started_) return;
  started_ = true;
  threads_.emplace_back([this] { source_stage(); });
  threads_.emplace_back([this] { inference_stage(); });
  threads_.emplace_back([this] { broadcast_stage(); });
}

void Pipeline::request_stop() {
  stop_ = true;
  pause_cv_.notify_all();
  chunks_.close();
}

RunSummary Pipeline::wait() {
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  std::lock_guard lk(summary_mu_);
  RunSummary s = summary_;
  s.dropped_frames = dropped_.load();
  if (!latencies_.empty()) {
    auto v = latencies_;
    std::sort(v.begin(), v.end());
    auto at = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
      return v[std::min(idx, v.size() - 1)];
    };
    s.p50_latency_ms = at(0.50);
    s.p95_latency_ms = at(0.95);
    s.max_latency_ms = v.back();
  }
  if (s.end_reason.empty()) s.end_reason = "stopped";
  return s;
}

void Pipeline::source_stage() {
  long index = 0, epoch = 0;
  std::size_t next_event = 0;
  auto events = cfg_.intent_script;
  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.chunk < b.chunk; });
  std::string end_reason = "stopped";
  Clock::time_point deadline = Clock::now();
  const auto period =
      std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double, std::milli>(cfg_.chunk_ms));

  while (!stop_) {
    if (paused_) {
      std::unique_lock lk(pause_mu_);
      pause_cv_.wait(lk, [&] { return !paused_ || stop_; });
      deadline = Clock::now();
      continue;
    }
    if (cfg_.max_chunks > 0 && index >= cfg_.max_chunks) {
      end_reason = "chunk limit reached";
      break;
    }
    std::optional<Matrix> eeg;
    std::string spec;
    double rate = 0.0;
    {
      std::lock_guard lk(source_mu_);
      if (pending_source_) {
        source_ = std::move(pending_source_);
        ++epoch;
      }
      for (const auto& [d, level] : pending_intents_) source_->set_intent(d, level);
      pending_intents_.clear();
      while (next_event < events.size() && events[next_event].chunk <= index) {
        source_->set_intent(events[next_event].direction, events[next_event].level);
        ++next_event;
      }
      const auto samples = static_cast<std::size_t>(std::llround(source_->rate_hz() * cfg_.chunk_ms / 1000.0));
      eeg = source_->next_chunk(samples);
      spec = source_->spec();
      rate = source_->rate_hz();
    }
    if (!eeg) {
      end_reason = "source exhausted";
      break;
    }
    if (!cfg_.fast) {
      deadline += period;
      std::this_thread::sleep_until(deadline);
    }
    Chunk c{std::move(*eeg), index++, epoch, rate, std::move(spec), Clock::now()};
    if (!chunks_.push_wait(std::move(c))) break;
  }
  {
    std::lock_guard lk(summary_mu_);
    if (summary_.end_reason.empty()) summary_.end_reason = end_reason;
  }
  chunks_.close();
}

void Pipeline::inference_stage() {
  std::unique_ptr<OnlineDecoder> decoder;
  long epoch = -1;
  double rate = 0.0;
  while (auto chunk = chunks_.pop()) {
    if (!decoder || chunk->rate_hz != rate) {
      decoder = std::make_unique<OnlineDecoder>(models_, chunk->rate_hz, n_eeg_ch_);
      rate = chunk->rate_hz;
    } else if (chunk->source_epoch != epoch) {
      decoder->reset_signal();
    }
    epoch = chunk->source_epoch;
    decoder->gain = gain_.load();
    decoder->set_threshold_fraction(threshold_.load());
    const auto t = static_cast<std::size_t>(chunk->index);
    DecoderStep step;
    if (!cfg_.command_script.empty()) {
      const control::ControlCommand cmd =
          t < cfg_.command_script.size() ? cfg_.command_script[t] : control::ControlCommand{};
      step = decoder->process(chunk->eeg, cmd);
    } else {
      step = decoder->process(chunk->eeg);
    }
    if (reset_arm_.exchange(false)) {
      decoder->reset_arm();
      step.arm = decoder->arm();
    }
    TelemetryFrame f;
    f.t_step = chunk->index;
    f.elbow_angle_deg = step.arm.elbow_angle_deg;
    f.angular_velocity_deg_s = step.arm.angular_velocity_deg_s;
    f.direction = step.command.direction;
    f.magnitude = step.command.magnitude;
    f.warming_up = step.warming_up;
    f.pred_envelope = std::move(step.pred_envelope);
    const std::size_t pc = std::min(kPreviewChannels, chunk->eeg.rows());
    const std::size_t stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rate / 100.0)));
    f.eeg_preview = Matrix(pc, (chunk->eeg.cols() + stride - 1) / stride);
    for (std::size_t c = 0; c < pc; ++c)
      for (std::size_t k = 0; k * stride < chunk->eeg.cols(); ++k) f.eeg_preview(c, k) = chunk->eeg(c, k * stride);
    f.gain = decoder->gain;
    f.threshold_fraction = decoder->threshold_fraction();
    f.source = chunk->source;
    f.processing_latency_ms = std::chrono::duration<double, std::milli>(Clock::now() - chunk->acquired).count();
    {
      std::lock_guard lk(summary_mu_);
      latencies_.push_back(f.processing_latency_ms);
      ++summary_.frames;
      summary_.final_angle_deg = f.elbow_angle_deg;
    }
    last_step_ = f.t_step;
    if (cfg_.fast) {
      if (!frames_.push_wait(std::move(f))) break;
    } else if (frames_.push_drop_oldest(std::move(f))) {
      ++dropped_;
    }
  }
  frames_.close();
}

void Pipeline::broadcast_stage() {
  while (auto f = frames_.pop()) {
    const std::string text = telemetry_json(*f);
    for (const auto& s : subscribers_) s(text, *f);
  }
}

namespace {

std::string ack(const std::string& request, long t_step) {
  return json{{"type", "ack"}, {"request", request}, {"detail", "ok"}, {"t_step", t_step}}.dump();
}

std::string err(const std::string& detail, const std::string& field, const json& value) {
  return json{{"type", "err"}, {"detail", detail}, {"field", field}, {"value", value}}.dump();
}

}  // namespace

std::string Pipeline::handle_message(const std::string& text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::exception&) {
    return err("malformed JSON", "", text.substr(0, 200));
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return err("message needs a string 'type'", "type", msg.is_object() && msg.contains("type") ? msg["type"] : json());
  }
  const std::string type = msg["type"];
  auto number = [&](const char* key, double lo, double hi, double& out) -> std::string {
    if (!msg.contains(key) || !msg[key].is_number()) {
      return err(std::string("'") + key + "' must be a number", key, msg.value(key, json()));
    }
    out = msg[key].get<double>();
    if (!(out >= lo && out <= hi)) {
      std::ostringstream os;
      os << "'" << key << "' must be in [" << lo << ", " << hi << "]";
      return err(os.str(), key, msg[key]);
    }
    return {};
  };
  const long t = last_step_.load();
  if (type == "set_gain") {
    double v = 0.0;
    if (auto e = number("value", 0.0, kMaxGain, v); !e.empty()) return e;
    gain_ = v;
    return ack(type, t);
  }
  if (type == "set_threshold_fraction") {
    double v = 0.0;
    if (auto e = number("value", 0.0, 1.0, v); !e.empty()) return e;
    if (v >= 1.0) return err("'value' must be in [0, 1)", "value", msg["value"]);
    threshold_ = v;
    return ack(type, t);
  }
  if (type == "intent") {
    if (!msg.contains("direction") || !msg["direction"].is_string()) {
      return err("'direction' must be flex, extend or rest", "direction", msg.value("direction", json()));
    }
    const auto d = parse_direction(msg["direction"].get<std::string>());
    if (!d) return err("'direction' must be flex, extend or rest", "direction", msg["direction"]);
    double level = 0.0;
    if (auto e = number("level", 0.0, 1.0, level); !e.empty()) return e;
    std::lock_guard lk(source_mu_);
    const Source& target = pending_source_ ? *pending_source_ : *source_;
    if (!target.accepts_intent()) return err("current source does not take intent", "type", type);
    pending_intents_.emplace_back(*d, level);
    return ack(type, t);
  }
  if (type == "set_source") {
    if (!msg.contains("value") || !msg["value"].is_string()) {
      return err("'value' must be a source spec", "value", msg.value("value", json()));
    }
    try {
      auto src = make_source(msg["value"].get<std::string>(), n_eeg_ch_);
      if (src->n_channels() != n_eeg_ch_) {
        return err("source channel count differs from the model", "value", msg["value"]);
      }
      OnlineDecoder probe(models_, src->rate_hz(), n_eeg_ch_);
      std::lock_guard lk(source_mu_);
      pending_source_ = std::move(src);
      pending_intents_.clear();
    } catch (const Error& e) {
      return err(e.what(), "value", msg["value"]);
    }
    return ack(type, t);
  }
  if (type == "start") {
    paused_ = false;
    pause_cv_.notify_all();
    return ack(type, t);
  }
  if (type == "stop") {
    paused_ = true;
    return ack(type, t);
  }
  if (type == "reset_arm") {
    reset_arm_ = true;
    return ack(type, t);
  }
  return err("unknown message type", "type", type);
}

std::string Pipeline::hello_json() const {
  const auto& rc = models_.regressor->config();
  return json{{"type", "hello"},
              {"protocol", kProtocol},
              {"chunk_ms", cfg_.chunk_ms},
              {"n_eeg_ch", n_eeg_ch_},
              {"n_emg_ch", rc.n_out},
              {"calibrated_channel", models_.calibration.channel_index},
              {"angle_range_deg", {control::kMinAngleDeg, control::kMaxAngleDeg}},
              {"fast", cfg_.fast}}
      .dump();
}

namespace {

std::vector<std::string> script_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
  }
  return out;
}

Direction script_direction(const std::string& s, const std::string& line) {
  const auto d = parse_direction(s);
  if (!d) throw Error(ErrorCode::invalid_argument, "bad direction in script line '" + line + "'");
  return *d;
}

}  // namespace

std::vector<control::ControlCommand> load_command_script(const std::filesystem::path& path) {
  std::vector<control::ControlCommand> out;
  for (const auto& line : script_lines(path)) {
    std::istringstream in(line);
    std::string dir;
    double mag = 0.0;
    long repeat = 1;
    if (!(in >> dir >> mag)) throw Error(ErrorCode::invalid_argument, "bad script line '" + line + "'");
    if (!(in >> repeat)) repeat = 1;
    if (repeat < 1 || !(mag >= 0.0 && mag <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "bad script line '" + line + "'");
    }
    const Direction d = script_direction(dir, line);
    for (long k = 0; k < repeat; ++k) {
      out.push_back({d, d == Direction::rest ? 0.0 : mag, static_cast<long>(out.size())});
    }
  }
  return out;
}

std::vector<IntentEvent> load_intent_script(const std::filesystem::path& path) {
  std::vector<IntentEvent> out;
  for (const auto& line : script_lines(path)) {
    std::istringstream in(line);
    IntentEvent e;
    std::string dir;
    if (!(in >> e.chunk >> dir >> e.level) || e.chunk < 0 || !(e.level >= 0.0 && e.level <= 1.0)) {
      throw Error(ErrorCode::invalid_argument, "bad intent line '" + line + "'");
    }
    e.direction = script_direction(dir, line);
    out.push_back(e);
  }
  return out;
}

}  // namespace bmui::rt
