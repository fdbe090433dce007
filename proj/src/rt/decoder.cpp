#include "bmui/rt/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bmui/error.hpp"
#include "bmui/signal.hpp"

namespace bmui::rt {

StreamUpsampler::StreamUpsampler(std::size_t n_channels, std::size_t factor)
    : factor_(factor), last_(n_channels, 0.0) {
  if (factor == 0) throw Error(ErrorCode::invalid_argument, "upsampling factor must be positive");
}

Matrix StreamUpsampler::process(const Matrix& chunk) {
  if (chunk.rows() != last_.size()) throw Error(ErrorCode::shape_error, "chunk channel count changed");
  const std::size_t n = chunk.cols();
  if (n == 0) return Matrix(chunk.rows(), 0);
  // The very first sample has no predecessor to interpolate from.
  Matrix out(chunk.rows(), n * factor_ - (primed_ ? 0 : factor_ - 1));
  for (std::size_t c = 0; c < chunk.rows(); ++c) {
    std::size_t o = 0;
    double prev = last_[c];
    for (std::size_t k = 0; k < n; ++k) {
      const double x = chunk(c, k);
      if (primed_ || k > 0) {
        for (std::size_t j = 1; j < factor_; ++j) {
          const double frac = static_cast<double>(j) / static_cast<double>(factor_);
          out(c, o++) = prev + frac * (x - prev);
        }
      }
      out(c, o++) = x;
      prev = x;
    }
    last_[c] = prev;
  }
  primed_ = true;
  return out;
}

void StreamUpsampler::reset() {
  primed_ = false;
  std::fill(last_.begin(), last_.end(), 0.0);
}

RingWindow::RingWindow(std::size_t rows, std::size_t capacity) : buf_(rows, capacity), cap_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::invalid_argument, "ring capacity must be positive");
}

void RingWindow::push(const Matrix& cols) {
  if (cols.rows() != buf_.rows()) throw Error(ErrorCode::shape_error, "ring row count mismatch");
  for (std::size_t k = 0; k < cols.cols(); ++k) {
    for (std::size_t r = 0; r < buf_.rows(); ++r) buf_(r, head_) = cols(r, k);
    head_ = (head_ + 1) % cap_;
    if (count_ < cap_) ++count_;
  }
}

Matrix RingWindow::window() const {
  Matrix out(buf_.rows(), count_);
  const std::size_t start = (head_ + cap_ - count_) % cap_;
  for (std::size_t r = 0; r < buf_.rows(); ++r)
    for (std::size_t k = 0; k < count_; ++k) out(r, k) = buf_(r, (start + k) % cap_);
  return out;
}

namespace {

std::size_t upsample_factor(double source_rate_hz) {
  const double f = kAlignedRateHz / source_rate_hz;
  const double r = std::round(f);
  if (!(source_rate_hz > 0.0) || r < 1.0 || std::abs(f - r) > 1e-9) {
    throw Error(ErrorCode::startup_error,
                "source rate " + std::to_string(source_rate_hz) + " Hz does not divide the model rate");
  }
  return static_cast<std::size_t>(r);
}

const Models& checked(const Models& m, std::size_t n_eeg_ch) {
  if (!m.regressor || !m.classifier) throw Error(ErrorCode::startup_error, "models not loaded");
  const auto& rc = m.regressor->config();
  const auto& cc = m.classifier->config();
  if (rc.n_in != n_eeg_ch) {
    throw Error(ErrorCode::startup_error, "regressor expects " + std::to_string(rc.n_in) +
                                              " EEG channels, source has " + std::to_string(n_eeg_ch));
  }
  if (cc.n_in != rc.n_out) {
    throw Error(ErrorCode::startup_error, "classifier expects " + std::to_string(cc.n_in) +
                                              " envelope channels, regressor emits " + std::to_string(rc.n_out));
  }
  if (cc.seq_len != control::kHistorySteps) {
    throw Error(ErrorCode::startup_error, "classifier sequence length must be " +
                                              std::to_string(control::kHistorySteps));
  }
  if (m.calibration.channel_index >= rc.n_out) {
    throw Error(ErrorCode::startup_error, "calibrated channel outside the regressor outputs");
  }
  return m;
}

}  // namespace

OnlineDecoder::OnlineDecoder(Models models, double source_rate_hz, std::size_t n_eeg_ch)
    : models_(checked(models, n_eeg_ch)),
      upsampler_(n_eeg_ch, upsample_factor(source_rate_hz)),
      preprocess_(n_eeg_ch, kAlignedRateHz),
      ring_(n_eeg_ch, models_.regressor->config().window) {}

void OnlineDecoder::reset_signal() {
  upsampler_.reset();
  preprocess_.reset();
  ring_.clear();
  history_.clear();
  controller_.reset();
}

DecoderStep OnlineDecoder::process(const Matrix& chunk) { return advance(chunk, nullptr); }

DecoderStep OnlineDecoder::process(const Matrix& chunk, const control::ControlCommand& scripted) {
  return advance(chunk, &scripted);
}

DecoderStep OnlineDecoder::advance(const Matrix& chunk, const control::ControlCommand* scripted) {
  DecoderStep step;
  step.t_step = t_++;
  ring_.push(preprocess_.process(upsampler_.process(chunk)));
  const std::size_t n_out = models_.regressor->config().n_out;
  step.pred_envelope.assign(n_out, 0.0);
  if (ring_.full()) {
    step.pred_envelope = neural::predict_envelope(*models_.regressor, ring_.window());
    history_.push_back(step.pred_envelope);
    if (history_.size() > control::kHistorySteps) history_.pop_front();
  }
  if (history_.size() == control::kHistorySteps) {
    step.warming_up = false;
    Matrix hist(n_out, control::kHistorySteps);
    for (std::size_t k = 0; k < control::kHistorySteps; ++k)
      for (std::size_t c = 0; c < n_out; ++c) hist(c, k) = history_[k][c];
    step.command = controller_.step(hist, *models_.classifier, models_.calibration);
  } else {
    step.command = controller_.command(Direction::rest, 0.0, models_.calibration);
  }
  if (scripted) {
    step.command.direction = scripted->direction;
    step.command.magnitude = scripted->direction == Direction::rest ? 0.0 : std::clamp(scripted->magnitude, 0.0, 1.0);
  }
  arm_ = control::arm_update(arm_, step.command, control::kStepSeconds, gain);
  step.arm = arm_;
  return step;
}

}  // namespace bmui::rt
