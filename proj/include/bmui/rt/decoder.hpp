#pragma once

#include <deque>
#include <memory>
#include <vector>

#include "bmui/control.hpp"
#include "bmui/dsp.hpp"
#include "bmui/matrix.hpp"
#include "bmui/neural/classifier.hpp"
#include "bmui/neural/regressor.hpp"

namespace bmui::rt {

/// Streaming linear interpolation by an integer factor. The concatenated
/// output equals the offline resample of the concatenated input; the last
/// input sample is held until its successor arrives.
class StreamUpsampler {
 public:
  StreamUpsampler(std::size_t n_channels, std::size_t factor);
  Matrix process(const Matrix& chunk);
  void reset();

 private:
  std::size_t factor_;
  std::vector<double> last_;
  bool primed_ = false;
};

/// Fixed-capacity column ring; `window()` returns the columns oldest first.
class RingWindow {
 public:
  RingWindow(std::size_t rows, std::size_t capacity);
  void push(const Matrix& cols);
  bool full() const noexcept { return count_ == cap_; }
  std::size_t size() const noexcept { return count_; }
  Matrix window() const;
  void clear() { count_ = head_ = 0; }

 private:
  Matrix buf_;
  std::size_t cap_, head_ = 0, count_ = 0;
};

struct Models {
  std::shared_ptr<const neural::Regressor> regressor;
  std::shared_ptr<const neural::Classifier> classifier;
  control::Calibration calibration;
};

struct DecoderStep {
  long t_step = 0;
  bool warming_up = true;
  std::vector<double> pred_envelope;  // zeros while the window fills
  control::ControlCommand command;
  control::ArmState arm;
};

/// Per-chunk online loop: upsample to the model rate, causal CAR + band-pass,
/// window ring, envelope regression, envelope history, DP-EMG step, arm update.
class OnlineDecoder {
 public:
  // startup_error when channel counts, window or calibration do not line up.
  OnlineDecoder(Models models, double source_rate_hz, std::size_t n_eeg_ch);

  DecoderStep process(const Matrix& chunk);
  // Replaces the decoded command (scripted runs); the signal path still advances.
  DecoderStep process(const Matrix& chunk, const control::ControlCommand& scripted);

  void reset_signal();  // new source: filters, ring and history
  void reset_arm() { arm_ = {}; }

  double gain = 1.0;
  void set_threshold_fraction(double f) { controller_.threshold_fraction = f; }
  double threshold_fraction() const noexcept { return controller_.threshold_fraction; }
  const control::ArmState& arm() const noexcept { return arm_; }
  const Models& models() const noexcept { return models_; }

 private:
  DecoderStep advance(const Matrix& chunk, const control::ControlCommand* scripted);

  Models models_;
  StreamUpsampler upsampler_;
  dsp::EegStreamPreprocessor preprocess_;
  RingWindow ring_;
  std::deque<std::vector<double>> history_;
  control::DpEmgController controller_;
  control::ArmState arm_;
  long t_ = 0;
};

}  // namespace bmui::rt
