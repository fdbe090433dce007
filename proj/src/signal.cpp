#include "bmui/signal.hpp"

#include <algorithm>
#include <cmath>

#include "bmui/error.hpp"

namespace bmui {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::shape_error, "matrix data length does not match rows*cols");
  }
}

Matrix Matrix::col_slice(std::size_t begin, std::size_t end) const {
  Matrix out(rows_, end - begin);
  for (std::size_t r = 0; r < rows_; ++r) {
    std::copy(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_ + begin),
              data_.begin() + static_cast<std::ptrdiff_t>(r * cols_ + end), out.row(r).begin());
  }
  return out;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

MultiChannelSignal::MultiChannelSignal(double rate_hz, std::vector<std::string> channel_names,
                                       Matrix data)
    : rate_hz_(rate_hz), names_(std::move(channel_names)), data_(std::move(data)) {
  if (!(rate_hz_ > 0.0) || !std::isfinite(rate_hz_)) {
    throw Error(ErrorCode::invalid_argument, "sample rate must be positive");
  }
  if (data_.rows() == 0 || data_.cols() == 0) {
    throw Error(ErrorCode::invalid_argument, "signal needs at least one channel and one sample");
  }
  if (names_.size() != data_.rows()) {
    throw Error(ErrorCode::invalid_argument, "channel name count does not match data rows");
  }
  for (double v : data_.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "non-finite sample");
  }
}

MultiChannelSignal MultiChannelSignal::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > n_samples()) {
    throw Error(ErrorCode::invalid_interval, "slice out of range");
  }
  return MultiChannelSignal(rate_hz_, names_, data_.col_slice(begin, end));
}

MultiChannelSignal MultiChannelSignal::with_data(Matrix data) const {
  return MultiChannelSignal(rate_hz_, names_, std::move(data));
}

AlignedSession AlignedSession::slice(std::size_t begin, std::size_t end) const {
  AlignedSession out;
  out.rate_hz = rate_hz;
  out.eeg = eeg.slice(begin, end);
  out.emg = emg.slice(begin, end);
  out.force = force.slice(begin, end);
  out.movement_labels = movement_labels;
  return out;
}

std::size_t resampled_length(std::size_t n_in, double source_hz, double target_hz) {
  // The small bias keeps exact ratios (e.g. 4999*1000/500) from flooring one short.
  const double span = static_cast<double>(n_in - 1) * target_hz / source_hz;
  return static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
}

MultiChannelSignal resample(const MultiChannelSignal& sig, double target_rate_hz) {
  if (!(target_rate_hz > 0.0) || !(sig.rate_hz() > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "rates must be positive");
  }
  if (target_rate_hz < sig.rate_hz()) {
    throw Error(ErrorCode::unsupported_downsample, "target rate below source rate");
  }
  if (target_rate_hz == sig.rate_hz()) return sig;

  const std::size_t n_in = sig.n_samples();
  const std::size_t n_out = resampled_length(n_in, sig.rate_hz(), target_rate_hz);
  const double step = sig.rate_hz() / target_rate_hz;
  Matrix out(sig.n_channels(), n_out);
  for (std::size_t c = 0; c < sig.n_channels(); ++c) {
    auto src = sig.data().row(c);
    auto dst = out.row(c);
    for (std::size_t k = 0; k < n_out; ++k) {
      const double pos = static_cast<double>(k) * step;
      const auto i = std::min(static_cast<std::size_t>(pos), n_in - 1);
      if (i + 1 >= n_in) {
        dst[k] = src[n_in - 1];
        continue;
      }
      const double frac = pos - static_cast<double>(i);
      dst[k] = frac == 0.0 ? src[i] : src[i] + frac * (src[i + 1] - src[i]);
    }
  }
  MultiChannelSignal result(target_rate_hz, sig.channel_names(), std::move(out));
  return result;
}

AlignedSession align(const RawSession& raw) {
  for (const auto* m : {&raw.eeg, &raw.emg, &raw.force}) {
    if (m->n_channels() == 0 || m->n_samples() == 0) {
      throw Error(ErrorCode::invalid_session, "session has an empty modality");
    }
  }
  auto eeg = resample(raw.eeg, kAlignedRateHz);
  auto emg = resample(raw.emg, kAlignedRateHz);
  auto force = resample(raw.force, kAlignedRateHz);
  const std::size_t n = std::min({eeg.n_samples(), emg.n_samples(), force.n_samples()});

  AlignedSession out;
  out.rate_hz = kAlignedRateHz;
  out.eeg = eeg.n_samples() == n ? std::move(eeg) : eeg.slice(0, n);
  out.emg = emg.n_samples() == n ? std::move(emg) : emg.slice(0, n);
  out.force = force.n_samples() == n ? std::move(force) : force.slice(0, n);
  out.movement_labels = raw.movement_labels;
  return out;
}

RawSession as_raw(const AlignedSession& aligned, std::string subject_id) {
  return RawSession{std::move(subject_id), aligned.eeg, aligned.emg, aligned.force,
                    aligned.movement_labels};
}

}  // namespace bmui
