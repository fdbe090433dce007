#include <algorithm>
#include <cmath>

#include "bmui/dsp.hpp"
#include "bmui/error.hpp"
#include "bmui/session.hpp"

namespace bmui::session {

std::vector<ActiveInterval> detect_active_periods(const MultiChannelSignal& force,
                                                  const SegmentationPolicy& policy) {
  if (!(policy.fraction > 0.0 && policy.fraction <= 1.0) ||
      !(policy.exit_ratio > 0.0 && policy.exit_ratio <= 1.0) || policy.min_duration_ms < 0.0) {
    throw Error(ErrorCode::invalid_config, "segmentation policy out of range");
  }
  const std::size_t n = force.n_samples();
  std::vector<double> magnitude(n, 0.0);
  for (std::size_t c = 0; c < force.n_channels(); ++c) {
    auto row = force.data().row(c);
    for (std::size_t t = 0; t < n; ++t) magnitude[t] += std::abs(row[t]);
  }
  const double peak = n ? *std::max_element(magnitude.begin(), magnitude.end()) : 0.0;
  if (!(peak > 0.0)) return {};

  const double enter = policy.fraction * peak;
  const double leave = policy.exit_ratio * enter;
  const auto min_len =
      static_cast<std::size_t>(std::ceil(policy.min_duration_ms * force.rate_hz() / 1000.0));

  std::vector<ActiveInterval> out;
  bool active = false;
  std::size_t start = 0;
  auto close = [&](std::size_t end) {
    if (end - start >= min_len) {
      out.push_back({start, end, "trial_" + std::to_string(out.size())});
    }
    active = false;
  };
  for (std::size_t t = 0; t < n; ++t) {
    if (!active && magnitude[t] > enter) {
      active = true;
      start = t;
    } else if (active && magnitude[t] < leave) {
      close(t);
    }
  }
  if (active) close(n);
  return out;
}

std::vector<AlignedSession> segment_session(const AlignedSession& aligned,
                                            std::span<const ActiveInterval> intervals) {
  std::vector<AlignedSession> trials;
  trials.reserve(intervals.size());
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const auto& iv = intervals[k];
    if (iv.end <= iv.start || iv.end > aligned.n_samples()) {
      throw Error(ErrorCode::invalid_interval, "interval [" + std::to_string(iv.start) + ", " +
                                                   std::to_string(iv.end) + ") out of bounds");
    }
    if (k > 0 && iv.start < intervals[k - 1].end) {
      throw Error(ErrorCode::invalid_interval, "intervals overlap or are unsorted");
    }
    AlignedSession trial = aligned.slice(iv.start, iv.end);
    trial.movement_labels.clear();
    const std::string label = k < aligned.movement_labels.size() ? aligned.movement_labels[k].label
                                                                 : iv.trial_label;
    trial.movement_labels.push_back({static_cast<int>(k), label});
    trials.push_back(std::move(trial));
  }
  return trials;
}

std::size_t WindowConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_ms * rate_hz / 1000.0));
}

std::size_t WindowConfig::stride_samples() const {
  return static_cast<std::size_t>(std::llround(stride_ms * rate_hz / 1000.0));
}

WindowSet make_windows(std::span<const AlignedSession> trials, const WindowConfig& cfg) {
  const std::size_t w = cfg.window_samples();
  const std::size_t s = cfg.stride_samples();
  if (w == 0 || s == 0) throw Error(ErrorCode::invalid_config, "window and stride must be positive");

  WindowSet set;
  for (std::size_t id = 0; id < trials.size(); ++id) {
    const auto& trial = trials[id];
    const std::size_t len = trial.n_samples();
    if (len < w) {
      ++set.skipped_trials;
      continue;
    }
    const std::string label =
        trial.movement_labels.empty() ? "trial_" + std::to_string(id) : trial.movement_labels[0].label;
    const std::size_t count = (len - w) / s + 1;
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t begin = k * s;
      WindowPair pair;
      pair.x = trial.eeg.data().col_slice(begin, begin + w);
      pair.t_end = begin + w - 1;
      pair.y.resize(trial.emg.n_channels());
      for (std::size_t c = 0; c < trial.emg.n_channels(); ++c) pair.y[c] = trial.emg.data()(c, pair.t_end);
      pair.trial_label = label;
      pair.trial_id = id;
      set.windows.push_back(std::move(pair));
    }
  }
  return set;
}

AlignedSession preprocess_aligned(const AlignedSession& aligned) {
  AlignedSession out = aligned;
  out.eeg = dsp::preprocess_eeg(aligned.eeg);
  out.emg = dsp::emg_envelope(dsp::preprocess_emg(aligned.emg));
  return out;
}

PreparedSession prepare_preprocessed(const AlignedSession& preprocessed,
                                     const SegmentationPolicy& policy) {
  PreparedSession prep;
  prep.signals = preprocessed;
  prep.intervals = detect_active_periods(prep.signals.force, policy);
  const auto& labels = prep.signals.movement_labels;
  for (std::size_t k = 0; k < prep.intervals.size() && k < labels.size(); ++k) {
    prep.intervals[k].trial_label = labels[k].label;
  }
  prep.trials = segment_session(prep.signals, prep.intervals);
  return prep;
}

PreparedSession prepare_session(const RawSession& raw, const SegmentationPolicy& policy) {
  return prepare_preprocessed(preprocess_aligned(align(raw)), policy);
}

std::string direction_of(std::string_view label) {
  if (label.starts_with("flex")) return "flex";
  if (label.starts_with("extend")) return "extend";
  return "rest";
}

}  // namespace bmui::session
