#include "bmui/synth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "bmui/error.hpp"

namespace bmui::synth {
namespace {

enum Stream : std::uint64_t { kParams = 1, kEeg = 2, kEmg = 3, kForce = 4, kSchedule = 5 };

constexpr std::string_view kArmMuscles[6] = {"biceps",     "brachialis",     "brachioradialis",
                                             "triceps_lat", "triceps_long", "anconeus"};
constexpr double kFlexGains[6] = {0.9, 1.0, 0.8, 0.55, 0.5, 0.6};
constexpr double kExtendGains[6] = {0.55, 0.6, 0.5, 1.0, 0.9, 0.7};
constexpr double kRightArmScale = 0.9;

constexpr double kEegAmplitudeUv = 10.0;
constexpr double kEmgAmplitudeUv = 50.0;
constexpr double kForcePerDrive = 10.0;
constexpr double kForceLagS = 0.1;
constexpr double kForceNoiseN = 0.05;
constexpr double kLineHz = 50.0;

// Paul Kellet's refined pink-noise filter: six one-pole sections plus a
// direct and a one-sample-delayed white term.
constexpr double kPinkPole[6] = {0.99886, 0.99332, 0.96900, 0.86650, 0.55000, -0.7616};
constexpr double kPinkGain[6] = {0.0555179, 0.0750759, 0.1538520, 0.3104856, 0.5329522, -0.0168980};
constexpr double kPinkDirect = 0.5362;
constexpr double kPinkDelayed = 0.115926;

double pink_step(double* s, double white) {
  double out = 0.0;
  for (int k = 0; k < 6; ++k) {
    s[k] = kPinkPole[k] * s[k] + kPinkGain[k] * white;
    out += s[k];
  }
  out += s[6] + kPinkDirect * white;
  s[6] = kPinkDelayed * white;
  return out;
}

// Inverse of the stationary standard deviation for unit-variance white input.
double unit_variance_scale(const std::function<double(double)>& impulse_step, std::size_t n) {
  double energy = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double h = impulse_step(t == 0 ? 1.0 : 0.0);
    energy += h * h;
  }
  return 1.0 / std::sqrt(energy);
}

double pink_scale() {
  double s[7] = {};
  return unit_variance_scale([&](double x) { return pink_step(s, x); }, 40000);
}

double cascade_scale(const dsp::BiquadCascade& cascade) {
  dsp::StreamingFilterState state(cascade, 1);
  return unit_variance_scale(
      [&](double x) {
        double v = x;
        state.process_channel(0, std::span<double>(&v, 1));
        return v;
      },
      20000);
}

// Trapezoid of height `level` over `n` samples with `rise` sample ramps.
double trapezoid(std::size_t t, std::size_t n, std::size_t rise, double level) {
  if (t == 0 || t >= n) return 0.0;
  const double r = static_cast<double>(std::max<std::size_t>(rise, 1));
  const double up = static_cast<double>(t) / r;
  const double down = static_cast<double>(n - t) / r;
  return level * std::min({1.0, up, down});
}

std::vector<TrialSpec> make_schedule(const SynthConfig& cfg) {
  if (!cfg.schedule.empty()) return cfg.schedule;
  std::mt19937_64 rng(stream_seed(cfg.seed, kSchedule));
  std::bernoulli_distribution high(0.5);
  std::vector<TrialSpec> out;
  for (int k = 0; k < cfg.n_trials; ++k) {
    out.push_back({k % 2 == 0 ? Direction::flex : Direction::extend,
                   high(rng) ? kHighEffort : kLowEffort, cfg.trial_duration_s});
  }
  return out;
}

std::string trial_label(const TrialSpec& spec) {
  return std::string(to_string(spec.direction)) + (spec.level >= kHighEffort ? "_high" : "_low");
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<std::string> eeg_channel_names(std::size_t n) {
  static constexpr std::string_view k16[16] = {"Fz", "FC3", "FC1", "FCz", "FC2", "FC4", "C3", "C1",
                                               "Cz", "C2",  "C4",  "CP3", "CP1", "CPz", "CP2", "CP4"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(n == 16 ? std::string(k16[i]) : "EEG" + std::to_string(i + 1));
  }
  return out;
}

std::vector<std::string> emg_channel_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < n; ++j) {
    if (n == 6 || n == 12) {
      out.push_back(std::string(j < 6 ? "L_" : "R_") + std::string(kArmMuscles[j % 6]));
    } else {
      out.push_back("EMG" + std::to_string(j + 1));
    }
  }
  return out;
}

std::vector<double> default_gains(std::size_t n, Direction d) {
  std::vector<double> out(n, 0.0);
  if (d == Direction::rest) return out;
  const double* table = d == Direction::flex ? kFlexGains : kExtendGains;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = table[j % 6] * (j < 6 ? 1.0 : kRightArmScale);
  }
  return out;
}

void validate(const SynthConfig& cfg) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::invalid_config, why); };
  if (cfg.n_eeg_ch == 0 || cfg.n_emg_ch == 0) throw bad("channel counts must be positive");
  if (cfg.schedule.empty() && cfg.n_trials < 0) throw bad("n_trials must be non-negative");
  if (!(cfg.trial_duration_s > 2 * kRiseSeconds)) throw bad("trial_duration_s must exceed the ramps");
  if (!(cfg.rest_duration_s >= 0.0)) throw bad("rest_duration_s must be non-negative");
  if (!(cfg.delay_ms >= 0.0)) throw bad("delay_ms must be non-negative");
  if (!std::isfinite(cfg.eeg_snr_db) || !std::isfinite(cfg.emg_snr_db)) throw bad("SNR must be finite");
  for (const auto* g : {&cfg.gain_flex, &cfg.gain_extend}) {
    if (!g->empty() && g->size() != cfg.n_emg_ch) throw bad("one gain per EMG channel required");
    for (double v : *g) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw bad("gains must be finite and non-negative");
    }
  }
  for (const auto& t : cfg.schedule) {
    if (!(t.level >= 0.0 && t.level <= 1.0)) throw bad("trial level outside [0,1]");
    if (!(t.duration_s > 2 * kRiseSeconds)) throw bad("trial duration must exceed the ramps");
  }
}

// ---- EEG -------------------------------------------------------------------

EegSynthesizer::EegSynthesizer(const SynthConfig& cfg)
    : n_ch_(cfg.n_eeg_ch),
      amplitude_(kEegAmplitudeUv),
      noise_(kEegAmplitudeUv * std::pow(10.0, -cfg.eeg_snr_db / 20.0)),
      rng_(stream_seed(cfg.seed, kEeg)),
      carrier_(dsp::eeg_bandpass(kEegRateHz), cfg.n_eeg_ch),
      carrier_scale_(cascade_scale(dsp::eeg_bandpass(kEegRateHz))),
      pink_((cfg.n_eeg_ch + 1) * 7, 0.0),
      pink_scale_(pink_scale()) {
  if (n_ch_ == 0) throw Error(ErrorCode::invalid_config, "EEG needs at least one channel");
  std::mt19937_64 params(stream_seed(cfg.seed, kParams));
  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  for (std::size_t i = 0; i < n_ch_; ++i) {
    const double w = n_ch_ == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n_ch_ - 1);
    alpha_flex_.push_back((1.0 - w) * jitter(params));
    alpha_extend_.push_back(w * jitter(params));
  }
}

Matrix EegSynthesizer::generate(std::span<const double> u_flex, std::span<const double> u_extend) {
  if (u_flex.size() != u_extend.size()) {
    throw Error(ErrorCode::invalid_argument, "intent traces differ in length");
  }
  const std::size_t n = u_flex.size();
  Matrix out(n_ch_, n);
  // Draw order is per sample, so any chunking of the intent yields the same signal.
  for (std::size_t t = 0; t < n; ++t, ++t_) {
    double* common_state = pink_.data() + n_ch_ * 7;
    const double line = std::sin(2.0 * std::numbers::pi * kLineHz * static_cast<double>(t_) / kEegRateHz);
    const double common = 0.5 * noise_ * pink_scale_ * pink_step(common_state, gauss_(rng_)) +
                          0.5 * amplitude_ * line;
    for (std::size_t i = 0; i < n_ch_; ++i) {
      double carrier = gauss_(rng_);
      carrier_.process_channel(i, std::span<double>(&carrier, 1));
      const double mod = baseline_ + alpha_flex_[i] * u_flex[t] + alpha_extend_[i] * u_extend[t];
      const double pink = pink_scale_ * pink_step(pink_.data() + i * 7, gauss_(rng_));
      out(i, t) = amplitude_ * mod * carrier_scale_ * carrier + noise_ * pink + common;
    }
  }
  return out;
}

// ---- intent follower -------------------------------------------------------

void IntentFollower::set_target(Direction d, double level) {
  if (!(level >= 0.0 && level <= 1.0)) throw Error(ErrorCode::invalid_argument, "level outside [0,1]");
  direction_ = d;
  level_ = d == Direction::rest ? 0.0 : level;
  target_ = level_;
}

std::pair<double, double> IntentFollower::step(double rate_hz) {
  const double delta = 1.0 / (kRiseSeconds * rate_hz);
  auto approach = [delta](double& u, double target) {
    u = u < target ? std::min(target, u + delta) : std::max(target, u - delta);
  };
  double want_flex = direction_ == Direction::flex ? target_ : 0.0;
  double want_extend = direction_ == Direction::extend ? target_ : 0.0;
  // The previous direction decays before the new one rises.
  if (want_flex > 0.0 && u_extend_ > 0.0) want_flex = 0.0;
  if (want_extend > 0.0 && u_flex_ > 0.0) want_extend = 0.0;
  approach(u_flex_, want_flex);
  approach(u_extend_, want_extend);
  return {u_flex_, u_extend_};
}

// ---- session ---------------------------------------------------------------

SynthResult synthesize_session(const SynthConfig& cfg) {
  validate(cfg);
  const auto schedule = make_schedule(cfg);

  // Intent traces at 1000 Hz.
  const auto ms = [](double s) { return static_cast<std::size_t>(std::llround(s * 1000.0)); };
  const std::size_t rise = ms(kRiseSeconds);
  std::size_t n = ms(cfg.rest_duration_s);
  for (const auto& t : schedule) n += ms(t.duration_s) + ms(cfg.rest_duration_s);
  n = std::max<std::size_t>(n, 2);

  session::GroundTruth truth;
  truth.rate_hz = kEmgRateHz;
  truth.u_flex.assign(n, 0.0);
  truth.u_extend.assign(n, 0.0);
  std::vector<MovementLabel> labels;
  std::size_t cursor = ms(cfg.rest_duration_s);
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const auto& spec = schedule[k];
    const std::size_t len = ms(spec.duration_s);
    auto& trace = spec.direction == Direction::flex ? truth.u_flex : truth.u_extend;
    if (spec.direction != Direction::rest) {
      for (std::size_t t = 0; t < len; ++t) trace[cursor + t] = trapezoid(t, len, rise, spec.level);
    }
    labels.push_back({static_cast<int>(k), trial_label(spec)});
    cursor += len + ms(cfg.rest_duration_s);
  }
  truth.intervals = session::intervals_from_traces(truth, labels);

  // EEG at 500 Hz: every other intent sample.
  const std::size_t n_eeg = (n + 1) / 2;
  std::vector<double> uf(n_eeg), ue(n_eeg);
  for (std::size_t k = 0; k < n_eeg; ++k) {
    uf[k] = truth.u_flex[2 * k];
    ue[k] = truth.u_extend[2 * k];
  }
  EegSynthesizer eeg_gen(cfg);
  Matrix eeg = eeg_gen.generate(uf, ue);

  // EMG at 1000 Hz: delayed drive times band-limited carriers, plus white noise.
  const std::size_t n_emg_ch = cfg.n_emg_ch;
  const auto gf = cfg.gain_flex.empty() ? default_gains(n_emg_ch, Direction::flex) : cfg.gain_flex;
  const auto ge =
      cfg.gain_extend.empty() ? default_gains(n_emg_ch, Direction::extend) : cfg.gain_extend;
  const auto delay = static_cast<std::size_t>(std::llround(cfg.delay_ms));
  auto delayed = [&](const std::vector<double>& u, std::size_t t) { return t < delay ? 0.0 : u[t - delay]; };

  std::mt19937_64 emg_rng(stream_seed(cfg.seed, kEmg));
  std::normal_distribution<double> gauss;
  Matrix hf(n_emg_ch, n);
  for (double& v : hf.values()) v = gauss(emg_rng);
  const auto band = dsp::emg_bandpass(kEmgRateHz);
  dsp::StreamingFilterState hf_state(band, n_emg_ch);
  hf = hf_state.process(hf);
  const double hf_scale = cascade_scale(band);
  const double emg_noise = kEmgAmplitudeUv * std::pow(10.0, -cfg.emg_snr_db / 20.0);

  // Arms: channels [0,6) left, [6,12) right; one force channel per arm.
  const std::size_t n_arms = n_emg_ch >= 12 ? 2 : 1;
  const std::size_t per_arm = (n_emg_ch + n_arms - 1) / n_arms;
  std::vector<std::vector<double>> arm_drive(n_arms, std::vector<double>(n, 0.0));

  Matrix emg(n_emg_ch, n);
  for (std::size_t j = 0; j < n_emg_ch; ++j) {
    const std::size_t arm = std::min(j / per_arm, n_arms - 1);
    for (std::size_t t = 0; t < n; ++t) {
      const double drive = gf[j] * delayed(truth.u_flex, t) + ge[j] * delayed(truth.u_extend, t);
      arm_drive[arm][t] += drive;
      emg(j, t) = kEmgAmplitudeUv * drive * hf_scale * hf(j, t) + emg_noise * gauss(emg_rng);
    }
  }

  // Force: first-order lag of the summed drive, sampled at 6.6 Hz.
  std::mt19937_64 force_rng(stream_seed(cfg.seed, kForce));
  const std::size_t n_force =
      static_cast<std::size_t>(std::floor(static_cast<double>(n - 1) * kForceRateHz / 1000.0 + 1e-9)) + 1;
  const double alpha = 1.0 - std::exp(-1.0 / (kForceLagS * 1000.0));
  Matrix force(n_arms, n_force);
  std::vector<std::string> force_names;
  for (std::size_t a = 0; a < n_arms; ++a) {
    force_names.push_back(n_arms == 1 ? "force" : (a == 0 ? "force_L" : "force_R"));
    double y = 0.0;
    std::size_t next = 0;
    for (std::size_t t = 0; t < n && next < n_force; ++t) {
      y += alpha * (kForcePerDrive * arm_drive[a][t] - y);
      const auto due = static_cast<std::size_t>(
          std::llround(static_cast<double>(next) * 1000.0 / kForceRateHz));
      if (t == std::min(due, n - 1)) {
        force(a, next++) = y + kForceNoiseN * gauss(force_rng);
      }
    }
  }

  SynthResult result;
  result.session.subject_id = cfg.subject_id;
  result.session.eeg = MultiChannelSignal(kEegRateHz, eeg_channel_names(cfg.n_eeg_ch), std::move(eeg));
  result.session.emg = MultiChannelSignal(kEmgRateHz, emg_channel_names(n_emg_ch), std::move(emg));
  result.session.force = MultiChannelSignal(kForceRateHz, std::move(force_names), std::move(force));
  result.session.movement_labels = std::move(labels);
  result.truth = std::move(truth);
  return result;
}

}  // namespace bmui::synth
