#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "bmui/matrix.hpp"
#include "bmui/synth.hpp"

namespace bmui::rt {

/// Chunked EEG producer. Chunks are [channels x samples] at rate_hz().
class Source {
 public:
  virtual ~Source() = default;
  // nullopt once a finite source is exhausted.
  virtual std::optional<Matrix> next_chunk(std::size_t samples) = 0;
  virtual double rate_hz() const = 0;
  virtual std::size_t n_channels() const = 0;
  virtual std::string spec() const = 0;
  virtual bool accepts_intent() const { return false; }
  virtual void set_intent(Direction, double) {}
};

/// Replays the EEG of a stored session at its native rate.
class ReplaySource final : public Source {
 public:
  explicit ReplaySource(const std::filesystem::path& dir);
  std::optional<Matrix> next_chunk(std::size_t samples) override;
  double rate_hz() const override { return rate_; }
  std::size_t n_channels() const override { return eeg_.rows(); }
  std::string spec() const override { return "replay:" + dir_.string(); }

 private:
  std::filesystem::path dir_;
  Matrix eeg_;
  double rate_;
  std::size_t pos_ = 0;
};

/// Endless synthetic EEG whose intent follows operator commands.
class SyntheticSource final : public Source {
 public:
  explicit SyntheticSource(std::uint64_t seed, std::size_t n_eeg_ch = 16);
  std::optional<Matrix> next_chunk(std::size_t samples) override;
  double rate_hz() const override { return synth::kEegRateHz; }
  std::size_t n_channels() const override { return synth_.n_channels(); }
  std::string spec() const override { return "synthetic:" + std::to_string(seed_); }
  bool accepts_intent() const override { return true; }
  void set_intent(Direction d, double level) override { follower_.set_target(d, level); }
  const synth::IntentFollower& intent() const noexcept { return follower_; }

 private:
  std::uint64_t seed_;
  synth::EegSynthesizer synth_;
  synth::IntentFollower follower_;
};

/// "replay:<dir>" or "synthetic:<seed>"; invalid_argument otherwise,
/// not_found for a missing replay directory.
std::unique_ptr<Source> make_source(const std::string& spec, std::size_t n_eeg_ch = 16);

}  // namespace bmui::rt
