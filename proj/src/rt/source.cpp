#include "bmui/rt/source.hpp"

#include <charconv>

#include "bmui/error.hpp"
#include "bmui/session.hpp"

namespace bmui::rt {

ReplaySource::ReplaySource(const std::filesystem::path& dir) : dir_(dir) {
  auto raw = session::load_session(dir);
  rate_ = raw.eeg.rate_hz();
  eeg_ = raw.eeg.data();
}

std::optional<Matrix> ReplaySource::next_chunk(std::size_t samples) {
  if (pos_ >= eeg_.cols()) return std::nullopt;
  const std::size_t end = std::min(eeg_.cols(), pos_ + samples);
  Matrix out = eeg_.col_slice(pos_, end);
  pos_ = end;
  return out;
}

namespace {

synth::SynthConfig live_config(std::uint64_t seed, std::size_t n_eeg_ch) {
  synth::SynthConfig cfg;
  cfg.seed = seed;
  cfg.n_eeg_ch = n_eeg_ch;
  return cfg;
}

}  // namespace

SyntheticSource::SyntheticSource(std::uint64_t seed, std::size_t n_eeg_ch)
    : seed_(seed), synth_(live_config(seed, n_eeg_ch)) {}

std::optional<Matrix> SyntheticSource::next_chunk(std::size_t samples) {
  std::vector<double> uf(samples), ue(samples);
  for (std::size_t k = 0; k < samples; ++k) std::tie(uf[k], ue[k]) = follower_.step(rate_hz());
  return synth_.generate(uf, ue);
}

std::unique_ptr<Source> make_source(const std::string& spec, std::size_t n_eeg_ch) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "replay" && !arg.empty()) {
    if (!std::filesystem::is_directory(arg)) throw Error(ErrorCode::not_found, "no session directory " + arg);
    return std::make_unique<ReplaySource>(arg);
  }
  if (kind == "synthetic") {
    std::uint64_t seed = 0;
    auto [p, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), seed);
    if (arg.empty() || ec != std::errc() || p != arg.data() + arg.size()) {
      throw Error(ErrorCode::invalid_argument, "synthetic source needs a numeric seed: '" + spec + "'");
    }
    return std::make_unique<SyntheticSource>(seed, n_eeg_ch);
  }
  throw Error(ErrorCode::invalid_argument, "unknown source '" + spec + "' (replay:<dir> | synthetic:<seed>)");
}

}  // namespace bmui::rt
