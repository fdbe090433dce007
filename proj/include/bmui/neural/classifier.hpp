#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "bmui/direction.hpp"
#include "bmui/matrix.hpp"
#include "bmui/neural/params.hpp"

namespace bmui::neural {

/// Two valid-padding 1-D convolutions over time, GELU after the first,
/// global average pool, linear to {flex, extend, rest} logits.
struct ClassifierConfig {
  std::size_t n_in = 12;    // envelope channels
  std::size_t seq_len = 10; // control steps
  std::size_t n_filters = 16;
  std::size_t kernel = 3;

  std::size_t len1() const noexcept { return seq_len - kernel + 1; }
  std::size_t len2() const noexcept { return seq_len - 2 * (kernel - 1); }
  void validate() const;  // invalid_config

  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

struct ClassifierTrace {
  Matrix x;   // standardized input [n_in x seq_len]
  Matrix z1;  // conv1 pre-activation [filters x len1]
  Matrix a1;
  Matrix z2;  // conv2 output [filters x len2]
  std::vector<double> pooled;
};

class Classifier {
 public:
  Classifier() = default;
  Classifier(ClassifierConfig cfg, std::uint64_t seed);

  const ClassifierConfig& config() const noexcept { return cfg_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  std::array<double, kDirectionCount> logits(const Matrix& seq) const;
  std::array<double, kDirectionCount> logits(const Matrix& seq, ClassifierTrace& trace) const;
  void backward(const ClassifierTrace& trace, std::span<const double> dlogits);

  Standardizer input_norm;

 private:
  ClassifierConfig cfg_;
  ParamSet params_;
  std::size_t c1w_ = 0, c1b_ = 0, c2w_ = 0, c2b_ = 0, fcw_ = 0, fcb_ = 0;
};

std::array<double, kDirectionCount> softmax(const std::array<double, kDirectionCount>& logits);
Direction argmax_direction(const std::array<double, kDirectionCount>& logits);

}  // namespace bmui::neural
