#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bmui/matrix.hpp"
#include "bmui/neural/params.hpp"

namespace bmui::neural {

/// Sliding-window Transformer encoder: patch embedding, fixed sinusoidal
/// positions, post-LN encoder layers, mean pool, linear head.
struct RegressorConfig {
  std::size_t n_in = 16;     // EEG channels
  std::size_t n_out = 12;    // EMG envelope channels
  std::size_t window = 200;  // samples per window
  std::size_t patch = 10;    // samples per token
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t ff_mult = 4;
  double head_init_std = 0.0;  // 0 starts the head at zero weights

  std::size_t n_tokens() const noexcept { return patch ? window / patch : 0; }
  std::size_t head_dim() const noexcept { return n_heads ? d_model / n_heads : 0; }
  void validate() const;  // invalid_config

  friend bool operator==(const RegressorConfig&, const RegressorConfig&) = default;
};

struct EncoderTrace {
  Matrix in, q, k, v;
  Matrix attn;  // [heads * tokens x tokens], row-stochastic per head
  Matrix ctx;
  Matrix xhat1, h1;
  std::vector<double> inv_std1;
  Matrix f1, g;
  Matrix xhat2, out;
  std::vector<double> inv_std2;
};

struct RegressorTrace {
  Matrix tokens;  // [tokens x n_in*patch], standardized input
  std::vector<EncoderTrace> layers;
  std::vector<double> pooled;
};

class Regressor {
 public:
  Regressor() = default;
  Regressor(RegressorConfig cfg, std::uint64_t seed);

  const RegressorConfig& config() const noexcept { return cfg_; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  // Output in standardized target units; x is a raw [n_in x window] window.
  std::vector<double> forward(const Matrix& x) const;
  std::vector<double> forward(const Matrix& x, RegressorTrace& trace) const;
  // Accumulates parameter gradients for dL/d(output).
  void backward(const RegressorTrace& trace, std::span<const double> dy);

  Standardizer input_norm;   // per EEG channel
  Standardizer target_norm;  // per EMG channel

 private:
  struct LayerIdx {
    std::size_t wq, bq, wk, wv, bv, wo, bo, ln1g, ln1b, f1w, f1b, f2w, f2b, ln2g, ln2b;
  };
  void encoder_forward(const LayerIdx& li, EncoderTrace& t) const;
  void encoder_backward(const LayerIdx& li, const EncoderTrace& t, Matrix& dout, Matrix& din);

  RegressorConfig cfg_;
  ParamSet params_;
  std::size_t embed_w_ = 0, embed_b_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<LayerIdx> layers_;
  Matrix positional_;
};

/// Network output in standardized units (the raw head output).
std::vector<double> forward_regressor(const Regressor& model, const Matrix& x);
/// De-standardized prediction clamped at 0.
std::vector<double> predict_envelope(const Regressor& model, const Matrix& x);

Matrix sinusoidal_positions(std::size_t tokens, std::size_t d_model);

}  // namespace bmui::neural
