#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace bmui::neural {

/// Dense parameter with its gradient buffer.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  std::size_t size() const noexcept { return values.size(); }
  double* data() noexcept { return values.data(); }
  const double* data() const noexcept { return values.data(); }
  double* grad_data() noexcept { return grad.data(); }
};

/// Named parameter tensors in declaration order.
class ParamSet {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape);

  std::size_t count() const noexcept { return tensors_.size(); }
  std::size_t total_size() const noexcept;
  Tensor& at(std::size_t i) { return tensors_.at(i); }
  const Tensor& at(std::size_t i) const { return tensors_.at(i); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  std::size_t index_of(const std::string& name) const;  // throws not_found

  void zero_grad();
  void scale_grad(double factor);
  // Throws check_failed if any value is non-finite.
  void check_finite(const char* where) const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

void init_normal(Tensor& t, std::mt19937_64& rng, double stddev);
// Glorot-scaled normal; fan_out is the leading dim, fan_in the product of the rest.
void init_glorot(Tensor& t, std::mt19937_64& rng, double gain = 1.0);

/// Per-channel affine normalization (x - mean) / std.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t size() const noexcept { return mean.size(); }
  // Channel statistics over rows of samples; zero spread maps to std 1.
  static Standardizer fit(std::span<const std::vector<double>> samples);
  static Standardizer identity(std::size_t n);
  double forward(std::size_t c, double v) const { return (v - mean[c]) / stddev[c]; }
  double inverse(std::size_t c, double v) const { return v * stddev[c] + mean[c]; }

  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig cfg);
  void step(ParamSet& params);

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace bmui::neural
