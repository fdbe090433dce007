#include "bmui/neural/params.hpp"

#include <cmath>
#include <numeric>

#include "bmui/error.hpp"

namespace bmui::neural {

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  values.assign(n, 0.0);
  grad.assign(n, 0.0);
}

std::size_t ParamSet::add(std::string name, std::vector<std::size_t> shape) {
  names_.push_back(std::move(name));
  tensors_.emplace_back(std::move(shape));
  return tensors_.size() - 1;
}

std::size_t ParamSet::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::size_t ParamSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw Error(ErrorCode::not_found, "no parameter named " + name);
}

void ParamSet::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), 0.0);
}

void ParamSet::scale_grad(double factor) {
  for (auto& t : tensors_) {
    for (double& g : t.grad) g *= factor;
  }
}

void ParamSet::check_finite(const char* where) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    for (double v : tensors_[i].values) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::check_failed, std::string(where) + ": non-finite value in " + names_[i]);
      }
    }
  }
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.names_ != b.names_) return false;
  for (std::size_t i = 0; i < a.tensors_.size(); ++i) {
    if (a.tensors_[i].shape != b.tensors_[i].shape || a.tensors_[i].values != b.tensors_[i].values) {
      return false;
    }
  }
  return true;
}

void init_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> g(0.0, stddev);
  for (double& v : t.values) v = g(rng);
}

void init_glorot(Tensor& t, std::mt19937_64& rng, double gain) {
  const double fan_out = static_cast<double>(t.shape.front());
  const double fan_in = static_cast<double>(t.size() / t.shape.front());
  init_normal(t, rng, gain * std::sqrt(2.0 / (fan_in + fan_out)));
}

Standardizer Standardizer::fit(std::span<const std::vector<double>> samples) {
  if (samples.empty()) throw Error(ErrorCode::insufficient_data, "no samples to standardize");
  const std::size_t n_ch = samples.front().size();
  Standardizer s;
  s.mean.assign(n_ch, 0.0);
  s.stddev.assign(n_ch, 0.0);
  for (const auto& row : samples) {
    if (row.size() != n_ch) throw Error(ErrorCode::shape_error, "ragged samples");
    for (std::size_t c = 0; c < n_ch; ++c) s.mean[c] += row[c];
  }
  const double n = static_cast<double>(samples.size());
  for (double& m : s.mean) m /= n;
  for (const auto& row : samples) {
    for (std::size_t c = 0; c < n_ch; ++c) s.stddev[c] += (row[c] - s.mean[c]) * (row[c] - s.mean[c]);
  }
  for (double& v : s.stddev) {
    v = std::sqrt(v / n);
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t n) {
  return Standardizer{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

Adam::Adam(const ParamSet& params, AdamConfig cfg) : cfg_(cfg) {
  for (std::size_t i = 0; i < params.count(); ++i) {
    m_.emplace_back(params.at(i).size(), 0.0);
    v_.emplace_back(params.at(i).size(), 0.0);
  }
}

void Adam::step(ParamSet& params) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.count(); ++i) {
    Tensor& p = params.at(i);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      p.values[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
    }
  }
}

}  // namespace bmui::neural
