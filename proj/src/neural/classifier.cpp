#include "bmui/neural/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "bmui/error.hpp"
#include "ops.hpp"

namespace bmui::neural {

void ClassifierConfig::validate() const {
  if (n_in == 0 || n_filters == 0 || kernel == 0) {
    throw Error(ErrorCode::invalid_config, "classifier dimensions must be positive");
  }
  if (seq_len < 2 * (kernel - 1) + 1) {
    throw Error(ErrorCode::invalid_config, "sequence too short for two convolutions");
  }
}

Classifier::Classifier(ClassifierConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t F = cfg_.n_filters, K = cfg_.kernel;
  c1w_ = params_.add("conv1.w", {F, cfg_.n_in, K});
  c1b_ = params_.add("conv1.b", {F});
  c2w_ = params_.add("conv2.w", {F, F, K});
  c2b_ = params_.add("conv2.b", {F});
  fcw_ = params_.add("fc.w", {kDirectionCount, F});
  fcb_ = params_.add("fc.b", {kDirectionCount});
  for (std::size_t w : {c1w_, c2w_, fcw_}) init_glorot(params_.at(w), rng);
  input_norm = Standardizer::identity(cfg_.n_in);
}

namespace {

// out[f, t] = b[f] + sum_c sum_k w[f, c, k] * in[c, t + k]
void conv_forward(const Matrix& in, const double* w, const double* b, std::size_t filters,
                  std::size_t kernel, Matrix& out) {
  const std::size_t C = in.rows(), L = in.cols() - kernel + 1;
  out = Matrix(filters, L);
  for (std::size_t f = 0; f < filters; ++f)
    for (std::size_t t = 0; t < L; ++t) {
      double s = b[f];
      for (std::size_t c = 0; c < C; ++c) s += kernels::dot(w + (f * C + c) * kernel, in.row(c).data() + t, kernel);
      out(f, t) = s;
    }
}

void conv_backward(const Matrix& in, const double* w, const Matrix& dout, std::size_t kernel,
                   double* dw, double* db, Matrix* din) {
  const std::size_t C = in.rows(), F = dout.rows(), L = dout.cols();
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < L; ++t) {
      const double g = dout(f, t);
      db[f] += g;
      for (std::size_t c = 0; c < C; ++c) {
        kernels::axpy(g, in.row(c).data() + t, dw + (f * C + c) * kernel, kernel);
        if (din) kernels::axpy(g, w + (f * C + c) * kernel, &(*din)(c, t), kernel);
      }
    }
}

}  // namespace

std::array<double, kDirectionCount> Classifier::logits(const Matrix& seq) const {
  ClassifierTrace tr;
  return logits(seq, tr);
}

std::array<double, kDirectionCount> Classifier::logits(const Matrix& seq, ClassifierTrace& tr) const {
  if (seq.rows() != cfg_.n_in || seq.cols() != cfg_.seq_len) {
    throw Error(ErrorCode::shape_error, "sequence is " + std::to_string(seq.rows()) + "x" +
                                            std::to_string(seq.cols()) + ", classifier expects " +
                                            std::to_string(cfg_.n_in) + "x" + std::to_string(cfg_.seq_len));
  }
  const std::size_t F = cfg_.n_filters;
  tr.x = Matrix(seq.rows(), seq.cols());
  for (std::size_t c = 0; c < seq.rows(); ++c)
    for (std::size_t t = 0; t < seq.cols(); ++t) tr.x(c, t) = input_norm.forward(c, seq(c, t));

  conv_forward(tr.x, params_.at(c1w_).data(), params_.at(c1b_).data(), F, cfg_.kernel, tr.z1);
  tr.a1 = tr.z1;
  for (double& v : tr.a1.values()) v = ops::gelu(v);
  conv_forward(tr.a1, params_.at(c2w_).data(), params_.at(c2b_).data(), F, cfg_.kernel, tr.z2);

  tr.pooled.assign(F, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    for (double v : tr.z2.row(f)) tr.pooled[f] += v;
    tr.pooled[f] /= static_cast<double>(tr.z2.cols());
  }
  std::array<double, kDirectionCount> out{};
  ops::linear_forward(1, F, kDirectionCount, tr.pooled.data(), params_.at(fcw_).data(),
                      params_.at(fcb_).data(), out.data());
  for (double v : out) {
    if (!std::isfinite(v)) throw Error(ErrorCode::check_failed, "non-finite classifier output");
  }
  return out;
}

void Classifier::backward(const ClassifierTrace& tr, std::span<const double> dlogits) {
  if (dlogits.size() != kDirectionCount) throw Error(ErrorCode::shape_error, "gradient size mismatch");
  const std::size_t F = cfg_.n_filters;
  std::vector<double> dpooled(F, 0.0);
  ops::linear_backward(1, F, kDirectionCount, tr.pooled.data(), params_.at(fcw_).data(), dlogits.data(),
                       params_.at(fcw_).grad_data(), params_.at(fcb_).grad_data(), dpooled.data());
  Matrix dz2(F, tr.z2.cols());
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < dz2.cols(); ++t) dz2(f, t) = dpooled[f] / static_cast<double>(dz2.cols());
  Matrix da1(F, tr.a1.cols());
  conv_backward(tr.a1, params_.at(c2w_).data(), dz2, cfg_.kernel, params_.at(c2w_).grad_data(),
                params_.at(c2b_).grad_data(), &da1);
  for (std::size_t i = 0; i < da1.size(); ++i) da1.values()[i] *= ops::gelu_grad(tr.z1.values()[i]);
  conv_backward(tr.x, params_.at(c1w_).data(), da1, cfg_.kernel, params_.at(c1w_).grad_data(),
                params_.at(c1b_).grad_data(), nullptr);
}

std::array<double, kDirectionCount> softmax(const std::array<double, kDirectionCount>& logits) {
  std::array<double, kDirectionCount> p = logits;
  ops::softmax_rows(1, kDirectionCount, p.data());
  return p;
}

Direction argmax_direction(const std::array<double, kDirectionCount>& logits) {
  return static_cast<Direction>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

}  // namespace bmui::neural
