#include "bmui/neural/regressor.hpp"

#include <cmath>

#include "bmui/error.hpp"
#include "ops.hpp"

namespace bmui::neural {

void RegressorConfig::validate() const {
  auto bad = [](const std::string& why) { return Error(ErrorCode::invalid_config, why); };
  if (n_in == 0 || n_out == 0) throw bad("channel counts must be positive");
  if (patch == 0 || window == 0 || window % patch != 0) throw bad("window must be a multiple of patch");
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) throw bad("d_model must divide into heads");
  if (n_layers == 0 || ff_mult == 0) throw bad("need at least one layer and ff_mult >= 1");
  if (!(head_init_std >= 0.0)) throw bad("head_init_std must be non-negative");
}

Matrix sinusoidal_positions(std::size_t tokens, std::size_t d) {
  Matrix pe(tokens, d);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pe(t, i) = std::sin(angle);
      if (i + 1 < d) pe(t, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Regressor::Regressor(RegressorConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg_.d_model, ff = cfg_.ff_mult * d, in = cfg_.n_in * cfg_.patch;
  std::mt19937_64 rng(seed);

  embed_w_ = params_.add("embed.w", {d, in});
  embed_b_ = params_.add("embed.b", {d});
  init_glorot(params_.at(embed_w_), rng);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "enc" + std::to_string(l) + ".";
    LayerIdx li{};
    li.wq = params_.add(p + "wq", {d, d});
    li.bq = params_.add(p + "bq", {d});
    // No key bias: softmax is invariant to it, so its gradient is identically zero.
    li.wk = params_.add(p + "wk", {d, d});
    li.wv = params_.add(p + "wv", {d, d});
    li.bv = params_.add(p + "bv", {d});
    li.wo = params_.add(p + "wo", {d, d});
    li.bo = params_.add(p + "bo", {d});
    li.ln1g = params_.add(p + "ln1.g", {d});
    li.ln1b = params_.add(p + "ln1.b", {d});
    li.f1w = params_.add(p + "ff1.w", {ff, d});
    li.f1b = params_.add(p + "ff1.b", {ff});
    li.f2w = params_.add(p + "ff2.w", {d, ff});
    li.f2b = params_.add(p + "ff2.b", {d});
    li.ln2g = params_.add(p + "ln2.g", {d});
    li.ln2b = params_.add(p + "ln2.b", {d});
    for (std::size_t w : {li.wq, li.wk, li.wv, li.wo, li.f1w, li.f2w}) init_glorot(params_.at(w), rng);
    for (std::size_t g : {li.ln1g, li.ln2g}) std::fill(params_.at(g).values.begin(), params_.at(g).values.end(), 1.0);
    layers_.push_back(li);
  }
  head_w_ = params_.add("head.w", {cfg_.n_out, d});
  head_b_ = params_.add("head.b", {cfg_.n_out});
  if (cfg_.head_init_std > 0.0) init_normal(params_.at(head_w_), rng, cfg_.head_init_std);

  positional_ = sinusoidal_positions(cfg_.n_tokens(), d);
  input_norm = Standardizer::identity(cfg_.n_in);
  target_norm = Standardizer::identity(cfg_.n_out);
}

std::vector<double> Regressor::forward(const Matrix& x) const {
  RegressorTrace trace;
  return forward(x, trace);
}

std::vector<double> Regressor::forward(const Matrix& x, RegressorTrace& tr) const {
  if (x.rows() != cfg_.n_in || x.cols() != cfg_.window) {
    throw Error(ErrorCode::shape_error, "window is " + std::to_string(x.rows()) + "x" +
                                            std::to_string(x.cols()) + ", model expects " +
                                            std::to_string(cfg_.n_in) + "x" + std::to_string(cfg_.window));
  }
  if (input_norm.size() != cfg_.n_in || target_norm.size() != cfg_.n_out) {
    throw Error(ErrorCode::shape_error, "standardization statistics do not match the model");
  }
  const std::size_t T = cfg_.n_tokens(), P = cfg_.patch, C = cfg_.n_in, D = cfg_.d_model;

  tr.tokens = Matrix(T, C * P);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) tr.tokens(t, c * P + p) = input_norm.forward(c, x(c, t * P + p));

  tr.layers.resize(cfg_.n_layers);
  Matrix& h0 = tr.layers[0].in;
  h0 = Matrix(T, D);
  ops::linear_forward(T, C * P, D, tr.tokens.data(), params_.at(embed_w_).data(),
                      params_.at(embed_b_).data(), h0.data());
  for (std::size_t i = 0; i < h0.size(); ++i) h0.values()[i] += positional_.values()[i];

  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    if (l > 0) tr.layers[l].in = tr.layers[l - 1].out;
    encoder_forward(layers_[l], tr.layers[l]);
  }

  const Matrix& last = tr.layers.back().out;
  tr.pooled.assign(D, 0.0);
  for (std::size_t t = 0; t < T; ++t) kernels::axpy(1.0 / static_cast<double>(T), last.row(t).data(), tr.pooled.data(), D);

  std::vector<double> y(cfg_.n_out);
  ops::linear_forward(1, D, cfg_.n_out, tr.pooled.data(), params_.at(head_w_).data(),
                      params_.at(head_b_).data(), y.data());
  for (double v : y) {
    if (!std::isfinite(v)) throw Error(ErrorCode::check_failed, "non-finite regressor output");
  }
  return y;
}

void Regressor::encoder_forward(const LayerIdx& li, EncoderTrace& t) const {
  const std::size_t T = cfg_.n_tokens(), D = cfg_.d_model, H = cfg_.n_heads, dh = cfg_.head_dim();
  const std::size_t F = cfg_.ff_mult * D;
  auto P = [&](std::size_t i) { return params_.at(i).data(); };

  t.q = Matrix(T, D);
  t.k = Matrix(T, D);
  t.v = Matrix(T, D);
  ops::linear_forward(T, D, D, t.in.data(), P(li.wq), P(li.bq), t.q.data());
  ops::linear_forward(T, D, D, t.in.data(), P(li.wk), nullptr, t.k.data());
  ops::linear_forward(T, D, D, t.in.data(), P(li.wv), P(li.bv), t.v.data());

  t.attn = Matrix(H * T, T);
  t.ctx = Matrix(T, D);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix qh(T, dh), kh(T, dh), vh(T, dh), oh(T, dh);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t r = 0; r < T; ++r)
      for (std::size_t j = 0; j < dh; ++j) {
        qh(r, j) = t.q(r, h * dh + j);
        kh(r, j) = t.k(r, h * dh + j);
        vh(r, j) = t.v(r, h * dh + j);
      }
    double* a = t.attn.data() + h * T * T;
    kernels::gemm_nt(T, T, dh, qh.data(), kh.data(), a, false);
    for (std::size_t i = 0; i < T * T; ++i) a[i] *= scale;
    ops::softmax_rows(T, T, a);
    oh.fill(0.0);
    kernels::gemm_nn_acc(T, dh, T, a, vh.data(), oh.data());
    for (std::size_t r = 0; r < T; ++r)
      for (std::size_t j = 0; j < dh; ++j) t.ctx(r, h * dh + j) = oh(r, j);
  }

  Matrix r1(T, D);
  ops::linear_forward(T, D, D, t.ctx.data(), P(li.wo), P(li.bo), r1.data());
  for (std::size_t i = 0; i < r1.size(); ++i) r1.values()[i] += t.in.values()[i];
  t.h1 = Matrix(T, D);
  t.xhat1 = Matrix(T, D);
  t.inv_std1.assign(T, 0.0);
  ops::layernorm_forward(T, D, r1.data(), P(li.ln1g), P(li.ln1b), t.h1.data(), t.xhat1.data(),
                         t.inv_std1.data());

  t.f1 = Matrix(T, F);
  ops::linear_forward(T, D, F, t.h1.data(), P(li.f1w), P(li.f1b), t.f1.data());
  t.g = Matrix(T, F);
  for (std::size_t i = 0; i < t.f1.size(); ++i) t.g.values()[i] = ops::gelu(t.f1.values()[i]);
  Matrix r2(T, D);
  ops::linear_forward(T, F, D, t.g.data(), P(li.f2w), P(li.f2b), r2.data());
  for (std::size_t i = 0; i < r2.size(); ++i) r2.values()[i] += t.h1.values()[i];
  t.out = Matrix(T, D);
  t.xhat2 = Matrix(T, D);
  t.inv_std2.assign(T, 0.0);
  ops::layernorm_forward(T, D, r2.data(), P(li.ln2g), P(li.ln2b), t.out.data(), t.xhat2.data(),
                         t.inv_std2.data());
}

void Regressor::backward(const RegressorTrace& tr, std::span<const double> dy) {
  if (dy.size() != cfg_.n_out) throw Error(ErrorCode::shape_error, "gradient size mismatch");
  const std::size_t T = cfg_.n_tokens(), D = cfg_.d_model, C = cfg_.n_in, P = cfg_.patch;

  std::vector<double> dpooled(D, 0.0);
  ops::linear_backward(1, D, cfg_.n_out, tr.pooled.data(), params_.at(head_w_).data(), dy.data(),
                       params_.at(head_w_).grad_data(), params_.at(head_b_).grad_data(), dpooled.data());

  Matrix dout(T, D);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < D; ++j) dout(t, j) = dpooled[j] / static_cast<double>(T);

  Matrix din(T, D);
  for (std::size_t l = cfg_.n_layers; l-- > 0;) {
    encoder_backward(layers_[l], tr.layers[l], dout, din);
    std::swap(dout, din);
  }
  // dout now holds the gradient w.r.t. the embedded tokens.
  ops::linear_backward(T, C * P, D, tr.tokens.data(), params_.at(embed_w_).data(), dout.data(),
                       params_.at(embed_w_).grad_data(), params_.at(embed_b_).grad_data(), nullptr);
}

void Regressor::encoder_backward(const LayerIdx& li, const EncoderTrace& t, Matrix& dout, Matrix& din) {
  const std::size_t T = cfg_.n_tokens(), D = cfg_.d_model, H = cfg_.n_heads, dh = cfg_.head_dim();
  const std::size_t F = cfg_.ff_mult * D;
  auto W = [&](std::size_t i) { return params_.at(i).data(); };
  auto G = [&](std::size_t i) { return params_.at(i).grad_data(); };

  // Second sub-layer.
  Matrix dr2(T, D);
  ops::layernorm_backward(T, D, dout.data(), t.xhat2.data(), t.inv_std2.data(), W(li.ln2g), G(li.ln2g),
                          G(li.ln2b), dr2.data());
  Matrix dg(T, F);
  ops::linear_backward(T, F, D, t.g.data(), W(li.f2w), dr2.data(), G(li.f2w), G(li.f2b), dg.data());
  for (std::size_t i = 0; i < dg.size(); ++i) dg.values()[i] *= ops::gelu_grad(t.f1.values()[i]);
  Matrix dh1 = dr2;  // residual path
  ops::linear_backward(T, D, F, t.h1.data(), W(li.f1w), dg.data(), G(li.f1w), G(li.f1b), dh1.data());

  // First sub-layer.
  Matrix dr1(T, D);
  ops::layernorm_backward(T, D, dh1.data(), t.xhat1.data(), t.inv_std1.data(), W(li.ln1g), G(li.ln1g),
                          G(li.ln1b), dr1.data());
  din = dr1;  // residual path
  Matrix dctx(T, D);
  ops::linear_backward(T, D, D, t.ctx.data(), W(li.wo), dr1.data(), G(li.wo), G(li.bo), dctx.data());

  Matrix dq(T, D), dk(T, D), dv(T, D);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix qh(T, dh), kh(T, dh), vh(T, dh), doh(T, dh), da(T, T);
  Matrix dqh(T, dh), dkh(T, dh), dvh(T, dh);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t r = 0; r < T; ++r)
      for (std::size_t j = 0; j < dh; ++j) {
        qh(r, j) = t.q(r, h * dh + j);
        kh(r, j) = t.k(r, h * dh + j);
        vh(r, j) = t.v(r, h * dh + j);
        doh(r, j) = dctx(r, h * dh + j);
      }
    const double* a = t.attn.data() + h * T * T;
    kernels::gemm_nt(T, T, dh, doh.data(), vh.data(), da.data(), false);
    dvh.fill(0.0);
    kernels::gemm_tn_acc(T, dh, T, a, doh.data(), dvh.data());
    ops::softmax_backward(T, T, a, da.data());
    for (double& v : da.values()) v *= scale;
    dqh.fill(0.0);
    dkh.fill(0.0);
    kernels::gemm_nn_acc(T, dh, T, da.data(), kh.data(), dqh.data());
    kernels::gemm_tn_acc(T, dh, T, da.data(), qh.data(), dkh.data());
    for (std::size_t r = 0; r < T; ++r)
      for (std::size_t j = 0; j < dh; ++j) {
        dq(r, h * dh + j) = dqh(r, j);
        dk(r, h * dh + j) = dkh(r, j);
        dv(r, h * dh + j) = dvh(r, j);
      }
  }
  ops::linear_backward(T, D, D, t.in.data(), W(li.wq), dq.data(), G(li.wq), G(li.bq), din.data());
  ops::linear_backward(T, D, D, t.in.data(), W(li.wk), dk.data(), G(li.wk), nullptr, din.data());
  ops::linear_backward(T, D, D, t.in.data(), W(li.wv), dv.data(), G(li.wv), G(li.bv), din.data());
}

std::vector<double> forward_regressor(const Regressor& model, const Matrix& x) { return model.forward(x); }

std::vector<double> predict_envelope(const Regressor& model, const Matrix& x) {
  auto y = model.forward(x);
  for (std::size_t c = 0; c < y.size(); ++c) y[c] = std::max(0.0, model.target_norm.inverse(c, y[c]));
  return y;
}

}  // namespace bmui::neural
