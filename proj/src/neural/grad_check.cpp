#include <cmath>
#include <random>

#include "bmui/error.hpp"
#include "bmui/neural/train.hpp"

namespace bmui::neural {
namespace {

constexpr std::size_t kBatch = 3;

template <class Model>
GradCheckResult compare(Model& model, const std::function<double()>& loss,
                        const std::function<void()>& accumulate, const GradCheckOptions& opts) {
  ParamSet& params = model.params();
  params.zero_grad();
  accumulate();
  if (opts.corrupt_param) {
    for (double& g : params.at(params.index_of(*opts.corrupt_param)).grad) g *= 2.0;
  }
  GradCheckResult r;
  for (std::size_t p = 0; p < params.count(); ++p) {
    Tensor& t = params.at(p);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t.values[i];
      t.values[i] = saved + opts.eps;
      const double up = loss();
      t.values[i] = saved - opts.eps;
      const double down = loss();
      t.values[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw Error(ErrorCode::check_failed, "non-finite loss while perturbing " + params.name(p));
      }
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double rel = std::abs(t.grad[i] - numeric) / std::max(1e-8, std::abs(numeric));
      ++r.n_checked;
      if (rel > r.max_relative_error || r.worst_param.empty()) {
        r.max_relative_error = rel;
        r.worst_param = params.name(p);
        r.worst_index = i;
      }
    }
  }
  return r;
}

GradCheckResult check_regressor(std::uint64_t seed, const GradCheckOptions& opts) {
  RegressorConfig cfg;
  cfg.n_in = 4;
  cfg.n_out = 3;
  cfg.window = 20;
  cfg.patch = 5;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.head_init_std = 0.5;
  Regressor model(cfg, seed);
  std::mt19937_64 rng(seed + 101);
  std::normal_distribution<double> g;
  // Perturb every parameter away from its structured initial value.
  for (std::size_t p = 0; p < model.params().count(); ++p) {
    for (double& v : model.params().at(p).values) v += 0.1 * g(rng);
  }
  std::vector<Matrix> xs;
  std::vector<std::vector<double>> ys;
  for (std::size_t b = 0; b < kBatch; ++b) {
    Matrix x(cfg.n_in, cfg.window);
    for (double& v : x.values()) v = g(rng);
    xs.push_back(std::move(x));
    std::vector<double> y(cfg.n_out);
    for (double& v : y) v = g(rng);
    ys.push_back(std::move(y));
  }
  const double norm = 1.0 / static_cast<double>(kBatch * cfg.n_out);
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t b = 0; b < kBatch; ++b) {
      const auto y = model.forward(xs[b]);
      for (std::size_t c = 0; c < y.size(); ++c) total += (y[c] - ys[b][c]) * (y[c] - ys[b][c]);
    }
    return total * norm;
  };
  auto accumulate = [&] {
    RegressorTrace trace;
    for (std::size_t b = 0; b < kBatch; ++b) {
      const auto y = model.forward(xs[b], trace);
      std::vector<double> dy(y.size());
      for (std::size_t c = 0; c < y.size(); ++c) dy[c] = 2.0 * norm * (y[c] - ys[b][c]);
      model.backward(trace, dy);
    }
  };
  if (!std::isfinite(loss())) throw Error(ErrorCode::check_failed, "non-finite loss");
  return compare(model, loss, accumulate, opts);
}

GradCheckResult check_classifier(std::uint64_t seed, const GradCheckOptions& opts) {
  ClassifierConfig cfg;
  cfg.n_in = 3;
  cfg.seq_len = 10;
  cfg.n_filters = 4;
  Classifier model(cfg, seed);
  std::mt19937_64 rng(seed + 202);
  std::normal_distribution<double> g;
  for (std::size_t p = 0; p < model.params().count(); ++p) {
    for (double& v : model.params().at(p).values) v += 0.1 * g(rng);
  }
  std::vector<Matrix> xs;
  std::vector<std::size_t> labels;
  for (std::size_t b = 0; b < kBatch; ++b) {
    Matrix x(cfg.n_in, cfg.seq_len);
    for (double& v : x.values()) v = g(rng);
    xs.push_back(std::move(x));
    labels.push_back(b % kDirectionCount);
  }
  auto loss = [&] {
    double total = 0.0;
    for (std::size_t b = 0; b < kBatch; ++b) {
      const auto p = softmax(model.logits(xs[b]));
      total -= std::log(p[labels[b]]);
    }
    return total / static_cast<double>(kBatch);
  };
  auto accumulate = [&] {
    ClassifierTrace trace;
    for (std::size_t b = 0; b < kBatch; ++b) {
      const auto p = softmax(model.logits(xs[b], trace));
      std::array<double, kDirectionCount> dl{};
      for (std::size_t i = 0; i < kDirectionCount; ++i) {
        dl[i] = (p[i] - (i == labels[b] ? 1.0 : 0.0)) / static_cast<double>(kBatch);
      }
      model.backward(trace, dl);
    }
  };
  if (!std::isfinite(loss())) throw Error(ErrorCode::check_failed, "non-finite loss");
  return compare(model, loss, accumulate, opts);
}

}  // namespace

GradCheckResult grad_check(ModelKind kind, std::uint64_t seed, const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw Error(ErrorCode::invalid_argument, "eps must be positive");
  return kind == ModelKind::regressor ? check_regressor(seed, opts) : check_classifier(seed, opts);
}

}  // namespace bmui::neural
