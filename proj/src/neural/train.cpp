#include "bmui/neural/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "bmui/error.hpp"

namespace bmui::neural {

void TrainConfig::validate() const {
  auto bad = [](const std::string& why) { return Error(ErrorCode::invalid_config, why); };
  if (epochs < 0) throw bad("epochs must be non-negative");
  if (batch_size == 0) throw bad("batch_size must be positive");
  if (patience < 1) throw bad("patience must be at least 1");
  if (!(adam.lr > 0.0)) throw bad("learning rate must be positive");
  for (double f : {train_fraction, val_fraction, test_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw bad("split fractions must lie in [0,1]");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw bad("split fractions must sum to 1");
  }
}

TrialSplit split_trials(std::size_t n, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5a1177ULL);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n)));
  auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(n)));
  if (cfg.val_fraction > 0.0 && n >= 3) n_val = std::max<std::size_t>(n_val, 1);
  if (cfg.test_fraction > 0.0 && n >= 3) n_test = std::max<std::size_t>(n_test, 1);
  n_val = std::min(n_val, n);
  n_test = std::min(n_test, n - n_val);
  TrialSplit s;
  s.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test),
               ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  s.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), ids.end());
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

namespace {

std::size_t count_groups(const std::vector<std::size_t>& ids) {
  return ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
}

// Shared early-stopping loop. `run_epoch` trains one epoch and returns its
// training loss; `val_loss` evaluates the current parameters.
template <class Model>
TrainHistory fit(Model& model, const TrainConfig& cfg, const std::function<double()>& initial_train_loss,
                 const std::function<double()>& run_epoch, const std::function<double()>& val_loss,
                 const ProgressFn& progress) {
  TrainHistory h;
  EpochStats e0{0, initial_train_loss(), val_loss()};
  h.epochs.push_back(e0);
  if (progress) progress(e0);
  h.best_epoch = 0;
  h.best_val_loss = e0.val_loss;
  ParamSet best = model.params();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochStats e{epoch, run_epoch(), val_loss()};
    model.params().check_finite("training");
    h.epochs.push_back(e);
    if (progress) progress(e);
    if (e.val_loss < h.best_val_loss) {
      h.best_val_loss = e.val_loss;
      h.best_epoch = epoch;
      best = model.params();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      h.stopped_early = true;
      break;
    }
  }
  model.params() = best;
  return h;
}

}  // namespace

// ---- regressor ---------------------------------------------------------------

std::vector<std::size_t> windows_of(const session::WindowSet& set, const std::vector<std::size_t>& trials) {
  const std::set<std::size_t> keep(trials.begin(), trials.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.windows.size(); ++i) {
    if (keep.count(set.windows[i].trial_id)) out.push_back(i);
  }
  return out;
}

double regressor_loss(const Regressor& model, const session::WindowSet& set,
                      const std::vector<std::size_t>& indices) {
  if (indices.empty()) return 0.0;
  double total = 0.0;
  const auto& tn = model.target_norm;
  for (std::size_t i : indices) {
    const auto& w = set.windows[i];
    const auto y = model.forward(w.x);
    for (std::size_t c = 0; c < y.size(); ++c) {
      const double d = y[c] - tn.forward(c, w.y[c]);
      total += d * d;
    }
  }
  return total / static_cast<double>(indices.size() * model.config().n_out);
}

RegressorFit train_regressor(const session::WindowSet& set, const RegressorConfig& model_cfg,
                             const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (set.windows.size() < 100) {
    throw Error(ErrorCode::insufficient_data,
                "need at least 100 windows, got " + std::to_string(set.windows.size()));
  }
  RegressorConfig mc = model_cfg;
  mc.n_in = set.windows.front().x.rows();
  mc.n_out = set.windows.front().y.size();
  mc.window = set.windows.front().x.cols();

  std::vector<std::size_t> trial_ids;
  for (const auto& w : set.windows) trial_ids.push_back(w.trial_id);
  RegressorFit out{Regressor(mc, cfg.seed), {}, split_trials(count_groups(trial_ids), cfg)};
  Regressor& model = out.model;
  const auto train = windows_of(set, out.split.train);
  const auto val = windows_of(set, out.split.val);
  if (train.empty() || val.empty()) throw Error(ErrorCode::insufficient_data, "empty train or validation split");

  // Standardization from training windows only.
  std::vector<std::vector<double>> xs, ys;
  for (std::size_t i : train) {
    const auto& w = set.windows[i];
    ys.push_back(w.y);
    for (std::size_t t = 0; t < w.x.cols(); t += mc.patch) {
      std::vector<double> col(w.x.rows());
      for (std::size_t c = 0; c < w.x.rows(); ++c) col[c] = w.x(c, t);
      xs.push_back(std::move(col));
    }
  }
  model.input_norm = Standardizer::fit(xs);
  model.target_norm = Standardizer::fit(ys);

  Adam adam(model.params(), cfg.adam);
  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<std::size_t> order = train;
  RegressorTrace trace;
  std::vector<double> dy(mc.n_out);

  auto run_epoch = [&]() {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const double scale = 2.0 / static_cast<double>((e - b) * mc.n_out);
      model.params().zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const auto& w = set.windows[order[k]];
        const auto y = model.forward(w.x, trace);
        for (std::size_t c = 0; c < mc.n_out; ++c) {
          const double d = y[c] - model.target_norm.forward(c, w.y[c]);
          total += d * d;
          dy[c] = scale * d;
        }
        model.backward(trace, dy);
      }
      adam.step(model.params());
    }
    return total / static_cast<double>(order.size() * mc.n_out);
  };
  out.history = fit(
      model, cfg, [&] { return regressor_loss(model, set, train); }, run_epoch,
      [&] { return regressor_loss(model, set, val); }, progress);
  return out;
}

// ---- classifier --------------------------------------------------------------

std::vector<std::size_t> sequences_of(const SequenceSet& data, const std::vector<std::size_t>& groups) {
  const std::set<std::size_t> keep(groups.begin(), groups.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    if (keep.count(data.group[i])) out.push_back(i);
  }
  return out;
}

EnvelopeTrack envelope_track(const Regressor& model, const Matrix& eeg,
                             std::span<const session::ActiveInterval> intervals,
                             const session::WindowConfig& windowing) {
  const std::size_t w = windowing.window_samples(), stride = windowing.stride_samples();
  if (w != model.config().window) throw Error(ErrorCode::shape_error, "window length differs from the model");
  if (stride == 0) throw Error(ErrorCode::invalid_config, "stride must be positive");
  if (eeg.cols() < w) throw Error(ErrorCode::insufficient_data, "stream shorter than one window");
  const std::size_t steps = (eeg.cols() - w) / stride + 1;
  EnvelopeTrack tr;
  tr.pred = Matrix(model.config().n_out, steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t end = w + k * stride;
    const auto y = predict_envelope(model, eeg.col_slice(end - w, end));
    for (std::size_t c = 0; c < y.size(); ++c) tr.pred(c, k) = y[c];
    const std::size_t t = end - 1;
    Direction d = Direction::rest;
    std::string trial;
    std::size_t g = 0;
    for (const auto& iv : intervals) {
      if (iv.start <= t) ++g;
      if (iv.start <= t && t < iv.end) {
        d = parse_direction(session::direction_of(iv.trial_label)).value_or(Direction::rest);
        trial = iv.trial_label;
      }
    }
    tr.t_end.push_back(t);
    tr.label.push_back(d);
    tr.trial.push_back(std::move(trial));
    tr.group.push_back(g);
  }
  return tr;
}

SequenceSet envelope_sequences(const EnvelopeTrack& track, std::size_t seq_len, std::size_t label_lag) {
  if (seq_len == 0) throw Error(ErrorCode::invalid_config, "sequence length must be positive");
  SequenceSet out;
  for (std::size_t k = seq_len; k <= track.pred.cols(); ++k) {
    out.x.push_back(track.pred.col_slice(k - seq_len, k));
    out.y.push_back(track.label[k - 1 - std::min(k - 1, label_lag)]);
    out.group.push_back(track.group[k - 1]);
  }
  return out;
}

namespace {

double cross_entropy(const std::array<double, kDirectionCount>& logits, Direction label,
                     std::array<double, kDirectionCount>* dlogits) {
  const auto p = softmax(logits);
  const auto k = static_cast<std::size_t>(label);
  if (dlogits) {
    for (std::size_t i = 0; i < kDirectionCount; ++i) (*dlogits)[i] = p[i] - (i == k ? 1.0 : 0.0);
  }
  return -std::log(std::max(p[k], 1e-300));
}

}  // namespace

double classifier_loss(const Classifier& model, const SequenceSet& data, const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i : idx) total += cross_entropy(model.logits(data.x[i]), data.y[i], nullptr);
  return total / static_cast<double>(idx.size());
}

double classifier_accuracy(const Classifier& model, const SequenceSet& data,
                           const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : idx) hits += argmax_direction(model.logits(data.x[i])) == data.y[i];
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

ClassifierFit train_classifier(const SequenceSet& data, const ClassifierConfig& model_cfg,
                               const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (data.x.size() != data.y.size() || data.x.size() != data.group.size()) {
    throw Error(ErrorCode::shape_error, "sequence set fields differ in length");
  }
  if (data.x.empty()) throw Error(ErrorCode::insufficient_data, "no sequences");
  ClassifierConfig mc = model_cfg;
  mc.n_in = data.x.front().rows();
  mc.seq_len = data.x.front().cols();

  ClassifierFit out{Classifier(mc, cfg.seed), {}, split_trials(count_groups(data.group), cfg), 0.0};
  Classifier& model = out.model;
  const auto train = sequences_of(data, out.split.train);
  const auto val = sequences_of(data, out.split.val);
  const auto test = sequences_of(data, out.split.test);

  std::array<std::vector<std::size_t>, kDirectionCount> by_class;
  for (std::size_t i : train) by_class[static_cast<std::size_t>(data.y[i])].push_back(i);
  for (std::size_t c = 0; c < kDirectionCount; ++c) {
    if (by_class[c].size() < 30) {
      throw Error(ErrorCode::insufficient_data,
                  "class '" + std::string(to_string(static_cast<Direction>(c))) + "' has " +
                      std::to_string(by_class[c].size()) + " training sequences, need 30");
    }
  }
  if (val.empty()) throw Error(ErrorCode::insufficient_data, "empty validation split");

  std::vector<std::vector<double>> cols;
  for (std::size_t i : train) {
    for (std::size_t t = 0; t < mc.seq_len; ++t) {
      std::vector<double> col(mc.n_in);
      for (std::size_t c = 0; c < mc.n_in; ++c) col[c] = data.x[i](c, t);
      cols.push_back(std::move(col));
    }
  }
  model.input_norm = Standardizer::fit(cols);

  Adam adam(model.params(), cfg.adam);
  std::mt19937_64 rng(cfg.seed + 1);
  std::array<std::size_t, kDirectionCount> cursor{};
  for (auto& v : by_class) std::shuffle(v.begin(), v.end(), rng);
  // Round-robin over classes so every batch is balanced.
  auto next_of = [&](std::size_t c) {
    if (cursor[c] == by_class[c].size()) {
      std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
      cursor[c] = 0;
    }
    return by_class[c][cursor[c]++];
  };
  ClassifierTrace trace;
  auto run_epoch = [&]() {
    double total = 0.0;
    std::size_t seen = 0;
    const std::size_t n_batches = std::max<std::size_t>(1, train.size() / cfg.batch_size);
    for (std::size_t b = 0; b < n_batches; ++b) {
      model.params().zero_grad();
      for (std::size_t k = 0; k < cfg.batch_size; ++k) {
        const std::size_t i = next_of(k % kDirectionCount);
        std::array<double, kDirectionCount> dl{};
        total += cross_entropy(model.logits(data.x[i], trace), data.y[i], &dl);
        for (double& g : dl) g /= static_cast<double>(cfg.batch_size);
        model.backward(trace, dl);
        ++seen;
      }
      adam.step(model.params());
    }
    return total / static_cast<double>(seen);
  };
  out.history = fit(
      model, cfg, [&] { return classifier_loss(model, data, train); }, run_epoch,
      [&] { return classifier_loss(model, data, val); }, progress);
  out.test_accuracy = classifier_accuracy(model, data, test);
  return out;
}

}  // namespace bmui::neural
