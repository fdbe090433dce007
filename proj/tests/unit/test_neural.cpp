#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

#include "bmui/error.hpp"
#include "bmui/neural/model_io.hpp"
#include "bmui/neural/train.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bmui;
using namespace bmui::neural;
using testutil::code_of;
namespace fs = std::filesystem;

namespace {

RegressorConfig tiny_regressor() {
  RegressorConfig c;
  c.n_in = 4;
  c.n_out = 3;
  c.window = 20;
  c.patch = 5;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  return c;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (double& v : m.values()) v = g(rng);
  return m;
}

// Windows whose targets are a fixed function of the input.
session::WindowSet toy_windows(std::size_t n, std::size_t n_trials, std::uint64_t seed, bool constant) {
  std::mt19937_64 rng(seed);
  session::WindowSet set;
  for (std::size_t i = 0; i < n; ++i) {
    session::WindowPair w;
    w.x = random_matrix(4, 20, rng);
    double m0 = 0.0;
    for (double v : w.x.row(0)) m0 += v;
    m0 /= 20.0;
    w.y = constant ? std::vector<double>{2.0, 3.0, 4.0} : std::vector<double>{m0, -m0, 1.0 + 0.5 * m0};
    w.trial_id = i % n_trials;
    w.trial_label = "flex_high";
    set.windows.push_back(std::move(w));
  }
  return set;
}

// Channel k carries a positive offset for class k; rest is noise only.
SequenceSet toy_sequences(std::size_t per_class, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SequenceSet s;
  for (std::size_t i = 0; i < per_class * 3; ++i) {
    const auto d = static_cast<Direction>(i % 3);
    Matrix x = random_matrix(3, 10, rng);
    if (d != Direction::rest) {
      for (double& v : x.row(static_cast<std::size_t>(d))) v += 2.0;
    }
    s.x.push_back(std::move(x));
    s.y.push_back(d);
    s.group.push_back(i);
  }
  return s;
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("bmui_neural_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::trunc);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("regressor with a zero head outputs its bias") {
  Regressor m(tiny_regressor(), 3);
  auto& b = m.params().at(m.params().index_of("head.b"));
  b.values = {0.25, -1.0, 2.0};
  std::mt19937_64 rng(1);
  for (int i = 0; i < 5; ++i) {
    const auto y = m.forward(random_matrix(4, 20, rng));
    REQUIRE(y.size() == 3);
    CHECK(y[0] == 0.25);
    CHECK(y[1] == -1.0);
    CHECK(y[2] == 2.0);
  }
}

TEST_CASE("regressor init is seed-deterministic") {
  CHECK(Regressor(tiny_regressor(), 9).params() == Regressor(tiny_regressor(), 9).params());
  CHECK_FALSE(Regressor(tiny_regressor(), 9).params() == Regressor(tiny_regressor(), 10).params());
  CHECK(Classifier(ClassifierConfig{}, 4).params() == Classifier(ClassifierConfig{}, 4).params());
}

TEST_CASE("positional encoding makes the output order-sensitive") {
  auto cfg = tiny_regressor();
  cfg.head_init_std = 0.5;
  Regressor m(cfg, 5);
  std::mt19937_64 rng(2);
  const Matrix x = random_matrix(4, 20, rng);
  Matrix swapped = x;
  // Swap the first and last patch.
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t k = 0; k < 5; ++k) std::swap(swapped(c, k), swapped(c, 15 + k));
  const auto a = m.forward(x), b = m.forward(swapped);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  CHECK(diff > 1e-6);
}

TEST_CASE("attention rows are distributions and layer norm outputs are normalized") {
  auto cfg = tiny_regressor();
  cfg.head_init_std = 0.5;
  Regressor m(cfg, 6);
  std::mt19937_64 rng(3);
  RegressorTrace tr;
  m.forward(random_matrix(4, 20, rng), tr);
  REQUIRE(tr.layers.size() == 1);
  const auto& L = tr.layers[0];
  REQUIRE(L.attn.rows() == cfg.n_heads * cfg.n_tokens());
  for (std::size_t r = 0; r < L.attn.rows(); ++r) {
    double s = 0.0;
    for (double v : L.attn.row(r)) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  for (const Matrix* xhat : {&L.xhat1, &L.xhat2}) {
    for (std::size_t r = 0; r < xhat->rows(); ++r) {
      double mean = 0.0, var = 0.0;
      for (double v : xhat->row(r)) mean += v;
      mean /= static_cast<double>(xhat->cols());
      for (double v : xhat->row(r)) var += (v - mean) * (v - mean);
      var /= static_cast<double>(xhat->cols());
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(std::abs(var - 1.0) <= 1e-3);
    }
  }
}

TEST_CASE("shape mismatches are rejected") {
  Regressor m(tiny_regressor(), 1);
  CHECK(code_of([&] { m.forward(Matrix(4, 19)); }) == ErrorCode::shape_error);
  CHECK(code_of([&] { m.forward(Matrix(5, 20)); }) == ErrorCode::shape_error);
  Classifier c(ClassifierConfig{}, 1);
  CHECK(code_of([&] { c.logits(Matrix(12, 9)); }) == ErrorCode::shape_error);
  auto bad = tiny_regressor();
  bad.window = 21;
  CHECK(code_of([&] { Regressor(bad, 0); }) == ErrorCode::invalid_config);
  bad = tiny_regressor();
  bad.n_heads = 3;
  CHECK(code_of([&] { Regressor(bad, 0); }) == ErrorCode::invalid_config);
}

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    const auto r = grad_check(ModelKind::regressor, seed);
    CAPTURE(r.worst_param);
    CHECK(r.max_relative_error <= 1e-4);
    CHECK(r.n_checked == Regressor(tiny_regressor(), 0).params().total_size());
    const auto c = grad_check(ModelKind::classifier, seed);
    CAPTURE(c.worst_param);
    CHECK(c.max_relative_error <= 1e-4);
  }
}

TEST_CASE("gradient check detects a corrupted gradient") {
  GradCheckOptions o;
  o.corrupt_param = "enc0.wq";
  const auto r = grad_check(ModelKind::regressor, 0, o);
  CHECK(r.max_relative_error > 1e-2);
  CHECK(r.worst_param == "enc0.wq");
  o.corrupt_param = "conv1.w";
  CHECK(grad_check(ModelKind::classifier, 0, o).max_relative_error > 1e-2);
  o.corrupt_param = "nope";
  CHECK(code_of([&] { grad_check(ModelKind::classifier, 0, o); }) == ErrorCode::not_found);
}

TEST_CASE("trial split is a seeded partition") {
  TrainConfig cfg;
  const auto s = split_trials(40, cfg);
  CHECK(s.test.size() == 6);
  CHECK(s.val.size() == 6);
  CHECK(s.train.size() == 28);
  std::set<std::size_t> all;
  for (const auto* part : {&s.train, &s.val, &s.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == 40);
  CHECK(*all.rbegin() == 39);
  const auto again = split_trials(40, cfg);
  CHECK(again.test == s.test);
  cfg.seed = 43;
  CHECK(split_trials(40, cfg).test != s.test);
}

TEST_CASE("standardizer round trip and zero spread") {
  std::vector<std::vector<double>> rows = {{1.0, 5.0}, {3.0, 5.0}, {5.0, 5.0}};
  const auto s = Standardizer::fit(rows);
  CHECK(s.mean[0] == doctest::Approx(3.0));
  CHECK(s.stddev[1] == 1.0);
  for (double v : {-2.5, 0.0, 7.25}) CHECK(s.inverse(0, s.forward(0, v)) == doctest::Approx(v).epsilon(1e-14));
}

TEST_CASE("training fits a constant target") {
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 16;
  const auto fit = train_regressor(toy_windows(150, 30, 1, true), tiny_regressor(), tc);
  CHECK(fit.history.best_val_loss <= 1e-3);
  std::mt19937_64 rng(4);
  const auto pred = predict_envelope(fit.model, random_matrix(4, 20, rng));
  CHECK(pred[0] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(pred[2] == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("training reduces validation loss on a learnable target") {
  TrainConfig tc;
  tc.epochs = 25;
  tc.batch_size = 16;
  tc.adam.lr = 3e-3;
  const auto fit = train_regressor(toy_windows(300, 60, 2, false), tiny_regressor(), tc);
  REQUIRE(fit.history.epochs.size() >= 2);
  CHECK(fit.history.epochs[0].epoch == 0);
  CHECK(fit.history.best_val_loss < 0.5 * fit.history.epochs[0].val_loss);
  const auto& best = fit.history.epochs[static_cast<std::size_t>(fit.history.best_epoch)];
  CHECK(best.val_loss == fit.history.best_val_loss);
  // The returned parameters are the best-validation ones.
  const auto val_idx = windows_of(toy_windows(300, 60, 2, false), fit.split.val);
  CHECK(regressor_loss(fit.model, toy_windows(300, 60, 2, false), val_idx) ==
        doctest::Approx(fit.history.best_val_loss).epsilon(1e-12));
}

TEST_CASE("training is deterministic for a fixed seed") {
  TrainConfig tc;
  tc.epochs = 2;
  const auto data = toy_windows(120, 30, 3, false);
  const auto a = train_regressor(data, tiny_regressor(), tc);
  const auto b = train_regressor(data, tiny_regressor(), tc);
  CHECK(a.model.params() == b.model.params());
  CHECK(a.split.test == b.split.test);
}

TEST_CASE("training needs enough data") {
  TrainConfig tc;
  tc.epochs = 1;
  CHECK(code_of([&] { train_regressor(toy_windows(99, 30, 1, false), tiny_regressor(), tc); }) ==
        ErrorCode::insufficient_data);
  tc.train_fraction = 0.9;
  CHECK(code_of([&] { train_regressor(toy_windows(150, 30, 1, false), tiny_regressor(), tc); }) ==
        ErrorCode::invalid_config);
}

TEST_CASE("predicted envelopes are non-negative") {
  auto cfg = tiny_regressor();
  cfg.head_init_std = 2.0;
  Regressor m(cfg, 8);
  std::mt19937_64 rng(5);
  bool any_clamped = false;
  for (int i = 0; i < 50; ++i) {
    const auto x = random_matrix(4, 20, rng);
    const auto raw = forward_regressor(m, x);
    const auto y = predict_envelope(m, x);
    for (std::size_t c = 0; c < y.size(); ++c) {
      CHECK(y[c] >= 0.0);
      if (raw[c] < 0.0) any_clamped = true;
    }
  }
  CHECK(any_clamped);
}

TEST_CASE("softmax is a distribution") {
  for (const auto& l : {std::array<double, 3>{0.0, 0.0, 0.0}, std::array<double, 3>{1000.0, -1000.0, 3.0},
                        std::array<double, 3>{-5.0, 2.0, 2.0}}) {
    const auto p = softmax(l);
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-15));
    for (double v : p) CHECK(v >= 0.0);
  }
  CHECK(argmax_direction({0.1, 0.9, 0.2}) == Direction::extend);
  CHECK(argmax_direction({0.0, -1.0, 3.0}) == Direction::rest);
}

TEST_CASE("classifier learns a separable toy problem") {
  ClassifierConfig cc;
  cc.n_in = 3;
  cc.n_filters = 8;
  TrainConfig tc;
  tc.epochs = 15;
  tc.adam.lr = 3e-3;
  const auto fit = train_classifier(toy_sequences(80, 11), cc, tc);
  CHECK(fit.test_accuracy >= 0.95);
  const auto eval = toy_sequences(40, 12);
  std::vector<std::size_t> all(eval.x.size());
  std::iota(all.begin(), all.end(), 0);
  CHECK(classifier_accuracy(fit.model, eval, all) >= 0.95);
}

TEST_CASE("classifier needs every class") {
  ClassifierConfig cc;
  cc.n_in = 3;
  TrainConfig tc;
  tc.epochs = 1;
  auto one = toy_sequences(80, 1);
  for (auto& d : one.y) d = Direction::flex;
  CHECK(code_of([&] { train_classifier(one, cc, tc); }) == ErrorCode::insufficient_data);
  CHECK(code_of([&] { train_classifier(toy_sequences(20, 1), cc, tc); }) == ErrorCode::insufficient_data);
}

TEST_CASE("model files round-trip bit for bit") {
  TempDir dir;
  auto cfg = tiny_regressor();
  cfg.head_init_std = 0.3;
  Regressor m(cfg, 12);
  m.input_norm.mean = {0.1, -0.2, 1.0 / 3.0, 5e-7};
  m.input_norm.stddev = {1.0, 2.5, 0.1, 1e10};
  m.target_norm = Standardizer::identity(3);
  const auto path = dir.path / "reg.model";
  save_regressor(m, path, {{"seed", "12"}, {"note", "two words"}});
  ModelMeta meta;
  const Regressor back = load_regressor(path, &meta);
  auto expect = m.config();
  expect.head_init_std = back.config().head_init_std;  // init-only, not stored
  CHECK(back.config() == expect);
  CHECK(back.params() == m.params());
  CHECK(back.input_norm == m.input_norm);
  CHECK(meta.at("note") == "two words");
  CHECK(model_kind(path) == "regressor");
  std::mt19937_64 rng(6);
  const auto x = random_matrix(4, 20, rng);
  CHECK(back.forward(x) == m.forward(x));

  Classifier c(ClassifierConfig{}, 2);
  const auto cpath = dir.path / "cls.model";
  save_classifier(c, cpath);
  CHECK(load_classifier(cpath).params() == c.params());
  CHECK(model_kind(cpath) == "classifier");
  CHECK(code_of([&] { load_regressor(cpath); }) == ErrorCode::corrupt_model);
}

TEST_CASE("damaged model files are rejected") {
  TempDir dir;
  const auto path = dir.path / "reg.model";
  save_regressor(Regressor(tiny_regressor(), 1), path);
  const auto lines = read_lines(path);

  SUBCASE("truncated") {
    auto cut = lines;
    cut.resize(cut.size() - 3);
    write_lines(path, cut);
  }
  SUBCASE("edited model width") {
    auto edited = lines;
    for (auto& l : edited)
      if (l == "hyper d_model 8") l = "hyper d_model 12";
    write_lines(path, edited);
  }
  SUBCASE("garbled value") {
    auto edited = lines;
    edited[edited.size() - 2] += " x";
    write_lines(path, edited);
  }
  SUBCASE("wrong header") {
    auto edited = lines;
    edited[0] = "bmui-model/2";
    write_lines(path, edited);
  }
  CHECK(code_of([&] { load_regressor(path); }) == ErrorCode::corrupt_model);
  CHECK(code_of([&] { load_regressor(dir.path / "missing.model"); }) == ErrorCode::not_found);
}

TEST_CASE("envelope track follows the stream and labels each step") {
  std::mt19937_64 rng(77);
  Regressor model(tiny_regressor(), 3);
  model.params().at(model.params().index_of("head.w")).values.assign(3 * 8, 0.1);
  model.input_norm = Standardizer::identity(4);
  model.target_norm = Standardizer::identity(3);
  const Matrix eeg = random_matrix(4, 200, rng);
  const std::vector<session::ActiveInterval> intervals = {{50, 100, "flex_high"}, {130, 170, "extend_low"}};
  session::WindowConfig wc;
  wc.window_ms = 20.0;
  wc.stride_ms = 5.0;
  const auto tr = envelope_track(model, eeg, intervals, wc);
  REQUIRE(tr.pred.cols() == 37);
  REQUIRE(tr.label.size() == 37);
  for (std::size_t k = 0; k < 37; ++k) {
    const std::size_t t = 19 + 5 * k;
    CHECK(tr.t_end[k] == t);
    const auto y = predict_envelope(model, eeg.col_slice(t + 1 - 20, t + 1));
    for (std::size_t c = 0; c < 3; ++c) CHECK(tr.pred(c, k) == y[c]);
    const Direction want = (t >= 50 && t < 100) ? Direction::flex : (t >= 130 && t < 170) ? Direction::extend
                                                                                          : Direction::rest;
    CHECK(tr.label[k] == want);
    CHECK(tr.trial[k] == (want == Direction::flex ? "flex_high" : want == Direction::extend ? "extend_low" : ""));
    CHECK(tr.group[k] == static_cast<std::size_t>((t >= 50) + (t >= 130)));
  }
  session::WindowConfig wrong = wc;
  wrong.window_ms = 40.0;
  CHECK(code_of([&] { envelope_track(model, eeg, intervals, wrong); }) == ErrorCode::shape_error);
  CHECK(code_of([&] { envelope_track(model, eeg.col_slice(0, 10), intervals, wc); }) ==
        ErrorCode::insufficient_data);
}

TEST_CASE("envelope sequences are lagged sliding slices of the track") {
  EnvelopeTrack tr;
  const std::size_t steps = 30;
  tr.pred = Matrix(2, steps);
  for (std::size_t k = 0; k < steps; ++k) {
    tr.pred(0, k) = static_cast<double>(k);
    tr.pred(1, k) = -static_cast<double>(k);
    tr.label.push_back(k < 12 ? Direction::rest : k < 20 ? Direction::flex : Direction::extend);
    tr.group.push_back(k / 10);
  }
  for (std::size_t lag : {0u, 2u, 25u}) {
    const auto seqs = envelope_sequences(tr, 10, lag);
    REQUIRE(seqs.x.size() == steps - 9);
    for (std::size_t i = 0; i < seqs.x.size(); ++i) {
      const std::size_t last = i + 9;
      CHECK(seqs.x[i].cols() == 10);
      CHECK(seqs.x[i](0, 0) == static_cast<double>(i));
      CHECK(seqs.x[i](1, 9) == -static_cast<double>(last));
      CHECK(seqs.y[i] == tr.label[last >= lag ? last - lag : 0]);
      CHECK(seqs.group[i] == tr.group[last]);
    }
  }
  CHECK(envelope_sequences(tr, 31).x.empty());
  CHECK(code_of([&] { envelope_sequences(tr, 0); }) == ErrorCode::invalid_config);
}
