#include "bmui/workflow.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "bmui/dsp.hpp"
#include "bmui/error.hpp"

namespace bmui::workflow {
namespace fs = std::filesystem;
using nlohmann::json;

session::PreparedSession load_prepared(const fs::path& dir) {
  const auto raw = session::load_session(dir);
  if (session::load_stage(dir) == "preprocessed") return session::prepare_preprocessed(align(raw));
  return session::prepare_session(raw);
}

metrics::EvalReport evaluate(const neural::Regressor& model, const session::WindowSet& windows,
                             const std::vector<std::size_t>& trials, const std::vector<std::string>& names) {
  std::vector<Matrix> pred, actual;
  for (std::size_t trial : trials) {
    const auto idx = neural::windows_of(windows, {trial});
    if (idx.empty()) continue;
    Matrix p(model.config().n_out, idx.size()), a(model.config().n_out, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& w = windows.windows[idx[k]];
      const auto y = neural::predict_envelope(model, w.x);
      for (std::size_t c = 0; c < y.size(); ++c) {
        p(c, k) = y[c];
        a(c, k) = w.y[c];
      }
    }
    pred.push_back(std::move(p));
    actual.push_back(std::move(a));
  }
  return metrics::build_report(pred, actual, names);
}

std::string join_numbers(std::span<const double> v) {
  std::string out;
  for (double x : v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    (void)ec;
    if (!out.empty()) out += ',';
    out.append(buf, end);
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw Error(ErrorCode::invalid_argument, "bad number '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> parse_indices(const std::string& s) {
  std::vector<std::size_t> out;
  for (double v : parse_numbers(s)) out.push_back(static_cast<std::size_t>(v));
  return out;
}

namespace {

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t x : v) out += (out.empty() ? "" : ",") + std::to_string(x);
  return out;
}

}  // namespace

RegressorRun train_regressor_on(const session::PreparedSession& prep, const neural::RegressorConfig& model_cfg,
                                const neural::TrainConfig& cfg, const session::WindowConfig& windowing,
                                std::optional<std::uint64_t> shuffle_seed, const neural::ProgressFn& progress) {
  const auto windows = session::make_windows(prep.trials, windowing);
  auto train_set = windows;
  if (shuffle_seed) {
    std::vector<std::vector<double>> ys;
    for (const auto& w : train_set.windows) ys.push_back(w.y);
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(ys.begin(), ys.end(), rng);
    for (std::size_t i = 0; i < ys.size(); ++i) train_set.windows[i].y = std::move(ys[i]);
  }
  RegressorRun run{neural::train_regressor(train_set, model_cfg, cfg, progress), {}, {}, {}};
  const auto& names = prep.signals.emg.channel_names();
  // Evaluation is always against the true envelopes.
  run.test_report = evaluate(run.fit.model, windows, run.fit.split.test, names);
  run.val_scc = evaluate(run.fit.model, windows, run.fit.split.val, names).per_channel_scc;
  run.meta = {{"seed", std::to_string(cfg.seed)},
              {"epochs", std::to_string(cfg.epochs)},
              {"best_epoch", std::to_string(run.fit.history.best_epoch)},
              {"n_trials", std::to_string(prep.trials.size())},
              {"train_trials", join_indices(run.fit.split.train)},
              {"val_trials", join_indices(run.fit.split.val)},
              {"test_trials", join_indices(run.fit.split.test)},
              {"window_ms", std::to_string(windowing.window_ms)},
              {"stride_ms", std::to_string(windowing.stride_ms)},
              {"val_scc", join_numbers(run.val_scc)}};
  if (shuffle_seed) run.meta["shuffled_targets"] = std::to_string(*shuffle_seed);
  return run;
}

Matrix online_eeg(const fs::path& dir) {
  const auto raw = session::load_session(dir);
  const auto aligned = align(raw);
  if (session::load_stage(dir) == "preprocessed") return aligned.eeg.data();
  return dsp::preprocess_eeg_causal(aligned.eeg).data();
}

control::Calibration calibrate_from_track(const neural::EnvelopeTrack& track, std::span<const double> scc,
                                          double step_rate_hz, std::size_t margin) {
  const std::size_t n = track.pred.cols();
  const bool any_high = std::any_of(track.trial.begin(), track.trial.end(),
                                    [](const std::string& t) { return t.ends_with("_high"); });
  std::vector<bool> near_active(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    if (track.label[k] == Direction::rest && track.trial[k].empty()) continue;
    const std::size_t lo = k >= margin ? k - margin : 0;
    const std::size_t hi = std::min(n, k + margin + 1);
    for (std::size_t j = lo; j < hi; ++j) near_active[j] = true;
  }
  std::vector<std::size_t> rest, effort;
  for (std::size_t k = 0; k < n; ++k) {
    if (!near_active[k]) rest.push_back(k);
    if (!track.trial[k].empty() && (!any_high || track.trial[k].ends_with("_high"))) effort.push_back(k);
  }
  auto gather = [&](const std::vector<std::size_t>& cols) {
    Matrix m(track.pred.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t c = 0; c < m.rows(); ++c) m(c, j) = track.pred(c, cols[j]);
    return m;
  };
  return control::calibrate(gather(rest), gather(effort), scc, step_rate_hz);
}

ClassifierRun train_classifier_on(const neural::Regressor& regressor, const Matrix& eeg,
                                  std::span<const session::ActiveInterval> intervals, std::span<const double> scc,
                                  const neural::ClassifierConfig& model_cfg, const neural::TrainConfig& cfg,
                                  const neural::ProgressFn& progress) {
  const auto track = neural::envelope_track(regressor, eeg, intervals);
  const auto seqs = neural::envelope_sequences(track, control::kHistorySteps);
  ClassifierRun run{neural::train_classifier(seqs, model_cfg, cfg, progress), calibrate_from_track(track, scc),
                    seqs.x.size()};
  return run;
}

void save_calibration(const control::Calibration& calib, const fs::path& path, const std::string& channel_name) {
  json j = {{"format", kCalibrationFormat},
            {"channel_index", calib.channel_index},
            {"channel_name", channel_name},
            {"env_min", calib.env_min},
            {"env_max", calib.env_max}};
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
}

control::Calibration load_calibration(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("format") != kCalibrationFormat) {
      throw Error(ErrorCode::unsupported_version, "calibration format " + j.at("format").dump());
    }
    control::Calibration c;
    c.channel_index = j.at("channel_index").get<std::size_t>();
    c.env_min = j.at("env_min").get<double>();
    c.env_max = j.at("env_max").get<double>();
    if (!(c.env_max > c.env_min) || c.env_min < 0.0) {
      throw Error(ErrorCode::calibration_failed, "stored calibration has env_max <= env_min");
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
  }
}

}  // namespace bmui::workflow
