#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bmui/control.hpp"
#include "bmui/metrics.hpp"
#include "bmui/neural/model_io.hpp"
#include "bmui/neural/train.hpp"
#include "bmui/session.hpp"

// Offline steps shared by the CLI and the acceptance harness.
namespace bmui::workflow {

inline constexpr std::string_view kCalibrationFormat = "bmui-calibration/1";

// Raw sessions are aligned and preprocessed; preprocessed ones are only re-segmented.
session::PreparedSession load_prepared(const std::filesystem::path& dir);

/// One [channels x windows] prediction/target pair per listed trial.
metrics::EvalReport evaluate(const neural::Regressor& model, const session::WindowSet& windows,
                             const std::vector<std::size_t>& trials, const std::vector<std::string>& names);

struct RegressorRun {
  neural::RegressorFit fit;
  metrics::EvalReport test_report;
  std::vector<double> val_scc;  // per channel on the validation trials
  neural::ModelMeta meta;
};

/// Trains on the prepared session's trial windows. With `shuffle_seed` the
/// targets are permuted across windows first (negative control).
RegressorRun train_regressor_on(const session::PreparedSession& prep, const neural::RegressorConfig& model_cfg,
                                const neural::TrainConfig& cfg, const session::WindowConfig& windowing = {},
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt,
                                const neural::ProgressFn& progress = {});

// Causally preprocessed EEG as the online loop sees it, for either stage.
Matrix online_eeg(const std::filesystem::path& dir);

/// rest: steps at least `margin` steps away from any interval; effort: steps
/// inside "*_high" intervals (all intervals when none are marked high).
control::Calibration calibrate_from_track(const neural::EnvelopeTrack& track, std::span<const double> scc,
                                          double step_rate_hz = 1.0 / control::kStepSeconds,
                                          std::size_t margin = control::kHistorySteps);

struct ClassifierRun {
  neural::ClassifierFit fit;
  control::Calibration calibration;
  std::size_t n_sequences = 0;
};

ClassifierRun train_classifier_on(const neural::Regressor& regressor, const Matrix& eeg,
                                  std::span<const session::ActiveInterval> intervals, std::span<const double> scc,
                                  const neural::ClassifierConfig& model_cfg, const neural::TrainConfig& cfg,
                                  const neural::ProgressFn& progress = {});

// Comma-separated numbers, as stored in model metadata.
std::string join_numbers(std::span<const double> v);
std::vector<double> parse_numbers(const std::string& s);
std::vector<std::size_t> parse_indices(const std::string& s);

void save_calibration(const control::Calibration& calib, const std::filesystem::path& path,
                      const std::string& channel_name = {});
control::Calibration load_calibration(const std::filesystem::path& path);

}  // namespace bmui::workflow
