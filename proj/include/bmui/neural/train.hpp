#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bmui/direction.hpp"
#include "bmui/matrix.hpp"
#include "bmui/neural/classifier.hpp"
#include "bmui/neural/params.hpp"
#include "bmui/neural/regressor.hpp"
#include "bmui/session.hpp"

namespace bmui::neural {

struct TrainConfig {
  int epochs = 40;
  std::size_t batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 42;
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  int patience = 10;  // epochs without validation improvement before stopping

  void validate() const;  // invalid_config
};

struct EpochStats {
  int epoch = 0;  // 0 is the untrained model
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Trial ids per partition. Every trial lands in exactly one partition.
struct TrialSplit {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle of trial ids 0..n-1 cut by the configured fractions.
TrialSplit split_trials(std::size_t n_trials, const TrainConfig& cfg);

using ProgressFn = std::function<void(const EpochStats&)>;

// ---- regressor ---------------------------------------------------------------

struct RegressorFit {
  Regressor model;
  TrainHistory history;
  TrialSplit split;
};

// Window indices whose trial id is in `trials`.
std::vector<std::size_t> windows_of(const session::WindowSet& set, const std::vector<std::size_t>& trials);

/// Adam on MSE in standardized target units; returns the best-validation
/// parameters. Needs at least 100 windows.
RegressorFit train_regressor(const session::WindowSet& windows, const RegressorConfig& model_cfg,
                             const TrainConfig& cfg, const ProgressFn& progress = {});

// Mean squared error in standardized units over the selected windows.
double regressor_loss(const Regressor& model, const session::WindowSet& windows,
                      const std::vector<std::size_t>& indices);

// ---- classifier --------------------------------------------------------------

struct SequenceSet {
  std::vector<Matrix> x;          // [channels x seq_len]
  std::vector<Direction> y;
  std::vector<std::size_t> group;  // split unit (trial id)
};

struct ClassifierFit {
  Classifier model;
  TrainHistory history;
  TrialSplit split;
  double test_accuracy = 0.0;
};

/// Softmax cross-entropy with class-stratified batches. Needs at least 30
/// training sequences per class.
ClassifierFit train_classifier(const SequenceSet& data, const ClassifierConfig& model_cfg,
                               const TrainConfig& cfg, const ProgressFn& progress = {});

double classifier_loss(const Classifier& model, const SequenceSet& data,
                       const std::vector<std::size_t>& indices);
double classifier_accuracy(const Classifier& model, const SequenceSet& data,
                           const std::vector<std::size_t>& indices);
std::vector<std::size_t> sequences_of(const SequenceSet& data, const std::vector<std::size_t>& groups);

/// Regressor predictions along a continuous preprocessed EEG stream, one
/// column per window stride.
struct EnvelopeTrack {
  Matrix pred;                      // [n_out x steps]
  std::vector<std::size_t> t_end;   // last sample of each window
  std::vector<Direction> label;     // interval direction at t_end, rest outside
  std::vector<std::string> trial;   // interval label at t_end, empty outside
  std::vector<std::size_t> group;   // interval starts up to t_end
};

EnvelopeTrack envelope_track(const Regressor& model, const Matrix& eeg,
                             std::span<const session::ActiveInterval> intervals,
                             const session::WindowConfig& windowing = {});

/// Cuts a track into `seq_len`-step sequences. The label is the direction
/// `label_lag` steps before the last step, which absorbs the envelope's
/// response delay; a trial and the rest after it share a group.
SequenceSet envelope_sequences(const EnvelopeTrack& track, std::size_t seq_len = 10, std::size_t label_lag = 2);

// ---- gradient check ------------------------------------------------------------

enum class ModelKind { regressor, classifier };

struct GradCheckOptions {
  double eps = 1e-5;
  std::optional<std::string> corrupt_param;  // doubles this tensor's analytic gradient
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
};

/// Central finite differences against backward() on a tiny instance
/// (regressor: 4 EEG ch, 3 outputs, D=8, H=2, 1 layer, W=20, P=5;
/// classifier: 3 ch, 10 steps, 4 filters). Non-finite loss -> check_failed.
GradCheckResult grad_check(ModelKind kind, std::uint64_t seed, const GradCheckOptions& opts = {});

}  // namespace bmui::neural
