#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bmui/matrix.hpp"

namespace bmui::metrics {

/// 1-based ranks; tied values share the mean of the positions they cover.
std::vector<double> ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of ranks. Needs n >= 3 and non-constant inputs.
double spearman(std::span<const double> x, std::span<const double> y);

struct TTest {
  double t = 0.0;
  double p_one_sided = 1.0;  // P(T_df > t)
  std::size_t df = 0;
};

/// One-sample Student t-test of mean > mu0.
TTest one_sample_t_test(std::span<const double> values, double mu0 = 0.0);

// Upper tail of the Student-t distribution.
double student_t_sf(double t, double df);

struct EvalReport {
  std::vector<std::string> channel_names;
  std::vector<double> per_channel_scc;
  double mean_scc = 0.0;
  std::size_t best_channel_index = 0;
  double best_channel_scc = 0.0;
  std::vector<double> per_trial_best_scc;  // trials with undefined SCC are omitted
  double t_statistic = 0.0;
  double p_value_one_sided = 1.0;
  std::size_t n_trials = 0;
  std::size_t n_windows = 0;
};

/// `predicted` and `actual` hold one [channels x windows] matrix per trial.
/// SCC per channel is taken over all windows concatenated; the t-test runs
/// over the best channel's per-trial SCCs.
EvalReport build_report(std::span<const Matrix> predicted, std::span<const Matrix> actual,
                        std::vector<std::string> channel_names = {});

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);
// Fixed-layout table for terminals.
std::string render_table(const EvalReport& report);

}  // namespace bmui::metrics
