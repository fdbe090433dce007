#include "bmui/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "bmui/error.hpp"
#include "json.hpp"

namespace bmui::metrics {
using nlohmann::json;

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> out(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 (0-based) share rank mean((i+1)..j).
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) out[order[k]] = rank;
    i = j;
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::invalid_argument, "length mismatch");
  if (x.size() < 2) throw Error(ErrorCode::insufficient_data, "need at least 2 samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::undefined_correlation, "zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::invalid_argument, "length mismatch");
  if (x.size() < 3) throw Error(ErrorCode::insufficient_data, "spearman needs at least 3 samples");
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw Error(ErrorCode::invalid_argument, "df must be positive");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(boost::math::complement(dist, t));
}

TTest one_sample_t_test(std::span<const double> values, double mu0) {
  const std::size_t n = values.size();
  if (n < 2) throw Error(ErrorCode::insufficient_data, "t-test needs at least 2 values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw Error(ErrorCode::degenerate_sample, "sample standard deviation is zero");
  TTest r;
  r.df = n - 1;
  r.t = (mean - mu0) / (sd / std::sqrt(static_cast<double>(n)));
  r.p_one_sided = student_t_sf(r.t, static_cast<double>(r.df));
  return r;
}

EvalReport build_report(std::span<const Matrix> predicted, std::span<const Matrix> actual,
                        std::vector<std::string> channel_names) {
  if (predicted.size() != actual.size()) throw Error(ErrorCode::invalid_argument, "trial count mismatch");
  if (predicted.empty()) throw Error(ErrorCode::insufficient_data, "empty test set");
  const std::size_t n_ch = predicted.front().rows();
  for (std::size_t k = 0; k < predicted.size(); ++k) {
    if (predicted[k].rows() != n_ch || actual[k].rows() != n_ch ||
        predicted[k].cols() != actual[k].cols()) {
      throw Error(ErrorCode::shape_error, "trial " + std::to_string(k) + " shapes differ");
    }
  }
  if (channel_names.empty()) {
    for (std::size_t c = 0; c < n_ch; ++c) channel_names.push_back("ch" + std::to_string(c));
  }
  if (channel_names.size() != n_ch) throw Error(ErrorCode::shape_error, "one name per channel required");

  EvalReport r;
  r.channel_names = std::move(channel_names);
  r.n_trials = predicted.size();
  for (std::size_t c = 0; c < n_ch; ++c) {
    std::vector<double> p, a;
    for (std::size_t k = 0; k < predicted.size(); ++k) {
      auto pr = predicted[k].row(c);
      auto ar = actual[k].row(c);
      p.insert(p.end(), pr.begin(), pr.end());
      a.insert(a.end(), ar.begin(), ar.end());
    }
    r.n_windows = p.size();
    double scc = 0.0;
    try {
      scc = spearman(p, a);
    } catch (const Error& e) {
      // A constant prediction carries no rank information.
      if (e.code() != ErrorCode::undefined_correlation) throw;
    }
    r.per_channel_scc.push_back(scc);
  }
  r.mean_scc = std::accumulate(r.per_channel_scc.begin(), r.per_channel_scc.end(), 0.0) /
               static_cast<double>(n_ch);
  r.best_channel_index = static_cast<std::size_t>(
      std::max_element(r.per_channel_scc.begin(), r.per_channel_scc.end()) - r.per_channel_scc.begin());
  r.best_channel_scc = r.per_channel_scc[r.best_channel_index];

  for (std::size_t k = 0; k < predicted.size(); ++k) {
    try {
      r.per_trial_best_scc.push_back(
          spearman(predicted[k].row(r.best_channel_index), actual[k].row(r.best_channel_index)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::undefined_correlation && e.code() != ErrorCode::insufficient_data) throw;
    }
  }
  try {
    const TTest tt = one_sample_t_test(r.per_trial_best_scc);
    r.t_statistic = tt.t;
    r.p_value_one_sided = tt.p_one_sided;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::degenerate_sample && e.code() != ErrorCode::insufficient_data) throw;
    r.t_statistic = 0.0;
    r.p_value_one_sided = 1.0;
  }
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json j{{"format_version", "bmui-eval/1"},
         {"channel_names", r.channel_names},
         {"per_channel_scc", r.per_channel_scc},
         {"mean_scc", r.mean_scc},
         {"best_channel_index", r.best_channel_index},
         {"best_channel_scc", r.best_channel_scc},
         {"per_trial_best_scc", r.per_trial_best_scc},
         {"t_statistic", r.t_statistic},
         {"p_value_one_sided", r.p_value_one_sided},
         {"n_trials", r.n_trials},
         {"n_windows", r.n_windows}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    r.per_channel_scc = j.at("per_channel_scc").get<std::vector<double>>();
    r.mean_scc = j.at("mean_scc").get<double>();
    r.best_channel_index = j.at("best_channel_index").get<std::size_t>();
    r.best_channel_scc = j.at("best_channel_scc").get<double>();
    r.per_trial_best_scc = j.at("per_trial_best_scc").get<std::vector<double>>();
    r.t_statistic = j.at("t_statistic").get<double>();
    r.p_value_one_sided = j.at("p_value_one_sided").get<double>();
    r.n_trials = j.at("n_trials").get<std::size_t>();
    r.n_windows = j.at("n_windows").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, std::string("report: ") + e.what());
  }
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  out << report_to_json(report);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

std::string render_table(const EvalReport& r) {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "%-4s %-20s %10s\n", "ch", "name", "scc");
  out += line;
  for (std::size_t c = 0; c < r.per_channel_scc.size(); ++c) {
    std::snprintf(line, sizeof line, "%-4zu %-20s %10.6f%s\n", c, r.channel_names[c].c_str(),
                  r.per_channel_scc[c], c == r.best_channel_index ? "  *" : "");
    out += line;
  }
  std::snprintf(line, sizeof line,
                "mean_scc          %10.6f\n"
                "best_channel_scc  %10.6f  (%s)\n"
                "t_statistic       %10.6f\n"
                "p_value_one_sided %10.6g\n"
                "n_trials          %10zu\n"
                "n_windows         %10zu\n",
                r.mean_scc, r.best_channel_scc, r.channel_names[r.best_channel_index].c_str(),
                r.t_statistic, r.p_value_one_sided, r.n_trials, r.n_windows);
  out += line;
  return out;
}

}  // namespace bmui::metrics
