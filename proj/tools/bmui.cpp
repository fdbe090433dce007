// Command-line entry point: offline data and model steps plus the live server.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <fstream>
#include <numeric>
#include <thread>

#include "CLI11.hpp"
#include "bmui/dsp.hpp"
#include "bmui/error.hpp"
#include "bmui/kernels.hpp"
#include "bmui/rt/pipeline.hpp"
#include "bmui/rt/server.hpp"
#include "bmui/synth.hpp"
#include "bmui/workflow.hpp"

namespace fs = std::filesystem;
using namespace bmui;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void print_epoch(const neural::EpochStats& s) {
  std::printf("epoch %3d  train %.5f  val %.5f\n", s.epoch, s.train_loss, s.val_loss);
  std::fflush(stdout);
}

int default_port() {
  if (const char* env = std::getenv("BMUI_PORT")) {
    try {
      return std::stoi(env);
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_config, std::string("BMUI_PORT is not a number: ") + env);
    }
  }
  return 8080;
}

// ---- synth ----------------------------------------------------------------------

struct SynthArgs {
  synth::SynthConfig cfg;
  fs::path out;
};

void add_synth(CLI::App& app, SynthArgs& a, std::function<void()>& run) {
  auto* sub = app.add_subcommand("synth", "Generate a seeded synthetic session directory");
  sub->add_option("--out", a.out, "Output session directory")->required();
  sub->add_option("--seed", a.cfg.seed, "Random seed")->capture_default_str();
  sub->add_option("--trials", a.cfg.n_trials, "Number of movement trials")->capture_default_str();
  sub->add_option("--trial-s", a.cfg.trial_duration_s, "Trial duration (s)")->capture_default_str();
  sub->add_option("--rest-s", a.cfg.rest_duration_s, "Rest between trials (s)")->capture_default_str();
  sub->add_option("--eeg-ch", a.cfg.n_eeg_ch, "EEG channels")->capture_default_str();
  sub->add_option("--emg-ch", a.cfg.n_emg_ch, "EMG channels (6 or 12 for default gains)")->capture_default_str();
  sub->add_option("--delay-ms", a.cfg.delay_ms, "Neuromuscular delay (ms)")->capture_default_str();
  sub->add_option("--eeg-snr-db", a.cfg.eeg_snr_db, "EEG beta modulation SNR (dB)")->capture_default_str();
  sub->add_option("--emg-snr-db", a.cfg.emg_snr_db, "EMG SNR (dB)")->capture_default_str();
  sub->add_option("--subject", a.cfg.subject_id, "Subject id")->capture_default_str();
  sub->callback([&] {
    run = [&] {
      const auto res = synth::synthesize_session(a.cfg);
      session::save_session(res.session, a.out, &res.truth);
      std::printf("wrote %s: %zu trials, %.1f s of EEG at %.0f Hz\n", a.out.c_str(),
                  res.session.movement_labels.size(),
                  static_cast<double>(res.session.eeg.n_samples()) / res.session.eeg.rate_hz(),
                  res.session.eeg.rate_hz());
    };
  });
}

// ---- preprocess -----------------------------------------------------------------

struct PreprocessArgs {
  fs::path in, out;
};

void add_preprocess(CLI::App& app, PreprocessArgs& a, std::function<void()>& run) {
  auto* sub = app.add_subcommand("preprocess", "Align, filter and envelope a raw session");
  sub->add_option("--in", a.in, "Raw session directory")->required();
  sub->add_option("--out", a.out, "Preprocessed session directory")->required();
  sub->callback([&] {
    run = [&] {
      const auto raw = session::load_session(a.in);
      if (session::load_stage(a.in) == "preprocessed") {
        throw Error(ErrorCode::invalid_argument, a.in.string() + " is already preprocessed");
      }
      const auto pre = session::preprocess_aligned(align(raw));
      const auto truth = session::load_ground_truth(a.in);
      session::save_session(as_raw(pre, raw.subject_id), a.out, truth ? &*truth : nullptr, "preprocessed");
      std::printf("wrote %s: %zu samples at %.0f Hz\n", a.out.c_str(), pre.n_samples(), kAlignedRateHz);
    };
  });
}

// ---- train ----------------------------------------------------------------------

struct TrainArgs {
  fs::path data, out, report;
  session::WindowConfig windowing;
  neural::TrainConfig cfg;
  neural::RegressorConfig model;
  std::optional<std::uint64_t> shuffle_seed;
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& run) {
  auto* sub = app.add_subcommand("train", "Train the EEG-to-EMG envelope regressor");
  sub->add_option("--data", a.data, "Session directory (raw or preprocessed)")->required();
  sub->add_option("--out", a.out, "Model file")->required();
  sub->add_option("--report", a.report, "Write the test-split EvalReport here");
  sub->add_option("--window-ms", a.windowing.window_ms, "Window length (ms)")->capture_default_str();
  sub->add_option("--stride-ms", a.windowing.stride_ms, "Window stride (ms)")->capture_default_str();
  sub->add_option("--epochs", a.cfg.epochs, "Maximum epochs")->capture_default_str();
  sub->add_option("--patience", a.cfg.patience, "Early-stopping patience (epochs)")->capture_default_str();
  sub->add_option("--batch", a.cfg.batch_size, "Batch size")->capture_default_str();
  sub->add_option("--lr", a.cfg.adam.lr, "Adam learning rate")->capture_default_str();
  sub->add_option("--seed", a.cfg.seed, "Seed for init, split and batching")->capture_default_str();
  sub->add_option("--d-model", a.model.d_model, "Model width")->capture_default_str();
  sub->add_option("--heads", a.model.n_heads, "Attention heads")->capture_default_str();
  sub->add_option("--layers", a.model.n_layers, "Encoder layers")->capture_default_str();
  sub->add_option("--patch", a.model.patch, "Samples per token")->capture_default_str();
  sub->add_option("--shuffle-targets", a.shuffle_seed, "Permute targets across windows (negative control)");
  sub->callback([&] {
    run = [&] {
      const auto prep = workflow::load_prepared(a.data);
      a.model.n_in = prep.signals.eeg.n_channels();
      a.model.n_out = prep.signals.emg.n_channels();
      a.model.window = a.windowing.window_samples();
      std::printf("%zu trials, %zu EEG -> %zu EMG channels, isa %s\n", prep.trials.size(), a.model.n_in,
                  a.model.n_out, std::string(to_string(kernels::active().isa)).c_str());
      const auto t0 = std::chrono::steady_clock::now();
      const auto result = workflow::train_regressor_on(prep, a.model, a.cfg, a.windowing, a.shuffle_seed, print_epoch);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      neural::save_regressor(result.fit.model, a.out, result.meta);
      if (!a.report.empty()) metrics::save_report(result.test_report, a.report);
      std::printf("best epoch %d, %.1f s\n%s", result.fit.history.best_epoch, secs,
                  metrics::render_table(result.test_report).c_str());
      std::printf("wrote %s\n", a.out.c_str());
    };
  });
}

// ---- train-cls ------------------------------------------------------------------

struct TrainClsArgs {
  fs::path regressor, data, out, calibration;
  neural::TrainConfig cfg;
  neural::ClassifierConfig model;
};

void add_train_cls(CLI::App& app, TrainClsArgs& a, std::function<void()>& run) {
  a.cfg.adam.lr = 3e-3;
  auto* sub = app.add_subcommand("train-cls", "Train the direction classifier on regressor output and calibrate");
  sub->add_option("--regressor", a.regressor, "Trained regressor model")->required();
  sub->add_option("--data", a.data, "Session directory (use one the regressor did not train on)")->required();
  sub->add_option("--out", a.out, "Classifier model file")->required();
  sub->add_option("--calibration", a.calibration, "Calibration file to write")->required();
  sub->add_option("--epochs", a.cfg.epochs, "Maximum epochs")->capture_default_str();
  sub->add_option("--patience", a.cfg.patience, "Early-stopping patience (epochs)")->capture_default_str();
  sub->add_option("--lr", a.cfg.adam.lr, "Adam learning rate")->capture_default_str();
  sub->add_option("--seed", a.cfg.seed, "Seed")->capture_default_str();
  sub->add_option("--filters", a.model.n_filters, "Convolution filters")->capture_default_str();
  sub->callback([&] {
    run = [&] {
      neural::ModelMeta meta;
      const auto reg = neural::load_regressor(a.regressor, &meta);
      std::vector<double> scc;
      if (auto it = meta.find("val_scc"); it != meta.end()) scc = workflow::parse_numbers(it->second);
      if (scc.size() != reg.config().n_out) {
        throw Error(ErrorCode::corrupt_model, "regressor metadata lacks per-channel val_scc");
      }
      const auto prep = workflow::load_prepared(a.data);
      a.model.n_in = reg.config().n_out;
      a.model.seq_len = control::kHistorySteps;
      const auto res = workflow::train_classifier_on(reg, workflow::online_eeg(a.data), prep.intervals, scc,
                                                     a.model, a.cfg, print_epoch);
      neural::ModelMeta cmeta{{"seed", std::to_string(a.cfg.seed)},
                              {"sequences", std::to_string(res.n_sequences)},
                              {"test_accuracy", std::to_string(res.fit.test_accuracy)},
                              {"regressor", a.regressor.string()}};
      neural::save_classifier(res.fit.model, a.out, cmeta);
      const auto& names = prep.signals.emg.channel_names();
      workflow::save_calibration(res.calibration, a.calibration,
                                 res.calibration.channel_index < names.size() ? names[res.calibration.channel_index]
                                                                               : std::string());
      std::printf("test accuracy %.3f on %zu sequences\n", res.fit.test_accuracy, res.n_sequences);
      std::printf("calibration: channel %zu, env_min %.4f, env_max %.4f\n", res.calibration.channel_index,
                  res.calibration.env_min, res.calibration.env_max);
      std::printf("wrote %s and %s\n", a.out.c_str(), a.calibration.c_str());
    };
  });
}

// ---- eval -----------------------------------------------------------------------

struct EvalArgs {
  fs::path model, data, report;
  std::string split = "auto";
};

void add_eval(CLI::App& app, EvalArgs& a, std::function<void()>& run) {
  auto* sub = app.add_subcommand("eval", "Evaluate a regressor: per-channel SCC and trial t-test");
  sub->add_option("--model", a.model, "Regressor model")->required();
  sub->add_option("--data", a.data, "Session directory")->required();
  sub->add_option("--report", a.report, "EvalReport file to write")->required();
  sub->add_option("--split", a.split, "test: stored test trials; all: every trial; auto: test when it fits")
      ->check(CLI::IsMember({"auto", "test", "all"}))
      ->capture_default_str();
  sub->callback([&] {
    run = [&] {
      neural::ModelMeta meta;
      const auto model = neural::load_regressor(a.model, &meta);
      const auto prep = workflow::load_prepared(a.data);
      session::WindowConfig windowing;
      if (auto it = meta.find("window_ms"); it != meta.end()) windowing.window_ms = std::stod(it->second);
      if (auto it = meta.find("stride_ms"); it != meta.end()) windowing.stride_ms = std::stod(it->second);
      const auto windows = session::make_windows(prep.trials, windowing);
      std::vector<std::size_t> trials(prep.trials.size());
      std::iota(trials.begin(), trials.end(), std::size_t{0});
      const bool same_session =
          meta.count("test_trials") && meta.count("n_trials") && meta.at("n_trials") == std::to_string(trials.size());
      if (a.split == "test" && !same_session) {
        throw Error(ErrorCode::invalid_argument, "model metadata has no test split for this session");
      }
      if (a.split == "test" || (a.split == "auto" && same_session)) {
        trials = workflow::parse_indices(meta.at("test_trials"));
      }
      const auto report = workflow::evaluate(model, windows, trials, prep.signals.emg.channel_names());
      metrics::save_report(report, a.report);
      std::printf("%s", metrics::render_table(report).c_str());
    };
  });
}

// ---- gradcheck ------------------------------------------------------------------

struct GradArgs {
  std::string model = "both";
  int seeds = 5;
  std::uint64_t first_seed = 1;
  int* exit_code = nullptr;
};

void add_gradcheck(CLI::App& app, GradArgs& a, std::function<void()>& run) {
  auto* sub = app.add_subcommand("gradcheck", "Finite-difference gradient check; exit 0 iff error <= 1e-4");
  sub->add_option("--model", a.model, "regressor, classifier or both")
      ->check(CLI::IsMember({"regressor", "classifier", "both"}))
      ->capture_default_str();
  sub->add_option("--seeds", a.seeds, "Seeds per model")->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--first-seed", a.first_seed, "First seed")->capture_default_str();
  sub->callback([&] {
    run = [&] {
      double worst = 0.0;
      for (auto kind : {neural::ModelKind::regressor, neural::ModelKind::classifier}) {
        const char* name = kind == neural::ModelKind::regressor ? "regressor" : "classifier";
        if (a.model != "both" && a.model != name) continue;
        for (int k = 0; k < a.seeds; ++k) {
          const auto seed = a.first_seed + static_cast<std::uint64_t>(k);
          const auto r = neural::grad_check(kind, seed);
          std::printf("%-10s seed %-4llu max_relative_error %.3e  worst %s[%zu]  checked %zu\n", name,
                      static_cast<unsigned long long>(seed), r.max_relative_error, r.worst_param.c_str(),
                      r.worst_index, r.n_checked);
          worst = std::max(worst, r.max_relative_error);
        }
      }
      const bool ok = worst <= 1e-4;
      std::printf("max_relative_error %.3e (%s)\n", worst, ok ? "pass" : "FAIL");
      *a.exit_code = ok ? 0 : kExitRuntime;
    };
  });
}

// ---- serve ----------------------------------------------------------------------

struct ServeArgs {
  fs::path regressor, classifier, calibration, script, intent_script, static_dir, summary;
  rt::PipelineConfig cfg;
  std::string address = "0.0.0.0";
};

void add_serve(CLI::App& app, ServeArgs& a, std::function<void()>& run) {
  auto* sub = app.add_subcommand("serve", "Run the online decoder and serve telemetry at /ws");
  sub->add_option("--regressor", a.regressor, "Regressor model")->required();
  sub->add_option("--classifier", a.classifier, "Classifier model")->required();
  sub->add_option("--calibration", a.calibration, "Calibration file")->required();
  sub->add_option("--source", a.cfg.source, "replay:<dir> or synthetic:<seed>")->capture_default_str();
  sub->add_option("--chunk-ms", a.cfg.chunk_ms, "Chunk length (ms); must divide the model stride")
      ->capture_default_str();
  sub->add_option("--port", a.cfg.port, "Listen port (default: BMUI_PORT or 8080)");
  sub->add_option("--address", a.address, "Listen address")->capture_default_str();
  sub->add_flag("--fast", a.cfg.fast, "Run unpaced with lossless telemetry");
  sub->add_option("--chunks", a.cfg.max_chunks, "Stop after this many chunks (0: no limit)")->capture_default_str();
  sub->add_flag("--paused", a.cfg.start_paused, "Wait for a start message");
  sub->add_option("--script", a.script, "Command script: <direction> <magnitude> [repeat] per line");
  sub->add_option("--intent-script", a.intent_script, "Intent script: <chunk> <direction> <level> per line");
  sub->add_option("--static", a.static_dir, "UI bundle directory served at /");
  sub->add_option("--summary", a.summary, "Write the run summary JSON here");
  sub->callback([&, sub] {
    run = [&, sub] {
      if (sub->count("--port") == 0) a.cfg.port = default_port();
      neural::ModelMeta meta;
      rt::Models models{std::make_shared<neural::Regressor>(neural::load_regressor(a.regressor, &meta)),
                        std::make_shared<neural::Classifier>(neural::load_classifier(a.classifier)),
                        workflow::load_calibration(a.calibration)};
      double stride_ms = 50.0;
      if (auto it = meta.find("stride_ms"); it != meta.end()) stride_ms = std::stod(it->second);
      a.cfg.validate(stride_ms);
      if (!a.script.empty()) a.cfg.command_script = rt::load_command_script(a.script);
      if (!a.intent_script.empty()) a.cfg.intent_script = rt::load_intent_script(a.intent_script);

      rt::Pipeline pipeline(a.cfg, models);
      rt::Server server(pipeline, {a.address, a.cfg.port, a.static_dir});
      const int port = server.start();
      std::printf("serving %s on http://%s:%d/ (websocket /ws), source %s%s\n", std::string(rt::kProtocol).c_str(),
                  a.address.c_str(), port, a.cfg.source.c_str(), a.cfg.fast ? ", fast" : "");
      std::fflush(stdout);

      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      pipeline.start();
      std::atomic<bool> finished{false};
      rt::RunSummary summary;
      std::thread waiter([&] {
        summary = pipeline.wait();
        finished = true;
      });
      while (!finished) {
        if (g_interrupted.exchange(false)) pipeline.request_stop();
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
      waiter.join();
      const std::string text = rt::summary_json(summary);
      server.broadcast(text);
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      std::printf("%s\n", text.c_str());
      if (!a.summary.empty()) {
        std::ofstream out(a.summary);
        out << text << '\n';
        if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + a.summary.string());
      }
    };
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bmui: EEG-to-EMG decoding, evaluation and the online arm server"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  int exit_code = 0;
  std::function<void()> run;

  SynthArgs synth_args;
  PreprocessArgs pre_args;
  TrainArgs train_args;
  TrainClsArgs cls_args;
  EvalArgs eval_args;
  GradArgs grad_args;
  grad_args.exit_code = &exit_code;
  ServeArgs serve_args;
  add_synth(app, synth_args, run);
  add_preprocess(app, pre_args, run);
  add_train(app, train_args, run);
  add_train_cls(app, cls_args, run);
  add_eval(app, eval_args, run);
  add_gradcheck(app, grad_args, run);
  add_serve(app, serve_args, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  try {
    if (run) run();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return exit_code;
}
