#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>
#include <sys/wait.h>

#include "bmui/metrics.hpp"
#include "bmui/workflow.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run_cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + BMUI_CLI_PATH + std::string(" ") + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), p)) r.out += buf.data();
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch() {
  const auto dir = fs::temp_directory_path() / ("bmui_cli_" + std::to_string(getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("help and usage errors") {
  const auto top = run_cli("--help");
  CHECK(top.code == 0);
  for (const char* sub : {"synth", "preprocess", "train", "train-cls", "eval", "gradcheck", "serve"}) {
    CHECK_MESSAGE(top.out.find(sub) != std::string::npos, sub);
    const auto h = run_cli(std::string(sub) + " --help");
    CHECK_MESSAGE(h.code == 0, sub);
    CHECK(h.out.find("Usage") != std::string::npos);
  }
  const auto unknown = run_cli("gradcheck --bogus");
  CHECK(unknown.code == 1);
  CHECK(unknown.out.find("Usage") != std::string::npos);
  CHECK(run_cli("").code == 1);
  CHECK(run_cli("frobnicate").code == 1);
  CHECK(run_cli("gradcheck --model nothing").code == 1);
}

TEST_CASE("gradcheck exit status") {
  const auto r = run_cli("gradcheck --seeds 1");
  CHECK(r.code == 0);
  CHECK(r.out.find("pass") != std::string::npos);
}

TEST_CASE("offline flow: synth, preprocess, train, eval, train-cls, serve") {
  const auto dir = scratch();
  const std::string d = dir.string();
  REQUIRE(run_cli("synth --out " + d + "/s --seed 3 --trials 8").code == 0);
  REQUIRE(run_cli("synth --out " + d + "/c --seed 4 --trials 30").code == 0);
  REQUIRE(run_cli("preprocess --in " + d + "/s --out " + d + "/p").code == 0);
  CHECK(run_cli("preprocess --in " + d + "/p --out " + d + "/pp").code == 2);

  const std::string tiny = " --epochs 8 --lr 3e-3 --d-model 16 --heads 2 --layers 1";
  const auto tr = run_cli("train --data " + d + "/p --out " + d + "/reg.model" + tiny);
  REQUIRE_MESSAGE(tr.code == 0, tr.out);
  CHECK(tr.out.find("epoch   1") != std::string::npos);

  const auto ev = run_cli("eval --model " + d + "/reg.model --data " + d + "/s --report " + d + "/ev.json");
  REQUIRE_MESSAGE(ev.code == 0, ev.out);
  const auto report = bmui::metrics::load_report(dir / "ev.json");
  std::smatch m;
  REQUIRE(std::regex_search(ev.out, m, std::regex(R"(best_channel_scc\s+(-?[0-9.]+))")));
  CHECK(std::stod(m[1]) == doctest::Approx(report.best_channel_scc).epsilon(1e-5));
  CHECK(report.n_trials <= 2);  // the stored test split of 8 trials
  CHECK(run_cli("eval --split all --model " + d + "/reg.model --data " + d + "/s --report " + d + "/all.json").code ==
        0);
  CHECK(bmui::metrics::load_report(dir / "all.json").n_trials == 8);
  CHECK(run_cli("eval --split test --model " + d + "/reg.model --data " + d + "/c --report " + d + "/x.json").code ==
        2);

  const auto cls = run_cli("train-cls --regressor " + d + "/reg.model --data " + d + "/c --out " + d +
                        "/cls.model --calibration " + d + "/cal.json --epochs 2");
  REQUIRE_MESSAGE(cls.code == 0, cls.out);
  CHECK_NOTHROW(bmui::workflow::load_calibration(dir / "cal.json"));

  const std::string models = " --regressor " + d + "/reg.model --classifier " + d + "/cls.model --calibration " + d +
                             "/cal.json";
  const int port = 20000 + static_cast<int>(getpid() % 20000);
  const auto sv = run_cli("serve" + models + " --fast --chunks 30 --port " + std::to_string(port) + " --summary " + d +
                       "/sum.json");
  REQUIRE_MESSAGE(sv.code == 0, sv.out);
  CHECK(sv.out.find("\"frames\":30") != std::string::npos);
  CHECK(fs::exists(dir / "sum.json"));
  CHECK(run_cli("serve" + models + " --fast --chunks 1", "BMUI_PORT=80").code == 2);
  CHECK(run_cli("serve" + models + " --fast --chunks 1 --chunk-ms 30 --port " + std::to_string(port)).code == 2);
  CHECK(run_cli("serve" + models + " --fast --chunks 1 --source tape:1 --port " + std::to_string(port)).code == 2);
  CHECK(run_cli("serve --regressor " + d + "/cls.model --classifier " + d + "/cls.model --calibration " + d +
             "/cal.json --fast --chunks 1 --port " + std::to_string(port))
            .code == 2);
  fs::remove_all(dir);
}
