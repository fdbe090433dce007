#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include "bmui/error.hpp"
#include "bmui/session.hpp"
#include "json.hpp"

namespace bmui::session {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSignificantDigits = 9;

void append_value(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general,
                                 kSignificantDigits);
  if (ec != std::errc()) throw Error(ErrorCode::invalid_argument, "value not representable");
  out.append(buf, end);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::invalid_argument, "write failed for " + path.string());
}

void check_name(const std::string& name) {
  if (name.empty() || name.find_first_of(",\n\r\"") != std::string::npos) {
    throw Error(ErrorCode::invalid_argument, "channel name '" + name + "' is not CSV-safe");
  }
}

// Column-per-channel CSV, header row of names.
std::string to_csv(const std::vector<std::string>& names, const Matrix& data) {
  std::string out;
  out.reserve(data.size() * 14 + 64);
  for (std::size_t c = 0; c < names.size(); ++c) {
    check_name(names[c]);
    if (c) out += ',';
    out += names[c];
  }
  out += '\n';
  for (std::size_t t = 0; t < data.cols(); ++t) {
    for (std::size_t c = 0; c < data.rows(); ++c) {
      if (c) out += ',';
      append_value(out, data(c, t));
    }
    out += '\n';
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(',', pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

Table parse_csv(const std::string& text, const fs::path& path) {
  auto corrupt = [&](const std::string& why) {
    return Error(ErrorCode::corrupt_session, path.filename().string() + ": " + why);
  };
  Table table;
  std::string_view rest(text);
  bool first = true;
  std::size_t line_no = 0;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (line.empty()) {
      if (rest.empty()) break;
      throw corrupt("empty line " + std::to_string(line_no));
    }
    const auto fields = split_commas(line);
    if (first) {
      for (auto f : fields) table.header.emplace_back(f);
      table.columns.resize(fields.size());
      first = false;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw corrupt("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                    " columns, header has " + std::to_string(table.header.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(fields[c].data(), fields[c].data() + fields[c].size(), v);
      if (ec != std::errc() || ptr != fields[c].data() + fields[c].size()) {
        throw corrupt("unparsable value on line " + std::to_string(line_no));
      }
      table.columns[c].push_back(v);
    }
  }
  if (first) throw corrupt("missing header");
  return table;
}

json modality_json(std::string_view name, const MultiChannelSignal& sig, std::string_view units) {
  return json{{"name", name},
              {"rate_hz", sig.rate_hz()},
              {"channel_names", sig.channel_names()},
              {"units", units},
              {"file", std::string(name) + ".csv"}};
}

MultiChannelSignal load_modality(const fs::path& dir, const json& desc) {
  const auto file = desc.at("file").get<std::string>();
  const auto names = desc.at("channel_names").get<std::vector<std::string>>();
  const double rate = desc.at("rate_hz").get<double>();
  const auto path = dir / file;
  if (!fs::exists(path)) throw Error(ErrorCode::not_found, "missing data file " + path.string());
  Table table = parse_csv(read_file(path), path);
  if (table.header.size() != names.size()) {
    throw Error(ErrorCode::corrupt_session,
                file + ": manifest declares " + std::to_string(names.size()) + " channels, file has " +
                    std::to_string(table.header.size()) + " columns");
  }
  if (table.header != names) {
    throw Error(ErrorCode::corrupt_session, file + ": channel names differ from manifest");
  }
  const std::size_t n = table.columns.empty() ? 0 : table.columns.front().size();
  if (n == 0) throw Error(ErrorCode::corrupt_session, file + ": no samples");
  Matrix data(names.size(), n);
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::copy(table.columns[c].begin(), table.columns[c].end(), data.row(c).begin());
  }
  try {
    return MultiChannelSignal(rate, names, std::move(data));
  } catch (const Error& e) {
    throw Error(ErrorCode::corrupt_session, file + ": " + e.what());
  }
}

json read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  if (!fs::exists(path)) throw Error(ErrorCode::not_found, "no manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_session, std::string("manifest: ") + e.what());
  }
  const auto version = manifest.value("format_version", std::string{});
  if (version != kFormatVersion) {
    throw Error(ErrorCode::unsupported_version, "format_version '" + version + "'");
  }
  return manifest;
}

}  // namespace

double round_trip_value(double v) {
  std::string s;
  append_value(s, v);
  double out = 0.0;
  std::from_chars(s.data(), s.data() + s.size(), out);
  return out;
}

void save_session(const RawSession& session, const fs::path& dir, const GroundTruth* truth,
                  std::string_view stage) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::invalid_argument, "cannot create " + dir.string());

  json labels = json::array();
  for (const auto& l : session.movement_labels) {
    labels.push_back({{"trial_index", l.trial_index}, {"label", l.label}});
  }
  json manifest{{"format_version", kFormatVersion},
                {"subject_id", session.subject_id},
                {"stage", stage},
                {"modalities",
                 json::array({modality_json("eeg", session.eeg, "uV"),
                              modality_json("emg", session.emg, "uV"),
                              modality_json("force", session.force, "N")})},
                {"movement_labels", labels}};

  write_file(dir / "eeg.csv", to_csv(session.eeg.channel_names(), session.eeg.data()));
  write_file(dir / "emg.csv", to_csv(session.emg.channel_names(), session.emg.data()));
  write_file(dir / "force.csv", to_csv(session.force.channel_names(), session.force.data()));

  if (truth != nullptr) {
    if (truth->u_flex.size() != truth->u_extend.size()) {
      throw Error(ErrorCode::invalid_argument, "ground-truth traces differ in length");
    }
    std::string text = "t,u_flex,u_extend\n";
    for (std::size_t i = 0; i < truth->u_flex.size(); ++i) {
      append_value(text, static_cast<double>(i) / truth->rate_hz);
      text += ',';
      append_value(text, truth->u_flex[i]);
      text += ',';
      append_value(text, truth->u_extend[i]);
      text += '\n';
    }
    write_file(dir / "groundtruth.csv", text);
    manifest["groundtruth"] = "groundtruth.csv";
  } else {
    fs::remove(dir / "groundtruth.csv", ec);
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

RawSession load_session(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  RawSession s;
  try {
    s.subject_id = manifest.at("subject_id").get<std::string>();
    bool have[3] = {false, false, false};
    for (const auto& m : manifest.at("modalities")) {
      const auto name = m.at("name").get<std::string>();
      if (name == "eeg") {
        s.eeg = load_modality(dir, m);
        have[0] = true;
      } else if (name == "emg") {
        s.emg = load_modality(dir, m);
        have[1] = true;
      } else if (name == "force") {
        s.force = load_modality(dir, m);
        have[2] = true;
      }
    }
    if (!(have[0] && have[1] && have[2])) {
      throw Error(ErrorCode::corrupt_session, "manifest lacks one of eeg/emg/force");
    }
    for (const auto& l : manifest.at("movement_labels")) {
      s.movement_labels.push_back({l.at("trial_index").get<int>(), l.at("label").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt_session, std::string("manifest: ") + e.what());
  }
  return s;
}

std::string load_stage(const fs::path& dir) { return read_manifest(dir).value("stage", "raw"); }

std::optional<GroundTruth> load_ground_truth(const fs::path& dir) {
  const json manifest = read_manifest(dir);
  if (!manifest.contains("groundtruth")) return std::nullopt;
  const auto path = dir / manifest["groundtruth"].get<std::string>();
  if (!fs::exists(path)) throw Error(ErrorCode::not_found, "missing " + path.string());
  Table table = parse_csv(read_file(path), path);
  if (table.header != std::vector<std::string>{"t", "u_flex", "u_extend"}) {
    throw Error(ErrorCode::corrupt_session, "groundtruth.csv: unexpected header");
  }
  GroundTruth truth;
  if (table.columns[0].size() >= 2) {
    truth.rate_hz = 1.0 / (table.columns[0][1] - table.columns[0][0]);
    truth.rate_hz = std::round(truth.rate_hz * 1e6) / 1e6;
  }
  truth.u_flex = std::move(table.columns[1]);
  truth.u_extend = std::move(table.columns[2]);
  std::vector<MovementLabel> labels;
  for (const auto& l : manifest.at("movement_labels")) {
    labels.push_back({l.at("trial_index").get<int>(), l.at("label").get<std::string>()});
  }
  truth.intervals = intervals_from_traces(truth, labels);
  return truth;
}

std::vector<ActiveInterval> intervals_from_traces(const GroundTruth& truth,
                                                  std::span<const MovementLabel> labels) {
  std::vector<ActiveInterval> out;
  const std::size_t n = std::min(truth.u_flex.size(), truth.u_extend.size());
  std::size_t t = 0;
  while (t < n) {
    if (truth.u_flex[t] > 0.0 || truth.u_extend[t] > 0.0) {
      std::size_t end = t;
      while (end < n && (truth.u_flex[end] > 0.0 || truth.u_extend[end] > 0.0)) ++end;
      ActiveInterval iv{t, end, {}};
      const std::size_t k = out.size();
      iv.trial_label = k < labels.size() ? labels[k].label : "trial_" + std::to_string(k);
      out.push_back(std::move(iv));
      t = end;
    } else {
      ++t;
    }
  }
  return out;
}

}  // namespace bmui::session
