#include "bmui/neural/model_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "bmui/error.hpp"

namespace bmui::neural {
namespace fs = std::filesystem;

namespace {

void put(std::string& out, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  (void)ec;
  out.append(buf, end);
}

void put_vector(std::string& out, std::string_view key, const std::vector<double>& v) {
  out += "stats ";
  out += key;
  out += ' ' + std::to_string(v.size());
  for (double x : v) {
    out += ' ';
    put(out, x);
  }
  out += '\n';
}

void put_params(std::string& out, const ParamSet& params) {
  for (std::size_t i = 0; i < params.count(); ++i) {
    const Tensor& t = params.at(i);
    out += "param " + params.name(i) + ' ' + std::to_string(t.shape.size());
    for (std::size_t d : t.shape) out += ' ' + std::to_string(d);
    out += '\n';
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (k) out += ' ';
      put(out, t.values[k]);
    }
    out += '\n';
  }
}

std::string header(std::string_view kind, const ModelMeta& meta) {
  std::string out(kModelFormat);
  out += "\nkind ";
  out += kind;
  out += '\n';
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw Error(ErrorCode::invalid_argument, "metadata key/value not storable: " + k);
    }
    out += "meta " + k + ' ' + v + '\n';
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
}

// Line-oriented reader that reports every structural problem as corrupt_model.
class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    std::string line;
    while (std::getline(ss, line)) lines_.push_back(line);
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw Error(ErrorCode::corrupt_model, path_.filename().string() + " line " + std::to_string(pos_) + ": " + why);
  }
  bool done() const { return pos_ >= lines_.size(); }
  const std::string& peek() const {
    if (done()) fail("unexpected end of file");
    return lines_[pos_];
  }
  std::string next() {
    const std::string& l = peek();
    ++pos_;
    return l;
  }
  static std::vector<std::string> words(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
  }
  double number(std::string_view s) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
    return v;
  }
  std::size_t count(std::string_view s) const {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) fail("bad count '" + std::string(s) + "'");
    return v;
  }

  // Header lines up to the first stats/param line.
  void read_header(std::string_view kind, std::map<std::string, std::string>& hyper, ModelMeta& meta) {
    if (done() || next() != kModelFormat) fail("missing '" + std::string(kModelFormat) + "' header");
    const auto k = words(next());
    if (k.size() != 2 || k[0] != "kind" || k[1] != kind) fail("expected kind " + std::string(kind));
    while (!done()) {
      const auto w = words(peek());
      if (w.empty()) fail("blank line");
      if (w[0] == "hyper" && w.size() == 3) {
        hyper[w[1]] = w[2];
      } else if (w[0] == "meta" && w.size() >= 2) {
        const std::string& l = peek();
        const auto at = l.find(w[1], 5) + w[1].size();
        meta[w[1]] = at < l.size() ? l.substr(at + 1) : "";
      } else {
        break;
      }
      ++pos_;
    }
  }

  std::vector<double> read_stats(std::string_view key) {
    const auto w = words(next());
    if (w.size() < 3 || w[0] != "stats" || w[1] != key) fail("expected stats " + std::string(key));
    const std::size_t n = count(w[2]);
    if (w.size() != 3 + n) fail("stats " + std::string(key) + " has wrong length");
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(number(w[3 + i]));
    return v;
  }

  void read_params(ParamSet& params) {
    for (std::size_t i = 0; i < params.count(); ++i) {
      Tensor& t = params.at(i);
      const auto w = words(next());
      if (w.size() < 3 || w[0] != "param" || w[1] != params.name(i)) {
        fail("expected param " + params.name(i));
      }
      const std::size_t nd = count(w[2]);
      if (w.size() != 3 + nd) fail("bad shape for " + params.name(i));
      std::vector<std::size_t> shape;
      for (std::size_t d = 0; d < nd; ++d) shape.push_back(count(w[3 + d]));
      if (shape != t.shape) fail("shape of " + params.name(i) + " does not match the hyperparameters");
      const auto vals = words(next());
      if (vals.size() != t.size()) fail("value count of " + params.name(i) + " does not match its shape");
      for (std::size_t k = 0; k < vals.size(); ++k) t.values[k] = number(vals[k]);
    }
    if (done() || next() != "end") fail("missing end marker (truncated file?)");
    if (!done()) fail("trailing content after end marker");
    params.check_finite("load");
  }

  std::size_t hyper_count(const std::map<std::string, std::string>& h, const std::string& key) const {
    const auto it = h.find(key);
    if (it == h.end()) fail("missing hyperparameter " + key);
    return count(it->second);
  }

 private:
  fs::path path_;
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

Standardizer read_standardizer(Reader& r, std::string_view prefix, std::size_t n) {
  Standardizer s;
  s.mean = r.read_stats(std::string(prefix) + "_mean");
  s.stddev = r.read_stats(std::string(prefix) + "_std");
  if (s.mean.size() != n || s.stddev.size() != n) r.fail(std::string(prefix) + " statistics have wrong size");
  for (double v : s.stddev) {
    if (!(v > 0.0)) r.fail(std::string(prefix) + " std must be positive");
  }
  return s;
}

}  // namespace

void save_regressor(const Regressor& model, const fs::path& path, const ModelMeta& meta) {
  const auto& c = model.config();
  std::string out = header("regressor", meta);
  const std::pair<const char*, std::size_t> hyper[] = {
      {"n_in", c.n_in},       {"n_out", c.n_out},     {"window", c.window},     {"patch", c.patch},
      {"d_model", c.d_model}, {"n_heads", c.n_heads}, {"n_layers", c.n_layers}, {"ff_mult", c.ff_mult}};
  for (const auto& [k, v] : hyper) out += std::string("hyper ") + k + ' ' + std::to_string(v) + '\n';
  put_vector(out, "input_mean", model.input_norm.mean);
  put_vector(out, "input_std", model.input_norm.stddev);
  put_vector(out, "target_mean", model.target_norm.mean);
  put_vector(out, "target_std", model.target_norm.stddev);
  put_params(out, model.params());
  out += "end\n";
  write_text(path, out);
}

Regressor load_regressor(const fs::path& path, ModelMeta* meta) {
  Reader r(path);
  std::map<std::string, std::string> hyper;
  ModelMeta m;
  r.read_header("regressor", hyper, m);
  RegressorConfig c;
  c.n_in = r.hyper_count(hyper, "n_in");
  c.n_out = r.hyper_count(hyper, "n_out");
  c.window = r.hyper_count(hyper, "window");
  c.patch = r.hyper_count(hyper, "patch");
  c.d_model = r.hyper_count(hyper, "d_model");
  c.n_heads = r.hyper_count(hyper, "n_heads");
  c.n_layers = r.hyper_count(hyper, "n_layers");
  c.ff_mult = r.hyper_count(hyper, "ff_mult");
  Regressor model;
  try {
    model = Regressor(c, 0);
  } catch (const Error& e) {
    r.fail(std::string("invalid hyperparameters: ") + e.what());
  }
  model.input_norm = read_standardizer(r, "input", c.n_in);
  model.target_norm = read_standardizer(r, "target", c.n_out);
  r.read_params(model.params());
  if (meta) *meta = std::move(m);
  return model;
}

void save_classifier(const Classifier& model, const fs::path& path, const ModelMeta& meta) {
  const auto& c = model.config();
  std::string out = header("classifier", meta);
  const std::pair<const char*, std::size_t> hyper[] = {
      {"n_in", c.n_in}, {"seq_len", c.seq_len}, {"n_filters", c.n_filters}, {"kernel", c.kernel}};
  for (const auto& [k, v] : hyper) out += std::string("hyper ") + k + ' ' + std::to_string(v) + '\n';
  put_vector(out, "input_mean", model.input_norm.mean);
  put_vector(out, "input_std", model.input_norm.stddev);
  put_params(out, model.params());
  out += "end\n";
  write_text(path, out);
}

Classifier load_classifier(const fs::path& path, ModelMeta* meta) {
  Reader r(path);
  std::map<std::string, std::string> hyper;
  ModelMeta m;
  r.read_header("classifier", hyper, m);
  ClassifierConfig c;
  c.n_in = r.hyper_count(hyper, "n_in");
  c.seq_len = r.hyper_count(hyper, "seq_len");
  c.n_filters = r.hyper_count(hyper, "n_filters");
  c.kernel = r.hyper_count(hyper, "kernel");
  Classifier model;
  try {
    model = Classifier(c, 0);
  } catch (const Error& e) {
    r.fail(std::string("invalid hyperparameters: ") + e.what());
  }
  model.input_norm = read_standardizer(r, "input", c.n_in);
  r.read_params(model.params());
  if (meta) *meta = std::move(m);
  return model;
}

std::string model_kind(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
  std::string format, kind_line;
  std::getline(in, format);
  std::getline(in, kind_line);
  if (format != kModelFormat) throw Error(ErrorCode::corrupt_model, "not a " + std::string(kModelFormat) + " file");
  const auto w = Reader::words(kind_line);
  if (w.size() != 2 || w[0] != "kind" || (w[1] != "regressor" && w[1] != "classifier")) {
    throw Error(ErrorCode::corrupt_model, "unknown model kind");
  }
  return w[1];
}

}  // namespace bmui::neural
