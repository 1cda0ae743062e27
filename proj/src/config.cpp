#include "lrnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace lrnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  fail(ErrorKind::config, "invalid value '" + value + "' for '" + key + "' (expected " + expected + ")");
}

template <class Int>
Int parse_int(const std::string& key, const std::string& value) {
  Int v{};
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || p != end) bad_value(key, value, "an integer");
  return v;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "a number");
  }
  if (used != value.size() || !std::isfinite(v)) bad_value(key, value, "a finite number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::string show(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }
template <class Int>
  requires std::is_integral_v<Int>
std::string show(Int v) {
  return std::to_string(v);
}
std::string show(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

void assign(const std::string& key, const std::string& text, double& v) { v = parse_double(key, text); }
void assign(const std::string& key, const std::string& text, bool& v) { v = parse_bool(key, text); }
void assign(const std::string&, const std::string& text, std::string& v) { v = text; }
template <class Int>
  requires std::is_integral_v<Int>
void assign(const std::string& key, const std::string& text, Int& v) {
  v = parse_int<Int>(key, text);
}
void assign(const std::string& key, const std::string& text, std::vector<int>& v) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int<int>(key, trim(item)));
  if (out.empty()) bad_value(key, text, "a comma-separated list of integers");
  v = std::move(out);
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Ref>
Field field(std::string key, Ref ref) {
  return {key, [ref](const RunConfig& c) { return show(ref(const_cast<RunConfig&>(c))); },
          [ref, key](RunConfig& c, const std::string& text) { assign(key, text, ref(c)); }};
}

#define LRNET_FIELD(key, member) field(key, [](RunConfig& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      LRNET_FIELD("dataset", dataset),
      LRNET_FIELD("weights", weights),
      LRNET_FIELD("output", output),
      LRNET_FIELD("input", input),
      LRNET_FIELD("pred", pred),
      LRNET_FIELD("gt", gt),
      LRNET_FIELD("split", split),
      LRNET_FIELD("seed", seed),
      LRNET_FIELD("threads", threads),
      LRNET_FIELD("tau", tau),
      LRNET_FIELD("resume", resume),
      LRNET_FIELD("model.window", model.window),
      LRNET_FIELD("model.channel_mult", model.channel_multiplier),
      LRNET_FIELD("model.stage_channels", model.stage_channels),
      LRNET_FIELD("model.lfea", model.use_lfea),
      LRNET_FIELD("model.lfd", model.use_lfd),
      LRNET_FIELD("model.rft", model.use_rft),
      LRNET_FIELD("model.sbam", model.use_sbam),
      LRNET_FIELD("model.eca_k", model.eca_k),
      LRNET_FIELD("train.epochs", train.epochs),
      LRNET_FIELD("train.batch_size", train.batch_size),
      LRNET_FIELD("train.lr", train.lr),
      LRNET_FIELD("train.val_fraction", train.val_fraction),
      LRNET_FIELD("train.hflip", train.augment.hflip),
      LRNET_FIELD("train.vflip", train.augment.vflip),
      LRNET_FIELD("train.rotate", train.augment.rotate),
      LRNET_FIELD("train.contrast", train.augment.contrast),
      LRNET_FIELD("synth.count", synth.count),
      LRNET_FIELD("synth.min_extent", synth.min_extent),
      LRNET_FIELD("synth.max_extent", synth.max_extent),
      LRNET_FIELD("synth.min_targets", synth.min_targets),
      LRNET_FIELD("synth.max_targets", synth.max_targets),
      LRNET_FIELD("synth.sigma_min", synth.sigma_min),
      LRNET_FIELD("synth.sigma_max", synth.sigma_max),
      LRNET_FIELD("synth.amp_min", synth.amp_min),
      LRNET_FIELD("synth.amp_max", synth.amp_max),
      LRNET_FIELD("synth.bg_level", synth.bg_level),
      LRNET_FIELD("synth.bg_amplitude", synth.bg_amplitude),
      LRNET_FIELD("synth.bg_scale", synth.bg_scale),
      LRNET_FIELD("synth.noise", synth.noise),
  };
  return all;
}

#undef LRNET_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  fail(ErrorKind::config, "unknown config key '" + key + "'");
}

}  // namespace

bool RunConfig::operator==(const RunConfig& other) const {
  for (const auto& f : fields()) {
    if (f.get(*this) != f.get(other)) return false;
  }
  return true;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  find_field(key).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& key) { return find_field(key).get(config); }

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    require(eq != std::string::npos, ErrorKind::config, where + "expected 'key = value'");
    try {
      set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      fail(ErrorKind::config, where + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::config, "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str(), path);
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

void apply_ablation(ModelConfig& model, const std::string& name) {
  if (name == "no-lfea") {
    model.use_lfea = false;
  } else if (name == "no-lfd") {
    model.use_lfd = false;
  } else if (name == "no-rft") {
    model.use_rft = false;
  } else if (name == "no-sbam") {
    model.use_sbam = false;
  } else {
    fail(ErrorKind::config, "unknown ablation '" + name + "' (expected no-lfea, no-lfd, no-rft or no-sbam)");
  }
}

void finalize_config(RunConfig& config) {
  config.model.validate();
  config.train.crop = static_cast<std::size_t>(config.model.window);
  config.train.seed = config.seed;
  config.synth.seed = config.seed;
  config.train.validate(config.model);
  config.synth.validate();
  require(config.threads >= 1, ErrorKind::config, "threads must be at least 1");
  require(config.tau >= 0 && config.tau <= 1, ErrorKind::config, "tau must lie in [0, 1]");
}

}  // namespace lrnet
