#include "sdepth/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sdepth/errors.hpp"

namespace sdepth {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const std::string v = trim(value);
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return out;
}

const std::set<std::string>& run_keys() {
  static const std::set<std::string> k = {"data_root", "data_kind", "split",          "out",
                                          "workers",   "max_steps", "checkpoint_every", "log_every",
                                          "post_process", "single_scale"};
  return k;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (kv.contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    kv.set(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& allowed) const {
  std::string unknown;
  for (const auto& [k, v] : values_)
    if (!allowed.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string KeyValueConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

int parse_int(const std::string& key, const std::string& value) { return parse_integer<int>(key, value); }
int64_t parse_int64(const std::string& key, const std::string& value) { return parse_integer<int64_t>(key, value); }
uint64_t parse_uint64(const std::string& key, const std::string& value) {
  return parse_integer<uint64_t>(key, value);
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValueConfig& kv) {
  std::set<std::string> allowed = run_keys();
  for (const auto& k : TrainConfig::keys()) allowed.insert(k);
  allowed.insert("resolution");
  kv.reject_unknown(allowed);

  ExperimentConfig c;
  c.train = TrainConfig::from_key_values(kv);
  if (auto s = kv.get("data_root")) c.run.data_root = *s;
  if (auto s = kv.get("data_kind")) {
    if (*s != "synthetic" && *s != "kitti") throw ConfigError("data_kind must be synthetic or kitti");
    c.run.data_kind = *s;
  }
  if (auto s = kv.get("split")) c.run.split = *s;
  if (auto s = kv.get("out")) c.run.out = *s;
  if (auto s = kv.get("workers")) c.run.workers = parse_int("workers", *s);
  if (auto s = kv.get("max_steps")) c.run.max_steps = parse_int64("max_steps", *s);
  if (auto s = kv.get("checkpoint_every")) c.run.checkpoint_every = parse_int64("checkpoint_every", *s);
  if (auto s = kv.get("log_every")) c.run.log_every = parse_int("log_every", *s);
  if (auto s = kv.get("post_process")) c.eval.post_process = parse_bool("post_process", *s);
  if (auto s = kv.get("single_scale")) c.eval.single_scale = parse_bool("single_scale", *s);
  if (c.run.workers < 0) throw ConfigError("workers must be >= 0");
  c.train.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_key_values(KeyValueConfig::load(path));
}

KeyValueConfig ExperimentConfig::to_key_values() const {
  KeyValueConfig kv = train.to_key_values();
  kv.set("data_root", run.data_root.string());
  kv.set("data_kind", run.data_kind);
  kv.set("split", run.split);
  kv.set("out", run.out.string());
  kv.set("workers", std::to_string(run.workers));
  kv.set("max_steps", std::to_string(run.max_steps));
  kv.set("checkpoint_every", std::to_string(run.checkpoint_every));
  kv.set("log_every", std::to_string(run.log_every));
  kv.set("post_process", eval.post_process ? "true" : "false");
  kv.set("single_scale", eval.single_scale ? "true" : "false");
  return kv;
}

}  // namespace sdepth
