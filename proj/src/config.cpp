#include "octad/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace octad {

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::invalid_config, "line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    while (!key.empty() && key.back() == ' ') key.pop_back();
    while (!val.empty() && val.front() == ' ') val.erase(val.begin());
    if (key.empty()) throw Error(Errc::invalid_config, "empty key");
    c.kv_[key] = val;
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io_failure, "cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

std::string Config::get(const std::string& key, const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

double Config::get_f64(const std::string& key, double dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& s = it->second;
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(Errc::invalid_config, key + " not a number: '" + s + "'");
  return v;
}

int64_t Config::get_i64(const std::string& key, int64_t dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& s = it->second;
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw Error(Errc::invalid_config, key + " not an integer: '" + s + "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  const std::string& s = it->second;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(Errc::invalid_config, key + " not a boolean: '" + s + "'");
}

std::vector<double> Config::get_f64_list(const std::string& key,
                                         const std::vector<double>& dflt) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return dflt;
  std::vector<double> out;
  std::string cur;
  std::istringstream in(it->second);
  while (std::getline(in, cur, ',')) {
    double v = 0;
    auto [p, ec] = std::from_chars(cur.data(), cur.data() + cur.size(), v);
    if (ec != std::errc() || p != cur.data() + cur.size())
      throw Error(Errc::invalid_config, key + " has a non-numeric element: '" + cur + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error(Errc::invalid_config, key + " is empty");
  return out;
}

void Config::set_f64(const std::string& key, double v) {
  char buf[40];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  kv_[key] = std::string(buf, p);
}

void Config::set_i64(const std::string& key, int64_t v) { kv_[key] = std::to_string(v); }

std::string Config::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : kv_) out << k << '=' << v << '\n';
  return out.str();
}

ChannelMode channel_mode_from_string(const std::string& s) {
  if (s == "composite") return ChannelMode::composite;
  if (s == "raw3") return ChannelMode::raw3;
  if (s == "mask3") return ChannelMode::mask3;
  if (s == "contour3") return ChannelMode::contour3;
  throw Error(Errc::invalid_config, "unknown channel_mode: '" + s + "'");
}

const char* to_string(ChannelMode m) {
  switch (m) {
    case ChannelMode::composite: return "composite";
    case ChannelMode::raw3: return "raw3";
    case ChannelMode::mask3: return "mask3";
    case ChannelMode::contour3: return "contour3";
  }
  return "?";
}

RunConfig RunConfig::from_config(const Config& c) {
  RunConfig r;
  r.seed = static_cast<uint64_t>(c.get_i64("seed", static_cast<int64_t>(r.seed)));
  r.learning_rate = c.get_f64("learning_rate", r.learning_rate);
  r.batch_size = static_cast<int>(c.get_i64("batch_size", r.batch_size));
  r.epochs = static_cast<int>(c.get_i64("epochs", r.epochs));
  r.swa_start_epoch = static_cast<int>(c.get_i64("swa_start_epoch", r.swa_start_epoch));
  r.year_cap = c.get_f64("year_cap", r.year_cap);
  r.channel_mode = channel_mode_from_string(c.get("channel_mode", to_string(r.channel_mode)));
  r.augmentation_enabled = c.get_bool("augmentation_enabled", r.augmentation_enabled);
  r.threshold_saliency = c.get_f64("threshold_saliency", r.threshold_saliency);
  r.validate();
  return r;
}

void RunConfig::apply_to(Config& c) const {
  c.set_i64("seed", static_cast<int64_t>(seed));
  c.set_f64("learning_rate", learning_rate);
  c.set_i64("batch_size", batch_size);
  c.set_i64("epochs", epochs);
  c.set_i64("swa_start_epoch", swa_start_epoch);
  c.set_f64("year_cap", year_cap);
  c.set("channel_mode", to_string(channel_mode));
  c.set("augmentation_enabled", augmentation_enabled ? "true" : "false");
  c.set_f64("threshold_saliency", threshold_saliency);
}

void RunConfig::validate() const {
  if (batch_size < 1) throw Error(Errc::invalid_config, "batch_size must be >= 1");
  if (epochs < 1) throw Error(Errc::invalid_config, "epochs must be >= 1");
  if (swa_start_epoch < 1 || swa_start_epoch >= epochs)
    throw Error(Errc::invalid_config, "swa_start_epoch must be in 1..epochs-1");
  if (!(year_cap > 0)) throw Error(Errc::invalid_config, "year_cap must be > 0");
  if (threshold_saliency < 0 || threshold_saliency > 1)
    throw Error(Errc::invalid_config, "threshold_saliency must be in [0,1]");
  if (!(learning_rate >= 0)) throw Error(Errc::invalid_config, "learning_rate must be >= 0");
}

}  // namespace octad
