#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "octad/error.hpp"

namespace octad {

// Flat key=value configuration. Lines starting with '#' and blank lines are
// ignored. Keys are dotted where they belong to a sub-component
// (augment.translate_max, phantom.height, eval.rho, ...).
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& dflt) const;
  double get_f64(const std::string& key, double dflt) const;
  int64_t get_i64(const std::string& key, int64_t dflt) const;
  bool get_bool(const std::string& key, bool dflt) const;
  std::vector<double> get_f64_list(const std::string& key, const std::vector<double>& dflt) const;

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_f64(const std::string& key, double v);
  void set_i64(const std::string& key, int64_t v);

  const std::map<std::string, std::string>& items() const { return kv_; }
  void merge_from(const Config& other) {
    for (const auto& [k, v] : other.kv_) kv_[k] = v;
  }

  // Sorted key=value lines; used for the deterministic config echo.
  std::string serialize() const;

 private:
  std::map<std::string, std::string> kv_;
};

enum class ChannelMode : uint8_t { composite, raw3, mask3, contour3 };

ChannelMode channel_mode_from_string(const std::string& s);
const char* to_string(ChannelMode m);

// Run-level parameters shared by training and evaluation.
struct RunConfig {
  uint64_t seed = 1;
  double learning_rate = 1e-3;
  int batch_size = 4;
  int epochs = 100;
  int swa_start_epoch = 80;  // 1-based epoch index at which averaging begins
  double year_cap = 4.0;
  ChannelMode channel_mode = ChannelMode::composite;
  bool augmentation_enabled = true;
  double threshold_saliency = 0.8;

  static RunConfig from_config(const Config& c);
  void apply_to(Config& c) const;
  void validate() const;
};

}  // namespace octad
