#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "facemanip/losses.hpp"
#include "facemanip/models.hpp"
#include "facemanip/stage1.hpp"

namespace facemanip {

// Operator-facing run configuration: flat key=value file, overridable by CLI
// flags. Every field has a documented default (see README).
struct RunConfig {
  int resolution = 64;
  int batch_size = 8;
  int max_steps = 20000;
  int checkpoint_interval = 500;
  int eval_interval = 250;
  int plateau_patience = 5;
  int log_interval = 10;
  double lr = 2e-4;
  LossWeights weights;
  std::uint64_t seed = 0;

  int base_width = 16;
  int d_id = 64;
  int c_b = 128;
  int n_classes = 8;
  bool share_proxy_dip = false;

  std::string boundary_source = "predicted";  // or "ground_truth"
  std::optional<std::array<std::pair<double, double>, kPoseDim>> pose_range_override;

  ModelConfig model() const {
    ModelConfig m;
    m.resolution = resolution;
    m.base_width = base_width;
    m.d_id = d_id;
    m.c_b = c_b;
    m.n_classes = n_classes;
    m.share_proxy_dip = share_proxy_dip;
    m.validate();
    return m;
  }

  std::uint64_t config_hash() const { return model().hash(); }

  void validate() const {
    model().validate();
    weights.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (boundary_source != "predicted" && boundary_source != "ground_truth")
      throw ConfigError("boundary_source must be 'predicted' or 'ground_truth'");
  }

  void set(const std::string& key, const std::string& value) {
    auto as_int = [&] {
      try {
        return std::stoi(value);
      } catch (...) {
        throw ConfigError("config key " + key + ": invalid integer '" + value + "'");
      }
    };
    auto as_double = [&] {
      try {
        return std::stod(value);
      } catch (...) {
        throw ConfigError("config key " + key + ": invalid number '" + value + "'");
      }
    };
    if (key == "resolution") resolution = as_int();
    else if (key == "batch_size") batch_size = as_int();
    else if (key == "max_steps") max_steps = as_int();
    else if (key == "checkpoint_interval") checkpoint_interval = as_int();
    else if (key == "eval_interval") eval_interval = as_int();
    else if (key == "plateau_patience") plateau_patience = as_int();
    else if (key == "log_interval") log_interval = as_int();
    else if (key == "lr") lr = as_double();
    else if (key == "lambda1") weights.lambda1 = as_double();
    else if (key == "alpha1") weights.alpha1 = as_double();
    else if (key == "alpha2") weights.alpha2 = as_double();
    else if (key == "alpha3") weights.alpha3 = as_double();
    else if (key == "m") weights.margin_m = as_double();
    else if (key == "seed") seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "base_width") base_width = as_int();
    else if (key == "d_id") d_id = as_int();
    else if (key == "c_b") c_b = as_int();
    else if (key == "n_classes") n_classes = as_int();
    else if (key == "share_proxy_dip") share_proxy_dip = value == "1" || value == "true";
    else if (key == "boundary_source") boundary_source = value;
    else if (key == "pose_range") {
      // "ymin:ymax,pmin:pmax,rmin:rmax" in normalized units
      std::array<std::pair<double, double>, kPoseDim> r;
      std::istringstream ss(value);
      std::string part;
      for (int j = 0; j < kPoseDim; ++j) {
        if (!std::getline(ss, part, ',')) throw ConfigError("pose_range: expected 3 parts");
        auto colon = part.find(':');
        if (colon == std::string::npos) throw ConfigError("pose_range: expected lo:hi");
        r[j] = {std::stod(part.substr(0, colon)), std::stod(part.substr(colon + 1))};
      }
      pose_range_override = r;
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  }

  static RunConfig from_file(const std::string& path) {
    RunConfig cfg;
    cfg.apply_file(path);
    return cfg;
  }

  void apply_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
      auto trim = [](std::string s) {
        auto b = s.find_first_not_of(" \t\r");
        auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }
};

}  // namespace facemanip
