#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "geodisagg/inference.hpp"
#include "geodisagg/io.hpp"
#include "geodisagg/model.hpp"
#include "geodisagg/sim.hpp"

namespace geodisagg::cli {

/// Everything a command needs, resolved from the config file and flags.
struct RunSettings {
  std::filesystem::path cells, membership, areas;
  std::filesystem::path fit_dir;
  std::filesystem::path target;  // optional re-aggregation membership
  std::filesystem::path predictions_dir, truth_dir;
  ModelSpec model;
  FitOptions fit;
  int draws = 2000;
  double threshold = 0.0;
  bool grid_error = true;
  std::uint64_t predict_seed = 1;
  ScenarioConfig scenario = ScenarioConfig::scenario('a', 20);
  int threads = 0;
};

/// Applies config keys on top of `settings`. Unknown keys are a usage error.
void apply_config(const KeyValueConfig& config, RunSettings& settings);

/// Model keys in config form, for storing next to a fit.
KeyValueConfig model_config(const ModelSpec& spec);

std::string estimator_name(Estimator e);
Estimator parse_estimator(const std::string& name);
Weighting parse_weighting(const std::string& name);

}  // namespace geodisagg::cli
