#pragma once

#include <string>

#include "rapidash/model.hpp"
#include "rapidash/tasks.hpp"

namespace rapidash {

struct HarnessConfig {
  int trials = 50;
  std::string mode = "joint";  // joint | fixed
  int audit_clouds = 4;
  int audit_points = 24;
  uint64_t seed = 0;
};

// One experiment: a model, a task, harness settings, training knobs and an
// output directory. All randomness derives from the single [run] seed by
// fixed splitting; the per-component seeds are populated at parse time and
// never serialized.
struct ExperimentConfig {
  uint64_t seed = 0;
  std::string output_dir = "out";
  ModelConfig model;
  TaskSpec task;
  HarnessConfig harness;
  TrainOptions train;
};

// Re-derives model/task/harness/train sub-seeds from the master seed.
void derive_seeds(ExperimentConfig& cfg);

// Plain-text key=value format with [section] headers; one level only.
// Unknown sections or keys raise with the offending name and line number.
ExperimentConfig parse_config(const std::string& text);
std::string serialize_config(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::string& path);
// Environment overrides: RAPIDASH_<SECTION>_<KEY>, e.g. RAPIDASH_MODEL_CHANNELS.
void apply_env_overrides(ExperimentConfig& cfg);

}  // namespace rapidash
