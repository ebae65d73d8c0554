#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbfmeta/data_buffer.hpp"
#include "cbfmeta/environment.hpp"
#include "cbfmeta/gp_baseline.hpp"
#include "cbfmeta/meta_train.hpp"
#include "cbfmeta/sim_control.hpp"

namespace cbfmeta {

struct NamedScene {
  std::string name;
  EnvironmentSpec env;
};

struct NllEvalConfig {
  int n_tasks = 100;
  std::vector<int> counts{1, 2, 3, 5, 10, 20, 50};  // surface points (anchors)
  std::size_t max_test_points = 300;
};

struct SimulateConfig {
  std::vector<NamedScene> scenes;
  std::vector<double> lidar_periods{1.0, 3.0, 5.0};
  std::vector<Backend> backends{Backend::Meta, Backend::Gp};
  EpisodeConfig episode;
  GridSpec grid{Box2{Vec2(-3.0, -3.0), Vec2(3.0, 3.0)}, 41, 41};
};

struct DeskScaleConfig {
  int n_iterations = MetaConfig::kDeskIterations;
  int nll_tasks = 30;
};

/// Whole-pipeline configuration; every field has a default and any subset
/// can be overridden from one JSON document.
struct PipelineConfig {
  std::uint64_t seed = 0;
  TaskConfig task;
  MetaConfig meta;
  BufferConfig buffer;
  GpSearchConfig gp;
  NllEvalConfig nll;
  SimulateConfig simulate;
  DeskScaleConfig desk;

  PipelineConfig();
  void validate() const;
  /// Applies the reduced budgets of the desk-scale profile.
  void apply_desk_scale();
};

/// Throws Error(ConfigInvalid) on unknown keys, wrong types, or invalid values.
PipelineConfig config_from_json(const std::string& text);
std::string config_to_json(const PipelineConfig& cfg);

/// Three fixed benchmark scenes between start (-2.5, 0) and goal (2.5, 0).
std::vector<NamedScene> benchmark_scenes();

}  // namespace cbfmeta
