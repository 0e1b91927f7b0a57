#pragma once

// JSON scenario files. Every numeric key carries its unit in the name;
// unknown keys are rejected so a misspelt parameter cannot silently fall back
// to its default.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "pseiki/scheduler.hpp"
#include "pseiki/sim_world.hpp"

namespace pseiki {

// Registration offsets tried at a stop: a (2 steps + 1)^2 grid over lateral
// shift and heading. steps = 0 disables the search.
struct SearchGrid {
  double lateral_m = 0.0;
  double heading_deg = 0.0;
  int steps = 0;

  std::vector<Pose2> offsets() const;
};

struct Episodes {
  int count = 20;
  std::uint64_t first_seed = 1;

  std::vector<std::uint64_t> seeds() const;
};

struct Scenario {
  std::filesystem::path world_path;
  WorldFile world;  // camera, start and waypoints below take precedence
  CameraModel camera;
  Pose2 start;
  std::vector<Vec2> waypoints;
  PerceptionNoise perception;
  OdometryNoise odometry;
  NavigationConfig navigation;  // its scheduler field is the scenario's scheduler
  SearchGrid search;
  double retention_threshold = 0.9;
  Pose2 believed_pose;  // match: expectation pose
  Pose2 true_pose;      // match: perception pose
  Episodes episodes;

  const HallwayModel& model() const { return *world.model; }
  const SchedulerConfig& scheduler() const { return navigation.scheduler; }
  // Episode description with the scenario's noise, seeds excluded.
  EpisodeSpec episode_spec() const;
};

// Paths inside the document are relative to `base_dir`. Throws ConfigError
// (ParseError for malformed JSON) and the world loader's errors. With
// `check_ranges` off, parameter ranges are left to the consumers; selftest
// uses this to report a bad constant as a failed invariant.
Scenario parse_scenario(std::string_view json_text, const std::filesystem::path& base_dir, bool check_ranges = true);
Scenario load_scenario(const std::filesystem::path& path, bool check_ranges = true);

// Every parameter, defaults included, as indented JSON.
std::string resolved_config(const Scenario& scenario);

}  // namespace pseiki
