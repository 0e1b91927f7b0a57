#include "pseiki/scenario.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "pseiki/errors.hpp"

namespace pseiki {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kDeg = kPi / 180.0;

// Object reader that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Section() = default;

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(fmt::format("{}.{} has the wrong type", path_, key));
    }
  }

  double number(const std::string& key, double fallback) {
    read(key, fallback);
    return fallback;
  }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), path_ + "." + key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  // Throws on keys that were never read.
  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(fmt::format("unknown key {}.{}", path_, k));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Pose2 read_pose(Section s, const Pose2& fallback) {
  const double x = s.number("x_m", fallback.x);
  const double y = s.number("y_m", fallback.y);
  const double h = s.number("heading_deg", fallback.heading / kDeg);
  s.done();
  return Pose2(x, y, h * kDeg);
}

ordered_json pose_json(const Pose2& p) {
  return {{"x_m", p.x}, {"y_m", p.y}, {"heading_deg", p.heading / kDeg}};
}

double camera_tilt(const CameraModel& cam) {
  const Vec3 axis = cam.mount_rotation.col(2);
  return std::atan2(-axis.z(), axis.x());
}

}  // namespace

std::vector<Pose2> SearchGrid::offsets() const {
  std::vector<Pose2> out;
  if (steps <= 0) return out;
  for (int i = -steps; i <= steps; ++i) {
    for (int j = -steps; j <= steps; ++j) {
      out.emplace_back(0.0, lateral_m * i / steps, heading_deg * kDeg * j / steps);
    }
  }
  return out;
}

std::vector<std::uint64_t> Episodes::seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < count; ++i) out.push_back(first_seed + static_cast<std::uint64_t>(i));
  return out;
}

EpisodeSpec Scenario::episode_spec() const {
  EpisodeSpec spec;
  spec.model = &model();
  spec.camera = camera;
  spec.waypoints = waypoints;
  spec.start = start;
  spec.odometry = odometry;
  spec.perception = perception;
  spec.config = navigation;
  return spec;
}

Scenario parse_scenario(std::string_view json_text, const std::filesystem::path& base_dir, bool check_ranges) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; turn it into a line number.
    const std::size_t upto = std::min<std::size_t>(e.byte, json_text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(json_text.begin(), json_text.begin() + upto, '\n'));
    throw ParseError(line, "malformed JSON");
  }
  Section root(doc, "scenario");
  Scenario sc;

  std::string world;
  root.read("world", world);
  if (world.empty()) throw ConfigError("scenario.world is required");
  sc.world_path = std::filesystem::path(world).is_absolute() ? std::filesystem::path(world) : base_dir / world;
  if (!std::filesystem::exists(sc.world_path)) throw ConfigError("world file not found: " + sc.world_path.string());
  sc.world = load_world(sc.world_path.string());
  sc.camera = sc.world.camera;
  sc.start = sc.world.start;
  sc.waypoints = sc.world.waypoints;

  if (root.has("camera")) {
    Section s = root.sub("camera");
    const double f = s.number("focal_px", sc.camera.focal_length);
    const double w = s.number("width_px", sc.camera.width);
    const double h = s.number("height_px", sc.camera.height);
    const double mount = s.number("mount_height_m", sc.camera.mount_translation.z());
    const double tilt = s.number("tilt_deg", camera_tilt(sc.camera) / kDeg);
    s.done();
    if (!(f > 0.0 && w >= 1.0 && h >= 1.0 && mount > 0.0)) throw ConfigError("camera parameters out of range");
    sc.camera = CameraModel::forward_looking(f, static_cast<int>(w), static_cast<int>(h), mount, tilt * kDeg);
  }
  if (root.has("start")) sc.start = read_pose(root.sub("start"), sc.start);
  if (root.has("waypoints")) {
    const json& list = root.raw("waypoints");
    if (!list.is_array()) throw ConfigError("scenario.waypoints must be an array");
    sc.waypoints.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      Section s(list[i], fmt::format("scenario.waypoints[{}]", i));
      if (!s.has("x_m") || !s.has("y_m")) throw ConfigError("waypoints need x_m and y_m");
      const double x = s.number("x_m", 0.0), y = s.number("y_m", 0.0);
      s.done();
      sc.waypoints.emplace_back(x, y);
    }
  }

  SchedulerConfig& sched = sc.navigation.scheduler;
  if (root.has("metric")) {
    Section s = root.sub("metric");
    MetricParams& m = sched.ks.metric;
    s.read("r_max_px", m.r_max);
    s.read("alpha", m.alpha);
    s.read("sigma_rot_rad", m.sigma_rot);
    s.read("sigma_trans", m.sigma_trans);
    s.done();
  }
  if (root.has("knowledge_sources")) {
    Section s = root.sub("knowledge_sources");
    KsParams& k = sched.ks;
    s.read("tau_grow", k.tau_grow);
    k.merge_angle = s.number("merge_angle_deg", k.merge_angle / kDeg) * kDeg;
    s.read("merge_gap_px", k.merge_gap_px);
    s.read("merge_offset_px", k.merge_offset_px);
    s.read("max_split_alternatives", k.max_split_alternatives);
    s.done();
  }
  if (root.has("scheduler")) {
    Section s = root.sub("scheduler");
    s.read("n_g", sched.n_g);
    s.read("max_firings", sched.max_firings);
    s.read("jobs", sched.jobs);
    s.done();
  }
  root.read("retention_threshold", sc.retention_threshold);
  if (root.has("perception")) {
    Section s = root.sub("perception");
    s.read("frag_prob", sc.perception.frag_prob);
    s.read("drop_prob", sc.perception.drop_prob);
    s.read("spurious_per_frame", sc.perception.spurious_rate);
    s.read("endpoint_sigma_px", sc.perception.endpoint_sigma_px);
    s.read("seed", sc.perception.seed);
    s.done();
  }
  if (root.has("odometry")) {
    Section s = root.sub("odometry");
    s.read("turn_sigma_deg_per_45deg", sc.odometry.turn_sigma_deg);
    s.read("distance_frac", sc.odometry.distance_sigma_frac);
    s.read("heading_bias_max_deg", sc.odometry.heading_bias_max_deg);
    s.read("seed", sc.odometry.seed);
    s.done();
  }
  NavigationConfig& nav = sc.navigation;
  if (root.has("navigation")) {
    Section s = root.sub("navigation");
    s.read("relocate_every_m", nav.relocate_every_m);
    s.read("self_locate", nav.self_locate);
    s.read("max_legs", nav.max_legs);
    s.read("goal_tolerance_m", nav.goal_tolerance_m);
    s.read("arrive_tolerance_m", nav.arrive_tolerance_m);
    s.read("via_tolerance_m", nav.via_tolerance_m);
    s.read("robot_radius_m", nav.robot_radius_m);
    s.read("drift_allowance_deg", nav.drift_allowance_deg);
    s.read("safety_margin_m", nav.safety_margin_m);
    s.read("min_leg_m", nav.min_leg_m);
    s.read("match_passes", nav.match_passes);
    if (s.has("search")) {
      Section g = s.sub("search");
      g.read("lateral_m", sc.search.lateral_m);
      g.read("heading_deg", sc.search.heading_deg);
      g.read("steps", sc.search.steps);
      g.done();
    }
    s.done();
  }
  if (root.has("locate")) {
    Section s = root.sub("locate");
    LocateOptions& l = nav.locate;
    s.read("min_segment_px", l.min_segment_px);
    s.read("min_plane_tilt", l.min_plane_tilt);
    s.read("max_pair_condition", l.max_pair_condition);
    s.read("trim_mads", l.trim_mads);
    l.trim_floor_rad = s.number("trim_floor_deg", l.trim_floor_rad / kDeg) * kDeg;
    s.read("trim_floor_m", l.trim_floor_m);
    s.done();
  }
  if (root.has("render")) {
    Section s = root.sub("render");
    s.read("near_m", nav.render.near_m);
    s.read("min_length_px", nav.render.min_length_px);
    s.read("visibility_samples", nav.render.visibility_samples);
    s.done();
  }
  if (root.has("match")) {
    Section s = root.sub("match");
    if (s.has("believed")) sc.believed_pose = read_pose(s.sub("believed"), sc.start);
    else sc.believed_pose = sc.start;
    if (s.has("true")) sc.true_pose = read_pose(s.sub("true"), sc.believed_pose);
    else sc.true_pose = sc.believed_pose;
    s.done();
  } else {
    sc.believed_pose = sc.true_pose = sc.start;
  }
  if (root.has("episodes")) {
    Section s = root.sub("episodes");
    s.read("count", sc.episodes.count);
    s.read("first_seed", sc.episodes.first_seed);
    s.done();
  }
  root.done();

  nav.retention_threshold = sc.retention_threshold;
  nav.search_offsets = sc.search.offsets();
  if (sc.search.steps < 0 || sc.search.lateral_m < 0.0 || sc.search.heading_deg < 0.0) {
    throw ConfigError("navigation.search values must be non-negative");
  }
  if (sc.episodes.count < 0) throw ConfigError("episodes.count must be non-negative");
  if (check_ranges) {
    try {
      nav.validate();
      sc.perception.validate();
      sc.odometry.validate();
      sc.camera.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  for (const Pose2& p : {sc.start, sc.believed_pose, sc.true_pose}) {
    if (!sc.model().in_free_space(p.position())) {
      throw ConfigError(fmt::format("pose ({}, {}) is outside the hallways", p.x, p.y));
    }
  }
  for (const Vec2& w : sc.waypoints) {
    if (!sc.model().in_free_space(w)) throw ConfigError(fmt::format("waypoint ({}, {}) is outside the hallways", w.x(), w.y()));
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path, bool check_ranges) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path(), check_ranges);
}

std::string resolved_config(const Scenario& sc) {
  const auto& sched = sc.scheduler();
  const auto& nav = sc.navigation;
  ordered_json waypoints = ordered_json::array();
  for (const Vec2& w : sc.waypoints) waypoints.push_back({{"x_m", w.x()}, {"y_m", w.y()}});
  ordered_json j = {
      {"world", sc.world_path.lexically_normal().string()},
      {"camera",
       {{"focal_px", sc.camera.focal_length},
        {"width_px", sc.camera.width},
        {"height_px", sc.camera.height},
        {"mount_height_m", sc.camera.mount_translation.z()},
        {"tilt_deg", camera_tilt(sc.camera) / kDeg}}},
      {"start", pose_json(sc.start)},
      {"waypoints", waypoints},
      {"metric",
       {{"r_max_px", sched.ks.metric.r_max},
        {"alpha", sched.ks.metric.alpha},
        {"sigma_rot_rad", sched.ks.metric.sigma_rot},
        {"sigma_trans", sched.ks.metric.sigma_trans}}},
      {"knowledge_sources",
       {{"tau_grow", sched.ks.tau_grow},
        {"merge_angle_deg", sched.ks.merge_angle / kDeg},
        {"merge_gap_px", sched.ks.merge_gap_px},
        {"merge_offset_px", sched.ks.merge_offset_px},
        {"max_split_alternatives", sched.ks.max_split_alternatives}}},
      {"scheduler", {{"n_g", sched.n_g}, {"max_firings", sched.max_firings}, {"jobs", sched.jobs}}},
      {"retention_threshold", sc.retention_threshold},
      {"perception",
       {{"frag_prob", sc.perception.frag_prob},
        {"drop_prob", sc.perception.drop_prob},
        {"spurious_per_frame", sc.perception.spurious_rate},
        {"endpoint_sigma_px", sc.perception.endpoint_sigma_px},
        {"seed", sc.perception.seed}}},
      {"odometry",
       {{"turn_sigma_deg_per_45deg", sc.odometry.turn_sigma_deg},
        {"distance_frac", sc.odometry.distance_sigma_frac},
        {"heading_bias_max_deg", sc.odometry.heading_bias_max_deg},
        {"seed", sc.odometry.seed}}},
      {"navigation",
       {{"relocate_every_m", nav.relocate_every_m},
        {"self_locate", nav.self_locate},
        {"max_legs", nav.max_legs},
        {"goal_tolerance_m", nav.goal_tolerance_m},
        {"arrive_tolerance_m", nav.arrive_tolerance_m},
        {"via_tolerance_m", nav.via_tolerance_m},
        {"robot_radius_m", nav.robot_radius_m},
        {"drift_allowance_deg", nav.drift_allowance_deg},
        {"safety_margin_m", nav.safety_margin_m},
        {"min_leg_m", nav.min_leg_m},
        {"match_passes", nav.match_passes},
        {"search",
         {{"lateral_m", sc.search.lateral_m}, {"heading_deg", sc.search.heading_deg}, {"steps", sc.search.steps}}}}},
      {"locate",
       {{"min_segment_px", nav.locate.min_segment_px},
        {"min_plane_tilt", nav.locate.min_plane_tilt},
        {"max_pair_condition", nav.locate.max_pair_condition},
        {"trim_mads", nav.locate.trim_mads},
        {"trim_floor_deg", nav.locate.trim_floor_rad / kDeg},
        {"trim_floor_m", nav.locate.trim_floor_m}}},
      {"render",
       {{"near_m", nav.render.near_m},
        {"min_length_px", nav.render.min_length_px},
        {"visibility_samples", nav.render.visibility_samples}}},
      {"match", {{"believed", pose_json(sc.believed_pose)}, {"true", pose_json(sc.true_pose)}}},
      {"episodes", {{"count", sc.episodes.count}, {"first_seed", sc.episodes.first_seed}}},
  };
  return j.dump(2);
}

}  // namespace pseiki
