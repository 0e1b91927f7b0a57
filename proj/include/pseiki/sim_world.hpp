#pragma once

// Hallway world, expectation rendering, synthetic perception, odometry error
// and the travel / self-locate loop.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pseiki/blackboard.hpp"
#include "pseiki/scheduler.hpp"
#include "pseiki/self_location.hpp"

namespace pseiki {

struct WallPolyline {
  std::vector<Vec2> points;  // m, plan view
  bool closed = false;
};

enum class FeatureKind { Door, Board };

// Rectangle painted on one wall segment, measured along it from its start.
struct WallFeature {
  FeatureKind kind = FeatureKind::Door;
  std::size_t polyline = 0;
  std::size_t segment = 0;
  double offset_m = 0.0;
  double width_m = 1.0;
  double bottom_m = 0.0;
  double top_m = 2.0;
};

struct WallSegment {
  Vec2 a, b;
  std::size_t polyline = 0;
  std::size_t index = 0;
};

struct HallFace {
  std::vector<std::size_t> edges;
  std::size_t wall = 0;  // host wall segment
};

struct HallEdge {
  Segment3 segment;
  bool horizontal = false;
  std::size_t face = 0;
  std::vector<std::size_t> hosts;  // wall segments the edge lies on
};

class HallwayModel {
 public:
  // Derives the 3-D edges and faces. Throws ConfigError for self-intersecting
  // walls or features that do not fit their wall.
  HallwayModel(std::vector<WallPolyline> walls, std::vector<WallFeature> features, double wall_height_m);

  double wall_height() const { return wall_height_; }
  const std::vector<WallPolyline>& walls() const { return walls_; }
  const std::vector<WallFeature>& features() const { return features_; }
  const std::vector<WallSegment>& wall_segments() const { return segments_; }
  const std::vector<HallEdge>& edges() const { return edges_; }
  const std::vector<HallFace>& faces() const { return faces_; }
  std::vector<WorldEdge> world_edges() const;

  // Inside the first closed polyline and outside every other closed one.
  bool in_free_space(const Vec2& p) const;
  double clearance(const Vec2& p) const;  // distance to the nearest wall
  // Smallest distance between the path a->b and any wall.
  double path_clearance(const Vec2& a, const Vec2& b) const;

 private:
  std::vector<WallPolyline> walls_;
  std::vector<WallFeature> features_;
  double wall_height_;
  std::vector<WallSegment> segments_;
  std::vector<HallEdge> edges_;
  std::vector<HallFace> faces_;
};

struct WorldFile {
  std::optional<HallwayModel> model;
  CameraModel camera;
  Pose2 start;
  std::vector<Vec2> waypoints;
};

// Line-oriented world description; see data/hallway.world. Throws
// ParseError carrying the line number.
WorldFile parse_world(std::istream& in);
WorldFile load_world(const std::string& path);

struct RenderOptions {
  double near_m = 0.1;
  double min_length_px = 10.0;
  int visibility_samples = 96;
};

struct ProjectedEdge {
  Segment2 image;
  std::uint32_t source = 0;  // index into HallwayModel::edges()
  std::uint32_t face = 0;
};

// Visible 3-D edges at `pose`, culled by plan-view wall occlusion, projected
// and clipped to the image. Throws PoseOutsideWorld.
std::vector<ProjectedEdge> render_expectation(const HallwayModel& model, const Pose2& pose, const CameraModel& cam,
                                              const RenderOptions& options = {});

struct PerceptionNoise {
  double frag_prob = 0.0;
  double drop_prob = 0.0;
  double spurious_rate = 0.0;  // glare edges per frame
  double endpoint_sigma_px = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PerceivedEdge {
  Segment2 image;
  std::optional<std::uint32_t> source;  // ground truth, evaluation only
};

std::vector<PerceivedEdge> synthesize_perception(const HallwayModel& model, const Pose2& true_pose,
                                                 const CameraModel& cam, const PerceptionNoise& noise,
                                                 const RenderOptions& options = {});

// Model panel (vertex / edge / face / object / scene) from the expectation and
// data edges from the perception. Ground truth is not copied.
Blackboard make_blackboard(std::span<const ProjectedEdge> expectation, std::span<const PerceivedEdge> perception);

struct OdometryNoise {
  double turn_sigma_deg = 0.0;       // per 45 degrees of commanded turn
  double distance_sigma_frac = 0.0;  // actual distance within +-frac of commanded
  double heading_bias_max_deg = 0.0; // per-run bias of straight motion, uniform in +-max
  std::uint64_t seed = 0;

  void validate() const;
};

// Error on the true pose for commanded motion.
class Odometry {
 public:
  explicit Odometry(const OdometryNoise& noise);

  Pose2 turn(const Pose2& truth, double commanded_rad);
  Pose2 straight(const Pose2& truth, double commanded_m);
  double bias() const { return bias_; }

 private:
  OdometryNoise noise_;
  std::mt19937_64 rng_;
  double bias_ = 0.0;
};

struct NavigationConfig {
  double relocate_every_m = 6.0;
  bool self_locate = true;
  int max_legs = 40;
  double goal_tolerance_m = 0.5;
  double arrive_tolerance_m = 0.2;  // believed distance at which the last waypoint counts as reached
  double via_tolerance_m = 1.0;     // the same for intermediate waypoints
  // Legs are shortened (down to min_leg_m) until a drift of up to
  // drift_allowance_deg either way keeps robot_radius_m + safety_margin_m
  // from the walls.
  double drift_allowance_deg = 15.0;
  double safety_margin_m = 0.1;
  double min_leg_m = 1.0;
  double robot_radius_m = 0.25;
  double retention_threshold = 0.9;
  // Matching rounds per stop; each later round renders the expectation at
  // the previous round's fix.
  int match_passes = 1;
  // Expectation poses tried in the first round, as offsets in the believed
  // robot frame (x forward, y left, heading). The offset whose retained
  // matches carry the most belief is kept. Empty means the believed pose only.
  std::vector<Pose2> search_offsets;
  LocateOptions locate;
  SchedulerConfig scheduler;
  RenderOptions render;

  void validate() const;
};

enum class Outcome { GoalReached, MissedGoal, WallCollision, LegBudgetExceeded, Lost };
const char* to_string(Outcome outcome);

struct LegRecord {
  int step = 0;
  Pose2 truth;     // after the motion
  Pose2 believed;  // after the motion, before the fix
  Pose2 fix;       // believed pose after self-location
  std::size_t matches = 0;
  bool fixed = false;
  bool heading_from_prior = false;
  bool position_from_prior = false;
};

struct NavigationLog {
  std::vector<LegRecord> legs;
  std::vector<Pose2> true_path;
  std::vector<Pose2> believed_path;
  Outcome outcome = Outcome::LegBudgetExceeded;
  Pose2 final_truth;

  bool success() const { return outcome == Outcome::GoalReached; }
  std::string text() const;
};

NavigationLog navigate(const HallwayModel& model, const CameraModel& cam, std::span<const Vec2> waypoints,
                       const Pose2& start, const OdometryNoise& odo, const PerceptionNoise& pnoise,
                       const NavigationConfig& config);

// Independent episodes, one per seed; episode i uses seeds[i] for both noise
// streams (perception offset so the two differ). The OpenMP version returns
// the same logs in the same order.
struct EpisodeSpec {
  const HallwayModel* model = nullptr;
  CameraModel camera;
  std::vector<Vec2> waypoints;
  Pose2 start;
  OdometryNoise odometry;
  PerceptionNoise perception;
  NavigationConfig config;
};
std::vector<NavigationLog> run_episodes_serial(const EpisodeSpec& spec, std::span<const std::uint64_t> seeds);
std::vector<NavigationLog> run_episodes_parallel(const EpisodeSpec& spec, std::span<const std::uint64_t> seeds,
                                                 int jobs);

// Plan view of the walls and the true / believed trajectories.
std::string plan_svg(const HallwayModel& model, std::span<const Vec2> waypoints, const NavigationLog& log);
// Image overlay: expectation, perception, and perceived edges of the winning
// scene hypothesis.
std::string match_svg(const CameraModel& cam, std::span<const ProjectedEdge> expectation,
                      std::span<const PerceivedEdge> perception, std::span<const EdgeMatch> winners);

}  // namespace pseiki
