#pragma once

// Planar pose of the robot from believed edge correspondences. Heading comes
// from horizontal model edges through the interpretation plane of their
// image; position from pairs of non-parallel model lines.

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "pseiki/blackboard.hpp"
#include "pseiki/geometry.hpp"

namespace pseiki {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// World frame W: x, y on the floor, z up. Robot frame R: origin on the
// floor, x forward, y left, z up.
struct Pose2 {
  double x = 0.0;        // m
  double y = 0.0;        // m
  double heading = 0.0;  // rad, (-pi, pi]

  Pose2() = default;
  Pose2(double x_m, double y_m, double heading_rad);

  Vec2 position() const { return {x, y}; }
  Mat3 rotation() const;  // R to W, about z
};

double normalize_angle(double a);  // into (-pi, pi]

// Pinhole camera: camera axes x right, y down, z along the optical axis.
struct CameraModel {
  double focal_length = 400.0;     // px
  Vec2 principal_point{320.0, 240.0};
  int width = 640;                 // px
  int height = 480;                // px
  Mat3 mount_rotation = Mat3::Identity();  // camera to R
  Vec3 mount_translation = Vec3::Zero();   // camera centre in R, m

  // Camera looking along R's x axis, `height_m` above the floor, pitched
  // down by `tilt_rad`.
  static CameraModel forward_looking(double focal_px, int width_px, int height_px, double height_m,
                                     double tilt_rad);

  void validate() const;

  // Unit ray through pixel `p`, in R.
  Vec3 ray(const Vec2& p) const;
  // Camera centre and rotation in W for robot pose `pose`.
  Vec3 centre_world(const Pose2& pose) const;
  Mat3 rotation_world(const Pose2& pose) const;
  // Camera-frame coordinates of world point `w`.
  Vec3 to_camera(const Pose2& pose, const Vec3& w) const;
  Vec2 project_camera(const Vec3& c) const;  // requires c.z() > 0
};

struct Segment3 {
  Vec3 p0 = Vec3::Zero();
  Vec3 p1 = Vec3::UnitX();
};

struct EdgeMatch {
  Segment2 image_segment;
  Segment3 model_edge;  // W, m
  double belief = 0.0;  // singleton mass of the label
  bool is_horizontal = false;
};

// World description of each model-panel edge, indexed by its `source`.
struct WorldEdge {
  Segment3 segment;
  bool horizontal = false;
};

// Scene-level data node with the largest mass on its label; ties go to the
// oldest. Empty when no scene node has a belief.
std::optional<ElementId> best_scene(const Blackboard& bb);
// Alive descendant edges of `node`, depth first, each once.
std::vector<ElementId> descendant_edges(const Blackboard& bb, ElementId node);

// Descendant data edges of the most believed scene node whose label mass is
// at least `threshold`. Throws NoSceneNode when no scene node has a belief.
std::vector<EdgeMatch> extract_matches(const Blackboard& bb, double threshold, std::span<const WorldEdge> world);

// Heading from one horizontal match; of the two solutions the one closest to
// `prior_heading` is returned. Throws DegenerateGeometry when the
// interpretation plane is horizontal and std::invalid_argument for a
// non-horizontal model edge.
double orientation_from_edge(const EdgeMatch& m, const CameraModel& cam, double prior_heading);

inline constexpr double kMaxPairCondition = 1e6;

// Position from two matches at a known heading. Throws NearParallel when the
// 2x2 system's condition number exceeds kMaxPairCondition.
Vec2 position_from_pair(const EdgeMatch& m1, const EdgeMatch& m2, double heading, const CameraModel& cam);

struct LocateResult {
  Pose2 pose;
  bool heading_from_prior = false;
  bool position_from_prior = false;
  std::size_t heading_edges = 0;  // horizontal matches used
  std::size_t position_pairs = 0; // pairs used

  // InsufficientMatches: some component fell back to the prior.
  bool insufficient() const { return heading_from_prior || position_from_prior; }
};

// Gates applied before averaging. The defaults drop estimates whose error
// under a pixel of endpoint noise exceeds the fix's purpose; setting every
// field to its permissive value (0, 0, kMaxPairCondition) keeps all
// estimates position_from_pair / orientation_from_edge accept.
struct LocateOptions {
  double min_segment_px = 30.0;      // shorter image segments are ignored
  double min_plane_tilt = 0.2;       // |n x z| floor for heading estimates
  double max_pair_condition = 10.0;  // pairs above are skipped
  // Estimates farther than max(trim_mads * MAD, floor) from the weighted
  // median are dropped before averaging; trim_mads = 0 disables trimming.
  double trim_mads = 3.0;
  double trim_floor_rad = 0.01;
  double trim_floor_m = 0.1;
};

// Belief-weighted circular mean of per-edge headings, then belief-product
// weighted mean of the pair positions at that heading.
LocateResult self_locate(std::span<const EdgeMatch> matches, const Pose2& prior, const CameraModel& cam,
                         const LocateOptions& options = {});

// Condition number of the pair's 2x2 position system; infinity when a plane
// normal has no horizontal component.
double pair_condition(const EdgeMatch& m1, const EdgeMatch& m2, double heading, const CameraModel& cam);

}  // namespace pseiki
