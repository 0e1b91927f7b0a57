#pragma once

// Image-space line-segment geometry and the element / relational metrics the
// Labeler turns into simple evidence functions.

#include <Eigen/Core>

namespace pseiki {

using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = 3.14159265358979323846;

// Image-space segment in pixels. Orientation is undirected.
class Segment2 {
 public:
  Segment2() = default;
  // Throws DegenerateGeometry for zero-length segments.
  Segment2(Vec2 p0, Vec2 p1);

  const Vec2& p0() const { return p0_; }
  const Vec2& p1() const { return p1_; }
  Vec2 midpoint() const { return 0.5 * (p0_ + p1_); }
  double length() const { return (p1_ - p0_).norm(); }
  // Direction angle in [0, pi).
  double angle() const;
  Vec2 direction() const { return (p1_ - p0_).normalized(); }

  Segment2 translated(const Vec2& offset) const { return {p0_ + offset, p1_ + offset}; }
  Segment2 reversed() const { return {p1_, p0_}; }

  bool operator==(const Segment2&) const = default;

 private:
  Vec2 p0_{0.0, 0.0};
  Vec2 p1_{1.0, 0.0};
};

// Wraps an angle into [0, pi).
double wrap_half_turn(double angle);
// Distance between two undirected orientations, in [0, pi/2].
double undirected_angle_distance(double a, double b);

struct MetricParams {
  double r_max = 120.0;     // px, proximity radius for candidate labels
  double alpha = 0.9;       // committed-mass discount; 1 - alpha always goes to theta
  double sigma_rot = 0.2;   // rad
  double sigma_trans = 0.5; // offsets are normalized by the pair's mean length

  // Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

struct SimDissim {
  double sim = 0.0;
  double dissim = 0.0;
};

// Rigid relation between two segments.
struct PairTransform {
  double dtheta = 0.0;  // rotation from a to b, in [0, pi)
  Vec2 dt{0.0, 0.0};    // mid_b - mid_a
  double scale_ref = 1.0;
};

// Angle, proximity and length agreement of a data segment with a model
// segment. sim + dissim == alpha.
SimDissim similarity(const Segment2& data, const Segment2& model, const MetricParams& params);

PairTransform pair_transform(const Segment2& a, const Segment2& b);

// Raw agreement in [0, 1] between the relation (d1 -> d2) and (m1 -> m2).
double relation_agreement(const Segment2& d1, const Segment2& d2, const Segment2& m1, const Segment2& m2,
                          const MetricParams& params);

SimDissim rel_similarity(const Segment2& d1, const Segment2& d2, const Segment2& m1, const Segment2& m2,
                         const MetricParams& params);

// Point-to-line and interval helpers used by the Merger.
double distance_to_line(const Vec2& p, const Segment2& line);
// Gap between the two segments' extents projected onto `axis`; 0 if they overlap.
double projected_gap(const Segment2& a, const Segment2& b, const Vec2& axis);

}  // namespace pseiki
