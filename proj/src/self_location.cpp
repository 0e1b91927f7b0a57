#include "pseiki/self_location.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "pseiki/errors.hpp"

namespace pseiki {

double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

Pose2::Pose2(double x_m, double y_m, double heading_rad) : x(x_m), y(y_m), heading(normalize_angle(heading_rad)) {}

Mat3 Pose2::rotation() const { return Eigen::AngleAxisd(heading, Vec3::UnitZ()).toRotationMatrix(); }

CameraModel CameraModel::forward_looking(double focal_px, int width_px, int height_px, double height_m,
                                         double tilt_rad) {
  CameraModel cam;
  cam.focal_length = focal_px;
  cam.width = width_px;
  cam.height = height_px;
  cam.principal_point = {0.5 * width_px, 0.5 * height_px};
  // Columns: camera x (right), y (down), z (optical axis) expressed in R.
  Mat3 level;
  level.col(0) = -Vec3::UnitY();
  level.col(1) = -Vec3::UnitZ();
  level.col(2) = Vec3::UnitX();
  // Pitch down about R's y axis.
  cam.mount_rotation = Eigen::AngleAxisd(tilt_rad, Vec3::UnitY()).toRotationMatrix() * level;
  cam.mount_translation = {0.0, 0.0, height_m};
  cam.validate();
  return cam;
}

void CameraModel::validate() const {
  if (!(focal_length > 0.0)) throw std::invalid_argument("focal length must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("image size must be positive");
  if ((mount_rotation.transpose() * mount_rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw std::invalid_argument("mount rotation is not orthonormal");
  }
}

Vec3 CameraModel::ray(const Vec2& p) const {
  const Vec3 c((p.x() - principal_point.x()) / focal_length, (p.y() - principal_point.y()) / focal_length, 1.0);
  return (mount_rotation * c).normalized();
}

Vec3 CameraModel::centre_world(const Pose2& pose) const {
  return Vec3(pose.x, pose.y, 0.0) + pose.rotation() * mount_translation;
}

Mat3 CameraModel::rotation_world(const Pose2& pose) const { return pose.rotation() * mount_rotation; }

Vec3 CameraModel::to_camera(const Pose2& pose, const Vec3& w) const {
  return rotation_world(pose).transpose() * (w - centre_world(pose));
}

Vec2 CameraModel::project_camera(const Vec3& c) const {
  return principal_point + focal_length * Vec2(c.x() / c.z(), c.y() / c.z());
}

namespace {

void collect_edges(const Blackboard& bb, ElementId id, std::vector<ElementId>& out, std::set<ElementId>& seen) {
  const auto& e = bb.element(id);
  if (!e.alive) return;
  if (e.level == Level::Edge) {
    if (seen.insert(id).second) out.push_back(id);
    return;
  }
  for (ElementId c : e.children) collect_edges(bb, c, out, seen);
}

// Interpretation-plane normal in R.
Vec3 plane_normal(const EdgeMatch& m, const CameraModel& cam) {
  const Vec3 n = cam.ray(m.image_segment.p0()).cross(cam.ray(m.image_segment.p1()));
  const double len = n.norm();
  if (len < 1e-12) throw DegenerateGeometry("image segment collapses to a single ray");
  return n / len;
}

}  // namespace

std::optional<ElementId> best_scene(const Blackboard& bb) {
  std::optional<ElementId> best;
  double best_mass = -1.0;
  for (ElementId id : bb.at(Panel::Data, Level::Scene)) {
    const auto& e = bb.element(id);
    if (!e.label || !e.belief) continue;
    const double m = e.belief->mass(*e.label);
    if (m > best_mass) {
      best_mass = m;
      best = id;
    }
  }
  return best;
}

std::vector<ElementId> descendant_edges(const Blackboard& bb, ElementId node) {
  std::vector<ElementId> edges;
  std::set<ElementId> seen;
  collect_edges(bb, node, edges, seen);
  return edges;
}

std::vector<EdgeMatch> extract_matches(const Blackboard& bb, double threshold, std::span<const WorldEdge> world) {
  const auto best = best_scene(bb);
  if (!best) throw NoSceneNode("no believed scene-level data node");
  std::vector<EdgeMatch> out;
  for (ElementId id : descendant_edges(bb, *best)) {
    const auto& e = bb.element(id);
    if (!e.label || !e.belief) continue;
    const double mass = e.belief->mass(*e.label);
    if (mass < threshold) continue;
    const auto& model = bb.element(*e.label);
    if (!model.source || *model.source >= world.size()) continue;
    const WorldEdge& w = world[*model.source];
    out.push_back({*e.segment(), w.segment, mass, w.horizontal});
  }
  return out;
}

double orientation_from_edge(const EdgeMatch& m, const CameraModel& cam, double prior_heading) {
  if (!m.is_horizontal) throw std::invalid_argument("orientation needs a horizontal model edge");
  const Vec3 n = plane_normal(m, cam);
  const Vec3 d_r = n.cross(Vec3::UnitZ());
  if (d_r.norm() < 1e-9) throw DegenerateGeometry("interpretation plane is horizontal");
  const Vec3 d_w = m.model_edge.p1 - m.model_edge.p0;
  const double theta = std::atan2(d_w.y(), d_w.x()) - std::atan2(d_r.y(), d_r.x());
  const double a = normalize_angle(theta);
  const double b = normalize_angle(theta + kPi);
  return std::abs(normalize_angle(a - prior_heading)) <= std::abs(normalize_angle(b - prior_heading)) ? a : b;
}

namespace {

struct PairSystem {
  Eigen::Matrix2d a;
  Vec2 b;
  double cond;
};

PairSystem pair_system(const EdgeMatch& m1, const EdgeMatch& m2, double heading, const CameraModel& cam) {
  const Pose2 at_origin(0.0, 0.0, heading);
  const Mat3 rot = at_origin.rotation();
  const Vec3 offset = rot * cam.mount_translation;  // camera centre minus robot origin, W
  PairSystem s;
  int row = 0;
  for (const EdgeMatch* m : {&m1, &m2}) {
    // n . (P - (t + offset)) = 0 for a point P of the model line, t = (x, y, 0).
    const Vec3 n = rot * plane_normal(*m, cam);
    const Vec3 p = 0.5 * (m->model_edge.p0 + m->model_edge.p1);
    const Vec2 coeff(n.x(), n.y());
    const double scale = coeff.norm();
    if (scale < 1e-12) {
      s.cond = std::numeric_limits<double>::infinity();
      return s;
    }
    s.a.row(row) = coeff.transpose() / scale;
    s.b(row) = n.dot(p - offset) / scale;
    ++row;
  }
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(s.a);
  const auto sv = svd.singularValues();
  s.cond = sv(1) > 0.0 ? sv(0) / sv(1) : std::numeric_limits<double>::infinity();
  return s;
}

}  // namespace

double pair_condition(const EdgeMatch& m1, const EdgeMatch& m2, double heading, const CameraModel& cam) {
  return pair_system(m1, m2, heading, cam).cond;
}

Vec2 position_from_pair(const EdgeMatch& m1, const EdgeMatch& m2, double heading, const CameraModel& cam) {
  const PairSystem s = pair_system(m1, m2, heading, cam);
  if (!(s.cond <= kMaxPairCondition)) throw NearParallel(s.cond);
  return s.a.inverse() * s.b;
}

namespace {

struct Weighted {
  double value;
  double weight;
};

double weighted_median(std::vector<Weighted> v) {
  std::sort(v.begin(), v.end(), [](const Weighted& a, const Weighted& b) { return a.value < b.value; });
  double total = 0.0;
  for (const auto& w : v) total += w.weight;
  double acc = 0.0;
  for (const auto& w : v) {
    acc += w.weight;
    if (acc >= 0.5 * total) return w.value;
  }
  return v.back().value;
}

// Keep mask for residuals |r_i| against a MAD-scaled bound.
std::vector<bool> inliers(const std::vector<double>& residual, const std::vector<double>& weight, double mads,
                          double floor) {
  std::vector<bool> keep(residual.size(), true);
  if (mads <= 0.0 || residual.size() < 3) return keep;
  std::vector<Weighted> abs_res;
  for (std::size_t i = 0; i < residual.size(); ++i) abs_res.push_back({std::abs(residual[i]), weight[i]});
  const double bound = std::max(mads * 1.4826 * weighted_median(abs_res), floor);
  for (std::size_t i = 0; i < residual.size(); ++i) keep[i] = std::abs(residual[i]) <= bound;
  return keep;
}

}  // namespace

LocateResult self_locate(std::span<const EdgeMatch> matches, const Pose2& prior, const CameraModel& cam,
                         const LocateOptions& options) {
  LocateResult result;
  std::vector<const EdgeMatch*> usable;
  for (const auto& m : matches) {
    if (m.belief > 0.0 && m.image_segment.length() >= options.min_segment_px) usable.push_back(&m);
  }

  std::vector<double> headings, hweights;
  for (const EdgeMatch* m : usable) {
    if (!m->is_horizontal) continue;
    try {
      if (plane_normal(*m, cam).cross(Vec3::UnitZ()).norm() < options.min_plane_tilt) continue;
      headings.push_back(orientation_from_edge(*m, cam, prior.heading));
      hweights.push_back(m->belief);
    } catch (const DegenerateGeometry&) {
    }
  }
  double heading = prior.heading;
  if (!headings.empty()) {
    // Residuals about the weighted median, measured on the circle.
    std::vector<Weighted> unwrapped;
    for (std::size_t i = 0; i < headings.size(); ++i) {
      unwrapped.push_back({normalize_angle(headings[i] - prior.heading), hweights[i]});
    }
    const double centre = prior.heading + weighted_median(unwrapped);
    std::vector<double> residual;
    for (double h : headings) residual.push_back(normalize_angle(h - centre));
    const auto keep = inliers(residual, hweights, options.trim_mads, options.trim_floor_rad);
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < headings.size(); ++i) {
      if (!keep[i]) continue;
      sx += hweights[i] * std::cos(headings[i]);
      sy += hweights[i] * std::sin(headings[i]);
      ++result.heading_edges;
    }
    if (std::hypot(sx, sy) >= 1e-12) heading = std::atan2(sy, sx);
    else result.heading_edges = 0;
  }
  result.heading_from_prior = result.heading_edges == 0;

  std::vector<Vec2> positions;
  std::vector<double> pweights;
  for (std::size_t i = 0; i < usable.size(); ++i) {
    for (std::size_t j = i + 1; j < usable.size(); ++j) {
      try {
        if (pair_condition(*usable[i], *usable[j], heading, cam) > options.max_pair_condition) continue;
        positions.push_back(position_from_pair(*usable[i], *usable[j], heading, cam));
        pweights.push_back(usable[i]->belief * usable[j]->belief);
      } catch (const NearParallel&) {
      } catch (const DegenerateGeometry&) {
      }
    }
  }
  Vec2 position = prior.position();
  if (!positions.empty()) {
    std::vector<Weighted> xs, ys;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      xs.push_back({positions[i].x(), pweights[i]});
      ys.push_back({positions[i].y(), pweights[i]});
    }
    const Vec2 centre(weighted_median(xs), weighted_median(ys));
    std::vector<double> residual;
    for (const Vec2& p : positions) residual.push_back((p - centre).norm());
    const auto keep = inliers(residual, pweights, options.trim_mads, options.trim_floor_m);
    Vec2 sum = Vec2::Zero();
    double wsum = 0.0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      if (!keep[i]) continue;
      sum += pweights[i] * positions[i];
      wsum += pweights[i];
      ++result.position_pairs;
    }
    position = sum / wsum;
  }
  result.position_from_prior = result.position_pairs == 0;
  result.pose = Pose2(position.x(), position.y(), heading);
  return result;
}

}  // namespace pseiki
