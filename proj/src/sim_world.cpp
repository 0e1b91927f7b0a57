#include "pseiki/sim_world.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "pseiki/errors.hpp"
#include "pseiki/fixtures.hpp"

namespace pseiki {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Parameters (u on p->q, v on a->b) of a proper intersection.
std::optional<std::pair<double, double>> intersect(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  const Vec2 r = q - p, s = b - a;
  const double den = cross2(r, s);
  if (std::abs(den) < 1e-15) return std::nullopt;
  const double u = cross2(a - p, s) / den;
  const double v = cross2(a - p, r) / den;
  if (u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0) return std::nullopt;
  return std::pair{u, v};
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 d = b - a;
  const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * d)).norm();
}

double segment_distance(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  if (intersect(p, q, a, b)) return 0.0;
  double d = std::min(point_segment_distance(a, p, q), point_segment_distance(b, p, q));
  if ((q - p).squaredNorm() > 0.0) return d;
  return std::min(d, point_segment_distance(p, a, b));
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      inside = !inside;
    }
  }
  return inside;
}

Vec3 lift(const Vec2& p, double z) { return {p.x(), p.y(), z}; }

}  // namespace

HallwayModel::HallwayModel(std::vector<WallPolyline> walls, std::vector<WallFeature> features, double wall_height_m)
    : walls_(std::move(walls)), features_(std::move(features)), wall_height_(wall_height_m) {
  if (!(wall_height_ > 0.0)) throw ConfigError("wall height must be positive");
  if (walls_.empty()) throw ConfigError("world has no walls");

  std::vector<std::vector<std::size_t>> seg_of(walls_.size());
  for (std::size_t p = 0; p < walls_.size(); ++p) {
    const auto& w = walls_[p];
    if (w.points.size() < 2 || (w.closed && w.points.size() < 3)) throw ConfigError("wall polyline too short");
    const std::size_t n = w.closed ? w.points.size() : w.points.size() - 1;
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2& a = w.points[k];
      const Vec2& b = w.points[(k + 1) % w.points.size()];
      if ((b - a).norm() < 1e-9) throw ConfigError(fmt::format("wall {} segment {} has zero length", p, k));
      seg_of[p].push_back(segments_.size());
      segments_.push_back({a, b, p, k});
    }
  }
  // Non-adjacent segments must not touch.
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    for (std::size_t j = i + 1; j < segments_.size(); ++j) {
      const auto& s = segments_[i];
      const auto& t = segments_[j];
      const bool same_line = s.polyline == t.polyline;
      const std::size_t count = seg_of[s.polyline].size();
      const bool adjacent = same_line && (t.index == s.index + 1 ||
                                          (walls_[s.polyline].closed && s.index == 0 && t.index == count - 1));
      if (adjacent) continue;
      if (intersect(s.a, s.b, t.a, t.b)) {
        throw ConfigError(fmt::format("walls intersect: polyline {} segment {} and polyline {} segment {}",
                                      s.polyline, s.index, t.polyline, t.index));
      }
    }
  }

  const double h = wall_height_;
  auto add_edge3 = [&](Vec3 a, Vec3 b, bool horizontal, std::size_t face, std::vector<std::size_t> hosts) {
    edges_.push_back({{a, b}, horizontal, face, std::move(hosts)});
    faces_[face].edges.push_back(edges_.size() - 1);
  };
  for (std::size_t p = 0; p < walls_.size(); ++p) {
    const auto& ids = seg_of[p];
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const WallSegment& s = segments_[ids[k]];
      faces_.push_back({{}, ids[k]});
      const std::size_t f = faces_.size() - 1;
      add_edge3(lift(s.a, 0.0), lift(s.b, 0.0), true, f, {ids[k]});
      add_edge3(lift(s.a, h), lift(s.b, h), true, f, {ids[k]});
      std::vector<std::size_t> hosts{ids[k]};
      if (k > 0) hosts.push_back(ids[k - 1]);
      if (k == 0 && walls_[p].closed) hosts.push_back(ids.back());
      if (k > 0 || walls_[p].closed) add_edge3(lift(s.a, 0.0), lift(s.a, h), false, f, hosts);
      if (k == 0 && !walls_[p].closed) add_edge3(lift(s.a, 0.0), lift(s.a, h), false, f, {ids[k]});
      if (k + 1 == ids.size() && !walls_[p].closed) add_edge3(lift(s.b, 0.0), lift(s.b, h), false, f, {ids[k]});
    }
  }
  for (const auto& ft : features_) {
    if (ft.polyline >= walls_.size() || ft.segment >= seg_of[ft.polyline].size()) {
      throw ConfigError("feature refers to a missing wall segment");
    }
    const std::size_t sid = seg_of[ft.polyline][ft.segment];
    const WallSegment& s = segments_[sid];
    const double len = (s.b - s.a).norm();
    if (ft.offset_m < 0.0 || ft.width_m <= 0.0 || ft.offset_m + ft.width_m > len) {
      throw ConfigError("feature does not fit its wall segment");
    }
    if (ft.bottom_m < 0.0 || ft.top_m <= ft.bottom_m || ft.top_m > h) throw ConfigError("feature height out of range");
    const Vec2 dir = (s.b - s.a) / len;
    const Vec2 a = s.a + ft.offset_m * dir;
    const Vec2 b = a + ft.width_m * dir;
    faces_.push_back({{}, sid});
    const std::size_t f = faces_.size() - 1;
    add_edge3(lift(a, ft.bottom_m), lift(a, ft.top_m), false, f, {sid});
    add_edge3(lift(b, ft.bottom_m), lift(b, ft.top_m), false, f, {sid});
    add_edge3(lift(a, ft.top_m), lift(b, ft.top_m), true, f, {sid});
    if (ft.kind == FeatureKind::Board || ft.bottom_m > 0.0) add_edge3(lift(a, ft.bottom_m), lift(b, ft.bottom_m), true, f, {sid});
  }
}

std::vector<WorldEdge> HallwayModel::world_edges() const {
  std::vector<WorldEdge> out;
  for (const auto& e : edges_) out.push_back({e.segment, e.horizontal});
  return out;
}

bool HallwayModel::in_free_space(const Vec2& p) const {
  bool first = true;
  for (const auto& w : walls_) {
    if (!w.closed) continue;
    const bool inside = point_in_polygon(p, w.points);
    if (first ? !inside : inside) return false;
    first = false;
  }
  return true;
}

double HallwayModel::clearance(const Vec2& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : segments_) d = std::min(d, point_segment_distance(p, s.a, s.b));
  return d;
}

double HallwayModel::path_clearance(const Vec2& a, const Vec2& b) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& s : segments_) d = std::min(d, segment_distance(a, b, s.a, s.b));
  return d;
}

// ---------------------------------------------------------------------------
// World file

namespace {

std::vector<std::string> tokens_of(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

double to_number(const std::string& text, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "not a number: '" + text + "'");
  }
  if (used != text.size() || !std::isfinite(v)) throw ParseError(line, "not a number: '" + text + "'");
  return v;
}

std::size_t to_index(const std::string& text, std::size_t line) {
  const double v = to_number(text, line);
  if (v < 0.0 || v != std::floor(v)) throw ParseError(line, "not an index: '" + text + "'");
  return static_cast<std::size_t>(v);
}

// key=value arguments; every key must be consumed.
class Args {
 public:
  Args(const std::vector<std::string>& toks, std::size_t first, std::size_t line) : line_(line) {
    for (std::size_t i = first; i < toks.size(); ++i) {
      const auto eq = toks[i].find('=');
      if (eq == std::string::npos || eq == 0) throw ParseError(line, "expected key=value, got '" + toks[i] + "'");
      if (!values_.emplace(toks[i].substr(0, eq), toks[i].substr(eq + 1)).second) {
        throw ParseError(line, "duplicate key '" + toks[i].substr(0, eq) + "'");
      }
    }
  }
  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    auto it = values_.find(key);
    if (it == values_.end()) {
      if (fallback) return *fallback;
      throw ParseError(line_, "missing key '" + key + "'");
    }
    const double v = to_number(it->second, line_);
    values_.erase(it);
    return v;
  }
  std::size_t index(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ParseError(line_, "missing key '" + key + "'");
    const std::size_t v = to_index(it->second, line_);
    values_.erase(it);
    return v;
  }
  void done() const {
    if (!values_.empty()) throw ParseError(line_, "unknown key '" + values_.begin()->first + "'");
  }

 private:
  std::map<std::string, std::string> values_;
  std::size_t line_;
};

}  // namespace

WorldFile parse_world(std::istream& in) {
  WorldFile wf;
  std::vector<WallPolyline> walls;
  std::vector<WallFeature> features;
  std::optional<double> wall_height;
  bool have_camera = false, have_start = false;
  std::size_t last_line = 0;
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    last_line = line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto toks = tokens_of(raw);
    if (toks.empty()) continue;
    const std::string& kw = toks[0];
    if (kw == "wall_height_m") {
      if (toks.size() != 2) throw ParseError(line, "wall_height_m takes one value");
      wall_height = to_number(toks[1], line);
      if (!(*wall_height > 0.0)) throw ParseError(line, "wall height must be positive");
    } else if (kw == "polyline") {
      if (toks.size() < 2 || (toks[1] != "open" && toks[1] != "closed")) {
        throw ParseError(line, "polyline needs 'open' or 'closed'");
      }
      WallPolyline w;
      w.closed = toks[1] == "closed";
      for (std::size_t i = 2; i < toks.size(); ++i) {
        const auto comma = toks[i].find(',');
        if (comma == std::string::npos) throw ParseError(line, "expected x,y point, got '" + toks[i] + "'");
        w.points.emplace_back(to_number(toks[i].substr(0, comma), line), to_number(toks[i].substr(comma + 1), line));
      }
      if (w.points.size() < (w.closed ? 3u : 2u)) throw ParseError(line, "polyline has too few points");
      walls.push_back(std::move(w));
    } else if (kw == "door" || kw == "board") {
      Args a(toks, 1, line);
      WallFeature f;
      f.kind = kw == "door" ? FeatureKind::Door : FeatureKind::Board;
      f.polyline = a.index("polyline");
      f.segment = a.index("segment");
      f.offset_m = a.number("offset_m");
      f.width_m = a.number("width_m");
      if (f.kind == FeatureKind::Door) {
        f.bottom_m = 0.0;
        f.top_m = a.number("height_m");
      } else {
        f.bottom_m = a.number("bottom_m");
        f.top_m = a.number("top_m");
      }
      a.done();
      features.push_back(f);
    } else if (kw == "camera") {
      Args a(toks, 1, line);
      const double f = a.number("focal_px");
      const double w = a.number("width_px");
      const double h = a.number("height_px");
      const double mount = a.number("mount_height_m");
      const double tilt = a.number("tilt_deg");
      a.done();
      if (f <= 0.0 || w < 1.0 || h < 1.0 || mount <= 0.0) throw ParseError(line, "camera parameters out of range");
      wf.camera = CameraModel::forward_looking(f, static_cast<int>(w), static_cast<int>(h), mount, tilt * kPi / 180.0);
      have_camera = true;
    } else if (kw == "start") {
      Args a(toks, 1, line);
      const double x = a.number("x_m"), y = a.number("y_m"), hd = a.number("heading_deg");
      a.done();
      wf.start = Pose2(x, y, hd * kPi / 180.0);
      have_start = true;
    } else if (kw == "waypoint") {
      Args a(toks, 1, line);
      const double x = a.number("x_m"), y = a.number("y_m");
      a.done();
      wf.waypoints.emplace_back(x, y);
    } else {
      throw ParseError(line, "unknown keyword '" + kw + "'");
    }
  }
  if (!wall_height) throw ParseError(last_line + 1, "missing wall_height_m");
  if (walls.empty()) throw ParseError(last_line + 1, "missing polyline");
  if (!have_camera) throw ParseError(last_line + 1, "missing camera");
  if (!have_start) throw ParseError(last_line + 1, "missing start");
  wf.model.emplace(std::move(walls), std::move(features), *wall_height);
  if (!wf.model->in_free_space(wf.start.position())) throw ConfigError("start pose is outside the hallways");
  for (const auto& w : wf.waypoints) {
    if (!wf.model->in_free_space(w)) throw ConfigError(fmt::format("waypoint ({}, {}) is outside the hallways", w.x(), w.y()));
  }
  return wf;
}

WorldFile load_world(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open world file '" + path + "'");
  return parse_world(in);
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

bool sight_blocked(const HallwayModel& model, const Vec2& eye, const Vec2& target,
                   const std::vector<std::size_t>& hosts) {
  const auto& segs = model.wall_segments();
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (std::find(hosts.begin(), hosts.end(), i) != hosts.end()) continue;
    const auto hit = intersect(eye, target, segs[i].a, segs[i].b);
    if (hit && hit->first > 1e-9 && hit->first < 1.0 - 1e-7) return true;
  }
  return false;
}

// Liang-Barsky clip of p0->p1 to [0, w] x [0, h].
std::optional<std::pair<Vec2, Vec2>> clip_to_image(Vec2 p0, Vec2 p1, double w, double h) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 d = p1 - p0;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {p0.x(), w - p0.x(), p0.y(), h - p0.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return std::nullopt;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
    if (t0 > t1) return std::nullopt;
  }
  return std::pair{p0 + t0 * d, p0 + t1 * d};
}

std::optional<Segment2> project_segment(const CameraModel& cam, const Pose2& pose, const Vec3& a, const Vec3& b,
                                        const RenderOptions& options) {
  Vec3 ca = cam.to_camera(pose, a);
  Vec3 cb = cam.to_camera(pose, b);
  const double near = options.near_m;
  if (ca.z() < near && cb.z() < near) return std::nullopt;
  if (ca.z() < near) ca = ca + (near - ca.z()) / (cb.z() - ca.z()) * (cb - ca);
  if (cb.z() < near) cb = cb + (near - cb.z()) / (ca.z() - cb.z()) * (ca - cb);
  const auto clipped = clip_to_image(cam.project_camera(ca), cam.project_camera(cb), cam.width, cam.height);
  if (!clipped) return std::nullopt;
  if ((clipped->second - clipped->first).norm() < options.min_length_px) return std::nullopt;
  return Segment2(clipped->first, clipped->second);
}

// Visible parameter intervals of a plan-view segment a->b seen from `eye`.
std::vector<std::pair<double, double>> visible_intervals(const HallwayModel& model, const Vec2& eye, const Vec2& a,
                                                         const Vec2& b, const std::vector<std::size_t>& hosts,
                                                         int samples) {
  auto visible = [&](double t) { return !sight_blocked(model, eye, a + t * (b - a), hosts); };
  auto refine = [&](double lo, double hi, bool lo_visible) {
    for (int i = 0; i < 40; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (visible(mid) == lo_visible) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return lo_visible ? lo : hi;
  };
  std::vector<std::pair<double, double>> out;
  const int n = std::max(samples, 2);
  double start = 0.0;  // of the open visible run, when prev is true
  double prev_t = 0.0;
  bool prev = false;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    const bool v = visible(t);
    if (i > 0 && v != prev) {
      const double edge = refine(prev_t, t, prev);
      if (v) {
        start = edge;
      } else {
        out.emplace_back(start, edge);
      }
    } else if (i == 0 && v) {
      start = 0.0;
    }
    prev = v;
    prev_t = t;
  }
  if (prev) out.emplace_back(start, 1.0);
  return out;
}

}  // namespace

std::vector<ProjectedEdge> render_expectation(const HallwayModel& model, const Pose2& pose, const CameraModel& cam,
                                              const RenderOptions& options) {
  if (!model.in_free_space(pose.position())) {
    throw PoseOutsideWorld(fmt::format("pose ({:.3f}, {:.3f}) is outside the hallways", pose.x, pose.y));
  }
  const Vec3 c = cam.centre_world(pose);
  const Vec2 eye(c.x(), c.y());
  std::vector<ProjectedEdge> out;
  const auto& edges = model.edges();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const HallEdge& e = edges[i];
    const Vec3& p0 = e.segment.p0;
    const Vec3& p1 = e.segment.p1;
    std::vector<std::pair<double, double>> spans;
    if (e.horizontal) {
      spans = visible_intervals(model, eye, p0.head<2>(), p1.head<2>(), e.hosts, options.visibility_samples);
    } else if (!sight_blocked(model, eye, p0.head<2>(), e.hosts)) {
      spans.emplace_back(0.0, 1.0);
    }
    for (const auto& [t0, t1] : spans) {
      if (t1 - t0 < 1e-9) continue;
      const auto seg = project_segment(cam, pose, p0 + t0 * (p1 - p0), p0 + t1 * (p1 - p0), options);
      if (seg) out.push_back({*seg, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(e.face)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Perception

void PerceptionNoise::validate() const {
  for (double p : {frag_prob, drop_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("perception probabilities must lie in [0, 1]");
  }
  if (!(spurious_rate >= 0.0) || !(endpoint_sigma_px >= 0.0)) throw ConfigError("perception noise must be >= 0");
}

std::vector<PerceivedEdge> synthesize_perception(const HallwayModel& model, const Pose2& true_pose,
                                                 const CameraModel& cam, const PerceptionNoise& noise,
                                                 const RenderOptions& options) {
  noise.validate();
  const auto truth = render_expectation(model, true_pose, cam, options);
  std::mt19937_64 rng(noise.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 1.0);
  auto jittered = [&](const Vec2& p) {
    if (noise.endpoint_sigma_px == 0.0) return p;
    const double dx = jitter(rng), dy = jitter(rng);
    return Vec2(p + noise.endpoint_sigma_px * Vec2(dx, dy));
  };
  auto emit = [&](std::vector<PerceivedEdge>& out, const Vec2& a, const Vec2& b, std::optional<std::uint32_t> src) {
    const Vec2 ja = jittered(a), jb = jittered(b);
    if ((jb - ja).norm() < 4.0) return;
    out.push_back({Segment2(ja, jb), src});
  };

  std::vector<PerceivedEdge> out;
  for (const auto& e : truth) {
    if (unit(rng) < noise.drop_prob) continue;
    const Vec2 a = e.image.p0(), b = e.image.p1();
    if (unit(rng) < noise.frag_prob) {
      const int pieces = 2 + static_cast<int>(unit(rng) * 3.0);
      const double len = (b - a).norm();
      std::vector<double> cuts{0.0};
      for (int i = 1; i < pieces; ++i) cuts.push_back(static_cast<double>(i) / pieces + 0.15 * (unit(rng) - 0.5) / pieces);
      cuts.push_back(1.0);
      for (int i = 0; i < pieces; ++i) {
        const double gap = (2.0 + 4.0 * unit(rng)) / len;
        const double t0 = cuts[static_cast<std::size_t>(i)] + (i > 0 ? 0.5 * gap : 0.0);
        const double t1 = cuts[static_cast<std::size_t>(i) + 1] - (i + 1 < pieces ? 0.5 * gap : 0.0);
        if (t1 > t0) emit(out, a + t0 * (b - a), a + t1 * (b - a), e.source);
      }
    } else {
      emit(out, a, b, e.source);
    }
  }

  // Glare on the floor ahead of the robot.
  int glare = static_cast<int>(std::floor(noise.spurious_rate));
  if (unit(rng) < noise.spurious_rate - glare) ++glare;
  const Mat3 rot = true_pose.rotation();
  for (int g = 0; g < glare; ++g) {
    const double ahead = 2.0 + 6.0 * unit(rng);
    const double side = 3.0 * (unit(rng) - 0.5);
    const double angle = kPi * unit(rng);
    const double length = 12.0 + 28.0 * unit(rng);
    const Vec3 w = Vec3(true_pose.x, true_pose.y, 0.0) + rot * Vec3(ahead, side, 0.0);
    if (!model.in_free_space(w.head<2>())) continue;
    const Vec3 cpt = cam.to_camera(true_pose, w);
    if (cpt.z() < options.near_m) continue;
    const Vec2 centre = cam.project_camera(cpt);
    const Vec2 half = 0.5 * length * Vec2(std::cos(angle), std::sin(angle));
    const auto clipped = clip_to_image(centre - half, centre + half, cam.width, cam.height);
    if (!clipped || (clipped->second - clipped->first).norm() < 4.0) continue;
    out.push_back({Segment2(clipped->first, clipped->second), std::nullopt});
  }
  return out;
}

Blackboard make_blackboard(std::span<const ProjectedEdge> expectation, std::span<const PerceivedEdge> perception) {
  Blackboard bb;
  std::vector<std::uint32_t> face_order;
  std::map<std::uint32_t, std::vector<ElementId>> face_edges;
  for (const auto& e : expectation) {
    const ElementId id = add_edge(bb, Panel::Model, e.image, e.source);
    if (!face_edges.count(e.face)) face_order.push_back(e.face);
    face_edges[e.face].push_back(id);
  }
  if (!face_order.empty()) {
    std::vector<ElementId> faces;
    for (std::uint32_t f : face_order) faces.push_back(add_aggregate(bb, Panel::Model, Level::Face, face_edges[f], f));
    const ElementId object = add_aggregate(bb, Panel::Model, Level::Object, faces, 0);
    add_aggregate(bb, Panel::Model, Level::Scene, {object}, 0);
  }
  for (const auto& e : perception) add_edge(bb, Panel::Data, e.image);
  return bb;
}

// ---------------------------------------------------------------------------
// Odometry and navigation

void OdometryNoise::validate() const {
  if (!(turn_sigma_deg >= 0.0 && distance_sigma_frac >= 0.0 && heading_bias_max_deg >= 0.0)) {
    throw ConfigError("odometry noise must be >= 0");
  }
}

Odometry::Odometry(const OdometryNoise& noise) : noise_(noise), rng_(noise.seed) {
  noise_.validate();
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bias_ = noise_.heading_bias_max_deg * kPi / 180.0 * u(rng_);
}

Pose2 Odometry::turn(const Pose2& truth, double commanded_rad) {
  const double sigma = noise_.turn_sigma_deg * kPi / 180.0 * std::abs(commanded_rad) / (kPi / 4.0);
  double err = 0.0;
  if (sigma > 0.0) err = std::normal_distribution<double>(0.0, sigma)(rng_);
  return Pose2(truth.x, truth.y, truth.heading + commanded_rad + err);
}

Pose2 Odometry::straight(const Pose2& truth, double commanded_m) {
  double scale = 1.0;
  if (noise_.distance_sigma_frac > 0.0) {
    scale += std::uniform_real_distribution<double>(-noise_.distance_sigma_frac, noise_.distance_sigma_frac)(rng_);
  }
  const double dir = truth.heading + bias_;
  return Pose2(truth.x + scale * commanded_m * std::cos(dir), truth.y + scale * commanded_m * std::sin(dir),
               truth.heading);
}

void NavigationConfig::validate() const {
  if (!(relocate_every_m > 0.0)) throw ConfigError("relocate_every_m must be positive");
  if (max_legs < 1) throw ConfigError("max_legs must be >= 1");
  if (!(goal_tolerance_m > 0.0 && arrive_tolerance_m > 0.0 && robot_radius_m >= 0.0)) {
    throw ConfigError("navigation tolerances must be positive");
  }
  if (!(retention_threshold >= 0.0)) throw ConfigError("retention threshold must be >= 0");
  if (!(via_tolerance_m > 0.0 && min_leg_m > 0.0 && drift_allowance_deg >= 0.0 && safety_margin_m >= 0.0)) {
    throw ConfigError("leg planning parameters out of range");
  }
  if (match_passes < 1) throw ConfigError("match_passes must be >= 1");
  scheduler.validate();
}

const char* to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::GoalReached: return "GoalReached";
    case Outcome::MissedGoal: return "MissedGoal";
    case Outcome::WallCollision: return "WallCollision";
    case Outcome::LegBudgetExceeded: return "LegBudgetExceeded";
    case Outcome::Lost: return "Lost";
  }
  return "?";
}

namespace {

std::string pose_text(const Pose2& p) {
  return fmt::format("{:.4f} {:.4f} {:.3f}", p.x, p.y, p.heading * 180.0 / kPi);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string NavigationLog::text() const {
  std::string out = "# step true(x y deg) believed(x y deg) fix(x y deg) matches flags\n";
  for (const auto& l : legs) {
    std::string flags;
    if (!l.fixed) flags += "nofix,";
    if (l.heading_from_prior) flags += "heading_prior,";
    if (l.position_from_prior) flags += "position_prior,";
    if (flags.empty()) flags = "-";
    else flags.pop_back();
    out += fmt::format("{} {} {} {} {} {}\n", l.step, pose_text(l.truth), pose_text(l.believed), pose_text(l.fix),
                       l.matches, flags);
  }
  out += fmt::format("outcome {} final {}\n", to_string(outcome), pose_text(final_truth));
  return out;
}

NavigationLog navigate(const HallwayModel& model, const CameraModel& cam, std::span<const Vec2> waypoints,
                       const Pose2& start, const OdometryNoise& odo, const PerceptionNoise& pnoise,
                       const NavigationConfig& config) {
  config.validate();
  pnoise.validate();
  if (!model.in_free_space(start.position())) throw PoseOutsideWorld("start pose is outside the hallways");
  for (const Vec2& wp : waypoints) {
    if (!model.in_free_space(wp)) throw PoseOutsideWorld("waypoint is outside the hallways");
  }
  Odometry odometry(odo);
  const auto world = model.world_edges();
  NavigationLog log;
  Pose2 truth = start, believed = start;
  log.true_path.push_back(truth);
  log.believed_path.push_back(believed);

  // The last waypoint needs the believed position within arrive_tolerance_m;
  // an intermediate one is passed once the progress along its course segment
  // leaves less than via_tolerance_m.
  auto reached = [&](std::size_t k) {
    if (k + 1 == waypoints.size()) return (waypoints[k] - believed.position()).norm() <= config.arrive_tolerance_m;
    const Vec2 from = k == 0 ? start.position() : waypoints[k - 1];
    const Vec2 seg = waypoints[k] - from;
    const double len = seg.norm();
    if (len < 1e-9) return true;
    return len - (believed.position() - from).dot(seg / len) <= config.via_tolerance_m;
  };
  // Worst-case clearance of a leg of length `d` along `bearing` when the
  // motion may drift by up to the configured allowance.
  auto leg_clearance = [&](double bearing, double d) {
    const double u = config.drift_allowance_deg * kPi / 180.0;
    double c = std::numeric_limits<double>::infinity();
    for (double b : {bearing - u, bearing, bearing + u}) {
      const Vec2 end = believed.position() + d * Vec2(std::cos(b), std::sin(b));
      c = std::min(c, model.in_free_space(end) ? model.path_clearance(believed.position(), end) : 0.0);
    }
    return c;
  };
  auto turn_towards = [&](const Vec2& target) {
    const Vec2 to = target - believed.position();
    const double bearing = std::atan2(to.y(), to.x());
    truth = odometry.turn(truth, normalize_angle(bearing - believed.heading));
    believed = Pose2(believed.x, believed.y, bearing);
  };

  // Matching rounds at one stop; returns the new believed pose.
  auto locate = [&](LegRecord& rec) {
    rec.heading_from_prior = rec.position_from_prior = true;
    PerceptionNoise frame_noise = pnoise;
    frame_noise.seed = mix(pnoise.seed, static_cast<std::uint64_t>(rec.step));
    const auto perception = synthesize_perception(model, truth, cam, frame_noise, config.render);
    auto match_at = [&](const Pose2& pose) {
      const auto expectation = render_expectation(model, pose, cam, config.render);
      Blackboard bb = make_blackboard(expectation, perception);
      run(bb, config.scheduler);
      std::vector<EdgeMatch> matches;
      try {
        matches = extract_matches(bb, config.retention_threshold, world);
      } catch (const NoSceneNode&) {
      }
      return matches;
    };

    Pose2 current = believed;
    std::vector<EdgeMatch> matches;
    if (config.search_offsets.empty()) {
      if (model.in_free_space(current.position())) matches = match_at(current);
    } else {
      double best = -1.0;
      for (const Pose2& off : config.search_offsets) {
        const double c = std::cos(believed.heading), s = std::sin(believed.heading);
        const Pose2 pose(believed.x + c * off.x - s * off.y, believed.y + s * off.x + c * off.y,
                         believed.heading + off.heading);
        if (!model.in_free_space(pose.position())) continue;
        auto m = match_at(pose);
        // Only offsets that support a complete fix compete.
        if (self_locate(m, pose, cam, config.locate).insufficient()) continue;
        double score = 0.0;
        for (const auto& e : m) score += e.belief;
        if (score > best) {
          best = score;
          current = pose;
          matches = std::move(m);
        }
      }
    }
    for (int pass = 0; pass < config.match_passes; ++pass) {
      if (pass > 0) {
        if (!model.in_free_space(current.position())) break;
        matches = match_at(current);
      }
      const LocateResult fix = self_locate(matches, current, cam, config.locate);
      // A fix that lands inside a wall is discarded.
      if ((fix.heading_from_prior && fix.position_from_prior) || !model.in_free_space(fix.pose.position())) {
        if (pass == 0) current = believed;
        break;
      }
      rec.matches = matches.size();
      rec.heading_from_prior = fix.heading_from_prior;
      rec.position_from_prior = fix.position_from_prior;
      rec.fixed = true;
      current = fix.pose;
    }
    return current;
  };

  std::size_t k = 0;
  while (k < waypoints.size() && reached(k)) ++k;
  int step = 0;
  while (k < waypoints.size()) {
    if (step >= config.max_legs) {
      log.outcome = Outcome::LegBudgetExceeded;
      log.final_truth = truth;
      return log;
    }
    // Aim at a point on the course one leg ahead, in equal legs of at most
    // relocate_every_m, so the robot returns to the centre line and no stop
    // ends just short of the waypoint.
    const Vec2 from = k == 0 ? start.position() : waypoints[k - 1];
    const Vec2 to = waypoints[k];
    const double seg_len = (to - from).norm();
    Vec2 aim = to;
    if (seg_len > 1e-9) {
      const Vec2 dir = (to - from) / seg_len;
      const double along = std::clamp((believed.position() - from).dot(dir), 0.0, seg_len);
      const double left = seg_len - along;
      if (left > config.via_tolerance_m) aim = from + (along + left / std::ceil(left / config.relocate_every_m)) * dir;
    }
    turn_towards(aim);
    double dist = std::min((aim - believed.position()).norm(), config.relocate_every_m);
    while (dist > config.min_leg_m &&
           leg_clearance(believed.heading, dist) < config.robot_radius_m + config.safety_margin_m) {
      dist = std::max(config.min_leg_m, 0.8 * dist);
    }
    const Pose2 next = odometry.straight(truth, dist);
    believed = Pose2(believed.x + dist * std::cos(believed.heading), believed.y + dist * std::sin(believed.heading),
                     believed.heading);

    LegRecord rec;
    rec.step = step++;
    if (model.path_clearance(truth.position(), next.position()) < config.robot_radius_m ||
        !model.in_free_space(next.position())) {
      rec.truth = next;
      rec.believed = rec.fix = believed;
      log.legs.push_back(rec);
      log.true_path.push_back(next);
      log.believed_path.push_back(believed);
      log.outcome = Outcome::WallCollision;
      log.final_truth = next;
      return log;
    }
    truth = next;

    // At the stop the camera is turned towards where the robot goes next, so
    // a corner stop looks down the following corridor.
    if (reached(k) && k + 1 < waypoints.size()) turn_towards(waypoints[k + 1]);
    rec.truth = truth;
    rec.believed = believed;
    rec.fix = believed;
    if (config.self_locate && model.in_free_space(believed.position())) {
      rec.fix = locate(rec);
      believed = rec.fix;
    }
    while (k < waypoints.size() && reached(k)) ++k;
    log.legs.push_back(rec);
    log.true_path.push_back(truth);
    log.believed_path.push_back(believed);
  }
  log.final_truth = truth;
  log.outcome = !waypoints.empty() && (truth.position() - waypoints.back()).norm() > config.goal_tolerance_m
                    ? Outcome::MissedGoal
                    : Outcome::GoalReached;
  return log;
}

namespace {

NavigationLog run_episode(const EpisodeSpec& spec, std::uint64_t seed) {
  OdometryNoise odo = spec.odometry;
  odo.seed = seed;
  PerceptionNoise pn = spec.perception;
  pn.seed = mix(seed, 0x5eed);
  return navigate(*spec.model, spec.camera, spec.waypoints, spec.start, odo, pn, spec.config);
}

}  // namespace

std::vector<NavigationLog> run_episodes_serial(const EpisodeSpec& spec, std::span<const std::uint64_t> seeds) {
  std::vector<NavigationLog> out;
  out.reserve(seeds.size());
  for (std::uint64_t s : seeds) out.push_back(run_episode(spec, s));
  return out;
}

std::vector<NavigationLog> run_episodes_parallel(const EpisodeSpec& spec, std::span<const std::uint64_t> seeds,
                                                 int jobs) {
  std::vector<NavigationLog> out(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  const long n = static_cast<long>(seeds.size());
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (long i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = run_episode(spec, seeds[static_cast<std::size_t>(i)]);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG

std::string plan_svg(const HallwayModel& model, std::span<const Vec2> waypoints, const NavigationLog& log) {
  double minx = 1e300, miny = 1e300, maxx = -1e300, maxy = -1e300;
  for (const auto& s : model.wall_segments()) {
    for (const Vec2& p : {s.a, s.b}) {
      minx = std::min(minx, p.x());
      miny = std::min(miny, p.y());
      maxx = std::max(maxx, p.x());
      maxy = std::max(maxy, p.y());
    }
  }
  const double scale = 30.0, pad = 1.0;
  auto px = [&](const Vec2& p) { return Vec2((p.x() - minx + pad) * scale, (maxy - p.y() + pad) * scale); };
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      (maxx - minx + 2 * pad) * scale, (maxy - miny + 2 * pad) * scale);
  for (const auto& s : model.wall_segments()) {
    const Vec2 a = px(s.a), b = px(s.b);
    out += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\" stroke-width=\"3\"/>\n",
                       a.x(), a.y(), b.x(), b.y());
  }
  auto path = [&](const std::vector<Pose2>& poses, const char* colour) {
    std::string pts;
    for (const auto& p : poses) {
      const Vec2 q = px(p.position());
      pts += fmt::format("{:.1f},{:.1f} ", q.x(), q.y());
    }
    return fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", pts, colour);
  };
  out += path(log.true_path, "red");
  out += path(log.believed_path, "blue");
  for (const auto& w : waypoints) {
    const Vec2 q = px(w);
    out += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"5\" fill=\"green\"/>\n", q.x(), q.y());
  }
  out += "</svg>\n";
  return out;
}

std::string match_svg(const CameraModel& cam, std::span<const ProjectedEdge> expectation,
                      std::span<const PerceivedEdge> perception, std::span<const EdgeMatch> winners) {
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      cam.width, cam.height);
  auto line = [](const Segment2& s, const char* colour, double width) {
    return fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-width=\"{}\"/>\n",
                       s.p0().x(), s.p0().y(), s.p1().x(), s.p1().y(), colour, width);
  };
  for (const auto& e : expectation) out += line(e.image, "blue", 1);
  for (const auto& e : perception) out += line(e.image, "gray", 1);
  for (const auto& m : winners) out += line(m.image_segment, "red", 2);
  out += "</svg>\n";
  return out;
}

}  // namespace pseiki
