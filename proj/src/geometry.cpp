#include "pseiki/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pseiki/errors.hpp"

namespace pseiki {

Segment2::Segment2(Vec2 p0, Vec2 p1) : p0_(std::move(p0)), p1_(std::move(p1)) {
  if (!((p1_ - p0_).norm() > 0.0)) throw DegenerateGeometry("zero-length segment");
}

double Segment2::angle() const {
  const Vec2 d = p1_ - p0_;
  return wrap_half_turn(std::atan2(d.y(), d.x()));
}

double wrap_half_turn(double angle) {
  double a = std::fmod(angle, kPi);
  if (a < 0.0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a;
}

double undirected_angle_distance(double a, double b) {
  const double d = wrap_half_turn(a - b);
  return std::min(d, kPi - d);
}

void MetricParams::validate() const {
  if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(sigma_rot > 0.0)) throw std::invalid_argument("sigma_rot must be positive");
  if (!(sigma_trans > 0.0)) throw std::invalid_argument("sigma_trans must be positive");
}

SimDissim similarity(const Segment2& data, const Segment2& model, const MetricParams& params) {
  const double s_angle = std::max(0.0, 1.0 - undirected_angle_distance(data.angle(), model.angle()) / (kPi / 2));
  const double s_dist = std::max(0.0, 1.0 - (data.midpoint() - model.midpoint()).norm() / params.r_max);
  const double ld = data.length();
  const double lm = model.length();
  const double s_len = std::min(ld, lm) / std::max(ld, lm);
  const double s = s_angle * s_dist * s_len;
  return {params.alpha * s, params.alpha * (1.0 - s)};
}

PairTransform pair_transform(const Segment2& a, const Segment2& b) {
  return {wrap_half_turn(b.angle() - a.angle()), b.midpoint() - a.midpoint(), 0.5 * (a.length() + b.length())};
}

double relation_agreement(const Segment2& d1, const Segment2& d2, const Segment2& m1, const Segment2& m2,
                          const MetricParams& params) {
  const PairTransform td = pair_transform(d1, d2);
  const PairTransform tm = pair_transform(m1, m2);
  const double rot = undirected_angle_distance(td.dtheta, tm.dtheta);
  const double trans = (td.dt / td.scale_ref - tm.dt / tm.scale_ref).norm();
  return std::exp(-rot / params.sigma_rot) * std::exp(-trans / params.sigma_trans);
}

SimDissim rel_similarity(const Segment2& d1, const Segment2& d2, const Segment2& m1, const Segment2& m2,
                         const MetricParams& params) {
  const double r = relation_agreement(d1, d2, m1, m2, params);
  return {params.alpha * r, params.alpha * (1.0 - r)};
}

double distance_to_line(const Vec2& p, const Segment2& line) {
  const Vec2 d = line.direction();
  const Vec2 v = p - line.p0();
  return std::abs(d.x() * v.y() - d.y() * v.x());
}

double projected_gap(const Segment2& a, const Segment2& b, const Vec2& axis) {
  const double a0 = a.p0().dot(axis), a1 = a.p1().dot(axis);
  const double b0 = b.p0().dot(axis), b1 = b.p1().dot(axis);
  const double alo = std::min(a0, a1), ahi = std::max(a0, a1);
  const double blo = std::min(b0, b1), bhi = std::max(b0, b1);
  return std::max(0.0, std::max(alo, blo) - std::min(ahi, bhi));
}

}  // namespace pseiki
