#include <cmath>

#include "doctest.h"
#include "pseiki/errors.hpp"
#include "pseiki/fixtures.hpp"
#include "pseiki/knowledge_sources.hpp"
#include "pseiki/self_location.hpp"
#include "pseiki/sim_world.hpp"
#include "support/gen.hpp"
#include "support/round_trip.hpp"

using namespace pseiki;

namespace {

constexpr double kDeg = kPi / 180.0;
constexpr double kMount = 1.3;
constexpr double kTilt = 5.0 * kDeg;

CameraModel camera(double tilt = kTilt) { return CameraModel::forward_looking(400.0, 640, 480, kMount, tilt); }

// Hand pinhole projection, written out from the mount geometry rather than
// through CameraModel.
Vec2 project(const Pose2& pose, const Vec3& w, double tilt = kTilt) {
  const double c = std::cos(pose.heading), s = std::sin(pose.heading);
  auto to_world = [&](const Vec3& r) { return Vec3(c * r.x() - s * r.y(), s * r.x() + c * r.y(), r.z()); };
  const Vec3 centre(pose.x, pose.y, kMount);
  const Vec3 axis = to_world({std::cos(tilt), 0.0, -std::sin(tilt)});
  const Vec3 right = to_world({0.0, -1.0, 0.0});
  const Vec3 down = to_world({-std::sin(tilt), 0.0, -std::cos(tilt)});
  const Vec3 d = w - centre;
  REQUIRE(d.dot(axis) > 0.0);
  return {320.0 + 400.0 * d.dot(right) / d.dot(axis), 240.0 + 400.0 * d.dot(down) / d.dot(axis)};
}

EdgeMatch match_at(const Pose2& pose, const Vec3& a, const Vec3& b, double belief = 1.0) {
  return {Segment2(project(pose, a), project(pose, b)), {a, b}, belief, std::abs(a.z() - b.z()) < 1e-12};
}

// Corridor along +x between y = -2 and y = 2, 2.5 m high, end wall at x = 12.
struct Corridor {
  Vec3 left_floor0{3.0, 2.0, 0.0}, left_floor1{10.0, 2.0, 0.0};
  Vec3 right_top0{3.0, -2.0, 2.5}, right_top1{10.0, -2.0, 2.5};
  Vec3 end_floor0{12.0, -2.0, 0.0}, end_floor1{12.0, 2.0, 0.0};
  Vec3 jamb0{6.0, 2.0, 0.0}, jamb1{6.0, 2.0, 2.0};

  std::vector<EdgeMatch> matches(const Pose2& p) const {
    return {match_at(p, left_floor0, left_floor1), match_at(p, right_top0, right_top1),
            match_at(p, end_floor0, end_floor1), match_at(p, jamb0, jamb1)};
  }
};

LocateOptions permissive() {
  LocateOptions o;
  o.min_segment_px = 0.0;
  o.min_plane_tilt = 0.0;
  o.max_pair_condition = kMaxPairCondition;
  o.trim_mads = 0.0;
  return o;
}

std::vector<EdgeMatch> jitter(std::vector<EdgeMatch> ms, testgen::Gen& g, double sigma) {
  for (auto& m : ms) {
    const Vec2 a = m.image_segment.p0() + Vec2(g.uniform(-sigma, sigma), g.uniform(-sigma, sigma));
    const Vec2 b = m.image_segment.p1() + Vec2(g.uniform(-sigma, sigma), g.uniform(-sigma, sigma));
    m.image_segment = Segment2(a, b);
  }
  return ms;
}

}  // namespace

TEST_CASE("hand projection agrees with the camera model") {
  const auto cam = camera();
  const Pose2 p(1.0, 0.5, 0.3);
  const Vec3 w(8.0, 2.0, 0.7);
  const Vec2 a = project(p, w);
  const Vec2 b = cam.project_camera(cam.to_camera(p, w));
  CHECK((a - b).norm() < 1e-9);
}

TEST_CASE("Pose2 normalizes its heading") {
  CHECK(Pose2(0, 0, 3 * kPi).heading == doctest::Approx(kPi));
  CHECK(Pose2(0, 0, -kPi).heading == doctest::Approx(kPi));
  CHECK(normalize_angle(-kPi / 2 - 2 * kPi) == doctest::Approx(-kPi / 2));
}

TEST_CASE("orientation_from_edge: exact at the true pose") {
  const Corridor c;
  const Pose2 truth(1.0, 0.3, 0.0);
  for (const auto& m : c.matches(truth)) {
    if (!m.is_horizontal) continue;
    CHECK(std::abs(orientation_from_edge(m, camera(), 0.0) - truth.heading) < 1e-9);
  }
}

TEST_CASE("orientation_from_edge: heading perturbed by 3 degrees is recovered") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 3.0 * kDeg);
  for (const auto& m : c.matches(truth)) {
    if (!m.is_horizontal) continue;
    CHECK(std::abs(orientation_from_edge(m, camera(), 0.0) - truth.heading) < 1e-9);
  }
}

TEST_CASE("orientation_from_edge: the prior picks the sign") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 0.4);
  const auto m = match_at(truth, c.left_floor0, c.left_floor1);
  CHECK(std::abs(orientation_from_edge(m, camera(), 0.3) - 0.4) < 1e-9);
  // A prior on the far side selects the pi-rotated solution.
  CHECK(std::abs(normalize_angle(orientation_from_edge(m, camera(), 0.4 + kPi) - (0.4 + kPi))) < 1e-9);
}

TEST_CASE("orientation_from_edge: errors") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 0.0);
  CHECK_THROWS_AS(orientation_from_edge(match_at(truth, c.jamb0, c.jamb1), camera(), 0.0), std::invalid_argument);
  // A level camera sees a line at its own height along the horizon;
  // the interpretation plane is horizontal.
  const Vec3 a(8.0, 1.0, kMount), b(8.0, -1.0, kMount);
  const EdgeMatch flat{Segment2(project(truth, a, 0.0), project(truth, b, 0.0)), {a, b}, 1.0, true};
  CHECK_THROWS_AS(orientation_from_edge(flat, camera(0.0), 0.0), DegenerateGeometry);
}

TEST_CASE("property: heading is invariant under swapping endpoints") {
  testgen::Gen g(31);
  const Corridor c;
  for (int i = 0; i < 200; ++i) {
    const Pose2 p(g.uniform(0.0, 2.0), g.uniform(-1.0, 1.0), g.uniform(-0.3, 0.3));
    auto m = match_at(p, c.left_floor0, c.left_floor1);
    m = jitter({m}, g, 2.0)[0];
    EdgeMatch swapped = m;
    swapped.image_segment = Segment2(m.image_segment.p1(), m.image_segment.p0());
    REQUIRE(std::abs(orientation_from_edge(m, camera(), 0.0) - orientation_from_edge(swapped, camera(), 0.0)) < 1e-12);
  }
}

TEST_CASE("position_from_pair: exact at the true pose with perpendicular edges") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 0.0);
  const auto ms = c.matches(truth);
  const Vec2 p = position_from_pair(ms[0], ms[2], truth.heading, camera());
  CHECK((p - truth.position()).norm() < 1e-9);
}

TEST_CASE("position_from_pair: offset from odometry is recovered") {
  const Corridor c;
  const Pose2 believed(1.0, 0.0, 0.05);
  const Pose2 truth(believed.x + 0.3, believed.y - 0.2, believed.heading);
  const auto ms = c.matches(truth);
  for (auto [i, j] : {std::pair{0, 2}, {1, 2}, {0, 3}, {2, 3}}) {
    const Vec2 p = position_from_pair(ms[static_cast<std::size_t>(i)], ms[static_cast<std::size_t>(j)], truth.heading,
                                      camera());
    CHECK((p - truth.position()).norm() < 1e-9);
  }
}

TEST_CASE("position_from_pair: parallel model lines") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 0.0);
  const auto ms = c.matches(truth);
  CHECK_THROWS_AS(position_from_pair(ms[0], ms[1], 0.0, camera()), NearParallel);
  CHECK(pair_condition(ms[0], ms[1], 0.0, camera()) > kMaxPairCondition);
  CHECK(pair_condition(ms[0], ms[2], 0.0, camera()) < 10.0);
}

TEST_CASE("self_locate: one horizontal edge and a perpendicular pair give the exact pose") {
  const Corridor c;
  const Pose2 truth(1.4, -0.3, 2.0 * kDeg);
  const std::vector<EdgeMatch> ms{match_at(truth, c.left_floor0, c.left_floor1), match_at(truth, c.jamb0, c.jamb1),
                                  match_at(truth, c.end_floor0, c.end_floor1)};
  const auto r = self_locate(ms, Pose2(1.0, 0.0, 0.0), camera());
  CHECK_FALSE(r.insufficient());
  CHECK((r.pose.position() - truth.position()).norm() < 1e-9);
  CHECK(std::abs(r.pose.heading - truth.heading) < 1e-9);
}

TEST_CASE("self_locate: no matches returns the prior with flags") {
  const Pose2 prior(3.0, 1.0, 0.2);
  const auto r = self_locate({}, prior, camera());
  CHECK(r.heading_from_prior);
  CHECK(r.position_from_prior);
  CHECK(r.insufficient());
  CHECK(r.pose.x == prior.x);
  CHECK(r.pose.y == prior.y);
  CHECK(r.pose.heading == prior.heading);
}

TEST_CASE("self_locate: vertical edges alone leave the heading at the prior") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 0.0);
  const std::vector<EdgeMatch> ms{match_at(truth, c.jamb0, c.jamb1)};
  const auto r = self_locate(ms, truth, camera());
  CHECK(r.heading_from_prior);
  CHECK(r.position_from_prior);
}

TEST_CASE("property: equal beliefs give the unweighted means") {
  testgen::Gen g(32);
  const Corridor c;
  const auto cam = camera();
  for (int i = 0; i < 100; ++i) {
    const Pose2 truth(g.uniform(0.0, 2.0), g.uniform(-1.0, 1.0), g.uniform(-0.2, 0.2));
    auto ms = jitter(c.matches(truth), g, 1.5);
    for (auto& m : ms) m.belief = 0.7;
    double sx = 0.0, sy = 0.0;
    for (const auto& m : ms) {
      if (!m.is_horizontal) continue;
      const double h = orientation_from_edge(m, cam, 0.0);
      sx += std::cos(h);
      sy += std::sin(h);
    }
    const double heading = std::atan2(sy, sx);
    Vec2 sum = Vec2::Zero();
    int pairs = 0;
    for (std::size_t a = 0; a < ms.size(); ++a) {
      for (std::size_t b = a + 1; b < ms.size(); ++b) {
        try {
          sum += position_from_pair(ms[a], ms[b], heading, cam);
          ++pairs;
        } catch (const Error&) {
        }
      }
    }
    const auto r = self_locate(ms, Pose2(truth.x, truth.y, 0.0), cam, permissive());
    REQUIRE(pairs > 0);
    REQUIRE(std::abs(r.pose.heading - heading) < 1e-12);
    REQUIRE((r.pose.position() - sum / pairs).norm() < 1e-9);
  }
}

TEST_CASE("property: scaling every belief leaves the fix unchanged") {
  testgen::Gen g(33);
  const Corridor c;
  for (int i = 0; i < 100; ++i) {
    const Pose2 truth(g.uniform(0.0, 2.0), g.uniform(-1.0, 1.0), g.uniform(-0.2, 0.2));
    auto ms = jitter(c.matches(truth), g, 1.5);
    for (auto& m : ms) m.belief = g.uniform(0.5, 1.0);
    auto scaled = ms;
    const double k = g.uniform(0.2, 0.95);
    for (auto& m : scaled) m.belief *= k;
    for (const auto& opts : {LocateOptions{}, permissive()}) {
      const auto a = self_locate(ms, truth, camera(), opts);
      const auto b = self_locate(scaled, truth, camera(), opts);
      REQUIRE(std::abs(a.pose.heading - b.pose.heading) < 1e-12);
      REQUIRE((a.pose.position() - b.pose.position()).norm() < 1e-9);
    }
  }
}

TEST_CASE("trimming drops a mislabelled heading edge") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 0.0);
  auto ms = c.matches(truth);
  // Three more good horizontal edges and one whose model edge is rotated.
  ms.push_back(match_at(truth, {3.0, -2.0, 0.0}, {10.0, -2.0, 0.0}));
  ms.push_back(match_at(truth, {3.0, 2.0, 2.5}, {10.0, 2.0, 2.5}));
  EdgeMatch wrong = match_at(truth, {4.0, 2.0, 0.0}, {9.0, 2.0, 0.0});
  wrong.model_edge = {{4.0, 2.0, 0.0}, {9.0, 2.6, 0.0}};
  ms.push_back(wrong);
  const auto trimmed = self_locate(ms, truth, camera());
  const auto kept = self_locate(ms, truth, camera(), permissive());
  CHECK(std::abs(trimmed.pose.heading) < 1e-9);
  CHECK(std::abs(kept.pose.heading) > 1e-3);
  CHECK(trimmed.heading_edges < kept.heading_edges);
}

TEST_CASE("short image segments are gated out") {
  const Corridor c;
  const Pose2 truth(1.0, 0.0, 0.0);
  const auto ms = c.matches(truth);
  LocateOptions o;
  o.min_segment_px = 1e5;
  const auto r = self_locate(ms, truth, camera(), o);
  CHECK(r.heading_from_prior);
  CHECK(r.position_from_prior);
}

TEST_CASE("property: noise-free round trip within 0.5 m and 10 degrees") {
  const auto wf = load_world(std::string(PSEIKI_DATA_DIR) + "/hallway.world");
  roundtrip::Sampler sampler(*wf.model, wf.camera, 34);
  for (int i = 0; i < 100; ++i) {
    const auto t = sampler.draw(0.0);
    REQUIRE(t.position_error <= 1e-6);
    REQUIRE(t.heading_error <= 1e-6);
  }
}

namespace {

// Two complete data chains over one model chain; the scene nodes carry
// masses 0.6 and 0.4 on the model scene.
struct TwoScenes {
  Blackboard bb;
  std::vector<WorldEdge> world;
  std::vector<ElementId> first, second;
  ElementId strong{}, weak{};
};

void believe(Blackboard& bb, ElementId id, Label label, double mass) {
  BeliefState b(FrameOfDiscernment({label, kUnmatched}));
  b.add(SimpleEvidenceFunction::make(label, mass, 0.0), {EvidenceKind::Initial, id, label});
  apply_belief(bb, id, b);
}

TwoScenes two_scenes() {
  TwoScenes t;
  const Corridor c;
  t.world = {{{c.left_floor0, c.left_floor1}, true}, {{c.end_floor0, c.end_floor1}, true}};
  const ElementId m0 = add_edge(t.bb, Panel::Model, Segment2({0, 300}, {300, 250}), 0);
  const ElementId m1 = add_edge(t.bb, Panel::Model, Segment2({300, 250}, {600, 250}), 1);
  const ElementId mf = add_aggregate(t.bb, Panel::Model, Level::Face, {m0, m1});
  const ElementId mo = add_aggregate(t.bb, Panel::Model, Level::Object, {mf});
  const ElementId ms = add_aggregate(t.bb, Panel::Model, Level::Scene, {mo});
  auto chain = [&](double scene_mass, double edge_mass, std::vector<ElementId>& edges) {
    const ElementId d0 = add_edge(t.bb, Panel::Data, Segment2({0, 302}, {300, 252}));
    const ElementId d1 = add_edge(t.bb, Panel::Data, Segment2({300, 252}, {600, 252}));
    believe(t.bb, d0, m0, edge_mass);
    believe(t.bb, d1, m1, edge_mass);
    const ElementId f = add_aggregate(t.bb, Panel::Data, Level::Face, {d0, d1});
    const ElementId o = add_aggregate(t.bb, Panel::Data, Level::Object, {f});
    const ElementId s = add_aggregate(t.bb, Panel::Data, Level::Scene, {o});
    believe(t.bb, f, mf, 0.9);
    believe(t.bb, o, mo, 0.9);
    believe(t.bb, s, ms, scene_mass);
    edges = {d0, d1};
    return s;
  };
  t.weak = chain(0.4, 0.97, t.second);
  t.strong = chain(0.6, 0.95, t.first);
  return t;
}

}  // namespace

TEST_CASE("extract_matches follows the most believed scene") {
  auto t = two_scenes();
  CHECK(best_scene(t.bb) == t.strong);
  const auto ms = extract_matches(t.bb, 0.9, t.world);
  REQUIRE(ms.size() == 2);
  for (const auto& m : ms) CHECK(m.belief == doctest::Approx(0.95));
  CHECK(ms[0].model_edge.p0 == t.world[0].segment.p0);
  CHECK(ms[1].model_edge.p0 == t.world[1].segment.p0);
  CHECK(extract_matches(t.bb, 1.01, t.world).empty());
}

TEST_CASE("extract_matches without a believed scene") {
  Blackboard bb;
  add_edge(bb, Panel::Model, Segment2({0, 0}, {10, 0}), 0);
  CHECK_THROWS_AS(extract_matches(bb, 0.9, {}), NoSceneNode);
}
