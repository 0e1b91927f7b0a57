#pragma once

// Self-location round trips in the hallway world: render at a perturbed true
// pose, take the longest projected edges as correct matches, locate from the
// unperturbed rendering pose. Shared by the envelope calibration tool and the
// acceptance checks so both draw from the same distribution.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "pseiki/self_location.hpp"
#include "pseiki/sim_world.hpp"

namespace roundtrip {

struct Trial {
  pseiki::Pose2 render;
  pseiki::Pose2 truth;
  pseiki::Pose2 recovered;
  double position_error = 0.0;  // m
  double heading_error = 0.0;   // rad
};

class Sampler {
 public:
  Sampler(const pseiki::HallwayModel& model, const pseiki::CameraModel& cam, std::uint64_t seed)
      : model_(model), cam_(cam), world_(model.world_edges()), rng_(seed) {
    for (const auto& s : model.wall_segments()) {
      for (const auto& p : {s.a, s.b}) {
        lo_ = lo_.cwiseMin(p);
        hi_ = hi_.cwiseMax(p);
      }
    }
  }

  // One trial with `n_matches` matches and endpoint noise `sigma_px`.
  // Configurations whose noise-free matches cannot give a complete fix are
  // redrawn.
  Trial draw(double sigma_px, std::size_t n_matches = 6) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    while (true) {
      const pseiki::Vec2 p(std::uniform_real_distribution<double>(lo_.x(), hi_.x())(rng_),
                           std::uniform_real_distribution<double>(lo_.y(), hi_.y())(rng_));
      if (!model_.in_free_space(p) || model_.clearance(p) < 0.8) continue;
      const pseiki::Pose2 render(p.x(), p.y(), pseiki::kPi * u(rng_));
      const pseiki::Pose2 truth(render.x + 0.5 * u(rng_), render.y + 0.5 * u(rng_),
                                render.heading + 10.0 * pseiki::kPi / 180.0 * u(rng_));
      if (!model_.in_free_space(truth.position())) continue;

      auto edges = pseiki::render_expectation(model_, truth, cam_);
      std::stable_sort(edges.begin(), edges.end(),
                       [](const auto& a, const auto& b) { return a.image.length() > b.image.length(); });
      if (edges.size() < n_matches) continue;
      edges.resize(n_matches);

      std::vector<pseiki::EdgeMatch> exact;
      for (const auto& e : edges) {
        const auto& w = world_[e.source];
        exact.push_back({e.image, w.segment, 1.0, w.horizontal});
      }
      if (pseiki::self_locate(exact, render, cam_).insufficient()) continue;

      std::vector<pseiki::EdgeMatch> noisy = exact;
      if (sigma_px > 0.0) {
        for (auto& m : noisy) {
          const pseiki::Vec2 a = m.image_segment.p0() + sigma_px * pseiki::Vec2(noise(rng_), noise(rng_));
          const pseiki::Vec2 b = m.image_segment.p1() + sigma_px * pseiki::Vec2(noise(rng_), noise(rng_));
          if ((a - b).norm() < 1e-6) continue;
          m.image_segment = pseiki::Segment2(a, b);
        }
      }
      Trial t;
      t.render = render;
      t.truth = truth;
      t.recovered = pseiki::self_locate(noisy, render, cam_).pose;
      t.position_error = (t.recovered.position() - truth.position()).norm();
      t.heading_error = std::abs(pseiki::normalize_angle(t.recovered.heading - truth.heading));
      return t;
    }
  }

 private:
  const pseiki::HallwayModel& model_;
  pseiki::CameraModel cam_;
  std::vector<pseiki::WorldEdge> world_;
  std::mt19937_64 rng_;
  pseiki::Vec2 lo_{1e300, 1e300};
  pseiki::Vec2 hi_{-1e300, -1e300};
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace roundtrip
