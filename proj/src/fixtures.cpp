#include "pseiki/fixtures.hpp"

#include <cmath>

namespace pseiki {

ElementId add_edge(Blackboard& bb, Panel panel, const Segment2& seg, std::optional<std::uint32_t> source,
                   std::optional<double> strength) {
  BlackboardElement v0, v1, e;
  v0.panel = v1.panel = e.panel = panel;
  v0.level = v1.level = Level::Vertex;
  v0.geometry = seg.p0();
  v1.geometry = seg.p1();
  e.level = Level::Edge;
  e.geometry = seg;
  e.source = source;
  if (panel == Panel::Data) e.value = strength.value_or(1.0);
  e.children = {bb.insert_element(std::move(v0)), bb.insert_element(std::move(v1))};
  return bb.insert_element(std::move(e));
}

ElementId add_aggregate(Blackboard& bb, Panel panel, Level level, std::vector<ElementId> children,
                        std::optional<std::uint32_t> source) {
  BlackboardElement e;
  e.panel = panel;
  e.level = level;
  e.children = std::move(children);
  e.source = source;
  return bb.insert_element(std::move(e));
}

std::optional<ElementId> CubeFixture::generator(ElementId data_edge) const {
  auto it = truth.find(data_edge);
  return it == truth.end() ? std::nullopt : it->second;
}

CubeFixture make_cube_fixture(const CubeOptions& options) {
  CubeFixture fx;
  const Vec2 o(320.0, 240.0);
  const double r = 100.0;
  const double c = r * std::cos(kPi / 6), s = r * std::sin(kPi / 6);
  const Vec2 p1 = o + Vec2(0, -r), p2 = o + Vec2(c, -s), p3 = o + Vec2(c, s);
  const Vec2 p4 = o + Vec2(0, r), p5 = o + Vec2(-c, s), p6 = o + Vec2(-c, -s);

  const std::vector<std::pair<std::string, Segment2>> edges{
      {"E_A", {p6, p1}}, {"E_B", {p1, p2}}, {"E_C", {o, p2}}, {"E_D", {o, p6}}, {"E_E", {p2, p3}},
      {"E_F", {o, p4}},  {"E_G", {p4, p5}}, {"E_H", {p3, p4}}, {"E_I", {p5, p6}}};
  std::uint32_t src = 0;
  for (const auto& [name, seg] : edges) {
    fx.model[name] = add_edge(fx.bb, Panel::Model, seg, src++);
    fx.model_segments.emplace(name, seg);
  }
  auto kids = [&](std::initializer_list<const char*> names) {
    std::vector<ElementId> out;
    for (const char* n : names) out.push_back(fx.model.at(n));
    return out;
  };
  fx.model["F_A"] = add_aggregate(fx.bb, Panel::Model, Level::Face, kids({"E_A", "E_B", "E_C", "E_D"}), 0);
  fx.model["F_B"] = add_aggregate(fx.bb, Panel::Model, Level::Face, kids({"E_C", "E_E", "E_F", "E_H"}), 1);
  fx.model["F_C"] = add_aggregate(fx.bb, Panel::Model, Level::Face, kids({"E_D", "E_F", "E_G", "E_I"}), 2);
  fx.model["cube"] = add_aggregate(fx.bb, Panel::Model, Level::Object, kids({"F_A", "F_B", "F_C"}), 0);
  fx.model["scene"] = add_aggregate(fx.bb, Panel::Model, Level::Scene, kids({"cube"}), 0);

  const double th = options.rotation_deg * kPi / 180.0;
  const Eigen::Matrix2d rot = (Eigen::Matrix2d() << std::cos(th), -std::sin(th), std::sin(th), std::cos(th)).finished();
  auto seen = [&](const Vec2& p) -> Vec2 { return o + rot * (p - o) + options.offset; };
  auto seen_seg = [&](const Segment2& m, double t0, double t1) {
    const Vec2 a = m.p0() + t0 * (m.p1() - m.p0());
    const Vec2 b = m.p0() + t1 * (m.p1() - m.p0());
    return Segment2(seen(a), seen(b));
  };
  auto add_data = [&](const Segment2& seg, std::optional<ElementId> gen) {
    const ElementId id = add_edge(fx.bb, Panel::Data, seg);
    fx.data_edges.push_back(id);
    fx.truth[id] = gen;
  };

  for (const auto& [name, seg] : edges) {
    if (name == "E_E" && options.fragment) {
      add_data(seen_seg(seg, 0.00, 0.30), fx.model.at(name));
      add_data(seen_seg(seg, 0.34, 0.64), fx.model.at(name));
      add_data(seen_seg(seg, 0.68, 1.00), fx.model.at(name));
    } else {
      add_data(seen_seg(seg, 0.0, 1.0), fx.model.at(name));
    }
  }
  if (options.duplicate) {
    const Segment2& b = fx.model_segments.at(options.duplicate_of);
    const Vec2 normal(-b.direction().y(), b.direction().x());
    const Segment2 twin = seen_seg(b, 0.05, 0.95);
    add_data(Segment2(twin.p0() + 3.0 * normal, twin.p1() + 3.0 * normal), fx.model.at(options.duplicate_of));
  }
  if (options.spurious) {
    const Vec2 a = seen(o + Vec2(35.0, 45.0));
    add_data(Segment2(a, a + 25.0 * Vec2(std::cos(0.17), std::sin(0.17))), std::nullopt);
  }
  return fx;
}

}  // namespace pseiki
