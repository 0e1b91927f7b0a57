#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "pseiki/fixtures.hpp"
#include "pseiki/kernels.hpp"
#include "pseiki/scheduler.hpp"
#include "support/gen.hpp"

using namespace pseiki;

namespace {

CubeOptions congruent() {
  CubeOptions o;
  o.offset = Vec2::Zero();
  o.rotation_deg = 0.0;
  o.fragment = false;
  o.duplicate = false;
  o.spurious = false;
  return o;
}

std::optional<ElementId> best_scene(const Blackboard& bb) {
  std::optional<ElementId> best;
  double mass = -1.0;
  for (ElementId id : bb.at(Panel::Data, Level::Scene)) {
    const auto& e = bb.element(id);
    if (!e.label || !e.belief) continue;
    const double m = e.belief->mass(*e.label);
    if (m > mass) {
      mass = m;
      best = id;
    }
  }
  return best;
}

void collect_edges(const Blackboard& bb, ElementId id, std::set<ElementId>& out) {
  const auto& e = bb.element(id);
  if (e.level == Level::Edge) {
    out.insert(id);
    return;
  }
  for (ElementId c : e.children) collect_edges(bb, c, out);
}

Ksar make_ksar(std::uint32_t id, KsKind ks, ElementId target, std::uint64_t seq) {
  Ksar k;
  k.id = id;
  k.ks = ks;
  k.target = target;
  k.created_seq = seq;
  return k;
}

// Every alive data edge carries its generator's label. Merger output has no
// recorded generator; it inherits the one of a dead piece lying on it.
void check_truth(const CubeFixture& fx) {
  for (ElementId id : fx.bb.at(Panel::Data, Level::Edge)) {
    const auto& e = fx.bb.element(id);
    std::optional<ElementId> gen = fx.generator(id);
    if (!fx.truth.count(id)) {
      for (const auto& [d, g] : fx.truth) {
        const auto& piece = fx.bb.element(d);
        if (!piece.alive && g && distance_to_line(piece.segment()->midpoint(), *e.segment()) < 1.0) gen = g;
      }
    }
    if (gen) CHECK(e.label == gen);
  }
}

}  // namespace

TEST_CASE("cube fixture: terminal state has believed scene hypotheses with correct labels") {
  auto fx = make_cube_fixture();
  const auto report = run(fx.bb, {});
  CHECK_FALSE(report.budget_exceeded);
  const auto scene = best_scene(fx.bb);
  REQUIRE(scene);
  CHECK(fx.bb.at(Panel::Data, Level::Scene).size() >= 1);
  std::set<ElementId> edges;
  collect_edges(fx.bb, *scene, edges);
  std::size_t truthful = 0;
  for (ElementId id : edges) {
    const auto& e = fx.bb.element(id);
    const auto gen = fx.generator(id);
    if (fx.truth.count(id) && !gen) continue;
    if (gen) {
      CHECK(e.label == gen);
      ++truthful;
    }
  }
  CHECK(truthful >= 8);
  check_truth(fx);
}

TEST_CASE("empty data panel terminates at once") {
  Blackboard bb;
  add_edge(bb, Panel::Model, Segment2({0, 0}, {10, 0}));
  const std::string before = bb.dump();
  const auto report = run(bb, {});
  CHECK(report.firings == 0);
  CHECK(report.events.empty());
  CHECK(bb.dump() == before);
}

TEST_CASE("congruent cube with n_g = 1 builds one chain") {
  auto fx = make_cube_fixture(congruent());
  SchedulerConfig cfg;
  cfg.n_g = 1;
  const auto report = run(fx.bb, cfg);
  CHECK(report.relabels == 0);
  CHECK(fx.bb.at(Panel::Data, Level::Scene).size() == 1);
  CHECK(fx.bb.at(Panel::Data, Level::Object).size() == 1);
  CHECK(fx.bb.at(Panel::Data, Level::Face).size() == 3);
  for (ElementId id : fx.data_edges) CHECK(fx.bb.element(id).label == fx.generator(id));
  for (const char* f : {"F_A", "F_B", "F_C"}) CHECK(fx.bb.correspondents(fx.model.at(f)).size() == 1);
  CHECK(fx.bb.correspondents(fx.model.at("cube")).size() == 1);
  CHECK(fx.bb.correspondents(fx.model.at("scene")).size() == 1);
}

TEST_CASE("init goals: object deficit and a doubly matched edge") {
  auto fx = make_cube_fixture();
  Scheduler(fx.bb, {}).init_phase();
  std::map<ElementId, int> deficit;
  for (const auto& g : fx.bb.goals()) {
    if (!deficit.count(g.model_node)) deficit[g.model_node] = g.deficit;
  }
  CHECK(deficit.at(fx.model.at("cube")) == 3);
  CHECK(deficit.at(fx.model.at("scene")) == 3);

  CubeOptions o;
  o.duplicate_of = "E_C";
  auto fx2 = make_cube_fixture(o);
  Scheduler(fx2.bb, {}).init_phase();
  int ec = 0;
  for (const auto& g : fx2.bb.goals()) {
    if (g.model_node == fx2.model.at("E_C")) ec = g.deficit;
  }
  CHECK(ec == 1);
}

TEST_CASE("init phase leaves no pending Grouper KSARs") {
  auto fx = make_cube_fixture();
  Scheduler(fx.bb, {}).init_phase();
  for (const auto& k : fx.bb.pending()) CHECK(k.ks != KsKind::Grouper);
}

TEST_CASE("update phase: congruent cube relabels nothing") {
  auto fx = make_cube_fixture(congruent());
  Scheduler s(fx.bb, {});
  s.init_phase();
  const auto before = s.report().relabels;
  s.update_phase();
  CHECK(s.report().relabels == before);
  CHECK(fx.bb.pending().empty());
}

TEST_CASE("update phase on a single node is a no-op") {
  Blackboard bb;
  add_edge(bb, Panel::Model, Segment2({0, 0}, {100, 0}));
  add_edge(bb, Panel::Data, Segment2({0, 1}, {100, 1}));
  Scheduler s(bb, {});
  s.init_phase();
  const std::string dump = bb.dump();
  const std::size_t firings = s.report().firings;
  s.update_phase();
  s.propagate_phase();
  CHECK(bb.dump() == dump);
  CHECK(s.report().firings == firings);
}

namespace {

// Pushes one member of the main F_A grouping onto a wrong label with
// outside evidence, after initialization.
ElementId seed_mislabel(CubeFixture& fx) {
  const ElementId ea = fx.data_edges[0];
  auto& e = fx.bb.element(ea);
  REQUIRE(e.label == fx.model.at("E_A"));
  const Label wrong = fx.model.at("E_C");
  REQUIRE(e.belief->frame().contains(wrong));
  e.belief->add(SimpleEvidenceFunction::make(wrong, 0.97, 0.0), {});
  refresh_label(fx.bb, ea);
  REQUIRE(e.label == wrong);
  return ea;
}

}  // namespace

TEST_CASE("update phase: a seeded mislabel is relabeled and the run quiesces") {
  auto fx = make_cube_fixture(congruent());
  Scheduler s(fx.bb, {});
  s.init_phase();
  const ElementId ea = seed_mislabel(fx);
  s.update_phase();
  CHECK(s.report().relabels >= 1);
  CHECK(fx.bb.element(ea).label == fx.model.at("E_A"));
  CHECK(fx.bb.pending().empty());
  CHECK_FALSE(s.report().budget_exceeded);
}

TEST_CASE("propagate phase: congruent cube relabels nothing and raises the scene") {
  auto fx = make_cube_fixture(congruent());
  Scheduler s(fx.bb, {});
  s.init_phase();
  s.update_phase();
  const auto scene = best_scene(fx.bb).value();
  const double before = fx.bb.element(scene).belief->mass(fx.model.at("scene"));
  const auto relabels = s.report().relabels;
  s.propagate_phase();
  CHECK(s.report().relabels == relabels);
  CHECK(fx.bb.element(scene).belief->mass(fx.model.at("scene")) >= before);
  CHECK(fx.bb.pending().empty());
}

TEST_CASE("propagate phase: a seeded face mislabel is relabeled and the run quiesces") {
  auto fx = make_cube_fixture(congruent());
  Scheduler s(fx.bb, {});
  s.init_phase();
  s.update_phase();
  const auto faces = fx.bb.correspondents(fx.model.at("F_C"));
  REQUIRE(faces.size() == 1);
  const ElementId face = faces[0];
  const Label wrong = fx.model.at("F_A");
  // Smallest outside push that makes the wrong face win.
  auto& e = fx.bb.element(face);
  REQUIRE(e.belief->frame().contains(wrong));
  for (double step = 0.5; e.label != wrong; step /= 2.0) {
    REQUIRE(step > 1e-6);
    const double m = 1.0 - step;
    BeliefState b = *e.belief;
    b.add(SimpleEvidenceFunction::make(wrong, m, 0.0), {});
    b.add(SimpleEvidenceFunction::make(fx.model.at("F_C"), 0.0, m), {});
    if (model_label(b) == wrong) apply_belief(fx.bb, face, b);
  }
  const auto relabels = s.report().relabels;
  s.propagate_phase();
  CHECK(s.report().relabels > relabels);
  CHECK(fx.bb.element(face).label == fx.model.at("F_C"));
  CHECK(fx.bb.pending().empty());
  CHECK_FALSE(s.report().budget_exceeded);
}

TEST_CASE("select_ksar examples") {
  Blackboard bb;
  const ElementId e = add_edge(bb, Panel::Data, Segment2({0, 0}, {10, 0}));
  std::vector<Ksar> pending{make_ksar(1, KsKind::Grouper, e, 1), make_ksar(2, KsKind::Splitter, e, 2)};
  CHECK(select_ksar(pending, Phase::Init, bb)->id == 2);
  pending = {make_ksar(1, KsKind::Merger, e, 5), make_ksar(2, KsKind::Splitter, e, 3)};
  CHECK(select_ksar(pending, Phase::Update, bb)->id == 2);
  pending = {make_ksar(1, KsKind::Grouper, e, 8), make_ksar(2, KsKind::Grouper, e, 4)};
  CHECK(select_ksar(pending, Phase::Init, bb)->id == 2);
  pending = {make_ksar(1, KsKind::Grouper, e, 1), make_ksar(2, KsKind::LabelerInit, e, 9)};
  CHECK(select_ksar(pending, Phase::Init, bb)->id == 2);
  CHECK_FALSE(select_ksar({}, Phase::Init, bb).has_value());
  pending[1].status = KsarStatus::Done;
  CHECK(select_ksar(pending, Phase::Init, bb)->id == 1);
}

TEST_CASE("select_ksar prefers the strongest Grouper seed") {
  Blackboard bb;
  const Label l = add_edge(bb, Panel::Model, Segment2({0, 0}, {100, 0}));
  const ElementId weak = add_edge(bb, Panel::Data, Segment2({0, 0}, {100, 0}));
  const ElementId strong = add_edge(bb, Panel::Data, Segment2({0, 5}, {100, 5}));
  for (auto [id, m] : {std::pair{weak, 0.3}, std::pair{strong, 0.8}}) {
    BeliefState b(FrameOfDiscernment({l, kUnmatched}));
    b.add(SimpleEvidenceFunction::make(l, m, 0.0), {});
    apply_belief(bb, id, b);
  }
  const std::vector<Ksar> pending{make_ksar(1, KsKind::Grouper, weak, 1), make_ksar(2, KsKind::Grouper, strong, 2)};
  CHECK(select_ksar(pending, Phase::Init, bb)->target == strong);
}

TEST_CASE("firing budget turns into a diagnostic") {
  auto fx = make_cube_fixture();
  SchedulerConfig cfg;
  cfg.max_firings = 10;
  const auto report = run(fx.bb, cfg);
  CHECK(report.budget_exceeded);
  CHECK(report.firings == 10);
  SchedulerConfig bad;
  bad.n_g = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("event log format") {
  auto fx = make_cube_fixture();
  const auto report = run(fx.bb, {});
  const std::string log = report.log();
  CHECK(log.rfind("0 Labeler-Init ", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == static_cast<long>(report.events.size()));
}

namespace {

CubeFixture fuzzed_cube(testgen::Gen& g) {
  CubeOptions o;
  o.offset = {g.uniform(-25, 25), g.uniform(-25, 25)};
  o.rotation_deg = g.uniform(-8, 8);
  o.fragment = g.coin();
  o.duplicate = g.coin();
  o.spurious = g.coin();
  static const char* const names[] = {"E_A", "E_B", "E_C", "E_D", "E_E", "E_F", "E_G", "E_H", "E_I"};
  o.duplicate_of = names[g.integer(0, 8)];
  auto fx = make_cube_fixture(o);
  // A few random clutter segments around the cube.
  const int clutter = g.integer(0, 4);
  for (int i = 0; i < clutter; ++i) {
    const Vec2 a = g.point(180, 420);
    add_edge(fx.bb, Panel::Data, Segment2(a, a + g.point(-60, 60) + Vec2(1.0, 0.0)));
  }
  return fx;
}

}  // namespace

TEST_CASE("property: runs are deterministic and respect the scheduler contract") {
  testgen::Gen g(41);
  for (int trial = 0; trial < 25; ++trial) {
    const std::uint64_t seed = g.engine()();
    testgen::Gen ga(seed), gb(seed);
    auto a = fuzzed_cube(ga);
    auto b = fuzzed_cube(gb);
    SchedulerConfig cfg;
    cfg.n_g = 1 + static_cast<int>(trial % 3);
    const auto ra = run(a.bb, cfg);
    const auto rb = run(b.bb, cfg);
    REQUIRE(a.bb.dump() == b.bb.dump());
    REQUIRE(ra.log() == rb.log());

    REQUIRE(ra.firings <= 50 * a.bb.elements().size());
    REQUIRE(ra.max_retained <= static_cast<std::size_t>(cfg.n_g));
    std::set<std::uint32_t> fired;
    for (const auto& ev : ra.events) REQUIRE(fired.insert(ev.ksar).second);
    if (!ra.budget_exceeded) REQUIRE(a.bb.pending().empty());
    for (const auto& e : a.bb.elements()) {
      if (!e.alive || e.panel != Panel::Data || e.level == Level::Vertex) continue;
      if (!e.belief) REQUIRE((e.empty_fod && !e.label && e.parents.empty()));
    }
  }
}

TEST_CASE("property: parallel Labeler-Init kernel matches the serial one") {
  testgen::Gen g(42);
  for (int trial = 0; trial < 10; ++trial) {
    auto fx = fuzzed_cube(g);
    const auto targets = fx.bb.at(Panel::Data, Level::Edge);
    const auto serial = batch_labeler_init_serial(fx.bb, targets, {});
    const auto parallel = batch_labeler_init_parallel(fx.bb, targets, {}, 4);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
      REQUIRE(serial[i].has_value() == parallel[i].has_value());
      if (!serial[i]) continue;
      REQUIRE(serial[i]->frame() == parallel[i]->frame());
      REQUIRE(serial[i]->singleton_masses() == parallel[i]->singleton_masses());
    }
  }
  auto a = make_cube_fixture();
  auto b = make_cube_fixture();
  SchedulerConfig par;
  par.jobs = 4;
  run(a.bb, {});
  run(b.bb, par);
  CHECK(a.bb.dump() == b.bb.dump());
}
