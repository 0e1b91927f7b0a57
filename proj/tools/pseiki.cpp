// Command-line front end. Exit codes: 0 success, 1 invariant or goal failure,
// 2 configuration error.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>
#include <optional>

#include "pseiki/errors.hpp"
#include "pseiki/scenario.hpp"
#include "pseiki/selftest.hpp"
#include "pseiki/self_location.hpp"
#include "pseiki/sim_world.hpp"

namespace {

using namespace pseiki;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kConfig = 2;

struct Options {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string svg;
  std::string dump;
  int jobs = 1;
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << text;
}

std::string pose_text(const Pose2& p) { return fmt::format("{:.6f} {:.6f} {:.6f}", p.x, p.y, p.heading * 180.0 / kPi); }

Scenario load(const Options& o, bool check_ranges = true) {
  if (o.scenario.empty()) throw ConfigError("--scenario is required");
  Scenario sc = load_scenario(o.scenario, check_ranges);
  if (o.seed) {
    sc.perception.seed = *o.seed;
    sc.odometry.seed = *o.seed;
    sc.episodes.count = 1;
    sc.episodes.first_seed = *o.seed;
  }
  return sc;
}

void header(const std::string& command, const Options& o, const Scenario* sc) {
  std::cout << fmt::format("# pseiki {} jobs {}\n", command, o.jobs);
  if (sc) std::cout << "# resolved config\n" << resolved_config(*sc) << "\n";
}

int cmd_match(const Options& o) {
  Scenario sc = load(o);
  sc.navigation.scheduler.jobs = o.jobs;
  header("match", o, &sc);
  const auto& model = sc.model();
  const auto expectation = render_expectation(model, sc.believed_pose, sc.camera, sc.navigation.render);
  const auto perception = synthesize_perception(model, sc.true_pose, sc.camera, sc.perception, sc.navigation.render);
  Blackboard bb = make_blackboard(expectation, perception);
  const RunReport report = run(bb, sc.scheduler());
  std::cout << fmt::format("expectation {} edges, perception {} edges, {} firings, {} relabels{}\n",
                           expectation.size(), perception.size(), report.firings, report.relabels,
                           report.budget_exceeded ? ", firing budget exceeded" : "");

  const auto world = model.world_edges();
  std::vector<EdgeMatch> matches;
  try {
    matches = extract_matches(bb, sc.retention_threshold, world);
  } catch (const NoSceneNode&) {
    std::cout << "no believed scene\n";
  }
  std::cout << "# winning edges: image(x0 y0 x1 y1) model(x0 y0 z0 x1 y1 z1) belief horizontal\n";
  for (const auto& m : matches) {
    const auto& s = m.image_segment;
    const auto& w = m.model_edge;
    std::cout << fmt::format("{:.3f} {:.3f} {:.3f} {:.3f} {:.3f} {:.3f} {:.3f} {:.3f} {:.3f} {:.3f} {:.6f} {}\n",
                             s.p0().x(), s.p0().y(), s.p1().x(), s.p1().y(), w.p0.x(), w.p0.y(), w.p0.z(), w.p1.x(),
                             w.p1.y(), w.p1.z(), m.belief, m.is_horizontal ? 1 : 0);
  }
  const auto fix = self_locate(matches, sc.believed_pose, sc.camera, sc.navigation.locate);
  const double before = (sc.believed_pose.position() - sc.true_pose.position()).norm();
  const double after = (fix.pose.position() - sc.true_pose.position()).norm();
  std::cout << fmt::format("believed {}\ntrue {}\nfix {}{}{}\n", pose_text(sc.believed_pose), pose_text(sc.true_pose),
                           pose_text(fix.pose), fix.heading_from_prior ? " heading_prior" : "",
                           fix.position_from_prior ? " position_prior" : "");
  std::cout << fmt::format("position error believed {:.6f} m, fix {:.6f} m\n", before, after);

  if (!o.dump.empty()) write_file(o.dump, bb.dump() + "# firings\n" + report.log());
  if (!o.svg.empty()) write_file(o.svg, match_svg(sc.camera, expectation, perception, matches));
  return kOk;
}

int cmd_navigate(const Options& o) {
  Scenario sc = load(o);
  header("navigate", o, &sc);
  const auto spec = sc.episode_spec();
  const auto seeds = sc.episodes.seeds();
  const auto logs = o.jobs > 1 ? run_episodes_parallel(spec, seeds, o.jobs) : run_episodes_serial(spec, seeds);
  std::size_t reached = 0;
  std::string dump;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto& log = logs[i];
    reached += log.success();
    std::cout << fmt::format("episode seed {} {} legs {} final error {:.3f} m\n", seeds[i], to_string(log.outcome),
                             log.legs.size(), (log.final_truth.position() - sc.waypoints.back()).norm());
    dump += fmt::format("# episode seed {}\n", seeds[i]) + log.text();
  }
  std::cout << fmt::format("goal reached {}/{}\n", reached, logs.size());
  if (!o.dump.empty()) write_file(o.dump, dump);
  if (!o.svg.empty() && !logs.empty()) write_file(o.svg, plan_svg(sc.model(), sc.waypoints, logs.front()));
  return reached == logs.size() ? kOk : kFailed;
}

int cmd_render(const Options& o) {
  Scenario sc = load(o);
  header("render", o, &sc);
  const auto expectation = render_expectation(sc.model(), sc.believed_pose, sc.camera, sc.navigation.render);
  const auto perception = synthesize_perception(sc.model(), sc.true_pose, sc.camera, sc.perception, sc.navigation.render);
  std::string listing = "# expectation: source image(x0 y0 x1 y1)\n";
  for (const auto& e : expectation) {
    listing += fmt::format("{} {:.3f} {:.3f} {:.3f} {:.3f}\n", e.source, e.image.p0().x(), e.image.p0().y(),
                           e.image.p1().x(), e.image.p1().y());
  }
  listing += "# perception: image(x0 y0 x1 y1)\n";
  for (const auto& p : perception) {
    listing += fmt::format("{:.3f} {:.3f} {:.3f} {:.3f}\n", p.image.p0().x(), p.image.p0().y(), p.image.p1().x(),
                           p.image.p1().y());
  }
  std::cout << listing;
  if (!o.dump.empty()) write_file(o.dump, listing);
  if (!o.svg.empty()) write_file(o.svg, match_svg(sc.camera, expectation, perception, {}));
  return kOk;
}

int cmd_selftest(const Options& o) {
  SchedulerConfig config;
  std::uint64_t seed = o.seed.value_or(1);
  if (!o.scenario.empty()) {
    // Ranges are not checked here so a bad constant shows up as a failure.
    const Scenario sc = load(o, false);
    header("selftest", o, &sc);
    config = sc.scheduler();
  } else {
    header("selftest", o, nullptr);
  }
  const auto results = run_selftest(config, seed);
  std::size_t passed = 0;
  std::string text;
  for (const auto& r : results) {
    passed += r.pass;
    text += r.line() + "\n";
  }
  text += fmt::format("selftest {}/{} passed\n", passed, results.size());
  std::cout << text;
  if (!o.dump.empty()) write_file(o.dump, text);
  return passed == results.size() ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidence-based edge matching and self-location for a hallway robot"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--scenario", o.scenario, "scenario JSON file");
    sub->add_option("--seed", o.seed, "seed for both noise streams; navigate runs this single episode");
    sub->add_option("--svg", o.svg, "SVG output path");
    sub->add_option("--dump", o.dump, "dump output path");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* match = app.add_subcommand("match", "match one expectation against one perception");
  auto* nav = app.add_subcommand("navigate", "run seeded navigation episodes");
  auto* selftest = app.add_subcommand("selftest", "run the built-in checks");
  auto* render = app.add_subcommand("render", "render the expectation and perception edges");
  for (auto* sub : {match, nav, selftest, render}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*match) return cmd_match(o);
    if (*nav) return cmd_navigate(o);
    if (*selftest) return cmd_selftest(o);
    return cmd_render(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
}
