#pragma once

// Blackboard construction helpers and the canonical cube scene: three
// visible faces sharing a corner, nine model edges, thirteen data edges.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pseiki/blackboard.hpp"

namespace pseiki {

// Edge element plus its two endpoint vertices.
ElementId add_edge(Blackboard& bb, Panel panel, const Segment2& seg, std::optional<std::uint32_t> source = {},
                   std::optional<double> strength = {});
ElementId add_aggregate(Blackboard& bb, Panel panel, Level level, std::vector<ElementId> children,
                        std::optional<std::uint32_t> source = {});

struct CubeOptions {
  Vec2 offset{9.0, -6.0};      // mis-registration of the data against the model, px
  double rotation_deg = 2.0;   // about the cube's centre corner
  bool fragment = true;        // E is seen as three collinear pieces
  bool duplicate = true;       // a second line 3 px beside one model edge
  std::string duplicate_of = "E_B";
  bool spurious = true;        // a short glare segment inside the right face
};

struct CubeFixture {
  Blackboard bb;
  std::map<std::string, ElementId> model;  // "E_A".."E_I", "F_A".."F_C", "cube", "scene"
  std::map<std::string, Segment2> model_segments;
  std::vector<ElementId> data_edges;       // E_1, E_2, ... in insertion order
  // Generating model edge per data edge; empty for the spurious one.
  std::map<ElementId, std::optional<ElementId>> truth;

  std::optional<ElementId> generator(ElementId data_edge) const;
};

CubeFixture make_cube_fixture(const CubeOptions& options = {});

}  // namespace pseiki
