#pragma once

#include <filesystem>
#include <string_view>

#include "scenegen/road_graph.hpp"

namespace scenegen {

struct OpenDriveOptions {
  // Heading change below which a junction movement counts as straight.
  double straight_threshold_deg = 30.0;
};

// Parses the supported OpenDRIVE subset: header, roads with line/arc plan
// view, lanes (first lane section, constant width), signals, objects and
// junctions with lane links.
RoadGraph parse_opendrive(std::string_view xml_text, const OpenDriveOptions& options = {});
RoadGraph load_opendrive_file(const std::filesystem::path& path, const OpenDriveOptions& options = {});

// Left-positive heading change classification used for junction movements.
Turn classify_turn(double heading_in, double heading_out, double straight_threshold_deg = 30.0);

}  // namespace scenegen
