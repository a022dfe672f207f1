#pragma once

#include <optional>
#include <string>

#include "ndtfuse/types.hpp"

namespace ndtfuse {

/// Map-health states; legal transitions are
/// VALID -> SUSPECT -> {VALID, CORRUPTED}; CORRUPTED -> REBUILDING ->
/// RESTORED -> VALID.
enum class MapState { VALID, SUSPECT, CORRUPTED, REBUILDING, RESTORED };

std::string to_string(MapState s);

struct MapStatus {
  MapState state = MapState::VALID;
  // Bounding box of the affected area, once known (map frame).
  std::optional<std::pair<Vec3, Vec3>> region;
  double entered_at = 0.0;  // stamp of the last state change
  // Streak counters driving the persistence thresholds.
  int suspect_streak = 0;
  int good_streak = 0;
};

}  // namespace ndtfuse
