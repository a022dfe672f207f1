#include "ndtfuse/map_status.hpp"

namespace ndtfuse {

std::string to_string(MapState s) {
  switch (s) {
    case MapState::VALID: return "VALID";
    case MapState::SUSPECT: return "SUSPECT";
    case MapState::CORRUPTED: return "CORRUPTED";
    case MapState::REBUILDING: return "REBUILDING";
    case MapState::RESTORED: return "RESTORED";
  }
  return "VALID";
}

}  // namespace ndtfuse
