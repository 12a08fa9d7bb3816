#pragma once

#include <string>

#include "mvsde/drift.hpp"

namespace mvsde {

/// Parameter checkpoint: JSON header {architecture, widths, activation, seed}
/// plus the flat parameter vector as a JSON array of doubles (lossless
/// round-trip). Flow parameters, when present, live in the same vector.
void save_checkpoint(const DriftModel& m, const std::string& path);
DriftModel load_checkpoint(const std::string& path);

}  // namespace mvsde
