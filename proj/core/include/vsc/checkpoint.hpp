#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vsc/optim.hpp"

namespace vsc {

// Flat binary parameter map: magic + version, then name / shape / f64 values
// per entry. Round-trips bit-exactly.
struct CheckpointEntry {
  Shape shape;
  std::vector<double> values;
};

using CheckpointMap = std::unordered_map<std::string, CheckpointEntry>;

void save_checkpoint(const std::string& path, const ParamStore& params);
CheckpointMap read_checkpoint(const std::string& path);
void load_checkpoint(const std::string& path, ParamStore& params);

}  // namespace vsc
