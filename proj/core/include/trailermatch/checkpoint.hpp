#pragma once

#include "trailermatch/encoder.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace trailermatch {

/// Checkpoint archive: magic + text key/value header (dim, heads, seed,
/// epoch, hyperparameters) followed by one named record per parameter,
/// values as 64-bit IEEE-754 little-endian, row-major. See docs/formats.md.
struct Checkpoint {
  ModelParams params;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::map<std::string, std::string>& meta);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace trailermatch
