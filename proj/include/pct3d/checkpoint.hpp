#pragma once

#include <string>
#include <vector>

#include "pct3d/layers.hpp"

namespace pct3d {

// Flat binary checkpoint: magic "3DPCT001", then per entry a u32 name
// length, the UTF-8 name, u32 rank, u32 extents, and raw little-endian
// 64-bit floats. Batch-norm running statistics are stored as entries
// suffixed ".running_mean"/".running_var".
struct CheckpointEntry {
  std::string name;
  std::vector<int> extents;
  std::vector<double> data;
};

std::vector<CheckpointEntry> snapshot_entries(const ParamRegistry& reg);
void write_checkpoint(const std::string& path,
                      const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint_entries(const std::string& path);

void save_checkpoint(const std::string& path, const ParamRegistry& reg);
// Strict load: every registry entry must be present with matching shape and
// no unknown entries may remain. Mismatches raise ConfigError; the message
// names the config field when the offending tensor is a task head output.
void load_checkpoint(const std::string& path, ParamRegistry& reg);
void restore_entries(const std::vector<CheckpointEntry>& entries,
                     ParamRegistry& reg);

}  // namespace pct3d
