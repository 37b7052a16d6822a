#pragma once

// Plain-text model checkpoints. Numbers are written in shortest round-trip
// decimal form, so save -> load -> save is byte-identical.
//
//   capsense-checkpoint 1
//   architecture fc_classifier
//   seed 1
//   epoch 350
//   binarize 0
//   sensor.c0_pf 72
//   ...
//   matrix weights 4 9 1.7302
//   <one matrix row per line>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "capsense/netlab.hpp"

namespace capsense {

struct Checkpoint {
  Model model;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;

  Architecture architecture() const { return model_architecture(model); }
  const SensorParams& params() const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& checkpoint);
/// Throws UsageError on malformed input, naming the offending line.
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace capsense
