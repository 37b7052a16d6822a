#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace capsense {

enum class Architecture : std::uint8_t { kFcClassifier, kAutoencoder, kCnnClassifier };

std::string_view architecture_name(Architecture arch);
Architecture architecture_from_name(std::string_view name);  // throws UsageError

/// Shape of one of the three networks as laid out on the sensor array.
struct NetworkSpec {
  Architecture arch = Architecture::kFcClassifier;
  std::size_t rows = 3;      // sensor array
  std::size_t cols = 3;
  std::size_t outputs = 4;   // analog outputs per sample (FC/AE)
  std::size_t banks = 4;     // subpixel banks (FC/AE)
  std::size_t kernel = 0;    // CNN only
  std::size_t classes = 4;

  static NetworkSpec defaults(Architecture arch);
  std::size_t fan_in() const { return kernel != 0 ? kernel * kernel : rows * cols; }
  std::size_t resolution() const { return rows; }
};

}  // namespace capsense
