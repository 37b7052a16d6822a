#pragma once

// The four-letter capacitive image corpus: H, L, Y and inverted Z, at 3x3 and
// 5x5 resolution, encoded as induced capacitances with optional Gaussian noise.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "capsense/device.hpp"
#include "capsense/matrix.hpp"

namespace capsense {

enum class Glyph : std::uint8_t { kH = 0, kL = 1, kY = 2, kInvZ = 3 };

inline constexpr std::size_t kNumGlyphs = 4;
inline constexpr std::array<Glyph, kNumGlyphs> kAllGlyphs = {Glyph::kH, Glyph::kL, Glyph::kY,
                                                             Glyph::kInvZ};

std::string_view glyph_name(Glyph glyph);
Glyph glyph_from_name(std::string_view name);  // throws UsageError
inline std::size_t glyph_index(Glyph g) { return static_cast<std::size_t>(g); }

struct LetterImage {
  Glyph glyph = Glyph::kH;
  std::size_t resolution = 0;
  std::vector<std::uint8_t> grid;  // row-major, 1 = inside

  bool inside(std::size_t r, std::size_t c) const { return grid[r * resolution + c] != 0; }
  friend bool operator==(const LetterImage&, const LetterImage&) = default;
};

struct CapacitiveSample {
  Matrix c_i;  // induced capacitance per pixel, pF
  std::array<double, kNumGlyphs> label{};
  LetterImage clean_source;

  Glyph glyph() const { return clean_source.glyph; }
};

/// Canonical bitmaps. 5x5 letters are the 3x3 ones centered with the border
/// rows/columns replicating the nearest glyph row/column.
std::vector<LetterImage> letter_patterns(std::size_t resolution);

LetterImage letter(Glyph glyph, std::size_t resolution);

std::size_t hamming_distance(const LetterImage& a, const LetterImage& b);

/// Inside pixels become c_ih, outside c_il. No noise.
CapacitiveSample encode_capacitive(const LetterImage& image, const SensorParams& params);

/// Fresh per-pixel noise on a clean sample; sigma follows params.noise_mode.
CapacitiveSample add_noise(const CapacitiveSample& clean, const SensorParams& params, Rng& rng);

/// `size` letters drawn uniformly with replacement, each with fresh noise.
std::vector<CapacitiveSample> sample_batch(std::size_t size, std::size_t resolution,
                                           const SensorParams& params, Rng& rng);

/// `per_glyph` noisy copies of each letter, in glyph order.
std::vector<CapacitiveSample> balanced_batch(std::size_t per_glyph, std::size_t resolution,
                                             const SensorParams& params, Rng& rng);

/// Pixels whose series capacitance exceeds (C_H + C_L) / 2 are inside.
LetterImage threshold_image(const Matrix& c_i, const SensorParams& params);

/// Nearest canonical glyph by Hamming distance. Returns false in `unique`
/// when two glyphs tie.
Glyph nearest_glyph(const LetterImage& image, bool* unique = nullptr);

// Fixture formats: bitmap text has one row per line of '0'/'1' characters;
// capacitance CSV has one matrix row per line.
std::string format_bitmap(const LetterImage& image);
LetterImage parse_bitmap(std::string_view text, Glyph glyph);
void write_capacitance_csv(std::ostream& os, const Matrix& c_i);
Matrix read_capacitance_csv(std::istream& is);

}  // namespace capsense
