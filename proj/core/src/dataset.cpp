#include "capsense/dataset.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "capsense/error.hpp"

namespace capsense {

namespace {

// Rows top to bottom, 1 = inside.
constexpr std::array<std::array<const char*, 3>, kNumGlyphs> kGlyphRows = {{
    {"101", "111", "101"},  // H
    {"100", "100", "111"},  // L
    {"101", "010", "010"},  // Y
    {"011", "010", "110"},  // inverted Z
}};

LetterImage base_letter(Glyph glyph) {
  LetterImage img{.glyph = glyph, .resolution = 3, .grid = {}};
  for (const char* row : kGlyphRows[glyph_index(glyph)]) {
    for (int c = 0; c < 3; ++c) img.grid.push_back(row[c] == '1' ? 1 : 0);
  }
  return img;
}

LetterImage expand(const LetterImage& small, std::size_t resolution) {
  const std::size_t pad = (resolution - small.resolution) / 2;
  LetterImage big{.glyph = small.glyph, .resolution = resolution, .grid = {}};
  big.grid.reserve(resolution * resolution);
  auto source = [&](std::size_t i) {
    if (i < pad) return std::size_t{0};
    if (i - pad >= small.resolution) return small.resolution - 1;
    return i - pad;
  };
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      big.grid.push_back(small.grid[source(r) * small.resolution + source(c)]);
    }
  }
  return big;
}

}  // namespace

std::string_view glyph_name(Glyph glyph) {
  switch (glyph) {
    case Glyph::kH:
      return "H";
    case Glyph::kL:
      return "L";
    case Glyph::kY:
      return "Y";
    case Glyph::kInvZ:
      return "InvZ";
  }
  return "?";
}

Glyph glyph_from_name(std::string_view name) {
  for (Glyph g : kAllGlyphs) {
    if (glyph_name(g) == name) return g;
  }
  throw UsageError(fmt::format("unknown glyph '{}' (expected H, L, Y or InvZ)", name));
}

LetterImage letter(Glyph glyph, std::size_t resolution) {
  if (resolution == 3) return base_letter(glyph);
  if (resolution == 5) return expand(base_letter(glyph), 5);
  throw DomainError(fmt::format("unsupported letter resolution {}", resolution));
}

std::vector<LetterImage> letter_patterns(std::size_t resolution) {
  std::vector<LetterImage> out;
  for (Glyph g : kAllGlyphs) out.push_back(letter(g, resolution));
  return out;
}

std::size_t hamming_distance(const LetterImage& a, const LetterImage& b) {
  if (a.resolution != b.resolution) throw ShapeError("hamming_distance: resolution mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.grid.size(); ++i) d += (a.grid[i] != b.grid[i]) ? 1 : 0;
  return d;
}

CapacitiveSample encode_capacitive(const LetterImage& image, const SensorParams& params) {
  CapacitiveSample s;
  s.c_i = Matrix(image.resolution, image.resolution);
  for (std::size_t r = 0; r < image.resolution; ++r) {
    for (std::size_t c = 0; c < image.resolution; ++c) {
      s.c_i(r, c) = image.inside(r, c) ? params.c_ih_pf : params.c_il_pf;
    }
  }
  s.label[glyph_index(image.glyph)] = 1.0;
  s.clean_source = image;
  return s;
}

CapacitiveSample add_noise(const CapacitiveSample& clean, const SensorParams& params, Rng& rng) {
  CapacitiveSample s = clean;
  const std::size_t res = clean.clean_source.resolution;
  for (std::size_t r = 0; r < res; ++r) {
    for (std::size_t c = 0; c < res; ++c) {
      const double nominal = params.noise_mode == NoiseMode::kGlobal ? params.c_ih_pf
                             : clean.clean_source.inside(r, c)        ? params.c_ih_pf
                                                                      : params.c_il_pf;
      s.c_i(r, c) = apply_noise(clean.c_i(r, c), nominal, params.noise_frac, rng,
                                params.noise_floor_pf);
    }
  }
  return s;
}

std::vector<CapacitiveSample> sample_batch(std::size_t size, std::size_t resolution,
                                           const SensorParams& params, Rng& rng) {
  if (size == 0) throw DomainError("sample_batch: size must be >= 1");
  std::vector<CapacitiveSample> clean;
  for (const auto& img : letter_patterns(resolution)) clean.push_back(encode_capacitive(img, params));

  std::uniform_int_distribution<std::size_t> pick(0, kNumGlyphs - 1);
  std::vector<CapacitiveSample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) out.push_back(add_noise(clean[pick(rng)], params, rng));
  return out;
}

std::vector<CapacitiveSample> balanced_batch(std::size_t per_glyph, std::size_t resolution,
                                             const SensorParams& params, Rng& rng) {
  std::vector<CapacitiveSample> out;
  out.reserve(per_glyph * kNumGlyphs);
  for (const auto& img : letter_patterns(resolution)) {
    const CapacitiveSample clean = encode_capacitive(img, params);
    for (std::size_t i = 0; i < per_glyph; ++i) out.push_back(add_noise(clean, params, rng));
  }
  return out;
}

LetterImage threshold_image(const Matrix& c_i, const SensorParams& params) {
  if (c_i.rows() != c_i.cols()) throw ShapeError("threshold_image: image must be square");
  const double cut = 0.5 * (params.c_high_pf() + params.c_low_pf());
  LetterImage img{.glyph = Glyph::kH, .resolution = c_i.rows(), .grid = {}};
  for (double c : c_i.flat()) {
    const double series = c > 0.0 ? series_capacitance(c, params.c0_pf) : 0.0;
    img.grid.push_back(series > cut ? 1 : 0);
  }
  img.glyph = nearest_glyph(img);
  return img;
}

Glyph nearest_glyph(const LetterImage& image, bool* unique) {
  const auto patterns = letter_patterns(image.resolution);
  Glyph best = Glyph::kH;
  std::size_t best_d = static_cast<std::size_t>(-1);
  bool tie = false;
  for (const auto& p : patterns) {
    const std::size_t d = hamming_distance(image, p);
    if (d < best_d) {
      best_d = d;
      best = p.glyph;
      tie = false;
    } else if (d == best_d) {
      tie = true;
    }
  }
  if (unique != nullptr) *unique = !tie;
  return best;
}

std::string format_bitmap(const LetterImage& image) {
  std::string out;
  for (std::size_t r = 0; r < image.resolution; ++r) {
    for (std::size_t c = 0; c < image.resolution; ++c) out.push_back(image.inside(r, c) ? '1' : '0');
    out.push_back('\n');
  }
  return out;
}

LetterImage parse_bitmap(std::string_view text, Glyph glyph) {
  LetterImage img{.glyph = glyph, .resolution = 0, .grid = {}};
  std::size_t rows = 0;
  std::size_t width = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    if (line.empty()) continue;
    if (width == 0) width = line.size();
    if (line.size() != width) throw UsageError("parse_bitmap: ragged rows");
    for (char ch : line) {
      if (ch != '0' && ch != '1') throw UsageError(fmt::format("parse_bitmap: bad character '{}'", ch));
      img.grid.push_back(ch == '1' ? 1 : 0);
    }
    ++rows;
  }
  if (rows == 0 || rows != width) throw UsageError("parse_bitmap: bitmap must be square and non-empty");
  img.resolution = rows;
  return img;
}

void write_capacitance_csv(std::ostream& os, const Matrix& c_i) {
  for (std::size_t r = 0; r < c_i.rows(); ++r) {
    for (std::size_t c = 0; c < c_i.cols(); ++c) {
      os << (c == 0 ? "" : ",") << fmt::format("{}", c_i(r, c));
    }
    os << '\n';
  }
}

Matrix read_capacitance_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t end = line.find(',', pos);
      if (end == std::string::npos) end = line.size();
      double v = 0.0;
      const auto* first = line.data() + pos;
      const auto* last = line.data() + end;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last) {
        throw UsageError(fmt::format("read_capacitance_csv: bad number '{}'", std::string(first, last)));
      }
      row.push_back(v);
      pos = end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw UsageError("read_capacitance_csv: ragged rows");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw UsageError("read_capacitance_csv: empty input");
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

}  // namespace capsense
