#include "capsense/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "capsense/error.hpp"

namespace capsense {

namespace {

constexpr std::string_view kMagic = "capsense-checkpoint 1";

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
T parse_number(std::string_view text, std::size_t line_no) {
  T value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw UsageError(fmt::format("checkpoint line {}: bad number '{}'", line_no, text));
  }
  return value;
}

struct NamedMatrix {
  Matrix m;
  double beta = 1.0;
};

void write_matrix(std::ostream& os, std::string_view name, const Matrix& m, double beta) {
  os << fmt::format("matrix {} {} {} {}\n", name, m.rows(), m.cols(), beta);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) os << (c == 0 ? "" : " ") << fmt::format("{}", row[c]);
    os << '\n';
  }
}

void write_params(std::ostream& os, const SensorParams& p) {
  os << fmt::format("sensor.c0_pf {}\n", p.c0_pf);
  os << fmt::format("sensor.c_ih_pf {}\n", p.c_ih_pf);
  os << fmt::format("sensor.c_il_pf {}\n", p.c_il_pf);
  os << fmt::format("sensor.noise_frac {}\n", p.noise_frac);
  os << fmt::format("sensor.noise_mode {}\n", noise_mode_name(p.noise_mode));
  os << fmt::format("sensor.noise_floor_pf {}\n", p.noise_floor_pf);
}

const NamedMatrix& require(const std::map<std::string, NamedMatrix, std::less<>>& mats,
                           std::string_view name) {
  auto it = mats.find(name);
  if (it == mats.end()) throw UsageError(fmt::format("checkpoint: missing matrix '{}'", name));
  return it->second;
}

}  // namespace

const SensorParams& Checkpoint::params() const {
  return std::visit([](const auto& net) -> const SensorParams& { return net.params(); }, model);
}

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os << kMagic << '\n';
  os << "architecture " << architecture_name(ck.architecture()) << '\n';
  os << "seed " << ck.seed << '\n';
  os << "epoch " << ck.epoch << '\n';
  std::visit(
      [&](const auto& net) {
        using Net = std::decay_t<decltype(net)>;
        if constexpr (std::is_same_v<Net, FcClassifier>) {
          os << "binarize " << (net.binarized() ? 1 : 0) << '\n';
          write_params(os, net.params());
          write_matrix(os, "weights", net.weights().v, net.weights().beta);
        } else if constexpr (std::is_same_v<Net, Autoencoder>) {
          write_params(os, net.params());
          write_matrix(os, "encoder", net.encoder().v, net.encoder().beta);
          write_matrix(os, "decoder", net.decoder(), 1.0);
        } else {
          write_params(os, net.params());
          write_matrix(os, "kernel", net.kernel().v, net.kernel().beta);
          write_matrix(os, "head", net.head(), 1.0);
        }
      },
      ck.model);
}

Checkpoint read_checkpoint(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line.front() != '#') return true;
    }
    return false;
  };

  if (!next_line() || line != kMagic) throw UsageError("checkpoint: missing 'capsense-checkpoint 1' header");

  std::map<std::string, std::string, std::less<>> fields;
  std::map<std::string, NamedMatrix, std::less<>> mats;
  while (next_line()) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "matrix") {
      if (tok.size() != 5) throw UsageError(fmt::format("checkpoint line {}: expected 'matrix name rows cols beta'", line_no));
      const std::string name(tok[1]);  // `line` is reused for the rows below
      const auto rows = parse_number<std::size_t>(tok[2], line_no);
      const auto cols = parse_number<std::size_t>(tok[3], line_no);
      NamedMatrix nm{Matrix(rows, cols), parse_number<double>(tok[4], line_no)};
      for (std::size_t r = 0; r < rows; ++r) {
        if (!next_line()) throw UsageError(fmt::format("checkpoint: matrix '{}' truncated", name));
        const auto vals = split_ws(line);
        if (vals.size() != cols) {
          throw UsageError(fmt::format("checkpoint line {}: expected {} values", line_no, cols));
        }
        for (std::size_t c = 0; c < cols; ++c) nm.m(r, c) = parse_number<double>(vals[c], line_no);
      }
      mats.emplace(name, std::move(nm));
    } else {
      if (tok.size() != 2) throw UsageError(fmt::format("checkpoint line {}: expected 'key value'", line_no));
      fields[std::string(tok[0])] = std::string(tok[1]);
    }
  }

  auto field = [&](std::string_view key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) throw UsageError(fmt::format("checkpoint: missing field '{}'", key));
    return it->second;
  };
  auto number = [&](std::string_view key) { return parse_number<double>(field(key), 0); };

  SensorParams params;
  params.c0_pf = number("sensor.c0_pf");
  params.c_ih_pf = number("sensor.c_ih_pf");
  params.c_il_pf = number("sensor.c_il_pf");
  params.noise_frac = number("sensor.noise_frac");
  params.noise_mode = noise_mode_from_name(field("sensor.noise_mode"));
  params.noise_floor_pf = number("sensor.noise_floor_pf");
  try {
    params.validate();
  } catch (const DomainError& e) {
    throw UsageError(fmt::format("checkpoint: {}", e.what()));
  }

  const Architecture arch = architecture_from_name(field("architecture"));
  Checkpoint ck{.model = FcClassifier(params, Matrix(kNumGlyphs, 9)),
                .seed = parse_number<std::uint64_t>(field("seed"), 0),
                .epoch = parse_number<std::size_t>(field("epoch"), 0)};
  try {
    switch (arch) {
      case Architecture::kFcClassifier: {
        const auto& w = require(mats, "weights");
        const std::string& bin = field("binarize");
        if (bin != "0" && bin != "1") throw UsageError("checkpoint: binarize must be 0 or 1");
        FcClassifier net(params, w.m, bin == "1");
        net.weights().beta = w.beta;
        ck.model = std::move(net);
        break;
      }
      case Architecture::kAutoencoder: {
        const auto& enc = require(mats, "encoder");
        Autoencoder net(params, enc.m, require(mats, "decoder").m);
        net.encoder().beta = enc.beta;
        ck.model = std::move(net);
        break;
      }
      case Architecture::kCnnClassifier: {
        const auto& k = require(mats, "kernel");
        CnnClassifier net(params, k.m, require(mats, "head").m);
        net.kernel().beta = k.beta;
        ck.model = std::move(net);
        break;
      }
    }
  } catch (const ShapeError& e) {
    throw UsageError(fmt::format("checkpoint: {}", e.what()));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError(fmt::format("cannot write checkpoint '{}'", path.string()));
  write_checkpoint(os, checkpoint);
  if (!os) throw UsageError(fmt::format("failed writing checkpoint '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError(fmt::format("cannot open checkpoint '{}'", path.string()));
  return read_checkpoint(is);
}

}  // namespace capsense
