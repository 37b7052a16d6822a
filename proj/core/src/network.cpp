#include "capsense/network.hpp"

#include <fmt/format.h>

#include "capsense/error.hpp"

namespace capsense {

std::string_view architecture_name(Architecture arch) {
  switch (arch) {
    case Architecture::kFcClassifier:
      return "fc_classifier";
    case Architecture::kAutoencoder:
      return "autoencoder";
    case Architecture::kCnnClassifier:
      return "cnn_classifier";
  }
  return "?";
}

Architecture architecture_from_name(std::string_view name) {
  for (auto arch : {Architecture::kFcClassifier, Architecture::kAutoencoder,
                    Architecture::kCnnClassifier}) {
    if (architecture_name(arch) == name) return arch;
  }
  throw UsageError(fmt::format(
      "unknown architecture '{}' (expected fc_classifier, autoencoder or cnn_classifier)", name));
}

NetworkSpec NetworkSpec::defaults(Architecture arch) {
  NetworkSpec spec;
  spec.arch = arch;
  if (arch == Architecture::kCnnClassifier) {
    spec.rows = 5;
    spec.cols = 5;
    spec.kernel = 3;
    spec.outputs = 9;
    spec.banks = 0;
  }
  return spec;
}

}  // namespace capsense
