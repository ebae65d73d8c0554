#pragma once

#include <filesystem>
#include <optional>

#include "cbfmeta/bayes_blr.hpp"
#include "cbfmeta/feature_net.hpp"

namespace cbfmeta {

/// Meta-learned model: basis network plus coefficient prior (mean, precision, sigma).
struct ModelBundle {
  FeatureNet net;
  Posterior prior;
};

std::vector<std::uint8_t> save_bundle(const ModelBundle& bundle);
/// Throws Error(FormatMismatch) on a malformed container or a missing prior block.
ModelBundle load_bundle(std::span<const std::uint8_t> bytes);

void save_bundle_file(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle_file(const std::filesystem::path& path);

}  // namespace cbfmeta
