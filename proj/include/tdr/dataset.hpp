#pragma once

#include <filesystem>
#include <vector>

#include "tdr/heat_sim.hpp"
#include "tdr/prognostics.hpp"

namespace tdr::dataset {

/// On disk: manifest.json (simulation config, asset count, image dims, seed),
/// asset_<m>.tpd1 (order-3 stream with mask), ttf.csv (asset_id, ttf).
void save(const std::filesystem::path& dir, const std::vector<heatsim::SimulatedAsset>& assets,
          const heatsim::SimConfig& cfg);

std::vector<prognostics::AssetStream> load(const std::filesystem::path& dir);

}  // namespace tdr::dataset
