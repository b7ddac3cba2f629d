#include "tdr/dataset.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tdr/io.hpp"

namespace tdr::dataset {

void save(const std::filesystem::path& dir, const std::vector<heatsim::SimulatedAsset>& assets,
          const heatsim::SimConfig& cfg) {
  if (assets.empty()) throw std::invalid_argument("refusing to write an empty dataset");
  std::filesystem::create_directories(dir);

  nlohmann::json j;
  j["asset_count"] = assets.size();
  j["dims"] = {assets.front().stream.images.dims()[0], assets.front().stream.images.dims()[1]};
  j["seed"] = cfg.seed;
  j["sim"] = {{"n_grid", cfg.n_grid},
              {"n_steps", cfg.n_steps},
              {"domain", cfg.domain},
              {"boundary_value", cfg.boundary_value},
              {"initial_value", cfg.initial_value},
              {"diff_min", cfg.diff_min},
              {"diff_max", cfg.diff_max},
              {"diffusivity_scale", cfg.diffusivity_scale},
              {"noise_variance", cfg.noise_variance},
              {"threshold", cfg.threshold},
              {"keep_every", cfg.keep_every}};
  std::ofstream manifest(dir / "manifest.json");
  if (!manifest) throw std::runtime_error("cannot write manifest.json");
  manifest << j.dump(2) << "\n";

  std::ofstream ttf(dir / "ttf.csv");
  if (!ttf) throw std::runtime_error("cannot write ttf.csv");
  ttf << "asset_id,ttf\n";
  for (std::size_t m = 0; m < assets.size(); ++m) {
    ttf << m << "," << assets[m].true_ttf << "\n";
    write_tensor(dir / ("asset_" + std::to_string(m) + ".tpd1"), assets[m].stream.images, 3);
  }
}

std::vector<prognostics::AssetStream> load(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.json");
  if (!manifest) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  nlohmann::json j;
  manifest >> j;
  const std::size_t count = j.at("asset_count").get<std::size_t>();

  std::vector<double> ttfs(count, 0.0);
  std::ifstream ttf(dir / "ttf.csv");
  if (!ttf) throw std::runtime_error("cannot open " + (dir / "ttf.csv").string());
  std::string line;
  std::getline(ttf, line);  // header
  while (std::getline(ttf, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id, value;
    std::getline(row, id, ',');
    std::getline(row, value, ',');
    const std::size_t m = std::stoul(id);
    if (m >= count) throw std::runtime_error("ttf.csv references an unknown asset id");
    ttfs[m] = std::stod(value);
  }

  std::vector<prognostics::AssetStream> assets(count);
  for (std::size_t m = 0; m < count; ++m) {
    assets[m].images = read_tensor(dir / ("asset_" + std::to_string(m) + ".tpd1"));
    assets[m].ttf = ttfs[m];
  }
  return assets;
}

}  // namespace tdr::dataset
