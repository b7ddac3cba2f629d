#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "tdr/prognostics.hpp"
#include "tdr/tensor.hpp"

namespace tdr::heatsim {

enum class MissingPattern { EntryWise, ImageWise };

struct SimConfig {
  int n_grid = 21;    // interior grid points per side
  int n_steps = 150;  // recorded time steps
  double domain = 0.2;
  double boundary_value = 30.0;
  double initial_value = 0.0;
  double diff_min = 0.5e-4;
  double diff_max = 1.0e-4;
  double diffusivity_scale = 1.0;  // multiplies the drawn diffusivity; the
                                   // source units leave the time scale open
  double noise_variance = 0.1;
  double threshold = 23.0;
  int keep_every = 10;
  int n_assets = 0;
  std::uint64_t seed = 0;
};

struct SimulatedAsset {
  prognostics::AssetStream stream;
  int true_ttf = 0;  // time index before subsampling
  double diffusivity = 0.0;
};

struct StreamPair {
  std::vector<MatrixX<double>> noiseless;
  std::vector<MatrixX<double>> noisy;
};

/// Interior temperature fields for t = 1..n_steps: zero initial field,
/// constant boundary, backward-Euler steps of the 2-D heat equation with unit
/// time step and the 5-point Laplacian on spacing domain / (n_grid + 1).
/// Pixel noise is drawn per recorded frame with the given variance.
StreamPair simulate_stream(double diffusivity, const SimConfig& cfg, std::mt19937_64& rng);

/// First time index (1-based) at which the series reaches the threshold.
std::optional<int> compute_ttf(const VectorX<double>& mean_series, double threshold);

/// Keeps frames 1, 1 + keep_every, 1 + 2*keep_every, ... among the first ttf
/// frames (1-based).
prognostics::AssetStream truncate_subsample(const std::vector<MatrixX<double>>& frames, int ttf,
                                            int keep_every);

/// Masks round(rate * count) frames (image-wise) or pixels (entry-wise),
/// chosen uniformly without replacement; masked values are zeroed.
prognostics::AssetStream inject_missing(const prognostics::AssetStream& stream, double rate,
                                        MissingPattern pattern, std::mt19937_64& rng);

struct Dataset {
  std::vector<SimulatedAsset> assets;
  int redraws = 0;  // diffusivity draws whose series never crossed the threshold
};

/// Deterministic given the seed: each asset consumes its own generator
/// substream, so assets are independent and the set is reproducible under any
/// degree of parallelism.
Dataset generate_dataset(const SimConfig& cfg);

}  // namespace tdr::heatsim
