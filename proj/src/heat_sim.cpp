#include "tdr/heat_sim.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <atomic>
#include <cmath>

#include "tdr/parallel.hpp"

namespace tdr::heatsim {

namespace {

std::mt19937_64 asset_rng(std::uint64_t seed, Index asset) {
  std::seed_seq seq{static_cast<std::uint64_t>(0x7d0u), seed, static_cast<std::uint64_t>(asset)};
  return std::mt19937_64(seq);
}

}  // namespace

StreamPair simulate_stream(double diffusivity, const SimConfig& cfg, std::mt19937_64& rng) {
  if (diffusivity < 0.0) throw std::invalid_argument("diffusivity must be non-negative");
  const int n = cfg.n_grid;
  const Index cells = static_cast<Index>(n) * n;
  const double h = cfg.domain / static_cast<double>(n + 1);
  const double r = diffusivity / (h * h);  // unit time step

  // Backward Euler: (I + r * A) x_t = x_{t-1} + r * b, with A the 5-point
  // Laplacian stencil and b carrying the Dirichlet boundary.
  Eigen::SparseMatrix<double> sys(cells, cells);
  VectorX<double> boundary = VectorX<double>::Zero(cells);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(cells * 5);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const Index idx = i + static_cast<Index>(n) * j;
        trips.emplace_back(idx, idx, 1.0 + 4.0 * r);
        int outside = 0;
        const int di[4] = {-1, 1, 0, 0};
        const int dj[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ni = i + di[k];
          const int nj = j + dj[k];
          if (ni < 0 || ni >= n || nj < 0 || nj >= n) {
            ++outside;
            continue;
          }
          trips.emplace_back(idx, ni + static_cast<Index>(n) * nj, -r);
        }
        boundary[idx] = r * cfg.boundary_value * outside;
      }
    sys.setFromTriplets(trips.begin(), trips.end());
  }
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(sys);
  if (solver.info() != Eigen::Success) throw std::runtime_error("heat solver factorization failed");

  StreamPair out;
  out.noiseless.reserve(cfg.n_steps);
  out.noisy.reserve(cfg.n_steps);
  std::normal_distribution<double> noise(0.0, std::sqrt(cfg.noise_variance));

  VectorX<double> field = VectorX<double>::Constant(cells, cfg.initial_value);
  for (int t = 1; t <= cfg.n_steps; ++t) {
    if (t > 1) {
      const VectorX<double> rhs = field + boundary;  // materialize: solve aliases its rhs
      field = solver.solve(rhs);
    }
    MatrixX<double> clean = Eigen::Map<const MatrixX<double>>(field.data(), n, n);
    MatrixX<double> dirty = clean;
    for (Index j = 0; j < dirty.cols(); ++j)
      for (Index i = 0; i < dirty.rows(); ++i) dirty(i, j) += noise(rng);
    out.noiseless.push_back(std::move(clean));
    out.noisy.push_back(std::move(dirty));
  }
  return out;
}

std::optional<int> compute_ttf(const VectorX<double>& mean_series, double threshold) {
  for (Index t = 0; t < mean_series.size(); ++t)
    if (mean_series[t] >= threshold) return static_cast<int>(t) + 1;
  return std::nullopt;
}

prognostics::AssetStream truncate_subsample(const std::vector<MatrixX<double>>& frames, int ttf,
                                            int keep_every) {
  if (ttf < 1 || ttf > static_cast<int>(frames.size()))
    throw std::invalid_argument("failure time outside the recorded stream");
  if (keep_every < 1) throw std::invalid_argument("keep_every must be >= 1");
  std::vector<int> kept;
  for (int t = 1; t <= ttf; t += keep_every) kept.push_back(t);

  const Index n1 = frames.front().rows();
  const Index n2 = frames.front().cols();
  prognostics::AssetStream out;
  out.images = Tensor4d(n1, n2, static_cast<Index>(kept.size()), 1);
  const Index frame = n1 * n2;
  for (std::size_t k = 0; k < kept.size(); ++k)
    out.images.values().segment(static_cast<Index>(k) * frame, frame) =
        Eigen::Map<const VectorX<double>>(frames[kept[k] - 1].data(), frame);
  return out;
}

prognostics::AssetStream inject_missing(const prognostics::AssetStream& stream, double rate,
                                        MissingPattern pattern, std::mt19937_64& rng) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("missing rate must be in [0, 1]");
  prognostics::AssetStream out = stream;
  const Dims4& d = out.images.dims();
  const Index frame = d[0] * d[1];

  auto sample_without_replacement = [&](Index total, Index want) {
    std::vector<Index> idx(total);
    for (Index i = 0; i < total; ++i) idx[i] = i;
    for (Index i = 0; i < want; ++i) {
      std::uniform_int_distribution<Index> pick(i, total - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(want);
    return idx;
  };

  if (pattern == MissingPattern::ImageWise) {
    const Index remove = static_cast<Index>(std::lround(rate * static_cast<double>(d[2])));
    for (Index i3 : sample_without_replacement(d[2], remove))
      out.images.mask().segment(i3 * frame, frame).setConstant(false);
  } else {
    const Index total = out.images.size();
    const Index remove = static_cast<Index>(std::lround(rate * static_cast<double>(total)));
    for (Index pos : sample_without_replacement(total, remove)) out.images.mask()[pos] = false;
  }
  out.images = project_omega(out.images);
  return out;
}

Dataset generate_dataset(const SimConfig& cfg) {
  if (cfg.n_assets < 1) throw std::invalid_argument("asset count must be positive");
  if (cfg.diff_min > cfg.diff_max)
    throw std::invalid_argument("diffusivity range must be ordered");

  Dataset out;
  out.assets.resize(cfg.n_assets);
  std::atomic<int> redraws{0};

  parallel_for(cfg.n_assets, [&](Index m) {
    std::mt19937_64 rng = asset_rng(cfg.seed, m);
    std::uniform_real_distribution<double> diff(cfg.diff_min, cfg.diff_max);
    for (;;) {
      const double alpha = diff(rng) * cfg.diffusivity_scale;
      StreamPair streams = simulate_stream(alpha, cfg, rng);
      VectorX<double> means(cfg.n_steps);
      for (int t = 0; t < cfg.n_steps; ++t) means[t] = streams.noiseless[t].mean();
      const std::optional<int> ttf = compute_ttf(means, cfg.threshold);
      if (!ttf) {
        ++redraws;
        continue;
      }
      SimulatedAsset asset;
      asset.stream = truncate_subsample(streams.noisy, *ttf, cfg.keep_every);
      asset.stream.ttf = static_cast<double>(*ttf);
      asset.true_ttf = *ttf;
      asset.diffusivity = alpha;
      out.assets[m] = std::move(asset);
      break;
    }
  });
  out.redraws = redraws.load();
  return out;
}

}  // namespace tdr::heatsim
