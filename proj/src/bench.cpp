#include "tdr/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "tdr/dataset.hpp"
#include "tdr/mpca.hpp"
#include "tdr/parallel.hpp"
#include "tdr/stats.hpp"

namespace tdr::bench {

using prognostics::AssetStream;
using prognostics::PrognosticModel;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::mt19937_64 salted_rng(std::uint64_t salt, std::uint64_t seed, std::uint64_t a = 0,
                           std::uint64_t b = 0, std::uint64_t c = 0) {
  std::seed_seq seq{salt, seed, a, b, c};
  return std::mt19937_64(seq);
}

/// Fold fits only rank hyperparameters, so they run with a relaxed stopping
/// rule; the winning configuration is refit at the caller's full settings.
supervised::FitConfig fold_config(const supervised::FitConfig& base) {
  supervised::FitConfig cfg = base;
  cfg.tol_epsilon = std::max(base.tol_epsilon, 1e-4);
  cfg.max_iters = std::min(base.max_iters, 40);
  return cfg;
}

/// Median held-out prediction error; assets that cannot be predicted are
/// skipped (a fold with none fails).
double fold_score(const PrognosticModel& model, const std::vector<AssetStream>& held_out) {
  std::vector<double> errors;
  errors.reserve(held_out.size());
  for (const auto& asset : held_out) {
    try {
      const auto pred = prognostics::predict(model, asset);
      errors.push_back(prognostics::prediction_error(pred.point_estimate, *asset.ttf));
    } catch (const std::exception&) {
      // unpredictable stream (e.g. everything masked); leave it out
    }
  }
  if (errors.empty()) throw std::runtime_error("no predictable asset in the held-out fold");
  return median(errors);
}

PrognosticModel train_cell(Method method, const std::vector<AssetStream>& train,
                           const SubspaceDims& dims, double alpha,
                           const supervised::FitConfig& base) {
  if (method == Method::ProposedCv) {
    supervised::FitConfig cfg = base;
    cfg.alpha = alpha;
    return prognostics::train(train, dims, cfg);
  }
  return train_mpca_pipeline(train, mpca::FixedDims{dims}, dims, base.family);
}

}  // namespace

Method parse_method(const std::string& name) {
  if (name == "proposed_cv") return Method::ProposedCv;
  if (name == "mpca_cv") return Method::MpcaCv;
  if (name == "mpca97") return Method::Mpca97;
  throw std::invalid_argument("unknown method: " + name);
}

std::string method_name(Method method) {
  switch (method) {
    case Method::ProposedCv: return "proposed_cv";
    case Method::MpcaCv: return "mpca_cv";
    case Method::Mpca97: return "mpca97";
  }
  throw std::logic_error("unreachable");
}

CvGrid default_grid(int p_max) {
  if (p_max < 1) throw std::invalid_argument("p_max must be >= 1");
  CvGrid grid;
  for (Index p1 = 1; p1 <= p_max; ++p1)
    for (Index p2 = 1; p2 <= p_max; ++p2)
      for (Index p3 = 1; p3 <= p_max; ++p3) grid.p_candidates.push_back({p1, p2, p3});
  return grid;
}

std::vector<int> fold_assignment(std::uint64_t seed, Index count, int folds) {
  if (folds < 2) throw std::invalid_argument("need at least two folds");
  if (count < folds) throw std::invalid_argument("fold count exceeds the asset count");
  std::vector<Index> order(count);
  for (Index i = 0; i < count; ++i) order[i] = i;
  std::mt19937_64 rng = salted_rng(0xf01d, seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(count);
  for (Index i = 0; i < count; ++i) fold[order[i]] = static_cast<int>(i % folds);
  return fold;
}

prognostics::PrognosticModel train_mpca_pipeline(const std::vector<AssetStream>& train,
                                                 const mpca::Selector& selector,
                                                 const SubspaceDims& completion_dims,
                                                 const lls::FamilyKind& family) {
  auto [x, y] = prognostics::pad_and_stack(train);
  // The subspace is detected on the imputed tensor (impute, then reduce).
  // Features are then re-extracted from the raw masked streams so training
  // and test assets pass through the same masked least-squares operator;
  // resolving the imputation beyond the data noise floor buys nothing.
  const Tensor4d imputed = mpca::tucker_complete(x, completion_dims, 1e-6, 30);
  const mpca::MpcaModel model = mpca::mpca_fit(imputed, selector);

  const SubspaceDims p = model.factors.subspace();
  MatrixX<double> s4(static_cast<Index>(train.size()), p.count());
  for (std::size_t m = 0; m < train.size(); ++m) {
    const Tensor4d feat = prognostics::extract_features(train[m], model.factors);
    s4.row(static_cast<Index>(m)) = matricize(feat, 4);
  }

  PrognosticModel out;
  out.factors = model.factors;
  out.subspace = p;
  out.alpha_used = 1.0;
  out.family = family;
  out.lls = lls::fit_lls(y, s4, family);
  return out;
}

CvResult cross_validate(const std::vector<AssetStream>& train, const CvGrid& grid,
                        const supervised::FitConfig& base, Method method, std::uint64_t seed) {
  if (grid.p_candidates.empty()) throw std::invalid_argument("empty candidate grid");
  if (method == Method::Mpca97)
    throw std::invalid_argument("the FVE baseline does not use cross-validation");

  const Index count = static_cast<Index>(train.size());
  const std::vector<int> fold = fold_assignment(seed, count, grid.folds);

  std::vector<CvCell> cells;
  if (method == Method::ProposedCv) {
    if (grid.alphas.empty()) throw std::invalid_argument("empty alpha grid");
    for (const auto& dims : grid.p_candidates)
      for (double alpha : grid.alphas) cells.push_back({dims, alpha, 0.0, false, ""});
  } else {
    for (const auto& dims : grid.p_candidates) cells.push_back({dims, 1.0, 0.0, false, ""});
  }

  struct Task {
    std::size_t cell;
    int fold;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < cells.size(); ++c)
    for (int f = 0; f < grid.folds; ++f) tasks.push_back({c, f});

  std::vector<double> scores(tasks.size(), 0.0);
  std::vector<std::string> failures(tasks.size());

  parallel_for(static_cast<Index>(tasks.size()), [&](Index t) {
    const Task& task = tasks[t];
    const CvCell& cell = cells[task.cell];
    std::vector<AssetStream> fit_set, held_out;
    for (Index m = 0; m < count; ++m)
      (fold[m] == task.fold ? held_out : fit_set).push_back(train[m]);
    try {
      const PrognosticModel model =
          train_cell(method, fit_set, cell.dims, cell.alpha, fold_config(base));
      scores[t] = fold_score(model, held_out);
    } catch (const std::exception& e) {
      failures[t] = e.what();
    }
  });

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    CvCell& cell = cells[tasks[t].cell];
    if (!failures[t].empty()) {
      if (cell.message.empty()) cell.message = failures[t];
      cell.score = std::numeric_limits<double>::quiet_NaN();
    } else if (cell.message.empty()) {
      cell.score += scores[t] / static_cast<double>(grid.folds);
    }
  }
  for (auto& cell : cells) cell.ok = cell.message.empty();

  const CvCell* best = nullptr;
  for (const auto& cell : cells) {
    if (!cell.ok) continue;
    if (!best || cell.score < best->score ||
        (cell.score == best->score &&
         (cell.dims.count() < best->dims.count() ||
          (cell.dims.count() == best->dims.count() && cell.alpha < best->alpha))))
      best = &cell;
  }
  if (!best) throw std::runtime_error("every grid point failed during cross-validation");

  CvResult out;
  out.dims = best->dims;
  out.alpha = best->alpha;
  out.table = std::move(cells);
  return out;
}

prognostics::PrognosticModel train_method(Method method, const std::vector<AssetStream>& train,
                                          const CvGrid& grid, const supervised::FitConfig& base,
                                          std::uint64_t seed, CvResult* chosen) {
  if (method == Method::Mpca97) {
    if (train.empty()) throw std::invalid_argument("no training assets");
    const Dims4& d = train.front().images.dims();
    Index depth = 0;
    for (const auto& a : train) depth = std::max(depth, a.images.dims()[2]);
    const SubspaceDims completion{std::min<Index>(4, d[0]), std::min<Index>(4, d[1]),
                                  std::min<Index>(4, depth)};
    if (chosen) *chosen = CvResult{};
    return train_mpca_pipeline(train, mpca::FveTarget{0.97}, completion, base.family);
  }
  CvResult cv = cross_validate(train, grid, base, method, seed);
  PrognosticModel model = train_cell(method, train, cv.dims, cv.alpha, base);
  if (chosen) *chosen = std::move(cv);
  return model;
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  if (cfg.methods.empty()) throw std::invalid_argument("no methods requested");
  if (cfg.missing_rates.empty()) throw std::invalid_argument("no missing rates requested");
  if (cfg.seeds.empty()) throw std::invalid_argument("no seeds requested");
  if (cfg.train_count < 2 || cfg.test_count < 1)
    throw std::invalid_argument("need at least two training and one test asset");

  BenchmarkReport report;
  for (const std::uint64_t seed : cfg.seeds) {
    std::vector<AssetStream> assets;
    if (cfg.data_dir) {
      assets = dataset::load(*cfg.data_dir);
    } else {
      heatsim::SimConfig sim = cfg.sim;
      sim.seed = seed;
      sim.n_assets = static_cast<int>(cfg.train_count + cfg.test_count);
      auto generated = heatsim::generate_dataset(sim);
      assets.reserve(generated.assets.size());
      for (auto& a : generated.assets) assets.push_back(std::move(a.stream));
    }
    if (static_cast<Index>(assets.size()) < cfg.train_count + cfg.test_count)
      throw std::invalid_argument("dataset smaller than the requested train/test split");

    std::vector<Index> order(assets.size());
    for (std::size_t i = 0; i < assets.size(); ++i) order[i] = static_cast<Index>(i);
    std::mt19937_64 split_rng = salted_rng(0x5b117, seed);
    std::shuffle(order.begin(), order.end(), split_rng);

    for (const double rate : cfg.missing_rates) {
      const std::uint64_t rate_key = static_cast<std::uint64_t>(std::lround(rate * 1e6));
      auto degraded = [&](Index asset_idx) {
        std::mt19937_64 rng = salted_rng(0x317, seed, rate_key, asset_idx);
        return heatsim::inject_missing(assets[asset_idx], rate, cfg.pattern, rng);
      };
      std::vector<AssetStream> train, test;
      std::vector<Index> test_ids;
      for (Index i = 0; i < cfg.train_count; ++i) train.push_back(degraded(order[i]));
      for (Index i = 0; i < cfg.test_count; ++i) {
        test.push_back(degraded(order[cfg.train_count + i]));
        test_ids.push_back(order[cfg.train_count + i]);
      }

      for (const Method method : cfg.methods) {
        BenchmarkCell cell;
        cell.method = method;
        cell.missing_rate = rate;
        cell.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
          CvResult cv;
          const PrognosticModel model = train_method(method, train, cfg.grid, cfg.fit, seed, &cv);
          cell.dims = model.subspace;
          cell.alpha = method == Method::ProposedCv ? cv.alpha : 1.0;
          for (std::size_t i = 0; i < test.size(); ++i) {
            try {
              const auto pred = prognostics::predict(model, test[i]);
              cell.asset_ids.push_back(test_ids[i]);
              cell.truths.push_back(*test[i].ttf);
              cell.estimates.push_back(pred.point_estimate);
              cell.errors.push_back(
                  prognostics::prediction_error(pred.point_estimate, *test[i].ttf));
            } catch (const std::exception&) {
              // unpredictable test stream; skipped
            }
          }
          if (cell.errors.empty()) throw std::runtime_error("no predictable test asset");
          cell.median_error = median(cell.errors);
          cell.iqr_error = iqr(cell.errors);
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.message = e.what();
        }
        cell.runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

void write_errors_csv(const std::filesystem::path& file, const BenchmarkReport& report) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << "method,missing_rate,seed,asset_id,true_ttf,estimate,abs_rel_error\n";
  for (const auto& cell : report.cells) {
    if (!cell.ok) continue;
    for (std::size_t i = 0; i < cell.errors.size(); ++i)
      os << method_name(cell.method) << "," << fmt_double(cell.missing_rate) << "," << cell.seed
         << "," << cell.asset_ids[i] << "," << fmt_double(cell.truths[i]) << ","
         << fmt_double(cell.estimates[i]) << "," << fmt_double(cell.errors[i]) << "\n";
  }
}

BenchmarkReport read_errors_csv(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty errors file");

  std::map<std::tuple<std::string, double, std::uint64_t>, BenchmarkCell> cells;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string method, rate, seed, asset, truth, estimate, error;
    std::getline(row, method, ',');
    std::getline(row, rate, ',');
    std::getline(row, seed, ',');
    std::getline(row, asset, ',');
    std::getline(row, truth, ',');
    std::getline(row, estimate, ',');
    std::getline(row, error, ',');
    const auto key = std::make_tuple(method, std::stod(rate), std::stoull(seed));
    BenchmarkCell& cell = cells[key];
    cell.method = parse_method(method);
    cell.missing_rate = std::get<1>(key);
    cell.seed = std::get<2>(key);
    cell.asset_ids.push_back(std::stoll(asset));
    cell.truths.push_back(std::stod(truth));
    cell.estimates.push_back(std::stod(estimate));
    cell.errors.push_back(std::stod(error));
  }

  BenchmarkReport report;
  for (auto& [key, cell] : cells) {
    cell.median_error = median(cell.errors);
    cell.iqr_error = iqr(cell.errors);
    cell.ok = true;
    report.cells.push_back(std::move(cell));
  }
  return report;
}

void write_report_csv(const std::filesystem::path& file, const BenchmarkReport& report) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << "method,missing_rate,seed,p1,p2,p3,alpha,n_test,median_error,iqr_error,"
        "runtime_seconds,status,message\n";
  for (const auto& cell : report.cells) {
    os << method_name(cell.method) << "," << fmt_double(cell.missing_rate) << "," << cell.seed
       << "," << cell.dims.p1 << "," << cell.dims.p2 << "," << cell.dims.p3 << ","
       << fmt_double(cell.alpha) << "," << cell.errors.size() << ","
       << (cell.ok ? fmt_double(cell.median_error) : "") << ","
       << (cell.ok ? fmt_double(cell.iqr_error) : "") << ","
       << fmt_double(cell.runtime_seconds) << "," << (cell.ok ? "ok" : "failed") << ",";
    std::string msg = cell.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    os << msg << "\n";
  }
}

void write_boxplots(const std::filesystem::path& dir, const BenchmarkReport& report) {
  std::filesystem::create_directories(dir);
  std::map<double, std::map<std::string, std::vector<double>>> by_rate;
  for (const auto& cell : report.cells) {
    if (!cell.ok) continue;
    auto& dst = by_rate[cell.missing_rate][method_name(cell.method)];
    dst.insert(dst.end(), cell.errors.begin(), cell.errors.end());
  }

  for (const auto& [rate, groups] : by_rate) {
    const double width = 160.0 * static_cast<double>(groups.size()) + 80.0;
    const double height = 360.0;
    const double plot_top = 30.0, plot_bottom = height - 50.0;
    double emax = 0.0;
    for (const auto& [name, errors] : groups)
      for (double e : errors) emax = std::max(emax, e);
    if (emax <= 0.0) emax = 1.0;
    auto ycoord = [&](double v) {
      return plot_bottom - (v / (1.05 * emax)) * (plot_bottom - plot_top);
    };

    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n";
    svg << "<text x='10' y='18' font-size='14'>absolute relative prediction error, missing rate "
        << rate << "</text>\n";
    svg << "<line x1='50' y1='" << plot_top << "' x2='50' y2='" << plot_bottom
        << "' stroke='black'/>\n";
    svg << "<text x='8' y='" << ycoord(emax) + 4 << "' font-size='11'>" << fmt_double(emax)
        << "</text>\n<text x='8' y='" << plot_bottom + 4 << "' font-size='11'>0</text>\n";

    double x = 110.0;
    for (const auto& [name, errors] : groups) {
      std::vector<double> v = errors;
      const double q1 = quantile(v, 0.25), q2 = quantile(v, 0.5), q3 = quantile(v, 0.75);
      const double spread = q3 - q1;
      double lo = q3, hi = q1;
      for (double e : v) {
        if (e >= q1 - 1.5 * spread) lo = std::min(lo, e);
        if (e <= q3 + 1.5 * spread) hi = std::max(hi, e);
      }
      svg << "<line x1='" << x << "' y1='" << ycoord(lo) << "' x2='" << x << "' y2='" << ycoord(hi)
          << "' stroke='black'/>\n";
      svg << "<rect x='" << x - 40 << "' y='" << ycoord(q3) << "' width='80' height='"
          << std::max(1.0, ycoord(q1) - ycoord(q3)) << "' fill='#9ecae1' stroke='black'/>\n";
      svg << "<line x1='" << x - 40 << "' y1='" << ycoord(q2) << "' x2='" << x + 40 << "' y2='"
          << ycoord(q2) << "' stroke='black' stroke-width='2'/>\n";
      for (double e : v)
        if (e < q1 - 1.5 * spread || e > q3 + 1.5 * spread)
          svg << "<circle cx='" << x << "' cy='" << ycoord(e) << "' r='2' fill='black'/>\n";
      svg << "<text x='" << x << "' y='" << height - 28
          << "' font-size='12' text-anchor='middle'>" << name << "</text>\n";
      x += 160.0;
    }
    svg << "</svg>\n";

    std::ostringstream name;
    name << "boxplot_missing_" << std::lround(rate * 100) << ".svg";
    std::ofstream os(dir / name.str());
    if (!os) throw std::runtime_error("cannot write box plot");
    os << svg.str();
  }
}

}  // namespace tdr::bench
