#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "tdr/bench.hpp"
#include "tdr/dataset.hpp"
#include "tdr/heat_sim.hpp"
#include "tdr/io.hpp"
#include "tdr/prognostics.hpp"
#include "tdr/stats.hpp"
#include "tdr/supervised.hpp"

namespace fs = std::filesystem;
using namespace tdr;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

heatsim::MissingPattern parse_pattern(const std::string& name) {
  if (name == "entry") return heatsim::MissingPattern::EntryWise;
  if (name == "image") return heatsim::MissingPattern::ImageWise;
  throw CLI::ValidationError("--missing-pattern", "must be 'entry' or 'image'");
}

struct SimFlags {
  heatsim::SimConfig cfg;
  void attach(CLI::App* app) {
    app->add_option("--grid-size", cfg.n_grid, "interior grid points per side");
    app->add_option("--steps", cfg.n_steps, "simulated time steps");
    app->add_option("--threshold", cfg.threshold, "soft failure threshold");
    app->add_option("--noise-var", cfg.noise_variance, "pixel noise variance");
    app->add_option("--keep-every", cfg.keep_every, "subsampling stride");
    app->add_option("--diff-scale", cfg.diffusivity_scale,
                    "multiplier on the drawn diffusivity (stretches failure times)");
  }
};

std::vector<prognostics::AssetStream> load_data(const std::string& dir) {
  return dataset::load(fs::path(dir));
}

void write_predictions_csv(const fs::path& file, const prognostics::PrognosticModel& model,
                           const std::vector<prognostics::AssetStream>& assets) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << "asset_id,point_estimate,location,scale,family,true_ttf,abs_rel_error\n";
  std::size_t written = 0;
  for (std::size_t m = 0; m < assets.size(); ++m) {
    try {
      const auto pred = prognostics::predict(model, assets[m]);
      os << m << "," << fmt(pred.point_estimate) << "," << fmt(pred.location) << ","
         << fmt(pred.scale) << "," << lls::family_name(pred.family);
      if (assets[m].ttf) {
        os << "," << fmt(*assets[m].ttf) << ","
           << fmt(prognostics::prediction_error(pred.point_estimate, *assets[m].ttf));
      } else {
        os << ",,";
      }
      os << "\n";
      ++written;
    } catch (const std::exception& e) {
      std::cerr << "warning: asset " << m << " skipped: " << e.what() << "\n";
    }
  }
  if (written == 0) throw std::runtime_error("no asset could be predicted");
}

int run(int argc, char** argv) {
  CLI::App app{"supervised tensor dimension reduction for degradation image prognostics"};
  app.require_subcommand(1);

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "generate a degradation image dataset");
  SimFlags sim_flags;
  int sim_assets = 0;
  std::uint64_t sim_seed = 0;
  std::string sim_out;
  double sim_missing_rate = 0.0;
  std::string sim_pattern = "image";
  sim_cmd->add_option("--assets", sim_assets, "number of assets")->required();
  sim_cmd->add_option("--seed", sim_seed, "generator seed");
  sim_cmd->add_option("--out", sim_out, "output directory")->required();
  sim_cmd->add_option("--missing-rate", sim_missing_rate, "fraction of data to mask");
  sim_cmd->add_option("--missing-pattern", sim_pattern, "entry|image");
  sim_flags.attach(sim_cmd);

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "fit a prognostic model");
  std::string train_data, train_out, train_family = "lognormal";
  supervised::FitConfig train_cfg;
  SubspaceDims train_dims{2, 2, 2};
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--out", train_out, "model output directory")->required();
  train_cmd->add_option("--family", train_family,
                        "normal|lognormal|logistic|loglogistic|sev|weibull");
  train_cmd->add_option("--p1", train_dims.p1, "mode-1 subspace dimension");
  train_cmd->add_option("--p2", train_dims.p2, "mode-2 subspace dimension");
  train_cmd->add_option("--p3", train_dims.p3, "mode-3 subspace dimension");
  train_cmd->add_option("--alpha", train_cfg.alpha, "completion weight in [0,1]");
  train_cmd->add_option("--tol", train_cfg.tol_epsilon, "relative objective-decrease stop");
  train_cmd->add_option("--max-iters", train_cfg.max_iters, "block-update cycle cap");
  train_cmd->add_option("--seed", train_cfg.seed, "seed (random initialization)");

  // ---- predict ----
  auto* predict_cmd = app.add_subcommand("predict", "predict failure-time distributions");
  std::string predict_data, predict_model, predict_out;
  predict_cmd->add_option("--data", predict_data, "dataset directory")->required();
  predict_cmd->add_option("--model", predict_model, "model directory")->required();
  predict_cmd->add_option("--out", predict_out, "predictions CSV")->required();

  // ---- cv ----
  auto* cv_cmd = app.add_subcommand("cv", "cross-validate subspace dims and alpha");
  std::string cv_data, cv_family = "lognormal", cv_method = "proposed_cv", cv_out;
  int cv_pmax = 4, cv_folds = 10;
  std::uint64_t cv_seed = 1;
  std::vector<double> cv_alphas{0.2, 0.5, 0.8};
  cv_cmd->add_option("--data", cv_data, "dataset directory")->required();
  cv_cmd->add_option("--family", cv_family, "regression family");
  cv_cmd->add_option("--p-max", cv_pmax, "candidate dims run 1..p-max per mode");
  cv_cmd->add_option("--alphas", cv_alphas, "candidate completion weights")->delimiter(',');
  cv_cmd->add_option("--folds", cv_folds, "cross-validation folds");
  cv_cmd->add_option("--seed", cv_seed, "fold-assignment seed");
  cv_cmd->add_option("--method", cv_method, "proposed_cv|mpca_cv");
  cv_cmd->add_option("--out", cv_out, "score table CSV");

  // ---- benchmark ----
  auto* bench_cmd = app.add_subcommand("benchmark", "compare methods across missing rates");
  SimFlags bench_sim;
  bench::BenchmarkConfig bench_cfg;
  std::string bench_data, bench_out, bench_family = "lognormal", bench_pattern = "image";
  std::vector<std::string> bench_methods{"proposed_cv", "mpca_cv", "mpca97"};
  int bench_pmax = 4;
  std::vector<double> bench_alphas{0.2, 0.5, 0.8};
  int bench_folds = 10;
  bench_cmd->add_option("--data", bench_data, "pristine dataset directory (simulates otherwise)");
  bench_cmd->add_option("--out", bench_out, "report output directory")->required();
  bench_cmd->add_option("--train", bench_cfg.train_count, "training assets per seed");
  bench_cmd->add_option("--test", bench_cfg.test_count, "test assets per seed");
  bench_cmd->add_option("--seeds", bench_cfg.seeds, "benchmark seeds")->delimiter(',');
  bench_cmd->add_option("--missing-rates", bench_cfg.missing_rates, "missing-data rates")
      ->delimiter(',');
  bench_cmd->add_option("--missing-pattern", bench_pattern, "entry|image");
  bench_cmd->add_option("--methods", bench_methods, "subset of proposed_cv,mpca_cv,mpca97")
      ->delimiter(',');
  bench_cmd->add_option("--family", bench_family, "regression family");
  bench_cmd->add_option("--p-max", bench_pmax, "candidate dims run 1..p-max per mode");
  bench_cmd->add_option("--alphas", bench_alphas, "candidate completion weights")->delimiter(',');
  bench_cmd->add_option("--folds", bench_folds, "cross-validation folds");
  bench_sim.attach(bench_cmd);

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "recompute tables and plots from an error CSV");
  std::string report_errors, report_out;
  report_cmd->add_option("--errors", report_errors, "per-asset error CSV")->required();
  report_cmd->add_option("--out", report_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // 0 covers --help and --version
  }

  if (sim_cmd->parsed()) {
    if (sim_assets < 1) throw std::invalid_argument("--assets must be positive");
    heatsim::SimConfig cfg = sim_flags.cfg;
    cfg.n_assets = sim_assets;
    cfg.seed = sim_seed;
    heatsim::Dataset data = heatsim::generate_dataset(cfg);
    if (data.redraws > 0)
      std::cerr << "warning: " << data.redraws << " diffusivity draws never crossed the threshold\n";
    if (sim_missing_rate > 0.0) {
      const auto pattern = parse_pattern(sim_pattern);
      for (std::size_t m = 0; m < data.assets.size(); ++m) {
        std::seed_seq seq{static_cast<std::uint64_t>(0x317), sim_seed,
                          static_cast<std::uint64_t>(std::lround(sim_missing_rate * 1e6)),
                          static_cast<std::uint64_t>(m)};
        std::mt19937_64 rng(seq);
        data.assets[m].stream =
            heatsim::inject_missing(data.assets[m].stream, sim_missing_rate, pattern, rng);
      }
    }
    dataset::save(sim_out, data.assets, cfg);
    std::cout << "wrote " << data.assets.size() << " assets to " << sim_out << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    train_cfg.family = lls::parse_family(train_family);
    const auto assets = load_data(train_data);
    const auto model = prognostics::train(assets, train_dims, train_cfg);
    prognostics::save_model(model, train_out);
    std::cout << "model written to " << train_out << "\n";
    return 0;
  }

  if (predict_cmd->parsed()) {
    const auto model = prognostics::load_model(predict_model);
    const auto assets = load_data(predict_data);
    write_predictions_csv(predict_out, model, assets);
    std::cout << "predictions written to " << predict_out << "\n";
    return 0;
  }

  if (cv_cmd->parsed()) {
    const auto assets = load_data(cv_data);
    bench::CvGrid grid = bench::default_grid(cv_pmax);
    grid.alphas = cv_alphas;
    grid.folds = cv_folds;
    supervised::FitConfig base;
    base.family = lls::parse_family(cv_family);
    const auto result =
        bench::cross_validate(assets, grid, base, bench::parse_method(cv_method), cv_seed);
    std::cout << "chosen p1=" << result.dims.p1 << " p2=" << result.dims.p2
              << " p3=" << result.dims.p3 << " alpha=" << result.alpha << "\n";
    if (!cv_out.empty()) {
      std::ofstream os(cv_out);
      if (!os) throw std::runtime_error("cannot write " + cv_out);
      os << "p1,p2,p3,alpha,score,status,message\n";
      for (const auto& cell : result.table) {
        std::string msg = cell.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        os << cell.dims.p1 << "," << cell.dims.p2 << "," << cell.dims.p3 << ","
           << fmt(cell.alpha) << "," << (cell.ok ? fmt(cell.score) : "") << ","
           << (cell.ok ? "ok" : "failed") << "," << msg << "\n";
      }
    }
    return 0;
  }

  if (bench_cmd->parsed()) {
    bench_cfg.fit.family = lls::parse_family(bench_family);
    bench_cfg.pattern = parse_pattern(bench_pattern);
    bench_cfg.methods.clear();
    for (const auto& name : bench_methods) bench_cfg.methods.push_back(bench::parse_method(name));
    bench_cfg.grid = bench::default_grid(bench_pmax);
    bench_cfg.grid.alphas = bench_alphas;
    bench_cfg.grid.folds = bench_folds;
    bench_cfg.sim = bench_sim.cfg;
    if (!bench_data.empty()) bench_cfg.data_dir = fs::path(bench_data);

    const auto report = bench::run_benchmark(bench_cfg);
    fs::create_directories(bench_out);
    bench::write_report_csv(fs::path(bench_out) / "report.csv", report);
    bench::write_errors_csv(fs::path(bench_out) / "errors.csv", report);
    bench::write_boxplots(bench_out, report);
    for (const auto& cell : report.cells) {
      std::cout << bench::method_name(cell.method) << " rate=" << cell.missing_rate
                << " seed=" << cell.seed;
      if (cell.ok)
        std::cout << " median=" << cell.median_error << " iqr=" << cell.iqr_error;
      else
        std::cout << " FAILED (" << cell.message << ")";
      std::cout << " [" << cell.runtime_seconds << "s]\n";
    }
    return 0;
  }

  if (report_cmd->parsed()) {
    const auto report = bench::read_errors_csv(report_errors);
    fs::create_directories(report_out);
    std::ofstream os(fs::path(report_out) / "summary.csv");
    if (!os) throw std::runtime_error("cannot write summary.csv");
    os << "method,missing_rate,seed,n,median_error,iqr_error\n";
    for (const auto& cell : report.cells)
      os << bench::method_name(cell.method) << "," << fmt(cell.missing_rate) << "," << cell.seed
         << "," << cell.errors.size() << "," << fmt(cell.median_error) << ","
         << fmt(cell.iqr_error) << "\n";
    bench::write_boxplots(report_out, report);
    std::cout << "report written to " << report_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ParseError&) {
    return 2;  // unreachable: CLI11_PARSE handles these
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
