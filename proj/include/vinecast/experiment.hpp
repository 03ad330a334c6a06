#pragma once

#include "vinecast/common.hpp"
#include "vinecast/dataset.hpp"
#include "vinecast/dvinereg.hpp"
#include "vinecast/emos.hpp"
#include "vinecast/verify.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace vinecast {

//! Full experiment configuration; mirrors the CLI flags and the JSON config
//! file one-to-one.
struct ExperimentConfig
{
  std::string input_csv; // empty: generate synthetic data
  SynthSpec synth;
  int horizon_hours = 24;
  std::vector<std::string> models = { "dvine", "emos_s", "emos_r" };
  int t1 = 0; // 0: horizon default
  int refined_n = 45;
  int test_size = 1000;
  int quantile_grid = 100;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int refit_every = 1;
  int threads = 0; // 0: hardware concurrency
  bool full_candidates = false;
  bool select_once = false;
  //! Also score the gaussian models on the quantile grid and report the
  //! largest gap to the closed form.
  bool crps_cross_check = false;
  int pit_bins = 20;

  static int default_t1(int horizon_hours)
  {
    switch (horizon_hours) {
      case 24:
        return 40;
      case 48:
        return 60;
      case 120:
        return 100;
      case 240:
        return 200;
      default:
        return 40;
    }
  }

  int effective_t1() const { return t1 > 0 ? t1 : default_t1(horizon_hours); }

  void validate() const
  {
    if (test_size < 1) {
      throw config_error("test_size must be at least 1");
    }
    if (quantile_grid < 2) {
      throw config_error("quantile grid R must be at least 2");
    }
    if (refit_every < 1) {
      throw config_error("refit_every must be at least 1");
    }
    if (refined_n < 1) {
      throw config_error("refined window n must be at least 1");
    }
    static const std::set<std::string> known = { "dvine", "emos_s",
                                                 "emos_r" };
    if (models.empty()) {
      throw config_error("at least one model must be requested");
    }
    for (const auto& m : models) {
      if (!known.count(m)) {
        throw config_error("unknown model '" + m +
                           "' (expected dvine, emos_s or emos_r)");
      }
    }
  }

  static ExperimentConfig from_json(const nlohmann::json& j)
  {
    ExperimentConfig cfg;
    cfg.input_csv = j.value("input", cfg.input_csv);
    if (j.contains("synth")) {
      cfg.synth = SynthSpec::from_json(j["synth"]);
    }
    cfg.horizon_hours = j.value("horizon", cfg.horizon_hours);
    if (j.contains("models")) {
      cfg.models = j["models"].get<std::vector<std::string>>();
    }
    cfg.t1 = j.value("t1", cfg.t1);
    cfg.refined_n = j.value("n", cfg.refined_n);
    cfg.test_size = j.value("test_size", cfg.test_size);
    cfg.quantile_grid = j.value("R", cfg.quantile_grid);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.refit_every = j.value("refit_every", cfg.refit_every);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.full_candidates = j.value("full_candidates", cfg.full_candidates);
    cfg.select_once = j.value("select_once", cfg.select_once);
    cfg.crps_cross_check = j.value("crps_cross_check", cfg.crps_cross_check);
    cfg.pit_bins = j.value("pit_bins", cfg.pit_bins);
    cfg.validate();
    return cfg;
  }

  nlohmann::json to_json() const
  {
    return nlohmann::json{ { "input", input_csv },
                           { "horizon", horizon_hours },
                           { "models", models },
                           { "t1", effective_t1() },
                           { "n", refined_n },
                           { "test_size", test_size },
                           { "R", quantile_grid },
                           { "seed", seed },
                           { "refit_every", refit_every },
                           { "full_candidates", full_candidates },
                           { "select_once", select_once },
                           { "pit_bins", pit_bins } };
  }
};

//! Candidate predictor columns for the D-vine: the default 3-predictor set
//! (ctrl, hres, perturbed mean) or the full member list plus the mean.
struct PredictorTable
{
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns; // one per candidate, full series
};

inline PredictorTable make_predictor_table(const StationSeries& series,
                                           bool full_candidates)
{
  const auto gp = group_predictors(series);
  PredictorTable table;
  const std::size_t n = series.rows();
  if (full_candidates) {
    for (std::size_t j = 0; j < series.member_count(); ++j) {
      table.names.push_back(series.member_names[j]);
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) {
        col[i] = series.members(static_cast<Eigen::Index>(i),
                                static_cast<Eigen::Index>(j));
      }
      table.columns.push_back(std::move(col));
    }
    std::vector<double> mean_col(n);
    for (std::size_t i = 0; i < n; ++i) {
      mean_col[i] = gp[i].mean_perturbed;
    }
    table.names.push_back("mean");
    table.columns.push_back(std::move(mean_col));
  } else {
    std::vector<double> ctrl(n), hres(n), mean(n);
    for (std::size_t i = 0; i < n; ++i) {
      ctrl[i] = gp[i].ctrl;
      hres[i] = gp[i].hres;
      mean[i] = gp[i].mean_perturbed;
    }
    table.names = { "ctrl", "hres", "mean" };
    table.columns.push_back(std::move(ctrl));
    table.columns.push_back(std::move(hres));
    table.columns.push_back(std::move(mean));
  }
  return table;
}

struct ExperimentResult
{
  std::vector<ScoreReport> reports; // one per model, config order
  std::vector<long> rank_bins;      // raw-ensemble verification ranks
  nlohmann::json summary;
};

namespace detail {

inline std::vector<std::size_t> window_rows_for(
  const StationSeries& series, const std::string& model,
  std::size_t test_row, const ExperimentConfig& cfg)
{
  std::vector<std::size_t> rows;
  if (model == "emos_s") {
    // day numbers are 1-based; row i is day i+1
    const auto idx = standard_window(static_cast<int>(test_row) + 1,
                                     cfg.effective_t1());
    rows.reserve(idx.size());
    for (int day : idx) {
      rows.push_back(static_cast<std::size_t>(day - 1));
    }
  } else {
    const auto dates =
      refined_window(series.dates[test_row], cfg.refined_n,
                     series.dates.front(), series.dates.back(),
                     cfg.horizon_hours);
    rows.reserve(dates.size());
    for (const auto& d : dates) {
      const long r = series.row_of(d);
      if (r >= 0) {
        rows.push_back(static_cast<std::size_t>(r));
      }
    }
  }
  // leakage guard: training must strictly precede the test day
  for (auto r : rows) {
    if (r >= test_row) {
      throw std::logic_error("window leaked test data at row " +
                             std::to_string(r));
    }
  }
  if (rows.empty()) {
    throw data_error("empty training window for test day " +
                     series.dates[test_row].to_string());
  }
  return rows;
}

struct DayScore
{
  double crps = 0.0;
  double pit = 0.0;
};

} // namespace detail

//! Runs the full post-processing experiment: per test day, build the
//! training window, fit each requested model, predict that day and score it.
//! Refits happen every cfg.refit_every days; anchor fits are processed by a
//! worker pool and merged in date order, so results are reproducible.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const StationSeries& imputed)
{
  cfg.validate();
  const std::size_t n = imputed.rows();
  if (static_cast<std::size_t>(cfg.test_size) >= n) {
    throw data_error("test_size " + std::to_string(cfg.test_size) +
                     " leaves no training data (series has " +
                     std::to_string(n) + " rows)");
  }
  const std::size_t test_start = n - static_cast<std::size_t>(cfg.test_size);
  const auto gp = group_predictors(imputed);
  const auto predictors = make_predictor_table(imputed, cfg.full_candidates);

  // fail fast with the first infeasible test day
  for (const auto& model : cfg.models) {
    try {
      detail::window_rows_for(imputed, model, test_start, cfg);
    } catch (const data_error& e) {
      throw data_error("model " + model + ", first test day " +
                       imputed.dates[test_start].to_string() + ": " +
                       e.what());
    }
  }

  struct Anchor
  {
    std::size_t fit_row;
    std::vector<std::size_t> days; // test rows served by this fit
  };
  std::vector<Anchor> anchors;
  for (std::size_t row = test_start; row < n;
       row += static_cast<std::size_t>(cfg.refit_every)) {
    Anchor a;
    a.fit_row = row;
    for (std::size_t d = row;
         d < std::min(n, row + static_cast<std::size_t>(cfg.refit_every));
         ++d) {
      a.days.push_back(d);
    }
    anchors.push_back(std::move(a));
  }

  // in select-once mode the predictor order is chosen on the first window
  // and reused for every later refit
  std::vector<std::size_t> fixed_order;
  bool use_fixed_order = false;
  if (cfg.select_once) {
    for (const auto& model_name : cfg.models) {
      if (model_name != "dvine") {
        continue;
      }
      const auto rows =
        detail::window_rows_for(imputed, "dvine", test_start, cfg);
      std::vector<double> y;
      std::vector<std::vector<double>> xcols(predictors.columns.size());
      for (auto r : rows) {
        y.push_back(imputed.obs[r]);
      }
      for (std::size_t c = 0; c < predictors.columns.size(); ++c) {
        for (auto r : rows) {
          xcols[c].push_back(predictors.columns[c][r]);
        }
      }
      DVineFitOptions opts;
      opts.predictor_names = predictors.names;
      auto [model, trace] = select_and_fit(y, xcols, FamilyCatalog{}, opts);
      fixed_order = model.predictor_order();
      use_fixed_order = true;
    }
  }

  std::vector<std::vector<detail::DayScore>> day_scores(
    cfg.models.size(),
    std::vector<detail::DayScore>(static_cast<std::size_t>(cfg.test_size)));
  std::atomic<double> cross_check_gap{ 0.0 };

  std::atomic<std::size_t> next_anchor{ 0 };
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto process_anchor = [&](const Anchor& anchor) {
    for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
      const auto& model_name = cfg.models[mi];
      const auto rows =
        detail::window_rows_for(imputed, model_name, anchor.fit_row, cfg);

      if (model_name == "dvine") {
        std::vector<double> y;
        y.reserve(rows.size());
        std::vector<std::vector<double>> xcols(predictors.columns.size());
        for (auto r : rows) {
          y.push_back(imputed.obs[r]);
        }
        for (std::size_t c = 0; c < predictors.columns.size(); ++c) {
          xcols[c].reserve(rows.size());
          for (auto r : rows) {
            xcols[c].push_back(predictors.columns[c][r]);
          }
        }
        DVineFitOptions opts;
        opts.predictor_names = predictors.names;
        if (use_fixed_order) {
          opts.forced_order = fixed_order;
        }
        auto [model, trace] = select_and_fit(y, xcols, FamilyCatalog{}, opts);
        for (auto day : anchor.days) {
          std::vector<double> xs(model.predictor_count());
          for (std::size_t s = 0; s < model.predictor_count(); ++s) {
            xs[s] = predictors.columns[model.predictor_order()[s]][day];
          }
          const auto quantiles =
            model.predictive_quantiles(xs, cfg.quantile_grid);
          auto& slot = day_scores[mi][day - test_start];
          slot.crps = crps_from_quantiles(quantiles, imputed.obs[day]);
          slot.pit = model.predictive_cdf(imputed.obs[day], xs);
        }
      } else {
        std::vector<EmosTrainingRow> train;
        train.reserve(rows.size());
        for (auto r : rows) {
          train.push_back({ gp[r], imputed.obs[r] });
        }
        const auto params = fit_emos(train);
        for (auto day : anchor.days) {
          const auto fc = emos_predict(params, gp[day]);
          auto& slot = day_scores[mi][day - test_start];
          slot.crps = crps_gaussian(fc.mu, fc.sigma, imputed.obs[day]);
          slot.pit = stats::norm_cdf((imputed.obs[day] - fc.mu) / fc.sigma);
          if (cfg.crps_cross_check) {
            std::vector<double> grid(
              static_cast<std::size_t>(cfg.quantile_grid));
            for (int r = 1; r <= cfg.quantile_grid; ++r) {
              grid[static_cast<std::size_t>(r - 1)] =
                fc.mu + fc.sigma * stats::norm_quantile(
                                     r / (cfg.quantile_grid + 1.0));
            }
            const double gap = std::fabs(
              crps_from_quantiles(grid, imputed.obs[day]) - slot.crps);
            double seen = cross_check_gap.load();
            while (gap > seen &&
                   !cross_check_gap.compare_exchange_weak(seen, gap)) {
            }
          }
        }
      }
    }
  };

  auto worker = [&]() {
    while (true) {
      const std::size_t i = next_anchor.fetch_add(1);
      if (i >= anchors.size()) {
        return;
      }
      try {
        process_anchor(anchors[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
      }
    }
  };

  unsigned thread_count = cfg.threads > 0
                            ? static_cast<unsigned>(cfg.threads)
                            : std::max(1u, std::thread::hardware_concurrency());
  thread_count =
    std::min<unsigned>(thread_count, static_cast<unsigned>(anchors.size()));
  if (thread_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (unsigned t = 0; t < thread_count; ++t) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) {
      th.join();
    }
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }

  ExperimentResult result;
  for (std::size_t mi = 0; mi < cfg.models.size(); ++mi) {
    ScoreReport report;
    report.model = cfg.models[mi];
    report.station = imputed.station_id;
    for (std::size_t d = 0; d < static_cast<std::size_t>(cfg.test_size);
         ++d) {
      report.dates.push_back(imputed.dates[test_start + d]);
      report.crps.push_back(day_scores[mi][d].crps);
      report.pit_values.push_back(day_scores[mi][d].pit);
    }
    report.finalize(cfg.pit_bins);
    result.reports.push_back(std::move(report));
  }

  {
    Eigen::MatrixXd test_members(cfg.test_size, imputed.members.cols());
    std::vector<double> test_obs(static_cast<std::size_t>(cfg.test_size));
    for (std::size_t d = 0; d < static_cast<std::size_t>(cfg.test_size);
         ++d) {
      test_members.row(static_cast<Eigen::Index>(d)) =
        imputed.members.row(static_cast<Eigen::Index>(test_start + d));
      test_obs[d] = imputed.obs[test_start + d];
    }
    result.rank_bins = rank_histogram(test_members, test_obs, cfg.seed);
  }

  // comparison table sorted by mean CRPS
  std::vector<std::size_t> order(result.reports.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return result.reports[a].mean_crps() < result.reports[b].mean_crps();
  });
  nlohmann::json table = nlohmann::json::array();
  std::string rank_sequence;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& rep = result.reports[order[pos]];
    table.push_back({ { "rank", pos + 1 },
                      { "model", rep.model },
                      { "mean_crps", rep.mean_crps() } });
    rank_sequence += (pos == 0 ? "" : " < ") + rep.model;
  }
  result.summary = nlohmann::json{ { "station", imputed.station_id },
                                   { "config", cfg.to_json() },
                                   { "comparison", table },
                                   { "rank_sequence", rank_sequence },
                                   { "rank_bins", result.rank_bins } };
  if (cfg.crps_cross_check) {
    result.summary["crps_cross_check_max_gap"] = cross_check_gap.load();
  }
  return result;
}

//! Loads (or generates) and imputes the configured input series.
inline StationSeries load_series(const ExperimentConfig& cfg)
{
  if (cfg.input_csv.empty()) {
    return impute_series(synth_generate(cfg.synth));
  }
  std::ifstream in(cfg.input_csv);
  if (!in) {
    throw data_error("cannot open input file '" + cfg.input_csv + "'");
  }
  CsvSchema schema;
  schema.horizon_hours = cfg.horizon_hours;
  return impute_series(parse_csv(in, schema));
}

inline void write_experiment_outputs(const ExperimentResult& result,
                                     const ExperimentConfig& cfg)
{
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  for (const auto& report : result.reports) {
    {
      std::ofstream out(fs::path(cfg.out_dir) /
                        ("scores_" + report.model + "_" + report.station +
                         ".csv"));
      report.write_csv(out);
    }
    {
      std::ofstream out(fs::path(cfg.out_dir) /
                        ("pit_" + report.model + ".json"));
      out << report.aggregate_json().dump(2) << '\n';
    }
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "ranks.json");
    out << nlohmann::json{ { "rank_bins", result.rank_bins } }.dump(2)
        << '\n';
  }
  {
    std::ofstream out(fs::path(cfg.out_dir) / "summary.json");
    out << result.summary.dump(2) << '\n';
  }
}

//! Normalized-scores diagnostics: PIT the OBS/CTRL/HRES/mean columns on the
//! first test day's refined window, transform to standard-normal scores and
//! return the z-matrix (one column per variable).
struct DiagnosticsResult
{
  std::vector<std::string> variables;
  Eigen::MatrixXd z; // rows: window days, columns: variables
};

inline DiagnosticsResult run_diagnostics(const ExperimentConfig& cfg,
                                         const StationSeries& imputed)
{
  const std::size_t n = imputed.rows();
  if (static_cast<std::size_t>(cfg.test_size) >= n) {
    throw data_error("test_size leaves no training data");
  }
  const std::size_t test_row = n - static_cast<std::size_t>(cfg.test_size);
  const auto rows = detail::window_rows_for(imputed, "dvine", test_row, cfg);
  const auto gp = group_predictors(imputed);

  DiagnosticsResult diag;
  diag.variables = { "obs", "ctrl", "hres", "mean" };
  std::vector<std::vector<double>> cols(4, std::vector<double>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cols[0][i] = imputed.obs[rows[i]];
    cols[1][i] = gp[rows[i]].ctrl;
    cols[2][i] = gp[rows[i]].hres;
    cols[3][i] = gp[rows[i]].mean_perturbed;
  }
  diag.z.resize(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t v = 0; v < 4; ++v) {
    KdeMarginal marg;
    try {
      marg = KdeMarginal::fit(cols[v]);
    } catch (const data_error& e) {
      throw data_error("diagnostics: column '" + diag.variables[v] +
                       "': " + e.what());
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      diag.z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(v)) =
        stats::norm_quantile(marg.pit(cols[v][i]));
    }
  }
  return diag;
}

inline void write_diagnostics_outputs(const DiagnosticsResult& diag,
                                      const ExperimentConfig& cfg)
{
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  for (std::size_t a = 0; a < diag.variables.size(); ++a) {
    for (std::size_t b = a + 1; b < diag.variables.size(); ++b) {
      std::ofstream out(fs::path(cfg.out_dir) /
                        ("pairs_" + diag.variables[a] + "_" +
                         diag.variables[b] + ".csv"));
      out << "z_" << diag.variables[a] << ",z_" << diag.variables[b] << '\n';
      out.precision(12);
      for (Eigen::Index i = 0; i < diag.z.rows(); ++i) {
        out << diag.z(i, static_cast<Eigen::Index>(a)) << ','
            << diag.z(i, static_cast<Eigen::Index>(b)) << '\n';
      }
    }
  }
}

} // namespace vinecast
