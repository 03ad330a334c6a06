#include "vinecast/dataset.hpp"
#include "vinecast/dvinereg.hpp"
#include "vinecast/emos.hpp"
#include "vinecast/experiment.hpp"
#include "vinecast/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace {

using namespace vinecast;
namespace fs = std::filesystem;
using nlohmann::json;

json read_json_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in) {
    throw data_error("cannot open '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error("bad JSON in '" + path + "': " + e.what());
  }
  return j;
}

double parse_double_cell(const std::string& cell, const std::string& where)
{
  try {
    std::size_t used = 0;
    const double x = std::stod(cell, &used);
    if (used != cell.size()) {
      throw std::invalid_argument(cell);
    }
    return x;
  } catch (const std::exception&) {
    throw data_error("unparseable number '" + cell + "' in " + where);
  }
}

StationSeries read_series(const std::string& path, int horizon)
{
  std::ifstream in(path);
  if (!in) {
    throw data_error("cannot open '" + path + "'");
  }
  CsvSchema schema;
  schema.horizon_hours = horizon;
  return parse_csv(in, schema);
}

std::vector<std::size_t> rows_for_window(const StationSeries& imputed,
                                         const std::string& model,
                                         const Date& test_date, int t1, int n,
                                         int horizon)
{
  const long test_row = imputed.row_of(test_date);
  if (test_row < 0) {
    throw data_error("test date " + test_date.to_string() +
                     " not present in the series");
  }
  std::vector<std::size_t> rows;
  if (model == "emos_s") {
    for (int day : standard_window(static_cast<int>(test_row) + 1, t1)) {
      rows.push_back(static_cast<std::size_t>(day - 1));
    }
  } else {
    for (const auto& d :
         refined_window(test_date, n, imputed.dates.front(),
                        imputed.dates.back(), horizon)) {
      const long r = imputed.row_of(d);
      if (r >= 0 && r < test_row) {
        rows.push_back(static_cast<std::size_t>(r));
      }
    }
  }
  return rows;
}

void print_comparison(const json& summary, std::ostream& out)
{
  out << "model        mean_crps    rank\n";
  for (const auto& row : summary.at("comparison")) {
    char line[80];
    std::snprintf(line, sizeof(line), "%-12s %-12.6f %zu\n",
                  row.at("model").get<std::string>().c_str(),
                  row.at("mean_crps").get<double>(),
                  row.at("rank").get<std::size_t>());
    out << line;
  }
  out << "ordering: " << summary.at("rank_sequence").get<std::string>()
      << "\n";
}

int run_cli(int argc, char** argv)
{
  CLI::App app{ "D-vine copula ensemble post-processing" };
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth_cmd =
    app.add_subcommand("synth", "generate a synthetic station series");
  std::string synth_spec_path, synth_out = "synthetic.csv";
  synth_cmd->add_option("--spec", synth_spec_path,
                        "synthetic spec JSON (length, m, seed, "
                        "dependence{family, tau}, noise_sd)");
  synth_cmd->add_option("--out", synth_out, "output CSV path");

  // ---- impute ----
  auto* impute_cmd = app.add_subcommand(
    "impute", "fill missing values by harmonic regression");
  std::string impute_in, impute_out = "imputed.csv";
  int impute_horizon = 24;
  impute_cmd->add_option("--in", impute_in, "input CSV")->required();
  impute_cmd->add_option("--out", impute_out, "output CSV path");
  impute_cmd->add_option("--horizon", impute_horizon, "forecast horizon (h)");

  // ---- fit ----
  auto* fit_cmd =
    app.add_subcommand("fit", "fit one model on a test day's window");
  std::string fit_in, fit_model = "dvine", fit_date, fit_out = "model.json";
  int fit_t1 = 0, fit_n = 45, fit_horizon = 24;
  bool fit_full = false;
  fit_cmd->add_option("--in", fit_in, "input CSV")->required();
  fit_cmd->add_option("--model", fit_model, "dvine | emos_s | emos_r");
  fit_cmd->add_option("--date", fit_date, "test date (ISO)")->required();
  fit_cmd->add_option("--t1", fit_t1, "standard window length");
  fit_cmd->add_option("--n", fit_n, "refined half-window");
  fit_cmd->add_option("--horizon", fit_horizon, "forecast horizon (h)");
  fit_cmd->add_flag("--full-candidates", fit_full,
                    "offer all members plus the mean to the selection");
  fit_cmd->add_option("--out", fit_out, "output model JSON");

  // ---- predict ----
  auto* pred_cmd = app.add_subcommand(
    "predict", "emit predictive quantiles for a test day");
  std::string pred_in, pred_model_file, pred_date, pred_out = "pred.csv";
  int pred_r = 100;
  pred_cmd->add_option("--in", pred_in, "input CSV")->required();
  pred_cmd->add_option("--model-file", pred_model_file, "fitted model JSON")
    ->required();
  pred_cmd->add_option("--date", pred_date, "test date (ISO)")->required();
  pred_cmd->add_option("--R", pred_r, "quantile grid size");
  pred_cmd->add_option("--out", pred_out, "output CSV path");

  // ---- verify ----
  auto* verify_cmd = app.add_subcommand(
    "verify", "score a predictions file against observations");
  std::string verify_pred, verify_in, verify_out = "scores.csv";
  int verify_horizon = 24;
  verify_cmd->add_option("--pred", verify_pred, "predictions CSV")
    ->required();
  verify_cmd->add_option("--in", verify_in, "input CSV with observations")
    ->required();
  verify_cmd->add_option("--horizon", verify_horizon, "forecast horizon (h)");
  verify_cmd->add_option("--out", verify_out, "output scores CSV");

  // ---- run ----
  auto* run_cmd =
    app.add_subcommand("run", "end-to-end experiment: fit, predict, score");
  std::string run_config, run_out;
  std::vector<std::string> run_models;
  int run_test_size = -1, run_threads = -1, run_refit = -1, run_r = -1;
  long long run_seed = -1;
  run_cmd->add_option("--config", run_config, "experiment config JSON");
  run_cmd->add_option("--out", run_out, "output directory");
  run_cmd->add_option("--models", run_models, "subset of dvine emos_s emos_r");
  run_cmd->add_option("--test-size", run_test_size, "number of test days");
  run_cmd->add_option("--threads", run_threads, "worker threads");
  run_cmd->add_option("--refit-every", run_refit,
                      "reuse each fit for this many consecutive days");
  run_cmd->add_option("--R", run_r, "quantile grid size");
  run_cmd->add_option("--seed", run_seed, "experiment seed");
  std::string run_input;
  int run_horizon = 0, run_t1 = 0, run_n = 0;
  bool run_full = false, run_once = false, run_cross = false;
  run_cmd->add_option("--in", run_input, "input CSV (otherwise synthetic)");
  run_cmd->add_option("--horizon", run_horizon, "forecast horizon (h)");
  run_cmd->add_option("--t1", run_t1, "standard window length");
  run_cmd->add_option("--n", run_n, "refined half-window");
  run_cmd->add_flag("--full-candidates", run_full,
                    "offer all members plus the mean to the selection");
  run_cmd->add_flag("--select-once", run_once,
                    "run predictor selection on the first window only");
  run_cmd->add_flag("--crps-cross-check", run_cross,
                    "also score gaussian models on the quantile grid");

  // ---- compare ----
  auto* compare_cmd = app.add_subcommand(
    "compare", "rebuild the comparison table from per-day score files");
  std::string compare_dir;
  compare_cmd->add_option("--dir", compare_dir, "directory with scores_*.csv")
    ->required();

  // ---- diagnose ----
  auto* diag_cmd = app.add_subcommand(
    "diagnose", "emit pairwise normalized-scores files for contour plots");
  std::string diag_config, diag_out;
  diag_cmd->add_option("--config", diag_config, "experiment config JSON");
  diag_cmd->add_option("--out", diag_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (synth_cmd->parsed()) {
    SynthSpec spec;
    if (!synth_spec_path.empty()) {
      spec = SynthSpec::from_json(read_json_file(synth_spec_path));
    }
    const auto series = synth_generate(spec);
    std::ofstream out(synth_out);
    if (!out) {
      throw data_error("cannot write '" + synth_out + "'");
    }
    write_csv(series, out);
    std::cout << "wrote " << series.rows() << " days to " << synth_out
              << "\n";
    return 0;
  }

  if (impute_cmd->parsed()) {
    const auto series = read_series(impute_in, impute_horizon);
    const auto imputed = impute_series(series);
    std::ofstream out(impute_out);
    if (!out) {
      throw data_error("cannot write '" + impute_out + "'");
    }
    write_csv(imputed, out);
    std::cout << "imputed " << series.rows() << " -> " << imputed.rows()
              << " rows\n";
    return 0;
  }

  if (fit_cmd->parsed()) {
    const auto imputed = impute_series(read_series(fit_in, fit_horizon));
    const Date date = Date::parse(fit_date);
    const int t1 =
      fit_t1 > 0 ? fit_t1 : ExperimentConfig::default_t1(fit_horizon);
    const auto rows =
      rows_for_window(imputed, fit_model, date, t1, fit_n, fit_horizon);
    json out_json;
    out_json["model"] = fit_model;
    out_json["station"] = imputed.station_id;
    out_json["horizon"] = fit_horizon;
    out_json["test_date"] = date.to_string();
    out_json["window"] = { { "kind",
                             fit_model == "emos_s" ? "standard" : "refined" },
                           { "t1", t1 },
                           { "n", fit_n },
                           { "size", rows.size() } };
    if (fit_model == "dvine") {
      const auto predictors = make_predictor_table(imputed, fit_full);
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
      for (const auto& w : trace.warnings) {
        std::cerr << "warning: " << w << "\n";
      }
      out_json["dvine"] = model.to_json();
      out_json["full_candidates"] = fit_full;
    } else {
      const auto gp = group_predictors(imputed);
      std::vector<EmosTrainingRow> train;
      for (auto r : rows) {
        train.push_back({ gp[r], imputed.obs[r] });
      }
      const auto params = fit_emos(train);
      out_json["emos"] = emos_to_json(
        params, fit_model == "emos_s" ? "standard" : "refined", rows.size());
    }
    std::ofstream out(fit_out);
    if (!out) {
      throw data_error("cannot write '" + fit_out + "'");
    }
    out << out_json.dump(2) << '\n';
    std::cout << "fit " << fit_model << " on " << rows.size()
              << " training days -> " << fit_out << "\n";
    return 0;
  }

  if (pred_cmd->parsed()) {
    const json model_json = read_json_file(pred_model_file);
    const int horizon = model_json.value("horizon", 24);
    const auto imputed = impute_series(read_series(pred_in, horizon));
    const Date date = Date::parse(pred_date);
    const long test_row = imputed.row_of(date);
    if (test_row < 0) {
      throw data_error("date " + date.to_string() + " not in series");
    }
    if (pred_r < 2) {
      throw config_error("quantile grid R must be at least 2");
    }
    std::ofstream out(pred_out);
    if (!out) {
      throw data_error("cannot write '" + pred_out + "'");
    }
    out << "date,alpha,quantile\n";
    out.precision(12);
    const std::string model_name = model_json.at("model").get<std::string>();
    if (model_name == "dvine") {
      const Date fit_date =
        Date::parse(model_json.at("test_date").get<std::string>());
      const int n = model_json.at("window").at("n").get<int>();
      const auto rows =
        rows_for_window(imputed, "dvine", fit_date, 0, n, horizon);
      const auto predictors = make_predictor_table(
        imputed, model_json.value("full_candidates", false));
      const auto& dv_json = model_json.at("dvine");
      const auto names =
        dv_json.at("predictor_names").get<std::vector<std::string>>();
      std::vector<double> y;
      for (auto r : rows) {
        y.push_back(imputed.obs[r]);
      }
      std::vector<std::vector<double>> ordered_cols;
      std::vector<std::size_t> col_ids;
      for (const auto& name : names) {
        const auto it = std::find(predictors.names.begin(),
                                  predictors.names.end(), name);
        if (it == predictors.names.end()) {
          throw data_error("model predictor '" + name +
                           "' not found in the data");
        }
        const auto c =
          static_cast<std::size_t>(it - predictors.names.begin());
        col_ids.push_back(c);
        std::vector<double> col;
        for (auto r : rows) {
          col.push_back(predictors.columns[c][r]);
        }
        ordered_cols.push_back(std::move(col));
      }
      const auto model = dvine_from_json(dv_json, y, ordered_cols);
      std::vector<double> xs;
      for (auto c : col_ids) {
        xs.push_back(
          predictors.columns[c][static_cast<std::size_t>(test_row)]);
      }
      const auto quantiles = model.predictive_quantiles(xs, pred_r);
      for (int r = 1; r <= pred_r; ++r) {
        out << date.to_string() << ','
            << static_cast<double>(r) / (pred_r + 1.0) << ','
            << quantiles[static_cast<std::size_t>(r - 1)] << '\n';
      }
    } else {
      const auto params = emos_from_json(model_json.at("emos"));
      const auto gp = group_predictors(imputed);
      const auto fc =
        emos_predict(params, gp[static_cast<std::size_t>(test_row)]);
      for (int r = 1; r <= pred_r; ++r) {
        const double alpha = static_cast<double>(r) / (pred_r + 1.0);
        out << date.to_string() << ',' << alpha << ','
            << fc.mu + fc.sigma * stats::norm_quantile(alpha) << '\n';
      }
    }
    std::cout << "wrote " << pred_r << " quantiles to " << pred_out << "\n";
    return 0;
  }

  if (verify_cmd->parsed()) {
    const auto imputed = impute_series(read_series(verify_in, verify_horizon));
    std::ifstream pred(verify_pred);
    if (!pred) {
      throw data_error("cannot open '" + verify_pred + "'");
    }
    std::string line;
    if (!std::getline(pred, line) || line.rfind("date,alpha,quantile", 0) != 0) {
      throw data_error("predictions file must have header date,alpha,quantile");
    }
    std::map<std::string, std::vector<std::pair<double, double>>> by_date;
    while (std::getline(pred, line)) {
      if (line.empty()) {
        continue;
      }
      const auto cells = detail::split_csv_line(line);
      if (cells.size() != 3) {
        throw data_error("bad predictions row: " + line);
      }
      by_date[cells[0]].emplace_back(
        parse_double_cell(cells[1], verify_pred),
        parse_double_cell(cells[2], verify_pred));
    }
    std::ofstream out(verify_out);
    if (!out) {
      throw data_error("cannot write '" + verify_out + "'");
    }
    out << "date,crps,pit\n";
    out.precision(12);
    double total = 0.0;
    for (auto& [date_str, grid] : by_date) {
      std::sort(grid.begin(), grid.end());
      const long row = imputed.row_of(Date::parse(date_str));
      if (row < 0) {
        throw data_error("predicted date " + date_str + " not in series");
      }
      const double y = imputed.obs[static_cast<std::size_t>(row)];
      std::vector<double> z;
      for (auto& [alpha, q] : grid) {
        z.push_back(q);
      }
      const double crps = crps_from_quantiles(z, y);
      // grid-based PIT: interpolate the quantile level at the observation
      double p;
      if (y <= z.front()) {
        p = grid.front().first;
      } else if (y >= z.back()) {
        p = grid.back().first;
      } else {
        const auto it = std::lower_bound(z.begin(), z.end(), y);
        const auto i = static_cast<std::size_t>(it - z.begin());
        const double a0 = grid[i - 1].first, a1 = grid[i].first;
        const double z0 = z[i - 1], z1 = z[i];
        p = z1 > z0 ? a0 + (a1 - a0) * (y - z0) / (z1 - z0) : a0;
      }
      total += crps;
      out << date_str << ',' << crps << ',' << p << '\n';
    }
    std::cout << "mean crps over " << by_date.size() << " day(s): "
              << total / static_cast<double>(by_date.size()) << "\n";
    return 0;
  }

  if (run_cmd->parsed()) {
    ExperimentConfig cfg;
    if (!run_config.empty()) {
      cfg = ExperimentConfig::from_json(read_json_file(run_config));
    }
    if (!run_out.empty()) {
      cfg.out_dir = run_out;
    }
    if (!run_models.empty()) {
      cfg.models = run_models;
    }
    if (run_test_size >= 0) {
      cfg.test_size = run_test_size;
    }
    if (run_threads >= 0) {
      cfg.threads = run_threads;
    }
    if (run_refit >= 0) {
      cfg.refit_every = run_refit;
    }
    if (run_r >= 0) {
      cfg.quantile_grid = run_r;
    }
    if (!run_input.empty()) {
      cfg.input_csv = run_input;
    }
    if (run_horizon > 0) {
      cfg.horizon_hours = run_horizon;
    }
    if (run_t1 > 0) {
      cfg.t1 = run_t1;
    }
    if (run_n > 0) {
      cfg.refined_n = run_n;
    }
    cfg.full_candidates |= run_full;
    cfg.select_once |= run_once;
    cfg.crps_cross_check |= run_cross;
    if (run_seed >= 0) {
      cfg.seed = static_cast<std::uint64_t>(run_seed);
      cfg.synth.seed = cfg.seed;
    }
    cfg.validate();
    const auto imputed = load_series(cfg);
    const auto result = run_experiment(cfg, imputed);
    write_experiment_outputs(result, cfg);
    print_comparison(result.summary, std::cout);
    std::cout << "outputs in " << cfg.out_dir << "\n";
    return 0;
  }

  if (compare_cmd->parsed()) {
    std::vector<std::pair<std::string, double>> means;
    for (const auto& entry : fs::directory_iterator(compare_dir)) {
      const auto name = entry.path().filename().string();
      if (name.rfind("scores_", 0) != 0 || entry.path().extension() != ".csv") {
        continue;
      }
      std::ifstream in(entry.path());
      std::string line;
      std::getline(in, line); // header
      double total = 0.0;
      std::size_t count = 0;
      while (std::getline(in, line)) {
        if (line.empty()) {
          continue;
        }
        const auto cells = detail::split_csv_line(line);
        total += parse_double_cell(cells.at(1), name);
        ++count;
      }
      if (count == 0) {
        continue;
      }
      means.emplace_back(name.substr(7, name.size() - 11),
                         total / static_cast<double>(count));
    }
    if (means.empty()) {
      throw data_error("no scores_*.csv files in '" + compare_dir + "'");
    }
    std::sort(means.begin(), means.end(),
              [](const auto& a, const auto& b) { return a.second < b.second; });
    json table = json::array();
    std::string seq;
    std::cout << "model_station          mean_crps    rank\n";
    for (std::size_t i = 0; i < means.size(); ++i) {
      char linebuf[96];
      std::snprintf(linebuf, sizeof(linebuf), "%-22s %-12.9f %zu\n",
                    means[i].first.c_str(), means[i].second, i + 1);
      std::cout << linebuf;
      table.push_back({ { "rank", i + 1 },
                        { "model", means[i].first },
                        { "mean_crps", means[i].second } });
      seq += (i == 0 ? "" : " < ") + means[i].first;
    }
    std::ofstream out(fs::path(compare_dir) / "comparison.json");
    out << json{ { "comparison", table }, { "rank_sequence", seq } }.dump(2)
        << '\n';
    return 0;
  }

  if (diag_cmd->parsed()) {
    ExperimentConfig cfg;
    if (!diag_config.empty()) {
      cfg = ExperimentConfig::from_json(read_json_file(diag_config));
    }
    if (!diag_out.empty()) {
      cfg.out_dir = diag_out;
    }
    const auto imputed = load_series(cfg);
    const auto diag = run_diagnostics(cfg, imputed);
    write_diagnostics_outputs(diag, cfg);
    std::cout << "wrote " << diag.variables.size() *
                               (diag.variables.size() - 1) / 2
              << " pair files to " << cfg.out_dir << "\n";
    return 0;
  }

  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  try {
    return run_cli(argc, argv);
  } catch (const vinecast::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const vinecast::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const vinecast::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
