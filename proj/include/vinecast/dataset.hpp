#pragma once

#include "vinecast/common.hpp"
#include "vinecast/date.hpp"
#include "vinecast/paircopula.hpp"
#include "vinecast/rng.hpp"
#include "vinecast/stats.hpp"

#include <Eigen/Dense>

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace vinecast {

enum class MemberRole
{
  perturbed,
  control,
  highres
};

//! Daily observations plus ensemble member forecasts for one station and one
//! forecast horizon. Missing values are stored as NaN.
struct StationSeries
{
  std::string station_id;
  int horizon_hours = 24;
  std::vector<Date> dates;          // strictly increasing
  std::vector<double> obs;          // one row per date
  Eigen::MatrixXd members;          // rows match dates, one column per member
  std::vector<MemberRole> member_roles;
  std::vector<std::string> member_names;

  std::size_t rows() const { return dates.size(); }
  std::size_t member_count() const
  {
    return static_cast<std::size_t>(members.cols());
  }

  //! Row index of a date in a daily-complete series, or -1.
  long row_of(const Date& d) const
  {
    if (dates.empty() || d < dates.front() || d > dates.back()) {
      return -1;
    }
    const long idx = d - dates.front();
    if (idx < static_cast<long>(dates.size()) &&
        dates[static_cast<std::size_t>(idx)] == d) {
      return idx;
    }
    // not daily-complete: fall back to binary search
    const auto it = std::lower_bound(dates.begin(), dates.end(), d);
    return (it != dates.end() && *it == d) ? it - dates.begin() : -1;
  }
};

//! Column schema for CSV ingestion. When member_roles is empty the roles are
//! inferred from the header: "ctrl" -> control, "hres" -> highres, any other
//! member column -> perturbed.
struct CsvSchema
{
  std::vector<MemberRole> member_roles;
  int horizon_hours = 24;
};

namespace detail {

inline std::string trim(const std::string& s)
{
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) {
    return "";
  }
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    out.push_back(trim(cell));
  }
  if (!line.empty() && line.back() == ',') {
    out.push_back("");
  }
  return out;
}

//! Empty cells and "NA" are missing; unparseable numerics also become
//! missing per the ingestion contract.
inline double parse_cell(const std::string& cell)
{
  if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN") {
    return nan_value;
  }
  char* end = nullptr;
  const double x = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0') {
    return nan_value;
  }
  return x;
}

} // namespace detail

//! Parses the station CSV format: header `date,station,obs,<members...>`,
//! ISO dates, missing = empty or NA. Rows are returned sorted by date.
inline StationSeries parse_csv(std::istream& in, const CsvSchema& schema = {})
{
  std::string line;
  if (!std::getline(in, line)) {
    throw data_error("csv: empty input");
  }
  const auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "date" || header[1] != "station" ||
      header[2] != "obs") {
    throw data_error("csv: header must start with date,station,obs");
  }
  const std::size_t m = header.size() - 3;

  StationSeries series;
  series.horizon_hours = schema.horizon_hours;
  series.member_names.assign(header.begin() + 3, header.end());
  if (!schema.member_roles.empty()) {
    if (schema.member_roles.size() != m) {
      throw config_error("csv schema declares " +
                         std::to_string(schema.member_roles.size()) +
                         " member roles for " + std::to_string(m) +
                         " member columns");
    }
    series.member_roles = schema.member_roles;
  } else {
    for (const auto& name : series.member_names) {
      if (name == "ctrl") {
        series.member_roles.push_back(MemberRole::control);
      } else if (name == "hres") {
        series.member_roles.push_back(MemberRole::highres);
      } else {
        series.member_roles.push_back(MemberRole::perturbed);
      }
    }
  }

  struct Row
  {
    Date date;
    double obs;
    std::vector<double> members;
  };
  std::vector<Row> rows;
  std::set<long> seen_dates;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) {
      continue;
    }
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw data_error("csv line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    Row row;
    try {
      row.date = Date::parse(cells[0]);
    } catch (const data_error& e) {
      throw data_error("csv line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (series.station_id.empty()) {
      series.station_id = cells[1];
    } else if (series.station_id != cells[1]) {
      throw data_error("csv line " + std::to_string(line_no) +
                       ": multiple stations in one file ('" +
                       series.station_id + "' vs '" + cells[1] + "')");
    }
    if (!seen_dates.insert(row.date.serial()).second) {
      throw data_error("csv: duplicate (station, date) entry for " +
                       cells[1] + ", " + row.date.to_string());
    }
    row.obs = detail::parse_cell(cells[2]);
    row.members.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      row.members[j] = detail::parse_cell(cells[3 + j]);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw data_error("csv: no data rows");
  }
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.date < b.date; });

  series.dates.reserve(rows.size());
  series.obs.reserve(rows.size());
  series.members.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    series.dates.push_back(rows[i].date);
    series.obs.push_back(rows[i].obs);
    for (std::size_t j = 0; j < m; ++j) {
      series.members(static_cast<Eigen::Index>(i),
                     static_cast<Eigen::Index>(j)) = rows[i].members[j];
    }
  }
  return series;
}

inline void write_csv(const StationSeries& series, std::ostream& out)
{
  out << "date,station,obs";
  for (const auto& name : series.member_names) {
    out << ',' << name;
  }
  out << '\n';
  out.precision(10);
  for (std::size_t i = 0; i < series.rows(); ++i) {
    out << series.dates[i].to_string() << ',' << series.station_id << ',';
    if (!is_missing(series.obs[i])) {
      out << series.obs[i];
    }
    for (Eigen::Index j = 0; j < series.members.cols(); ++j) {
      out << ',';
      const double x = series.members(static_cast<Eigen::Index>(i), j);
      if (!is_missing(x)) {
        out << x;
      }
    }
    out << '\n';
  }
}

//! Least-squares fit of level + cosine/sine at the annual frequency
//! 2*pi/365.25 (radians per day).
struct HarmonicFit
{
  double mu = 0.0;
  double a = 0.0;
  double b = 0.0;
  double psi = 2.0 * std::numbers::pi / 365.25;

  double value(double t_days) const
  {
    return mu + a * std::cos(psi * t_days) + b * std::sin(psi * t_days);
  }
};

//! Fits the harmonic model over non-missing entries; t is measured in days
//! from the first date of the series.
inline HarmonicFit fit_harmonic(std::span<const double> values,
                                std::span<const Date> dates)
{
  if (values.size() != dates.size()) {
    throw std::invalid_argument("fit_harmonic: length mismatch");
  }
  HarmonicFit fit;
  std::vector<double> ts, ys;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!is_missing(values[i])) {
      ts.push_back(static_cast<double>(dates[i] - dates.front()));
      ys.push_back(values[i]);
    }
  }
  if (ys.size() < 3) {
    throw data_error("fit_harmonic needs at least 3 non-missing values, got " +
                     std::to_string(ys.size()));
  }
  Eigen::MatrixXd design(ys.size(), 3);
  Eigen::VectorXd rhs(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) {
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    design(static_cast<Eigen::Index>(i), 1) = std::cos(fit.psi * ts[i]);
    design(static_cast<Eigen::Index>(i), 2) = std::sin(fit.psi * ts[i]);
    rhs(static_cast<Eigen::Index>(i)) = ys[i];
  }
  const Eigen::Vector3d coef =
    design.colPivHouseholderQr().solve(rhs);
  fit.mu = coef(0);
  fit.a = coef(1);
  fit.b = coef(2);
  return fit;
}

//! Fills every missing cell by the per-column harmonic fit and inserts rows
//! for missing calendar days, so the result is daily-complete with no
//! missing values. Applying it twice equals applying it once.
inline StationSeries impute_series(const StationSeries& series)
{
  if (series.rows() == 0) {
    throw data_error("impute: empty series");
  }
  for (std::size_t i = 1; i < series.rows(); ++i) {
    if (!(series.dates[i - 1] < series.dates[i])) {
      throw data_error("impute: dates must be strictly increasing");
    }
  }

  const Date first = series.dates.front();
  const long span_days = series.dates.back() - first;
  const auto n = static_cast<std::size_t>(span_days + 1);
  const std::size_t m = series.member_count();

  StationSeries out;
  out.station_id = series.station_id;
  out.horizon_hours = series.horizon_hours;
  out.member_roles = series.member_roles;
  out.member_names = series.member_names;
  out.dates.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.dates.push_back(first.plus_days(static_cast<long>(i)));
  }
  out.obs.assign(n, nan_value);
  out.members.setConstant(static_cast<Eigen::Index>(n),
                          static_cast<Eigen::Index>(m), nan_value);
  for (std::size_t i = 0; i < series.rows(); ++i) {
    const auto r = static_cast<std::size_t>(series.dates[i] - first);
    out.obs[r] = series.obs[i];
    out.members.row(static_cast<Eigen::Index>(r)) =
      series.members.row(static_cast<Eigen::Index>(i));
  }

  auto fill_column = [&](std::vector<double>& column, const std::string& name) {
    bool any_missing = false;
    for (double x : column) {
      any_missing |= is_missing(x);
    }
    if (!any_missing) {
      return;
    }
    HarmonicFit fit;
    try {
      fit = fit_harmonic(column, out.dates);
    } catch (const data_error& e) {
      throw data_error("impute: column '" + name + "': " + e.what());
    }
    for (std::size_t i = 0; i < column.size(); ++i) {
      if (is_missing(column[i])) {
        column[i] = fit.value(static_cast<double>(i));
      }
    }
  };

  fill_column(out.obs, "obs");
  std::vector<double> column(n);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = out.members(static_cast<Eigen::Index>(i),
                              static_cast<Eigen::Index>(j));
    }
    fill_column(column, series.member_names.empty()
                          ? "member " + std::to_string(j + 1)
                          : series.member_names[j]);
    for (std::size_t i = 0; i < n; ++i) {
      out.members(static_cast<Eigen::Index>(i),
                  static_cast<Eigen::Index>(j)) = column[i];
    }
  }
  return out;
}

//! Window construction parameters.
struct WindowSpec
{
  enum class Kind
  {
    standard,
    refined
  };
  Kind kind = Kind::standard;
  int t1 = 40;          // standard window length (days)
  int half_window = 45; // refined half-window n (days)
};

//! The t1 day indices immediately preceding test_index (1-based days,
//! day 1 is the first row of the series).
inline std::vector<int> standard_window(int test_index, int t1)
{
  if (t1 < 2) {
    throw config_error("standard window length must be at least 2");
  }
  if (test_index <= t1) {
    throw data_error("insufficient history: test day " +
                     std::to_string(test_index) + " needs " +
                     std::to_string(t1) + " preceding days");
  }
  std::vector<int> idx(static_cast<std::size_t>(t1));
  for (int i = 0; i < t1; ++i) {
    idx[static_cast<std::size_t>(i)] = test_index - t1 + i;
  }
  return idx;
}

//! Refined rolling training window: the n days preceding the test date in
//! the current year plus, for every prior calendar year, the (2n+1)-day
//! interval centred on the test date's month-and-day (Feb 29 centres map to
//! Feb 28 in non-leap years). Prior years with partial coverage contribute
//! the covered subset. For horizons beyond 24 h the current-year block is
//! shifted back so that no training forecast period overlaps the test day.
inline std::vector<Date> refined_window(const Date& test_date, int n,
                                        const Date& data_start,
                                        const Date& data_end,
                                        int horizon_hours = 24)
{
  if (n < 1) {
    throw config_error("refined window needs n >= 1");
  }
  if (test_date < data_start || test_date > data_end) {
    throw data_error("test date " + test_date.to_string() +
                     " outside data range");
  }
  const long shift = (horizon_hours + 23) / 24 - 1;
  std::set<Date> window;

  // recency block in the current year
  long recency_count = 0;
  for (long k = 1; k <= n; ++k) {
    const Date d = test_date.plus_days(-shift - k);
    if (d >= data_start && d < test_date) {
      window.insert(d);
      ++recency_count;
    }
  }

  // same-season intervals from all prior calendar years
  long prior_count = 0;
  for (int year = data_start.year(); year < test_date.year(); ++year) {
    const Date center = test_date.with_year(year);
    for (long k = -n; k <= n; ++k) {
      const Date d = center.plus_days(k);
      if (d >= data_start && d <= data_end && d < test_date) {
        window.insert(d);
        ++prior_count;
      }
    }
  }

  if (prior_count == 0 && recency_count < n) {
    throw data_error("insufficient history for refined window at " +
                     test_date.to_string());
  }
  return { window.begin(), window.end() };
}

//! Per-date summary of a grouped ensemble: mean and empirical variance
//! (divisor m-1) over the perturbed members plus the control and
//! high-resolution forecasts.
struct GroupPredictors
{
  double mean_perturbed = 0.0;
  double ctrl = 0.0;
  double hres = 0.0;
  double ens_var = 0.0;
};

inline std::vector<GroupPredictors> group_predictors(
  const StationSeries& series)
{
  long ctrl_col = -1, hres_col = -1;
  std::vector<Eigen::Index> perturbed;
  for (std::size_t j = 0; j < series.member_roles.size(); ++j) {
    switch (series.member_roles[j]) {
      case MemberRole::control:
        if (ctrl_col >= 0) {
          throw data_error("group predictors: more than one control member");
        }
        ctrl_col = static_cast<long>(j);
        break;
      case MemberRole::highres:
        if (hres_col >= 0) {
          throw data_error(
            "group predictors: more than one high-resolution member");
        }
        hres_col = static_cast<long>(j);
        break;
      case MemberRole::perturbed:
        perturbed.push_back(static_cast<Eigen::Index>(j));
        break;
    }
  }
  if (ctrl_col < 0 || hres_col < 0 || perturbed.size() < 2) {
    throw data_error("group predictors need one control, one high-resolution "
                     "and at least two perturbed members");
  }

  std::vector<GroupPredictors> out(series.rows());
  const double k = static_cast<double>(perturbed.size());
  for (std::size_t i = 0; i < series.rows(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    double sum = 0.0;
    for (auto j : perturbed) {
      sum += series.members(row, j);
    }
    const double mean = sum / k;
    double ss = 0.0;
    for (auto j : perturbed) {
      const double d = series.members(row, j) - mean;
      ss += d * d;
    }
    out[i].mean_perturbed = mean;
    out[i].ens_var = ss / (k - 1.0);
    out[i].ctrl = series.members(row, static_cast<Eigen::Index>(ctrl_col));
    out[i].hres = series.members(row, static_cast<Eigen::Index>(hres_col));
  }
  return out;
}

//! Synthetic-data specification (JSON keys: length, m, seed,
//! dependence{family, tau}, noise_sd; optional level, seasonal_amplitude,
//! signal_sd, start).
struct SynthSpec
{
  int length = 1000;
  int m = 10; // perturbed members; a ctrl and an hres column are added
  std::uint64_t seed = 1;
  std::string dependence_family = "gumbel";
  double tau = 0.5;
  double noise_sd = 0.5;
  double level = 12.0;
  double seasonal_amplitude = 0.0;
  double signal_sd = 3.0;
  Date start = Date(2000, 1, 1);

  static SynthSpec from_json(const nlohmann::json& j)
  {
    SynthSpec spec;
    spec.length = j.value("length", spec.length);
    spec.m = j.value("m", spec.m);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("dependence")) {
      spec.dependence_family =
        j["dependence"].value("family", spec.dependence_family);
      spec.tau = j["dependence"].value("tau", spec.tau);
    }
    spec.noise_sd = j.value("noise_sd", spec.noise_sd);
    spec.level = j.value("level", spec.level);
    spec.seasonal_amplitude =
      j.value("seasonal_amplitude", spec.seasonal_amplitude);
    spec.signal_sd = j.value("signal_sd", spec.signal_sd);
    if (j.contains("start")) {
      spec.start = Date::parse(j["start"].get<std::string>());
    }
    if (spec.length < 2 || spec.m < 2) {
      throw config_error("synth spec needs length >= 2 and m >= 2");
    }
    if (spec.noise_sd < 0.0 || spec.signal_sd <= 0.0) {
      throw config_error("synth spec needs noise_sd >= 0 and signal_sd > 0");
    }
    return spec;
  }
};

//! Draws a station series from a declared joint law: a latent signal with
//! optional seasonal cycle drives all members, and the observation is tied
//! to the signal through the configured copula. Deterministic per seed.
inline StationSeries synth_generate(const SynthSpec& spec)
{
  PairCopula cop;
  bool comonotone = false;
  if (spec.dependence_family == "comonotone") {
    comonotone = true;
  } else if (spec.dependence_family == "independence") {
    cop = PairCopula::independence();
  } else {
    const CopulaFamily family = family_from_name(spec.dependence_family);
    int rotation = 0;
    if (spec.tau < 0.0 && (family == CopulaFamily::clayton ||
                           family == CopulaFamily::gumbel)) {
      rotation = 90;
    }
    cop = tau_to_param(family, spec.tau, rotation);
  }

  StationSeries series;
  series.station_id = "synthetic";
  series.horizon_hours = 24;
  const std::size_t n = static_cast<std::size_t>(spec.length);
  const std::size_t m_total = static_cast<std::size_t>(spec.m) + 2;
  series.dates.reserve(n);
  series.obs.resize(n);
  series.members.resize(static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(m_total));
  for (int j = 0; j < spec.m; ++j) {
    char name[16];
    std::snprintf(name, sizeof(name), "ens_%02d", j + 1);
    series.member_names.push_back(name);
    series.member_roles.push_back(MemberRole::perturbed);
  }
  series.member_names.push_back("ctrl");
  series.member_roles.push_back(MemberRole::control);
  series.member_names.push_back("hres");
  series.member_roles.push_back(MemberRole::highres);

  const double psi = 2.0 * std::numbers::pi / 365.25;
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < n; ++i) {
    series.dates.push_back(spec.start.plus_days(static_cast<long>(i)));
    const double seasonal =
      spec.level +
      spec.seasonal_amplitude * std::cos(psi * static_cast<double>(i));
    const double u = rng.uniform01();
    const double w = rng.uniform01();
    const double v = comonotone ? u : cop.hinv(u, w, 1);
    const double signal = seasonal + spec.signal_sd * stats::norm_quantile(u);
    series.obs[i] =
      seasonal + spec.signal_sd * stats::norm_quantile(clamp_interior(v));
    const auto row = static_cast<Eigen::Index>(i);
    for (int j = 0; j < spec.m; ++j) {
      series.members(row, j) = signal + spec.noise_sd * rng.normal();
    }
    series.members(row, spec.m) = signal + spec.noise_sd * rng.normal();
    series.members(row, spec.m + 1) =
      signal + 0.8 * spec.noise_sd * rng.normal();
  }
  return series;
}

} // namespace vinecast
