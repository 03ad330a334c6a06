#include "vinecast/dataset.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

using namespace vinecast;

namespace {

StationSeries from_csv(const std::string& text)
{
  std::istringstream in(text);
  return parse_csv(in);
}

} // namespace

TEST_CASE("csv ingestion basics", "[dataset]")
{
  const auto s = from_csv("date,station,obs,ens_01,ens_02\n"
                          "2010-01-01,frankfurt,1.5,1.0,2.0\n"
                          "2010-01-02,frankfurt,2.5,2.0,3.0\n"
                          "2010-01-03,frankfurt,3.5,3.0,4.0\n");
  CHECK(s.rows() == 3);
  CHECK(s.member_count() == 2);
  CHECK(s.station_id == "frankfurt");
  CHECK(s.obs[1] == 2.5);
  CHECK(s.members(2, 1) == 4.0);
  CHECK(s.member_roles[0] == MemberRole::perturbed);
}

TEST_CASE("csv missing and malformed cells", "[dataset]")
{
  const auto s = from_csv("date,station,obs,ens_01,ctrl,hres\n"
                          "2010-01-01,x,,1.0,2.0,3.0\n"
                          "2010-01-02,x,NA,1.0,what,3.0\n");
  CHECK(is_missing(s.obs[0]));
  CHECK(is_missing(s.obs[1]));
  CHECK(is_missing(s.members(1, 1)));
  CHECK(s.member_roles[1] == MemberRole::control);
  CHECK(s.member_roles[2] == MemberRole::highres);
}

TEST_CASE("csv rows are sorted by date", "[dataset]")
{
  const auto s = from_csv("date,station,obs,ens_01\n"
                          "2010-01-03,x,3,0\n"
                          "2010-01-01,x,1,0\n"
                          "2010-01-02,x,2,0\n");
  CHECK(s.dates.front() == Date(2010, 1, 1));
  CHECK(s.obs == std::vector<double>{ 1, 2, 3 });
}

TEST_CASE("csv errors name the offending line or key", "[dataset]")
{
  CHECK_THROWS_WITH(from_csv("date,station,obs,ens_01\n"
                             "2010-13-40,x,1,0\n"),
                    Catch::Matchers::ContainsSubstring("line 2"));
  CHECK_THROWS_WITH(from_csv("date,station,obs,ens_01\n"
                             "2010-01-01,x,1,0\n"
                             "2010-01-01,x,2,0\n"),
                    Catch::Matchers::ContainsSubstring("duplicate"));
  CHECK_THROWS_AS(from_csv("date,station,obs,ens_01\n"
                           "2010-01-01,x,1,0\n"
                           "2010-01-02,y,1,0\n"),
                  data_error);
}

TEST_CASE("csv round trip", "[dataset]")
{
  const auto spec = SynthSpec{};
  const auto series = synth_generate(spec);
  std::ostringstream out;
  write_csv(series, out);
  std::istringstream in(out.str());
  const auto back = parse_csv(in);
  CHECK(back.rows() == series.rows());
  CHECK(back.station_id == series.station_id);
  for (std::size_t i = 0; i < series.rows(); ++i) {
    CHECK(back.obs[i] == Catch::Approx(series.obs[i]).epsilon(1e-9));
  }
}

TEST_CASE("harmonic fit on a constant series", "[dataset]")
{
  std::vector<double> y(40, 5.0);
  std::vector<Date> dates;
  for (int i = 0; i < 40; ++i) {
    dates.push_back(Date(2010, 1, 1).plus_days(i));
  }
  const auto fit = fit_harmonic(y, dates);
  CHECK(fit.mu == Catch::Approx(5.0).margin(1e-10));
  CHECK(fit.a == Catch::Approx(0.0).margin(1e-10));
  CHECK(fit.b == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("harmonic fit recovers cosine and sine components", "[dataset]")
{
  const double psi = 2.0 * std::numbers::pi / 365.25;
  std::vector<Date> dates;
  std::vector<double> cosine, sine, ts;
  for (int i = 0; i < 730; ++i) {
    dates.push_back(Date(2008, 1, 1).plus_days(i));
    ts.push_back(i);
    cosine.push_back(2.0 + 3.0 * std::cos(psi * i));
    sine.push_back(std::sin(psi * i));
  }

  const auto fit_cos = fit_harmonic(cosine, dates);
  const auto oracle_cos = oracles::harmonic_normal_equations(cosine, ts);
  CHECK(fit_cos.mu == Catch::Approx(oracle_cos[0]).margin(1e-8));
  CHECK(fit_cos.a == Catch::Approx(oracle_cos[1]).margin(1e-8));
  CHECK(fit_cos.b == Catch::Approx(oracle_cos[2]).margin(1e-8));
  CHECK(fit_cos.mu == Catch::Approx(2.0).margin(1e-8));
  CHECK(fit_cos.a == Catch::Approx(3.0).margin(1e-8));
  CHECK(fit_cos.b == Catch::Approx(0.0).margin(1e-8));

  const auto fit_sin = fit_harmonic(sine, dates);
  CHECK(fit_sin.a == Catch::Approx(0.0).margin(1e-8));
  CHECK(fit_sin.b == Catch::Approx(1.0).margin(1e-8));

  std::vector<double> two = { 1.0, 2.0 };
  std::vector<Date> two_dates = { dates[0], dates[1] };
  CHECK_THROWS_AS(fit_harmonic(two, two_dates), data_error);
}

TEST_CASE("imputation is a no-op on complete series and idempotent",
          "[dataset]")
{
  auto spec = SynthSpec{};
  spec.length = 200;
  const auto series = synth_generate(spec);
  const auto once = impute_series(series);
  CHECK(once.rows() == series.rows());
  CHECK(once.obs == series.obs);
  CHECK(once.members == series.members);
  const auto twice = impute_series(once);
  CHECK(twice.obs == once.obs);
  CHECK(twice.members == once.members);
}

TEST_CASE("imputation fills a gap with the harmonic value", "[dataset]")
{
  const double psi = 2.0 * std::numbers::pi / 365.25;
  StationSeries s;
  s.station_id = "t";
  s.member_names = { "ens_01", "ctrl", "hres" };
  s.member_roles = { MemberRole::perturbed, MemberRole::control,
                     MemberRole::highres };
  const int n = 730;
  s.members.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    s.dates.push_back(Date(2005, 1, 1).plus_days(i));
    const double value = 4.0 + 2.0 * std::cos(psi * i);
    s.obs.push_back(value);
    for (int j = 0; j < 3; ++j) {
      s.members(i, j) = value;
    }
  }
  for (int i = 100; i < 110; ++i) {
    s.members(i, 0) = nan_value; // 10-day gap in one member
  }
  const auto filled = impute_series(s);
  for (int i = 100; i < 110; ++i) {
    CHECK(filled.members(i, 0) ==
          Catch::Approx(4.0 + 2.0 * std::cos(psi * i)).margin(1e-6));
    CHECK(filled.members(i, 1) == s.members(i, 1)); // untouched column
  }
}

TEST_CASE("imputation touches only the missing column", "[dataset]")
{
  auto spec = SynthSpec{};
  spec.length = 400;
  auto series = synth_generate(spec);
  const auto pristine = series;
  series.obs[5] = nan_value;
  series.obs[200] = nan_value;
  const auto filled = impute_series(series);
  CHECK(filled.members == pristine.members);
  CHECK(!is_missing(filled.obs[5]));
  CHECK(!is_missing(filled.obs[200]));
}

TEST_CASE("imputation inserts missing calendar days", "[dataset]")
{
  auto s = from_csv("date,station,obs,ens_01,ctrl,hres\n"
                    "2010-01-01,x,1,1,1,1\n"
                    "2010-01-02,x,2,2,2,2\n"
                    "2010-01-05,x,5,5,5,5\n"
                    "2010-01-06,x,6,6,6,6\n");
  // too few points for the harmonic fit ranks as insufficient data
  CHECK_THROWS_WITH(impute_series(from_csv("date,station,obs,ens_01\n"
                                           "2010-01-01,x,1,\n"
                                           "2010-01-02,x,2,1\n"
                                           "2010-01-05,x,5,1\n")),
                    Catch::Matchers::ContainsSubstring("ens_01"));
  const auto filled = impute_series(s);
  CHECK(filled.rows() == 6);
  CHECK(filled.dates[2] == Date(2010, 1, 3));
  for (std::size_t i = 0; i < filled.rows(); ++i) {
    CHECK(!is_missing(filled.obs[i]));
  }
}

TEST_CASE("standard window", "[dataset]")
{
  const auto w = standard_window(41, 40);
  REQUIRE(w.size() == 40);
  CHECK(w.front() == 1);
  CHECK(w.back() == 40);

  CHECK(standard_window(5, 2) == std::vector<int>{ 3, 4 });
  CHECK_THROWS_AS(standard_window(10, 10), data_error);

  for (int test = 11; test < 60; test += 7) {
    for (int idx : standard_window(test, 10)) {
      CHECK(idx < test); // no leakage
      CHECK(idx >= 1);
    }
  }
}

TEST_CASE("refined window reproduces the case-study cardinality",
          "[dataset]")
{
  const Date test(2011, 6, 25);
  const auto w = refined_window(test, 45, Date(2002, 1, 1),
                                Date(2014, 3, 20));
  CHECK(w.size() == 864);
  for (const auto& d : w) {
    CHECK(d < test);
  }
  CHECK(std::is_sorted(w.begin(), w.end()));
}

TEST_CASE("refined window degenerate and partial cases", "[dataset]")
{
  // single year of data: only the recency block remains
  const auto w1 = refined_window(Date(2002, 8, 1), 45, Date(2002, 1, 1),
                                 Date(2002, 12, 31));
  CHECK(w1.size() == 45);
  CHECK(w1.back() == Date(2002, 7, 31));

  // partial prior-year coverage contributes the covered subset
  const auto w2 = refined_window(Date(2003, 2, 1), 45, Date(2002, 1, 20),
                                 Date(2003, 12, 31));
  // prior-year interval [2001-12-18, 2002-03-18] clipped at 2002-01-20
  std::size_t prior = 0;
  for (const auto& d : w2) {
    prior += d.year() == 2002 && d <= Date(2002, 3, 18);
  }
  CHECK(prior == static_cast<std::size_t>(Date(2002, 3, 18) -
                                          Date(2002, 1, 20)) + 1);

  CHECK_THROWS_AS(refined_window(Date(2002, 1, 10), 45, Date(2002, 1, 1),
                                 Date(2002, 12, 31)),
                  data_error);
}

TEST_CASE("refined window leap-year alignment", "[dataset]")
{
  // center on Feb 29; non-leap prior years align on Feb 28
  const auto w = refined_window(Date(2008, 2, 29), 2, Date(2006, 1, 1),
                                Date(2008, 12, 31));
  CHECK(std::count(w.begin(), w.end(), Date(2007, 2, 28)) == 1);
  CHECK(std::count(w.begin(), w.end(), Date(2007, 3, 1)) == 1);
  CHECK(std::count(w.begin(), w.end(), Date(2006, 2, 26)) == 1);
}

TEST_CASE("refined window shifts the recency block for longer horizons",
          "[dataset]")
{
  const Date test(2011, 6, 25);
  const auto w48 = refined_window(test, 45, Date(2002, 1, 1),
                                  Date(2014, 3, 20), 48);
  // ceil(48/24) - 1 = 1 day shift: newest training day is test - 2
  CHECK(std::count(w48.begin(), w48.end(), test.plus_days(-1)) == 0);
  CHECK(std::count(w48.begin(), w48.end(), test.plus_days(-2)) == 1);
  CHECK(std::count(w48.begin(), w48.end(), test.plus_days(-46)) == 1);
  CHECK(std::count(w48.begin(), w48.end(), test.plus_days(-47)) == 0);

  const auto w240 = refined_window(test, 45, Date(2002, 1, 1),
                                   Date(2014, 3, 20), 240);
  CHECK(std::count(w240.begin(), w240.end(), test.plus_days(-9)) == 0);
  CHECK(std::count(w240.begin(), w240.end(), test.plus_days(-10)) == 1);
  // prior-year blocks are unchanged
  CHECK(std::count(w240.begin(), w240.end(), Date(2010, 6, 25)) == 1);
}

TEST_CASE("group predictors", "[dataset]")
{
  StationSeries s;
  s.station_id = "g";
  s.member_names = { "ens_01", "ens_02", "ens_03", "ctrl", "hres" };
  s.member_roles = { MemberRole::perturbed, MemberRole::perturbed,
                     MemberRole::perturbed, MemberRole::control,
                     MemberRole::highres };
  s.dates = { Date(2010, 1, 1), Date(2010, 1, 2) };
  s.obs = { 0.0, 0.0 };
  s.members.resize(2, 5);
  s.members << 3.0, 3.0, 3.0, 9.0, 8.0, //
    1.0, 2.0, 3.0, 4.0, 5.0;
  const auto gp = group_predictors(s);
  CHECK(gp[0].mean_perturbed == 3.0);
  CHECK(gp[0].ens_var == 0.0);
  CHECK(gp[0].ctrl == 9.0);
  CHECK(gp[0].hres == 8.0);
  CHECK(gp[1].mean_perturbed == Catch::Approx(2.0));
  CHECK(gp[1].ens_var == Catch::Approx(1.0));

  StationSeries two = s;
  two.member_names = { "ens_01", "ens_02", "ctrl", "hres" };
  two.member_roles = { MemberRole::perturbed, MemberRole::perturbed,
                       MemberRole::control, MemberRole::highres };
  two.members.resize(2, 4);
  two.members << 0.0, 2.0, 0.0, 0.0, //
    0.0, 2.0, 0.0, 0.0;
  const auto gp2 = group_predictors(two);
  CHECK(gp2[0].mean_perturbed == Catch::Approx(1.0));
  CHECK(gp2[0].ens_var == Catch::Approx(2.0));

  StationSeries bad = s;
  bad.member_roles[3] = MemberRole::highres; // two highres, no control
  CHECK_THROWS_AS(group_predictors(bad), data_error);
}

TEST_CASE("group predictors match a two-pass computation", "[dataset]")
{
  auto spec = SynthSpec{};
  spec.length = 300;
  spec.m = 12;
  const auto series = synth_generate(spec);
  const auto gp = group_predictors(series);
  for (std::size_t i = 0; i < series.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < 12; ++j) {
      sum += series.members(static_cast<Eigen::Index>(i), j);
    }
    const double mean = sum / 12.0;
    double ss = 0.0;
    for (int j = 0; j < 12; ++j) {
      const double d = series.members(static_cast<Eigen::Index>(i), j) - mean;
      ss += d * d;
    }
    CHECK(gp[i].mean_perturbed == Catch::Approx(mean).epsilon(1e-12));
    CHECK(gp[i].ens_var == Catch::Approx(ss / 11.0).epsilon(1e-12));
  }
}

TEST_CASE("synthetic generator", "[dataset]")
{
  SynthSpec spec;
  spec.length = 300;
  spec.seed = 9;
  const auto a = synth_generate(spec);
  const auto b = synth_generate(spec);
  CHECK(a.obs == b.obs);
  CHECK(a.members == b.members);

  SynthSpec informative;
  informative.length = 300;
  informative.noise_sd = 0.0;
  informative.dependence_family = "comonotone";
  const auto c = synth_generate(informative);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    CHECK(c.obs[i] == Catch::Approx(c.members(static_cast<Eigen::Index>(i), 0))
                        .margin(1e-9));
  }

  SynthSpec gumbel;
  gumbel.length = 5000;
  gumbel.dependence_family = "gumbel";
  gumbel.tau = 0.5;
  gumbel.noise_sd = 0.0;
  gumbel.seed = 4;
  const auto d = synth_generate(gumbel);
  std::vector<double> member1(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) {
    member1[i] = d.members(static_cast<Eigen::Index>(i), 0);
  }
  CHECK(kendall_tau_empirical(d.obs, member1) ==
        Catch::Approx(0.5).margin(0.03));

  SynthSpec bad;
  bad.dependence_family = "pareto";
  CHECK_THROWS_AS(synth_generate(bad), config_error);
}

TEST_CASE("synth spec json parsing", "[dataset]")
{
  const auto j = nlohmann::json::parse(R"({
    "length": 123, "m": 7, "seed": 42,
    "dependence": {"family": "frank", "tau": -0.4},
    "noise_sd": 0.25, "seasonal_amplitude": 5.0
  })");
  const auto spec = SynthSpec::from_json(j);
  CHECK(spec.length == 123);
  CHECK(spec.m == 7);
  CHECK(spec.seed == 42);
  CHECK(spec.dependence_family == "frank");
  CHECK(spec.tau == -0.4);
  CHECK(spec.noise_sd == 0.25);
  const auto series = synth_generate(spec);
  CHECK(series.rows() == 123);
  CHECK(series.member_count() == 9);
}
