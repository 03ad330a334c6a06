#pragma once

#include "vinecast/common.hpp"
#include "vinecast/marginal.hpp"
#include "vinecast/optim.hpp"
#include "vinecast/paircopula.hpp"

#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace vinecast {

//! Scores and decisions recorded during forward predictor selection.
struct SelectionTrace
{
  //! Exact objective used throughout the procedure.
  std::string criterion =
    "caic = conditional log-likelihood of the response given the selected "
    "predictors, minus the number of copula parameters on response edges; "
    "a candidate is accepted only if it strictly increases caic";

  struct Step
  {
    //! (candidate index, caic of the tentatively extended model)
    std::vector<std::pair<std::size_t, double>> candidate_scores;
    long chosen = -1; // candidate index, or -1 when the step was rejected
    std::string stop_reason;
  };

  std::vector<Step> steps;
  //! caic after each accepted step; starts at 0 for the empty model.
  std::vector<double> accepted_caic{ 0.0 };
  std::vector<std::string> warnings;
};

struct DVineFitOptions
{
  std::size_t min_train_size = 100;
  std::size_t warn_train_size = 300;
  std::size_t max_predictors = std::numeric_limits<std::size_t>::max();
  //! Divide the independence-test level by the number of candidates under
  //! consideration in the current step (family-wise control of spurious
  //! predictor inclusion).
  bool bonferroni_independence = true;
  std::vector<std::string> predictor_names; // optional, for reporting
  //! When non-empty, skip selection and fit exactly this predictor order.
  std::vector<std::size_t> forced_order;
};

//! D-vine quantile regression model: response-first variable order, pair
//! copulas on every edge of the path vine, and kernel marginals for the
//! response and each selected predictor.
//!
//! Conditional CDF, density and quantiles are evaluated by the h-function
//! recursion along the vine; by construction quantile curves for different
//! levels cannot cross.
class DVineModel
{
public:
  DVineModel() = default;

  //! Indices of the selected predictors (into the candidate list passed to
  //! select_and_fit), in selection order.
  const std::vector<std::size_t>& predictor_order() const { return order_; }
  const std::vector<std::string>& predictor_names() const { return names_; }
  std::size_t predictor_count() const { return order_.size(); }

  const KdeMarginal& response_marginal() const { return resp_marginal_; }
  const KdeMarginal& predictor_marginal(std::size_t slot) const
  {
    return pred_marginals_.at(slot);
  }

  //! trees()[j-1][i] couples order slots i and i+j given the slots between.
  const std::vector<std::vector<PairCopula>>& trees() const { return trees_; }

  double conditional_loglik() const { return cll_; }
  double caic() const { return caic_; }

  //! Number of copula parameters on edges incident to the response.
  std::size_t response_edge_parameters() const
  {
    std::size_t k = 0;
    for (const auto& tree : trees_) {
      k += tree.front().parameter_count();
    }
    return k;
  }

  //! Precomputed conditional CDFs of the predictors, so that repeated
  //! response-side evaluations for one conditioning vector are O(k).
  struct ConditioningCache
  {
    std::vector<double> edge_args; // F(U_j | U_1..U_{j-1}), j = 1..k
  };

  //! us: copula-scale predictor values in order slots 1..k.
  ConditioningCache make_cache(std::span<const double> us) const
  {
    const std::size_t k = order_.size();
    if (us.size() != k) {
      throw std::invalid_argument("conditioning vector has wrong length");
    }
    ConditioningCache cache;
    cache.edge_args.resize(k);
    if (k == 0) {
      return cache;
    }
    cache.edge_args[0] = clamp_interior(us[0]);
    if (k == 1) {
      return cache;
    }
    // forward/backward conditionals over the predictor sub-path (slots 1..k)
    std::vector<double> fwd(us.begin(), us.end());
    std::vector<double> bwd(us.begin(), us.end());
    for (std::size_t level = 1; level < k; ++level) {
      // after this pass: fwd[i] = F(u_{i+level} | u_i..), bwd[i] = F(u_i | ..)
      std::vector<double> fwd_next(k - level), bwd_next(k - level);
      for (std::size_t i = 0; i + level < k; ++i) {
        // predictor edge at tree `level`, position i+1 of the full vine
        const PairCopula& edge = trees_[level - 1][i + 1];
        const double a = bwd[i];
        const double b = fwd[i + 1];
        fwd_next[i] = edge.hfunc(a, b, 1);
        bwd_next[i] = edge.hfunc(a, b, 2);
      }
      // F(U_{level+1} | U_1..U_level) is the leftmost forward value
      cache.edge_args[level] = fwd_next[0];
      fwd = std::move(fwd_next);
      bwd = std::move(bwd_next);
    }
    return cache;
  }

  //! Conditional copula CDF C(v | u_1..u_k) on the copula scale.
  double cond_cdf_u(double v, const ConditioningCache& cache) const
  {
    double a = clamp_interior(v);
    for (std::size_t level = 1; level <= order_.size(); ++level) {
      a = trees_[level - 1][0].hfunc(a, cache.edge_args[level - 1], 2);
    }
    return a;
  }

  double cond_cdf_u(double v, std::span<const double> us) const
  {
    return cond_cdf_u(v, make_cache(us));
  }

  //! Conditional copula density c(v | u_1..u_k) on the copula scale.
  double cond_density_u(double v, const ConditioningCache& cache) const
  {
    double a = clamp_interior(v);
    double dens = 1.0;
    for (std::size_t level = 1; level <= order_.size(); ++level) {
      const PairCopula& edge = trees_[level - 1][0];
      const double b = cache.edge_args[level - 1];
      dens *= edge.density(a, b);
      a = edge.hfunc(a, b, 2);
    }
    return dens;
  }

  //! Inverse of cond_cdf_u in v.
  double cond_quantile_u(double alpha, const ConditioningCache& cache,
                         double bracket_lo = uv_eps) const
  {
    if (!(alpha > 0.0) || !(alpha < 1.0)) {
      throw std::domain_error("quantile level must lie in (0, 1)");
    }
    if (order_.empty()) {
      return alpha;
    }
    const double lo = std::min(std::max(bracket_lo, uv_eps), 1.0 - 2.0 * uv_eps);
    const double hi = 1.0 - uv_eps;
    if (cond_cdf_u(lo, cache) >= alpha) {
      return lo;
    }
    if (cond_cdf_u(hi, cache) <= alpha) {
      return hi;
    }
    return optim::invert_monotone(
      [&](double v) { return cond_cdf_u(v, cache); }, alpha, lo, hi, 1e-9,
      1e-13, [&](double v) { return cond_density_u(v, cache); });
  }

  //! PIT of raw predictor values through the stored marginals.
  std::vector<double> pit_predictors(std::span<const double> xs) const
  {
    if (xs.size() != order_.size()) {
      throw std::invalid_argument("predictor vector has wrong length");
    }
    std::vector<double> us(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) {
      us[j] = pred_marginals_[j].pit(xs[j]);
    }
    return us;
  }

  //! Predictive CDF F(y | x_1..x_k) on the data scale.
  double predictive_cdf(double y, std::span<const double> xs) const
  {
    if (order_.empty()) {
      return resp_marginal_.cdf(y);
    }
    return cond_cdf_u(resp_marginal_.pit(y), make_cache(pit_predictors(xs)));
  }

  //! Conditional quantile on the data scale, Newton-free composition of the
  //! copula-scale inversion and the marginal quantile.
  double cond_quantile(double alpha, std::span<const double> xs) const
  {
    if (order_.empty()) {
      return resp_marginal_.quantile(alpha);
    }
    const auto cache = make_cache(pit_predictors(xs));
    return resp_marginal_.quantile(cond_quantile_u(alpha, cache));
  }

  //! Quantiles at levels r/(R+1), r = 1..R; nondecreasing by construction.
  std::vector<double> predictive_quantiles(std::span<const double> xs,
                                           int r_levels) const
  {
    if (r_levels < 2) {
      throw config_error("quantile grid needs R >= 2");
    }
    std::vector<double> out(static_cast<std::size_t>(r_levels));
    if (order_.empty()) {
      for (int r = 1; r <= r_levels; ++r) {
        out[static_cast<std::size_t>(r - 1)] = resp_marginal_.quantile(
          static_cast<double>(r) / (r_levels + 1.0));
      }
      return out;
    }
    const auto cache = make_cache(pit_predictors(xs));
    double v_prev = uv_eps;
    for (int r = 1; r <= r_levels; ++r) {
      const double alpha = static_cast<double>(r) / (r_levels + 1.0);
      const double v = cond_quantile_u(alpha, cache, v_prev);
      const double y = resp_marginal_.quantile(std::max(v, v_prev));
      v_prev = std::max(v, v_prev);
      out[static_cast<std::size_t>(r - 1)] = y;
      if (r > 1) {
        out[static_cast<std::size_t>(r - 1)] =
          std::max(out[static_cast<std::size_t>(r - 1)],
                   out[static_cast<std::size_t>(r - 2)]);
      }
    }
    return out;
  }

  //! Conditional predictive density f(y | x_1..x_k) on the data scale.
  double cond_density(double y, std::span<const double> xs) const
  {
    const double fy = resp_marginal_.density(y);
    if (order_.empty()) {
      return fy;
    }
    const auto cache = make_cache(pit_predictors(xs));
    return cond_density_u(resp_marginal_.pit(y), cache) * fy;
  }

  // initializer-list conveniences
  double predictive_cdf(double y, std::initializer_list<double> xs) const
  {
    return predictive_cdf(y, std::span<const double>(xs.begin(), xs.size()));
  }
  double cond_quantile(double alpha, std::initializer_list<double> xs) const
  {
    return cond_quantile(alpha, std::span<const double>(xs.begin(), xs.size()));
  }
  double cond_density(double y, std::initializer_list<double> xs) const
  {
    return cond_density(y, std::span<const double>(xs.begin(), xs.size()));
  }
  std::vector<double> predictive_quantiles(std::initializer_list<double> xs,
                                           int r_levels) const
  {
    return predictive_quantiles(
      std::span<const double>(xs.begin(), xs.size()), r_levels);
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["order"] = order_;
    j["predictor_names"] = names_;
    j["cll"] = cll_;
    j["caic"] = caic_;
    auto marg_json = [](const KdeMarginal& m, const std::string& name) {
      return nlohmann::json{ { "name", name },
                             { "n", m.sample().size() },
                             { "bandwidth", m.bandwidth() },
                             { "sample_digest", m.sample_digest() } };
    };
    j["marginals"] = nlohmann::json::array();
    j["marginals"].push_back(marg_json(resp_marginal_, "response"));
    for (std::size_t s = 0; s < pred_marginals_.size(); ++s) {
      j["marginals"].push_back(marg_json(pred_marginals_[s], names_[s]));
    }
    j["edges"] = nlohmann::json::array();
    for (std::size_t t = 0; t < trees_.size(); ++t) {
      for (std::size_t i = 0; i < trees_[t].size(); ++i) {
        const auto& e = trees_[t][i];
        j["edges"].push_back({ { "tree", t + 1 },
                               { "position", i },
                               { "family", family_name(e.family()) },
                               { "rotation", e.rotation() },
                               { "params", e.parameters() } });
      }
    }
    return j;
  }

private:
  friend std::pair<DVineModel, SelectionTrace> select_and_fit(
    std::span<const double>, const std::vector<std::vector<double>>&,
    const FamilyCatalog&, const DVineFitOptions&);
  friend DVineModel dvine_from_json(const nlohmann::json&,
                                    const std::vector<double>&,
                                    const std::vector<std::vector<double>>&);

  std::vector<std::size_t> order_;
  std::vector<std::string> names_;
  KdeMarginal resp_marginal_;
  std::vector<KdeMarginal> pred_marginals_;
  std::vector<std::vector<PairCopula>> trees_;
  double cll_ = 0.0;
  double caic_ = 0.0;
};

//! Forward selection and sequential pair-copula estimation.
//!
//! Starts from the response alone; at each step every unused candidate is
//! tentatively appended to the vine (fitting only the new edges), scored by
//! the caic criterion, and the best candidate is accepted while caic
//! strictly improves. Marginals are fitted once up front on the training
//! data.
inline std::pair<DVineModel, SelectionTrace> select_and_fit(
  std::span<const double> y,
  const std::vector<std::vector<double>>& predictors,
  const FamilyCatalog& catalog = {}, const DVineFitOptions& opts = {})
{
  const std::size_t n = y.size();
  SelectionTrace trace;
  if (n < opts.min_train_size) {
    throw data_error("d-vine fit needs at least " +
                     std::to_string(opts.min_train_size) +
                     " training rows, got " + std::to_string(n));
  }
  if (n < opts.warn_train_size) {
    trace.warnings.push_back(
      "training size " + std::to_string(n) + " is below " +
      std::to_string(opts.warn_train_size) +
      "; pair-copula estimates may be unstable");
  }
  for (const auto& p : predictors) {
    if (p.size() != n) {
      throw std::invalid_argument("predictor length mismatch");
    }
  }
  if (!opts.predictor_names.empty() &&
      opts.predictor_names.size() != predictors.size()) {
    throw std::invalid_argument("predictor name list has wrong length");
  }

  DVineModel model;
  model.resp_marginal_ = KdeMarginal::fit({ y.begin(), y.end() });
  std::vector<KdeMarginal> cand_marginals(predictors.size());
  std::vector<std::vector<double>> cand_u(predictors.size());
  for (std::size_t c = 0; c < predictors.size(); ++c) {
    cand_marginals[c] = KdeMarginal::fit(predictors[c]);
    cand_u[c].resize(n);
    for (std::size_t t = 0; t < n; ++t) {
      cand_u[c][t] = cand_marginals[c].pit(predictors[c][t]);
    }
  }

  // backward conditionals F(w_i | w_{i+1..last}) for the current order;
  // slot 0 is the response
  std::vector<std::vector<double>> backward(1);
  backward[0].resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    backward[0][t] = model.resp_marginal_.pit(y[t]);
  }

  std::vector<bool> used(predictors.size(), false);
  double cll = 0.0;
  double caic = 0.0;
  std::size_t resp_params = 0;

  struct Extension
  {
    std::vector<PairCopula> edges;       // levels 1..d
    std::vector<std::vector<double>> backward_updates; // per level
    std::vector<double> new_forward;     // F(u_new | w_1..w_last)
    double cll_gain = 0.0;
    std::size_t resp_edge_params = 0;
  };

  auto try_extend = [&](std::size_t cand,
                        const FamilyCatalog& step_catalog) -> Extension {
    const std::size_t d = model.order_.size() + 1; // new slot index
    Extension ext;
    ext.edges.reserve(d);
    ext.backward_updates.resize(d);
    std::vector<double> fwd = cand_u[cand];
    for (std::size_t level = 1; level <= d; ++level) {
      const auto& a = backward[d - level]; // F(w_{d-level} | middle)
      PairCopula edge = fit_pair(a, fwd, step_catalog);
      std::vector<double> fwd_next(n), bwd_next(n);
      for (std::size_t t = 0; t < n; ++t) {
        fwd_next[t] = edge.hfunc(a[t], fwd[t], 1);
        bwd_next[t] = edge.hfunc(a[t], fwd[t], 2);
      }
      if (level == d) {
        ext.cll_gain = detail::copula_loglik(edge, a, fwd);
        ext.resp_edge_params = edge.parameter_count();
      }
      ext.backward_updates[d - level] = std::move(bwd_next);
      ext.edges.push_back(std::move(edge));
      fwd = std::move(fwd_next);
    }
    ext.new_forward = cand_u[cand];
    return ext;
  };

  const bool forced = !opts.forced_order.empty();
  while (model.order_.size() < predictors.size() &&
         model.order_.size() < opts.max_predictors &&
         (!forced || model.order_.size() < opts.forced_order.size())) {
    std::size_t remaining = 0;
    for (std::size_t c = 0; c < predictors.size(); ++c) {
      remaining += used[c] ? 0u : 1u;
    }
    FamilyCatalog step_catalog = catalog;
    if (!forced && opts.bonferroni_independence && remaining > 0) {
      step_catalog.independence_level =
        catalog.independence_level / static_cast<double>(remaining);
    }

    SelectionTrace::Step step;
    double best_caic = -std::numeric_limits<double>::infinity();
    long best_cand = -1;
    Extension best_ext;
    for (std::size_t c = 0; c < predictors.size(); ++c) {
      if (used[c] ||
          (forced && c != opts.forced_order.at(model.order_.size()))) {
        continue;
      }
      Extension ext = try_extend(c, step_catalog);
      const double cand_caic =
        cll + ext.cll_gain -
        static_cast<double>(resp_params + ext.resp_edge_params);
      step.candidate_scores.emplace_back(c, cand_caic);
      if (cand_caic > best_caic) {
        best_caic = cand_caic;
        best_cand = static_cast<long>(c);
        best_ext = std::move(ext);
      }
    }

    if (best_cand < 0 || (!forced && best_caic <= caic)) {
      step.stop_reason = "no candidate improves caic";
      trace.steps.push_back(std::move(step));
      break;
    }

    // accept: append the new variable and its edges
    step.chosen = best_cand;
    trace.steps.push_back(std::move(step));
    const auto cand = static_cast<std::size_t>(best_cand);
    used[cand] = true;
    model.order_.push_back(cand);
    model.names_.push_back(opts.predictor_names.empty()
                             ? "x" + std::to_string(cand + 1)
                             : opts.predictor_names.at(cand));
    model.pred_marginals_.push_back(cand_marginals[cand]);
    const std::size_t d = model.order_.size();
    for (std::size_t level = 1; level <= d; ++level) {
      if (model.trees_.size() < level) {
        model.trees_.emplace_back();
      }
      // edge at position d - level of tree `level`
      model.trees_[level - 1].push_back(best_ext.edges[level - 1]);
    }
    for (std::size_t i = 0; i < d; ++i) {
      backward[i] = std::move(best_ext.backward_updates[i]);
    }
    backward.push_back(std::move(best_ext.new_forward));
    cll += best_ext.cll_gain;
    resp_params += best_ext.resp_edge_params;
    caic = best_caic;
    trace.accepted_caic.push_back(caic);
  }

  if (trace.steps.empty() || trace.steps.back().stop_reason.empty()) {
    SelectionTrace::Step step;
    step.stop_reason = model.order_.size() >= opts.max_predictors
                         ? "predictor budget reached"
                         : "all candidates selected";
    if (model.order_.size() == predictors.size() && predictors.empty()) {
      step.stop_reason = "no candidates";
    }
    trace.steps.push_back(std::move(step));
  }

  model.cll_ = cll;
  model.caic_ = caic;
  return { std::move(model), std::move(trace) };
}

//! Rebuilds a serialized model from its JSON form plus the original training
//! columns (the JSON stores only digests of the marginal samples).
inline DVineModel dvine_from_json(
  const nlohmann::json& j, const std::vector<double>& y,
  const std::vector<std::vector<double>>& predictors_in_order)
{
  DVineModel model;
  model.order_ = j.at("order").get<std::vector<std::size_t>>();
  model.names_ = j.at("predictor_names").get<std::vector<std::string>>();
  model.cll_ = j.at("cll").get<double>();
  model.caic_ = j.at("caic").get<double>();
  if (predictors_in_order.size() != model.order_.size()) {
    throw data_error("model rebuild: predictor column count mismatch");
  }
  model.resp_marginal_ = KdeMarginal::fit(y);
  for (const auto& col : predictors_in_order) {
    model.pred_marginals_.push_back(KdeMarginal::fit(col));
  }
  const auto& marg = j.at("marginals");
  auto check_digest = [&](const KdeMarginal& m, std::size_t idx) {
    const auto stored = marg.at(idx).at("sample_digest").get<std::uint64_t>();
    if (stored != m.sample_digest()) {
      throw data_error("model rebuild: training sample digest mismatch for " +
                       marg.at(idx).at("name").get<std::string>());
    }
  };
  check_digest(model.resp_marginal_, 0);
  for (std::size_t s = 0; s < model.pred_marginals_.size(); ++s) {
    check_digest(model.pred_marginals_[s], s + 1);
  }

  const std::size_t k = model.order_.size();
  model.trees_.resize(k);
  for (std::size_t t = 0; t < k; ++t) {
    model.trees_[t].resize(k - t);
  }
  for (const auto& e : j.at("edges")) {
    const auto tree = e.at("tree").get<std::size_t>();
    const auto pos = e.at("position").get<std::size_t>();
    model.trees_.at(tree - 1).at(pos) =
      PairCopula(family_from_name(e.at("family").get<std::string>()),
                 e.at("params").get<std::vector<double>>(),
                 e.at("rotation").get<int>());
  }
  return model;
}

} // namespace vinecast
