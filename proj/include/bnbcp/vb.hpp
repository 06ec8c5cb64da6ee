#pragma once

#include "bnbcp/allocation.hpp"
#include "bnbcp/defs.hpp"
#include "bnbcp/evaluation.hpp"
#include "bnbcp/model.hpp"

#include <chrono>
#include <deque>
#include <limits>
#include <utility>

namespace bnbcp {

struct VbConfig {
    std::int64_t max_iters = 100;
    double tolerance = 1e-5; // heldout log-likelihood plateau
    std::int64_t eval_every = 1;
    std::uint64_t seed = 0;
    int workers = 1;
    double rank_threshold = 0.01;

    void validate() const {
        if (max_iters < 1 || eval_every < 1 || workers < 1) {
            throw std::invalid_argument("invalid VB configuration");
        }
    }
};

/// Expected-count allocation over all stored entries using the mean-field
/// rule with digamma terms from `stats` and ln E[p_r] from the variational
/// beta parameters. Returns fresh statistics.
template <typename Scalar>
SufficientStats<Scalar>
vb_update_allocations(const SparseCountTensor& train,
                      const VariationalState<Scalar>& vstate,
                      const SufficientStats<Scalar>& stats,
                      const Hyperparams<Scalar>& hyper, int workers = 1) {
    const VectorX<Scalar> mean_p =
        (vstate.p_a.array() / (vstate.p_a.array() + vstate.p_b.array()))
            .matrix();
    const auto tables =
        MeanFieldTables<Scalar>::from_stats(stats, hyper, mean_p);
    return expected_allocation_stats(train, nullptr, tables, workers);
}

/// rho^(k) = a^(k) + s^(k), elementwise.
template <typename Scalar>
void vb_update_factors(const SufficientStats<Scalar>& stats,
                       const Hyperparams<Scalar>& hyper,
                       VariationalState<Scalar>& vstate) {
    for (std::size_t k = 0; k < vstate.rho.size(); ++k) {
        vstate.rho[k] =
            (stats.per_mode[k].array() + hyper.dirichlet_a[k]).matrix();
    }
}

/// p_a = c*eps + s_r, p_b = c*(1-eps) + g.
template <typename Scalar>
void vb_update_p(const SufficientStats<Scalar>& stats,
                 const Hyperparams<Scalar>& hyper,
                 VariationalState<Scalar>& vstate) {
    const Scalar c = hyper.beta_concentration;
    const Scalar eps = hyper.beta_mean;
    vstate.p_a = (stats.total.array() + c * eps).matrix();
    vstate.p_b.setConstant(stats.total.size(),
                           c * (Scalar(1) - eps) + hyper.gamma_shape);
}

/// lambda_a = g + s_r (shape), lambda_b = E[p_r] (scale);
/// E[lambda_r] = lambda_a * lambda_b.
template <typename Scalar>
void vb_update_lambda(const SufficientStats<Scalar>& stats,
                      const VectorX<Scalar>& mean_p,
                      const Hyperparams<Scalar>& hyper,
                      VariationalState<Scalar>& vstate) {
    vstate.lambda_a = (stats.total.array() + hyper.gamma_shape).matrix();
    vstate.lambda_b = mean_p;
}

/// Coordinate ascent (allocations, factors, p, lambda) until max_iters or
/// until the relative change of the heldout log-likelihood across a window
/// of 5 evaluations falls below the tolerance. The allocation step reads the
/// current variational parameters, which after the first iteration carry
/// exactly a^(k) + s^(k); at initialization they carry the jittered priors
/// that break mean-field symmetry.
template <typename Scalar = double>
std::pair<VariationalState<Scalar>, FitTrace>
run_vb(const SparseCountTensor& train, const SparseCountTensor& heldout,
       const VbConfig& config, const Hyperparams<Scalar>& hyper) {
    config.validate();
    VariationalState<Scalar> vstate =
        init_variational(train.shape(), hyper, config.seed);

    FitTrace trace;
    std::deque<double> window;
    const auto t_start = std::chrono::steady_clock::now();

    for (std::int64_t iter = 1; iter <= config.max_iters; ++iter) {
        const auto tables = MeanFieldTables<Scalar>::from_variational(vstate);
        const SufficientStats<Scalar> stats =
            expected_allocation_stats(train, nullptr, tables, config.workers);
        vb_update_factors(stats, hyper, vstate);
        vb_update_p(stats, hyper, vstate);
        const VectorX<Scalar> mean_p =
            (vstate.p_a.array() / (vstate.p_a.array() + vstate.p_b.array()))
                .matrix();
        vb_update_lambda(stats, mean_p, hyper, vstate);

        if (iter % config.eval_every == 0 || iter == config.max_iters) {
            const ModelState<Scalar> model = point_estimate(vstate);
            const std::chrono::duration<double> elapsed =
                std::chrono::steady_clock::now() - t_start;
            const double ll = heldout_loglik(heldout, model);
            trace.rows.push_back(
                {iter, elapsed.count(), ll, heldout_mae(heldout, model),
                 effective_rank(model.lambda, config.rank_threshold)});

            window.push_back(ll);
            if (window.size() > 5) window.pop_front();
            double rel_change = std::numeric_limits<double>::infinity();
            if (window.size() == 5) {
                rel_change = std::abs(window.back() - window.front()) /
                             std::max(std::abs(window.front()), 1e-12);
            }
            if (rel_change <= config.tolerance) {
                break;
            }
        }
    }
    return {std::move(vstate), std::move(trace)};
}

} // namespace bnbcp
