#pragma once

#include "bnbcp/allocation.hpp"
#include "bnbcp/defs.hpp"
#include "bnbcp/evaluation.hpp"
#include "bnbcp/model.hpp"
#include "bnbcp/rng.hpp"

#include <chrono>
#include <map>
#include <utility>

namespace bnbcp {

struct GibbsConfig {
    std::int64_t burnin = 0;
    std::int64_t collection = 1;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 10;
    int workers = 1;
    double rank_threshold = 0.01;

    void validate() const {
        if (burnin < 0 || collection < 1 || eval_every < 1 || workers < 1) {
            throw std::invalid_argument("invalid Gibbs configuration");
        }
    }
};

template <typename Scalar = double>
struct PosteriorSummary {
    ModelState<Scalar> mean_model;  // collection average
    ModelState<Scalar> last_sample; // final collected sample
    std::map<int, std::int64_t> rank_histogram;
    VectorX<Scalar> lambda_spectrum; // collection mean of lambda
};

/// Factor conditional: u_r^(k) ~ Dir(a^(k) + s^(k)_{1,r}, ..., a^(k) +
/// s^(k)_{n_k,r}) per mode and component, via normalized gamma draws.
template <typename Scalar>
void sample_factor_columns(const SufficientStats<Scalar>& stats,
                           const Hyperparams<Scalar>& hyper, Rng& rng,
                           std::vector<MatrixX<Scalar>>& factors) {
    for (std::size_t k = 0; k < factors.size(); ++k) {
        const double a = static_cast<double>(hyper.dirichlet_a[k]);
        auto& u = factors[k];
        for (int r = 0; r < u.cols(); ++r) {
            double sum = 0.0;
            for (int j = 0; j < u.rows(); ++j) {
                double g = rng.gamma(
                    a + static_cast<double>(stats.per_mode[k](j, r)), 1.0);
                if (g < 1e-300) g = 1e-300;
                u(j, r) = static_cast<Scalar>(g);
                sum += g;
            }
            u.col(r) /= static_cast<Scalar>(sum);
        }
    }
}

/// Component probability conditional:
/// p_r ~ Beta(c*eps + s_r, c*(1-eps) + g).
template <typename Scalar>
void sample_p(const SufficientStats<Scalar>& stats,
              const Hyperparams<Scalar>& hyper, Rng& rng,
              VectorX<Scalar>& p) {
    const double c = static_cast<double>(hyper.beta_concentration);
    const double eps = static_cast<double>(hyper.beta_mean);
    const double g = static_cast<double>(hyper.gamma_shape);
    for (int r = 0; r < p.size(); ++r) {
        p[r] = static_cast<Scalar>(
            rng.beta(c * eps + static_cast<double>(stats.total[r]),
                     c * (1.0 - eps) + g));
    }
}

/// Component weight conditional: lambda_r ~ Gamma(shape g + s_r, scale p_r).
template <typename Scalar>
void sample_lambda(const SufficientStats<Scalar>& stats,
                   const VectorX<Scalar>& p, const Hyperparams<Scalar>& hyper,
                   Rng& rng, VectorX<Scalar>& lambda) {
    const double g = static_cast<double>(hyper.gamma_shape);
    for (int r = 0; r < lambda.size(); ++r) {
        double lam = rng.gamma(g + static_cast<double>(stats.total[r]),
                               static_cast<double>(p[r]));
        if (lam < 1e-300) lam = 1e-300;
        lambda[r] = static_cast<Scalar>(lam);
    }
}

/// One full sweep: allocate latent counts for every stored entry, accumulate
/// statistics, then update factors, p and lambda in that order. With no
/// observations the conditionals reduce to the priors, so the model is
/// redrawn from them.
template <typename Scalar>
SufficientStats<Scalar> gibbs_sweep(const SparseCountTensor& train,
                                    ModelState<Scalar>& model,
                                    const Hyperparams<Scalar>& hyper,
                                    Rng& rng, int workers = 1) {
    if (train.nnz() == 0) {
        model = init_model(train.shape(), hyper, rng.next_u64());
        return SufficientStats<Scalar>::zeros(train.shape(), model.rank());
    }
    const std::uint64_t alloc_seed = rng.next_u64();
    SufficientStats<Scalar> stats =
        sample_allocation_stats(train, nullptr, model, alloc_seed, workers);
    sample_factor_columns(stats, hyper, rng, model.factors);
    sample_p(stats, hyper, rng, model.p);
    sample_lambda(stats, model.p, hyper, rng, model.lambda);
    return stats;
}

/// Runs the batch sampler: burn-in sweeps are discarded, collection sweeps
/// feed the posterior mean, the rank histogram and the lambda spectrum.
/// Heldout metrics of the current sample are traced every eval_every sweeps
/// and at the final sweep.
template <typename Scalar = double>
std::pair<PosteriorSummary<Scalar>, FitTrace>
run_gibbs(const SparseCountTensor& train, const SparseCountTensor& heldout,
          const GibbsConfig& config, const Hyperparams<Scalar>& hyper) {
    config.validate();
    Rng rng(config.seed);
    ModelState<Scalar> model =
        init_model(train.shape(), hyper, rng.next_u64());

    ModelState<Scalar> sum_model = model;
    for (auto& u : sum_model.factors) u.setZero();
    sum_model.lambda.setZero();
    sum_model.p.setZero();

    PosteriorSummary<Scalar> summary;
    FitTrace trace;
    const auto t_start = std::chrono::steady_clock::now();
    const std::int64_t total = config.burnin + config.collection;

    for (std::int64_t sweep = 1; sweep <= total; ++sweep) {
        gibbs_sweep(train, model, hyper, rng, config.workers);
        if (sweep > config.burnin) {
            for (std::size_t k = 0; k < model.factors.size(); ++k) {
                sum_model.factors[k] += model.factors[k];
            }
            sum_model.lambda += model.lambda;
            sum_model.p += model.p;
            ++summary.rank_histogram[effective_rank(model.lambda,
                                                    config.rank_threshold)];
        }
        if (sweep % config.eval_every == 0 || sweep == total) {
            const std::chrono::duration<double> elapsed =
                std::chrono::steady_clock::now() - t_start;
            trace.rows.push_back(
                {sweep, elapsed.count(), heldout_loglik(heldout, model),
                 heldout_mae(heldout, model),
                 effective_rank(model.lambda, config.rank_threshold)});
        }
    }

    const Scalar inv = Scalar(1) / static_cast<Scalar>(config.collection);
    for (auto& u : sum_model.factors) u *= inv;
    sum_model.lambda *= inv;
    sum_model.p *= inv;
    summary.mean_model = std::move(sum_model);
    summary.last_sample = std::move(model);
    summary.lambda_spectrum = summary.mean_model.lambda;
    return {std::move(summary), std::move(trace)};
}

} // namespace bnbcp
