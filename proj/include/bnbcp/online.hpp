#pragma once

#include "bnbcp/allocation.hpp"
#include "bnbcp/defs.hpp"
#include "bnbcp/evaluation.hpp"
#include "bnbcp/model.hpp"
#include "bnbcp/rng.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace bnbcp {

/// Robbins-Monro decay gamma_t = (t0 + t)^(-kappa). The usual convergence
/// guarantee asks for kappa above 0.5; the boundary value 0.5 is accepted
/// because it is the recommended operating point.
struct LearningRateSchedule {
    double t0 = 0.0;
    double kappa = 0.5;

    void validate() const {
        if (!(t0 >= 0.0) || !(kappa >= 0.5 && kappa <= 1.0)) {
            throw std::invalid_argument(
                "learning-rate schedule needs t0 >= 0 and kappa in [0.5, 1]");
        }
    }
};

inline double learning_rate(std::int64_t t, const LearningRateSchedule& s) {
    s.validate();
    if (t < 1) {
        throw std::invalid_argument("learning_rate: step index must be >= 1");
    }
    return std::pow(s.t0 + static_cast<double>(t), -s.kappa);
}

enum class MinibatchSampling { UniformWithReplacement, EpochShuffled };

struct MinibatchPlan {
    std::int64_t batch_size = 1;
    MinibatchSampling sampling = MinibatchSampling::UniformWithReplacement;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) {
            throw std::invalid_argument("minibatch size must be >= 1");
        }
    }
};

/// Decays the conditional sufficient statistics toward the minibatch
/// statistics: css = (1 - gamma) * css + gamma * scale * batch, applied to
/// the per-mode tables and the totals alike (so mode-consistency is
/// preserved). `scale` is N/B, the reweighting that makes the minibatch
/// statistics estimate full-data averages.
template <typename Scalar>
void cdf_blend_stats(SufficientStats<Scalar>& css,
                     const SufficientStats<Scalar>& batch, double gamma,
                     double scale) {
    const Scalar keep = static_cast<Scalar>(1.0 - gamma);
    const Scalar mix = static_cast<Scalar>(gamma * scale);
    for (std::size_t k = 0; k < css.per_mode.size(); ++k) {
        css.per_mode[k] = keep * css.per_mode[k] + mix * batch.per_mode[k];
    }
    css.total = keep * css.total + mix * batch.total;
}

/// Sets the model to the analytic means of the full conditionals given the
/// statistics: Dirichlet mean columns, beta mean p_r, gamma mean
/// (g + s_r) * p_r.
template <typename Scalar>
void conditional_mean_model(const SufficientStats<Scalar>& stats,
                            const Hyperparams<Scalar>& hyper,
                            ModelState<Scalar>& model) {
    for (std::size_t k = 0; k < model.factors.size(); ++k) {
        const Scalar a = hyper.dirichlet_a[k];
        auto& u = model.factors[k];
        u = (stats.per_mode[k].array() + a).matrix();
        for (int r = 0; r < u.cols(); ++r) {
            u.col(r) /= u.col(r).sum();
        }
    }
    const Scalar c = hyper.beta_concentration;
    const Scalar eps = hyper.beta_mean;
    const Scalar g = hyper.gamma_shape;
    for (int r = 0; r < model.p.size(); ++r) {
        const Scalar pa = c * eps + stats.total[r];
        const Scalar pb = c * (Scalar(1) - eps) + g;
        model.p[r] = pa / (pa + pb);
        model.lambda[r] = (g + stats.total[r]) * model.p[r];
    }
}

/// One conditional-density-filtering step: sample latent counts for the
/// minibatch under the current model, decay the conditional sufficient
/// statistics toward the reweighted minibatch statistics, then set the model
/// to the analytic conditional means.
template <typename Scalar>
void cdf_step(const SparseCountTensor& train,
              const std::vector<std::int64_t>& minibatch,
              ModelState<Scalar>& model, SufficientStats<Scalar>& css,
              std::int64_t t, const LearningRateSchedule& sched,
              const Hyperparams<Scalar>& hyper, std::uint64_t alloc_seed,
              int workers = 1) {
    const double gamma = learning_rate(t, sched);
    const SufficientStats<Scalar> batch =
        sample_allocation_stats(train, &minibatch, model, alloc_seed,
                                workers);
    const double scale = static_cast<double>(train.nnz()) /
                         static_cast<double>(minibatch.size());
    cdf_blend_stats(css, batch, gamma, scale);
    conditional_mean_model(css, hyper, model);
}

/// One stochastic mean-field step: expected latent counts for the minibatch
/// under the current variational parameters, then the decayed updates of the
/// Dirichlet, beta and gamma parameters with the minibatch statistics
/// reweighted by N/B. The gamma scale blends toward E[p_r] taken from this
/// step's updated beta parameters; set `lambda_scale_from_old_shape` to
/// blend it from the previous shape parameter instead.
template <typename Scalar>
void svi_step(const SparseCountTensor& train,
              const std::vector<std::int64_t>& minibatch,
              VariationalState<Scalar>& vstate, std::int64_t t,
              const LearningRateSchedule& sched,
              const Hyperparams<Scalar>& hyper, int workers = 1,
              bool lambda_scale_from_old_shape = false) {
    const double gamma = learning_rate(t, sched);
    const auto tables = MeanFieldTables<Scalar>::from_variational(vstate);
    const SufficientStats<Scalar> batch =
        expected_allocation_stats(train, &minibatch, tables, workers);
    const Scalar scale = static_cast<Scalar>(
        static_cast<double>(train.nnz()) /
        static_cast<double>(minibatch.size()));

    const Scalar keep = static_cast<Scalar>(1.0 - gamma);
    const Scalar mix = static_cast<Scalar>(gamma);
    const Scalar c = hyper.beta_concentration;
    const Scalar eps = hyper.beta_mean;
    const Scalar g = hyper.gamma_shape;

    const VectorX<Scalar> old_lambda_a = vstate.lambda_a;
    for (std::size_t k = 0; k < vstate.rho.size(); ++k) {
        vstate.rho[k] =
            keep * vstate.rho[k] +
            mix * (scale * batch.per_mode[k].array() + hyper.dirichlet_a[k])
                      .matrix();
    }
    vstate.p_a = keep * vstate.p_a +
                 mix * (scale * batch.total.array() + c * eps).matrix();
    vstate.p_b =
        (keep * vstate.p_b.array() + mix * (c * (Scalar(1) - eps) + g))
            .matrix();
    vstate.lambda_a = keep * vstate.lambda_a +
                      mix * (scale * batch.total.array() + g).matrix();

    const VectorX<Scalar> mean_p =
        (vstate.p_a.array() / (vstate.p_a.array() + vstate.p_b.array()))
            .matrix();
    if (lambda_scale_from_old_shape) {
        vstate.lambda_b = keep * old_lambda_a + mix * mean_p;
    } else {
        vstate.lambda_b = keep * vstate.lambda_b + mix * mean_p;
    }
}

enum class OnlineEngine { Cdf, Svi };

struct OnlineConfig {
    std::int64_t iters = 1;
    std::int64_t eval_every = 10;
    std::uint64_t seed = 0;
    int workers = 1;
    double rank_threshold = 0.01;

    void validate() const {
        if (iters < 1) {
            throw std::invalid_argument("online runs need iters >= 1");
        }
        if (eval_every < 1 || workers < 1) {
            throw std::invalid_argument("invalid online configuration");
        }
    }
};

template <typename Scalar = double>
struct OnlineFit {
    OnlineEngine engine = OnlineEngine::Cdf;
    ModelState<Scalar> model;        // point estimate (both engines)
    SufficientStats<Scalar> css;     // conditional stats (filtering engine)
    VariationalState<Scalar> vstate; // variational parameters (svi engine)
};

namespace detail {

/// Uniform-with-replacement or epoch-shuffled minibatch id stream.
class MinibatchSource {
  public:
    MinibatchSource(std::int64_t num_entries, const MinibatchPlan& plan)
        : n_(num_entries), plan_(plan), rng_(plan.seed) {
        plan.validate();
        if (n_ < 1) {
            throw std::invalid_argument("cannot draw minibatches from an "
                                        "empty tensor");
        }
        if (plan_.sampling == MinibatchSampling::EpochShuffled) {
            order_.resize(static_cast<std::size_t>(n_));
            std::iota(order_.begin(), order_.end(), 0);
            cursor_ = n_; // trigger reshuffle on first use
        }
    }

    std::vector<std::int64_t> next() {
        std::vector<std::int64_t> ids(
            static_cast<std::size_t>(plan_.batch_size));
        if (plan_.sampling == MinibatchSampling::UniformWithReplacement) {
            for (auto& id : ids) id = rng_.uniform_int(n_);
        } else {
            for (auto& id : ids) {
                if (cursor_ >= n_) {
                    shuffle(order_, rng_);
                    cursor_ = 0;
                }
                id = order_[static_cast<std::size_t>(cursor_++)];
            }
        }
        return ids;
    }

  private:
    std::int64_t n_;
    MinibatchPlan plan_;
    Rng rng_;
    std::vector<std::int64_t> order_;
    std::int64_t cursor_ = 0;
};

} // namespace detail

/// Runs a streaming engine for a fixed number of minibatch steps, tracing
/// heldout metrics every eval_every steps and at the final step.
template <typename Scalar = double>
std::pair<OnlineFit<Scalar>, FitTrace>
run_online(OnlineEngine engine, const SparseCountTensor& train,
           const SparseCountTensor& heldout, const MinibatchPlan& plan,
           const LearningRateSchedule& sched, const OnlineConfig& config,
           const Hyperparams<Scalar>& hyper) {
    config.validate();
    sched.validate();

    OnlineFit<Scalar> fit;
    fit.engine = engine;
    if (engine == OnlineEngine::Cdf) {
        fit.model = init_model(train.shape(), hyper, config.seed);
        fit.css =
            SufficientStats<Scalar>::zeros(train.shape(), hyper.rank_bound);
    } else {
        fit.vstate = init_variational(train.shape(), hyper, config.seed);
    }

    detail::MinibatchSource source(train.nnz(), plan);
    Rng step_rng(derive_seed(config.seed, 0x731d));
    FitTrace trace;
    const auto t_start = std::chrono::steady_clock::now();

    for (std::int64_t t = 1; t <= config.iters; ++t) {
        const std::vector<std::int64_t> ids = source.next();
        if (engine == OnlineEngine::Cdf) {
            cdf_step(train, ids, fit.model, fit.css, t, sched, hyper,
                     step_rng.next_u64(), config.workers);
        } else {
            svi_step(train, ids, fit.vstate, t, sched, hyper, config.workers);
        }
        if (t % config.eval_every == 0 || t == config.iters) {
            const ModelState<Scalar> current =
                engine == OnlineEngine::Cdf ? fit.model
                                            : point_estimate(fit.vstate);
            const std::chrono::duration<double> elapsed =
                std::chrono::steady_clock::now() - t_start;
            trace.rows.push_back(
                {t, elapsed.count(), heldout_loglik(heldout, current),
                 heldout_mae(heldout, current),
                 effective_rank(current.lambda, config.rank_threshold)});
        }
    }
    if (engine == OnlineEngine::Svi) {
        fit.model = point_estimate(fit.vstate);
    }
    return {std::move(fit), std::move(trace)};
}

} // namespace bnbcp
