#pragma once

#include "bnbcp/defs.hpp"
#include "bnbcp/model.hpp"
#include "bnbcp/rng.hpp"
#include "bnbcp/sparse_tensor.hpp"
#include "bnbcp/special.hpp"

#include <algorithm>
#include <span>
#include <thread>
#include <utility>
#include <vector>

namespace bnbcp {

/// Writes the per-component allocation probabilities for one entry under the
/// current point parameters: zeta_r proportional to lambda_r * prod_k
/// U^(k)(i_k, r). If every unnormalized rate underflows to zero the uniform
/// vector is returned so the sampler stays defined.
template <typename Scalar>
void allocation_probs_point_into(EntryView e, const ModelState<Scalar>& model,
                                 VectorX<Scalar>& zeta) {
    const int rank = model.rank();
    zeta = model.lambda;
    for (int k = 0; k < model.num_modes(); ++k) {
        zeta.array() *= model.factors[static_cast<std::size_t>(k)]
                            .row(e.index[static_cast<std::size_t>(k)])
                            .transpose()
                            .array();
    }
    const Scalar sum = zeta.sum();
    if (!std::isfinite(static_cast<double>(sum))) {
        throw NumericError("allocation rates are not finite");
    }
    if (sum <= Scalar(0)) {
        zeta.setConstant(Scalar(1) / static_cast<Scalar>(rank));
    } else {
        zeta /= sum;
    }
}

template <typename Scalar>
VectorX<Scalar> allocation_probs_point(EntryView e,
                                       const ModelState<Scalar>& model) {
    VectorX<Scalar> zeta;
    allocation_probs_point_into(e, model, zeta);
    return zeta;
}

/// Precomputed digamma tables for the mean-field allocation rule. The rule
/// needs, per mode, the Dirichlet-parameter table (s^(k) + a^(k) in batch
/// form; the rho parameters directly in stochastic form) together with its
/// elementwise digamma, and a per-component log-weight
/// Psi(s_r + g) + ln E[p_r].
template <typename Scalar>
struct MeanFieldTables {
    std::vector<MatrixX<Scalar>> dirichlet_param; // K matrices, n_k x R
    std::vector<MatrixX<Scalar>> digamma_param;   // elementwise digamma
    VectorX<Scalar> log_weight;                   // R

    int rank() const { return static_cast<int>(log_weight.size()); }

    static MeanFieldTables from_stats(const SufficientStats<Scalar>& stats,
                                      const Hyperparams<Scalar>& hyper,
                                      const VectorX<Scalar>& mean_p) {
        MeanFieldTables t;
        t.dirichlet_param.reserve(stats.per_mode.size());
        t.digamma_param.reserve(stats.per_mode.size());
        for (std::size_t k = 0; k < stats.per_mode.size(); ++k) {
            MatrixX<Scalar> param =
                stats.per_mode[k].array() + hyper.dirichlet_a[k];
            t.digamma_param.push_back(digamma_of(param));
            t.dirichlet_param.push_back(std::move(param));
        }
        t.log_weight.resize(stats.total.size());
        for (int r = 0; r < stats.total.size(); ++r) {
            t.log_weight[r] = static_cast<Scalar>(
                digamma(static_cast<double>(stats.total[r]) +
                        static_cast<double>(hyper.gamma_shape)) +
                std::log(static_cast<double>(mean_p[r])));
        }
        return t;
    }

    static MeanFieldTables
    from_variational(const VariationalState<Scalar>& v) {
        MeanFieldTables t;
        t.dirichlet_param = v.rho;
        t.digamma_param.reserve(v.rho.size());
        for (const auto& rho : v.rho) {
            t.digamma_param.push_back(digamma_of(rho));
        }
        t.log_weight.resize(v.rank());
        for (int r = 0; r < v.rank(); ++r) {
            const double mean_p = static_cast<double>(v.p_a[r]) /
                                  (static_cast<double>(v.p_a[r]) +
                                   static_cast<double>(v.p_b[r]));
            t.log_weight[r] = static_cast<Scalar>(
                digamma(static_cast<double>(v.lambda_a[r])) +
                std::log(mean_p));
        }
        return t;
    }

  private:
    static MatrixX<Scalar> digamma_of(const MatrixX<Scalar>& m) {
        MatrixX<Scalar> out(m.rows(), m.cols());
        for (int c = 0; c < m.cols(); ++c) {
            for (int r = 0; r < m.rows(); ++r) {
                out(r, c) = static_cast<Scalar>(
                    digamma(static_cast<double>(m(r, c))));
            }
        }
        return out;
    }
};

/// Mean-field allocation probabilities for one entry:
///   log zeta~_r = Psi(s_r + g) + ln E[p_r]
///                 + sum_k Psi(s^(k)_{i_k,r} + a^(k))
///                 - Psi(sum_k (s^(k)_{i_k,r} + a^(k)))
/// evaluated in log space with max-subtraction before exponentiation.
template <typename Scalar>
void allocation_probs_meanfield_into(EntryView e,
                                     const MeanFieldTables<Scalar>& tables,
                                     VectorX<Scalar>& zeta) {
    const int rank = tables.rank();
    zeta.resize(rank);
    for (int r = 0; r < rank; ++r) {
        double log_rate = static_cast<double>(tables.log_weight[r]);
        double param_sum = 0.0;
        for (std::size_t k = 0; k < tables.dirichlet_param.size(); ++k) {
            const index_t j = e.index[k];
            log_rate += static_cast<double>(tables.digamma_param[k](j, r));
            param_sum += static_cast<double>(tables.dirichlet_param[k](j, r));
        }
        log_rate -= digamma(param_sum);
        zeta[r] = static_cast<Scalar>(log_rate);
    }
    const Scalar max_log = zeta.maxCoeff();
    if (!std::isfinite(static_cast<double>(max_log))) {
        throw NumericError("mean-field allocation log-rates are not finite");
    }
    zeta = (zeta.array() - max_log).exp();
    zeta /= zeta.sum();
}

/// Spec form of the mean-field rule: digamma terms from the sufficient
/// statistics, ln(p_r) read as ln E[p_r] from the variational beta
/// parameters.
template <typename Scalar>
VectorX<Scalar> allocation_probs_vb(EntryView e,
                                    const VariationalState<Scalar>& vstate,
                                    const SufficientStats<Scalar>& stats,
                                    const Hyperparams<Scalar>& hyper) {
    const VectorX<Scalar> mean_p =
        (vstate.p_a.array() / (vstate.p_a.array() + vstate.p_b.array()))
            .matrix();
    const auto tables =
        MeanFieldTables<Scalar>::from_stats(stats, hyper, mean_p);
    VectorX<Scalar> zeta;
    allocation_probs_meanfield_into(e, tables, zeta);
    return zeta;
}

/// Multinomial split of a count over components by the sequential
/// conditional-binomial method. Components sum to y exactly; y = 0 returns
/// zeros without consuming randomness.
template <typename Scalar>
void sample_latent_counts_into(count_t y, const VectorX<Scalar>& probs,
                               Rng& rng, VectorX<Scalar>& out) {
    const int rank = static_cast<int>(probs.size());
    out.setZero(rank);
    if (y == 0) {
        return;
    }
    count_t remaining = y;
    double rest = 1.0;
    for (int r = 0; r + 1 < rank && remaining > 0; ++r) {
        const double pr_raw = static_cast<double>(probs[r]);
        double p_cond = rest > 0.0 ? pr_raw / rest : 1.0;
        if (p_cond > 1.0) p_cond = 1.0;
        if (p_cond < 0.0) p_cond = 0.0;
        const count_t x = rng.binomial(remaining, p_cond);
        out[r] = static_cast<Scalar>(x);
        remaining -= x;
        rest -= pr_raw;
    }
    out[rank - 1] += static_cast<Scalar>(remaining);
}

template <typename Scalar>
VectorX<Scalar> sample_latent_counts(count_t y, const VectorX<Scalar>& probs,
                                     Rng& rng) {
    VectorX<Scalar> out;
    sample_latent_counts_into(y, probs, rng, out);
    return out;
}

/// Mean-field expectation of the latent counts: y * zeta componentwise.
template <typename Scalar>
VectorX<Scalar> expected_latent_counts(count_t y,
                                       const VectorX<Scalar>& probs) {
    return probs * static_cast<Scalar>(y);
}

namespace detail {

template <typename Scalar>
void add_to_stats(SufficientStats<Scalar>& stats, EntryView e,
                  const VectorX<Scalar>& latent) {
    for (std::size_t k = 0; k < stats.per_mode.size(); ++k) {
        stats.per_mode[k].row(e.index[k]) += latent.transpose();
    }
    stats.total += latent;
}

/// Runs fn(worker, lo, hi) over a partition of [0, n) on `workers` threads.
template <typename Fn>
void parallel_ranges(std::int64_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n < 2) {
        fn(0, 0, n);
        return;
    }
    const int w = static_cast<int>(
        std::min<std::int64_t>(workers, std::max<std::int64_t>(n, 1)));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(w));
    const std::int64_t chunk = (n + w - 1) / w;
    for (int i = 0; i < w; ++i) {
        const std::int64_t lo = i * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        threads.emplace_back([i, lo, hi, &fn]() { fn(i, lo, hi); });
    }
    for (auto& t : threads) t.join();
}

} // namespace detail

/// Aggregates per-entry latent counts into sufficient statistics
/// (s^(k)_{j,r} and s_r).
template <typename Scalar>
SufficientStats<Scalar> accumulate_stats(
    const TensorShape& shape, int rank,
    std::span<const std::pair<Entry, VectorX<Scalar>>> items) {
    auto stats = SufficientStats<Scalar>::zeros(shape, rank);
    for (const auto& [entry, latent] : items) {
        detail::add_to_stats(
            stats,
            EntryView{std::span<const index_t>(entry.index), entry.count},
            latent);
    }
    return stats;
}

/// One sampled-allocation pass (the Gibbs/CDF hot loop): for each selected
/// entry draw latent counts from Mult(y; zeta) under the point parameters
/// and accumulate statistics streamwise. `ids` selects a subset of entries;
/// pass nullptr for all. Per-worker generators are derived from `seed`, so
/// one worker is bit-reproducible.
template <typename Scalar>
SufficientStats<Scalar>
sample_allocation_stats(const SparseCountTensor& data,
                        const std::vector<std::int64_t>* ids,
                        const ModelState<Scalar>& model, std::uint64_t seed,
                        int workers = 1) {
    const std::int64_t n =
        ids ? static_cast<std::int64_t>(ids->size()) : data.nnz();
    const int rank = model.rank();
    std::vector<SufficientStats<Scalar>> partial(
        static_cast<std::size_t>(std::max(workers, 1)),
        SufficientStats<Scalar>::zeros(data.shape(), rank));

    detail::parallel_ranges(n, workers, [&](int w, std::int64_t lo,
                                            std::int64_t hi) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(w)));
        VectorX<Scalar> zeta(rank), latent(rank);
        auto& stats = partial[static_cast<std::size_t>(w)];
        for (std::int64_t i = lo; i < hi; ++i) {
            const EntryView e =
                data.entry(ids ? (*ids)[static_cast<std::size_t>(i)] : i);
            allocation_probs_point_into(e, model, zeta);
            sample_latent_counts_into(e.count, zeta, rng, latent);
            detail::add_to_stats(stats, e, latent);
        }
    });

    for (std::size_t w = 1; w < partial.size(); ++w) {
        partial[0].add(partial[w]);
    }
    return std::move(partial[0]);
}

/// One expectation-allocation pass (the VB/SVI hot loop): accumulates
/// y * zeta under the mean-field rule. Deterministic; worker partials are
/// merged in worker order.
template <typename Scalar>
SufficientStats<Scalar>
expected_allocation_stats(const SparseCountTensor& data,
                          const std::vector<std::int64_t>* ids,
                          const MeanFieldTables<Scalar>& tables,
                          int workers = 1) {
    const std::int64_t n =
        ids ? static_cast<std::int64_t>(ids->size()) : data.nnz();
    const int rank = tables.rank();
    std::vector<SufficientStats<Scalar>> partial(
        static_cast<std::size_t>(std::max(workers, 1)),
        SufficientStats<Scalar>::zeros(data.shape(), rank));

    detail::parallel_ranges(n, workers, [&](int w, std::int64_t lo,
                                            std::int64_t hi) {
        VectorX<Scalar> zeta(rank);
        auto& stats = partial[static_cast<std::size_t>(w)];
        for (std::int64_t i = lo; i < hi; ++i) {
            const EntryView e =
                data.entry(ids ? (*ids)[static_cast<std::size_t>(i)] : i);
            allocation_probs_meanfield_into(e, tables, zeta);
            zeta *= static_cast<Scalar>(e.count);
            detail::add_to_stats(stats, e, zeta);
        }
    });

    for (std::size_t w = 1; w < partial.size(); ++w) {
        partial[0].add(partial[w]);
    }
    return std::move(partial[0]);
}

} // namespace bnbcp
