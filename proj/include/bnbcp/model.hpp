#pragma once

#include "bnbcp/defs.hpp"
#include "bnbcp/rng.hpp"
#include "bnbcp/sparse_tensor.hpp"

#include <vector>

namespace bnbcp {

/// Prior hyperparameters. Gamma distributions are shape-scale throughout:
/// Gamma(g, theta) has mean g * theta. The component weight prior is
/// Gamma(gamma_shape, p_r / (1 - p_r)) and its conditional posterior is
/// Gamma(gamma_shape + s_r, p_r); this shape-scale reading is the one
/// consistent with negative-binomial conjugacy.
template <typename Scalar = double>
struct Hyperparams {
    int rank_bound = 0;                // R, upper bound on components
    std::vector<Scalar> dirichlet_a;   // per-mode factor concentration a^(k)
    Scalar gamma_shape = Scalar(1);    // g, shared across components
    Scalar beta_concentration = Scalar(1); // c
    Scalar beta_mean = Scalar(0.5);    // epsilon, prior mean of p_r

    /// a^(k) = 0.1 (sparse topics), g = 1, c = 1, epsilon = 1/R so unused
    /// components shrink.
    static Hyperparams defaults(int num_modes, int rank_bound) {
        Hyperparams h;
        h.rank_bound = rank_bound;
        h.dirichlet_a.assign(static_cast<std::size_t>(num_modes),
                             Scalar(0.1));
        h.gamma_shape = Scalar(1);
        h.beta_concentration = Scalar(1);
        h.beta_mean = Scalar(1) / static_cast<Scalar>(rank_bound);
        return h;
    }

    void validate(int num_modes) const {
        if (rank_bound < 1) {
            throw std::invalid_argument("rank bound must be >= 1");
        }
        if (static_cast<int>(dirichlet_a.size()) != num_modes) {
            throw std::invalid_argument(
                "need one Dirichlet concentration per mode");
        }
        for (Scalar a : dirichlet_a) {
            if (!(a > Scalar(0))) {
                throw std::invalid_argument(
                    "Dirichlet concentrations must be > 0");
            }
        }
        if (!(gamma_shape > Scalar(0)) || !(beta_concentration > Scalar(0))) {
            throw std::invalid_argument("g and c must be > 0");
        }
        if (!(beta_mean > Scalar(0) && beta_mean < Scalar(1))) {
            throw std::invalid_argument("epsilon must lie in (0,1)");
        }
    }
};

/// CP parameters: per-mode factor matrices with simplex columns, component
/// weights lambda, and component probabilities p.
template <typename Scalar = double>
struct ModelState {
    std::vector<MatrixX<Scalar>> factors; // K matrices, n_k x R
    VectorX<Scalar> lambda;               // R, > 0
    VectorX<Scalar> p;                    // R, in (0,1)

    int num_modes() const { return static_cast<int>(factors.size()); }
    int rank() const { return static_cast<int>(lambda.size()); }
};

/// Per-mode aggregates of latent counts: per_mode[k](j, r) sums latent
/// counts of component r over entries whose mode-k index is j; total(r) is
/// the grand sum. Integer-valued under Gibbs, real-valued under
/// expectation/decay updates.
template <typename Scalar = double>
struct SufficientStats {
    std::vector<MatrixX<Scalar>> per_mode; // K matrices, n_k x R
    VectorX<Scalar> total;                 // R

    static SufficientStats zeros(const TensorShape& shape, int rank) {
        SufficientStats s;
        s.per_mode.reserve(shape.dims.size());
        for (index_t n_k : shape.dims) {
            s.per_mode.push_back(MatrixX<Scalar>::Zero(n_k, rank));
        }
        s.total = VectorX<Scalar>::Zero(rank);
        return s;
    }

    void add(const SufficientStats& other) {
        for (std::size_t k = 0; k < per_mode.size(); ++k) {
            per_mode[k] += other.per_mode[k];
        }
        total += other.total;
    }
};

/// Mean-field posterior parameters: Dirichlet rho per mode, beta (p_a, p_b)
/// and gamma (lambda_a shape, lambda_b scale) per component.
template <typename Scalar = double>
struct VariationalState {
    std::vector<MatrixX<Scalar>> rho; // K matrices, n_k x R, > 0
    VectorX<Scalar> p_a, p_b;         // R, > 0
    VectorX<Scalar> lambda_a, lambda_b; // R, > 0

    int num_modes() const { return static_cast<int>(rho.size()); }
    int rank() const { return static_cast<int>(p_a.size()); }
};

/// Throws unless every factor column is on the simplex (sum 1 within tol,
/// entries >= 0), lambda > 0 and p in (0,1).
template <typename Scalar>
void check_model_state(const ModelState<Scalar>& model,
                       double tol = 1e-9) {
    for (int k = 0; k < model.num_modes(); ++k) {
        const auto& u = model.factors[static_cast<std::size_t>(k)];
        if (!u.allFinite() || (u.array() < Scalar(0)).any()) {
            throw NumericError("factor matrix for mode " + std::to_string(k) +
                               " has negative or non-finite entries");
        }
        for (int r = 0; r < u.cols(); ++r) {
            const double s = static_cast<double>(u.col(r).sum());
            if (std::abs(s - 1.0) > tol) {
                throw NumericError("factor column " + std::to_string(r) +
                                   " of mode " + std::to_string(k) +
                                   " sums to " + std::to_string(s));
            }
        }
    }
    if (!model.lambda.allFinite() ||
        (model.lambda.array() <= Scalar(0)).any()) {
        throw NumericError("lambda must be finite and > 0");
    }
    if (!model.p.allFinite() || (model.p.array() <= Scalar(0)).any() ||
        (model.p.array() >= Scalar(1)).any()) {
        throw NumericError("p must lie in (0,1)");
    }
}

/// Throws unless every variational parameter is finite and > 0.
template <typename Scalar>
void check_variational_state(const VariationalState<Scalar>& v) {
    for (std::size_t k = 0; k < v.rho.size(); ++k) {
        if (!v.rho[k].allFinite() || (v.rho[k].array() <= Scalar(0)).any()) {
            throw NumericError("rho for mode " + std::to_string(k) +
                               " must be > 0");
        }
    }
    auto positive = [](const VectorX<Scalar>& x) {
        return x.allFinite() && (x.array() > Scalar(0)).all();
    };
    if (!positive(v.p_a) || !positive(v.p_b) || !positive(v.lambda_a) ||
        !positive(v.lambda_b)) {
        throw NumericError("variational beta/gamma parameters must be > 0");
    }
}

/// Throws unless per-mode column sums match the totals within tol.
template <typename Scalar>
void check_stats_consistency(const SufficientStats<Scalar>& stats,
                             double tol = 1e-6) {
    for (std::size_t k = 0; k < stats.per_mode.size(); ++k) {
        for (int r = 0; r < stats.total.size(); ++r) {
            const double col = static_cast<double>(
                stats.per_mode[k].col(r).sum());
            const double ref = static_cast<double>(stats.total[r]);
            if (std::abs(col - ref) >
                tol * std::max(1.0, std::abs(ref))) {
                throw NumericError(
                    "sufficient statistics inconsistent: mode " +
                    std::to_string(k) + " component " + std::to_string(r) +
                    " sums to " + std::to_string(col) + ", total is " +
                    std::to_string(ref));
            }
        }
    }
}

/// Draws a model from the priors: factor columns Dir(a^(k)), p_r from
/// Beta(c*eps, c*(1-eps)), lambda_r from Gamma(g, p_r/(1-p_r)).
template <typename Scalar = double>
ModelState<Scalar> init_model(const TensorShape& shape,
                              const Hyperparams<Scalar>& hyper,
                              std::uint64_t seed) {
    shape.validate();
    hyper.validate(shape.num_modes());
    Rng rng(seed);
    const int rank = hyper.rank_bound;

    ModelState<Scalar> model;
    model.factors.reserve(shape.dims.size());
    for (int k = 0; k < shape.num_modes(); ++k) {
        const index_t n_k = shape.dims[static_cast<std::size_t>(k)];
        MatrixX<Scalar> u(n_k, rank);
        for (int r = 0; r < rank; ++r) {
            dirichlet_symmetric<Scalar>(
                rng,
                static_cast<double>(
                    hyper.dirichlet_a[static_cast<std::size_t>(k)]),
                n_k, u.col(r));
        }
        model.factors.push_back(std::move(u));
    }
    model.p.resize(rank);
    model.lambda.resize(rank);
    const double c = static_cast<double>(hyper.beta_concentration);
    const double eps = static_cast<double>(hyper.beta_mean);
    for (int r = 0; r < rank; ++r) {
        const double p_r = rng.beta(c * eps, c * (1.0 - eps));
        double lam = rng.gamma(static_cast<double>(hyper.gamma_shape),
                               p_r / (1.0 - p_r));
        if (lam < 1e-300) lam = 1e-300;
        model.p[r] = static_cast<Scalar>(p_r);
        model.lambda[r] = static_cast<Scalar>(lam);
    }
    return model;
}

/// Initializes the variational parameters at the prior values, each
/// multiplied by uniform noise in [0.9, 1.1] to break mean-field symmetry.
template <typename Scalar = double>
VariationalState<Scalar> init_variational(const TensorShape& shape,
                                          const Hyperparams<Scalar>& hyper,
                                          std::uint64_t seed) {
    shape.validate();
    hyper.validate(shape.num_modes());
    Rng rng(seed);
    const int rank = hyper.rank_bound;
    auto jitter = [&rng]() { return 0.9 + 0.2 * rng.uniform01(); };

    VariationalState<Scalar> v;
    v.rho.reserve(shape.dims.size());
    for (int k = 0; k < shape.num_modes(); ++k) {
        const index_t n_k = shape.dims[static_cast<std::size_t>(k)];
        MatrixX<Scalar> rho(n_k, rank);
        const double a =
            static_cast<double>(hyper.dirichlet_a[static_cast<std::size_t>(k)]);
        for (int r = 0; r < rank; ++r) {
            for (index_t j = 0; j < n_k; ++j) {
                rho(j, r) = static_cast<Scalar>(a * jitter());
            }
        }
        v.rho.push_back(std::move(rho));
    }
    const double c = static_cast<double>(hyper.beta_concentration);
    const double eps = static_cast<double>(hyper.beta_mean);
    const double g = static_cast<double>(hyper.gamma_shape);
    v.p_a.resize(rank);
    v.p_b.resize(rank);
    v.lambda_a.resize(rank);
    v.lambda_b.resize(rank);
    for (int r = 0; r < rank; ++r) {
        v.p_a[r] = static_cast<Scalar>(c * eps * jitter());
        v.p_b[r] = static_cast<Scalar>(c * (1.0 - eps) * jitter());
        v.lambda_a[r] = static_cast<Scalar>(g * jitter());
        v.lambda_b[r] = static_cast<Scalar>(
            static_cast<double>(v.p_a[r]) /
            (static_cast<double>(v.p_a[r]) + static_cast<double>(v.p_b[r])));
    }
    return v;
}

/// Point estimate under the mean-field posterior: factor means (rho columns
/// normalized), E[lambda] = lambda_a * lambda_b, E[p] = p_a / (p_a + p_b).
template <typename Scalar>
ModelState<Scalar> point_estimate(const VariationalState<Scalar>& v) {
    ModelState<Scalar> m;
    m.factors.reserve(v.rho.size());
    for (const auto& rho : v.rho) {
        MatrixX<Scalar> u = rho;
        for (int r = 0; r < u.cols(); ++r) {
            u.col(r) /= u.col(r).sum();
        }
        m.factors.push_back(std::move(u));
    }
    m.lambda = (v.lambda_a.array() * v.lambda_b.array()).matrix();
    m.p = (v.p_a.array() / (v.p_a.array() + v.p_b.array())).matrix();
    return m;
}

} // namespace bnbcp
