#pragma once

#include "bnbcp/defs.hpp"
#include "bnbcp/model.hpp"
#include "bnbcp/rng.hpp"
#include "bnbcp/sparse_tensor.hpp"

#include <vector>

namespace bnbcp {

template <typename Scalar = double>
struct SyntheticData {
    SparseCountTensor tensor;
    ModelState<Scalar> ground_truth;
};

struct GenerateOptions {
    /// Dense enumeration above this many cells requires blockwise = true.
    std::int64_t dense_cell_cap = 2'000'000;
    bool blockwise = false;
};

/// Draws a ground-truth model (factor columns from Dir(a^(k)), the first
/// `significant` weights set to lambda_scale and the rest suppressed by
/// 1e-6) and samples every cell from Pois(sum_r lambda_r prod_k u). Cells
/// are enumerated one mode-0 slab at a time with a per-slab derived seed, so
/// memory stays bounded by the nonzeros and slabs could be generated
/// independently.
template <typename Scalar = double>
SyntheticData<Scalar> generate(const TensorShape& shape, int rank_bound,
                               int significant, double lambda_scale,
                               const Hyperparams<Scalar>& hyper,
                               std::uint64_t seed,
                               const GenerateOptions& opts = {}) {
    shape.validate();
    if (significant < 0 || significant > rank_bound) {
        throw std::invalid_argument(
            "significant component count must lie in [0, rank_bound]");
    }
    if (!(lambda_scale >= 0.0)) {
        throw std::invalid_argument("lambda_scale must be >= 0");
    }
    if (shape.volume() > opts.dense_cell_cap && !opts.blockwise) {
        throw SizeError("tensor volume " + std::to_string(shape.volume()) +
                        " exceeds the dense cell cap " +
                        std::to_string(opts.dense_cell_cap) +
                        "; enable blockwise generation");
    }

    const int k_modes = shape.num_modes();
    SyntheticData<Scalar> out{SparseCountTensor(shape), {}};
    ModelState<Scalar>& truth = out.ground_truth;

    Rng truth_rng(derive_seed(seed, 0));
    truth.factors.reserve(static_cast<std::size_t>(k_modes));
    for (int k = 0; k < k_modes; ++k) {
        const index_t n_k = shape.dims[static_cast<std::size_t>(k)];
        MatrixX<Scalar> u(n_k, rank_bound);
        for (int r = 0; r < rank_bound; ++r) {
            dirichlet_symmetric<Scalar>(
                truth_rng,
                static_cast<double>(
                    hyper.dirichlet_a[static_cast<std::size_t>(k)]),
                n_k, u.col(r));
        }
        truth.factors.push_back(std::move(u));
    }
    truth.lambda.resize(rank_bound);
    for (int r = 0; r < rank_bound; ++r) {
        const double lam =
            r < significant ? lambda_scale : lambda_scale * 1e-6;
        truth.lambda[r] = static_cast<Scalar>(std::max(lam, 1e-300));
    }
    truth.p = VectorX<Scalar>::Constant(rank_bound, Scalar(0.5));

    // Slab-wise enumeration: fix i_0, carry partial per-component products
    // through modes 1..K-2, close with a matrix-vector product over the last
    // mode.
    std::vector<Entry> entries;
    std::vector<index_t> index(static_cast<std::size_t>(k_modes), 0);
    VectorX<Scalar> rates;

    for (index_t i0 = 0; i0 < shape.dims[0]; ++i0) {
        Rng cell_rng(derive_seed(seed, 1 + static_cast<std::uint64_t>(i0)));
        index[0] = i0;
        VectorX<Scalar> partial =
            (truth.lambda.array() *
             truth.factors[0].row(i0).transpose().array())
                .matrix();

        auto recurse = [&](auto&& self, int depth,
                           const VectorX<Scalar>& prod) -> void {
            if (depth == k_modes - 1) {
                rates.noalias() =
                    truth.factors[static_cast<std::size_t>(depth)] * prod;
                const index_t n_last =
                    shape.dims[static_cast<std::size_t>(depth)];
                for (index_t j = 0; j < n_last; ++j) {
                    const count_t y =
                        cell_rng.poisson(static_cast<double>(rates[j]));
                    if (y > 0) {
                        index[static_cast<std::size_t>(depth)] = j;
                        entries.push_back(Entry{index, y});
                    }
                }
                return;
            }
            const index_t n_k = shape.dims[static_cast<std::size_t>(depth)];
            for (index_t j = 0; j < n_k; ++j) {
                index[static_cast<std::size_t>(depth)] = j;
                const VectorX<Scalar> next =
                    (prod.array() *
                     truth.factors[static_cast<std::size_t>(depth)]
                         .row(j)
                         .transpose()
                         .array())
                        .matrix();
                self(self, depth + 1, next);
            }
        };
        recurse(recurse, 1, partial);
    }

    out.tensor = SparseCountTensor::from_entries(shape, entries);
    return out;
}

} // namespace bnbcp
