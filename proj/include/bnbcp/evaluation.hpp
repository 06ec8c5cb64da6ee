#pragma once

#include "bnbcp/defs.hpp"
#include "bnbcp/model.hpp"
#include "bnbcp/sparse_tensor.hpp"
#include "bnbcp/special.hpp"

#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

namespace bnbcp {

/// Per-evaluation record emitted while an engine runs.
struct TraceRow {
    std::int64_t iteration = 0;
    double elapsed_seconds = 0.0;
    double heldout_loglik = 0.0;
    double heldout_mae = 0.0;
    int effective_rank = 0;
};

struct FitTrace {
    static constexpr const char* kCsvHeader =
        "iter,elapsed_sec,heldout_loglik,heldout_mae,effective_rank";

    std::vector<TraceRow> rows;

    void write_csv(std::ostream& out) const;
    void write_csv(const std::filesystem::path& path) const;
    static FitTrace read_csv(std::istream& in);
    static FitTrace read_csv(const std::filesystem::path& path);
};

/// Poisson rate the model assigns to one cell:
/// sum_r lambda_r * prod_k U^(k)(i_k, r).
template <typename Scalar>
Scalar reconstruct_rate(std::span<const index_t> index,
                        const ModelState<Scalar>& model) {
    VectorX<Scalar> prod = model.lambda;
    for (int k = 0; k < model.num_modes(); ++k) {
        prod.array() *= model.factors[static_cast<std::size_t>(k)]
                            .row(index[static_cast<std::size_t>(k)])
                            .transpose()
                            .array();
    }
    return prod.sum();
}

/// log PoissonPMF(y; rate) with the rate floored at 1e-12 before the log so
/// the value stays finite.
inline double poisson_log_pmf(count_t y, double rate) {
    if (rate < 1e-12) rate = 1e-12;
    return static_cast<double>(y) * std::log(rate) - rate -
           log_factorial(y);
}

/// Sum over heldout entries of log PoissonPMF(y; rate).
template <typename Scalar>
double heldout_loglik(const SparseCountTensor& heldout,
                      const ModelState<Scalar>& model) {
    double total = 0.0;
    for (std::int64_t i = 0; i < heldout.nnz(); ++i) {
        const EntryView e = heldout.entry(i);
        total += poisson_log_pmf(
            e.count,
            static_cast<double>(reconstruct_rate(e.index, model)));
    }
    return total;
}

/// Mean absolute difference between heldout counts and reconstructed rates.
template <typename Scalar>
double heldout_mae(const SparseCountTensor& heldout,
                   const ModelState<Scalar>& model) {
    if (heldout.nnz() == 0) {
        return 0.0;
    }
    double total = 0.0;
    for (std::int64_t i = 0; i < heldout.nnz(); ++i) {
        const EntryView e = heldout.entry(i);
        total += std::abs(static_cast<double>(e.count) -
                          static_cast<double>(
                              reconstruct_rate(e.index, model)));
    }
    return total / static_cast<double>(heldout.nnz());
}

/// Number of components whose weight survives a threshold relative to the
/// largest weight.
template <typename Scalar>
int effective_rank(const VectorX<Scalar>& lambda,
                   double rel_threshold = 0.01) {
    if (lambda.size() == 0) {
        throw std::invalid_argument("effective_rank: empty lambda");
    }
    const double max_lambda = static_cast<double>(lambda.maxCoeff());
    if (!(max_lambda > 0.0)) {
        throw std::invalid_argument(
            "effective_rank: all weights are non-positive");
    }
    int count = 0;
    for (int r = 0; r < lambda.size(); ++r) {
        if (static_cast<double>(lambda[r]) > rel_threshold * max_lambda) {
            ++count;
        }
    }
    return count;
}

} // namespace bnbcp
