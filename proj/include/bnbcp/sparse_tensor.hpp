#pragma once

#include "bnbcp/defs.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace bnbcp {

/// Mode count and per-mode sizes of a K-way tensor.
struct TensorShape {
    std::vector<index_t> dims;

    int num_modes() const { return static_cast<int>(dims.size()); }

    std::int64_t volume() const {
        std::int64_t v = 1;
        for (index_t d : dims) v *= d;
        return v;
    }

    void validate() const;

    bool operator==(const TensorShape&) const = default;
};

/// One stored nonzero cell: K zero-based indices and its count.
struct Entry {
    std::vector<index_t> index;
    count_t count = 0;
};

/// Non-owning view of a stored entry.
struct EntryView {
    std::span<const index_t> index;
    count_t count = 0;
};

enum class DuplicatePolicy { Error, Sum };

/// Coordinate-format store of nonzero count entries. Immutable once built;
/// safe to read from many threads.
class SparseCountTensor {
  public:
    explicit SparseCountTensor(TensorShape shape);

    /// Validates bounds, counts >= 1, and coordinate uniqueness. Under
    /// DuplicatePolicy::Sum duplicate coordinates are merged into the first
    /// occurrence instead of rejected.
    static SparseCountTensor
    from_entries(TensorShape shape, const std::vector<Entry>& entries,
                 DuplicatePolicy policy = DuplicatePolicy::Error);

    const TensorShape& shape() const { return shape_; }
    std::int64_t nnz() const {
        return static_cast<std::int64_t>(counts_.size());
    }

    EntryView entry(std::int64_t i) const {
        const int k = shape_.num_modes();
        return {std::span<const index_t>(
                    indices_.data() + static_cast<std::size_t>(i) * k,
                    static_cast<std::size_t>(k)),
                counts_[static_cast<std::size_t>(i)]};
    }

    count_t total_count() const;

  private:
    TensorShape shape_;
    std::vector<index_t> indices_; // nnz * K, row-packed
    std::vector<count_t> counts_;
};

/// Reads the text format: first non-comment line `dims: n_1 ... n_K`, then
/// one entry per line (K indices and a count). Lines starting with `#` are
/// comments. Throws FormatError / ParseError / ValidationError.
SparseCountTensor load_tensor(const std::filesystem::path& path,
                              DuplicatePolicy policy = DuplicatePolicy::Error);

/// Writes the same format back; save-then-load reproduces the entry multiset
/// bit-exactly.
void save_tensor(const SparseCountTensor& tensor,
                 const std::filesystem::path& path);

/// Partitions the stored entries uniformly at random: round(fraction * nnz)
/// entries go to the heldout side, the rest to train. Deterministic in seed.
std::pair<SparseCountTensor, SparseCountTensor>
split_heldout(const SparseCountTensor& tensor, double fraction,
              std::uint64_t seed);

} // namespace bnbcp
