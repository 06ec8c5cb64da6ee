#include "bnbcp/sparse_tensor.hpp"

#include "bnbcp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace bnbcp {

void TensorShape::validate() const {
    if (dims.size() < 2) {
        throw ValidationError("tensor must have at least 2 modes, got " +
                              std::to_string(dims.size()));
    }
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (dims[k] < 1) {
            throw ValidationError("mode " + std::to_string(k) +
                                  " has non-positive size " +
                                  std::to_string(dims[k]));
        }
    }
}

SparseCountTensor::SparseCountTensor(TensorShape shape)
    : shape_(std::move(shape)) {
    shape_.validate();
}

namespace {

std::string index_to_string(std::span<const index_t> idx) {
    std::string s = "(";
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (k > 0) s += ",";
        s += std::to_string(idx[k]);
    }
    return s + ")";
}

} // namespace

SparseCountTensor
SparseCountTensor::from_entries(TensorShape shape,
                                const std::vector<Entry>& entries,
                                DuplicatePolicy policy) {
    SparseCountTensor t(std::move(shape));
    const int k_modes = t.shape_.num_modes();
    t.indices_.reserve(entries.size() * static_cast<std::size_t>(k_modes));
    t.counts_.reserve(entries.size());

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Entry& e = entries[i];
        if (static_cast<int>(e.index.size()) != k_modes) {
            throw ValidationError("entry " + std::to_string(i) + " has " +
                                  std::to_string(e.index.size()) +
                                  " indices, expected " +
                                  std::to_string(k_modes));
        }
        for (int k = 0; k < k_modes; ++k) {
            if (e.index[static_cast<std::size_t>(k)] < 0 ||
                e.index[static_cast<std::size_t>(k)] >=
                    t.shape_.dims[static_cast<std::size_t>(k)]) {
                throw ValidationError(
                    "index " + index_to_string(e.index) +
                    " out of bounds for mode " + std::to_string(k) +
                    " (size " +
                    std::to_string(
                        t.shape_.dims[static_cast<std::size_t>(k)]) +
                    ")");
            }
        }
        if (e.count < 1) {
            throw ValidationError("entry " + index_to_string(e.index) +
                                  " has count " + std::to_string(e.count) +
                                  "; stored counts must be >= 1");
        }
        t.indices_.insert(t.indices_.end(), e.index.begin(), e.index.end());
        t.counts_.push_back(e.count);
    }

    // Duplicate detection via a sorted permutation of entry ids; storage
    // keeps first-occurrence order.
    const std::int64_t n = t.nnz();
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::int64_t i) {
        return std::span<const index_t>(
            t.indices_.data() + static_cast<std::size_t>(i) * k_modes,
            static_cast<std::size_t>(k_modes));
    };
    std::sort(order.begin(), order.end(),
              [&](std::int64_t a, std::int64_t b) {
                  const auto ka = key(a);
                  const auto kb = key(b);
                  return std::lexicographical_compare(ka.begin(), ka.end(),
                                                      kb.begin(), kb.end());
              });
    std::vector<bool> drop(static_cast<std::size_t>(n), false);
    for (std::int64_t s = 1; s < n; ++s) {
        const auto prev = key(order[static_cast<std::size_t>(s - 1)]);
        const auto cur = key(order[static_cast<std::size_t>(s)]);
        if (std::equal(prev.begin(), prev.end(), cur.begin(), cur.end())) {
            if (policy == DuplicatePolicy::Error) {
                throw ValidationError("duplicate index " +
                                      index_to_string(cur));
            }
            // Sum into the earlier occurrence, drop the later one.
            std::int64_t a = order[static_cast<std::size_t>(s - 1)];
            std::int64_t b = order[static_cast<std::size_t>(s)];
            if (a > b) std::swap(a, b);
            t.counts_[static_cast<std::size_t>(a)] +=
                t.counts_[static_cast<std::size_t>(b)];
            drop[static_cast<std::size_t>(b)] = true;
            order[static_cast<std::size_t>(s)] = a; // chain further dups
        }
    }
    if (std::find(drop.begin(), drop.end(), true) != drop.end()) {
        std::vector<index_t> kept_idx;
        std::vector<count_t> kept_cnt;
        for (std::int64_t i = 0; i < n; ++i) {
            if (drop[static_cast<std::size_t>(i)]) continue;
            const auto ki = key(i);
            kept_idx.insert(kept_idx.end(), ki.begin(), ki.end());
            kept_cnt.push_back(t.counts_[static_cast<std::size_t>(i)]);
        }
        t.indices_ = std::move(kept_idx);
        t.counts_ = std::move(kept_cnt);
    }
    return t;
}

count_t SparseCountTensor::total_count() const {
    return std::accumulate(counts_.begin(), counts_.end(), count_t{0});
}

namespace {

bool is_comment_or_blank(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true; // blank
}

std::int64_t parse_integer_token(const std::string& tok, int line_no,
                                 const char* what) {
    std::size_t pos = 0;
    std::int64_t v = 0;
    try {
        v = std::stoll(tok, &pos);
    } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": non-integer " + what + " '" + tok + "'");
    }
    if (pos != tok.size()) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": non-integer " + what + " '" + tok + "'");
    }
    return v;
}

} // namespace

SparseCountTensor load_tensor(const std::filesystem::path& path,
                              DuplicatePolicy policy) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open tensor file: " + path.string());
    }

    std::string line;
    int line_no = 0;
    TensorShape shape;
    bool have_dims = false;
    std::vector<Entry> entries;

    while (std::getline(in, line)) {
        ++line_no;
        if (is_comment_or_blank(line)) continue;

        std::istringstream ss(line);
        if (!have_dims) {
            std::string head;
            ss >> head;
            if (head != "dims:") {
                throw FormatError("line " + std::to_string(line_no) +
                                  ": expected 'dims:' header before entries");
            }
            std::string tok;
            while (ss >> tok) {
                shape.dims.push_back(static_cast<index_t>(
                    parse_integer_token(tok, line_no, "dimension")));
            }
            shape.validate();
            have_dims = true;
            continue;
        }

        std::vector<std::string> toks;
        std::string tok;
        while (ss >> tok) toks.push_back(tok);
        const std::size_t k_modes =
            static_cast<std::size_t>(shape.num_modes());
        if (toks.size() != k_modes + 1) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(k_modes + 1) + " tokens, got " +
                             std::to_string(toks.size()));
        }
        Entry e;
        e.index.resize(k_modes);
        for (std::size_t k = 0; k < k_modes; ++k) {
            const std::int64_t v =
                parse_integer_token(toks[k], line_no, "index");
            if (v < 0 || v >= shape.dims[k]) {
                throw ValidationError(
                    "line " + std::to_string(line_no) + ": index " +
                    std::to_string(v) + " out of bounds for mode " +
                    std::to_string(k) + " (size " +
                    std::to_string(shape.dims[k]) + ")");
            }
            e.index[k] = static_cast<index_t>(v);
        }
        e.count = parse_integer_token(toks[k_modes], line_no, "count");
        if (e.count < 1) {
            throw ValidationError("line " + std::to_string(line_no) +
                                  ": count must be >= 1, got " +
                                  std::to_string(e.count));
        }
        entries.push_back(std::move(e));
    }
    if (!have_dims) {
        throw FormatError("missing 'dims:' header in " + path.string());
    }
    return SparseCountTensor::from_entries(std::move(shape), entries, policy);
}

void save_tensor(const SparseCountTensor& tensor,
                 const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw FormatError("cannot open file for writing: " + path.string());
    }
    out << "dims:";
    for (index_t d : tensor.shape().dims) out << ' ' << d;
    out << '\n';
    for (std::int64_t i = 0; i < tensor.nnz(); ++i) {
        const EntryView e = tensor.entry(i);
        for (index_t ix : e.index) out << ix << ' ';
        out << e.count << '\n';
    }
}

std::pair<SparseCountTensor, SparseCountTensor>
split_heldout(const SparseCountTensor& tensor, double fraction,
              std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("heldout fraction must lie in (0,1)");
    }
    if (tensor.nnz() < 2) {
        throw std::invalid_argument(
            "need at least 2 entries to split, got " +
            std::to_string(tensor.nnz()));
    }
    const std::int64_t n = tensor.nnz();
    const std::int64_t n_held =
        std::llround(fraction * static_cast<double>(n));

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    shuffle(order, rng);

    auto collect = [&](std::int64_t from, std::int64_t to) {
        std::vector<Entry> part;
        part.reserve(static_cast<std::size_t>(to - from));
        std::vector<std::int64_t> ids(order.begin() + from,
                                      order.begin() + to);
        std::sort(ids.begin(), ids.end()); // keep original entry order
        for (std::int64_t id : ids) {
            const EntryView e = tensor.entry(id);
            part.push_back(Entry{{e.index.begin(), e.index.end()}, e.count});
        }
        return SparseCountTensor::from_entries(tensor.shape(), part);
    };
    return {collect(n_held, n), collect(0, n_held)};
}

} // namespace bnbcp
