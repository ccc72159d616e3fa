#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace psnl {

// Malformed or inconsistent input data. Messages carry line numbers where
// they apply.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One known entry of the symmetric matrix, stored canonically with m <= n.
// Self-loops (m == n) are ordinary entries.
struct Edge {
    std::uint32_t m = 0;
    std::uint32_t n = 0;
    double y = 0.0;

    bool operator==(const Edge&) const = default;
};

struct NeighborRef {
    std::uint32_t node;   // the neighbor's dense index
    std::uint32_t edge;   // index into edges() of the canonical entry
    double weight;
};

// A symmetric, high-dimensional, incomplete matrix given as an undirected
// weighted edge list. Nodes carry raw input labels remapped to dense 0-based
// indices; the mapping is kept so models can be persisted against it.
// Immutable once built, safe to share across threads.
class ShdiMatrix {
public:
    ShdiMatrix() = default;

    // `edges` must already be canonical (m <= n, no duplicates); throws
    // DataError on violations. Labels define node_count and the index space.
    static ShdiMatrix build(std::vector<std::string> labels, std::vector<Edge> edges);

    std::uint32_t node_count() const { return node_count_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<std::string>& labels() const { return labels_; }

    // Lambda(u): known neighbors of u in ascending index order. A self-loop
    // appears exactly once. Throws std::out_of_range for u >= node_count.
    std::span<const NeighborRef> neighbors(std::uint32_t u) const;
    std::uint32_t degree(std::uint32_t u) const;

    // Dense index for a raw label, or -1 if unknown.
    std::int64_t index_of(const std::string& label) const;

    // Known-entry density against |U|^2: both ordered mentions of every
    // off-diagonal edge count, a self-loop counts once.
    double density() const;

    std::size_t mention_count() const;

    // Same node/label space, edges restricted to the given edge indices.
    ShdiMatrix restrict_to(std::span<const std::size_t> edge_ids) const;

    bool operator==(const ShdiMatrix& other) const;

private:
    std::uint32_t node_count_ = 0;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::uint32_t> label_index_;
    std::vector<Edge> edges_;                 // sorted by (m, n)
    std::vector<std::uint32_t> adj_offsets_;  // CSR, size node_count + 1
    std::vector<NeighborRef> adj_;
};

enum class EdgeFormat { Tsv, MatrixMarket };

// Raw (label_a, label_b, weight) triple plus the source line, before
// label remapping and dedup.
struct RawEdge {
    std::string a;
    std::string b;
    double y;
    std::size_t line;
};

// Reads one file into raw triples. TSV: `<label_a> <label_b> <weight>`,
// '#' comments skipped. MatrixMarket: coordinate format, the header must
// carry the `symmetric` qualifier, 1-based indices.
std::vector<RawEdge> parse_raw(std::istream& in, EdgeFormat format,
                               std::vector<std::string>* mm_labels = nullptr);

// Assigns dense ids over the label universe (numeric-aware order: when every
// label parses as a nonnegative integer they sort numerically, otherwise
// lexicographically), dedups mirrored/duplicate mentions, validates weights.
// Duplicate mentions of a pair must agree within relative 1e-9.
ShdiMatrix build_matrix(const std::vector<std::string>& labels,
                        const std::vector<RawEdge>& raw);

ShdiMatrix parse_edges(std::istream& in, EdgeFormat format);

// Detects MatrixMarket by the `%%MatrixMarket` banner, TSV otherwise.
EdgeFormat detect_format(std::istream& in);
ShdiMatrix load_edges(const std::string& path);

// Parses several files against one shared label space so factor indices
// line up across train/validation/test splits.
std::vector<ShdiMatrix> load_edges_shared(const std::vector<std::string>& paths);

// Canonical TSV serialization; parse(write(m)) == m.
void write_tsv(std::ostream& out, const ShdiMatrix& mat);

// Deterministic partition of the edge set into k folds of size within 1.
struct FoldSplit {
    std::vector<std::vector<std::size_t>> folds;  // ascending edge ids
    std::uint64_t seed = 0;

    struct Rotation {
        std::vector<std::size_t> train;
        std::vector<std::size_t> valid;
        std::vector<std::size_t> test;
    };

    // Rotation r: validation = fold r, test = folds r+1, r+2 (mod k),
    // train = the remaining k-3 folds. With k = 10 this is the 7/1/2 split.
    Rotation rotation(std::size_t r) const;
};

FoldSplit kfold_split(const ShdiMatrix& mat, std::size_t k, std::uint64_t seed);

// Fold file: one line per edge, `<fold>\t<label_a>\t<label_b>`, in canonical
// edge order.
void write_folds(std::ostream& out, const ShdiMatrix& mat, const FoldSplit& split);
FoldSplit read_folds(std::istream& in, const ShdiMatrix& mat, std::size_t k = 10);

}  // namespace psnl
