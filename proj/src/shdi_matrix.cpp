#include "psnl/shdi_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "psnl/rng.hpp"
#include "psnl/text_format.hpp"

namespace psnl {

namespace {

std::uint64_t pair_key(std::uint32_t m, std::uint32_t n) {
    return (static_cast<std::uint64_t>(m) << 32) | n;
}

bool is_numeric_label(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
    return out;
}

[[noreturn]] void fail_line(std::size_t line, const std::string& what) {
    throw DataError("line " + std::to_string(line) + ": " + what);
}

}  // namespace

ShdiMatrix ShdiMatrix::build(std::vector<std::string> labels, std::vector<Edge> edges) {
    ShdiMatrix mat;
    mat.node_count_ = static_cast<std::uint32_t>(labels.size());
    mat.labels_ = std::move(labels);
    for (std::uint32_t i = 0; i < mat.node_count_; ++i) {
        if (!mat.label_index_.emplace(mat.labels_[i], i).second)
            throw DataError("duplicate node label '" + mat.labels_[i] + "'");
    }

    std::sort(edges.begin(), edges.end(),
              [](const Edge& a, const Edge& b) { return a.m != b.m ? a.m < b.m : a.n < b.n; });
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const Edge& e = edges[i];
        if (e.m > e.n) throw DataError("edge not canonical (m > n)");
        if (e.n >= mat.node_count_) throw DataError("edge index out of range");
        if (!(e.y >= 0.0) || !std::isfinite(e.y)) throw DataError("edge weight must be finite and >= 0");
        if (i > 0 && edges[i - 1].m == e.m && edges[i - 1].n == e.n)
            throw DataError("duplicate canonical edge");
    }
    mat.edges_ = std::move(edges);

    std::vector<std::uint32_t> deg(mat.node_count_, 0);
    for (const Edge& e : mat.edges_) {
        ++deg[e.m];
        if (e.n != e.m) ++deg[e.n];
    }
    mat.adj_offsets_.assign(mat.node_count_ + 1, 0);
    for (std::uint32_t u = 0; u < mat.node_count_; ++u)
        mat.adj_offsets_[u + 1] = mat.adj_offsets_[u] + deg[u];
    mat.adj_.resize(mat.adj_offsets_.back());

    std::vector<std::uint32_t> cursor(mat.adj_offsets_.begin(), mat.adj_offsets_.end() - 1);
    for (std::size_t e = 0; e < mat.edges_.size(); ++e) {
        const Edge& ed = mat.edges_[e];
        mat.adj_[cursor[ed.m]++] = {ed.n, static_cast<std::uint32_t>(e), ed.y};
        if (ed.n != ed.m) mat.adj_[cursor[ed.n]++] = {ed.m, static_cast<std::uint32_t>(e), ed.y};
    }
    for (std::uint32_t u = 0; u < mat.node_count_; ++u) {
        auto first = mat.adj_.begin() + mat.adj_offsets_[u];
        auto last = mat.adj_.begin() + mat.adj_offsets_[u + 1];
        std::sort(first, last,
                  [](const NeighborRef& a, const NeighborRef& b) { return a.node < b.node; });
    }
    return mat;
}

std::span<const NeighborRef> ShdiMatrix::neighbors(std::uint32_t u) const {
    if (u >= node_count_) throw std::out_of_range("node index out of range");
    return {adj_.data() + adj_offsets_[u], adj_offsets_[u + 1] - adj_offsets_[u]};
}

std::uint32_t ShdiMatrix::degree(std::uint32_t u) const {
    if (u >= node_count_) throw std::out_of_range("node index out of range");
    return adj_offsets_[u + 1] - adj_offsets_[u];
}

std::int64_t ShdiMatrix::index_of(const std::string& label) const {
    auto it = label_index_.find(label);
    return it == label_index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::size_t ShdiMatrix::mention_count() const {
    std::size_t loops = 0;
    for (const Edge& e : edges_)
        if (e.m == e.n) ++loops;
    return 2 * edges_.size() - loops;
}

double ShdiMatrix::density() const {
    if (node_count_ == 0) return 0.0;
    const double denom = static_cast<double>(node_count_) * static_cast<double>(node_count_);
    return static_cast<double>(mention_count()) / denom;
}

ShdiMatrix ShdiMatrix::restrict_to(std::span<const std::size_t> edge_ids) const {
    std::vector<Edge> sub;
    sub.reserve(edge_ids.size());
    for (std::size_t id : edge_ids) {
        if (id >= edges_.size()) throw DataError("edge id out of range");
        sub.push_back(edges_[id]);
    }
    return build(labels_, std::move(sub));
}

bool ShdiMatrix::operator==(const ShdiMatrix& other) const {
    return node_count_ == other.node_count_ && labels_ == other.labels_ &&
           edges_ == other.edges_;
}

std::vector<RawEdge> parse_raw(std::istream& in, EdgeFormat format,
                               std::vector<std::string>* mm_labels) {
    std::vector<RawEdge> raw;
    std::string line;
    std::size_t lineno = 0;

    if (format == EdgeFormat::Tsv) {
        while (std::getline(in, line)) {
            ++lineno;
            auto fields = split_fields(line);
            if (fields.empty() || fields[0].front() == '#') continue;
            if (fields.size() != 3)
                fail_line(lineno, "expected <label_a> <label_b> <weight>");
            auto w = parse_double(fields[2]);
            if (!w || !std::isfinite(*w)) fail_line(lineno, "weight is not a finite number");
            if (*w < 0.0) fail_line(lineno, "negative weight");
            raw.push_back({std::string(fields[0]), std::string(fields[1]), *w, lineno});
        }
        return raw;
    }

    // MatrixMarket coordinate, symmetric qualifier required.
    if (!std::getline(in, line)) throw DataError("empty MatrixMarket stream");
    ++lineno;
    auto banner = split_fields(line);
    if (banner.size() < 5 || lower(banner[0]) != "%%matrixmarket")
        fail_line(lineno, "missing %%MatrixMarket banner");
    if (lower(banner[1]) != "matrix" || lower(banner[2]) != "coordinate")
        fail_line(lineno, "only coordinate matrices are supported");
    const std::string field = lower(banner[3]);
    if (field != "real" && field != "integer")
        fail_line(lineno, "only real/integer fields are supported");
    if (lower(banner[4]) != "symmetric")
        fail_line(lineno, "MatrixMarket header must declare 'symmetric'");

    std::size_t rows = 0, cols = 0, nnz = 0;
    bool have_size = false;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = split_fields(line);
        if (fields.empty() || fields[0].front() == '%') continue;
        if (!have_size) {
            if (fields.size() != 3) fail_line(lineno, "expected <rows> <cols> <nnz>");
            auto r = parse_int(fields[0]), c = parse_int(fields[1]), z = parse_int(fields[2]);
            if (!r || !c || !z || *r <= 0 || *c <= 0 || *z < 0)
                fail_line(lineno, "bad size line");
            if (*r != *c) fail_line(lineno, "symmetric matrix must be square");
            rows = static_cast<std::size_t>(*r);
            cols = static_cast<std::size_t>(*c);
            nnz = static_cast<std::size_t>(*z);
            have_size = true;
            continue;
        }
        if (fields.size() != 3) fail_line(lineno, "expected <i> <j> <value>");
        auto i = parse_int(fields[0]), j = parse_int(fields[1]);
        auto v = parse_double(fields[2]);
        if (!i || !j || *i < 1 || *j < 1) fail_line(lineno, "indices must be 1-based integers");
        if (static_cast<std::size_t>(*i) > rows || static_cast<std::size_t>(*j) > cols)
            fail_line(lineno, "index exceeds declared dimension");
        if (!v || !std::isfinite(*v)) fail_line(lineno, "value is not a finite number");
        if (*v < 0.0) fail_line(lineno, "negative weight");
        raw.push_back({std::to_string(*i), std::to_string(*j), *v, lineno});
    }
    if (!have_size) throw DataError("MatrixMarket stream has no size line");
    if (raw.size() != nnz)
        throw DataError("MatrixMarket entry count " + std::to_string(raw.size()) +
                        " does not match declared nnz " + std::to_string(nnz));
    if (mm_labels) {
        mm_labels->clear();
        mm_labels->reserve(rows);
        for (std::size_t i = 1; i <= rows; ++i) mm_labels->push_back(std::to_string(i));
    }
    return raw;
}

ShdiMatrix build_matrix(const std::vector<std::string>& labels,
                        const std::vector<RawEdge>& raw) {
    // Dense ids over the sorted, deduplicated label universe.
    std::vector<std::string> ordered(labels);
    std::sort(ordered.begin(), ordered.end());
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());
    const bool numeric = std::all_of(ordered.begin(), ordered.end(), is_numeric_label);
    if (numeric) {
        std::sort(ordered.begin(), ordered.end(), [](const std::string& a, const std::string& b) {
            if (a.size() != b.size()) return a.size() < b.size();
            return a < b;
        });
    }
    std::unordered_map<std::string, std::uint32_t> index;
    for (std::uint32_t i = 0; i < ordered.size(); ++i) index.emplace(ordered[i], i);

    std::unordered_map<std::uint64_t, std::pair<double, std::size_t>> seen;
    std::vector<Edge> edges;
    for (const RawEdge& r : raw) {
        auto ia = index.find(r.a);
        auto ib = index.find(r.b);
        if (ia == index.end() || ib == index.end())
            fail_line(r.line, "label not in node universe");
        std::uint32_t m = ia->second, n = ib->second;
        if (m > n) std::swap(m, n);
        auto [it, inserted] = seen.emplace(pair_key(m, n), std::make_pair(r.y, r.line));
        if (inserted) {
            edges.push_back({m, n, r.y});
        } else {
            const double prev = it->second.first;
            const double scale = std::max(std::abs(prev), std::abs(r.y));
            if (std::abs(prev - r.y) > 1e-9 * std::max(scale, 1e-300))
                fail_line(r.line, "conflicting duplicate weight for pair first seen on line " +
                                      std::to_string(it->second.second));
        }
    }
    return ShdiMatrix::build(std::move(ordered), std::move(edges));
}

ShdiMatrix parse_edges(std::istream& in, EdgeFormat format) {
    std::vector<std::string> mm_labels;
    auto raw = parse_raw(in, format, &mm_labels);
    if (format == EdgeFormat::MatrixMarket) return build_matrix(mm_labels, raw);
    std::vector<std::string> labels;
    labels.reserve(raw.size() * 2);
    for (const RawEdge& r : raw) {
        labels.push_back(r.a);
        labels.push_back(r.b);
    }
    return build_matrix(labels, raw);
}

EdgeFormat detect_format(std::istream& in) {
    const auto pos = in.tellg();
    std::string first;
    std::getline(in, first);
    in.clear();
    in.seekg(pos);
    return lower(first).rfind("%%matrixmarket", 0) == 0 ? EdgeFormat::MatrixMarket
                                                        : EdgeFormat::Tsv;
}

ShdiMatrix load_edges(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open '" + path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    const EdgeFormat fmt = detect_format(buf);
    return parse_edges(buf, fmt);
}

std::vector<ShdiMatrix> load_edges_shared(const std::vector<std::string>& paths) {
    std::vector<std::vector<RawEdge>> raws(paths.size());
    std::vector<std::string> universe;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        std::ifstream f(paths[i]);
        if (!f) throw DataError("cannot open '" + paths[i] + "'");
        std::stringstream buf;
        buf << f.rdbuf();
        const EdgeFormat fmt = detect_format(buf);
        std::vector<std::string> mm_labels;
        try {
            raws[i] = parse_raw(buf, fmt, &mm_labels);
        } catch (const DataError& e) {
            throw DataError(paths[i] + ": " + e.what());
        }
        if (fmt == EdgeFormat::MatrixMarket) {
            universe.insert(universe.end(), mm_labels.begin(), mm_labels.end());
        } else {
            for (const RawEdge& r : raws[i]) {
                universe.push_back(r.a);
                universe.push_back(r.b);
            }
        }
    }
    std::vector<ShdiMatrix> out;
    out.reserve(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) {
        try {
            out.push_back(build_matrix(universe, raws[i]));
        } catch (const DataError& e) {
            throw DataError(paths[i] + ": " + e.what());
        }
    }
    return out;
}

void write_tsv(std::ostream& out, const ShdiMatrix& mat) {
    for (const Edge& e : mat.edges()) {
        out << mat.labels()[e.m] << '\t' << mat.labels()[e.n] << '\t' << fmt_double(e.y)
            << '\n';
    }
}

FoldSplit::Rotation FoldSplit::rotation(std::size_t r) const {
    const std::size_t k = folds.size();
    if (r >= k) throw DataError("rotation index out of range");
    Rotation rot;
    const std::size_t v = r, t1 = (r + 1) % k, t2 = (r + 2) % k;
    rot.valid = folds[v];
    rot.test = folds[t1];
    rot.test.insert(rot.test.end(), folds[t2].begin(), folds[t2].end());
    std::sort(rot.test.begin(), rot.test.end());
    for (std::size_t i = 0; i < k; ++i) {
        if (i == v || i == t1 || i == t2) continue;
        rot.train.insert(rot.train.end(), folds[i].begin(), folds[i].end());
    }
    std::sort(rot.train.begin(), rot.train.end());
    return rot;
}

FoldSplit kfold_split(const ShdiMatrix& mat, std::size_t k, std::uint64_t seed) {
    const std::size_t n = mat.edges().size();
    if (k < 4) throw DataError("need at least 4 folds for a train/valid/test rotation");
    if (n < k) throw DataError("fewer edges (" + std::to_string(n) + ") than folds (" +
                               std::to_string(k) + ")");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0x666f6c64));  // "fold"
    rng.shuffle(idx.data(), idx.size());

    FoldSplit split;
    split.seed = seed;
    split.folds.resize(k);
    for (std::size_t pos = 0; pos < n; ++pos) split.folds[pos % k].push_back(idx[pos]);
    for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
    return split;
}

void write_folds(std::ostream& out, const ShdiMatrix& mat, const FoldSplit& split) {
    std::vector<std::size_t> fold_of(mat.edges().size(), 0);
    for (std::size_t f = 0; f < split.folds.size(); ++f)
        for (std::size_t id : split.folds[f]) fold_of[id] = f;
    for (std::size_t e = 0; e < mat.edges().size(); ++e) {
        const Edge& ed = mat.edges()[e];
        out << fold_of[e] << '\t' << mat.labels()[ed.m] << '\t' << mat.labels()[ed.n] << '\n';
    }
}

FoldSplit read_folds(std::istream& in, const ShdiMatrix& mat, std::size_t k) {
    FoldSplit split;
    split.folds.resize(k);
    std::vector<bool> assigned(mat.edges().size(), false);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto fields = split_fields(line);
        if (fields.empty() || fields[0].front() == '#') continue;
        if (fields.size() != 3) fail_line(lineno, "expected <fold> <label_a> <label_b>");
        auto f = parse_int(fields[0]);
        if (!f || *f < 0 || static_cast<std::size_t>(*f) >= k)
            fail_line(lineno, "fold index out of range");
        const std::int64_t a = mat.index_of(std::string(fields[1]));
        const std::int64_t b = mat.index_of(std::string(fields[2]));
        if (a < 0 || b < 0) fail_line(lineno, "unknown node label");
        std::uint32_t m = static_cast<std::uint32_t>(a), n = static_cast<std::uint32_t>(b);
        if (m > n) std::swap(m, n);
        const auto& edges = mat.edges();
        auto it = std::lower_bound(edges.begin(), edges.end(), std::make_pair(m, n),
                                   [](const Edge& e, const std::pair<std::uint32_t, std::uint32_t>& p) {
                                       return e.m != p.first ? e.m < p.first : e.n < p.second;
                                   });
        if (it == edges.end() || it->m != m || it->n != n)
            fail_line(lineno, "edge not present in matrix");
        const std::size_t id = static_cast<std::size_t>(it - edges.begin());
        if (assigned[id]) fail_line(lineno, "edge assigned to more than one fold");
        assigned[id] = true;
        split.folds[static_cast<std::size_t>(*f)].push_back(id);
    }
    for (std::size_t e = 0; e < assigned.size(); ++e)
        if (!assigned[e]) throw DataError("fold file does not cover every edge");
    for (auto& fold : split.folds) std::sort(fold.begin(), fold.end());
    return split;
}

}  // namespace psnl
