#include "psnl/model_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "psnl/text_format.hpp"

namespace psnl {

namespace {

void write_matrix_rows(std::ostream& out, const std::vector<double>& m,
                       std::uint32_t nodes, int rank) {
    for (std::uint32_t u = 0; u < nodes; ++u) {
        for (int d = 0; d < rank; ++d) {
            if (d) out << '\t';
            out << fmt_double(m[static_cast<std::size_t>(u) * rank + d]);
        }
        out << '\n';
    }
}

void read_matrix_rows(std::istream& in, std::vector<double>& m, std::uint32_t nodes,
                      int rank, const char* what) {
    m.resize(static_cast<std::size_t>(nodes) * rank);
    std::string line;
    for (std::uint32_t u = 0; u < nodes; ++u) {
        if (!std::getline(in, line)) throw DataError(std::string("model file truncated in ") + what);
        auto fields = split_fields(line);
        if (fields.size() != static_cast<std::size_t>(rank))
            throw DataError(std::string("bad row width in ") + what);
        for (int d = 0; d < rank; ++d) {
            auto v = parse_double(fields[d]);
            if (!v) throw DataError(std::string("bad value in ") + what);
            m[static_cast<std::size_t>(u) * rank + d] = *v;
        }
    }
}

}  // namespace

std::int64_t LoadedModel::index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<std::int64_t>(i);
    return -1;
}

void save_model(std::ostream& out, const FactorState& state,
                const std::vector<std::string>& labels, bool checkpoint) {
    if (labels.size() != state.nodes) throw DataError("label count does not match state");
    out << "PSNL\tv1\t" << state.nodes << '\t' << state.rank << '\n';
    write_matrix_rows(out, state.A, state.nodes, state.rank);
    out << "#LABELS\n";
    for (std::uint32_t u = 0; u < state.nodes; ++u) out << u << '\t' << labels[u] << '\n';
    if (checkpoint) {
        out << "#CHECKPOINT\n";
        write_matrix_rows(out, state.X, state.nodes, state.rank);
        write_matrix_rows(out, state.W, state.nodes, state.rank);
    }
}

LoadedModel load_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty model file");
    auto header = split_fields(line);
    if (header.size() != 4 || header[0] != "PSNL" || header[1] != "v1")
        throw DataError("bad model header (want PSNL\\tv1\\t<nodes>\\t<rank>)");
    auto nodes = parse_int(header[2]);
    auto rank = parse_int(header[3]);
    if (!nodes || !rank || *nodes < 0 || *rank < 1) throw DataError("bad model header counts");

    LoadedModel model;
    model.state.nodes = static_cast<std::uint32_t>(*nodes);
    model.state.rank = static_cast<int>(*rank);
    read_matrix_rows(in, model.state.A, model.state.nodes, model.state.rank, "A block");

    if (!std::getline(in, line) || line != "#LABELS") throw DataError("missing #LABELS block");
    model.labels.resize(model.state.nodes);
    for (std::uint32_t u = 0; u < model.state.nodes; ++u) {
        if (!std::getline(in, line)) throw DataError("model file truncated in labels");
        auto fields = split_fields(line);
        if (fields.size() != 2) throw DataError("bad label line");
        auto idx = parse_int(fields[0]);
        if (!idx || *idx != u) throw DataError("label lines out of order");
        model.labels[u] = std::string(fields[1]);
    }

    if (std::getline(in, line) && line == "#CHECKPOINT") {
        model.has_checkpoint = true;
        read_matrix_rows(in, model.state.X, model.state.nodes, model.state.rank, "X checkpoint");
        read_matrix_rows(in, model.state.W, model.state.nodes, model.state.rank, "W checkpoint");
    } else {
        model.state.X = model.state.A;
        model.state.W.assign(model.state.A.size(), 0.0);
    }
    return model;
}

void save_model_file(const std::string& path, const FactorState& state,
                     const std::vector<std::string>& labels, bool checkpoint) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    save_model(f, state, labels, checkpoint);
    if (!f) throw DataError("failed writing '" + path + "'");
}

LoadedModel load_model_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path + "'");
    return load_model(f);
}

}  // namespace psnl
