#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "psnl/solver.hpp"

namespace psnl {

struct LoadedModel {
    FactorState state;                // A always populated; X/W from a checkpoint
    std::vector<std::string> labels;  // dense index -> raw label
    bool has_checkpoint = false;

    std::int64_t index_of(const std::string& label) const;
};

// Model file, text:
//   PSNL\tv1\t<node_count>\t<rank>
//   node_count lines of rank tab-separated A values (shortest round-trip)
//   #LABELS, then node_count lines `<index>\t<raw_label>`
//   optionally #CHECKPOINT, then node_count lines of X and node_count of W
void save_model(std::ostream& out, const FactorState& state,
                const std::vector<std::string>& labels, bool checkpoint = false);

LoadedModel load_model(std::istream& in);

void save_model_file(const std::string& path, const FactorState& state,
                     const std::vector<std::string>& labels, bool checkpoint = false);
LoadedModel load_model_file(const std::string& path);

}  // namespace psnl
