#pragma once

#include <filesystem>
#include <iosfwd>

#include "pmm/mlp/mlp.hpp"

namespace pmm::mlp {

// Binary layout, little-endian: "PMM1", u64 depth L, u64 widths[L+1], then
// each W_l row-major as f64. The nonlinearity is not stored.

void write_checkpoint(std::ostream& out, const MlpNet& net);
MlpNet read_checkpoint(std::istream& in, Nonlinearity phi);

void save_checkpoint(const std::filesystem::path& path, const MlpNet& net);
MlpNet load_checkpoint(const std::filesystem::path& path, Nonlinearity phi);

}  // namespace pmm::mlp
