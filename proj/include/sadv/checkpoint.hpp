#pragma once

#include <string>

#include "sadv/model.hpp"

namespace sadv {

/// Binary model snapshot. Layout, byte-exact:
///   "SADV1 <architecture-descriptor>\n"
/// then for each parameter in architecture order:
///   u32 LE name length, name bytes,
///   u32 LE rank, u32 LE extent per axis,
///   f64 LE values, row-major.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace sadv
