#pragma once

#include <string>

#include "qsm/grid.hpp"

namespace qsm {

// One-line JSON header + raw little-endian f64 payload; see save for the
// exact header fields. Round trips are bit-identical.
void save_volume(const Volume3D& v, const std::string& path);
Volume3D load_volume(const std::string& path);

// Masks ride the same format with 0/1 payload values; any nonzero voxel
// loads as set.
void save_mask(const VoxelMask& m, const std::string& path);
VoxelMask load_mask(const std::string& path);

} // namespace qsm
