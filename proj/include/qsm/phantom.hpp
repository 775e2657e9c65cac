#pragma once

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

#include "qsm/dipole.hpp"
#include "qsm/grid.hpp"
#include "qsm/inversion.hpp"

namespace qsm {

// All geometry in mm; voxel (i,j,k) is sampled at its center
// ((i+0.5)vx, (j+0.5)vy, (k+0.5)vz).
struct SphereSpec {
    std::array<double, 3> center_mm{};
    double radius_mm = 0.0;
    double delta_chi = 0.0;
};

// Infinite circular cylinder, clipped by the grid along its axis.
struct CylinderSpec {
    std::array<double, 3> axis{0.0, 0.0, 1.0};
    std::array<double, 3> center_mm{};
    double radius_mm = 0.0;
    double delta_chi = 0.0;
};

struct BoxSpec {
    std::array<double, 3> min_mm{};
    std::array<double, 3> max_mm{};
    double delta_chi = 0.0;
};

using Shape = std::variant<SphereSpec, CylinderSpec, BoxSpec>;

struct PhantomSpec {
    GridSpec grid;
    std::vector<Shape> shapes;
    double background = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct NoiseSpec {
    double sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Rasterizes the shapes (later shapes overwrite earlier ones) and returns
// the susceptibility volume plus the union of shape supports dilated by 2
// voxels (Chebyshev ball).
std::pair<Volume3D, VoxelMask> build_phantom(const PhantomSpec& spec);

// One field per orientation: forward_field plus optional i.i.d. gaussian
// noise; the noise stream for orientation index i derives from
// (noise.seed, i), so sets are reproducible element by element.
OrientationSet synth_orientation_set(const Volume3D& chi,
                                     const std::vector<Orientation>& orientations,
                                     const NoiseSpec& noise);

// n deterministic unit vectors on a Fibonacci spiral inside the polar cap
// of half-angle cap_deg around z-hat. Index 0 is exactly z-hat.
std::vector<Orientation> orientation_sweep(int n, double cap_deg, std::uint64_t seed);

// Chebyshev (box) dilation/erosion of a voxel mask by the given radius.
VoxelMask dilate_mask(const VoxelMask& mask, int radius);
VoxelMask erode_mask(const VoxelMask& mask, int radius);

} // namespace qsm
