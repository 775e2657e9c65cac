#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "qsm/grid.hpp"

namespace qsm {

// Unit vector giving the main-field direction in the image frame.
struct Orientation {
    std::array<double, 3> b{0.0, 0.0, 1.0};

    Orientation() = default;
    // Validates unit norm to 1e-12.
    explicit Orientation(const std::array<double, 3>& v);
    // Builds from an arbitrary nonzero vector by normalizing it.
    static Orientation normalized(double x, double y, double z);

    double dot(const Orientation& o) const {
        return b[0] * o.b[0] + b[1] * o.b[1] + b[2] * o.b[2];
    }
};

// Angle in degrees between two unit vectors.
double angle_deg(const Orientation& a, const Orientation& b);

// Unit-magnitude dipole kernel sampled on the DFT frequency lattice:
//   D(k) = 1/3 - (k.b)^2 / |k|^2,   D(0) = 0.
// Values lie in [-2/3, 1/3] and vanish on the magic-angle cone where the
// angle between k and b is acos(sqrt(1/3)) ~ 54.74 deg.
struct DipoleKernel {
    GridSpec grid;
    Orientation orient;
    std::vector<double> values;
};

DipoleKernel dipole_kernel(const GridSpec& grid, const Orientation& orient);

// Shared cache keyed by grid and orientation quantized at 1e-9; purely an
// optimization, results identical to dipole_kernel.
std::shared_ptr<const DipoleKernel> dipole_kernel_cached(const GridSpec& grid,
                                                         const Orientation& orient);

// k-space mask of bins with |D(k)| < t (the near-cone region). Requires
// 0 < t < 1/3.
struct ConeMask {
    GridSpec grid;
    double threshold = 0.0;
    std::vector<std::uint8_t> flags;

    std::int64_t count_set() const;
};

ConeMask cone_mask(const DipoleKernel& kernel, double t);

// Forward dipole model: F^{-1}{ D(k) . F{chi} }. Output is the fractional
// field shift for unit B0.
Volume3D forward_field(const Volume3D& chi, const DipoleKernel& kernel);

namespace detail {
// Forward model applied directly to a spectrum; saves re-transforming chi
// when the caller already holds F{chi}.
Spectrum3D apply_kernel(const Spectrum3D& chi_spec, const DipoleKernel& kernel);
} // namespace detail

} // namespace qsm
