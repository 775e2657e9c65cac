#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

#include "qsm/errors.hpp"

namespace qsm {

// Regular 3-D grid. Volumes are stored x-fastest: index (i,j,k) lives at
// flat offset (k*ny + j)*nx + i.
struct GridSpec {
    std::array<int, 3> dims{0, 0, 0};          // nx, ny, nz
    std::array<double, 3> voxel{1.0, 1.0, 1.0}; // mm

    std::int64_t count() const {
        return static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2];
    }
    std::int64_t index(int i, int j, int k) const {
        return (static_cast<std::int64_t>(k) * dims[1] + j) * dims[0] + i;
    }
    // Physical extent along each axis in mm.
    std::array<double, 3> extent() const {
        return {dims[0] * voxel[0], dims[1] * voxel[1], dims[2] * voxel[2]};
    }
    bool operator==(const GridSpec& o) const {
        return dims == o.dims && voxel == o.voxel;
    }
    void validate() const;
};

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what);

struct Volume3D {
    GridSpec grid;
    std::vector<double> data;

    Volume3D() = default;
    explicit Volume3D(const GridSpec& g, double fill = 0.0)
        : grid(g), data(static_cast<std::size_t>(g.count()), fill) {}
    double& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
    double at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }
};

struct Spectrum3D {
    GridSpec grid;
    std::vector<std::complex<double>> data;

    Spectrum3D() = default;
    explicit Spectrum3D(const GridSpec& g)
        : grid(g), data(static_cast<std::size_t>(g.count())) {}
    std::complex<double>& at(int i, int j, int k) { return data[grid.index(i, j, k)]; }
    std::complex<double> at(int i, int j, int k) const { return data[grid.index(i, j, k)]; }
};

// Boolean voxel mask over a grid (image space).
struct VoxelMask {
    GridSpec grid;
    std::vector<std::uint8_t> flags;

    VoxelMask() = default;
    explicit VoxelMask(const GridSpec& g, bool fill = false)
        : grid(g), flags(static_cast<std::size_t>(g.count()), fill ? 1 : 0) {}
    std::int64_t count_set() const;
};

// Physical frequency in cycles/mm for DFT bin i of n samples at pitch v:
//   i < (n+1)/2  ->  i / (n*v)
//   otherwise    ->  (i - n) / (n*v)
// Even n puts the Nyquist bin on the negative side.
double freq_bin(int i, int n, double v);

// Per-axis frequency coordinate tables for a grid.
struct FreqCoords {
    std::array<std::vector<double>, 3> axis;
};
FreqCoords freq_coords(const GridSpec& grid);

// Unnormalized forward DFT (sum without prefactor).
Spectrum3D fft_forward(const Volume3D& vol);

// Inverse DFT with 1/N normalization. Rejects spectra that are not
// conjugate-symmetric to 1e-6 relative to the largest magnitude.
Volume3D fft_inverse(const Spectrum3D& spec);

namespace detail {
// Real part of the complex inverse DFT (1/N normalized) with no Hermitian
// gate; used where a gradient formula takes Re(.) of a non-symmetric product.
Volume3D ifft_real_part(const Spectrum3D& spec);
// Largest |S(k) - conj(S(-k))| over all bins.
double hermitian_defect(const Spectrum3D& spec);
} // namespace detail

} // namespace qsm
