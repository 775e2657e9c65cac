#pragma once

#include <cstdint>
#include <string>

#include "qsm/grid.hpp"

namespace qsm {

struct MetricsReport {
    double hfen = 0.0;
    double nrmse = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
    std::int64_t mask_voxels = 0;
};

// All four metrics take an optional evaluation mask; nullptr means the whole
// volume. mask_voxels in the report is the raw (uneroded) count.

// ||x - ref|| / ||ref|| over masked voxels.
double nrmse(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask = nullptr);

// 10 log10(peak^2 / MSE), peak = max(ref) - min(ref) inside the mask.
// Returns +infinity when MSE == 0.
double psnr(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask = nullptr);

// Mean local SSIM, 3D gaussian window sigma = 1.5 / radius 5, K1 = 0.01,
// K2 = 0.03, dynamic range taken from ref as in psnr. Window centers are the
// mask eroded by the window radius, so every window lies inside the mask.
double ssim(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask = nullptr);

// ||LoG(x) - LoG(ref)|| / ||LoG(ref)|| with a 15^3 Laplacian-of-gaussian
// filter (sigma = 1.5 voxels), zero-padded convolution, norms over the mask
// eroded by the filter radius.
double hfen(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask = nullptr);

MetricsReport metrics_report(const Volume3D& x, const Volume3D& ref,
                             const VoxelMask* mask = nullptr);

// Like metrics_report, but a metric that is undefined for this mask (erosion
// by the SSIM/HFEN filter radius can empty it on small grids, and a zero
// reference leaves nrmse/hfen meaningless) comes back as NaN instead of
// throwing. Grid mismatches still throw.
MetricsReport metrics_report_tolerant(const Volume3D& x, const Volume3D& ref,
                                      const VoxelMask* mask = nullptr);

inline constexpr const char* kMetricsCsvHeader = "hfen,nrmse,ssim,psnr,mask_voxels";

// psnr serializes as the string "inf" when infinite.
std::string metrics_json(const MetricsReport& r);
std::string metrics_csv_row(const MetricsReport& r);

namespace detail {
// The mean-free LoG filter taps, cube of side 2*radius+1, x-fastest.
std::vector<double> log_filter(double sigma, int radius);
// Zero-padded dense convolution with a cube filter.
Volume3D convolve_cube(const Volume3D& v, const std::vector<double>& taps, int radius);
} // namespace detail

} // namespace qsm
