#include "qsm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include <fftw3.h>

#include "qsm/parallel.hpp"

namespace qsm {

void GridSpec::validate() const {
    for (int d = 0; d < 3; ++d) {
        if (dims[d] < 4)
            throw ConfigError("grid dims must be >= 4 per axis, got " +
                              std::to_string(dims[d]));
        if (!(voxel[d] > 0.0) || !std::isfinite(voxel[d]))
            throw ConfigError("voxel size must be positive and finite");
    }
    if (count() > (std::int64_t(1) << 27))
        throw ConfigError("grid has more than 2^27 voxels");
}

void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
    if (!(a == b))
        throw GridMismatch(std::string(what) + ": grids differ ([" +
                           std::to_string(a.dims[0]) + "," + std::to_string(a.dims[1]) + "," +
                           std::to_string(a.dims[2]) + "] vs [" +
                           std::to_string(b.dims[0]) + "," + std::to_string(b.dims[1]) + "," +
                           std::to_string(b.dims[2]) + "])");
}

std::int64_t VoxelMask::count_set() const {
    std::int64_t n = 0;
    for (auto f : flags) n += f ? 1 : 0;
    return n;
}

double freq_bin(int i, int n, double v) {
    const double denom = n * v;
    return (i < (n + 1) / 2) ? i / denom : (i - n) / denom;
}

FreqCoords freq_coords(const GridSpec& grid) {
    grid.validate();
    FreqCoords fc;
    for (int d = 0; d < 3; ++d) {
        fc.axis[d].resize(grid.dims[d]);
        for (int i = 0; i < grid.dims[d]; ++i)
            fc.axis[d][i] = freq_bin(i, grid.dims[d], grid.voxel[d]);
    }
    return fc;
}

namespace {

// FFTW plans are cached per (dims, direction). Planning is not thread-safe;
// new-array execution is. Plans are created FFTW_UNALIGNED so they run on
// plain vector storage.
struct PlanCache {
    std::mutex mutex;
    std::map<std::tuple<int, int, int, int>, fftw_plan> plans;

    fftw_plan get(const GridSpec& g, int sign) {
        std::lock_guard<std::mutex> lock(mutex);
        auto key = std::make_tuple(g.dims[0], g.dims[1], g.dims[2], sign);
        auto it = plans.find(key);
        if (it != plans.end()) return it->second;
        std::vector<std::complex<double>> dummy(static_cast<std::size_t>(g.count()));
        // x-fastest layout means FFTW's row-major dims are (nz, ny, nx).
        fftw_plan p = fftw_plan_dft_3d(
            g.dims[2], g.dims[1], g.dims[0],
            reinterpret_cast<fftw_complex*>(dummy.data()),
            reinterpret_cast<fftw_complex*>(dummy.data()),
            sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans.emplace(key, p);
        return p;
    }
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

void execute(const GridSpec& g, int sign, std::complex<double>* in,
             std::complex<double>* out) {
    fftw_plan p = plan_cache().get(g, sign);
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in),
                     reinterpret_cast<fftw_complex*>(out));
}

} // namespace

Spectrum3D fft_forward(const Volume3D& vol) {
    vol.grid.validate();
    const std::int64_t n = vol.grid.count();
    std::vector<std::complex<double>> in(static_cast<std::size_t>(n));
    parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) in[t] = vol.data[t];
    });
    Spectrum3D out(vol.grid);
    execute(vol.grid, FFTW_FORWARD, in.data(), out.data.data());
    return out;
}

namespace detail {

double hermitian_defect(const Spectrum3D& spec) {
    const auto& g = spec.grid;
    double worst = 0.0;
    for (int k = 0; k < g.dims[2]; ++k) {
        const int km = k == 0 ? 0 : g.dims[2] - k;
        for (int j = 0; j < g.dims[1]; ++j) {
            const int jm = j == 0 ? 0 : g.dims[1] - j;
            for (int i = 0; i < g.dims[0]; ++i) {
                const int im = i == 0 ? 0 : g.dims[0] - i;
                const std::complex<double> d =
                    spec.at(i, j, k) - std::conj(spec.at(im, jm, km));
                worst = std::max(worst, std::abs(d));
            }
        }
    }
    return worst;
}

Volume3D ifft_real_part(const Spectrum3D& spec) {
    spec.grid.validate();
    const std::int64_t n = spec.grid.count();
    std::vector<std::complex<double>> in(spec.data);
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n));
    execute(spec.grid, FFTW_BACKWARD, in.data(), out.data());
    Volume3D vol(spec.grid);
    const double scale = 1.0 / static_cast<double>(n);
    parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) vol.data[t] = out[t].real() * scale;
    });
    return vol;
}

} // namespace detail

Volume3D fft_inverse(const Spectrum3D& spec) {
    spec.grid.validate();
    double peak = 0.0;
    for (const auto& c : spec.data) peak = std::max(peak, std::abs(c));
    const double defect = detail::hermitian_defect(spec);
    if (peak > 0.0 && defect > 1e-6 * peak)
        throw NonHermitianSpectrum("spectrum is not conjugate-symmetric (defect " +
                                   std::to_string(defect) + ", peak " +
                                   std::to_string(peak) + ")");
    return detail::ifft_real_part(spec);
}

} // namespace qsm
