#include "qsm/dipole.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "qsm/parallel.hpp"

namespace qsm {

Orientation::Orientation(const std::array<double, 3>& v) : b(v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (std::abs(n - 1.0) > 1e-12)
        throw ConfigError("orientation must be unit length, |b| = " + std::to_string(n));
}

Orientation Orientation::normalized(double x, double y, double z) {
    const double n = std::sqrt(x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n))
        throw ConfigError("orientation vector must be nonzero and finite");
    Orientation o;
    o.b = {x / n, y / n, z / n};
    return o;
}

double angle_deg(const Orientation& a, const Orientation& b) {
    double c = a.dot(b);
    c = std::max(-1.0, std::min(1.0, c));
    return std::acos(c) * 180.0 / M_PI;
}

DipoleKernel dipole_kernel(const GridSpec& grid, const Orientation& orient) {
    grid.validate();
    const FreqCoords fc = freq_coords(grid);
    DipoleKernel ker;
    ker.grid = grid;
    ker.orient = orient;
    ker.values.resize(static_cast<std::size_t>(grid.count()));
    const auto& b = orient.b;
    const std::int64_t plane = static_cast<std::int64_t>(grid.dims[0]) * grid.dims[1];
    parallel_for(grid.dims[2], 1, [&](std::int64_t kb, std::int64_t ke) {
        for (std::int64_t k = kb; k < ke; ++k) {
            const double fz = fc.axis[2][k];
            double* row = ker.values.data() + k * plane;
            for (int j = 0; j < grid.dims[1]; ++j) {
                const double fy = fc.axis[1][j];
                for (int i = 0; i < grid.dims[0]; ++i) {
                    const double fx = fc.axis[0][i];
                    const double k2 = fx * fx + fy * fy + fz * fz;
                    if (k2 == 0.0) {
                        row[static_cast<std::int64_t>(j) * grid.dims[0] + i] = 0.0;
                        continue;
                    }
                    const double kb_ = fx * b[0] + fy * b[1] + fz * b[2];
                    row[static_cast<std::int64_t>(j) * grid.dims[0] + i] =
                        1.0 / 3.0 - (kb_ * kb_) / k2;
                }
            }
        }
    });
    return ker;
}

namespace {

using KernelKey = std::tuple<int, int, int, std::int64_t, std::int64_t, std::int64_t,
                             std::int64_t, std::int64_t, std::int64_t>;

KernelKey make_key(const GridSpec& g, const Orientation& o) {
    auto q = [](double x) { return static_cast<std::int64_t>(std::llround(x * 1e9)); };
    return {g.dims[0], g.dims[1], g.dims[2], q(g.voxel[0]), q(g.voxel[1]), q(g.voxel[2]),
            q(o.b[0]), q(o.b[1]), q(o.b[2])};
}

struct KernelCache {
    std::mutex mutex;
    std::map<KernelKey, std::shared_ptr<const DipoleKernel>> entries;
};

KernelCache& kernel_cache() {
    static KernelCache cache;
    return cache;
}

} // namespace

std::shared_ptr<const DipoleKernel> dipole_kernel_cached(const GridSpec& grid,
                                                         const Orientation& orient) {
    auto& cache = kernel_cache();
    const KernelKey key = make_key(grid, orient);
    {
        std::lock_guard<std::mutex> lock(cache.mutex);
        auto it = cache.entries.find(key);
        if (it != cache.entries.end()) return it->second;
    }
    auto ker = std::make_shared<const DipoleKernel>(dipole_kernel(grid, orient));
    std::lock_guard<std::mutex> lock(cache.mutex);
    auto [it, inserted] = cache.entries.emplace(key, ker);
    return it->second;
}

std::int64_t ConeMask::count_set() const {
    std::int64_t n = 0;
    for (auto f : flags) n += f ? 1 : 0;
    return n;
}

ConeMask cone_mask(const DipoleKernel& kernel, double t) {
    if (!(t > 0.0) || !(t < 1.0 / 3.0))
        throw ConfigError("cone threshold must lie in (0, 1/3), got " + std::to_string(t));
    ConeMask m;
    m.grid = kernel.grid;
    m.threshold = t;
    m.flags.resize(kernel.values.size());
    for (std::size_t idx = 0; idx < kernel.values.size(); ++idx)
        m.flags[idx] = std::abs(kernel.values[idx]) < t ? 1 : 0;
    return m;
}

namespace detail {

Spectrum3D apply_kernel(const Spectrum3D& chi_spec, const DipoleKernel& kernel) {
    require_same_grid(chi_spec.grid, kernel.grid, "apply_kernel");
    Spectrum3D out(chi_spec.grid);
    const std::int64_t n = chi_spec.grid.count();
    parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t)
            out.data[t] = chi_spec.data[t] * kernel.values[t];
    });
    return out;
}

} // namespace detail

Volume3D forward_field(const Volume3D& chi, const DipoleKernel& kernel) {
    require_same_grid(chi.grid, kernel.grid, "forward_field");
    return fft_inverse(detail::apply_kernel(fft_forward(chi), kernel));
}

} // namespace qsm
