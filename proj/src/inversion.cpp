#include "qsm/inversion.hpp"

#include <cmath>
#include <string>

#include "qsm/parallel.hpp"

namespace qsm {

Volume3D tkd_invert(const Volume3D& field, const DipoleKernel& kernel,
                    const TkdConfig& cfg) {
    require_same_grid(field.grid, kernel.grid, "tkd_invert");
    if (!(cfg.t > 0.0) || !(cfg.t <= 1.0 / 3.0))
        throw ConfigError("tkd threshold must lie in (0, 1/3], got " +
                          std::to_string(cfg.t));
    Spectrum3D spec = fft_forward(field);
    const std::int64_t n = field.grid.count();
    parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) {
            const double d = kernel.values[t];
            if (std::abs(d) >= cfg.t) {
                spec.data[t] /= d;
            } else if (cfg.zero_fill) {
                spec.data[t] = 0.0;
            } else {
                const double s = d < 0.0 ? -1.0 : 1.0;
                spec.data[t] /= cfg.t * s;
            }
        }
    });
    return fft_inverse(spec);
}

namespace detail {

Volume3D cosmos_normal_solve(const OrientationSet& set, double damping) {
    if (set.items.empty()) throw EmptyDataset("cosmos: no orientations given");
    if (damping < 0.0) throw ConfigError("cosmos damping must be >= 0");
    const GridSpec grid = set.items.front().second.grid;
    for (const auto& [orient, field] : set.items)
        require_same_grid(grid, field.grid, "cosmos_invert");

    const std::int64_t n = grid.count();
    std::vector<double> denom(static_cast<std::size_t>(n), damping);
    std::vector<std::complex<double>> numer(static_cast<std::size_t>(n));
    for (const auto& [orient, field] : set.items) {
        const DipoleKernel ker = dipole_kernel(grid, orient);
        const Spectrum3D spec = fft_forward(field);
        parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t t = b; t < e; ++t) {
                numer[t] += ker.values[t] * spec.data[t];
                denom[t] += ker.values[t] * ker.values[t];
            }
        });
    }
    Spectrum3D chi_spec(grid);
    parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t)
            chi_spec.data[t] = denom[t] < 1e-12 ? 0.0 : numer[t] / denom[t];
    });
    return fft_inverse(chi_spec);
}

} // namespace detail

Volume3D cosmos_invert(const OrientationSet& set, double damping) {
    if (set.items.size() < 3)
        throw InsufficientOrientations("cosmos needs >= 3 orientations, got " +
                                       std::to_string(set.items.size()));
    for (std::size_t a = 0; a < set.items.size(); ++a)
        for (std::size_t b = a + 1; b < set.items.size(); ++b) {
            const double d = std::abs(set.items[a].first.dot(set.items[b].first));
            if (d >= 1.0 - 1e-6)
                throw DegenerateOrientations(
                    "cosmos orientations " + std::to_string(a) + " and " +
                    std::to_string(b) + " are collinear (|dot| = " + std::to_string(d) + ")");
        }
    return detail::cosmos_normal_solve(set, damping);
}

} // namespace qsm
