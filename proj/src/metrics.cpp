#include "qsm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "qsm/errors.hpp"
#include "qsm/parallel.hpp"
#include "qsm/phantom.hpp"

namespace qsm {

namespace {

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr int kLogRadius = 7;
constexpr double kLogSigma = 1.5;

VoxelMask full_mask(const GridSpec& grid) {
    VoxelMask m;
    m.grid = grid;
    m.flags.assign(static_cast<std::size_t>(grid.count()), 1);
    return m;
}

VoxelMask resolve_mask(const Volume3D& ref, const VoxelMask* mask) {
    if (!mask) return full_mask(ref.grid);
    require_same_grid(ref.grid, mask->grid, "metrics");
    return *mask;
}

struct MaskedStats {
    double mse = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t n = 0;
};

MaskedStats masked_mse_range(const Volume3D& x, const Volume3D& ref, const VoxelMask& m) {
    MaskedStats st;
    st.lo = std::numeric_limits<double>::infinity();
    st.hi = -std::numeric_limits<double>::infinity();
    double se = 0.0;
    const std::int64_t n = ref.grid.count();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!m.flags[static_cast<std::size_t>(i)]) continue;
        const double d = x.data[static_cast<std::size_t>(i)] -
                         ref.data[static_cast<std::size_t>(i)];
        se += d * d;
        st.lo = std::min(st.lo, ref.data[static_cast<std::size_t>(i)]);
        st.hi = std::max(st.hi, ref.data[static_cast<std::size_t>(i)]);
        ++st.n;
    }
    if (st.n == 0) throw ConfigError("metrics: empty evaluation mask");
    st.mse = se / static_cast<double>(st.n);
    return st;
}

// Gaussian window of the given radius, normalized to unit sum.
std::vector<double> gaussian_window(double sigma, int radius) {
    const int side = 2 * radius + 1;
    std::vector<double> w(static_cast<std::size_t>(side) * side * side);
    double total = 0.0;
    std::size_t idx = 0;
    for (int dz = -radius; dz <= radius; ++dz)
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                const double r2 = static_cast<double>(dx * dx + dy * dy + dz * dz);
                const double g = std::exp(-r2 / (2.0 * sigma * sigma));
                w[idx++] = g;
                total += g;
            }
    for (double& v : w) v /= total;
    return w;
}

} // namespace

double nrmse(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask) {
    require_same_grid(x.grid, ref.grid, "nrmse");
    const VoxelMask m = resolve_mask(ref, mask);
    double num = 0.0, den = 0.0;
    const std::int64_t n = ref.grid.count();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!m.flags[static_cast<std::size_t>(i)]) continue;
        const double r = ref.data[static_cast<std::size_t>(i)];
        const double d = x.data[static_cast<std::size_t>(i)] - r;
        num += d * d;
        den += r * r;
    }
    if (den == 0.0) throw ZeroReference("nrmse: reference is zero inside the mask");
    return std::sqrt(num / den);
}

double psnr(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask) {
    require_same_grid(x.grid, ref.grid, "psnr");
    const VoxelMask m = resolve_mask(ref, mask);
    const MaskedStats st = masked_mse_range(x, ref, m);
    if (st.mse == 0.0) return std::numeric_limits<double>::infinity();
    const double peak = st.hi - st.lo;
    return 10.0 * std::log10(peak * peak / st.mse);
}

double ssim(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask) {
    require_same_grid(x.grid, ref.grid, "ssim");
    const VoxelMask m = resolve_mask(ref, mask);
    const MaskedStats st = masked_mse_range(x, ref, m);
    if (st.mse == 0.0) return 1.0;

    const double lrange = st.hi - st.lo;
    const double c1 = (kK1 * lrange) * (kK1 * lrange);
    const double c2 = (kK2 * lrange) * (kK2 * lrange);
    const std::vector<double> w = gaussian_window(kSsimSigma, kSsimRadius);

    const VoxelMask centers = erode_mask(m, kSsimRadius);
    const std::int64_t nc = centers.count_set();
    if (nc == 0) throw ConfigError("ssim: mask too thin for the 11^3 window");

    const auto [nx, ny, nz] = ref.grid.dims;
    const int side = 2 * kSsimRadius + 1;
    const double sum = parallel_sum(
        static_cast<std::int64_t>(nz), 1, [&](std::int64_t z0, std::int64_t z1) {
            double acc = 0.0;
            for (std::int64_t z = z0; z < z1; ++z)
                for (std::int64_t y = 0; y < ny; ++y)
                    for (std::int64_t xi = 0; xi < nx; ++xi) {
                        const std::int64_t c = (z * ny + y) * nx + xi;
                        if (!centers.flags[static_cast<std::size_t>(c)]) continue;
                        double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
                        std::size_t wi = 0;
                        for (int dz = -kSsimRadius; dz <= kSsimRadius; ++dz)
                            for (int dy = -kSsimRadius; dy <= kSsimRadius; ++dy) {
                                const std::int64_t base =
                                    ((z + dz) * ny + (y + dy)) * nx + xi - kSsimRadius;
                                for (int dx = 0; dx < side; ++dx, ++wi) {
                                    const double wv = w[wi];
                                    const double a =
                                        x.data[static_cast<std::size_t>(base + dx)];
                                    const double b =
                                        ref.data[static_cast<std::size_t>(base + dx)];
                                    mx += wv * a;
                                    my += wv * b;
                                    sxx += wv * a * a;
                                    syy += wv * b * b;
                                    sxy += wv * a * b;
                                }
                            }
                        const double vx = sxx - mx * mx;
                        const double vy = syy - my * my;
                        const double cxy = sxy - mx * my;
                        const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                        acc += den == 0.0
                                   ? 0.0
                                   : (2.0 * mx * my + c1) * (2.0 * cxy + c2) / den;
                    }
            return acc;
        });
    return sum / static_cast<double>(nc);
}

namespace detail {

std::vector<double> log_filter(double sigma, int radius) {
    const int side = 2 * radius + 1;
    const std::size_t count = static_cast<std::size_t>(side) * side * side;
    std::vector<double> g(count), h(count);
    double gsum = 0.0;
    std::size_t idx = 0;
    for (int dz = -radius; dz <= radius; ++dz)
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                const double r2 = static_cast<double>(dx * dx + dy * dy + dz * dz);
                g[idx++] = std::exp(-r2 / (2.0 * sigma * sigma));
                gsum += g[idx - 1];
            }
    idx = 0;
    double hsum = 0.0;
    for (int dz = -radius; dz <= radius; ++dz)
        for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
                const double r2 = static_cast<double>(dx * dx + dy * dy + dz * dz);
                h[idx] = (r2 - 3.0 * sigma * sigma) / (sigma * sigma * sigma * sigma) *
                         g[idx] / gsum;
                hsum += h[idx];
                ++idx;
            }
    const double mean = hsum / static_cast<double>(count);
    for (double& v : h) v -= mean;
    return h;
}

Volume3D convolve_cube(const Volume3D& v, const std::vector<double>& taps, int radius) {
    const auto [nx, ny, nz] = v.grid.dims;
    const int side = 2 * radius + 1;
    if (taps.size() != static_cast<std::size_t>(side) * side * side)
        throw ConfigError("convolve_cube: tap count does not match the radius");
    Volume3D out;
    out.grid = v.grid;
    out.data.assign(v.data.size(), 0.0);
    parallel_for(static_cast<std::int64_t>(nz), 1, [&](std::int64_t z0, std::int64_t z1) {
        for (std::int64_t z = z0; z < z1; ++z)
            for (std::int64_t y = 0; y < ny; ++y)
                for (std::int64_t xi = 0; xi < nx; ++xi) {
                    double acc = 0.0;
                    std::size_t wi = 0;
                    for (int dz = -radius; dz <= radius; ++dz) {
                        const std::int64_t zz = z + dz;
                        if (zz < 0 || zz >= nz) {
                            wi += static_cast<std::size_t>(side) * side;
                            continue;
                        }
                        for (int dy = -radius; dy <= radius; ++dy) {
                            const std::int64_t yy = y + dy;
                            if (yy < 0 || yy >= ny) {
                                wi += side;
                                continue;
                            }
                            const std::int64_t row = (zz * ny + yy) * nx;
                            for (int dx = -radius; dx <= radius; ++dx, ++wi) {
                                const std::int64_t xx = xi + dx;
                                if (xx < 0 || xx >= nx) continue;
                                acc += taps[wi] *
                                       v.data[static_cast<std::size_t>(row + xx)];
                            }
                        }
                    }
                    out.data[static_cast<std::size_t>((z * ny + y) * nx + xi)] = acc;
                }
    });
    return out;
}

} // namespace detail

double hfen(const Volume3D& x, const Volume3D& ref, const VoxelMask* mask) {
    require_same_grid(x.grid, ref.grid, "hfen");
    const VoxelMask m = resolve_mask(ref, mask);
    const std::vector<double> taps = detail::log_filter(kLogSigma, kLogRadius);
    const Volume3D fx = detail::convolve_cube(x, taps, kLogRadius);
    const Volume3D fr = detail::convolve_cube(ref, taps, kLogRadius);
    const VoxelMask inner = erode_mask(m, kLogRadius);
    double num = 0.0, den = 0.0;
    const std::int64_t n = ref.grid.count();
    for (std::int64_t i = 0; i < n; ++i) {
        if (!inner.flags[static_cast<std::size_t>(i)]) continue;
        const double r = fr.data[static_cast<std::size_t>(i)];
        const double d = fx.data[static_cast<std::size_t>(i)] - r;
        num += d * d;
        den += r * r;
    }
    if (den == 0.0)
        throw ZeroReference("hfen: filtered reference is zero inside the eroded mask");
    return std::sqrt(num / den);
}

MetricsReport metrics_report(const Volume3D& x, const Volume3D& ref,
                             const VoxelMask* mask) {
    const VoxelMask m = resolve_mask(ref, mask);
    MetricsReport r;
    r.hfen = hfen(x, ref, &m);
    r.nrmse = nrmse(x, ref, &m);
    r.ssim = ssim(x, ref, &m);
    r.psnr = psnr(x, ref, &m);
    r.mask_voxels = m.count_set();
    return r;
}

MetricsReport metrics_report_tolerant(const Volume3D& x, const Volume3D& ref,
                                      const VoxelMask* mask) {
    const VoxelMask m = resolve_mask(ref, mask);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    MetricsReport r{nan, nan, nan, nan, m.count_set()};
    try { r.hfen = hfen(x, ref, &m); }
    catch (const ZeroReference&) {} catch (const ConfigError&) {}
    try { r.nrmse = nrmse(x, ref, &m); }
    catch (const ZeroReference&) {} catch (const ConfigError&) {}
    try { r.ssim = ssim(x, ref, &m); }
    catch (const ZeroReference&) {} catch (const ConfigError&) {}
    try { r.psnr = psnr(x, ref, &m); }
    catch (const ZeroReference&) {} catch (const ConfigError&) {}
    return r;
}

std::string metrics_json(const MetricsReport& r) {
    nlohmann::json j;
    j["hfen"] = r.hfen;
    j["nrmse"] = r.nrmse;
    j["ssim"] = r.ssim;
    if (std::isinf(r.psnr))
        j["psnr"] = "inf";
    else
        j["psnr"] = r.psnr;
    j["mask_voxels"] = r.mask_voxels;
    return j.dump();
}

std::string metrics_csv_row(const MetricsReport& r) {
    char buf[256];
    if (std::isinf(r.psnr))
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,inf,%lld", r.hfen, r.nrmse,
                      r.ssim, static_cast<long long>(r.mask_voxels));
    else
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%lld", r.hfen, r.nrmse,
                      r.ssim, r.psnr, static_cast<long long>(r.mask_voxels));
    return std::string(buf);
}

} // namespace qsm
