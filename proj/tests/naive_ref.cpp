#include "naive_ref.hpp"

#include <cmath>
#include <cstdlib>

namespace naive {

using std::complex;

std::vector<complex<double>> dft_forward(const qsm::Volume3D& vol) {
    const auto [nx, ny, nz] = vol.grid.dims;
    const std::int64_t n = vol.grid.count();
    std::vector<complex<double>> out(static_cast<std::size_t>(n));
    for (int kz = 0; kz < nz; ++kz)
        for (int ky = 0; ky < ny; ++ky)
            for (int kx = 0; kx < nx; ++kx) {
                complex<double> acc = 0.0;
                for (int z = 0; z < nz; ++z)
                    for (int y = 0; y < ny; ++y)
                        for (int x = 0; x < nx; ++x) {
                            const double ph = -2.0 * M_PI *
                                (double(kx) * x / nx + double(ky) * y / ny +
                                 double(kz) * z / nz);
                            acc += vol.data[vol.grid.index(x, y, z)] *
                                   complex<double>(std::cos(ph), std::sin(ph));
                        }
                out[vol.grid.index(kx, ky, kz)] = acc;
            }
    return out;
}

std::vector<complex<double>> dft_inverse(const qsm::Spectrum3D& spec) {
    const auto [nx, ny, nz] = spec.grid.dims;
    const std::int64_t n = spec.grid.count();
    std::vector<complex<double>> out(static_cast<std::size_t>(n));
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                complex<double> acc = 0.0;
                for (int kz = 0; kz < nz; ++kz)
                    for (int ky = 0; ky < ny; ++ky)
                        for (int kx = 0; kx < nx; ++kx) {
                            const double ph = 2.0 * M_PI *
                                (double(kx) * x / nx + double(ky) * y / ny +
                                 double(kz) * z / nz);
                            acc += spec.data[spec.grid.index(kx, ky, kz)] *
                                   complex<double>(std::cos(ph), std::sin(ph));
                        }
                out[spec.grid.index(x, y, z)] = acc / double(n);
            }
    return out;
}

std::vector<double> dipole(const qsm::GridSpec& grid, const qsm::Orientation& b) {
    const auto [nx, ny, nz] = grid.dims;
    std::vector<double> out(static_cast<std::size_t>(grid.count()));
    for (int kz = 0; kz < nz; ++kz)
        for (int ky = 0; ky < ny; ++ky)
            for (int kx = 0; kx < nx; ++kx) {
                const double fx = qsm::freq_bin(kx, nx, grid.voxel[0]);
                const double fy = qsm::freq_bin(ky, ny, grid.voxel[1]);
                const double fz = qsm::freq_bin(kz, nz, grid.voxel[2]);
                const double k2 = fx * fx + fy * fy + fz * fz;
                double d = 0.0;
                if (k2 > 0.0) {
                    const double kb = fx * b.b[0] + fy * b.b[1] + fz * b.b[2];
                    d = 1.0 / 3.0 - kb * kb / k2;
                }
                out[grid.index(kx, ky, kz)] = d;
            }
    return out;
}

std::vector<double> forward_field(const qsm::Volume3D& chi, const qsm::Orientation& b) {
    const auto spec = dft_forward(chi);
    const auto d = dipole(chi.grid, b);
    qsm::Spectrum3D s;
    s.grid = chi.grid;
    s.data.resize(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) s.data[i] = spec[i] * d[i];
    const auto back = dft_inverse(s);
    std::vector<double> out(back.size());
    for (std::size_t i = 0; i < back.size(); ++i) out[i] = back[i].real();
    return out;
}

std::vector<double> weight_mask(const std::vector<double>& d_ref, double tau) {
    std::vector<double> out(d_ref.size());
    for (std::size_t i = 0; i < d_ref.size(); ++i)
        out[i] = std::exp(-d_ref[i] * d_ref[i] / (tau * tau));
    return out;
}

double loss_inr_value(const std::vector<std::vector<double>>& d_hat,
                      const std::vector<std::vector<double>>& d_ref,
                      const std::vector<double>& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d_hat.size(); ++i)
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double e = w[k] * (d_hat[i][k] - d_ref[i][k]);
            acc += e * e;
        }
    return acc;
}

double loss_fill_value(const std::vector<std::vector<double>>& d_hat,
                       const std::vector<double>& w, double eps) {
    double acc = 0.0;
    const double m = double(d_hat.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
        double dbar = 0.0;
        for (const auto& dk : d_hat) dbar += std::abs(dk[k]);
        dbar /= m;
        const double h = eps - dbar;
        if (h > 0.0) acc += w[k] * h * h;
    }
    return acc;
}

double loss_dc_value(const qsm::Volume3D& field, const qsm::Volume3D& chi_hat,
                     const std::vector<std::vector<double>>& d_hat,
                     const std::vector<double>& w) {
    const auto f = dft_forward(field);
    const auto c = dft_forward(chi_hat);
    double acc = 0.0;
    for (const auto& dk : d_hat)
        for (std::size_t k = 0; k < w.size(); ++k) {
            const complex<double> r = f[k] - dk[k] * c[k];
            acc += w[k] * w[k] * std::norm(r);
        }
    return acc;
}

double recon_loss_value(const qsm::Volume3D& chi_hat, const qsm::Volume3D& chi_label,
                        const qsm::Orientation& b, const qsm::HyperParams& hp) {
    const auto fh = forward_field(chi_hat, b);
    const auto fl = forward_field(chi_label, b);
    double model = 0.0;
    for (std::size_t i = 0; i < fh.size(); ++i) model += std::abs(fh[i] - fl[i]);
    double voxel = 0.0;
    for (std::size_t i = 0; i < fh.size(); ++i)
        voxel += std::abs(chi_hat.data[i] - chi_label.data[i]);
    const auto [nx, ny, nz] = chi_hat.grid.dims;
    double grad = 0.0;
    const auto diff = [&](const qsm::Volume3D& v, int x, int y, int z, int axis) {
        const int xx = x + (axis == 0), yy = y + (axis == 1), zz = z + (axis == 2);
        if (xx >= nx || yy >= ny || zz >= nz) return 0.0;
        return v.data[v.grid.index(xx, yy, zz)] - v.data[v.grid.index(x, y, z)];
    };
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                for (int a = 0; a < 3; ++a)
                    grad += std::abs(diff(chi_hat, x, y, z, a) -
                                     diff(chi_label, x, y, z, a));
    return hp.w_model * model + hp.w_voxel * voxel + hp.w_grad * grad;
}

double fd_max_rel_err(const std::function<double(const std::vector<double>&)>& f,
                      const std::vector<double>& params,
                      const std::vector<double>& grad, double step, double floor) {
    double worst = 0.0;
    std::vector<double> p = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        p[i] = params[i] + step;
        const double hi = f(p);
        p[i] = params[i] - step;
        const double lo = f(p);
        p[i] = params[i];
        const double g_fd = (hi - lo) / (2.0 * step);
        const double scale = std::max(floor, std::abs(g_fd) + std::abs(grad[i]));
        worst = std::max(worst, std::abs(g_fd - grad[i]) / scale);
    }
    return worst;
}

double sphere_field_periodic(double px, double py, double pz, double R,
                             double dchi, const std::array<double, 3>& box) {
    double s = 0.0;
    for (int nz = -1; nz <= 1; ++nz)
        for (int ny = -1; ny <= 1; ++ny)
            for (int nx = -1; nx <= 1; ++nx) {
                const double dx = px - nx * box[0];
                const double dy = py - ny * box[1];
                const double dz = pz - nz * box[2];
                const double r2 = dx * dx + dy * dy + dz * dz;
                s += (3.0 * dz * dz / r2 - 1.0) / (r2 * std::sqrt(r2));
            }
    return dchi / 3.0 * R * R * R * s;
}

std::vector<double> convolve_cube(const qsm::Volume3D& v,
                                  const std::vector<double>& taps, int radius) {
    const auto [nx, ny, nz] = v.grid.dims;
    const int side = 2 * radius + 1;
    std::vector<double> out(v.data.size(), 0.0);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                double acc = 0.0;
                for (int dz = -radius; dz <= radius; ++dz)
                    for (int dy = -radius; dy <= radius; ++dy)
                        for (int dx = -radius; dx <= radius; ++dx) {
                            const int xx = x + dx, yy = y + dy, zz = z + dz;
                            if (xx < 0 || xx >= nx || yy < 0 || yy >= ny || zz < 0 ||
                                zz >= nz)
                                continue;
                            const std::size_t wi = static_cast<std::size_t>(
                                ((dz + radius) * side + (dy + radius)) * side +
                                (dx + radius));
                            acc += taps[wi] * v.data[v.grid.index(xx, yy, zz)];
                        }
                out[v.grid.index(x, y, z)] = acc;
            }
    return out;
}

std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& in,
                                 const qsm::GridSpec& g, int radius) {
    const auto [nx, ny, nz] = g.dims;
    std::vector<std::uint8_t> out(in.size(), 0);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                bool hit = false;
                for (int dz = -radius; dz <= radius && !hit; ++dz)
                    for (int dy = -radius; dy <= radius && !hit; ++dy)
                        for (int dx = -radius; dx <= radius && !hit; ++dx) {
                            const int xx = x + dx, yy = y + dy, zz = z + dz;
                            if (xx < 0 || xx >= nx || yy < 0 || yy >= ny || zz < 0 ||
                                zz >= nz)
                                continue;
                            if (in[g.index(xx, yy, zz)]) hit = true;
                        }
                out[g.index(x, y, z)] = hit ? 1 : 0;
            }
    return out;
}

std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& in,
                                const qsm::GridSpec& g, int radius) {
    const auto [nx, ny, nz] = g.dims;
    std::vector<std::uint8_t> out(in.size(), 0);
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                bool all = true;
                for (int dz = -radius; dz <= radius && all; ++dz)
                    for (int dy = -radius; dy <= radius && all; ++dy)
                        for (int dx = -radius; dx <= radius && all; ++dx) {
                            const int xx = x + dx, yy = y + dy, zz = z + dz;
                            if (xx < 0 || xx >= nx || yy < 0 || yy >= ny || zz < 0 ||
                                zz >= nz || !in[g.index(xx, yy, zz)])
                                all = false;
                        }
                out[g.index(x, y, z)] = all ? 1 : 0;
            }
    return out;
}

} // namespace naive
