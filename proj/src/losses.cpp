#include "qsm/losses.hpp"

#include <cmath>
#include <string>

#include "qsm/parallel.hpp"

namespace qsm {

namespace {

constexpr std::int64_t kGrain = 1 << 15;

double sign0(double x) {
    if (x > 0.0) return 1.0;
    if (x < 0.0) return -1.0;
    return 0.0;
}

void check_kernel_list(const std::vector<DipoleKernel>& kernels, const GridSpec& grid,
                       const char* what) {
    if (kernels.empty()) throw EmptyDataset(std::string(what) + ": empty kernel list");
    for (const auto& k : kernels) require_same_grid(grid, k.grid, what);
}

} // namespace

void HyperParams::validate() const {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (w_model < 0.0 || w_grad < 0.0 || w_dipole < 0.0 || w_voxel < 0.0)
        throw ConfigError("loss weights must be >= 0");
    if (!(w_model + w_grad + w_dipole + w_voxel > 0.0))
        throw ConfigError("loss weights must not all be zero");
    if (!(t_tkd > 0.0) || !(t_tkd <= 1.0 / 3.0))
        throw ConfigError("t_tkd must lie in (0, 1/3]");
    if (!(t_cone > 0.0) || !(t_cone < 1.0 / 3.0))
        throw ConfigError("t_cone must lie in (0, 1/3)");
    if (m_orientations < 0) throw ConfigError("m_orientations must be >= 0");
}

WeightMask weight_mask(const DipoleKernel& d_ref, double tau) {
    if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
    WeightMask w;
    w.grid = d_ref.grid;
    w.values.resize(d_ref.values.size());
    const double inv_t2 = 1.0 / (tau * tau);
    const std::int64_t n = static_cast<std::int64_t>(d_ref.values.size());
    parallel_for(n, kGrain, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) {
            const double d = d_ref.values[t];
            w.values[t] = std::exp(-d * d * inv_t2);
        }
    });
    return w;
}

KernelGrads loss_inr(const std::vector<DipoleKernel>& d_hat,
                     const std::vector<DipoleKernel>& d_ref, const WeightMask& w) {
    check_kernel_list(d_hat, w.grid, "loss_inr");
    check_kernel_list(d_ref, w.grid, "loss_inr");
    if (d_hat.size() != d_ref.size())
        throw GridMismatch("loss_inr: predicted and reference kernel counts differ");
    KernelGrads out;
    out.d_kernels.resize(d_hat.size());
    const std::int64_t n = w.grid.count();
    for (std::size_t i = 0; i < d_hat.size(); ++i) {
        auto& grad = out.d_kernels[i];
        grad.resize(static_cast<std::size_t>(n));
        out.value += parallel_sum(n, kGrain, [&](std::int64_t b, std::int64_t e) {
            double s = 0.0;
            for (std::int64_t t = b; t < e; ++t) {
                const double wk = w.values[t];
                const double r = d_hat[i].values[t] - d_ref[i].values[t];
                const double wr = wk * r;
                s += wr * wr;
                grad[t] = 2.0 * wk * wk * r;
            }
            return s;
        });
    }
    return out;
}

KernelGrads loss_fill(const std::vector<DipoleKernel>& d_hat, const WeightMask& w,
                      double eps) {
    if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
    check_kernel_list(d_hat, w.grid, "loss_fill");
    const std::int64_t n = w.grid.count();
    const double inv_m = 1.0 / static_cast<double>(d_hat.size());
    KernelGrads out;
    out.d_kernels.assign(d_hat.size(),
                         std::vector<double>(static_cast<std::size_t>(n), 0.0));
    out.value = parallel_sum(n, kGrain, [&](std::int64_t b, std::int64_t e) {
        double s = 0.0;
        for (std::int64_t t = b; t < e; ++t) {
            double dbar = 0.0;
            for (const auto& k : d_hat) dbar += std::abs(k.values[t]);
            dbar *= inv_m;
            const double h = eps - dbar;
            if (h <= 0.0) continue;
            const double wk = w.values[t];
            s += wk * h * h;
            for (std::size_t i = 0; i < d_hat.size(); ++i)
                out.d_kernels[i][t] = -2.0 * wk * h * sign0(d_hat[i].values[t]) * inv_m;
        }
        return s;
    });
    return out;
}

namespace detail {

DcResult loss_dc_spectra(const std::vector<const Spectrum3D*>& field_specs,
                         const Spectrum3D& chi_spec,
                         const std::vector<DipoleKernel>& d_hat, const WeightMask& w) {
    check_kernel_list(d_hat, w.grid, "loss_dc");
    require_same_grid(chi_spec.grid, w.grid, "loss_dc");
    if (field_specs.size() != 1 && field_specs.size() != d_hat.size())
        throw GridMismatch("loss_dc: field count must be 1 or match the kernel count");
    for (const auto* f : field_specs) require_same_grid(f->grid, w.grid, "loss_dc");

    const std::int64_t n = w.grid.count();
    DcResult out;
    out.d_kernels.resize(d_hat.size());
    // z accumulates sum_i W^2 Dhat_i R_i, whose inverse transform's real part
    // carries the chi gradient.
    std::vector<std::complex<double>> z(static_cast<std::size_t>(n), 0.0);
    for (std::size_t i = 0; i < d_hat.size(); ++i) {
        const Spectrum3D& bspec =
            *field_specs[field_specs.size() == 1 ? 0 : i];
        auto& grad = out.d_kernels[i];
        grad.resize(static_cast<std::size_t>(n));
        out.value += parallel_sum(n, kGrain, [&](std::int64_t b, std::int64_t e) {
            double s = 0.0;
            for (std::int64_t t = b; t < e; ++t) {
                const double wk = w.values[t];
                const double w2 = wk * wk;
                const std::complex<double> r =
                    bspec.data[t] - d_hat[i].values[t] * chi_spec.data[t];
                s += w2 * std::norm(r);
                grad[t] = -2.0 * w2 * (std::conj(chi_spec.data[t]) * r).real();
                z[t] += w2 * d_hat[i].values[t] * r;
            }
            return s;
        });
    }
    Spectrum3D zspec;
    zspec.grid = w.grid;
    zspec.data = std::move(z);
    out.d_chi = detail::ifft_real_part(zspec);
    const double scale = -2.0 * static_cast<double>(n);
    parallel_for(n, kGrain, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) out.d_chi.data[t] *= scale;
    });
    return out;
}

} // namespace detail

DcResult loss_dc(const Volume3D& field, const Volume3D& chi_hat,
                 const std::vector<DipoleKernel>& d_hat, const WeightMask& w) {
    require_same_grid(field.grid, w.grid, "loss_dc");
    require_same_grid(chi_hat.grid, w.grid, "loss_dc");
    const Spectrum3D bspec = fft_forward(field);
    const Spectrum3D sspec = fft_forward(chi_hat);
    return detail::loss_dc_spectra({&bspec}, sspec, d_hat, w);
}

DipoleResult loss_dipole(const KernelGrads& inr, const KernelGrads& fill,
                         const DcResult& dc) {
    if (inr.d_kernels.size() != fill.d_kernels.size() ||
        inr.d_kernels.size() != dc.d_kernels.size())
        throw GridMismatch("loss_dipole: component kernel counts differ");
    DipoleResult out;
    out.value = inr.value + fill.value + dc.value;
    out.d_chi = dc.d_chi;
    out.d_kernels.resize(inr.d_kernels.size());
    for (std::size_t i = 0; i < out.d_kernels.size(); ++i) {
        const std::int64_t n = static_cast<std::int64_t>(inr.d_kernels[i].size());
        out.d_kernels[i].resize(static_cast<std::size_t>(n));
        parallel_for(n, kGrain, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t t = b; t < e; ++t)
                out.d_kernels[i][t] = inr.d_kernels[i][t] + fill.d_kernels[i][t] +
                                      dc.d_kernels[i][t];
        });
    }
    return out;
}

namespace {

// Forward difference g_j = x_{j+1} - x_j along one axis, zero at the last
// index.
struct AxisStride {
    std::int64_t stride;
    int extent;
};

AxisStride axis_stride(const GridSpec& g, int axis) {
    switch (axis) {
        case 0: return {1, g.dims[0]};
        case 1: return {g.dims[0], g.dims[1]};
        default:
            return {static_cast<std::int64_t>(g.dims[0]) * g.dims[1], g.dims[2]};
    }
}

int axis_pos(const GridSpec& g, std::int64_t flat, int axis) {
    switch (axis) {
        case 0: return static_cast<int>(flat % g.dims[0]);
        case 1: return static_cast<int>((flat / g.dims[0]) % g.dims[1]);
        default: return static_cast<int>(flat / (static_cast<std::int64_t>(g.dims[0]) * g.dims[1]));
    }
}

} // namespace

namespace detail {

ReconLoss recon_supervision_loss_cached(const Volume3D& chi_hat,
                                        const Volume3D& chi_label,
                                        const Volume3D& label_field,
                                        const DipoleKernel& kernel,
                                        const HyperParams& hp) {
    require_same_grid(chi_hat.grid, chi_label.grid, "recon_supervision_loss");
    require_same_grid(chi_hat.grid, kernel.grid, "recon_supervision_loss");
    require_same_grid(chi_hat.grid, label_field.grid, "recon_supervision_loss");
    hp.validate();
    const GridSpec& g = chi_hat.grid;
    const std::int64_t n = g.count();

    ReconLoss out;
    out.d_chi = Volume3D(g);

    // Model term through the self-adjoint forward operator.
    const Volume3D f_hat = forward_field(chi_hat, kernel);
    Volume3D sgn(g);
    out.value += hp.w_model * parallel_sum(n, kGrain, [&](std::int64_t b, std::int64_t e) {
        double s = 0.0;
        for (std::int64_t t = b; t < e; ++t) {
            const double r = f_hat.data[t] - label_field.data[t];
            s += std::abs(r);
            sgn.data[t] = sign0(r);
        }
        return s;
    });
    if (hp.w_model != 0.0) {
        const Volume3D back = forward_field(sgn, kernel);
        parallel_for(n, kGrain, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t t = b; t < e; ++t)
                out.d_chi.data[t] += hp.w_model * back.data[t];
        });
    }

    // Voxel term.
    out.value += hp.w_voxel * parallel_sum(n, kGrain, [&](std::int64_t b, std::int64_t e) {
        double s = 0.0;
        for (std::int64_t t = b; t < e; ++t) {
            const double r = chi_hat.data[t] - chi_label.data[t];
            s += std::abs(r);
            out.d_chi.data[t] += hp.w_voxel * sign0(r);
        }
        return s;
    });

    // Gradient term, one axis at a time.
    for (int axis = 0; axis < 3; ++axis) {
        const AxisStride as = axis_stride(g, axis);
        std::vector<double> s_axis(static_cast<std::size_t>(n), 0.0);
        out.value += hp.w_grad * parallel_sum(n, kGrain, [&](std::int64_t b, std::int64_t e) {
            double s = 0.0;
            for (std::int64_t t = b; t < e; ++t) {
                if (axis_pos(g, t, axis) >= as.extent - 1) continue;
                const double gh = chi_hat.data[t + as.stride] - chi_hat.data[t];
                const double gl = chi_label.data[t + as.stride] - chi_label.data[t];
                const double r = gh - gl;
                s += std::abs(r);
                s_axis[t] = sign0(r);
            }
            return s;
        });
        if (hp.w_grad != 0.0) {
            parallel_for(n, kGrain, [&](std::int64_t b, std::int64_t e) {
                for (std::int64_t t = b; t < e; ++t) {
                    const int p = axis_pos(g, t, axis);
                    double adj = 0.0;
                    if (p >= 1) adj += s_axis[t - as.stride];
                    if (p <= as.extent - 2) adj -= s_axis[t];
                    out.d_chi.data[t] += hp.w_grad * adj;
                }
            });
        }
    }
    return out;
}

} // namespace detail

ReconLoss recon_supervision_loss(const Volume3D& chi_hat, const Volume3D& chi_label,
                                 const DipoleKernel& kernel, const HyperParams& hp) {
    require_same_grid(chi_label.grid, kernel.grid, "recon_supervision_loss");
    const Volume3D label_field = forward_field(chi_label, kernel);
    return detail::recon_supervision_loss_cached(chi_hat, chi_label, label_field,
                                                 kernel, hp);
}

double loss_total(double l_recon, double l_dipole, double lambda) {
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    return l_recon + lambda * l_dipole;
}

} // namespace qsm
