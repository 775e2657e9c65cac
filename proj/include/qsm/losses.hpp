#pragma once

#include <vector>

#include "qsm/dipole.hpp"
#include "qsm/grid.hpp"

namespace qsm {

struct HyperParams {
    double tau = 0.15;     // weighting-mask decay
    double eps = 0.1;      // cone-fill floor
    double lambda = 1.0;   // dipole-loss multiplier in the total loss
    double w_model = 0.4;
    double w_grad = 0.1;
    double w_dipole = 0.3; // sweep alias of lambda; the two multiply
    double w_voxel = 0.2;
    double t_tkd = 0.2;
    double t_cone = 0.2;
    int m_orientations = 0; // 0 = derive from the training data

    // Multiplier actually applied to L_dipole inside the total loss.
    double lambda_eff() const { return lambda * w_dipole; }
    void validate() const;
};

// Frequency weighting concentrating losses on the cone: exp(-D_ref^2/tau^2).
// Equals 1 exactly where D_ref = 0 and decreases strictly in |D_ref|.
struct WeightMask {
    GridSpec grid;
    std::vector<double> values;
};

WeightMask weight_mask(const DipoleKernel& d_ref, double tau);

// Value plus gradients w.r.t. each predicted kernel's values.
struct KernelGrads {
    double value = 0.0;
    std::vector<std::vector<double>> d_kernels;
};

// sum_i sum_k (W (Dhat_i - D_i))^2; gradient 2 W^2 (Dhat_i - D_i).
KernelGrads loss_inr(const std::vector<DipoleKernel>& d_hat,
                     const std::vector<DipoleKernel>& d_ref, const WeightMask& w);

// Cone-fill hinge on the averaged magnitude response Dbar = mean_i |Dhat_i|:
// sum_k W [max(0, eps - Dbar)]^2 (the weighting enters once here, unsquared).
// Subgradient of |.| at 0 is 0.
KernelGrads loss_fill(const std::vector<DipoleKernel>& d_hat, const WeightMask& w,
                      double eps);

struct DcResult {
    double value = 0.0;
    Volume3D d_chi;
    std::vector<std::vector<double>> d_kernels;
};

// Data consistency: residual R_i = F{field} - Dhat_i . F{chi_hat}, value
// sum_i sum_k W^2 |R_i|^2. The one observed field is held against every
// kernel, exactly as written.
DcResult loss_dc(const Volume3D& field, const Volume3D& chi_hat,
                 const std::vector<DipoleKernel>& d_hat, const WeightMask& w);

namespace detail {
// Spectrum-level core; field_specs holds either one spectrum shared across
// all kernels or one per kernel (the physically consistent variant).
DcResult loss_dc_spectra(const std::vector<const Spectrum3D*>& field_specs,
                         const Spectrum3D& chi_spec,
                         const std::vector<DipoleKernel>& d_hat, const WeightMask& w);
} // namespace detail

struct DipoleResult {
    double value = 0.0;
    std::vector<std::vector<double>> d_kernels;
    Volume3D d_chi;
};

// Plain sum of the three components; gradients add.
DipoleResult loss_dipole(const KernelGrads& inr, const KernelGrads& fill,
                         const DcResult& dc);

struct ReconLoss {
    double value = 0.0;
    Volume3D d_chi;
};

// Supervision for the reconstructor: w_model L1 of the forward-field mismatch
// + w_voxel L1 of the voxel mismatch + w_grad L1 of the forward-difference
// gradient mismatch. Subgradient of L1 at 0 is 0.
ReconLoss recon_supervision_loss(const Volume3D& chi_hat, const Volume3D& chi_label,
                                 const DipoleKernel& kernel, const HyperParams& hp);

namespace detail {
// Same loss with the label's forward field precomputed by the caller.
ReconLoss recon_supervision_loss_cached(const Volume3D& chi_hat,
                                        const Volume3D& chi_label,
                                        const Volume3D& label_field,
                                        const DipoleKernel& kernel,
                                        const HyperParams& hp);
} // namespace detail

double loss_total(double l_recon, double l_dipole, double lambda);

} // namespace qsm
