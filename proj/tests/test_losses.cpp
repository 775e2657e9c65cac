#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <qsm/dipole.hpp>
#include <qsm/grid.hpp>
#include <qsm/losses.hpp>

#include "naive_ref.hpp"

using namespace qsm;

namespace {

const GridSpec kGrid4{{4, 4, 4}, {1.0, 1.0, 1.0}};
const GridSpec kGrid6{{6, 6, 6}, {1.0, 1.0, 1.0}};

DipoleKernel kernel_like(const GridSpec& g, std::vector<double> values) {
    DipoleKernel k;
    k.grid = g;
    k.orient = Orientation::normalized(0.0, 0.0, 1.0);
    k.values = std::move(values);
    return k;
}

DipoleKernel random_kernel(const GridSpec& g, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> n(0.0, scale);
    std::vector<double> v(static_cast<std::size_t>(g.count()));
    for (auto& x : v) x = n(eng);
    return kernel_like(g, std::move(v));
}

Volume3D random_volume(const GridSpec& g, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Volume3D v(g);
    for (auto& x : v.data) x = n(eng);
    return v;
}

WeightMask ones_mask(const GridSpec& g) {
    WeightMask w;
    w.grid = g;
    w.values.assign(static_cast<std::size_t>(g.count()), 1.0);
    return w;
}

WeightMask random_mask(const GridSpec& g, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    WeightMask w;
    w.grid = g;
    w.values.resize(static_cast<std::size_t>(g.count()));
    for (auto& x : w.values) x = u(eng);
    return w;
}

std::vector<std::vector<double>> value_lists(const std::vector<DipoleKernel>& ks) {
    std::vector<std::vector<double>> out;
    for (const auto& k : ks) out.push_back(k.values);
    return out;
}

} // namespace

TEST_CASE("weight mask pins: one on the cone, 1/e at tau, tiny at the rim") {
    const DipoleKernel d = dipole_kernel(kGrid6, Orientation::normalized(0, 0, 1));
    const double tau = 0.15;
    const WeightMask w = weight_mask(d, tau);
    REQUIRE(w.values.size() == d.values.size());
    for (std::size_t t = 0; t < d.values.size(); ++t) {
        if (d.values[t] == 0.0) CHECK(w.values[t] == 1.0);
        CHECK(w.values[t] ==
              doctest::Approx(std::exp(-d.values[t] * d.values[t] / (tau * tau)))
                  .epsilon(1e-14));
    }
    // Synthetic bins for the two analytic anchors.
    const DipoleKernel probe = kernel_like(kGrid4, [] {
        std::vector<double> v(64, 0.0);
        v[1] = 0.15;
        v[2] = -0.15;
        v[3] = 1.0 / 3.0;
        return v;
    }());
    const WeightMask wp = weight_mask(probe, tau);
    CHECK(wp.values[0] == 1.0);
    CHECK(wp.values[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(wp.values[2] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(wp.values[3] == doctest::Approx(7.1767e-3).epsilon(1e-4));
    CHECK_THROWS_AS(weight_mask(probe, 0.0), ConfigError);
    CHECK_THROWS_AS(weight_mask(probe, -0.1), ConfigError);
}

TEST_CASE("weight mask matches the naive formula and tightens with tau") {
    const DipoleKernel d = dipole_kernel(kGrid6, Orientation::normalized(0.3, 0.4, 0.8660254037844386));
    const auto ref = naive::weight_mask(d.values, 0.15);
    const WeightMask w = weight_mask(d, 0.15);
    for (std::size_t t = 0; t < ref.size(); ++t)
        CHECK(w.values[t] == doctest::Approx(ref[t]).epsilon(1e-15));

    // Smaller tau concentrates the weighting: pointwise <=, strict off-cone.
    const WeightMask w30 = weight_mask(d, 0.30);
    const WeightMask w15 = weight_mask(d, 0.15);
    const WeightMask w05 = weight_mask(d, 0.05);
    bool strict = false;
    for (std::size_t t = 0; t < w30.values.size(); ++t) {
        CHECK(w15.values[t] <= w30.values[t]);
        CHECK(w05.values[t] <= w15.values[t]);
        if (d.values[t] != 0.0 && w05.values[t] < w15.values[t]) strict = true;
    }
    CHECK(strict);
}

TEST_CASE("loss_inr: single-bin pin and gradient formula") {
    std::vector<double> base(64, 0.0);
    auto d_ref = kernel_like(kGrid4, base);
    base[5] = 0.5;
    auto d_hat = kernel_like(kGrid4, base);
    const WeightMask w = ones_mask(kGrid4);
    const KernelGrads out = loss_inr({d_hat}, {d_ref}, w);
    CHECK(out.value == doctest::Approx(0.25).epsilon(1e-15));
    REQUIRE(out.d_kernels.size() == 1);
    for (std::size_t t = 0; t < 64; ++t)
        CHECK(out.d_kernels[0][t] == (t == 5 ? 1.0 : 0.0));
}

TEST_CASE("loss_inr agrees with the naive loops") {
    std::vector<DipoleKernel> d_hat{random_kernel(kGrid6, 1, 0.3), random_kernel(kGrid6, 2, 0.3)};
    std::vector<DipoleKernel> d_ref{random_kernel(kGrid6, 3, 0.3), random_kernel(kGrid6, 4, 0.3)};
    const WeightMask w = random_mask(kGrid6, 5);
    const KernelGrads out = loss_inr(d_hat, d_ref, w);
    const double ref = naive::loss_inr_value(value_lists(d_hat), value_lists(d_ref), w.values);
    CHECK(out.value == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("loss_inr gradient passes central differences") {
    std::vector<DipoleKernel> d_hat{random_kernel(kGrid4, 11, 0.3), random_kernel(kGrid4, 12, 0.3)};
    const std::vector<DipoleKernel> d_ref{random_kernel(kGrid4, 13, 0.3),
                                          random_kernel(kGrid4, 14, 0.3)};
    const WeightMask w = random_mask(kGrid4, 15);
    const KernelGrads out = loss_inr(d_hat, d_ref, w);

    std::vector<double> params, grad;
    for (const auto& k : d_hat) params.insert(params.end(), k.values.begin(), k.values.end());
    for (const auto& g : out.d_kernels) grad.insert(grad.end(), g.begin(), g.end());
    const auto f = [&](const std::vector<double>& p) {
        std::vector<DipoleKernel> ks = d_hat;
        std::size_t off = 0;
        for (auto& k : ks) {
            std::copy(p.begin() + off, p.begin() + off + k.values.size(), k.values.begin());
            off += k.values.size();
        }
        return loss_inr(ks, d_ref, w).value;
    };
    CHECK(naive::fd_max_rel_err(f, params, grad, 1e-6) < 1e-6);
}

TEST_CASE("loss_inr input checking") {
    const WeightMask w = ones_mask(kGrid4);
    const std::vector<DipoleKernel> one{random_kernel(kGrid4, 21)};
    const std::vector<DipoleKernel> two{random_kernel(kGrid4, 22), random_kernel(kGrid4, 23)};
    CHECK_THROWS_AS(loss_inr({}, one, w), EmptyDataset);
    CHECK_THROWS_AS(loss_inr(one, two, w), GridMismatch);
    CHECK_THROWS_AS(loss_inr({random_kernel(kGrid6, 24)}, {random_kernel(kGrid6, 25)}, w),
                    GridMismatch);
}

TEST_CASE("loss_fill: hinge pin, flat spots, and the averaged magnitude") {
    // Every bin far above the floor contributes nothing.
    std::vector<double> big(64, 1.0);
    big[7] = 0.0;
    const WeightMask w = ones_mask(kGrid4);
    const KernelGrads at_zero = loss_fill({kernel_like(kGrid4, big)}, w, 0.1);
    CHECK(at_zero.value == doctest::Approx(0.01).epsilon(1e-15));
    // |.| has subgradient 0 at 0, so the minimum sits on a flat spot.
    for (std::size_t t = 0; t < 64; ++t) CHECK(at_zero.d_kernels[0][t] == 0.0);

    big[7] = 0.05;
    const KernelGrads inside = loss_fill({kernel_like(kGrid4, big)}, w, 0.1);
    CHECK(inside.value == doctest::Approx(0.0025).epsilon(1e-15));
    CHECK(inside.d_kernels[0][7] == doctest::Approx(-0.1).epsilon(1e-15));

    big[7] = -0.05; // magnitude response: sign flips the gradient only
    const KernelGrads neg = loss_fill({kernel_like(kGrid4, big)}, w, 0.1);
    CHECK(neg.value == doctest::Approx(0.0025).epsilon(1e-15));
    CHECK(neg.d_kernels[0][7] == doctest::Approx(0.1).epsilon(1e-15));

    // Two kernels: Dbar averages the magnitudes, gradients split by 1/M.
    std::vector<double> a(64, 1.0), b(64, 1.0);
    a[3] = 0.02;
    b[3] = 0.04;
    const KernelGrads two =
        loss_fill({kernel_like(kGrid4, a), kernel_like(kGrid4, b)}, w, 0.1);
    const double h = 0.1 - 0.03;
    CHECK(two.value == doctest::Approx(h * h).epsilon(1e-12));
    CHECK(two.d_kernels[0][3] == doctest::Approx(-h).epsilon(1e-12));
    CHECK(two.d_kernels[1][3] == doctest::Approx(-h).epsilon(1e-12));

    CHECK_THROWS_AS(loss_fill({kernel_like(kGrid4, a)}, w, 0.0), ConfigError);
    CHECK_THROWS_AS(loss_fill({}, w, 0.1), EmptyDataset);
}

TEST_CASE("loss_fill agrees with the naive loops") {
    // Scale 0.05 keeps plenty of bins under the floor.
    std::vector<DipoleKernel> d_hat{random_kernel(kGrid6, 31, 0.05),
                                    random_kernel(kGrid6, 32, 0.05)};
    const WeightMask w = random_mask(kGrid6, 33);
    const KernelGrads out = loss_fill(d_hat, w, 0.1);
    CHECK(out.value > 0.0);
    const double ref = naive::loss_fill_value(value_lists(d_hat), w.values, 0.1);
    CHECK(out.value == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("loss_fill gradient passes central differences away from the hinge") {
    // Keep |Dbar - eps| and |values| comfortably above the FD step.
    std::mt19937_64 eng(41);
    std::uniform_real_distribution<double> mag(0.01, 0.2);
    std::bernoulli_distribution coin;
    std::vector<double> v(216);
    for (auto& x : v) {
        double m = mag(eng);
        if (std::abs(m - 0.1) < 2e-3) m += 5e-3;
        x = coin(eng) ? m : -m;
    }
    std::vector<DipoleKernel> d_hat{kernel_like(kGrid6, v)};
    const WeightMask w = random_mask(kGrid6, 42);
    const KernelGrads out = loss_fill(d_hat, w, 0.1);
    const auto f = [&](const std::vector<double>& p) {
        return loss_fill({kernel_like(kGrid6, p)}, w, 0.1).value;
    };
    CHECK(naive::fd_max_rel_err(f, d_hat[0].values, out.d_kernels[0], 1e-6) < 1e-6);
}

TEST_CASE("loss_dc vanishes on a consistent field/kernel/source triple") {
    const Orientation b = Orientation::normalized(0, 0, 1);
    const DipoleKernel d = dipole_kernel(kGrid6, b);
    const Volume3D chi = random_volume(kGrid6, 51);
    const Volume3D field = forward_field(chi, b);
    const WeightMask w = weight_mask(d, 0.15);
    const DcResult out = loss_dc(field, chi, {d}, w);
    CHECK(out.value >= 0.0);
    CHECK(out.value < 1e-18);
}

TEST_CASE("loss_dc at chi=0 reduces to the weighted field energy") {
    const Volume3D field = random_volume(kGrid6, 52);
    const Volume3D zero(kGrid6);
    const DipoleKernel d = dipole_kernel(kGrid6, Orientation::normalized(0, 0, 1));
    const WeightMask w = random_mask(kGrid6, 53);
    const DcResult out = loss_dc(field, zero, {d, d}, w);
    const auto spec = naive::dft_forward(field);
    double expect = 0.0;
    for (std::size_t t = 0; t < spec.size(); ++t)
        expect += 2.0 * w.values[t] * w.values[t] * std::norm(spec[t]);
    CHECK(out.value == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loss_dc agrees with the naive loops") {
    const Volume3D field = random_volume(kGrid6, 54);
    const Volume3D chi = random_volume(kGrid6, 55);
    std::vector<DipoleKernel> d_hat{random_kernel(kGrid6, 56, 0.2), random_kernel(kGrid6, 57, 0.2)};
    const WeightMask w = random_mask(kGrid6, 58);
    const DcResult out = loss_dc(field, chi, d_hat, w);
    const double ref = naive::loss_dc_value(field, chi, value_lists(d_hat), w.values);
    CHECK(out.value == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("loss_dc gradients pass central differences") {
    const Volume3D field = random_volume(kGrid4, 61);
    Volume3D chi = random_volume(kGrid4, 62);
    std::vector<DipoleKernel> d_hat{random_kernel(kGrid4, 63, 0.2), random_kernel(kGrid4, 64, 0.2)};
    const WeightMask w = random_mask(kGrid4, 65);
    const DcResult out = loss_dc(field, chi, d_hat, w);

    SUBCASE("w.r.t. the kernels") {
        std::vector<double> params, grad;
        for (const auto& k : d_hat) params.insert(params.end(), k.values.begin(), k.values.end());
        for (const auto& g : out.d_kernels) grad.insert(grad.end(), g.begin(), g.end());
        const auto f = [&](const std::vector<double>& p) {
            std::vector<DipoleKernel> ks = d_hat;
            std::size_t off = 0;
            for (auto& k : ks) {
                std::copy(p.begin() + off, p.begin() + off + k.values.size(), k.values.begin());
                off += k.values.size();
            }
            return loss_dc(field, chi, ks, w).value;
        };
        CHECK(naive::fd_max_rel_err(f, params, grad, 1e-6) < 1e-6);
    }
    SUBCASE("w.r.t. the source volume") {
        const auto f = [&](const std::vector<double>& p) {
            Volume3D c = chi;
            c.data = p;
            return loss_dc(field, c, d_hat, w).value;
        };
        CHECK(naive::fd_max_rel_err(f, chi.data, out.d_chi.data, 1e-6) < 1e-6);
    }
}

TEST_CASE("loss_dc_spectra holds one field per kernel when given one each") {
    const Orientation b1 = Orientation::normalized(0, 0, 1);
    const Orientation b2 = Orientation::normalized(1, 0, 0);
    const DipoleKernel d1 = dipole_kernel(kGrid6, b1);
    const DipoleKernel d2 = dipole_kernel(kGrid6, b2);
    const Volume3D chi = random_volume(kGrid6, 71);
    const Spectrum3D f1 = fft_forward(forward_field(chi, b1));
    const Spectrum3D f2 = fft_forward(forward_field(chi, b2));
    const Spectrum3D cs = fft_forward(chi);
    const WeightMask w = weight_mask(d1, 0.15);

    // Each residual is consistent with its own kernel: the loss vanishes.
    const DcResult both = detail::loss_dc_spectra({&f1, &f2}, cs, {d1, d2}, w);
    CHECK(both.value < 1e-18);

    // A single shared field against both kernels does not.
    const DcResult shared = detail::loss_dc_spectra({&f1}, cs, {d1, d2}, w);
    CHECK(shared.value > 1e-6);

    // And the per-kernel total is the sum of the individual losses.
    const DcResult a = detail::loss_dc_spectra({&f1}, cs, {d1}, w);
    const DcResult bprime = detail::loss_dc_spectra({&f2}, cs, {d2}, w);
    const DcResult mixed = detail::loss_dc_spectra({&f2, &f1}, cs, {d1, d2}, w);
    const DcResult x1 = detail::loss_dc_spectra({&f2}, cs, {d1}, w);
    const DcResult x2 = detail::loss_dc_spectra({&f1}, cs, {d2}, w);
    CHECK(mixed.value == doctest::Approx(x1.value + x2.value).epsilon(1e-12));
    CHECK(a.value < 1e-18);
    CHECK(bprime.value < 1e-18);
    for (std::size_t t = 0; t < mixed.d_chi.data.size(); ++t)
        CHECK(mixed.d_chi.data[t] ==
              doctest::Approx(x1.d_chi.data[t] + x2.d_chi.data[t]).epsilon(1e-10));

    CHECK_THROWS_AS(detail::loss_dc_spectra({&f1, &f2}, cs, {d1, d2, d1}, w), GridMismatch);
}

TEST_CASE("loss_dipole sums values and gradients componentwise") {
    KernelGrads inr;
    inr.value = 0.2;
    inr.d_kernels = {{1.0, 2.0}, {3.0, 4.0}};
    KernelGrads fill;
    fill.value = 0.05;
    fill.d_kernels = {{0.5, 0.5}, {-1.0, 0.0}};
    DcResult dc;
    dc.value = 1.1;
    dc.d_kernels = {{0.0, 1.0}, {1.0, -2.0}};
    dc.d_chi = Volume3D(kGrid4);
    dc.d_chi.data[9] = 4.5;

    const DipoleResult out = loss_dipole(inr, fill, dc);
    CHECK(out.value == doctest::Approx(1.35).epsilon(1e-15));
    CHECK(out.d_kernels[0][0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(out.d_kernels[1][1] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(out.d_chi.data[9] == 4.5);

    KernelGrads narrow;
    narrow.value = 0.0;
    narrow.d_kernels = {{0.0, 0.0}};
    CHECK_THROWS_AS(loss_dipole(narrow, fill, dc), GridMismatch);
}

TEST_CASE("loss_total is affine in the dipole term") {
    CHECK(loss_total(1.0, 2.0, 0.3) == doctest::Approx(1.6).epsilon(1e-15));
    CHECK(loss_total(0.7, 5.0, 0.0) == 0.7);
    CHECK_THROWS_AS(loss_total(1.0, 1.0, -0.1), ConfigError);
}

TEST_CASE("hyperparameter validation and the effective dipole multiplier") {
    HyperParams hp;
    CHECK_NOTHROW(hp.validate());
    CHECK(hp.tau == 0.15);
    CHECK(hp.eps == 0.1);
    CHECK(hp.lambda == 1.0);
    CHECK(hp.w_model == 0.4);
    CHECK(hp.w_grad == 0.1);
    CHECK(hp.w_dipole == 0.3);
    CHECK(hp.w_voxel == 0.2);
    CHECK(hp.t_tkd == 0.2);
    CHECK(hp.t_cone == 0.2);
    CHECK(hp.m_orientations == 0);
    CHECK(hp.lambda_eff() == doctest::Approx(0.3).epsilon(1e-15));

    auto bad = hp;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = hp;
    bad.eps = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = hp;
    bad.lambda = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = hp;
    bad.w_model = -0.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = hp;
    bad.w_model = bad.w_grad = bad.w_dipole = bad.w_voxel = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = hp;
    bad.t_tkd = 0.34;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = hp;
    bad.t_tkd = 1.0 / 3.0;
    CHECK_NOTHROW(bad.validate());
    bad = hp;
    bad.t_cone = 1.0 / 3.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = hp;
    bad.m_orientations = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("recon supervision: constant offset hits only the voxel term") {
    const Orientation b = Orientation::normalized(0, 0, 1);
    const DipoleKernel d = dipole_kernel(kGrid6, b);
    const Volume3D label = random_volume(kGrid6, 81);
    Volume3D hat = label;
    for (auto& x : hat.data) x += 0.25;
    HyperParams hp;
    const ReconLoss out = recon_supervision_loss(hat, label, d, hp);
    // The forward operator kills constants (zero DC response) and a constant
    // has zero forward differences, so only w_voxel * sum |c| remains.
    const double expect = hp.w_voxel * 0.25 * static_cast<double>(kGrid6.count());
    CHECK(out.value == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("recon supervision matches the naive loops") {
    const Orientation b = Orientation::normalized(0.2, -0.3, 0.9327379053088816);
    const DipoleKernel d = dipole_kernel(kGrid6, b);
    const Volume3D label = random_volume(kGrid6, 82);
    const Volume3D hat = random_volume(kGrid6, 83);
    HyperParams hp;
    const ReconLoss out = recon_supervision_loss(hat, label, d, hp);
    const double ref = naive::recon_loss_value(hat, label, b, hp);
    CHECK(out.value == doctest::Approx(ref).epsilon(1e-12));
    // Zero at the perfect reconstruction.
    const ReconLoss zero = recon_supervision_loss(label, label, d, hp);
    CHECK(zero.value == 0.0);
}

TEST_CASE("recon supervision gradient passes central differences") {
    const Orientation b = Orientation::normalized(0, 0, 1);
    const DipoleKernel d = dipole_kernel(kGrid4, b);
    const Volume3D label = random_volume(kGrid4, 84);
    Volume3D hat = random_volume(kGrid4, 85);
    HyperParams hp;
    const ReconLoss out = recon_supervision_loss(hat, label, d, hp);
    const auto f = [&](const std::vector<double>& p) {
        Volume3D h = hat;
        h.data = p;
        return recon_supervision_loss(h, label, d, hp).value;
    };
    // L1 terms: exact away from kinks, and this seed sits away from them.
    CHECK(naive::fd_max_rel_err(f, hat.data, out.d_chi.data, 1e-7) < 1e-4);
}

TEST_CASE("recon supervision cached variant matches the wrapper") {
    const Orientation b = Orientation::normalized(0, 1, 0);
    const DipoleKernel d = dipole_kernel(kGrid4, b);
    const Volume3D label = random_volume(kGrid4, 86);
    const Volume3D hat = random_volume(kGrid4, 87);
    const Volume3D label_field = forward_field(label, d);
    HyperParams hp;
    const ReconLoss a = recon_supervision_loss(hat, label, d, hp);
    const ReconLoss c = detail::recon_supervision_loss_cached(hat, label, label_field, d, hp);
    CHECK(a.value == c.value);
    CHECK(a.d_chi.data == c.d_chi.data);
}

TEST_CASE("recon supervision respects the term weights") {
    const Orientation b = Orientation::normalized(0, 0, 1);
    const DipoleKernel d = dipole_kernel(kGrid4, b);
    const Volume3D label = random_volume(kGrid4, 88);
    const Volume3D hat = random_volume(kGrid4, 89);
    HyperParams hp;
    hp.w_model = 0.0;
    hp.w_grad = 0.0;
    hp.w_voxel = 1.0;
    const ReconLoss vox = recon_supervision_loss(hat, label, d, hp);
    double l1 = 0.0;
    for (std::size_t t = 0; t < hat.data.size(); ++t)
        l1 += std::abs(hat.data[t] - label.data[t]);
    CHECK(vox.value == doctest::Approx(l1).epsilon(1e-13));

    // Doubling one weight moves the total by exactly that term.
    HyperParams hp1;
    HyperParams hp2 = hp1;
    hp2.w_model *= 2.0;
    const double v1 = recon_supervision_loss(hat, label, d, hp1).value;
    const double v2 = recon_supervision_loss(hat, label, d, hp2).value;
    HyperParams only_model;
    only_model.w_model = hp1.w_model;
    only_model.w_grad = 0.0;
    only_model.w_voxel = 0.0;
    only_model.w_dipole = hp1.w_dipole;
    const double vm = recon_supervision_loss(hat, label, d, only_model).value;
    CHECK(v2 - v1 == doctest::Approx(vm).epsilon(1e-10));
}
