#pragma once

// Slow, obviously-correct reference implementations the tests hold the
// optimized library against. Everything here is plain loops over the
// mathematical definitions; nothing shares code with src/.

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include <qsm/dipole.hpp>
#include <qsm/grid.hpp>
#include <qsm/losses.hpp>

namespace naive {

// Unnormalized forward DFT, O(N^2). Output x-fastest like Spectrum3D.
std::vector<std::complex<double>> dft_forward(const qsm::Volume3D& vol);

// 1/N inverse DFT of a full complex spectrum.
std::vector<std::complex<double>> dft_inverse(const qsm::Spectrum3D& spec);

// Eq.-style dipole kernel straight from the frequency vectors.
std::vector<double> dipole(const qsm::GridSpec& grid, const qsm::Orientation& b);

// forward field = ifft(D . fft(chi)).real via the naive transforms.
std::vector<double> forward_field(const qsm::Volume3D& chi, const qsm::Orientation& b);

// exp(-D^2/tau^2) per bin.
std::vector<double> weight_mask(const std::vector<double>& d_ref, double tau);

// The three dipole-loss pieces as plain loops. Layouts match the library
// (vector per kernel, x-fastest bins).
double loss_inr_value(const std::vector<std::vector<double>>& d_hat,
                      const std::vector<std::vector<double>>& d_ref,
                      const std::vector<double>& w);
double loss_fill_value(const std::vector<std::vector<double>>& d_hat,
                       const std::vector<double>& w, double eps);
double loss_dc_value(const qsm::Volume3D& field, const qsm::Volume3D& chi_hat,
                     const std::vector<std::vector<double>>& d_hat,
                     const std::vector<double>& w);
// Reconstructor supervision with naive transforms and forward differences.
double recon_loss_value(const qsm::Volume3D& chi_hat, const qsm::Volume3D& chi_label,
                        const qsm::Orientation& b, const qsm::HyperParams& hp);

// Central-difference gradient check. f evaluates the objective at a parameter
// vector; grad is the analytic gradient at params. Returns the max relative
// error, where each component's scale is max(|g_fd| + |g_an|, floor).
double fd_max_rel_err(const std::function<double(const std::vector<double>&)>& f,
                      const std::vector<double>& params,
                      const std::vector<double>& grad, double step,
                      double floor = 1e-6);

// Dipole pattern of the periodized sphere lattice: (dchi/3) R^3 times the
// image sum of (3cos^2 theta - 1)/r^3 over the 27 nearest lattice copies.
double sphere_field_periodic(double px, double py, double pz, double R,
                             double dchi, const std::array<double, 3>& box);

// Dense zero-padded cube convolution, seven loops, no tricks.
std::vector<double> convolve_cube(const qsm::Volume3D& v,
                                  const std::vector<double>& taps, int radius);

// Chebyshev-ball morphology by brute force.
std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& in,
                                 const qsm::GridSpec& g, int radius);
std::vector<std::uint8_t> erode(const std::vector<std::uint8_t>& in,
                                const qsm::GridSpec& g, int radius);

} // namespace naive
