#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qsm/dipole.hpp"
#include "qsm/grid.hpp"

namespace qsm {

struct SirenSpec {
    int depth = 5;       // total layers, sinusoidal hidden stack plus linear head
    int width = 128;
    double omega0 = 30.0;
    int in_dim = 6;      // (r_x, r_y, r_z, b_x, b_y, b_z)
    int out_dim = 1;

    void validate() const;
    bool operator==(const SirenSpec&) const = default;
};

// Rows of (r, b) with r in [-1,1]^3, b unit. Plain matrix; validate_coords
// enforces the invariants where batches enter the net.
using CoordBatch = Eigen::MatrixXd;

// Centered normalized coordinate of index i among n samples: 2i/n - 1 + 1/n.
double index_coord(int i, int n);
// Exact inverse of index_coord.
int coord_index(double r, int n);
// DC-to-center reordering applied before index_coord so the kernel's cone is
// contiguous in coordinate space.
int fftshift_index(int i, int n);

// One row per k-space bin of the grid (x fastest), coordinates fftshifted.
CoordBatch kernel_coords(const GridSpec& grid, const Orientation& orient);

// Sinusoidal MLP: h_l = sin(omega0 * (W_l h_{l-1} + b_l)) for hidden layers,
// affine head with no activation. Gradients are hand-derived reverse mode.
class SirenNet {
public:
    SirenNet() = default;
    SirenNet(const SirenSpec& spec, std::uint64_t seed);

    const SirenSpec& spec() const { return spec_; }

    // Evaluates the batch (rows x in_dim) and caches pre-activations for
    // backward. Returns rows x out_dim.
    Eigen::MatrixXd forward(const CoordBatch& batch);

    // Contracts cached activations with dloss_dout (rows x out_dim),
    // accumulating into the gradient buffers. Throws MissingForwardCache if
    // no forward cache matches.
    void backward(const Eigen::MatrixXd& dloss_dout);

    void zero_grad();
    void drop_cache();

    std::int64_t param_count() const;
    // Flat layout: per layer, W row-major then b.
    void read_params(std::vector<double>& out) const;
    void write_params(const std::vector<double>& in); // invalidates the cache
    void read_grads(std::vector<double>& out) const;

    const Eigen::MatrixXd& layer_weight(int l) const { return w_[l]; }
    const Eigen::VectorXd& layer_bias(int l) const { return b_[l]; }
    Eigen::MatrixXd& mutable_layer_weight(int l) { drop_cache(); return w_[l]; }
    Eigen::VectorXd& mutable_layer_bias(int l) { drop_cache(); return b_[l]; }

private:
    SirenSpec spec_;
    std::vector<Eigen::MatrixXd> w_;   // out x in
    std::vector<Eigen::VectorXd> b_;
    std::vector<Eigen::MatrixXd> gw_;
    std::vector<Eigen::VectorXd> gb_;
    // Cache: input batch and per-hidden-layer pre-activations. Hidden
    // activations are recomputed in backward, trading a cheap sin pass for
    // halved cache memory.
    Eigen::MatrixXd in_cache_;
    std::vector<Eigen::MatrixXd> pre_cache_;
    bool cache_valid_ = false;
};

void validate_coords(const CoordBatch& batch);

// Evaluates the net at every bin of the grid for one orientation. This is
// the INR's D-hat; raw network output, no range clamp.
DipoleKernel synthesize_kernel(SirenNet& net, const GridSpec& grid,
                               const Orientation& orient);

void save_siren(const SirenNet& net, const std::string& path);
SirenNet load_siren(const std::string& path);

} // namespace qsm
