#pragma once

#include <cstdint>
#include <vector>

#include "qsm/grid.hpp"

namespace qsm {

// Residual 3-layer convolutional stack: 3x3x3 kernels, channels 1->8->8->1,
// leaky rectification (slope 0.1) between layers, zero padding, and a skip
// connection adding the input field to the final layer's output.
class ConvReconstructor {
public:
    ConvReconstructor() = default;
    explicit ConvReconstructor(std::uint64_t seed,
                               const std::vector<int>& channels = {1, 8, 8, 1});

    // chi_hat = field + conv_stack(field); caches activations for backward.
    Volume3D forward(const Volume3D& field);

    // Accumulates parameter gradients for the cached forward. Throws
    // MissingForwardCache without a matching cache.
    void backward(const Volume3D& dloss_dchi);

    void zero_grad();
    void drop_cache();

    int layer_count() const { return static_cast<int>(layers_.size()); }
    std::int64_t param_count() const;
    // Flat layout: per layer, weights [out][in][dz][dy][dx] then biases.
    void read_params(std::vector<double>& out) const;
    void write_params(const std::vector<double>& in);
    void read_grads(std::vector<double>& out) const;

    const std::vector<int>& channels() const { return channels_; }

private:
    struct Layer {
        int in_ch = 0;
        int out_ch = 0;
        std::vector<double> w;
        std::vector<double> b;
        std::vector<double> gw;
        std::vector<double> gb;
    };

    std::vector<int> channels_;
    std::vector<Layer> layers_;

    GridSpec cache_grid_;
    // act_[l]: input tensor of layer l (channel-major); pre_[l]: layer l's
    // pre-activation output, kept for the rectifier derivative.
    std::vector<std::vector<double>> act_;
    std::vector<std::vector<double>> pre_;
    bool cache_valid_ = false;
};

} // namespace qsm
