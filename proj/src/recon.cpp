#include "qsm/recon.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qsm/parallel.hpp"
#include "qsm/rng.hpp"

namespace qsm {

namespace {

constexpr double kSlope = 0.1;
constexpr std::int64_t kSliceGrain = 4;

std::int64_t weight_index(int o, int c, int dz, int dy, int dx, int in_ch) {
    return (((static_cast<std::int64_t>(o) * in_ch + c) * 3 + dz) * 3 + dy) * 3 + dx;
}

// Zero-padded 3x3x3 convolution of a channel-major tensor, written as
// row-wise fused multiply-adds so the inner loops vectorize.
void conv_apply(const GridSpec& g, int in_ch, int out_ch, const std::vector<double>& w,
                const std::vector<double>& b, const double* in, double* out) {
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
    const std::int64_t vol = plane * nz;
    parallel_for(nz, kSliceGrain, [&](std::int64_t k0, std::int64_t k1) {
        for (std::int64_t k = k0; k < k1; ++k)
            for (int o = 0; o < out_ch; ++o)
                for (int j = 0; j < ny; ++j) {
                    double* orow = out + o * vol + k * plane + static_cast<std::int64_t>(j) * nx;
                    std::fill(orow, orow + nx, b[o]);
                    for (int c = 0; c < in_ch; ++c)
                        for (int dz = 0; dz < 3; ++dz) {
                            const std::int64_t ki = k + dz - 1;
                            if (ki < 0 || ki >= nz) continue;
                            for (int dy = 0; dy < 3; ++dy) {
                                const int ji = j + dy - 1;
                                if (ji < 0 || ji >= ny) continue;
                                const double* irow = in + c * vol + ki * plane +
                                                     static_cast<std::int64_t>(ji) * nx;
                                for (int dx = 0; dx < 3; ++dx) {
                                    const double wv = w[weight_index(o, c, dz, dy, dx, in_ch)];
                                    const int sh = dx - 1;
                                    const int i0 = std::max(0, -sh);
                                    const int i1 = nx - std::max(0, sh);
                                    for (int i = i0; i < i1; ++i)
                                        orow[i] += wv * irow[i + sh];
                                }
                            }
                        }
                }
    });
}

// Data gradient of conv_apply: din = correlation of dout with the kernel
// flipped, i.e. offsets negate.
void conv_data_grad(const GridSpec& g, int in_ch, int out_ch, const std::vector<double>& w,
                    const double* dout, double* din) {
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
    const std::int64_t vol = plane * nz;
    std::fill(din, din + static_cast<std::int64_t>(in_ch) * vol, 0.0);
    parallel_for(nz, kSliceGrain, [&](std::int64_t k0, std::int64_t k1) {
        for (std::int64_t k = k0; k < k1; ++k)
            for (int c = 0; c < in_ch; ++c)
                for (int j = 0; j < ny; ++j) {
                    double* drow = din + c * vol + k * plane + static_cast<std::int64_t>(j) * nx;
                    for (int o = 0; o < out_ch; ++o)
                        for (int dz = 0; dz < 3; ++dz) {
                            const std::int64_t ko = k - (dz - 1);
                            if (ko < 0 || ko >= nz) continue;
                            for (int dy = 0; dy < 3; ++dy) {
                                const int jo = j - (dy - 1);
                                if (jo < 0 || jo >= ny) continue;
                                const double* orow = dout + o * vol + ko * plane +
                                                     static_cast<std::int64_t>(jo) * nx;
                                for (int dx = 0; dx < 3; ++dx) {
                                    const double wv = w[weight_index(o, c, dz, dy, dx, in_ch)];
                                    const int sh = dx - 1;
                                    const int i0 = std::max(0, sh);
                                    const int i1 = nx + std::min(0, sh);
                                    for (int i = i0; i < i1; ++i)
                                        drow[i] += wv * orow[i - sh];
                                }
                            }
                        }
                }
    });
}

// gw[o][c][d] += sum_v dout(o,v) in(c, v+d); reduced over fixed slice chunks
// combined in order.
void conv_weight_grad(const GridSpec& g, int in_ch, int out_ch, const double* in,
                      const double* dout, std::vector<double>& gw, std::vector<double>& gb) {
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    const std::int64_t plane = static_cast<std::int64_t>(nx) * ny;
    const std::int64_t vol = plane * nz;
    const std::int64_t chunks = chunk_count(nz, kSliceGrain);
    const std::size_t wsize = static_cast<std::size_t>(out_ch) * in_ch * 27;
    std::vector<std::vector<double>> pw(static_cast<std::size_t>(chunks),
                                        std::vector<double>(wsize, 0.0));
    std::vector<std::vector<double>> pb(static_cast<std::size_t>(chunks),
                                        std::vector<double>(out_ch, 0.0));
    parallel_for(chunks, 1, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t ch = c0; ch < c1; ++ch) {
            auto& lw = pw[ch];
            auto& lb = pb[ch];
            const std::int64_t kminimum = ch * kSliceGrain;
            const std::int64_t kmax = std::min<std::int64_t>(nz, kminimum + kSliceGrain);
            for (std::int64_t k = kminimum; k < kmax; ++k)
                for (int o = 0; o < out_ch; ++o)
                    for (int j = 0; j < ny; ++j) {
                        const double* orow = dout + o * vol + k * plane +
                                             static_cast<std::int64_t>(j) * nx;
                        for (int i = 0; i < nx; ++i) lb[o] += orow[i];
                        for (int c = 0; c < in_ch; ++c)
                            for (int dz = 0; dz < 3; ++dz) {
                                const std::int64_t ki = k + dz - 1;
                                if (ki < 0 || ki >= nz) continue;
                                for (int dy = 0; dy < 3; ++dy) {
                                    const int ji = j + dy - 1;
                                    if (ji < 0 || ji >= ny) continue;
                                    const double* irow = in + c * vol + ki * plane +
                                                         static_cast<std::int64_t>(ji) * nx;
                                    for (int dx = 0; dx < 3; ++dx) {
                                        const int sh = dx - 1;
                                        const int i0 = std::max(0, -sh);
                                        const int i1 = nx - std::max(0, sh);
                                        double acc = 0.0;
                                        for (int i = i0; i < i1; ++i)
                                            acc += orow[i] * irow[i + sh];
                                        lw[weight_index(o, c, dz, dy, dx, in_ch)] += acc;
                                    }
                                }
                            }
                    }
        }
    });
    for (std::int64_t ch = 0; ch < chunks; ++ch) {
        for (std::size_t t = 0; t < wsize; ++t) gw[t] += pw[ch][t];
        for (int o = 0; o < out_ch; ++o) gb[o] += pb[ch][o];
    }
}

} // namespace

ConvReconstructor::ConvReconstructor(std::uint64_t seed, const std::vector<int>& channels)
    : channels_(channels) {
    if (channels_.size() < 2 || channels_.front() != 1 || channels_.back() != 1)
        throw ConfigError("reconstructor channels must start and end at 1");
    for (int c : channels_)
        if (c < 1) throw ConfigError("reconstructor channel counts must be >= 1");
    std::mt19937_64 eng(seed);
    layers_.resize(channels_.size() - 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Layer& layer = layers_[l];
        layer.in_ch = channels_[l];
        layer.out_ch = channels_[l + 1];
        const std::size_t wsize = static_cast<std::size_t>(layer.out_ch) * layer.in_ch * 27;
        layer.w.resize(wsize);
        const double bound = 1.0 / std::sqrt(27.0 * layer.in_ch);
        for (auto& v : layer.w) v = uniform_sym(eng, bound);
        layer.b.assign(layer.out_ch, 0.0);
        layer.gw.assign(wsize, 0.0);
        layer.gb.assign(layer.out_ch, 0.0);
    }
}

Volume3D ConvReconstructor::forward(const Volume3D& field) {
    field.grid.validate();
    if (layers_.empty()) throw Error("reconstructor is uninitialized");
    const std::int64_t vol = field.grid.count();
    cache_grid_ = field.grid;
    act_.assign(layers_.size(), {});
    pre_.assign(layers_.size(), {});

    std::vector<double> cur = field.data; // 1 input channel
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        act_[l] = cur;
        pre_[l].resize(static_cast<std::size_t>(layers_[l].out_ch) * vol);
        conv_apply(field.grid, layers_[l].in_ch, layers_[l].out_ch, layers_[l].w,
                   layers_[l].b, cur.data(), pre_[l].data());
        cur = pre_[l];
        if (l + 1 < layers_.size()) {
            parallel_for(static_cast<std::int64_t>(cur.size()), 1 << 16,
                         [&](std::int64_t b, std::int64_t e) {
                             for (std::int64_t t = b; t < e; ++t)
                                 if (cur[t] < 0.0) cur[t] *= kSlope;
                         });
        }
    }
    Volume3D out(field.grid);
    parallel_for(vol, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t)
            out.data[t] = field.data[t] + cur[t];
    });
    cache_valid_ = true;
    return out;
}

void ConvReconstructor::backward(const Volume3D& dloss_dchi) {
    if (!cache_valid_)
        throw MissingForwardCache("reconstructor backward without a forward cache");
    require_same_grid(dloss_dchi.grid, cache_grid_, "recon backward");
    const std::int64_t vol = cache_grid_.count();

    // The residual skip passes dloss_dchi straight into the last layer.
    std::vector<double> dcur = dloss_dchi.data;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        Layer& layer = layers_[li];
        if (li + 1 < layers_.size()) {
            // dcur currently holds the gradient after the rectifier.
            parallel_for(static_cast<std::int64_t>(dcur.size()), 1 << 16,
                         [&](std::int64_t b, std::int64_t e) {
                             for (std::int64_t t = b; t < e; ++t)
                                 if (pre_[li][t] < 0.0) dcur[t] *= kSlope;
                         });
        }
        conv_weight_grad(cache_grid_, layer.in_ch, layer.out_ch, act_[li].data(),
                         dcur.data(), layer.gw, layer.gb);
        if (li > 0) {
            std::vector<double> din(static_cast<std::size_t>(layer.in_ch) * vol);
            conv_data_grad(cache_grid_, layer.in_ch, layer.out_ch, layer.w, dcur.data(),
                           din.data());
            dcur = std::move(din);
        }
    }
}

void ConvReconstructor::zero_grad() {
    for (auto& l : layers_) {
        std::fill(l.gw.begin(), l.gw.end(), 0.0);
        std::fill(l.gb.begin(), l.gb.end(), 0.0);
    }
}

void ConvReconstructor::drop_cache() {
    cache_valid_ = false;
    act_.clear();
    pre_.clear();
}

std::int64_t ConvReconstructor::param_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers_)
        n += static_cast<std::int64_t>(l.w.size()) + static_cast<std::int64_t>(l.b.size());
    return n;
}

void ConvReconstructor::read_params(std::vector<double>& out) const {
    out.clear();
    out.reserve(static_cast<std::size_t>(param_count()));
    for (const auto& l : layers_) {
        out.insert(out.end(), l.w.begin(), l.w.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    }
}

void ConvReconstructor::write_params(const std::vector<double>& in) {
    if (in.size() != static_cast<std::size_t>(param_count()))
        throw Error("reconstructor: parameter vector size mismatch");
    std::size_t p = 0;
    for (auto& l : layers_) {
        std::copy(in.begin() + p, in.begin() + p + l.w.size(), l.w.begin());
        p += l.w.size();
        std::copy(in.begin() + p, in.begin() + p + l.b.size(), l.b.begin());
        p += l.b.size();
    }
    cache_valid_ = false;
}

void ConvReconstructor::read_grads(std::vector<double>& out) const {
    out.clear();
    out.reserve(static_cast<std::size_t>(param_count()));
    for (const auto& l : layers_) {
        out.insert(out.end(), l.gw.begin(), l.gw.end());
        out.insert(out.end(), l.gb.begin(), l.gb.end());
    }
}

} // namespace qsm
