#include "qsm/siren.hpp"

#include <cmath>
#include <random>
#include <string>

#include "qsm/io_blob.hpp"
#include "qsm/parallel.hpp"
#include "qsm/rng.hpp"
#include "qsm/vecmath.hpp"

namespace qsm {

namespace {

constexpr std::int64_t kRowGrain = 8192;

// out = X W^T + 1 b^T, chunked over fixed row blocks so results do not
// depend on the worker count.
void affine_rows(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                 const Eigen::VectorXd& b, Eigen::MatrixXd& out) {
    out.resize(x.rows(), w.rows());
    parallel_for(x.rows(), kRowGrain, [&](std::int64_t r0, std::int64_t r1) {
        out.middleRows(r0, r1 - r0).noalias() =
            x.middleRows(r0, r1 - r0) * w.transpose();
        out.middleRows(r0, r1 - r0).rowwise() += b.transpose();
    });
}

// out = sin(scale * in), elementwise over the contiguous storage.
void scaled_sin(const Eigen::MatrixXd& in, double scale, Eigen::MatrixXd& out) {
    out.resize(in.rows(), in.cols());
    const std::int64_t n = in.size();
    parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        Eigen::ArrayXd tmp = in.reshaped().segment(b, e - b).array() * scale;
        detail::sin_array(tmp.data(), out.data() + b, e - b);
    });
}

void scaled_cos(const Eigen::MatrixXd& in, double scale, Eigen::MatrixXd& out) {
    out.resize(in.rows(), in.cols());
    const std::int64_t n = in.size();
    parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
        Eigen::ArrayXd tmp = in.reshaped().segment(b, e - b).array() * scale;
        detail::cos_array(tmp.data(), out.data() + b, e - b);
    });
}

// gw += delta^T h and gb += colsum(delta), reduced over fixed row chunks
// combined in chunk order.
void accumulate_grads(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& h,
                      Eigen::MatrixXd& gw, Eigen::VectorXd& gb) {
    const std::int64_t chunks = chunk_count(delta.rows(), kRowGrain);
    std::vector<Eigen::MatrixXd> pw(static_cast<std::size_t>(chunks));
    std::vector<Eigen::VectorXd> pb(static_cast<std::size_t>(chunks));
    parallel_for(chunks, 1, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const std::int64_t r0 = c * kRowGrain;
            const std::int64_t len = std::min<std::int64_t>(kRowGrain, delta.rows() - r0);
            pw[c].noalias() =
                delta.middleRows(r0, len).transpose() * h.middleRows(r0, len);
            pb[c] = delta.middleRows(r0, len).colwise().sum().transpose();
        }
    });
    for (std::int64_t c = 0; c < chunks; ++c) {
        gw += pw[c];
        gb += pb[c];
    }
}

} // namespace

void SirenSpec::validate() const {
    if (depth < 1) throw ConfigError("siren depth must be >= 1");
    if (width < 1) throw ConfigError("siren width must be >= 1");
    if (!(omega0 > 0.0)) throw ConfigError("siren omega0 must be > 0");
    if (in_dim < 1 || out_dim < 1) throw ConfigError("siren dims must be >= 1");
}

double index_coord(int i, int n) {
    return 2.0 * i / n - 1.0 + 1.0 / n;
}

int coord_index(double r, int n) {
    return static_cast<int>(std::lround(((r + 1.0) * n - 1.0) / 2.0));
}

int fftshift_index(int i, int n) {
    return (i + n / 2) % n;
}

CoordBatch kernel_coords(const GridSpec& grid, const Orientation& orient) {
    grid.validate();
    const std::int64_t n = grid.count();
    CoordBatch batch(n, 6);
    std::array<std::vector<double>, 3> r;
    for (int d = 0; d < 3; ++d) {
        r[d].resize(grid.dims[d]);
        for (int i = 0; i < grid.dims[d]; ++i)
            r[d][i] = index_coord(fftshift_index(i, grid.dims[d]), grid.dims[d]);
    }
    parallel_for(grid.dims[2], 1, [&](std::int64_t k0, std::int64_t k1) {
        for (std::int64_t k = k0; k < k1; ++k)
            for (int j = 0; j < grid.dims[1]; ++j) {
                std::int64_t row = grid.index(0, j, static_cast<int>(k));
                for (int i = 0; i < grid.dims[0]; ++i, ++row) {
                    batch(row, 0) = r[0][i];
                    batch(row, 1) = r[1][j];
                    batch(row, 2) = r[2][k];
                    batch(row, 3) = orient.b[0];
                    batch(row, 4) = orient.b[1];
                    batch(row, 5) = orient.b[2];
                }
            }
    });
    return batch;
}

void validate_coords(const CoordBatch& batch) {
    if (batch.cols() != 6)
        throw ConfigError("coordinate batch must have 6 columns");
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
        for (int d = 0; d < 3; ++d)
            if (std::abs(batch(r, d)) > 1.0 + 1e-12)
                throw ConfigError("coordinate outside [-1,1] at row " + std::to_string(r));
        const double nb = std::sqrt(batch(r, 3) * batch(r, 3) + batch(r, 4) * batch(r, 4) +
                                    batch(r, 5) * batch(r, 5));
        if (std::abs(nb - 1.0) > 1e-12)
            throw ConfigError("orientation not unit length at row " + std::to_string(r));
    }
}

SirenNet::SirenNet(const SirenSpec& spec, std::uint64_t seed) : spec_(spec) {
    spec.validate();
    std::mt19937_64 eng(seed);
    w_.resize(spec.depth);
    b_.resize(spec.depth);
    gw_.resize(spec.depth);
    gb_.resize(spec.depth);
    for (int l = 0; l < spec.depth; ++l) {
        const int in = l == 0 ? spec.in_dim : spec.width;
        const int out = l == spec.depth - 1 ? spec.out_dim : spec.width;
        const double wb = l == 0 ? 1.0 / in : std::sqrt(6.0 / in) / spec.omega0;
        const double bb = 1.0 / std::sqrt(static_cast<double>(in));
        w_[l].resize(out, in);
        b_[l].resize(out);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) w_[l](r, c) = uniform_sym(eng, wb);
        for (int r = 0; r < out; ++r) b_[l](r) = uniform_sym(eng, bb);
        gw_[l] = Eigen::MatrixXd::Zero(out, in);
        gb_[l] = Eigen::VectorXd::Zero(out);
    }
}

Eigen::MatrixXd SirenNet::forward(const CoordBatch& batch) {
    if (w_.empty()) throw Error("siren: net is uninitialized");
    if (batch.cols() != spec_.in_dim)
        throw ConfigError("siren: batch has " + std::to_string(batch.cols()) +
                          " columns, expected " + std::to_string(spec_.in_dim));
    if (spec_.in_dim == 6) validate_coords(batch);
    in_cache_ = batch;
    pre_cache_.resize(spec_.depth - 1);
    Eigen::MatrixXd h = batch;
    for (int l = 0; l < spec_.depth - 1; ++l) {
        affine_rows(h, w_[l], b_[l], pre_cache_[l]);
        scaled_sin(pre_cache_[l], spec_.omega0, h);
    }
    Eigen::MatrixXd out;
    affine_rows(h, w_.back(), b_.back(), out);
    cache_valid_ = true;
    return out;
}

void SirenNet::backward(const Eigen::MatrixXd& dloss_dout) {
    if (!cache_valid_)
        throw MissingForwardCache("siren backward without a forward cache");
    if (dloss_dout.rows() != in_cache_.rows() || dloss_dout.cols() != spec_.out_dim)
        throw MissingForwardCache("siren backward: gradient shape does not match the cached batch");
    // Recompute hidden activations from the cached pre-activations.
    std::vector<Eigen::MatrixXd> h(static_cast<std::size_t>(spec_.depth));
    h[0] = in_cache_;
    for (int l = 0; l < spec_.depth - 1; ++l)
        scaled_sin(pre_cache_[l], spec_.omega0, h[l + 1]);

    Eigen::MatrixXd g = dloss_dout;
    accumulate_grads(g, h[spec_.depth - 1], gw_.back(), gb_.back());
    Eigen::MatrixXd gh;
    {
        gh.resize(g.rows(), w_.back().cols());
        parallel_for(g.rows(), kRowGrain, [&](std::int64_t r0, std::int64_t r1) {
            gh.middleRows(r0, r1 - r0).noalias() = g.middleRows(r0, r1 - r0) * w_.back();
        });
    }
    for (int l = spec_.depth - 2; l >= 0; --l) {
        Eigen::MatrixXd dsin;
        scaled_cos(pre_cache_[l], spec_.omega0, dsin);
        Eigen::MatrixXd delta(gh.rows(), gh.cols());
        const std::int64_t n = gh.size();
        parallel_for(n, 1 << 16, [&](std::int64_t b, std::int64_t e) {
            for (std::int64_t t = b; t < e; ++t)
                delta.data()[t] = gh.data()[t] * spec_.omega0 * dsin.data()[t];
        });
        accumulate_grads(delta, h[l], gw_[l], gb_[l]);
        if (l > 0) {
            gh.resize(delta.rows(), w_[l].cols());
            parallel_for(delta.rows(), kRowGrain, [&](std::int64_t r0, std::int64_t r1) {
                gh.middleRows(r0, r1 - r0).noalias() =
                    delta.middleRows(r0, r1 - r0) * w_[l];
            });
        }
    }
}

void SirenNet::zero_grad() {
    for (auto& g : gw_) g.setZero();
    for (auto& g : gb_) g.setZero();
}

void SirenNet::drop_cache() {
    cache_valid_ = false;
    in_cache_.resize(0, 0);
    pre_cache_.clear();
}

std::int64_t SirenNet::param_count() const {
    std::int64_t n = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) n += w_[l].size() + b_[l].size();
    return n;
}

void SirenNet::read_params(std::vector<double>& out) const {
    out.resize(static_cast<std::size_t>(param_count()));
    std::size_t p = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        for (Eigen::Index r = 0; r < w_[l].rows(); ++r)
            for (Eigen::Index c = 0; c < w_[l].cols(); ++c) out[p++] = w_[l](r, c);
        for (Eigen::Index r = 0; r < b_[l].size(); ++r) out[p++] = b_[l](r);
    }
}

void SirenNet::write_params(const std::vector<double>& in) {
    if (in.size() != static_cast<std::size_t>(param_count()))
        throw Error("siren: parameter vector size mismatch");
    std::size_t p = 0;
    for (std::size_t l = 0; l < w_.size(); ++l) {
        for (Eigen::Index r = 0; r < w_[l].rows(); ++r)
            for (Eigen::Index c = 0; c < w_[l].cols(); ++c) w_[l](r, c) = in[p++];
        for (Eigen::Index r = 0; r < b_[l].size(); ++r) b_[l](r) = in[p++];
    }
    cache_valid_ = false;
}

void SirenNet::read_grads(std::vector<double>& out) const {
    out.resize(static_cast<std::size_t>(param_count()));
    std::size_t p = 0;
    for (std::size_t l = 0; l < gw_.size(); ++l) {
        for (Eigen::Index r = 0; r < gw_[l].rows(); ++r)
            for (Eigen::Index c = 0; c < gw_[l].cols(); ++c) out[p++] = gw_[l](r, c);
        for (Eigen::Index r = 0; r < gb_[l].size(); ++r) out[p++] = gb_[l](r);
    }
}

DipoleKernel synthesize_kernel(SirenNet& net, const GridSpec& grid,
                               const Orientation& orient) {
    if (net.spec().out_dim != 1)
        throw ConfigError("synthesize_kernel needs a scalar-output net");
    const Eigen::MatrixXd out = net.forward(kernel_coords(grid, orient));
    net.drop_cache();
    DipoleKernel ker;
    ker.grid = grid;
    ker.orient = orient;
    ker.values.assign(out.data(), out.data() + out.rows());
    return ker;
}

void save_siren(const SirenNet& net, const std::string& path) {
    nlohmann::json header{{"magic", "SIREN1"},
                          {"depth", net.spec().depth},
                          {"width", net.spec().width},
                          {"omega0", net.spec().omega0},
                          {"in_dim", net.spec().in_dim},
                          {"out_dim", net.spec().out_dim}};
    std::vector<double> params;
    net.read_params(params);
    detail::write_json_payload(path, header, params.data(),
                               static_cast<std::int64_t>(params.size()));
}

SirenNet load_siren(const std::string& path) {
    auto [header, payload] = detail::read_json_payload(path);
    if (header.value("magic", "") != std::string("SIREN1"))
        throw IoError(path + ": not a siren checkpoint");
    SirenSpec spec;
    spec.depth = header.at("depth").get<int>();
    spec.width = header.at("width").get<int>();
    spec.omega0 = header.at("omega0").get<double>();
    spec.in_dim = header.at("in_dim").get<int>();
    spec.out_dim = header.at("out_dim").get<int>();
    SirenNet net(spec, 0);
    if (payload.size() != static_cast<std::size_t>(net.param_count()))
        throw IoError(path + ": checkpoint payload has " + std::to_string(payload.size()) +
                      " values, expected " + std::to_string(net.param_count()));
    net.write_params(payload);
    return net;
}

} // namespace qsm
