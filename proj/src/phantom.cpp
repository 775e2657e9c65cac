#include "qsm/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qsm/parallel.hpp"
#include "qsm/rng.hpp"

namespace qsm {

namespace {

double len3(const std::array<double, 3>& v) {
    return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
}

void check_chi(double d) {
    if (!(d >= -1.0 && d <= 1.0))
        throw ConfigError("delta_chi must lie in [-1, 1] ppm, got " + std::to_string(d));
}

void check_bounds(const PhantomSpec& spec, const Shape& shape) {
    const auto ext = spec.grid.extent();
    if (const auto* s = std::get_if<SphereSpec>(&shape)) {
        check_chi(s->delta_chi);
        if (!(s->radius_mm > 0.0)) throw ConfigError("sphere radius must be > 0");
        for (int d = 0; d < 3; ++d)
            if (s->center_mm[d] - s->radius_mm < 0.0 || s->center_mm[d] + s->radius_mm > ext[d])
                throw ShapeOutOfBounds("sphere exceeds the grid extent on axis " +
                                       std::to_string(d));
    } else if (const auto* c = std::get_if<CylinderSpec>(&shape)) {
        check_chi(c->delta_chi);
        if (!(c->radius_mm > 0.0)) throw ConfigError("cylinder radius must be > 0");
        if (!(len3(c->axis) > 0.0)) throw ConfigError("cylinder axis must be nonzero");
        double min_half = ext[0];
        for (int d = 0; d < 3; ++d) {
            min_half = std::min(min_half, ext[d]);
            if (c->center_mm[d] < 0.0 || c->center_mm[d] > ext[d])
                throw ShapeOutOfBounds("cylinder center outside the grid on axis " +
                                       std::to_string(d));
        }
        if (c->radius_mm > 0.5 * min_half)
            throw ShapeOutOfBounds("cylinder radius exceeds half the smallest grid extent");
    } else if (const auto* b = std::get_if<BoxSpec>(&shape)) {
        check_chi(b->delta_chi);
        for (int d = 0; d < 3; ++d) {
            if (!(b->min_mm[d] < b->max_mm[d]))
                throw ConfigError("box min must be strictly below max on axis " +
                                  std::to_string(d));
            if (b->min_mm[d] < 0.0 || b->max_mm[d] > ext[d])
                throw ShapeOutOfBounds("box exceeds the grid extent on axis " +
                                       std::to_string(d));
        }
    }
}

} // namespace

void PhantomSpec::validate() const {
    grid.validate();
    if (!(background >= -1.0 && background <= 1.0))
        throw ConfigError("background susceptibility must lie in [-1, 1] ppm");
    for (const auto& s : shapes) check_bounds(*this, s);
}

void NoiseSpec::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw ConfigError("noise sigma must be >= 0 and finite");
}

std::pair<Volume3D, VoxelMask> build_phantom(const PhantomSpec& spec) {
    spec.validate();
    const GridSpec& g = spec.grid;
    Volume3D chi(g, spec.background);
    VoxelMask support(g, false);

    for (const auto& shape : spec.shapes) {
        parallel_for(g.dims[2], 2, [&](std::int64_t k0, std::int64_t k1) {
            for (std::int64_t k = k0; k < k1; ++k) {
                const double pz = (k + 0.5) * g.voxel[2];
                for (int j = 0; j < g.dims[1]; ++j) {
                    const double py = (j + 0.5) * g.voxel[1];
                    for (int i = 0; i < g.dims[0]; ++i) {
                        const double px = (i + 0.5) * g.voxel[0];
                        bool inside = false;
                        double value = 0.0;
                        if (const auto* s = std::get_if<SphereSpec>(&shape)) {
                            const double dx = px - s->center_mm[0];
                            const double dy = py - s->center_mm[1];
                            const double dz = pz - s->center_mm[2];
                            inside = dx * dx + dy * dy + dz * dz <=
                                     s->radius_mm * s->radius_mm;
                            value = s->delta_chi;
                        } else if (const auto* c = std::get_if<CylinderSpec>(&shape)) {
                            const double an = len3(c->axis);
                            const double ax = c->axis[0] / an, ay = c->axis[1] / an,
                                         az = c->axis[2] / an;
                            const double dx = px - c->center_mm[0];
                            const double dy = py - c->center_mm[1];
                            const double dz = pz - c->center_mm[2];
                            const double along = dx * ax + dy * ay + dz * az;
                            const double rx = dx - along * ax;
                            const double ry = dy - along * ay;
                            const double rz = dz - along * az;
                            inside = rx * rx + ry * ry + rz * rz <=
                                     c->radius_mm * c->radius_mm;
                            value = c->delta_chi;
                        } else if (const auto* b = std::get_if<BoxSpec>(&shape)) {
                            inside = px >= b->min_mm[0] && px <= b->max_mm[0] &&
                                     py >= b->min_mm[1] && py <= b->max_mm[1] &&
                                     pz >= b->min_mm[2] && pz <= b->max_mm[2];
                            value = b->delta_chi;
                        }
                        if (inside) {
                            const std::int64_t t = g.index(i, j, static_cast<int>(k));
                            chi.data[t] = value;
                            support.flags[t] = 1;
                        }
                    }
                }
            }
        });
    }
    return {std::move(chi), dilate_mask(support, 2)};
}

OrientationSet synth_orientation_set(const Volume3D& chi,
                                     const std::vector<Orientation>& orientations,
                                     const NoiseSpec& noise) {
    if (orientations.empty())
        throw InsufficientOrientations("synth_orientation_set needs >= 1 orientation");
    noise.validate();
    OrientationSet set;
    set.items.reserve(orientations.size());
    for (std::size_t i = 0; i < orientations.size(); ++i) {
        Volume3D field = forward_field(chi, dipole_kernel(chi.grid, orientations[i]));
        if (noise.sigma > 0.0) {
            GaussianGen gen(mix_seed(noise.seed, i));
            for (auto& v : field.data) v += noise.sigma * gen.next();
        }
        set.items.emplace_back(orientations[i], std::move(field));
    }
    return set;
}

std::vector<Orientation> orientation_sweep(int n, double cap_deg, std::uint64_t seed) {
    if (n < 1) throw ConfigError("orientation_sweep needs n >= 1");
    if (!(cap_deg > 0.0) || cap_deg > 90.0)
        throw ConfigError("cap half-angle must lie in (0, 90] degrees");
    const double zmin = std::cos(cap_deg * M_PI / 180.0);
    std::mt19937_64 eng(seed);
    const double phase = uniform01(eng); // seed-derived azimuth offset, turns
    const double golden = 0.6180339887498949;
    std::vector<Orientation> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        const double z = 1.0 - t * (1.0 - zmin);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double turns = i * golden + phase;
        const double az = 2.0 * M_PI * (turns - std::floor(turns));
        out.push_back(Orientation::normalized(rho * std::cos(az), rho * std::sin(az), z));
    }
    return out;
}

namespace {

// The Chebyshev ball is a box, so the morphology separates into one sliding
// pass per axis. Erosion treats out-of-volume as outside the mask.
void morph_axis(const GridSpec& g, int axis, int radius, bool dilate,
                const std::vector<std::uint8_t>& in, std::vector<std::uint8_t>& out) {
    const std::int64_t stride =
        axis == 0 ? 1 : (axis == 1 ? g.dims[0] : static_cast<std::int64_t>(g.dims[0]) * g.dims[1]);
    const int extent = g.dims[axis];
    const std::int64_t n = g.count();
    parallel_for(n, 1 << 14, [&](std::int64_t b, std::int64_t e) {
        for (std::int64_t t = b; t < e; ++t) {
            int pos;
            switch (axis) {
                case 0: pos = static_cast<int>(t % g.dims[0]); break;
                case 1: pos = static_cast<int>((t / g.dims[0]) % g.dims[1]); break;
                default:
                    pos = static_cast<int>(t / (static_cast<std::int64_t>(g.dims[0]) * g.dims[1]));
            }
            bool hit = !dilate;
            for (int d = -radius; d <= radius; ++d) {
                const int p = pos + d;
                const bool val = p >= 0 && p < extent && in[t + static_cast<std::int64_t>(d) * stride];
                if (dilate && val) { hit = true; break; }
                if (!dilate && !val) { hit = false; break; }
            }
            out[t] = hit ? 1 : 0;
        }
    });
}

VoxelMask morph(const VoxelMask& mask, int radius, bool dilate) {
    if (radius < 0) throw ConfigError("morphology radius must be >= 0");
    if (radius == 0) return mask;
    const GridSpec& g = mask.grid;
    std::vector<std::uint8_t> cur = mask.flags;
    std::vector<std::uint8_t> next(cur.size());
    for (int axis = 0; axis < 3; ++axis) {
        morph_axis(g, axis, radius, dilate, cur, next);
        cur.swap(next);
    }
    VoxelMask out(g, false);
    out.flags = std::move(cur);
    return out;
}

} // namespace

VoxelMask dilate_mask(const VoxelMask& mask, int radius) {
    return morph(mask, radius, true);
}

VoxelMask erode_mask(const VoxelMask& mask, int radius) {
    return morph(mask, radius, false);
}

} // namespace qsm
