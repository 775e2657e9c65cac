#pragma once

#include <utility>
#include <vector>

#include "qsm/dipole.hpp"
#include "qsm/grid.hpp"

namespace qsm {

struct TkdConfig {
    double t = 0.2;          // threshold on |D|, in (0, 1/3]
    bool zero_fill = false;  // true: zero the near-cone bins instead of clamping
};

// Truncated k-space division. Well-conditioned bins divide by D; bins with
// |D| < t either divide by t*sign(D) (default, sign(0) := +1) or are zeroed.
Volume3D tkd_invert(const Volume3D& field, const DipoleKernel& kernel,
                    const TkdConfig& cfg);

// One field volume per acquisition orientation.
struct OrientationSet {
    std::vector<std::pair<Orientation, Volume3D>> items;
};

// Multi-orientation least squares, solved per k-space bin:
//   chi(k) = sum_i D_i(k) F{field_i}(k) / (sum_i D_i(k)^2 + damping)
// Bins whose denominator stays below 1e-12 are zero-filled. Requires at
// least 3 pairwise non-collinear orientations on one shared grid.
Volume3D cosmos_invert(const OrientationSet& set, double damping = 0.0);

namespace detail {
// Same normal-equation solve without the orientation-count requirement;
// exists so the single-orientation degenerate case stays testable.
Volume3D cosmos_normal_solve(const OrientationSet& set, double damping);
} // namespace detail

} // namespace qsm
