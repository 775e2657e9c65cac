// Compiled with -ffast-math -fopenmp-simd (see CMakeLists) so the loops
// lower to glibc's vector math routines. Keep this file free of any logic
// that cares about IEEE edge cases.
#include "qsm/vecmath.hpp"

#include <cmath>

namespace qsm::detail {

void sin_array(const double* in, double* out, std::int64_t n) {
#pragma omp simd
    for (std::int64_t i = 0; i < n; ++i) out[i] = std::sin(in[i]);
}

void cos_array(const double* in, double* out, std::int64_t n) {
#pragma omp simd
    for (std::int64_t i = 0; i < n; ++i) out[i] = std::cos(in[i]);
}

} // namespace qsm::detail
