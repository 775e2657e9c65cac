#pragma once

#include <cstdint>

namespace qsm::detail {

// Elementwise sin/cos over contiguous arrays. Compiled separately with the
// vectorizer flags that let glibc's SIMD libm kick in; results agree with
// std::sin/std::cos to a few ulp and are deterministic for a given build.
void sin_array(const double* in, double* out, std::int64_t n);
void cos_array(const double* in, double* out, std::int64_t n);

} // namespace qsm::detail
