#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qsm/errors.hpp"

namespace qsm {

// Adam on a flat parameter vector. First/second moments are stored here so
// the optimizer state can be checkpointed alongside the model.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t t = 0;
    std::vector<double> m;
    std::vector<double> v;

    void init(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        t = 0;
    }

    void step(std::vector<double>& params, const std::vector<double>& grads, double lr) {
        if (params.size() != grads.size() || params.size() != m.size())
            throw Error("adam: size mismatch between params, grads, and state");
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grads[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

} // namespace qsm
