#ifndef DGGCN_ADAM_HPP
#define DGGCN_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "error.hpp"
#include "tensor.hpp"

namespace dggcn {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates, one tensor per parameter.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update applied in place to `params`.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      const AdamOptions& opt = {}) {
    if (params.size() != grads.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.emplace_back(p->rows(), p->cols());
            state.v.emplace_back(p->rows(), p->cols());
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state size mismatch");

    ++state.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        if (!p.same_shape(g) || !p.same_shape(state.m[k])) {
            throw ShapeError("adam_step: parameter " + p.shape_string() + " vs gradient " + g.shape_string());
        }
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

} // namespace dggcn

#endif // DGGCN_ADAM_HPP
