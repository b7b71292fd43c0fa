#ifndef DGGCN_GRADCHECK_HPP
#define DGGCN_GRADCHECK_HPP

// Central finite-difference check of tape gradients. The numerical side only
// calls forward evaluations, never backward().
//
// Relative error per entry is |analytic - numeric| / max(|analytic|, |numeric|, floor);
// the floor keeps entries whose true gradient is ~0 from dividing by rounding noise.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "model.hpp"
#include "train.hpp"

namespace dggcn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

inline constexpr double kGradCheckFloor = 1e-6;

inline double relative_error(double analytic, double numeric, double floor = kGradCheckFloor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// `loss` must build a scalar on the given tape from the registered parameters.
/// `params` are perturbed in place and restored.
inline GradCheckReport check_gradients(const std::function<Var(Tape&)>& loss, std::span<Tensor* const> params,
                                       std::span<const std::string> names = {}, double h = 1e-5) {
    std::vector<const Tensor*> cparams(params.begin(), params.end());
    std::vector<Tensor> analytic;
    {
        Tape tape;
        analytic = tape.backward(loss(tape), cparams);
    }
    auto eval = [&] {
        Tape tape;
        return loss(tape).value().item();
    };
    GradCheckReport r;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t[i];
            t[i] = saved + h;
            const double up = eval();
            t[i] = saved - h;
            const double down = eval();
            t[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = relative_error(analytic[p][i], numeric);
            ++r.checked;
            if (err > r.max_rel_err || r.checked == 1) {
                r.max_rel_err = err;
                r.worst_tensor = p < names.size() ? names[p] : "param" + std::to_string(p);
                r.worst_index = i;
                r.worst_analytic = analytic[p][i];
                r.worst_numeric = numeric;
            }
        }
    }
    return r;
}

/// Finite-difference check of d(MSE loss)/d(every parameter) for a model on a batch.
inline GradCheckReport check_model_gradients(ModelParams& params, const ModelConfig& cfg, const GraphBatch& batch,
                                             std::span<const double> targets, double h = 1e-5) {
    std::vector<std::string> names;
    std::vector<Tensor*> tensors;
    for (auto& [name, t] : params.named()) {
        names.push_back(name);
        tensors.push_back(t);
    }
    const auto loss = [&](Tape& tape) { return mse_loss(forward(tape, params, cfg, batch), targets); };
    return check_gradients(loss, tensors, names, h);
}

} // namespace dggcn

#endif // DGGCN_GRADCHECK_HPP
