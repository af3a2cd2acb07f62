#include "tcm/optim.hpp"

#include "tcm/errors.hpp"

#include <cmath>

namespace tcm {
namespace {

void init_buffers(const ParamStore& params, OptState& s, bool second) {
    for (SlotId id : s.slots) {
        const Matrix& v = params.value(id);
        s.first.emplace(id, Matrix(v.rows(), v.cols()));
        if (second) s.second.emplace(id, Matrix(v.rows(), v.cols()));
    }
}

const Matrix* find_grad(const Gradients& grads, SlotId id, const Matrix& value, const ParamStore& params) {
    auto it = grads.find(id);
    if (it == grads.end()) return nullptr;
    if (!it->second.same_shape(value))
        throw ShapeError("optimizer: gradient for '" + params.name(id) + "' is " + it->second.shape_string() +
                         ", slot is " + value.shape_string());
    return &it->second;
}

} // namespace

OptState make_adam(const ParamStore& params, std::vector<SlotId> slots, AdamHyper hyper) {
    OptState s;
    s.kind = OptimizerKind::Adam;
    s.adam = hyper;
    s.slots = std::move(slots);
    init_buffers(params, s, true);
    return s;
}

OptState make_sgd_nesterov(const ParamStore& params, std::vector<SlotId> slots, NesterovHyper hyper) {
    OptState s;
    s.kind = OptimizerKind::SgdNesterov;
    s.nesterov = hyper;
    s.slots = std::move(slots);
    init_buffers(params, s, false);
    return s;
}

void adam_step(OptState& state, ParamStore& params, const Gradients& grads) {
    if (state.kind != OptimizerKind::Adam) throw ContractError("adam_step on a non-Adam state");
    ++state.step;
    const auto& h = state.adam;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    for (SlotId id : state.slots) {
        const Matrix* g = find_grad(grads, id, params.value(id), params);
        Matrix& m = state.first.at(id);
        Matrix& v = state.second.at(id);
        Matrix& w = params.mutable_value(id);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g ? g->data()[i] : 0.0;
            double& mi = m.data()[i];
            double& vi = v.data()[i];
            mi = h.beta1 * mi + (1.0 - h.beta1) * gi;
            vi = h.beta2 * vi + (1.0 - h.beta2) * gi * gi;
            w.data()[i] -= h.lr * (mi / bc1) / (std::sqrt(vi / bc2) + h.eps);
        }
    }
}

void sgd_nesterov_step(OptState& state, ParamStore& params, const Gradients& grads) {
    if (state.kind != OptimizerKind::SgdNesterov) throw ContractError("sgd_nesterov_step on a non-SGD state");
    ++state.step;
    const auto& h = state.nesterov;
    for (SlotId id : state.slots) {
        const Matrix* g = find_grad(grads, id, params.value(id), params);
        Matrix& vel = state.first.at(id);
        Matrix& w = params.mutable_value(id);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g ? g->data()[i] : 0.0;
            double& vi = vel.data()[i];
            vi = h.momentum * vi + gi;
            w.data()[i] -= h.lr * (gi + h.momentum * vi);
        }
    }
}

void optimizer_step(OptState& state, ParamStore& params, const Gradients& grads) {
    if (state.kind == OptimizerKind::Adam) adam_step(state, params, grads);
    else sgd_nesterov_step(state, params, grads);
}

} // namespace tcm
