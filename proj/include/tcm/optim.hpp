#pragma once

#include "tcm/autodiff.hpp"

#include <cstdint>
#include <map>
#include <vector>

namespace tcm {

enum class OptimizerKind { Adam, SgdNesterov };

struct AdamHyper {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct NesterovHyper {
    double lr = 1e-3;
    double momentum = 0.9;
};

// Moment buffers for one parameter group.
struct OptState {
    OptimizerKind kind = OptimizerKind::Adam;
    AdamHyper adam;
    NesterovHyper nesterov;
    std::vector<SlotId> slots;
    std::map<SlotId, Matrix> first;   // Adam m / Nesterov velocity
    std::map<SlotId, Matrix> second;  // Adam v
    std::uint64_t step = 0;
};

OptState make_adam(const ParamStore& params, std::vector<SlotId> slots, AdamHyper hyper = {});
OptState make_sgd_nesterov(const ParamStore& params, std::vector<SlotId> slots, NesterovHyper hyper = {});

// Bias-corrected Adam. Slots without a gradient are treated as zero-gradient.
void adam_step(OptState& state, ParamStore& params, const Gradients& grads);

// v <- mu v + g;  w <- w - lr (g + mu v)
void sgd_nesterov_step(OptState& state, ParamStore& params, const Gradients& grads);

void optimizer_step(OptState& state, ParamStore& params, const Gradients& grads);

} // namespace tcm
