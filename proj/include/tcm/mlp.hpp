#pragma once

#include "tcm/autodiff.hpp"
#include "tcm/random.hpp"

#include <string>
#include <vector>

namespace tcm {

enum class Activation { Linear, Tanh, Relu, LeakyRelu, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// widths = {in, hidden..., out}; layer l maps widths[l] -> widths[l + 1].
struct MlpSpec {
    std::vector<std::size_t> widths;
    Activation hidden = Activation::Tanh;
    Activation output = Activation::Linear;
    double leaky_slope = 0.2;

    std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
    std::size_t in() const { return widths.front(); }
    std::size_t out() const { return widths.back(); }
    void validate() const;
};

// Slot names used for layer l under `prefix`: "<prefix>.W<l>" (out x in) and "<prefix>.b<l>" (1 x out).
std::string weight_slot(const std::string& prefix, std::size_t layer);
std::string bias_slot(const std::string& prefix, std::size_t layer);

enum class MlpInit {
    Gaussian,      // every weight and bias ~ N(0, std^2)
    NearIdentity,  // square layers start at I + N(0, std^2), biases ~ N(0, std^2)
};

void register_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, RngStream& rng,
                  double init_std, MlpInit init = MlpInit::Gaussian);

// Records the forward pass of x (batch x in) on x's tape.
Var mlp_apply(const MlpSpec& spec, const std::string& prefix, Var x);

// Tape-free forward pass for inference.
Matrix mlp_forward(const MlpSpec& spec, const ParamStore& store, const std::string& prefix, const Matrix& x);

} // namespace tcm
