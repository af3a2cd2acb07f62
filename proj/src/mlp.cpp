#include "tcm/mlp.hpp"

#include "tcm/errors.hpp"

#include <cmath>

namespace tcm {
namespace {

double activate(Activation a, double x, double slope) {
    switch (a) {
    case Activation::Linear: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::LeakyRelu: return x > 0.0 ? x : slope * x;
    case Activation::Sigmoid: return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return x;
}

Var activate(Activation a, Var x, double slope) {
    switch (a) {
    case Activation::Linear: return x;
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Relu: return ad::relu(x);
    case Activation::LeakyRelu: return ad::leaky_relu(x, slope);
    case Activation::Sigmoid: return ad::sigmoid(x);
    }
    return x;
}

} // namespace

std::string to_string(Activation a) {
    switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky-relu";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "linear";
}

Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::Linear;
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    if (s == "leaky-relu") return Activation::LeakyRelu;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw ContractError("unknown activation '" + s + "'");
}

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ContractError("MlpSpec: needs at least one layer");
    for (auto w : widths)
        if (w == 0) throw ContractError("MlpSpec: zero layer width");
}

std::string weight_slot(const std::string& prefix, std::size_t layer) { return prefix + ".W" + std::to_string(layer); }
std::string bias_slot(const std::string& prefix, std::size_t layer) { return prefix + ".b" + std::to_string(layer); }

void register_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, RngStream& rng,
                  double init_std, MlpInit init) {
    spec.validate();
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const std::size_t in = spec.widths[l];
        const std::size_t out = spec.widths[l + 1];
        Matrix w(out, in);
        for (auto& v : w.data()) v = init_std * rng.normal();
        if (init == MlpInit::NearIdentity && in == out)
            for (std::size_t i = 0; i < in; ++i) w(i, i) += 1.0;
        Matrix b(1, out);
        for (auto& v : b.data()) v = init_std * rng.normal();
        store.add(weight_slot(prefix, l), std::move(w));
        store.add(bias_slot(prefix, l), std::move(b));
    }
}

Var mlp_apply(const MlpSpec& spec, const std::string& prefix, Var x) {
    if (x.cols() != spec.in())
        throw ShapeError("mlp '" + prefix + "': input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(spec.in()));
    Var h = x;
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        h = ad::affine(h, x.tape->param(weight_slot(prefix, l)), x.tape->param(bias_slot(prefix, l)));
        const bool last = l + 1 == spec.layers();
        h = activate(last ? spec.output : spec.hidden, h, spec.leaky_slope);
    }
    return h;
}

Matrix mlp_forward(const MlpSpec& spec, const ParamStore& store, const std::string& prefix, const Matrix& x) {
    if (x.cols() != spec.in())
        throw ShapeError("mlp '" + prefix + "': input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(spec.in()));
    Matrix h = x;
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const Matrix& w = store.value(weight_slot(prefix, l));
        const Matrix& b = store.value(bias_slot(prefix, l));
        Matrix next(h.rows(), w.rows());
        const bool last = l + 1 == spec.layers();
        const Activation act = last ? spec.output : spec.hidden;
        for (std::size_t r = 0; r < h.rows(); ++r)
            for (std::size_t o = 0; o < w.rows(); ++o)
                next(r, o) = activate(act, dot(h.row_span(r), w.row_span(o)) + b(0, o), spec.leaky_slope);
        h = std::move(next);
    }
    return h;
}

} // namespace tcm
