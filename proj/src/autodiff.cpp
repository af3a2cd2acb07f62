#include "tcm/autodiff.hpp"

#include "tcm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tcm {

// ---------------------------------------------------------------- ParamStore

SlotId ParamStore::add(std::string name, Matrix init) {
    if (index_.contains(name)) throw ContractError("ParamStore: duplicate slot '" + name + "'");
    const SlotId id = slots_.size();
    index_.emplace(name, id);
    slots_.push_back({std::move(name), std::move(init)});
    ++generation_;
    return id;
}

SlotId ParamStore::id(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ContractError("ParamStore: unknown slot '" + std::string(name) + "'");
    return it->second;
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

void ParamStore::set(SlotId id, Matrix value) {
    Slot& s = slots_.at(id);
    if (!s.value.same_shape(value))
        throw ShapeError("ParamStore: slot '" + s.name + "' is " + s.value.shape_string() + ", got " +
                         value.shape_string());
    s.value = std::move(value);
    ++generation_;
}

Matrix& ParamStore::mutable_value(SlotId id) {
    ++generation_;
    return slots_.at(id).value;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.value.size();
    return n;
}

std::vector<SlotId> ParamStore::group(std::string_view prefix) const {
    std::vector<SlotId> out;
    for (SlotId i = 0; i < slots_.size(); ++i)
        if (slots_[i].name.starts_with(prefix)) out.push_back(i);
    return out;
}

bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.slots_.size() != b.slots_.size()) return false;
    for (std::size_t i = 0; i < a.slots_.size(); ++i) {
        if (a.slots_[i].name != b.slots_[i].name || !(a.slots_[i].value == b.slots_[i].value)) return false;
    }
    return true;
}

Gradients combine(const Gradients& a, double wa, const Gradients& b, double wb) {
    Gradients out;
    for (const auto& [slot, g] : a) out.emplace(slot, g * wa);
    for (const auto& [slot, g] : b) {
        auto it = out.find(slot);
        if (it == out.end()) out.emplace(slot, g * wb);
        else it->second += g * wb;
    }
    return out;
}

// ---------------------------------------------------------------- Tape

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) throw ContractError("Var::scalar on " + v.shape_string() + " node");
    return v(0, 0);
}

Var Tape::record(Matrix value, BackwardFn backward) {
    nodes_.push_back({std::move(value), Matrix{}, std::move(backward), std::nullopt});
    return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return record(std::move(value), nullptr); }

Var Tape::param(SlotId slot) {
    if (store_ == nullptr) throw ContractError("Tape::param: tape has no parameter store");
    Var v = record(store_->value(slot), nullptr);
    nodes_[v.id].slot = slot;
    return v;
}

Var Tape::param(std::string_view name) {
    if (store_ == nullptr) throw ContractError("Tape::param: tape has no parameter store");
    return param(store_->id(name));
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = g;
    else n.grad += g;
}

Gradients Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("backward: loss node belongs to another tape");
    if (nodes_[loss.id].value.size() != 1)
        throw ContractError("backward: loss must be scalar, got " + nodes_[loss.id].value.shape_string());
    for (auto& n : nodes_) n.grad = Matrix{};
    nodes_[loss.id].grad = Matrix(1, 1, 1.0);
    Gradients out;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
        if (n.slot) {
            auto it = out.find(*n.slot);
            if (it == out.end()) out.emplace(*n.slot, n.grad);
            else it->second += n.grad;
        }
    }
    return out;
}

// ---------------------------------------------------------------- primitives

namespace ad {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
}

template <typename F, typename D>
Var unary(Var a, F f, D dfdx) {
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i) out.data()[i] = f(av.data()[i]);
    const std::size_t ai = a.id;
    return a.tape->record(std::move(out), [ai, dfdx](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ai);
        const Matrix& y = t.value(self);
        Matrix d(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) d.data()[i] = g.data()[i] * dfdx(x.data()[i], y.data()[i]);
        t.accumulate(ai, d);
    });
}

Matrix column_sums(const Matrix& g) {
    Matrix out(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) out(0, c) += g(r, c);
    return out;
}

} // namespace

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    Matrix out = tcm::matmul(a.value(), b.value());
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(ai, tcm::matmul(g, t.value(bi).transpose()));
        t.accumulate(bi, tcm::matmul(t.value(ai).transpose(), g));
    });
}

Var affine(Var x, Var w, Var b) {
    require_same_tape(x, w, "affine");
    require_same_tape(x, b, "affine");
    const Matrix& xv = x.value();
    const Matrix& wv = w.value();
    const Matrix& bv = b.value();
    if (xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows())
        throw ShapeError("affine: x " + xv.shape_string() + ", W " + wv.shape_string() + ", b " + bv.shape_string());
    Matrix out(xv.rows(), wv.rows());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        auto xr = xv.row_span(r);
        for (std::size_t o = 0; o < wv.rows(); ++o) out(r, o) = dot(xr, wv.row_span(o)) + bv(0, o);
    }
    const std::size_t xi = x.id, wi = w.id, bi = b.id;
    return x.tape->record(std::move(out), [xi, wi, bi](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        t.accumulate(xi, tcm::matmul(g, t.value(wi)));
        t.accumulate(wi, tcm::matmul(g.transpose(), t.value(xi)));
        t.accumulate(bi, column_sums(g));
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    require_same_shape(a.value(), b.value(), "add");
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(a.value() + b.value(), [ai, bi](Tape& t, std::size_t self) {
        t.accumulate(ai, t.grad(self));
        t.accumulate(bi, t.grad(self));
    });
}

Var add_row(Var a, Var row) {
    require_same_tape(a, row, "add_row");
    const Matrix& av = a.value();
    const Matrix& rv = row.value();
    if (rv.rows() != 1 || rv.cols() != av.cols())
        throw ShapeError("add_row: " + av.shape_string() + " + " + rv.shape_string());
    Matrix out = av;
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv(0, c);
    const std::size_t ai = a.id, ri = row.id;
    return a.tape->record(std::move(out), [ai, ri](Tape& t, std::size_t self) {
        t.accumulate(ai, t.grad(self));
        t.accumulate(ri, column_sums(t.grad(self)));
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b, "sub");
    require_same_shape(a.value(), b.value(), "sub");
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(a.value() - b.value(), [ai, bi](Tape& t, std::size_t self) {
        t.accumulate(ai, t.grad(self));
        t.accumulate(bi, t.grad(self) * -1.0);
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b, "mul");
    require_same_shape(a.value(), b.value(), "mul");
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(std::move(out), [ai, bi](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        Matrix da = g, db = g;
        for (std::size_t i = 0; i < g.size(); ++i) {
            da.data()[i] *= t.value(bi).data()[i];
            db.data()[i] *= t.value(ai).data()[i];
        }
        t.accumulate(ai, da);
        t.accumulate(bi, db);
    });
}

Var scale(Var a, double s) {
    const std::size_t ai = a.id;
    return a.tape->record(a.value() * s, [ai, s](Tape& t, std::size_t self) { t.accumulate(ai, t.grad(self) * s); });
}

Var add_scalar(Var a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
    return unary(
        a, [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var abs(Var a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var square(Var a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var clamp_straight_through(Var a, double lo, double hi) {
    return unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); }, [](double, double) { return 1.0; });
}

Var sum(Var a) {
    const Matrix& av = a.value();
    double s = 0.0;
    for (double v : av.data()) s += v;
    const std::size_t ai = a.id;
    return a.tape->record(Matrix(1, 1, s), [ai](Tape& t, std::size_t self) {
        const Matrix& x = t.value(ai);
        t.accumulate(ai, Matrix(x.rows(), x.cols(), t.grad(self)(0, 0)));
    });
}

Var mean(Var a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw ContractError("mean of empty node");
    return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
    const Matrix& av = a.value();
    Matrix out(av.rows(), 1);
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (double v : av.row_span(r)) out(r, 0) += v;
    const std::size_t ai = a.id;
    return a.tape->record(std::move(out), [ai](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ai);
        Matrix d(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) d(r, c) = g(r, 0);
        t.accumulate(ai, d);
    });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
    const Matrix& av = a.value();
    if (start + count > av.cols())
        throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                         av.shape_string());
    Matrix out(av.rows(), count);
    for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, start + c);
    const std::size_t ai = a.id;
    return a.tape->record(std::move(out), [ai, start, count](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ai);
        Matrix d(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < count; ++c) d(r, start + c) = g(r, c);
        t.accumulate(ai, d);
    });
}

Var log_softmax_rows(Var a) {
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        auto row = av.row_span(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = row[c] - lse;
    }
    const std::size_t ai = a.id;
    return a.tape->record(std::move(out), [ai](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = t.value(self);
        Matrix d(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) gs += g(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) d(r, c) = g(r, c) - std::exp(y(r, c)) * gs;
        }
        t.accumulate(ai, d);
    });
}

Var pick(Var a, std::span<const std::size_t> index) {
    const Matrix& av = a.value();
    if (index.size() != av.rows()) throw ShapeError("pick: index count does not match rows");
    Matrix out(av.rows(), 1);
    std::vector<std::size_t> idx(index.begin(), index.end());
    for (std::size_t r = 0; r < av.rows(); ++r) {
        if (idx[r] >= av.cols()) throw ShapeError("pick: column index out of range");
        out(r, 0) = av(r, idx[r]);
    }
    const std::size_t ai = a.id;
    return a.tape->record(std::move(out), [ai, idx = std::move(idx)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& x = t.value(ai);
        Matrix d(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) d(r, idx[r]) = g(r, 0);
        t.accumulate(ai, d);
    });
}

} // namespace ad

// ---------------------------------------------------------------- gradient check

FiniteDiffReport finite_diff_check(const std::function<Var(Tape&, const ParamStore&)>& loss_fn,
                                   const ParamStore& params, double eps, std::vector<SlotId> slots,
                                   double abs_floor) {
    Tape tape(&params);
    const Gradients analytic = tape.backward(loss_fn(tape, params));
    if (slots.empty())
        for (SlotId s = 0; s < params.size(); ++s) slots.push_back(s);

    auto eval = [&](const ParamStore& p) {
        Tape t(&p);
        return loss_fn(t, p).scalar();
    };

    FiniteDiffReport report;
    ParamStore work = params;
    for (SlotId s : slots) {
        const Matrix base = params.value(s);
        auto it = analytic.find(s);
        for (std::size_t i = 0; i < base.size(); ++i) {
            Matrix plus = base;
            plus.data()[i] += eps;
            work.set(s, plus);
            const double lp = eval(work);
            Matrix minus = base;
            minus.data()[i] -= eps;
            work.set(s, minus);
            const double lm = eval(work);
            work.set(s, base);

            const double numeric = (lp - lm) / (2.0 * eps);
            const double a = it == analytic.end() ? 0.0 : it->second.data()[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.coordinates;
            if (rel > report.max_rel_error || !std::isfinite(rel)) {
                report.max_rel_error = std::isfinite(rel) ? rel : std::numeric_limits<double>::infinity();
                report.worst_slot = params.name(s);
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

} // namespace tcm
