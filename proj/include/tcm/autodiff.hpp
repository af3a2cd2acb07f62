#pragma once

#include "tcm/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tcm {

using SlotId = std::size_t;

// Named, shaped parameter matrices. Shapes are fixed at registration.
class ParamStore {
public:
    SlotId add(std::string name, Matrix init);
    SlotId id(std::string_view name) const;
    bool contains(std::string_view name) const;

    const Matrix& value(SlotId id) const { return slots_.at(id).value; }
    const Matrix& value(std::string_view name) const { return value(id(name)); }
    // Overwrites a slot; the new value must keep the registered shape.
    void set(SlotId id, Matrix value);
    void set(std::string_view name, Matrix value) { set(id(name), std::move(value)); }
    // In-place mutable access for optimizers. Bumps the generation counter.
    Matrix& mutable_value(SlotId id);

    const std::string& name(SlotId id) const { return slots_.at(id).name; }
    std::size_t size() const noexcept { return slots_.size(); }
    std::size_t parameter_count() const;

    // Slots whose names start with `prefix`, in registration order.
    std::vector<SlotId> group(std::string_view prefix) const;

    std::uint64_t generation() const noexcept { return generation_; }

    friend bool operator==(const ParamStore& a, const ParamStore& b);

private:
    struct Slot {
        std::string name;
        Matrix value;
    };
    std::vector<Slot> slots_;
    std::unordered_map<std::string, SlotId> index_;
    std::uint64_t generation_ = 0;
};

// Gradient per slot. Slots absent from the map received no gradient.
using Gradients = std::map<SlotId, Matrix>;

Gradients combine(const Gradients& a, double wa, const Gradients& b, double wb);

class Tape;

// Handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    double scalar() const;
};

// Define-by-run reverse-mode record. Nodes are appended in evaluation order,
// which is a topological order by construction.
class Tape {
public:
    explicit Tape(const ParamStore* store = nullptr) : store_(store) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var param(SlotId slot);
    Var param(std::string_view name);

    using BackwardFn = std::function<void(Tape&, std::size_t self)>;
    Var record(Matrix value, BackwardFn backward);

    // Runs the reverse sweep from a 1x1 node; may be called repeatedly.
    Gradients backward(Var loss);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
    void accumulate(std::size_t id, const Matrix& g);
    std::size_t node_count() const noexcept { return nodes_.size(); }
    const ParamStore* store() const noexcept { return store_; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        std::optional<SlotId> slot;
    };
    const ParamStore* store_;
    std::vector<Node> nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
// x (B x in) times w^T (w is out x in) plus the row vector b (1 x out).
Var affine(Var x, Var w, Var b);
Var add(Var a, Var b);
// Adds a 1 x cols row to every row of a.
Var add_row(Var a, Var row);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var abs(Var a);
Var square(Var a);
// Gradient passes only where lo <= a <= hi.
Var clamp(Var a, double lo, double hi);
// Clamps the value but passes the gradient through unchanged.
Var clamp_straight_through(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var log_softmax_rows(Var a);
// Column pick per row: out(r, 0) = a(r, index[r]).
Var pick(Var a, std::span<const std::size_t> index);

} // namespace ad

inline Var operator+(Var a, Var b) { return ad::add(a, b); }
inline Var operator-(Var a, Var b) { return ad::sub(a, b); }
inline Var operator*(double s, Var a) { return ad::scale(a, s); }
inline Var operator*(Var a, double s) { return ad::scale(a, s); }

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_slot;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t coordinates = 0;
};

// Central differences over every coordinate of every slot in `slots` (all when
// empty). Relative error is |a - n| / max(|a|, |n|, abs_floor).
FiniteDiffReport finite_diff_check(const std::function<Var(Tape&, const ParamStore&)>& loss_fn,
                                   const ParamStore& params, double eps = 1e-5,
                                   std::vector<SlotId> slots = {}, double abs_floor = 1e-6);

} // namespace tcm
