#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "metagraphloc/matrix.hpp"

/// Reverse-mode automatic differentiation over dense matrices.
///
/// A Tape records every operation in evaluation order, so node ids are already a
/// topological order and backward() is a single reverse sweep. A tape is
/// single-writer; give each worker thread its own.
namespace mgl::ad {

enum class Reduce { sum, mean, max };

/// `rows` reduces over the row index (one value per column), `cols` over the
/// column index (one value per row), `all` to a 1x1 scalar.
enum class Axis { rows, cols, all };

class Tape;

/// Lightweight handle to a tape node.
class Var {
public:
    Var() = default;

    std::size_t id() const noexcept { return id_; }
    Tape& tape() const noexcept { return *tape_; }
    const Matrix& value() const;
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    /// Receives the tape and the id of the node whose adjoint is being propagated.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var parameter(Matrix value);

    /// Adds a node computed from `inputs`. The node requires a gradient iff any input does.
    Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const Matrix& value(Var v) const { return value(v.id()); }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
    const Matrix& adjoint(std::size_t id) const { return nodes_[id].adjoint; }

    /// Adds `delta` into the adjoint of node `id` (no-op for constants).
    void accumulate(std::size_t id, const Matrix& delta);

    /// Populates adjoints of every node that `loss` depends on. `loss` must be 1x1.
    void backward(Var loss);

    /// Gradient of the last backward() w.r.t. `v`; zeros if `v` was not reached.
    Matrix grad(Var v) const;

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix adjoint;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
    };

    std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
/// Element-wise ops; one operand may be 1x1 and is then broadcast.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var square(Var a);

/// Max ties resolve to the lowest index; the subgradient goes to that entry only.
Var reduce(Var a, Reduce kind, Axis axis);
Var sum(Var a);
Var mean(Var a);

/// Stacks a 1xC row `times` times.
Var tile_rows(Var row, std::size_t times);
/// Output row r is input row indices[r].
Var gather_rows(Var a, std::span<const std::size_t> indices);
/// Reduces consecutive blocks of `group` rows into one row each (rows must divide evenly).
Var group_reduce(Var a, std::size_t group, Reduce kind);
Var reshape(Var a, std::size_t rows, std::size_t cols);
/// For x stacked as B blocks of left.cols() rows, returns the blocks left*x_b stacked.
/// `left` is treated as a constant.
Var propagate_blocks(const Matrix& left, Var x);
/// mean((pred - target)^2) over all entries.
Var mse(Var prediction, Var target);

}  // namespace mgl::ad
