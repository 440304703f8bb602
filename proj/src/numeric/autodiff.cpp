#include "metagraphloc/autodiff.hpp"

#include <algorithm>
#include <utility>

#include "metagraphloc/errors.hpp"

namespace mgl::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
    const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                   [&](std::size_t i) { return nodes_[i].requires_grad; });
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs),
                          needs ? std::move(backward) : BackwardFn{}, needs});
    return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.adjoint.empty() && !n.value.empty()) {
        n.adjoint = delta;
        return;
    }
    axpy(n.adjoint, 1.0, delta);
}

void Tape::backward(Var loss) {
    if (loss.tape_ != this) throw ContractError("backward: loss belongs to another tape");
    const Matrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ContractError("backward: loss must be 1x1, got " + lv.shape_string());
    }
    for (Node& n : nodes_) n.adjoint = Matrix();
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].adjoint = Matrix(1, 1, 1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.adjoint.empty() || !n.backward) continue;
        n.backward(*this, i);
    }
}

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.adjoint.empty()) return Matrix(n.value.rows(), n.value.cols());
    return n.adjoint;
}

namespace {

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

Tape& same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
    return a.tape();
}

double sum_of(const Matrix& m) {
    double s = 0.0;
    for (double v : m.values()) s += v;
    return s;
}

// Shapes for an element-wise binary op with scalar broadcast.
void check_broadcast(const Matrix& a, const Matrix& b, const char* op) {
    if (a.same_shape(b) || is_scalar(a) || is_scalar(b)) return;
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
}

template <class F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, F f) {
    if (a.same_shape(b)) {
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    if (is_scalar(b)) {
        Matrix out(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[0]);
        return out;
    }
    Matrix out(b.rows(), b.cols());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = f(a[0], b[i]);
    return out;
}

// Reduces a broadcast adjoint back to the operand's shape.
Matrix unbroadcast(const Matrix& grad, const Matrix& operand) {
    if (grad.same_shape(operand)) return grad;
    return Matrix(1, 1, sum_of(grad));
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    Matrix out = mgl::matmul(a.value(), b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.adjoint(self);
        if (tp.requires_grad(ia)) tp.accumulate(ia, mgl::matmul(g, tp.value(ib).transposed()));
        if (tp.requires_grad(ib)) tp.accumulate(ib, mgl::matmul(tp.value(ia).transposed(), g));
    });
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    check_broadcast(a.value(), b.value(), "add");
    Matrix out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x + y; });
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.adjoint(self);
        tp.accumulate(ia, unbroadcast(g, tp.value(ia)));
        tp.accumulate(ib, unbroadcast(g, tp.value(ib)));
    });
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    check_broadcast(a.value(), b.value(), "sub");
    Matrix out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x - y; });
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.adjoint(self);
        tp.accumulate(ia, unbroadcast(g, tp.value(ia)));
        tp.accumulate(ib, unbroadcast(scaled(g, -1.0), tp.value(ib)));
    });
}

Var mul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    check_broadcast(a.value(), b.value(), "mul");
    Matrix out = broadcast_apply(a.value(), b.value(), [](double x, double y) { return x * y; });
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
        const Matrix& g = tp.adjoint(self);
        const Matrix& va = tp.value(ia);
        const Matrix& vb = tp.value(ib);
        auto times = [](double x, double y) { return x * y; };
        if (tp.requires_grad(ia)) tp.accumulate(ia, unbroadcast(broadcast_apply(g, vb, times), va));
        if (tp.requires_grad(ib)) tp.accumulate(ib, unbroadcast(broadcast_apply(g, va, times), vb));
    });
}

Var scale(Var a, double factor) {
    const std::size_t ia = a.id();
    return a.tape().record(scaled(a.value(), factor), {ia},
                           [ia, factor](Tape& tp, std::size_t self) {
                               tp.accumulate(ia, scaled(tp.adjoint(self), factor));
                           });
}

Var add_scalar(Var a, double offset) {
    Matrix out = a.value();
    for (double& v : out.values()) v += offset;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        tp.accumulate(ia, tp.adjoint(self));
    });
}

Var leaky_relu(Var a, double slope) {
    Matrix out = a.value();
    for (double& v : out.values()) v = v >= 0.0 ? v : slope * v;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia, slope](Tape& tp, std::size_t self) {
        Matrix g = tp.adjoint(self);
        const Matrix& x = tp.value(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] < 0.0) g[i] *= slope;
        tp.accumulate(ia, g);
    });
}

Var relu(Var a) {
    Matrix out = a.value();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        Matrix g = tp.adjoint(self);
        const Matrix& x = tp.value(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] <= 0.0) g[i] = 0.0;
        tp.accumulate(ia, g);
    });
}

Var square(Var a) {
    Matrix out = a.value();
    for (double& v : out.values()) v *= v;
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        Matrix g = tp.adjoint(self);
        const Matrix& x = tp.value(ia);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.0 * x[i];
        tp.accumulate(ia, g);
    });
}

Var reduce(Var a, Reduce kind, Axis axis) {
    const Matrix& x = a.value();
    if (x.empty()) throw DomainError("reduce: empty input");
    const std::size_t rows = x.rows(), cols = x.cols();

    // Each output cell aggregates a strided run of input cells.
    std::size_t out_rows = 1, out_cols = 1, run = x.size();
    switch (axis) {
        case Axis::rows: out_cols = cols; run = rows; break;
        case Axis::cols: out_rows = rows; run = cols; break;
        case Axis::all: break;
    }
    auto input_index = [axis, rows, cols](std::size_t out, std::size_t k) -> std::size_t {
        switch (axis) {
            case Axis::rows: return k * cols + out;
            case Axis::cols: return out * cols + k;
            case Axis::all: return k;
        }
        return 0;
    };

    Matrix out(out_rows, out_cols);
    std::vector<std::size_t> argmax;
    if (kind == Reduce::max) argmax.resize(out.size());
    for (std::size_t o = 0; o < out.size(); ++o) {
        if (kind == Reduce::max) {
            std::size_t best = input_index(o, 0);
            for (std::size_t k = 1; k < run; ++k) {
                const std::size_t idx = input_index(o, k);
                if (x[idx] > x[best]) best = idx;
            }
            argmax[o] = best;
            out[o] = x[best];
        } else {
            double s = 0.0;
            for (std::size_t k = 0; k < run; ++k) s += x[input_index(o, k)];
            out[o] = kind == Reduce::mean ? s / static_cast<double>(run) : s;
        }
    }

    const std::size_t ia = a.id();
    return a.tape().record(
        std::move(out), {ia},
        [ia, kind, run, input_index, argmax = std::move(argmax)](Tape& tp, std::size_t self) {
            const Matrix& g = tp.adjoint(self);
            const Matrix& xv = tp.value(ia);
            Matrix d(xv.rows(), xv.cols());
            for (std::size_t o = 0; o < g.size(); ++o) {
                if (kind == Reduce::max) {
                    d[argmax[o]] += g[o];
                    continue;
                }
                const double w = kind == Reduce::mean ? g[o] / static_cast<double>(run) : g[o];
                for (std::size_t k = 0; k < run; ++k) d[input_index(o, k)] += w;
            }
            tp.accumulate(ia, d);
        });
}

Var sum(Var a) { return reduce(a, Reduce::sum, Axis::all); }
Var mean(Var a) { return reduce(a, Reduce::mean, Axis::all); }

Var tile_rows(Var row, std::size_t times) {
    const Matrix& r = row.value();
    if (r.rows() != 1) throw DimensionError("tile_rows: expected a row vector, got " + r.shape_string());
    Matrix out(times, r.cols());
    for (std::size_t i = 0; i < times; ++i)
        std::copy(r.values().begin(), r.values().end(), out.row(i).begin());
    const std::size_t ir = row.id();
    return row.tape().record(std::move(out), {ir}, [ir](Tape& tp, std::size_t self) {
        const Matrix& g = tp.adjoint(self);
        Matrix d(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t c = 0; c < g.cols(); ++c) d[c] += g(i, c);
        tp.accumulate(ir, d);
    });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
    const Matrix& x = a.value();
    Matrix out(indices.size(), x.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= x.rows()) throw DimensionError("gather_rows: index out of range");
        std::copy(x.row(indices[r]).begin(), x.row(indices[r]).end(), out.row(r).begin());
    }
    const std::size_t ia = a.id();
    return a.tape().record(
        std::move(out), {ia},
        [ia, idx = std::vector<std::size_t>(indices.begin(), indices.end())](Tape& tp,
                                                                          std::size_t self) {
            const Matrix& g = tp.adjoint(self);
            const Matrix& xv = tp.value(ia);
            Matrix d(xv.rows(), xv.cols());
            for (std::size_t r = 0; r < idx.size(); ++r) {
                auto src = g.row(r);
                auto dst = d.row(idx[r]);
                for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
            }
            tp.accumulate(ia, d);
        });
}

Var group_reduce(Var a, std::size_t group, Reduce kind) {
    const Matrix& x = a.value();
    if (group == 0 || x.rows() % group != 0) {
        throw DimensionError("group_reduce: " + std::to_string(x.rows()) +
                             " rows not divisible into groups of " + std::to_string(group));
    }
    const std::size_t groups = x.rows() / group, cols = x.cols();
    Matrix out(groups, cols);
    std::vector<std::size_t> argmax;
    if (kind == Reduce::max) argmax.resize(out.size());
    for (std::size_t q = 0; q < groups; ++q) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (kind == Reduce::max) {
                std::size_t best = q * group;
                for (std::size_t k = 1; k < group; ++k)
                    if (x(q * group + k, c) > x(best, c)) best = q * group + k;
                argmax[q * cols + c] = best;
                out(q, c) = x(best, c);
            } else {
                double s = 0.0;
                for (std::size_t k = 0; k < group; ++k) s += x(q * group + k, c);
                out(q, c) = kind == Reduce::mean ? s / static_cast<double>(group) : s;
            }
        }
    }
    const std::size_t ia = a.id();
    return a.tape().record(
        std::move(out), {ia},
        [ia, group, kind, argmax = std::move(argmax)](Tape& tp, std::size_t self) {
            const Matrix& g = tp.adjoint(self);
            const Matrix& xv = tp.value(ia);
            Matrix d(xv.rows(), xv.cols());
            const std::size_t cols = g.cols();
            for (std::size_t q = 0; q < g.rows(); ++q) {
                for (std::size_t c = 0; c < cols; ++c) {
                    if (kind == Reduce::max) {
                        d(argmax[q * cols + c], c) += g(q, c);
                        continue;
                    }
                    const double w =
                        kind == Reduce::mean ? g(q, c) / static_cast<double>(group) : g(q, c);
                    for (std::size_t k = 0; k < group; ++k) d(q * group + k, c) += w;
                }
            }
            tp.accumulate(ia, d);
        });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
    Matrix out = a.value().reshaped(rows, cols);
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
        const Matrix& x = tp.value(ia);
        tp.accumulate(ia, tp.adjoint(self).reshaped(x.rows(), x.cols()));
    });
}

Var propagate_blocks(const Matrix& left, Var x) {
    const Matrix& xv = x.value();
    const std::size_t n = left.cols();
    if (left.rows() != n || n == 0 || xv.rows() % n != 0) {
        throw DimensionError("propagate_blocks: " + left.shape_string() + " against " +
                             xv.shape_string());
    }
    const std::size_t blocks = xv.rows() / n, cols = xv.cols();
    auto apply = [n, blocks, cols](const Matrix& op, const Matrix& in) {
        Matrix out(in.rows(), cols);
        for (std::size_t b = 0; b < blocks; ++b) {
            const std::size_t off = b * n;
            for (std::size_t i = 0; i < n; ++i) {
                auto dst = out.row(off + i);
                for (std::size_t j = 0; j < n; ++j) {
                    const double w = op(i, j);
                    if (w == 0.0) continue;
                    auto src = in.row(off + j);
                    for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
                }
            }
        }
        return out;
    };
    Matrix out = apply(left, xv);
    const std::size_t ix = x.id();
    return x.tape().record(std::move(out), {ix},
                           [ix, apply, left_t = left.transposed()](Tape& tp, std::size_t self) {
                               tp.accumulate(ix, apply(left_t, tp.adjoint(self)));
                           });
}

Var mse(Var prediction, Var target) { return mean(square(sub(prediction, target))); }

}  // namespace mgl::ad
