// Copyright 2026 The CERM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cerm/rng.hpp"
#include "cerm/tensor.hpp"

namespace cerm {

class Graph;

/// Handle to a node on a Graph tape. Cheap to copy; valid as long as the
/// graph is alive.
class Value {
public:
    Value() = default;

    const Tensor& tensor() const;
    const Shape& shape() const;
    double item() const { return tensor().item(); }
    Tensor grad() const;
    bool needs_grad() const;

    Graph* graph() const { return graph_; }
    std::size_t id() const { return id_; }

private:
    friend class Graph;
    Value(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode autodiff tape. Nodes are appended in execution order, so the
/// record is topologically sorted by construction; one backward() sweep over
/// the reversed record applies the chain rule and fills a gradient for every
/// node that influenced the scalar loss.
///
/// A graph is meant to live for one forward/backward pass on one thread.
class Graph {
public:
    Value input(Tensor t, bool requires_grad = false) {
        return push(std::move(t), {}, nullptr, requires_grad, "input");
    }

    Value constant(Tensor t) { return input(std::move(t), false); }
    Value constant(double v) { return input(Tensor::scalar(v), false); }

    const Tensor& value_of(const Value& v) const { return nodes_[v.id_].value; }

    bool node_needs_grad(const Value& v) const { return nodes_[v.id_].needs_grad; }

    Tensor grad_of(const Value& v) const {
        if (!ran_backward_) throw Error("Graph::grad: backward() has not run");
        const Node& n = nodes_[v.id_];
        Tensor g(n.value.shape());
        if (!n.grad.empty()) g.values() = n.grad;
        return g;
    }

    /// Chain rule in reverse over the tape. `loss` must be a scalar node.
    void backward(const Value& loss) {
        if (loss.graph_ != this) throw Error("Graph::backward: loss from another graph");
        if (nodes_[loss.id_].value.size() != 1) {
            throw Error("Graph::backward: loss must be scalar, got shape " +
                        shape_str(nodes_[loss.id_].value.shape()));
        }
        if (ran_backward_) throw Error("Graph::backward: already ran on this graph");
        for (Node& n : nodes_) n.grad.assign(n.value.size(), 0.0);
        nodes_[loss.id_].grad[0] = 1.0;
        for (std::size_t i = loss.id_ + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.backprop) n.backprop(*this, i);
        }
        ran_backward_ = true;
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        std::vector<std::size_t> inputs;
        std::function<void(Graph&, std::size_t)> backprop;
        bool needs_grad = false;
        const char* op = "input";
    };

    Value push(Tensor t, std::vector<std::size_t> inputs,
               std::function<void(Graph&, std::size_t)> backprop, bool needs_grad,
               const char* op) {
        Node n;
        n.value = std::move(t);
        n.inputs = std::move(inputs);
        n.backprop = std::move(backprop);
        n.needs_grad = needs_grad;
        n.op = op;
        nodes_.push_back(std::move(n));
        return Value(this, nodes_.size() - 1);
    }

    bool any_needs_grad(const std::vector<std::size_t>& ids) const {
        for (std::size_t id : ids) {
            if (nodes_[id].needs_grad) return true;
        }
        return false;
    }

    std::vector<Node> nodes_;
    bool ran_backward_ = false;

    friend Value apply_op(Graph& g, const char* op, std::vector<Value> inputs, Tensor out,
                          std::function<void(Graph&, std::size_t)> backprop);
    friend const Tensor& node_value(const Graph& g, std::size_t id);
    friend std::vector<double>& node_grad(Graph& g, std::size_t id);
    friend const std::vector<std::size_t>& node_inputs(const Graph& g, std::size_t id);
};

inline const Tensor& Value::tensor() const { return graph_->value_of(*this); }
inline const Shape& Value::shape() const { return tensor().shape(); }
inline Tensor Value::grad() const { return graph_->grad_of(*this); }
inline bool Value::needs_grad() const { return graph_->node_needs_grad(*this); }

// -- tape plumbing shared by the op builders ---------------------------------

inline Value apply_op(Graph& g, const char* op, std::vector<Value> inputs, Tensor out,
                      std::function<void(Graph&, std::size_t)> backprop) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Value& v : inputs) {
        if (v.graph() != &g) throw Error(std::string(op) + ": input from another graph");
        ids.push_back(v.id());
    }
    const bool needs = g.any_needs_grad(ids);
    return g.push(std::move(out), std::move(ids), needs ? std::move(backprop) : nullptr,
                  needs, op);
}

inline const Tensor& node_value(const Graph& g, std::size_t id) { return g.nodes_[id].value; }
inline std::vector<double>& node_grad(Graph& g, std::size_t id) { return g.nodes_[id].grad; }
inline const std::vector<std::size_t>& node_inputs(const Graph& g, std::size_t id) {
    return g.nodes_[id].inputs;
}

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw Error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
    }
}

}  // namespace detail

// -- elementwise and reduction primitives ------------------------------------

inline Value add(Value a, Value b) {
    Graph& g = *a.graph();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    detail::require_same_shape("add", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    return apply_op(g, "add", {a, b}, std::move(out), [](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const auto& gy = node_grad(gg, id);
        auto& ga = node_grad(gg, in[0]);
        auto& gb = node_grad(gg, in[1]);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i];
            gb[i] += gy[i];
        }
    });
}

inline Value sub(Value a, Value b) {
    Graph& g = *a.graph();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    detail::require_same_shape("sub", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    return apply_op(g, "sub", {a, b}, std::move(out), [](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const auto& gy = node_grad(gg, id);
        auto& ga = node_grad(gg, in[0]);
        auto& gb = node_grad(gg, in[1]);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i];
            gb[i] -= gy[i];
        }
    });
}

inline Value mul(Value a, Value b) {
    Graph& g = *a.graph();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    detail::require_same_shape("mul", ta, tb);
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    return apply_op(g, "mul", {a, b}, std::move(out), [](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const auto& gy = node_grad(gg, id);
        const Tensor& va = node_value(gg, in[0]);
        const Tensor& vb = node_value(gg, in[1]);
        auto& ga = node_grad(gg, in[0]);
        auto& gb = node_grad(gg, in[1]);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i] * vb[i];
            gb[i] += gy[i] * va[i];
        }
    });
}

inline Value scale(Value a, double c) {
    Graph& g = *a.graph();
    Tensor out = a.tensor();
    for (double& v : out.values()) v *= c;
    return apply_op(g, "scale", {a}, std::move(out), [c](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const auto& gy = node_grad(gg, id);
        auto& ga = node_grad(gg, in[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += c * gy[i];
    });
}

inline Value relu(Value x) {
    Graph& g = *x.graph();
    Tensor out = x.tensor();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return apply_op(g, "relu", {x}, std::move(out), [](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const auto& gy = node_grad(gg, id);
        const Tensor& vx = node_value(gg, in[0]);
        auto& gx = node_grad(gg, in[0]);
        // subgradient 0 at exactly 0
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += vx[i] > 0.0 ? gy[i] : 0.0;
    });
}

/// log(max(x, floor)). The floor keeps log finite on zero probabilities; the
/// derivative below the floor is 0.
inline Value log_floor(Value x, double floor = 1e-12) {
    Graph& g = *x.graph();
    Tensor out = x.tensor();
    for (double& v : out.values()) v = std::log(v > floor ? v : floor);
    return apply_op(g, "log_floor", {x}, std::move(out), [floor](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const auto& gy = node_grad(gg, id);
        const Tensor& vx = node_value(gg, in[0]);
        auto& gx = node_grad(gg, in[0]);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            if (vx[i] > floor) gx[i] += gy[i] / vx[i];
        }
    });
}

inline Value sum(Value x) {
    Graph& g = *x.graph();
    double s = 0.0;
    for (double v : x.tensor().values()) s += v;
    return apply_op(g, "sum", {x}, Tensor::scalar(s), [](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const double gy = node_grad(gg, id)[0];
        auto& gx = node_grad(gg, in[0]);
        for (double& v : gx) v += gy;
    });
}

inline Value mean(Value x) {
    Graph& g = *x.graph();
    const std::size_t n = x.tensor().size();
    double s = 0.0;
    for (double v : x.tensor().values()) s += v;
    return apply_op(g, "mean", {x}, Tensor::scalar(s / static_cast<double>(n)),
                    [n](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const double gy = node_grad(gg, id)[0] / static_cast<double>(n);
                        auto& gx = node_grad(gg, in[0]);
                        for (double& v : gx) v += gy;
                    });
}

inline Value dot(Value a, Value b) {
    Graph& g = *a.graph();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    detail::require_same_shape("dot", ta, tb);
    double s = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) s += ta[i] * tb[i];
    return apply_op(g, "dot", {a, b}, Tensor::scalar(s), [](Graph& gg, std::size_t id) {
        const auto& in = node_inputs(gg, id);
        const double gy = node_grad(gg, id)[0];
        const Tensor& va = node_value(gg, in[0]);
        const Tensor& vb = node_value(gg, in[1]);
        auto& ga = node_grad(gg, in[0]);
        auto& gb = node_grad(gg, in[1]);
        for (std::size_t i = 0; i < va.size(); ++i) {
            ga[i] += gy * vb[i];
            gb[i] += gy * va[i];
        }
    });
}

// -- shape primitives ---------------------------------------------------------

inline Value concat(Value a, Value b) {
    Graph& g = *a.graph();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    if (ta.rank() != 1 || tb.rank() != 1) {
        throw Error("concat: expects rank-1 inputs, got " + shape_str(ta.shape()) + " and " +
                    shape_str(tb.shape()));
    }
    std::vector<double> vals = ta.values();
    vals.insert(vals.end(), tb.values().begin(), tb.values().end());
    const std::size_t na = ta.size();
    return apply_op(g, "concat", {a, b}, Tensor::vec(std::move(vals)),
                    [na](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& ga = node_grad(gg, in[0]);
                        auto& gb = node_grad(gg, in[1]);
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
                        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[na + i];
                    });
}

inline Value slice(Value x, std::size_t begin, std::size_t end) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    if (tx.rank() != 1 || begin >= end || end > tx.size()) {
        throw Error("slice: invalid range [" + std::to_string(begin) + ", " +
                    std::to_string(end) + ") for shape " + shape_str(tx.shape()));
    }
    std::vector<double> vals(tx.values().begin() + static_cast<std::ptrdiff_t>(begin),
                             tx.values().begin() + static_cast<std::ptrdiff_t>(end));
    return apply_op(g, "slice", {x}, Tensor::vec(std::move(vals)),
                    [begin](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gx = node_grad(gg, in[0]);
                        for (std::size_t i = 0; i < gy.size(); ++i) gx[begin + i] += gy[i];
                    });
}

inline Value slice_cols(Value x, std::size_t c0, std::size_t c1) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    if (tx.rank() != 2 || c0 >= c1 || c1 > tx.cols()) {
        throw Error("slice_cols: invalid column range [" + std::to_string(c0) + ", " +
                    std::to_string(c1) + ") for shape " + shape_str(tx.shape()));
    }
    const std::size_t rows = tx.rows(), cols = tx.cols(), w = c1 - c0;
    Tensor out({rows, w});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) out.at(r, c) = tx.at(r, c0 + c);
    return apply_op(g, "slice_cols", {x}, std::move(out),
                    [c0, cols, w](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gx = node_grad(gg, in[0]);
                        const std::size_t rows = gy.size() / w;
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < w; ++c)
                                gx[r * cols + c0 + c] += gy[r * w + c];
                    });
}

inline Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw Error("concat_cols: no inputs");
    Graph& g = *parts.front().graph();
    const std::size_t rows = parts.front().tensor().rows();
    std::size_t cols = 0;
    for (const Value& p : parts) {
        if (p.tensor().rank() != 2 || p.tensor().rows() != rows) {
            throw Error("concat_cols: row mismatch " + shape_str(parts.front().shape()) +
                        " vs " + shape_str(p.shape()));
        }
        cols += p.tensor().cols();
    }
    Tensor out({rows, cols});
    std::vector<std::size_t> widths;
    std::size_t off = 0;
    for (const Value& p : parts) {
        const Tensor& t = p.tensor();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
        widths.push_back(t.cols());
        off += t.cols();
    }
    return apply_op(g, "concat_cols", parts, std::move(out),
                    [widths, cols](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        const std::size_t rows = gy.size() / cols;
                        std::size_t off = 0;
                        for (std::size_t k = 0; k < in.size(); ++k) {
                            auto& gp = node_grad(gg, in[k]);
                            for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t c = 0; c < widths[k]; ++c)
                                    gp[r * widths[k] + c] += gy[r * cols + off + c];
                            off += widths[k];
                        }
                    });
}

inline Value transpose(Value x) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    if (tx.rank() != 2) throw Error("transpose: expects rank 2, got " + shape_str(tx.shape()));
    const std::size_t rows = tx.rows(), cols = tx.cols();
    Tensor out({cols, rows});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(c, r) = tx.at(r, c);
    return apply_op(g, "transpose", {x}, std::move(out),
                    [rows, cols](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gx = node_grad(gg, in[0]);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < cols; ++c)
                                gx[r * cols + c] += gy[c * rows + r];
                    });
}

// -- linear algebra -----------------------------------------------------------

inline Value matmul(Value a, Value b) {
    Graph& g = *a.graph();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
        throw Error("matmul: incompatible shapes " + shape_str(ta.shape()) + " and " +
                    shape_str(tb.shape()));
    }
    const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ta.at(i, p);
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * tb.at(p, j);
        }
    return apply_op(g, "matmul", {a, b}, std::move(out),
                    [m, k, n](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        const Tensor& va = node_value(gg, in[0]);
                        const Tensor& vb = node_value(gg, in[1]);
                        auto& ga = node_grad(gg, in[0]);
                        auto& gb = node_grad(gg, in[1]);
                        // dA = dY B^T, dB = A^T dY
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) {
                                const double gv = gy[i * n + j];
                                if (gv == 0.0) continue;
                                for (std::size_t p = 0; p < k; ++p) {
                                    ga[i * k + p] += gv * vb.at(p, j);
                                    gb[p * n + j] += gv * va.at(i, p);
                                }
                            }
                    });
}

/// x W + b. Accepts x of shape [n] (one sample) or [B, n]; W is [n, m], b is [m].
inline Value linear(Value x, Value w, Value b) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    const Tensor& tw = w.tensor();
    const Tensor& tb = b.tensor();
    const bool batched = tx.rank() == 2;
    const std::size_t in_dim = batched ? tx.cols() : tx.size();
    if (tx.rank() > 2 || tw.rank() != 2 || tw.rows() != in_dim || tb.rank() != 1 ||
        tb.size() != tw.cols()) {
        throw Error("linear: incompatible shapes x=" + shape_str(tx.shape()) +
                    " W=" + shape_str(tw.shape()) + " b=" + shape_str(tb.shape()));
    }
    const std::size_t rows = batched ? tx.rows() : 1;
    const std::size_t out_dim = tw.cols();
    Tensor out = batched ? Tensor({rows, out_dim}) : Tensor({out_dim});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < out_dim; ++j) out[r * out_dim + j] = tb[j];
        for (std::size_t i = 0; i < in_dim; ++i) {
            const double xv = tx[r * in_dim + i];
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < out_dim; ++j)
                out[r * out_dim + j] += xv * tw.at(i, j);
        }
    }
    return apply_op(g, "linear", {x, w, b}, std::move(out),
                    [rows, in_dim, out_dim](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        const Tensor& vx = node_value(gg, in[0]);
                        const Tensor& vw = node_value(gg, in[1]);
                        auto& gx = node_grad(gg, in[0]);
                        auto& gw = node_grad(gg, in[1]);
                        auto& gb = node_grad(gg, in[2]);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t j = 0; j < out_dim; ++j) {
                                const double gv = gy[r * out_dim + j];
                                if (gv == 0.0) continue;
                                gb[j] += gv;
                                for (std::size_t i = 0; i < in_dim; ++i) {
                                    gx[r * in_dim + i] += gv * vw.at(i, j);
                                    gw[i * out_dim + j] += gv * vx[r * in_dim + i];
                                }
                            }
                    });
}

// -- softmax ------------------------------------------------------------------

namespace detail {

inline void softmax_1d(const double* x, double* y, std::size_t n, std::size_t stride) {
    double mx = x[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        y[i * stride] = std::exp(x[i * stride] - mx);
        z += y[i * stride];
    }
    for (std::size_t i = 0; i < n; ++i) y[i * stride] /= z;
}

inline void softmax_backward_1d(const double* y, const double* gy, double* gx, std::size_t n,
                                std::size_t stride) {
    double dots = 0.0;
    for (std::size_t i = 0; i < n; ++i) dots += gy[i * stride] * y[i * stride];
    for (std::size_t i = 0; i < n; ++i)
        gx[i * stride] += y[i * stride] * (gy[i * stride] - dots);
}

}  // namespace detail

/// Max-subtracted softmax along `axis`. Rank-1 tensors use axis 0; rank-2
/// tensors normalize rows (axis 1) or columns (axis 0).
inline Value softmax(Value x, std::size_t axis) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    if (tx.rank() == 0 || tx.rank() > 2 || axis >= tx.rank()) {
        throw Error("softmax: unsupported axis " + std::to_string(axis) + " for shape " +
                    shape_str(tx.shape()));
    }
    Tensor out(tx.shape());
    const std::size_t rank = tx.rank();
    if (rank == 1) {
        detail::softmax_1d(tx.values().data(), out.values().data(), tx.size(), 1);
    } else {
        const std::size_t rows = tx.rows(), cols = tx.cols();
        if (axis == 1) {
            for (std::size_t r = 0; r < rows; ++r)
                detail::softmax_1d(tx.values().data() + r * cols,
                                   out.values().data() + r * cols, cols, 1);
        } else {
            for (std::size_t c = 0; c < cols; ++c)
                detail::softmax_1d(tx.values().data() + c, out.values().data() + c, rows, cols);
        }
    }
    return apply_op(g, "softmax", {x}, std::move(out),
                    [rank, axis](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const Tensor& y = node_value(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gx = node_grad(gg, in[0]);
                        if (rank == 1) {
                            detail::softmax_backward_1d(y.values().data(), gy.data(), gx.data(),
                                                        y.size(), 1);
                        } else if (axis == 1) {
                            const std::size_t rows = y.rows(), cols = y.cols();
                            for (std::size_t r = 0; r < rows; ++r)
                                detail::softmax_backward_1d(y.values().data() + r * cols,
                                                            gy.data() + r * cols,
                                                            gx.data() + r * cols, cols, 1);
                        } else {
                            const std::size_t rows = y.rows(), cols = y.cols();
                            for (std::size_t c = 0; c < cols; ++c)
                                detail::softmax_backward_1d(y.values().data() + c, gy.data() + c,
                                                            gx.data() + c, rows, cols);
                        }
                    });
}

inline Value softmax(Value x) { return softmax(x, x.tensor().rank() == 2 ? 1 : 0); }

/// Row r of a rank-2 tensor as a rank-1 vector.
inline Value row(Value x, std::size_t r) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    if (tx.rank() != 2 || r >= tx.rows()) {
        throw Error("row: index " + std::to_string(r) + " out of range for shape " +
                    shape_str(tx.shape()));
    }
    const std::size_t cols = tx.cols();
    std::vector<double> vals(tx.values().begin() + static_cast<std::ptrdiff_t>(r * cols),
                             tx.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    return apply_op(g, "row", {x}, Tensor::vec(std::move(vals)),
                    [r, cols](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gx = node_grad(gg, in[0]);
                        for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += gy[c];
                    });
}

/// Column-wise mean of a rank-2 tensor as a rank-1 vector.
inline Value mean_rows(Value x) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    if (tx.rank() != 2) throw Error("mean_rows: expects rank 2, got " + shape_str(tx.shape()));
    const std::size_t rows = tx.rows(), cols = tx.cols();
    Tensor out({cols});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[c] += tx.at(r, c);
    for (std::size_t c = 0; c < cols; ++c) out[c] /= static_cast<double>(rows);
    return apply_op(g, "mean_rows", {x}, std::move(out),
                    [rows, cols](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gx = node_grad(gg, in[0]);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < cols; ++c)
                                gx[r * cols + c] += gy[c] / static_cast<double>(rows);
                    });
}

// -- lookup, normalization, regularization -----------------------------------

/// Rows of `table` ([V, d]) selected by index; backward scatter-adds into the
/// selected rows. Duplicate indices accumulate.
inline Value gather_rows(Value table, std::vector<std::size_t> idx) {
    Graph& g = *table.graph();
    const Tensor& tt = table.tensor();
    if (tt.rank() != 2) throw Error("gather_rows: table must be rank 2, got " + shape_str(tt.shape()));
    if (idx.empty()) throw Error("gather_rows: empty index list");
    const std::size_t d = tt.cols();
    Tensor out({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= tt.rows()) {
            throw Error("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                        shape_str(tt.shape()));
        }
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) = tt.at(idx[r], c);
    }
    return apply_op(g, "gather_rows", {table}, std::move(out),
                    [idx = std::move(idx), d](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gt = node_grad(gg, in[0]);
                        for (std::size_t r = 0; r < idx.size(); ++r)
                            for (std::size_t c = 0; c < d; ++c)
                                gt[idx[r] * d + c] += gy[r * d + c];
                    });
}

/// Row-wise layer normalization with learned gain and bias.
inline Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5) {
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    const Tensor& tg = gamma.tensor();
    const Tensor& tb = beta.tensor();
    if (tx.rank() != 2 || tg.rank() != 1 || tg.size() != tx.cols() || !tg.same_shape(tb)) {
        throw Error("layer_norm: incompatible shapes x=" + shape_str(tx.shape()) +
                    " gamma=" + shape_str(tg.shape()) + " beta=" + shape_str(tb.shape()));
    }
    const std::size_t rows = tx.rows(), d = tx.cols();
    Tensor out(tx.shape());
    std::vector<double> xhat(rows * d), inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += tx.at(r, c);
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double dv = tx.at(r, c) - mu;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) {
            xhat[r * d + c] = (tx.at(r, c) - mu) * inv_std[r];
            out.at(r, c) = tg[c] * xhat[r * d + c] + tb[c];
        }
    }
    return apply_op(
        g, "layer_norm", {x, gamma, beta}, std::move(out),
        [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& gg,
                                                                        std::size_t id) {
            const auto& in = node_inputs(gg, id);
            const auto& gy = node_grad(gg, id);
            const Tensor& vg = node_value(gg, in[1]);
            auto& gx = node_grad(gg, in[0]);
            auto& ggam = node_grad(gg, in[1]);
            auto& gbet = node_grad(gg, in[2]);
            for (std::size_t r = 0; r < rows; ++r) {
                double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat * xhat)
                for (std::size_t c = 0; c < d; ++c) {
                    const double dyv = gy[r * d + c];
                    const double xh = xhat[r * d + c];
                    ggam[c] += dyv * xh;
                    gbet[c] += dyv;
                    const double dxh = dyv * vg[c];
                    m1 += dxh;
                    m2 += dxh * xh;
                }
                m1 /= static_cast<double>(d);
                m2 /= static_cast<double>(d);
                for (std::size_t c = 0; c < d; ++c) {
                    const double dxh = gy[r * d + c] * vg[c];
                    gx[r * d + c] += inv_std[r] * (dxh - m1 - xhat[r * d + c] * m2);
                }
            }
        });
}

/// Inverted dropout: at train time keeps each element with probability
/// 1 - rate and scales the kept ones by 1/(1 - rate); identity at eval time.
inline Value dropout(Value x, double rate, Rng& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0) {
        throw Error("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) return x;
    Graph& g = *x.graph();
    const Tensor& tx = x.tensor();
    std::vector<double> mask(tx.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = rng.bernoulli(rate) ? 0.0 : keep_scale;
    Tensor out = tx;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return apply_op(g, "dropout", {x}, std::move(out),
                    [mask = std::move(mask)](Graph& gg, std::size_t id) {
                        const auto& in = node_inputs(gg, id);
                        const auto& gy = node_grad(gg, id);
                        auto& gx = node_grad(gg, in[0]);
                        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
                    });
}

/// cos(a, b) as a scalar node. A zero-norm input makes the similarity 0 with
/// zero gradient, so downstream losses stay finite.
inline Value cosine_similarity(Value a, Value b) {
    Graph& g = *a.graph();
    const Tensor& ta = a.tensor();
    const Tensor& tb = b.tensor();
    detail::require_same_shape("cosine_similarity", ta, tb);
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        ab += ta[i] * tb[i];
        aa += ta[i] * ta[i];
        bb += tb[i] * tb[i];
    }
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    const bool degenerate = na == 0.0 || nb == 0.0;
    const double c = degenerate ? 0.0 : ab / (na * nb);
    return apply_op(g, "cosine_similarity", {a, b}, Tensor::scalar(c),
                    [c, na, nb, degenerate](Graph& gg, std::size_t id) {
                        if (degenerate) return;
                        const auto& in = node_inputs(gg, id);
                        const double gy = node_grad(gg, id)[0];
                        const Tensor& va = node_value(gg, in[0]);
                        const Tensor& vb = node_value(gg, in[1]);
                        auto& ga = node_grad(gg, in[0]);
                        auto& gb = node_grad(gg, in[1]);
                        for (std::size_t i = 0; i < va.size(); ++i) {
                            ga[i] += gy * (vb[i] / (na * nb) - c * va[i] / (na * na));
                            gb[i] += gy * (va[i] / (na * nb) - c * vb[i] / (nb * nb));
                        }
                    });
}

}  // namespace cerm
