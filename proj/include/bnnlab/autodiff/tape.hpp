#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"

namespace bnnlab::ad {

enum class OpKind {
    Leaf,
    Linear,
    AddRow,
    SubRow,
    MulRow,
    DivRow,
    ColumnMean,
    Square,
    Sqrt,
    AddScalar,
    SignSte,
    Relu,
    BatchNorm,
    CenterScale,
    SoftmaxCrossEntropy,
    WeightedSum,
};

inline const char* op_name(OpKind k) {
    switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Linear: return "linear";
    case OpKind::AddRow: return "add_row";
    case OpKind::SubRow: return "sub_row";
    case OpKind::MulRow: return "mul_row";
    case OpKind::DivRow: return "div_row";
    case OpKind::ColumnMean: return "column_mean";
    case OpKind::Square: return "square";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::SignSte: return "sign_ste";
    case OpKind::Relu: return "relu";
    case OpKind::BatchNorm: return "batch_norm";
    case OpKind::CenterScale: return "center_scale";
    case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::WeightedSum: return "weighted_sum";
    }
    return "?";
}

/// Handle to a node recorded on a Tape.
struct Var {
    std::size_t id = std::numeric_limits<std::size_t>::max();
};

/**
 * Reverse-mode tape.
 *
 * Nodes are appended in evaluation order; backward() walks them in exact
 * reverse order and hands each node's accumulated gradient to its backward
 * function, which pushes contributions into its parents via accumulate().
 * A Tape is meant to be used by one thread.
 */
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

    Var leaf(Matrix value) { return record(OpKind::Leaf, std::move(value), {}); }

    Var record(OpKind kind, Matrix value, BackwardFn backward) {
        nodes_.push_back(Node{kind, std::move(value), Matrix{}, false, std::move(backward)});
        return Var{nodes_.size() - 1};
    }

    const Matrix& value(Var v) const { return node(v).value; }

    /// Accumulated gradient; a zero matrix for nodes backward never reached.
    Matrix grad(Var v) const {
        const Node& n = node(v);
        if (!n.has_grad) {
            return Matrix(n.value.rows(), n.value.cols());
        }
        return n.grad;
    }

    bool has_grad(Var v) const { return node(v).has_grad; }

    OpKind kind(Var v) const { return node(v).kind; }
    std::size_t size() const noexcept { return nodes_.size(); }

    bool contains(OpKind kind) const {
        for (const Node& n : nodes_) {
            if (n.kind == kind) {
                return true;
            }
        }
        return false;
    }

    void accumulate(Var v, Matrix g) {
        Node& n = node(v);
        if (!g.same_shape(n.value)) {
            throw ShapeError(std::string("gradient for ") + op_name(n.kind) + " node has shape " +
                             g.shape_string() + ", value has " + n.value.shape_string());
        }
        if (!n.has_grad) {
            n.grad = std::move(g);
            n.has_grad = true;
            return;
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            n.grad[i] += g[i];
        }
    }

    /// Backward from a scalar (1 x 1) root with seed 1.
    void backward(Var root) {
        if (value(root).size() != 1) {
            throw ShapeError("backward() without seed needs a 1x1 root");
        }
        backward(root, Matrix(1, 1, 1.0));
    }

    /// Backward from an arbitrary root with an injected upstream gradient.
    void backward(Var root, const Matrix& seed) {
        for (Node& n : nodes_) {
            n.grad = Matrix{};
            n.has_grad = false;
        }
        accumulate(root, seed);
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.has_grad && n.backward) {
                n.backward(*this, n.grad);
            }
        }
    }

private:
    struct Node {
        OpKind kind;
        Matrix value;
        Matrix grad;
        bool has_grad;
        BackwardFn backward;
    };

    Node& node(Var v) {
        if (v.id >= nodes_.size()) {
            throw ContractViolation("variable does not belong to this tape");
        }
        return nodes_[v.id];
    }
    const Node& node(Var v) const {
        if (v.id >= nodes_.size()) {
            throw ContractViolation("variable does not belong to this tape");
        }
        return nodes_[v.id];
    }

    std::vector<Node> nodes_;
};

}  // namespace bnnlab::ad
