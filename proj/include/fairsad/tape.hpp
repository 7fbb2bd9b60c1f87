#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "fairsad/matrix.hpp"

namespace fairsad::ad {

struct NodeId {
    std::size_t index = 0;
    bool operator==(const NodeId&) const = default;
};

enum class OpKind {
    Leaf,
    MatMul,
    BiasAdd,
    ConcatCols,
    SliceCols,
    Mul,
    Add,
    Scale,
    ScaleColumns,
    Relu,
    Sigmoid,
    RowSoftmax,
    RowL2Normalize,
    ScatterSum,
    Mean,
    Sum,
    Abs,
    Sqrt,
    Divide,
    BceWithLogits,
    SoftmaxCrossEntropy,
    PairwiseDistance,
    DoubleCenter,
    DistanceCovariance,
};

std::string_view op_name(OpKind kind);

// Arc list in CSR order: arcs of target u are [offsets[u], offsets[u+1]) and
// sources[e] is the neighbor whose row is gathered through arc e.
struct ArcPattern {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> sources;
    std::size_t num_nodes() const { return offsets.empty() ? 0 : offsets.size() - 1; }
    std::size_t num_arcs() const { return sources.size(); }
};

// Per-row supervision for the two cross-entropy primitives. Rows with a
// negative label are ignored; the loss is averaged over the remaining rows.
struct RowLabels {
    std::vector<int> labels;
    std::size_t active_rows() const;
};

class Gradients;

// Define-by-run tape. Each primitive computes its value eagerly and records
// its inputs; evaluate() recomputes every non-leaf node from the current leaf
// values, so a tape can be rebound and replayed.
class Tape {
public:
    NodeId variable(Matrix value);
    NodeId constant(Matrix value);

    NodeId matmul(NodeId a, NodeId b);
    NodeId bias_add(NodeId a, NodeId bias);
    NodeId concat_cols(std::span<const NodeId> parts);
    NodeId slice_cols(NodeId a, std::size_t begin, std::size_t end);
    NodeId mul(NodeId a, NodeId b);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId a, double factor);
    NodeId scale_columns(NodeId a, NodeId column_factors);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId row_softmax(NodeId a);
    NodeId row_l2_normalize(NodeId a);
    // out[u] = sum over arcs e of u of weights[e] * rows[sources[e]].
    NodeId scatter_sum(NodeId rows, NodeId arc_weights, std::shared_ptr<const ArcPattern> arcs);
    NodeId mean(NodeId a);
    NodeId sum(NodeId a);
    NodeId abs(NodeId a);
    NodeId sqrt(NodeId a);
    // a / d with d a 1x1 node.
    NodeId divide(NodeId a, NodeId denominator);
    // Mean binary cross-entropy of n x 1 logits against 0/1 labels.
    NodeId bce_with_logits(NodeId logits, std::shared_ptr<const RowLabels> targets);
    // Mean softmax cross-entropy of n x C logits against class indices.
    NodeId softmax_cross_entropy(NodeId logits, std::shared_ptr<const RowLabels> targets);
    // n x n matrix of Euclidean distances between rows.
    NodeId pairwise_distance(NodeId a);
    // J a J with J = I - 11^T / n.
    NodeId double_center(NodeId a);
    // 1 x w row: per column j, (1/n^2) sum_{i,l} A_il B_il with A, B the
    // double-centered absolute-difference matrices of column j of a and b.
    NodeId distance_covariance(NodeId a, NodeId b);

    const Matrix& value(NodeId id) const { return nodes_.at(id.index).value; }
    double scalar(NodeId id) const;
    OpKind kind(NodeId id) const { return nodes_.at(id.index).kind; }
    std::size_t size() const { return nodes_.size(); }
    bool requires_grad(NodeId id) const { return nodes_.at(id.index).requires_grad; }

    // Rebinds a leaf. The shape must not change.
    void set_value(NodeId leaf, Matrix value);
    // Recomputes all non-leaf nodes in recording order.
    void evaluate();

    // Reverse sweep from a 1x1 output node.
    Gradients backprop(NodeId output) const;

private:
    struct Node {
        OpKind kind = OpKind::Leaf;
        std::vector<std::size_t> inputs;
        Matrix value;
        bool requires_grad = false;
        double factor = 0.0;
        std::size_t begin = 0;
        std::size_t end = 0;
        std::shared_ptr<const ArcPattern> arcs;
        std::shared_ptr<const RowLabels> targets;
    };

    NodeId record(Node node);
    Matrix compute(const Node& node, std::size_t index) const;
    const Matrix& input(const Node& node, std::size_t k) const {
        return nodes_[node.inputs[k]].value;
    }
    void check(NodeId id) const;
    void backward_node(const Node& node, const Matrix& grad_out,
                       std::vector<Matrix>& grads) const;

    std::vector<Node> nodes_;
};

class Gradients {
public:
    // Gradient of a leaf; a zero matrix of the leaf's shape when the sweep
    // never reached it. Interior gradients are released during the sweep.
    Matrix of(NodeId id) const;
    bool reached(NodeId id) const { return !grads_.at(id.index).empty(); }

private:
    friend class Tape;
    std::vector<Matrix> grads_;
    std::vector<std::pair<std::size_t, std::size_t>> shapes_;
    std::vector<bool> is_leaf_;
};

// Forward kernels shared by the tape and by value-level callers.
namespace kernels {
// Per-column distance covariance with the streaming O(n^2)-time,
// O(n)-memory formulation.
double column_distance_covariance(std::span<const double> x, std::span<const double> y);
// d dCov^2(x, y) / dx given upstream gradient g; y is held fixed.
void column_distance_covariance_grad(std::span<const double> x, std::span<const double> y,
                                     double g, std::span<double> grad_x);
}  // namespace kernels

}  // namespace fairsad::ad
