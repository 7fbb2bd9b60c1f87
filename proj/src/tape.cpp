#include "fairsad/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fairsad::ad {

namespace {

[[noreturn]] void shape_error(OpKind kind, std::size_t index, const std::string& detail) {
    throw std::invalid_argument(std::string(op_name(kind)) + " (node " + std::to_string(index) +
                                "): " + detail);
}

void accumulate(Matrix& slot, Matrix contribution) {
    if (slot.empty()) {
        slot = std::move(contribution);
    } else {
        slot += contribution;
    }
}

double stable_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double sign(double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

}  // namespace

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::Leaf: return "leaf";
        case OpKind::MatMul: return "matmul";
        case OpKind::BiasAdd: return "bias_add";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::SliceCols: return "slice_cols";
        case OpKind::Mul: return "mul";
        case OpKind::Add: return "add";
        case OpKind::Scale: return "scale";
        case OpKind::ScaleColumns: return "scale_columns";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::RowSoftmax: return "row_softmax";
        case OpKind::RowL2Normalize: return "row_l2_normalize";
        case OpKind::ScatterSum: return "scatter_sum";
        case OpKind::Mean: return "mean";
        case OpKind::Sum: return "sum";
        case OpKind::Abs: return "abs";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Divide: return "divide";
        case OpKind::BceWithLogits: return "bce_with_logits";
        case OpKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case OpKind::PairwiseDistance: return "pairwise_distance";
        case OpKind::DoubleCenter: return "double_center";
        case OpKind::DistanceCovariance: return "distance_covariance";
    }
    return "unknown";
}

std::size_t RowLabels::active_rows() const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](int l) { return l >= 0; }));
}

namespace kernels {

namespace {

// Prefix sums over ranks; each slot carries W running totals.
template <std::size_t W>
class Fenwick {
public:
    explicit Fenwick(std::size_t n) : tree_(n + 1) {}
    void add(std::size_t pos, const std::array<double, W>& v) {
        for (std::size_t i = pos + 1; i < tree_.size(); i += i & (~i + 1)) {
            for (std::size_t k = 0; k < W; ++k) {
                tree_[i][k] += v[k];
            }
        }
    }
    // Totals over positions [0, pos].
    std::array<double, W> prefix(std::size_t pos) const {
        std::array<double, W> out{};
        for (std::size_t i = pos + 1; i > 0; i -= i & (~i + 1)) {
            for (std::size_t k = 0; k < W; ++k) {
                out[k] += tree_[i][k];
            }
        }
        return out;
    }

private:
    std::vector<std::array<double, W>> tree_;
};

std::vector<std::size_t> argsort(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return order;
}

std::vector<std::size_t> ranks_of(const std::vector<std::size_t>& order) {
    std::vector<std::size_t> rank(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) {
        rank[order[p]] = p;
    }
    return rank;
}

// (1/n) sum_l |v_i - v_l| for every i, from sorted prefix sums.
std::vector<double> abs_diff_row_means(std::span<const double> v,
                                       const std::vector<std::size_t>& order) {
    const std::size_t n = v.size();
    double total = 0.0;
    for (const double x : v) {
        total += x;
    }
    std::vector<double> out(n);
    double below = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const double vi = v[order[p]];
        const double above = total - below - vi;
        const double sum = vi * static_cast<double>(p) - below + above -
                           vi * static_cast<double>(n - p - 1);
        out[order[p]] = sum / static_cast<double>(n);
        below += vi;
    }
    return out;
}

// Calls visit(i) for every index, in ascending (or descending) order of x,
// running `insert` for a block of equal x values only after the whole block
// was visited. Queries therefore see strictly smaller (larger) x.
template <class Visit, class Insert>
void sweep_groups(std::span<const double> x, const std::vector<std::size_t>& order, bool ascending,
                  Visit visit, Insert insert) {
    const std::size_t n = order.size();
    auto at = [&](std::size_t p) { return order[ascending ? p : n - 1 - p]; };
    for (std::size_t p = 0; p < n;) {
        std::size_t q = p;
        do {
            visit(at(q));
            ++q;
        } while (q < n && x[at(q)] == x[at(p)]);
        for (std::size_t r = p; r < q; ++r) {
            insert(at(r));
        }
        p = q;
    }
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double e) { return std::isfinite(e); });
}

}  // namespace

double column_distance_covariance(std::span<const double> x, std::span<const double> y) {
    // Sorting needs a total order; a diverged input yields NaN instead.
    if (!all_finite(x) || !all_finite(y)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    // The sweep is not symmetric in rounding; a canonical argument order makes
    // the result identical for (x, y) and (y, x).
    if (std::lexicographical_compare(y.begin(), y.end(), x.begin(), x.end())) {
        return column_distance_covariance(y, x);
    }
    const std::size_t n = x.size();
    const double nd = static_cast<double>(n);
    const std::vector<std::size_t> x_order = argsort(x);
    const std::vector<std::size_t> y_order = argsort(y);
    const std::vector<std::size_t> y_rank = ranks_of(y_order);
    const std::vector<double> ra = abs_diff_row_means(x, x_order);
    const std::vector<double> rb = abs_diff_row_means(y, y_order);

    // half = sum over pairs with x_l < x_i of (x_i - x_l) |y_i - y_l|, split by
    // whether y_l lies below or above y_i. Slots: count, sum x, sum y, sum xy.
    Fenwick<4> tree(n);
    std::array<double, 4> inserted{};
    double half = 0.0;
    sweep_groups(
        x, x_order, true,
        [&](std::size_t i) {
            const auto lo = tree.prefix(y_rank[i]);
            std::array<double, 4> hi;
            for (std::size_t k = 0; k < 4; ++k) {
                hi[k] = inserted[k] - lo[k];
            }
            const double xi = x[i];
            const double yi = y[i];
            half += lo[0] * xi * yi - xi * lo[2] - yi * lo[1] + lo[3];
            half -= hi[0] * xi * yi - xi * hi[2] - yi * hi[1] + hi[3];
        },
        [&](std::size_t l) {
            const std::array<double, 4> v{1.0, x[l], y[l], x[l] * y[l]};
            tree.add(y_rank[l], v);
            for (std::size_t k = 0; k < 4; ++k) {
                inserted[k] += v[k];
            }
        });

    double ab = 0.0;
    double ga = 0.0;
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ab += ra[i] * rb[i];
        ga += ra[i];
        gb += rb[i];
    }
    ga /= nd;
    gb /= nd;
    // sum A.*B = sum a.*b - 2n sum ra.*rb + n^2 ga gb
    return (2.0 * half - 2.0 * nd * ab + nd * nd * ga * gb) / (nd * nd);
}

void column_distance_covariance_grad(std::span<const double> x, std::span<const double> y,
                                     double g, std::span<double> grad_x) {
    if (!all_finite(x) || !all_finite(y)) {
        std::fill(grad_x.begin(), grad_x.end(), std::numeric_limits<double>::quiet_NaN());
        return;
    }
    const std::size_t n = x.size();
    const double nd = static_cast<double>(n);
    const std::vector<std::size_t> x_order = argsort(x);
    const std::vector<std::size_t> y_order = argsort(y);
    const std::vector<std::size_t> y_rank = ranks_of(y_order);
    const std::vector<double> rb = abs_diff_row_means(y, y_order);
    double gb = 0.0;
    for (const double v : rb) {
        gb += v;
    }
    gb /= nd;

    // d/dx_i = (2/n^2) sum_l B_il sgn(x_i - x_l), B_il = b_il - rb_i - rb_l + gb,
    // regrouped as sum_l (b_il - rb_l) s_il + (gb - rb_i) sum_l s_il. The two
    // sweeps collect the l with x_l < x_i and with x_l > x_i.
    std::vector<double> weighted(n, 0.0);
    std::vector<double> signs(n, 0.0);
    for (const bool ascending : {true, false}) {
        const double sign = ascending ? 1.0 : -1.0;
        Fenwick<2> tree(n);  // count, sum y
        double count = 0.0;
        double sum_y = 0.0;
        double sum_rb = 0.0;
        sweep_groups(
            x, x_order, ascending,
            [&](std::size_t i) {
                const auto lo = tree.prefix(y_rank[i]);
                const double yi = y[i];
                const double abs_sum =
                    (lo[0] * yi - lo[1]) + ((sum_y - lo[1]) - (count - lo[0]) * yi);
                weighted[i] += sign * (abs_sum - sum_rb);
                signs[i] += sign * count;
            },
            [&](std::size_t l) {
                tree.add(y_rank[l], {1.0, y[l]});
                count += 1.0;
                sum_y += y[l];
                sum_rb += rb[l];
            });
    }
    const double coeff = 2.0 * g / (nd * nd);
    for (std::size_t i = 0; i < n; ++i) {
        grad_x[i] += coeff * (weighted[i] + (gb - rb[i]) * signs[i]);
    }
}

}  // namespace kernels

NodeId Tape::record(Node node) {
    const std::size_t index = nodes_.size();
    for (const std::size_t in : node.inputs) {
        if (in >= index) {
            throw std::invalid_argument(std::string(op_name(node.kind)) + " (node " +
                                        std::to_string(index) + "): input " +
                                        std::to_string(in) + " not on tape");
        }
        node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
    }
    if (node.kind != OpKind::Leaf) {
        node.value = compute(node, index);
    }
    nodes_.push_back(std::move(node));
    return NodeId{index};
}

void Tape::check(NodeId id) const {
    if (id.index >= nodes_.size()) {
        throw std::out_of_range("tape: node " + std::to_string(id.index) + " does not exist");
    }
}

NodeId Tape::variable(Matrix value) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = true;
    return record(std::move(node));
}

NodeId Tape::constant(Matrix value) {
    Node node;
    node.value = std::move(value);
    return record(std::move(node));
}

#define FAIRSAD_UNARY(fn, KIND)            \
    NodeId Tape::fn(NodeId a) {            \
        check(a);                          \
        Node node;                         \
        node.kind = OpKind::KIND;          \
        node.inputs = {a.index};           \
        return record(std::move(node));    \
    }

#define FAIRSAD_BINARY(fn, KIND)                \
    NodeId Tape::fn(NodeId a, NodeId b) {       \
        check(a);                               \
        check(b);                               \
        Node node;                              \
        node.kind = OpKind::KIND;               \
        node.inputs = {a.index, b.index};       \
        return record(std::move(node));         \
    }

FAIRSAD_BINARY(matmul, MatMul)
FAIRSAD_BINARY(bias_add, BiasAdd)
FAIRSAD_BINARY(mul, Mul)
FAIRSAD_BINARY(add, Add)
FAIRSAD_BINARY(scale_columns, ScaleColumns)
FAIRSAD_BINARY(divide, Divide)
FAIRSAD_BINARY(distance_covariance, DistanceCovariance)
FAIRSAD_UNARY(relu, Relu)
FAIRSAD_UNARY(sigmoid, Sigmoid)
FAIRSAD_UNARY(row_softmax, RowSoftmax)
FAIRSAD_UNARY(row_l2_normalize, RowL2Normalize)
FAIRSAD_UNARY(mean, Mean)
FAIRSAD_UNARY(sum, Sum)
FAIRSAD_UNARY(abs, Abs)
FAIRSAD_UNARY(sqrt, Sqrt)
FAIRSAD_UNARY(pairwise_distance, PairwiseDistance)
FAIRSAD_UNARY(double_center, DoubleCenter)

#undef FAIRSAD_UNARY
#undef FAIRSAD_BINARY

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
    Node node;
    node.kind = OpKind::ConcatCols;
    for (const NodeId p : parts) {
        check(p);
        node.inputs.push_back(p.index);
    }
    return record(std::move(node));
}

NodeId Tape::slice_cols(NodeId a, std::size_t begin, std::size_t end) {
    check(a);
    Node node;
    node.kind = OpKind::SliceCols;
    node.inputs = {a.index};
    node.begin = begin;
    node.end = end;
    return record(std::move(node));
}

NodeId Tape::scale(NodeId a, double factor) {
    check(a);
    Node node;
    node.kind = OpKind::Scale;
    node.inputs = {a.index};
    node.factor = factor;
    return record(std::move(node));
}

NodeId Tape::scatter_sum(NodeId rows, NodeId arc_weights, std::shared_ptr<const ArcPattern> arcs) {
    check(rows);
    check(arc_weights);
    Node node;
    node.kind = OpKind::ScatterSum;
    node.inputs = {rows.index, arc_weights.index};
    node.arcs = std::move(arcs);
    return record(std::move(node));
}

NodeId Tape::bce_with_logits(NodeId logits, std::shared_ptr<const RowLabels> targets) {
    check(logits);
    Node node;
    node.kind = OpKind::BceWithLogits;
    node.inputs = {logits.index};
    node.targets = std::move(targets);
    return record(std::move(node));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::shared_ptr<const RowLabels> targets) {
    check(logits);
    Node node;
    node.kind = OpKind::SoftmaxCrossEntropy;
    node.inputs = {logits.index};
    node.targets = std::move(targets);
    return record(std::move(node));
}

double Tape::scalar(NodeId id) const {
    const Matrix& v = value(id);
    if (v.rows() != 1 || v.cols() != 1) {
        throw std::invalid_argument("tape: node " + std::to_string(id.index) + " is " +
                                    v.shape_string() + ", not scalar");
    }
    return v[0];
}

void Tape::set_value(NodeId leaf, Matrix value) {
    check(leaf);
    Node& node = nodes_[leaf.index];
    if (node.kind != OpKind::Leaf) {
        throw std::invalid_argument("tape: node " + std::to_string(leaf.index) +
                                    " is not a leaf");
    }
    if (!node.value.same_shape(value)) {
        throw std::invalid_argument("tape: rebinding leaf " + std::to_string(leaf.index) +
                                    " from " + node.value.shape_string() + " to " +
                                    value.shape_string());
    }
    node.value = std::move(value);
}

void Tape::evaluate() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].kind != OpKind::Leaf) {
            nodes_[i].value = compute(nodes_[i], i);
        }
    }
}

Matrix Tape::compute(const Node& node, std::size_t index) const {
    const OpKind kind = node.kind;
    switch (kind) {
        case OpKind::Leaf:
            return node.value;

        case OpKind::MatMul: {
            const Matrix& a = input(node, 0);
            const Matrix& b = input(node, 1);
            if (a.cols() != b.rows()) {
                shape_error(kind, index, a.shape_string() + " * " + b.shape_string());
            }
            return fairsad::matmul(a, b);
        }

        case OpKind::BiasAdd: {
            const Matrix& a = input(node, 0);
            const Matrix& b = input(node, 1);
            if (b.rows() != 1 || b.cols() != a.cols()) {
                shape_error(kind, index, "bias " + b.shape_string() + " for " + a.shape_string());
            }
            Matrix out = a;
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                for (std::size_t c = 0; c < out.cols(); ++c) {
                    row[c] += b[c];
                }
            }
            return out;
        }

        case OpKind::ConcatCols: {
            if (node.inputs.empty()) {
                shape_error(kind, index, "no inputs");
            }
            const std::size_t rows = input(node, 0).rows();
            std::size_t cols = 0;
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                if (input(node, k).rows() != rows) {
                    shape_error(kind, index, "row mismatch " + input(node, k).shape_string());
                }
                cols += input(node, k).cols();
            }
            Matrix out(rows, cols);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                const Matrix& part = input(node, k);
                for (std::size_t r = 0; r < rows; ++r) {
                    std::copy(part.row(r).begin(), part.row(r).end(), out.row(r).begin() + offset);
                }
                offset += part.cols();
            }
            return out;
        }

        case OpKind::SliceCols: {
            const Matrix& a = input(node, 0);
            if (node.begin > node.end || node.end > a.cols()) {
                shape_error(kind, index,
                            "[" + std::to_string(node.begin) + "," + std::to_string(node.end) +
                                ") outside " + a.shape_string());
            }
            return a.col_slice(node.begin, node.end);
        }

        case OpKind::Mul:
        case OpKind::Add: {
            const Matrix& a = input(node, 0);
            const Matrix& b = input(node, 1);
            if (!a.same_shape(b)) {
                shape_error(kind, index, a.shape_string() + " vs " + b.shape_string());
            }
            Matrix out = a;
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] = kind == OpKind::Mul ? a[i] * b[i] : a[i] + b[i];
            }
            return out;
        }

        case OpKind::Scale: {
            Matrix out = input(node, 0);
            for (auto& v : out.data()) {
                v *= node.factor;
            }
            return out;
        }

        case OpKind::ScaleColumns: {
            const Matrix& a = input(node, 0);
            const Matrix& f = input(node, 1);
            if (f.rows() != 1 || f.cols() != a.cols()) {
                shape_error(kind, index, "factors " + f.shape_string() + " for " + a.shape_string());
            }
            Matrix out = a;
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                for (std::size_t c = 0; c < out.cols(); ++c) {
                    row[c] *= f[c];
                }
            }
            return out;
        }

        case OpKind::Relu: {
            Matrix out = input(node, 0);
            for (auto& v : out.data()) {
                v = v > 0.0 ? v : 0.0;
            }
            return out;
        }

        case OpKind::Sigmoid: {
            Matrix out = input(node, 0);
            for (auto& v : out.data()) {
                v = stable_sigmoid(v);
            }
            return out;
        }

        case OpKind::RowSoftmax: {
            Matrix out = input(node, 0);
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                const double peak = *std::max_element(row.begin(), row.end());
                double total = 0.0;
                for (auto& v : row) {
                    v = std::exp(v - peak);
                    total += v;
                }
                for (auto& v : row) {
                    v /= total;
                }
            }
            return out;
        }

        case OpKind::RowL2Normalize: {
            Matrix out = input(node, 0);
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                double sq = 0.0;
                for (const double v : row) {
                    sq += v * v;
                }
                if (sq > 0.0) {
                    const double inv = 1.0 / std::sqrt(sq);
                    for (auto& v : row) {
                        v *= inv;
                    }
                }
            }
            return out;
        }

        case OpKind::ScatterSum: {
            const Matrix& z = input(node, 0);
            const Matrix& w = input(node, 1);
            const ArcPattern& arcs = *node.arcs;
            if (arcs.num_nodes() != z.rows() || w.rows() != arcs.num_arcs() || w.cols() != 1) {
                shape_error(kind, index,
                            "rows " + z.shape_string() + ", weights " + w.shape_string() +
                                " for " + std::to_string(arcs.num_nodes()) + " nodes / " +
                                std::to_string(arcs.num_arcs()) + " arcs");
            }
            Matrix out(z.rows(), z.cols());
            for (std::size_t u = 0; u < arcs.num_nodes(); ++u) {
                auto target = out.row(u);
                for (std::size_t e = arcs.offsets[u]; e < arcs.offsets[u + 1]; ++e) {
                    const double weight = w[e];
                    const auto source = z.row(arcs.sources[e]);
                    for (std::size_t c = 0; c < target.size(); ++c) {
                        target[c] += weight * source[c];
                    }
                }
            }
            return out;
        }

        case OpKind::Mean:
        case OpKind::Sum: {
            const Matrix& a = input(node, 0);
            if (a.empty()) {
                shape_error(kind, index, "empty input");
            }
            double total = 0.0;
            for (const double v : a.data()) {
                total += v;
            }
            if (kind == OpKind::Mean) {
                total /= static_cast<double>(a.size());
            }
            return Matrix(1, 1, total);
        }

        case OpKind::Abs: {
            Matrix out = input(node, 0);
            for (auto& v : out.data()) {
                v = std::abs(v);
            }
            return out;
        }

        case OpKind::Sqrt: {
            Matrix out = input(node, 0);
            for (auto& v : out.data()) {
                if (v < 0.0) {
                    shape_error(kind, index, "negative argument " + std::to_string(v));
                }
                v = std::sqrt(v);
            }
            return out;
        }

        case OpKind::Divide: {
            const Matrix& a = input(node, 0);
            const Matrix& d = input(node, 1);
            if (d.rows() != 1 || d.cols() != 1) {
                shape_error(kind, index, "denominator " + d.shape_string() + " is not scalar");
            }
            Matrix out = a;
            for (auto& v : out.data()) {
                v /= d[0];
            }
            return out;
        }

        case OpKind::BceWithLogits: {
            const Matrix& z = input(node, 0);
            const auto& labels = node.targets->labels;
            if (z.cols() != 1 || z.rows() != labels.size()) {
                shape_error(kind, index,
                            "logits " + z.shape_string() + " for " +
                                std::to_string(labels.size()) + " labels");
            }
            const std::size_t active = node.targets->active_rows();
            if (active == 0) {
                shape_error(kind, index, "no labeled rows");
            }
            double total = 0.0;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (labels[i] < 0) {
                    continue;
                }
                const double v = z[i];
                total += std::max(v, 0.0) - v * labels[i] + std::log1p(std::exp(-std::abs(v)));
            }
            return Matrix(1, 1, total / static_cast<double>(active));
        }

        case OpKind::SoftmaxCrossEntropy: {
            const Matrix& z = input(node, 0);
            const auto& labels = node.targets->labels;
            if (z.rows() != labels.size()) {
                shape_error(kind, index,
                            "logits " + z.shape_string() + " for " +
                                std::to_string(labels.size()) + " labels");
            }
            const std::size_t active = node.targets->active_rows();
            if (active == 0) {
                shape_error(kind, index, "no labeled rows");
            }
            double total = 0.0;
            for (std::size_t r = 0; r < z.rows(); ++r) {
                if (labels[r] < 0) {
                    continue;
                }
                if (static_cast<std::size_t>(labels[r]) >= z.cols()) {
                    shape_error(kind, index, "label " + std::to_string(labels[r]) +
                                                 " outside " + std::to_string(z.cols()) +
                                                 " classes");
                }
                const auto row = z.row(r);
                const double peak = *std::max_element(row.begin(), row.end());
                double acc = 0.0;
                for (const double v : row) {
                    acc += std::exp(v - peak);
                }
                total += peak + std::log(acc) - row[static_cast<std::size_t>(labels[r])];
            }
            return Matrix(1, 1, total / static_cast<double>(active));
        }

        case OpKind::PairwiseDistance: {
            const Matrix& a = input(node, 0);
            const std::size_t n = a.rows();
            Matrix out(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    double sq = 0.0;
                    for (std::size_t c = 0; c < a.cols(); ++c) {
                        const double diff = a(i, c) - a(j, c);
                        sq += diff * diff;
                    }
                    out(i, j) = out(j, i) = std::sqrt(sq);
                }
            }
            return out;
        }

        case OpKind::DoubleCenter: {
            const Matrix& a = input(node, 0);
            if (a.rows() != a.cols()) {
                shape_error(kind, index, "non-square " + a.shape_string());
            }
            const std::size_t n = a.rows();
            const double nd = static_cast<double>(n);
            std::vector<double> row_mean(n, 0.0);
            std::vector<double> col_mean(n, 0.0);
            double grand = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    row_mean[i] += a(i, j);
                    col_mean[j] += a(i, j);
                    grand += a(i, j);
                }
            }
            for (std::size_t i = 0; i < n; ++i) {
                row_mean[i] /= nd;
                col_mean[i] /= nd;
            }
            grand /= nd * nd;
            Matrix out(n, n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    out(i, j) = a(i, j) - row_mean[i] - col_mean[j] + grand;
                }
            }
            return out;
        }

        case OpKind::DistanceCovariance: {
            const Matrix& a = input(node, 0);
            const Matrix& b = input(node, 1);
            if (!a.same_shape(b)) {
                shape_error(kind, index, a.shape_string() + " vs " + b.shape_string());
            }
            if (a.rows() < 2) {
                shape_error(kind, index, "needs at least 2 rows, got " + a.shape_string());
            }
            const Matrix at = a.transpose();
            const Matrix bt = b.transpose();
            Matrix out(1, a.cols());
            for (std::size_t j = 0; j < a.cols(); ++j) {
                out[j] = kernels::column_distance_covariance(at.row(j), bt.row(j));
            }            return out;
        }
    }
    shape_error(kind, index, "unhandled primitive");
}

void Tape::backward_node(const Node& node, const Matrix& g, std::vector<Matrix>& grads) const {
    const auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].requires_grad; };
    const auto slot = [&](std::size_t k) -> Matrix& { return grads[node.inputs[k]]; };

    switch (node.kind) {
        case OpKind::Leaf:
            return;

        case OpKind::MatMul: {
            const Matrix& a = input(node, 0);
            const Matrix& b = input(node, 1);
            if (wants(0)) {
                accumulate(slot(0), matmul_nt(g, b));
            }
            if (wants(1)) {
                accumulate(slot(1), matmul_tn(a, g));
            }
            return;
        }

        case OpKind::BiasAdd: {
            if (wants(0)) {
                accumulate(slot(0), g);
            }
            if (wants(1)) {
                Matrix db(1, g.cols());
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    for (std::size_t c = 0; c < g.cols(); ++c) {
                        db[c] += g(r, c);
                    }
                }
                accumulate(slot(1), std::move(db));
            }
            return;
        }

        case OpKind::ConcatCols: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                const std::size_t width = input(node, k).cols();
                if (wants(k)) {
                    accumulate(slot(k), g.col_slice(offset, offset + width));
                }
                offset += width;
            }
            return;
        }

        case OpKind::SliceCols: {
            if (wants(0)) {
                const Matrix& a = input(node, 0);
                Matrix da(a.rows(), a.cols());
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = node.begin; c < node.end; ++c) {
                        da(r, c) = g(r, c - node.begin);
                    }
                }
                accumulate(slot(0), std::move(da));
            }
            return;
        }

        case OpKind::Mul: {
            const Matrix& a = input(node, 0);
            const Matrix& b = input(node, 1);
            for (std::size_t k = 0; k < 2; ++k) {
                if (!wants(k)) {
                    continue;
                }
                const Matrix& other = k == 0 ? b : a;
                Matrix d = g;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d[i] *= other[i];
                }
                accumulate(slot(k), std::move(d));
            }
            return;
        }

        case OpKind::Add: {
            for (std::size_t k = 0; k < 2; ++k) {
                if (wants(k)) {
                    accumulate(slot(k), g);
                }
            }
            return;
        }

        case OpKind::Scale: {
            if (wants(0)) {
                Matrix d = g;
                for (auto& v : d.data()) {
                    v *= node.factor;
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::ScaleColumns: {
            const Matrix& a = input(node, 0);
            const Matrix& f = input(node, 1);
            if (wants(0)) {
                Matrix d = g;
                for (std::size_t r = 0; r < d.rows(); ++r) {
                    auto row = d.row(r);
                    for (std::size_t c = 0; c < d.cols(); ++c) {
                        row[c] *= f[c];
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            if (wants(1)) {
                Matrix df(1, f.cols());
                for (std::size_t r = 0; r < a.rows(); ++r) {
                    for (std::size_t c = 0; c < a.cols(); ++c) {
                        df[c] += g(r, c) * a(r, c);
                    }
                }
                accumulate(slot(1), std::move(df));
            }
            return;
        }

        case OpKind::Relu: {
            if (wants(0)) {
                const Matrix& a = input(node, 0);
                Matrix d = g;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    if (!(a[i] > 0.0)) {
                        d[i] = 0.0;
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::Sigmoid: {
            if (wants(0)) {
                Matrix d = g;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    const double y = node.value[i];
                    d[i] *= y * (1.0 - y);
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::RowSoftmax: {
            if (wants(0)) {
                const Matrix& y = node.value;
                Matrix d(y.rows(), y.cols());
                for (std::size_t r = 0; r < y.rows(); ++r) {
                    double dot = 0.0;
                    for (std::size_t c = 0; c < y.cols(); ++c) {
                        dot += g(r, c) * y(r, c);
                    }
                    for (std::size_t c = 0; c < y.cols(); ++c) {
                        d(r, c) = y(r, c) * (g(r, c) - dot);
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::RowL2Normalize: {
            if (wants(0)) {
                const Matrix& x = input(node, 0);
                const Matrix& y = node.value;
                Matrix d(x.rows(), x.cols());
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    double sq = 0.0;
                    double dot = 0.0;
                    for (std::size_t c = 0; c < x.cols(); ++c) {
                        sq += x(r, c) * x(r, c);
                        dot += y(r, c) * g(r, c);
                    }
                    if (sq == 0.0) {
                        continue;  // zero row propagates zero gradient
                    }
                    const double inv = 1.0 / std::sqrt(sq);
                    for (std::size_t c = 0; c < x.cols(); ++c) {
                        d(r, c) = (g(r, c) - y(r, c) * dot) * inv;
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::ScatterSum: {
            const Matrix& z = input(node, 0);
            const Matrix& w = input(node, 1);
            const ArcPattern& arcs = *node.arcs;
            Matrix dz;
            Matrix dw;
            if (wants(0)) {
                dz = Matrix(z.rows(), z.cols());
            }
            if (wants(1)) {
                dw = Matrix(w.rows(), 1);
            }
            for (std::size_t u = 0; u < arcs.num_nodes(); ++u) {
                const auto gu = g.row(u);
                for (std::size_t e = arcs.offsets[u]; e < arcs.offsets[u + 1]; ++e) {
                    const std::size_t v = arcs.sources[e];
                    if (wants(0)) {
                        auto dzv = dz.row(v);
                        for (std::size_t c = 0; c < gu.size(); ++c) {
                            dzv[c] += w[e] * gu[c];
                        }
                    }
                    if (wants(1)) {
                        const auto zv = z.row(v);
                        double dot = 0.0;
                        for (std::size_t c = 0; c < gu.size(); ++c) {
                            dot += gu[c] * zv[c];
                        }
                        dw[e] += dot;
                    }
                }
            }
            if (wants(0)) {
                accumulate(slot(0), std::move(dz));
            }
            if (wants(1)) {
                accumulate(slot(1), std::move(dw));
            }
            return;
        }

        case OpKind::Mean:
        case OpKind::Sum: {
            if (wants(0)) {
                const Matrix& a = input(node, 0);
                const double per = node.kind == OpKind::Mean
                                       ? g[0] / static_cast<double>(a.size())
                                       : g[0];
                accumulate(slot(0), Matrix(a.rows(), a.cols(), per));
            }
            return;
        }

        case OpKind::Abs: {
            if (wants(0)) {
                const Matrix& a = input(node, 0);
                Matrix d = g;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    d[i] *= sign(a[i]);
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::Sqrt: {
            if (wants(0)) {
                Matrix d = g;
                for (std::size_t i = 0; i < d.size(); ++i) {
                    const double root = node.value[i];
                    d[i] = root > 0.0 ? d[i] / (2.0 * root) : 0.0;
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::Divide: {
            const Matrix& a = input(node, 0);
            const double denom = input(node, 1)[0];
            if (wants(0)) {
                Matrix d = g;
                for (auto& v : d.data()) {
                    v /= denom;
                }
                accumulate(slot(0), std::move(d));
            }
            if (wants(1)) {
                double acc = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) {
                    acc += g[i] * a[i];
                }
                accumulate(slot(1), Matrix(1, 1, -acc / (denom * denom)));
            }
            return;
        }

        case OpKind::BceWithLogits: {
            if (wants(0)) {
                const Matrix& z = input(node, 0);
                const auto& labels = node.targets->labels;
                const double scale = g[0] / static_cast<double>(node.targets->active_rows());
                Matrix d(z.rows(), 1);
                for (std::size_t i = 0; i < labels.size(); ++i) {
                    if (labels[i] >= 0) {
                        d[i] = scale * (stable_sigmoid(z[i]) - labels[i]);
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::SoftmaxCrossEntropy: {
            if (wants(0)) {
                const Matrix& z = input(node, 0);
                const auto& labels = node.targets->labels;
                const double scale = g[0] / static_cast<double>(node.targets->active_rows());
                Matrix d(z.rows(), z.cols());
                for (std::size_t r = 0; r < z.rows(); ++r) {
                    if (labels[r] < 0) {
                        continue;
                    }
                    const auto row = z.row(r);
                    const double peak = *std::max_element(row.begin(), row.end());
                    double acc = 0.0;
                    for (const double v : row) {
                        acc += std::exp(v - peak);
                    }
                    for (std::size_t c = 0; c < z.cols(); ++c) {
                        const double p = std::exp(row[c] - peak) / acc;
                        const double target = static_cast<int>(c) == labels[r] ? 1.0 : 0.0;
                        d(r, c) = scale * (p - target);
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::PairwiseDistance: {
            if (wants(0)) {
                const Matrix& a = input(node, 0);
                const Matrix& dist = node.value;
                Matrix d(a.rows(), a.cols());
                for (std::size_t i = 0; i < a.rows(); ++i) {
                    for (std::size_t j = i + 1; j < a.rows(); ++j) {
                        if (dist(i, j) == 0.0) {
                            continue;
                        }
                        const double coeff = (g(i, j) + g(j, i)) / dist(i, j);
                        for (std::size_t c = 0; c < a.cols(); ++c) {
                            const double diff = a(i, c) - a(j, c);
                            d(i, c) += coeff * diff;
                            d(j, c) -= coeff * diff;
                        }
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::DoubleCenter: {
            if (wants(0)) {
                // J g J, same centering applied to the upstream gradient.
                const std::size_t n = g.rows();
                const double nd = static_cast<double>(n);
                std::vector<double> row_mean(n, 0.0);
                std::vector<double> col_mean(n, 0.0);
                double grand = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        row_mean[i] += g(i, j);
                        col_mean[j] += g(i, j);
                        grand += g(i, j);
                    }
                }
                for (std::size_t i = 0; i < n; ++i) {
                    row_mean[i] /= nd;
                    col_mean[i] /= nd;
                }
                grand /= nd * nd;
                Matrix d(n, n);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) {
                        d(i, j) = g(i, j) - row_mean[i] - col_mean[j] + grand;
                    }
                }
                accumulate(slot(0), std::move(d));
            }
            return;
        }

        case OpKind::DistanceCovariance: {
            const Matrix& a = input(node, 0);
            const Matrix& b = input(node, 1);
            const Matrix at = a.transpose();
            const Matrix bt = b.transpose();
            for (std::size_t k = 0; k < 2; ++k) {
                if (!wants(k)) {
                    continue;
                }
                const Matrix& self = k == 0 ? at : bt;
                const Matrix& other = k == 0 ? bt : at;
                Matrix dt(self.rows(), self.cols());
                for (std::size_t j = 0; j < self.rows(); ++j) {
                    if (g[j] != 0.0) {
                        kernels::column_distance_covariance_grad(self.row(j), other.row(j), g[j],
                                                                 dt.row(j));
                    }
                }
                accumulate(slot(k), dt.transpose());
            }
            return;
        }
    }
}

Gradients Tape::backprop(NodeId output) const {
    check(output);
    const Matrix& out = value(output);
    if (out.rows() != 1 || out.cols() != 1) {
        throw std::invalid_argument("backprop: output node " + std::to_string(output.index) +
                                    " is " + out.shape_string() + ", not scalar");
    }
    Gradients result;
    result.grads_.resize(nodes_.size());
    result.shapes_.reserve(nodes_.size());
    result.is_leaf_.reserve(nodes_.size());
    for (const Node& node : nodes_) {
        result.shapes_.emplace_back(node.value.rows(), node.value.cols());
        result.is_leaf_.push_back(node.kind == OpKind::Leaf);
    }
    auto& grads = result.grads_;
    grads[output.index] = Matrix(1, 1, 1.0);
    for (std::size_t i = output.index + 1; i-- > 0;) {
        const Node& node = nodes_[i];
        if (grads[i].empty() || !node.requires_grad || node.kind == OpKind::Leaf) {
            continue;
        }
        backward_node(node, grads[i], grads);
        grads[i] = Matrix();
    }
    return result;
}

Matrix Gradients::of(NodeId id) const {
    if (id.index >= grads_.size()) {
        throw std::out_of_range("gradients: node " + std::to_string(id.index) +
                                " does not exist");
    }
    if (!is_leaf_[id.index]) {
        throw std::invalid_argument("gradients: node " + std::to_string(id.index) +
                                    " is not a leaf");
    }
    if (grads_[id.index].empty()) {
        return Matrix(shapes_[id.index].first, shapes_[id.index].second);
    }
    return grads_[id.index];
}

}  // namespace fairsad::ad
