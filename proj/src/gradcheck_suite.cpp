#include "fairsad/gradcheck_suite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>

#include "fairsad/gradcheck.hpp"
#include "fairsad/graph.hpp"
#include "fairsad/model.hpp"
#include "fairsad/objectives.hpp"
#include "fairsad/rng.hpp"
#include "fairsad/tape.hpp"

namespace fairsad {

namespace {

using ad::NodeId;
using ad::Tape;

struct Case {
    NodeId output;
    std::vector<NodeId> leaves;
};

using Builder = std::function<Case(Tape&, Rng&)>;

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) {
        v = rng.uniform(lo, hi);
    }
    return m;
}

// Entries with magnitude in [0.2, 1] and random sign: clear of the kink at 0.
Matrix signed_away_from_zero(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data()) {
        v = rng.uniform(0.2, 1.0) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
    }
    return m;
}

// Column entries pairwise at least `gap` apart, so |x_i - x_l| stays smooth.
Matrix separated_columns(std::size_t rows, std::size_t cols, Rng& rng, double gap = 1e-2) {
    for (;;) {
        Matrix m = random_matrix(rows, cols, rng, -2.0, 2.0);
        bool ok = true;
        for (std::size_t c = 0; c < cols && ok; ++c) {
            for (std::size_t i = 0; i < rows && ok; ++i) {
                for (std::size_t l = i + 1; l < rows && ok; ++l) {
                    ok = std::abs(m(i, c) - m(l, c)) >= gap;
                }
            }
        }
        if (ok) {
            return m;
        }
    }
}

// sum(R * x) for a fixed random R; turns any node into a generic scalar.
NodeId weighted_sum(Tape& tape, NodeId x, Rng& rng) {
    const Matrix& v = tape.value(x);
    return tape.sum(tape.mul(x, tape.constant(random_matrix(v.rows(), v.cols(), rng))));
}

Case unary(Tape& tape, Rng& rng, Matrix point, NodeId (Tape::*op)(NodeId)) {
    const NodeId x = tape.variable(std::move(point));
    return {weighted_sum(tape, (tape.*op)(x), rng), {x}};
}

Case binary(Tape& tape, Rng& rng, Matrix a, Matrix b, NodeId (Tape::*op)(NodeId, NodeId)) {
    const NodeId x = tape.variable(std::move(a));
    const NodeId y = tape.variable(std::move(b));
    return {weighted_sum(tape, (tape.*op)(x, y), rng), {x, y}};
}

std::shared_ptr<ad::ArcPattern> random_arcs(std::size_t n, Rng& rng) {
    auto arcs = std::make_shared<ad::ArcPattern>();
    arcs->offsets.push_back(0);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            if (v != u && rng.bernoulli(0.4)) {
                arcs->sources.push_back(v);
            }
        }
        arcs->offsets.push_back(arcs->sources.size());
    }
    return arcs;
}

std::vector<int> balanced_groups(std::size_t n, Rng& rng) {
    std::vector<int> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = i % 2 == 0 ? 1 : 0;
    }
    for (std::size_t i = n - 1; i > 0; --i) {
        std::swap(s[i], s[rng.below(i + 1)]);
    }
    return s;
}

std::vector<std::size_t> first_nodes(std::size_t count) {
    std::vector<std::size_t> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = i;
    }
    return out;
}

std::vector<std::pair<std::string, Builder>> primitive_cases() {
    std::vector<std::pair<std::string, Builder>> cases;
    auto add = [&](ad::OpKind kind, Builder b) {
        cases.emplace_back(std::string(ad::op_name(kind)), std::move(b));
    };

    add(ad::OpKind::MatMul, [](Tape& t, Rng& r) {
        return binary(t, r, random_matrix(4, 3, r), random_matrix(3, 5, r), &Tape::matmul);
    });
    add(ad::OpKind::BiasAdd, [](Tape& t, Rng& r) {
        return binary(t, r, random_matrix(4, 3, r), random_matrix(1, 3, r), &Tape::bias_add);
    });
    add(ad::OpKind::ConcatCols, [](Tape& t, Rng& r) {
        const NodeId a = t.variable(random_matrix(4, 2, r));
        const NodeId b = t.variable(random_matrix(4, 3, r));
        const std::array<NodeId, 2> parts{a, b};
        return Case{weighted_sum(t, t.concat_cols(parts), r), {a, b}};
    });
    add(ad::OpKind::SliceCols, [](Tape& t, Rng& r) {
        const NodeId a = t.variable(random_matrix(4, 5, r));
        return Case{weighted_sum(t, t.slice_cols(a, 1, 4), r), {a}};
    });
    add(ad::OpKind::Mul, [](Tape& t, Rng& r) {
        return binary(t, r, random_matrix(3, 4, r), random_matrix(3, 4, r), &Tape::mul);
    });
    add(ad::OpKind::Add, [](Tape& t, Rng& r) {
        return binary(t, r, random_matrix(3, 4, r), random_matrix(3, 4, r), &Tape::add);
    });
    add(ad::OpKind::Scale, [](Tape& t, Rng& r) {
        const NodeId a = t.variable(random_matrix(3, 4, r));
        return Case{weighted_sum(t, t.scale(a, r.uniform(-2.0, 2.0)), r), {a}};
    });
    add(ad::OpKind::ScaleColumns, [](Tape& t, Rng& r) {
        return binary(t, r, random_matrix(5, 4, r), random_matrix(1, 4, r), &Tape::scale_columns);
    });
    add(ad::OpKind::Relu, [](Tape& t, Rng& r) {
        return unary(t, r, signed_away_from_zero(4, 4, r), &Tape::relu);
    });
    add(ad::OpKind::Sigmoid, [](Tape& t, Rng& r) {
        return unary(t, r, random_matrix(4, 4, r, -3.0, 3.0), &Tape::sigmoid);
    });
    add(ad::OpKind::RowSoftmax, [](Tape& t, Rng& r) {
        return unary(t, r, random_matrix(4, 5, r, -2.0, 2.0), &Tape::row_softmax);
    });
    add(ad::OpKind::RowL2Normalize, [](Tape& t, Rng& r) {
        return unary(t, r, signed_away_from_zero(4, 3, r), &Tape::row_l2_normalize);
    });
    add(ad::OpKind::ScatterSum, [](Tape& t, Rng& r) {
        auto arcs = random_arcs(6, r);
        const NodeId z = t.variable(random_matrix(6, 3, r));
        const NodeId w = t.variable(random_matrix(arcs->num_arcs(), 1, r, 0.1, 1.0));
        return Case{weighted_sum(t, t.scatter_sum(z, w, arcs), r), {z, w}};
    });
    add(ad::OpKind::Mean, [](Tape& t, Rng& r) {
        const NodeId a = t.variable(random_matrix(3, 4, r));
        return Case{t.scale(t.mean(a), r.uniform(0.5, 2.0)), {a}};
    });
    add(ad::OpKind::Sum, [](Tape& t, Rng& r) {
        const NodeId a = t.variable(random_matrix(3, 4, r));
        return Case{t.scale(t.sum(a), r.uniform(0.5, 2.0)), {a}};
    });
    add(ad::OpKind::Abs, [](Tape& t, Rng& r) {
        return unary(t, r, signed_away_from_zero(4, 4, r), &Tape::abs);
    });
    add(ad::OpKind::Sqrt, [](Tape& t, Rng& r) {
        return unary(t, r, random_matrix(4, 4, r, 0.5, 2.0), &Tape::sqrt);
    });
    add(ad::OpKind::Divide, [](Tape& t, Rng& r) {
        return binary(t, r, random_matrix(3, 4, r), random_matrix(1, 1, r, 1.0, 2.0),
                      &Tape::divide);
    });
    add(ad::OpKind::BceWithLogits, [](Tape& t, Rng& r) {
        auto targets = std::make_shared<ad::RowLabels>();
        for (std::size_t i = 0; i < 8; ++i) {
            targets->labels.push_back(i == 3 ? -1 : static_cast<int>(r.below(2)));
        }
        const NodeId z = t.variable(random_matrix(8, 1, r, -3.0, 3.0));
        return Case{t.bce_with_logits(z, targets), {z}};
    });
    add(ad::OpKind::SoftmaxCrossEntropy, [](Tape& t, Rng& r) {
        auto targets = std::make_shared<ad::RowLabels>();
        for (std::size_t i = 0; i < 8; ++i) {
            targets->labels.push_back(i == 5 ? -1 : static_cast<int>(r.below(4)));
        }
        const NodeId z = t.variable(random_matrix(8, 4, r, -3.0, 3.0));
        return Case{t.softmax_cross_entropy(z, targets), {z}};
    });
    add(ad::OpKind::PairwiseDistance, [](Tape& t, Rng& r) {
        return unary(t, r, separated_columns(6, 2, r), &Tape::pairwise_distance);
    });
    add(ad::OpKind::DoubleCenter, [](Tape& t, Rng& r) {
        return unary(t, r, random_matrix(5, 5, r), &Tape::double_center);
    });
    add(ad::OpKind::DistanceCovariance, [](Tape& t, Rng& r) {
        return binary(t, r, separated_columns(8, 2, r), separated_columns(8, 2, r),
                      &Tape::distance_covariance);
    });
    return cases;
}

std::vector<std::pair<std::string, Builder>> loss_cases() {
    std::vector<std::pair<std::string, Builder>> cases;
    constexpr std::size_t n = 8;
    constexpr std::size_t channels = 2;
    constexpr std::size_t width = 2;

    cases.emplace_back("dcov_squared_composite", [](Tape& t, Rng& r) {
        const NodeId a = t.variable(separated_columns(n, width, r));
        const NodeId b = t.variable(separated_columns(n, width, r));
        return Case{dcov_squared_composite(t, a, b), {a, b}};
    });
    cases.emplace_back("mask_covariance_loss", [](Tape& t, Rng& r) {
        const std::vector<int> s = balanced_groups(n, r);
        const NodeId h = t.variable(random_matrix(n, channels * width, r));
        return Case{mask_covariance_loss(t, h, s), {h}};
    });
    cases.emplace_back("distance_correlation_loss", [](Tape& t, Rng& r) {
        const NodeId h = t.variable(separated_columns(n, channels * width, r));
        return Case{distance_correlation_loss(t, h, channels), {h}};
    });
    cases.emplace_back("discriminator_loss", [](Tape& t, Rng& r) {
        const NodeId h = t.variable(random_matrix(n, channels * width, r));
        const NodeId w = t.variable(random_matrix(width, channels, r));
        const NodeId b = t.variable(random_matrix(1, channels, r));
        std::vector<NodeId> logits;
        for (std::size_t k = 0; k < channels; ++k) {
            logits.push_back(t.bias_add(t.matmul(t.slice_cols(h, k * width, (k + 1) * width), w), b));
        }
        const std::vector<std::size_t> train = first_nodes(n - 2);
        return Case{discriminator_loss(t, logits, train), {h, w, b}};
    });
    cases.emplace_back("total_loss", [](Tape& t, Rng& r) {
        SyntheticSpec spec;
        spec.nodes_per_group = 5;
        spec.feature_dim = 4;
        spec.p_intra = 0.5;
        spec.p_inter = 0.2;
        spec.label_correlation = 0.5;
        spec.seed = r.below(1u << 30);
        const AttributedGraph graph = generate_synthetic(spec);
        ModelConfig config;
        config.channels = channels;
        config.hidden_dim = channels * width;
        config.assigner_hidden = 4;
        Rng init(r.next_u64());
        const ModelParams params = ModelParams::initialize(config, graph.feature_dim(), init);
        const GraphContext context = GraphContext::build(graph);
        const BoundParams bound = bind(t, params, true);
        Rng noise(r.next_u64());
        const ForwardNodes fwd = forward(t, bound, context, Mode::Train, &noise);
        const std::vector<std::size_t> train = first_nodes(graph.num_nodes);
        const LossNodes losses = combine_losses(
            t, classification_loss(t, fwd.class_logits, graph.labels, train),
            distance_correlation_loss(t, fwd.masked, channels),
            discriminator_loss(t, fwd.channel_logits, train),
            mask_covariance_loss(t, fwd.masked, graph.sensitive), 0.1, 1.0);
        std::vector<NodeId> leaves = bound.theta_leaves;
        leaves.insert(leaves.end(), bound.discriminator_leaves.begin(),
                      bound.discriminator_leaves.end());
        return Case{losses.total, leaves};
    });
    return cases;
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck_suite(const GradcheckOptions& options) {
    auto cases = primitive_cases();
    auto losses = loss_cases();
    cases.insert(cases.end(), std::make_move_iterator(losses.begin()),
                 std::make_move_iterator(losses.end()));

    std::vector<GradcheckEntry> entries;
    Rng root(options.seed);
    for (std::size_t c = 0; c < cases.size(); ++c) {
        GradcheckEntry entry;
        entry.name = cases[c].first;
        Rng rng = root.split(c);
        for (std::size_t p = 0; p < options.points; ++p) {
            Tape tape;
            const Case built = cases[c].second(tape, rng);
            const double err =
                ad::finite_difference_check(tape, built.output, built.leaves, options.step);
            entry.max_error = std::max(entry.max_error, std::isfinite(err) ? err : INFINITY);
            ++entry.points;
        }
        entry.passed = entry.max_error < options.tolerance;
        entries.push_back(entry);
    }
    return entries;
}

bool all_passed(const std::vector<GradcheckEntry>& entries) {
    return std::all_of(entries.begin(), entries.end(),
                       [](const GradcheckEntry& e) { return e.passed; });
}

}  // namespace fairsad
