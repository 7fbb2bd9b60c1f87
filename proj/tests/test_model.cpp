#include <doctest.h>

#include <cmath>

#include "fairsad/model.hpp"
#include "support.hpp"

using namespace fairsad;
using ad::NodeId;
using ad::Tape;

namespace {

AttributedGraph small_graph(std::uint64_t seed = 1, std::size_t per_group = 15) {
    SyntheticSpec spec;
    spec.nodes_per_group = per_group;
    spec.p_intra = 0.3;
    spec.p_inter = 0.05;
    spec.feature_dim = 6;
    spec.seed = seed;
    return generate_synthetic(spec);
}

ModelParams make_params(const ModelConfig& config, std::size_t d, std::uint64_t seed = 5) {
    Rng rng(seed);
    return ModelParams::initialize(config, d, rng);
}

double row_norm(const Matrix& m, std::size_t r, std::size_t begin, std::size_t end) {
    double sq = 0.0;
    for (std::size_t c = begin; c < end; ++c) {
        sq += m(r, c) * m(r, c);
    }
    return std::sqrt(sq);
}

}  // namespace

TEST_CASE("config requires hidden width divisible by channels") {
    ModelConfig c;
    c.channels = 3;
    c.hidden_dim = 16;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.channels = 4;
    CHECK_NOTHROW(c.validate());
    CHECK(c.channel_width() == 4);
}

TEST_CASE("zero assigner scores give uniform channel weights") {
    const AttributedGraph g = small_graph();
    ModelParams p = make_params({}, g.feature_dim());
    p.assigner_out.weight.fill(0.0);
    p.assigner_out.bias.fill(0.0);
    const ForwardResult out = run_forward(p, GraphContext::build(g), Mode::Infer, nullptr);
    REQUIRE(out.arc_weights.rows() == g.num_arcs());
    for (const double v : out.arc_weights.data()) {
        CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
}

TEST_CASE("assigner softmax of [0, ln 3] is [1/4, 3/4]") {
    const AttributedGraph g = small_graph();
    ModelConfig c;
    c.channels = 2;
    ModelParams p = make_params(c, g.feature_dim());
    p.assigner_out.weight.fill(0.0);
    p.assigner_out.bias = Matrix{{0.0, std::log(3.0)}};
    const ForwardResult out = run_forward(p, GraphContext::build(g), Mode::Infer, nullptr);
    CHECK(out.arc_weights(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(out.arc_weights(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("channel weights are probability vectors and direction-dependent") {
    const AttributedGraph g = small_graph(2);
    const ModelParams p = make_params({}, g.feature_dim());
    const GraphContext ctx = GraphContext::build(g);
    const ForwardResult out = run_forward(p, ctx, Mode::Infer, nullptr);
    for (std::size_t e = 0; e < out.arc_weights.rows(); ++e) {
        double total = 0.0;
        for (const double v : out.arc_weights.row(e)) {
            CHECK(v > 0.0);
            total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
    // Arc u<-v and its reverse see [x_u||x_v] and [x_v||x_u].
    std::size_t u = 0;
    while (g.degree(u) == 0) {
        ++u;
    }
    const std::size_t v = g.neighbors[g.offsets[u]];
    std::size_t reverse = g.offsets[v];
    while (g.neighbors[reverse] != u) {
        ++reverse;
    }
    CHECK(max_abs_diff(Matrix::row_vector(out.arc_weights.row(g.offsets[u])),
                       Matrix::row_vector(out.arc_weights.row(reverse))) > 0.0);
}

TEST_CASE("reducers are independent linear maps") {
    Tape t;
    ModelConfig c;
    c.channels = 2;
    c.hidden_dim = 4;
    ModelParams p = make_params(c, 2);
    p.reducers[0] = {Matrix::identity(2), Matrix(1, 2, 0.0)};
    const BoundParams b = bind(t, p, false);
    const Matrix x{{1, 0}, {0, 1}};
    const auto r = reduce_attributes(t, b, t.constant(x));
    CHECK(t.value(r[0]) == x);

    const auto zero = reduce_attributes(t, b, t.constant(Matrix(3, 2, 0.0)));
    for (const NodeId id : zero) {
        CHECK(t.value(id) == Matrix(3, 2, 0.0));
    }

    const ModelParams defaults = make_params({}, 8);
    CHECK(defaults.reducers.size() == 4);
    for (const auto& red : defaults.reducers) {
        CHECK(red.weight.cols() == 4);
    }
}

TEST_CASE("weighted neighbor aggregation and isolated nodes") {
    // Node 0 gathers from nodes 1 and 2 with weight 1/2 each; node 3 is isolated.
    auto arcs = std::make_shared<ad::ArcPattern>();
    arcs->offsets = {0, 2, 3, 4, 4};
    arcs->sources = {1, 2, 0, 0};
    Tape t;
    const NodeId z = t.constant(Matrix{{9, 9}, {1, 0}, {0, 1}, {5, 7}});
    const NodeId w = t.constant(Matrix(4, 1, 0.5));
    const Matrix agg = t.value(t.scatter_sum(z, w, arcs));
    CHECK(agg(0, 0) == 0.5);
    CHECK(agg(0, 1) == 0.5);
    CHECK(agg(3, 0) == 0.0);
    CHECK(agg(3, 1) == 0.0);

    // With the self half of the update set to identity and the aggregate half
    // to zero, an isolated node keeps its (normalized) own row.
    ModelConfig c;
    c.channels = 1;
    c.hidden_dim = 2;
    c.use_assigner = false;
    ModelParams p = make_params(c, 2);
    p.updates[0][0].weight = Matrix{{1, 0}, {0, 1}, {0, 0}, {0, 0}};
    p.updates[0][0].bias.fill(0.0);
    GraphContext ctx;
    ctx.arcs = arcs;
    ctx.num_nodes = 4;
    const BoundParams b = bind(t, p, false);
    const std::array<NodeId, 1> channels{z};
    const auto next = disentangled_conv(t, b, channels, w, ctx, 0);
    const Matrix out = t.value(next[0]);
    CHECK(out(3, 0) == doctest::Approx(5.0 / std::sqrt(74.0)));
    CHECK(out(3, 1) == doctest::Approx(7.0 / std::sqrt(74.0)));
}

TEST_CASE("channel blocks have unit row norm after convolution") {
    const AttributedGraph g = small_graph(3);
    ModelConfig c;
    c.layers = 2;
    const ModelParams p = make_params(c, g.feature_dim());
    const ForwardResult out = run_forward(p, GraphContext::build(g), Mode::Infer, nullptr);
    for (std::size_t r = 0; r < out.representation.rows(); ++r) {
        for (std::size_t k = 0; k < 4; ++k) {
            const double norm = row_norm(out.representation, r, 4 * k, 4 * k + 4);
            if (norm > 0.0) {
                CHECK(std::abs(norm - 1.0) < 1e-9);
            }
        }
    }
}

TEST_CASE("perturbing one reducer changes only its channel") {
    const AttributedGraph g = small_graph(4);
    ModelParams p = make_params({}, g.feature_dim());
    const GraphContext ctx = GraphContext::build(g);
    const Matrix before = run_forward(p, ctx, Mode::Infer, nullptr).representation;
    p.reducers[2].weight(0, 0) += 0.3;
    p.reducers[2].bias[1] -= 0.2;
    const Matrix after = run_forward(p, ctx, Mode::Infer, nullptr).representation;
    for (std::size_t r = 0; r < before.rows(); ++r) {
        for (std::size_t c = 0; c < before.cols(); ++c) {
            if (c / 4 == 2) {
                continue;
            }
            CHECK(before(r, c) == after(r, c));
        }
    }
    CHECK(max_abs_diff(before.col_slice(8, 12), after.col_slice(8, 12)) > 0.0);
}

TEST_CASE("saturated mask is the identity") {
    Rng rng(6);
    Tape t;
    const Matrix h = testing::random_matrix(5, 4, rng);
    const NodeId logits = t.constant(Matrix(1, 4, 30.0));
    const auto m = apply_mask(t, t.constant(h), logits, Mode::Infer, 1.0, nullptr);
    CHECK(max_abs_diff(t.value(m.masked), h) < 1e-9);
}

TEST_CASE("a zero mask entry zeroes exactly that column") {
    Rng rng(7);
    Tape t;
    const Matrix h = testing::random_matrix(5, 4, rng);
    const NodeId logits = t.constant(Matrix{{1000, 1000, -1000, 1000}});
    const Matrix out = t.value(apply_mask(t, t.constant(h), logits, Mode::Infer, 1.0, nullptr).masked);
    for (std::size_t r = 0; r < 5; ++r) {
        CHECK(out(r, 2) == 0.0);
        CHECK(out(r, 0) == h(r, 0));
        CHECK(out(r, 3) == h(r, 3));
    }
}

TEST_CASE("masking is columnwise scaling") {
    Rng rng(8);
    Tape t;
    const Matrix h = testing::random_matrix(6, 5, rng);
    const NodeId logits = t.constant(testing::random_matrix(1, 5, rng, -3.0, 3.0));
    Rng noise(9);
    const auto m = apply_mask(t, t.constant(h), logits, Mode::Train, 0.7, &noise);
    const Matrix& mask = t.value(m.mask);
    const Matrix& masked = t.value(m.masked);
    for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t c = 0; c < 5; ++c) {
            CHECK(masked(r, c) == h(r, c) * mask[c]);
        }
    }
    for (const double v : mask.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("train mode needs noise, inference does not") {
    const AttributedGraph g = small_graph(5);
    const ModelParams p = make_params({}, g.feature_dim());
    const GraphContext ctx = GraphContext::build(g);
    CHECK_THROWS_AS(run_forward(p, ctx, Mode::Train, nullptr), std::invalid_argument);

    Rng a(1), b(2);
    const ForwardResult i1 = run_forward(p, ctx, Mode::Infer, &a);
    const ForwardResult i2 = run_forward(p, ctx, Mode::Infer, &b);
    CHECK(i1.masked == i2.masked);
    CHECK(i1.class_logits == i2.class_logits);
    CHECK(i1.channel_logits.empty());

    Rng c(3), d(3);
    const ForwardResult t1 = run_forward(p, ctx, Mode::Train, &c);
    const ForwardResult t2 = run_forward(p, ctx, Mode::Train, &d);
    CHECK(t1.masked == t2.masked);
    CHECK(t1.class_logits == t2.class_logits);
    CHECK(t1.channel_logits.size() == 4);
    // The mask is redrawn on every call.
    const ForwardResult t3 = run_forward(p, ctx, Mode::Train, &c);
    CHECK_FALSE(t3.mask == t1.mask);
}

TEST_CASE("classifier is one linear map") {
    Tape t;
    ModelConfig c;
    c.channels = 2;
    c.hidden_dim = 4;
    ModelParams p = make_params(c, 3);
    p.classifier.bias.fill(0.0);
    const BoundParams zero_bound = bind(t, p, false);
    const Matrix zeros = t.value(classify(t, zero_bound, t.constant(Matrix(7, 4, 0.0))));
    CHECK(zeros.rows() == 7);
    CHECK(zeros.cols() == 1);
    for (const double v : zeros.data()) {
        CHECK(v == 0.0);
        CHECK(1.0 / (1.0 + std::exp(-v)) == 0.5);
    }

    p.classifier.weight = Matrix{{0}, {2.5}, {0}, {0}};
    const BoundParams aligned = bind(t, p, false);
    Rng rng(10);
    const Matrix h = testing::random_matrix(7, 4, rng);
    const Matrix logits = t.value(classify(t, aligned, t.constant(h)));
    for (std::size_t r = 0; r < 7; ++r) {
        CHECK(logits[r] == 2.5 * h(r, 1));
    }
}

TEST_CASE("channel discriminator shapes") {
    const AttributedGraph g = small_graph(6);
    const ModelParams p = make_params({}, g.feature_dim());
    Rng rng(1);
    const ForwardResult out = run_forward(p, GraphContext::build(g), Mode::Train, &rng);
    REQUIRE(out.channel_logits.size() == 4);
    for (const Matrix& m : out.channel_logits) {
        CHECK(m.rows() == g.num_nodes);
        CHECK(m.cols() == 4);
    }
    const std::vector<std::size_t> train{0, 3, 5};
    const Matrix stacked = gather_channel_logits(out.channel_logits, train);
    CHECK(stacked.rows() == 3 * 4);
    // Channel-major: rows [k |V_T|, (k + 1) |V_T|) belong to channel k.
    CHECK(stacked(3 + 1, 2) == out.channel_logits[1](3, 2));
}

TEST_CASE("identical channels cannot both be told apart") {
    Tape t;
    ModelConfig c;
    c.channels = 2;
    c.hidden_dim = 4;
    const ModelParams p = make_params(c, 3);
    const BoundParams b = bind(t, p, false);
    Rng rng(11);
    const Matrix half = testing::random_matrix(20, 2, rng);
    Matrix h(20, 4);
    for (std::size_t r = 0; r < 20; ++r) {
        for (std::size_t j = 0; j < 2; ++j) {
            h(r, j) = h(r, j + 2) = half(r, j);
        }
    }
    const auto logits = discriminate_channels(t, b, t.constant(h));
    std::size_t correct = 0;
    for (std::size_t r = 0; r < 20; ++r) {
        for (std::size_t k = 0; k < 2; ++k) {
            const auto row = t.value(logits[k]).row(r);
            correct += (row[k] > row[1 - k]) ? 1 : 0;
        }
    }
    CHECK(correct <= 20);
}

TEST_CASE("single channel without mask is a plain weighted GNN") {
    const AttributedGraph g = small_graph(7);
    ModelConfig c;
    c.channels = 1;
    c.use_assigner = false;
    c.use_mask = false;
    const ModelParams p = make_params(c, g.feature_dim());
    const ForwardResult out = run_forward(p, GraphContext::build(g), Mode::Infer, nullptr);

    // Reference written with plain loops: R = XW + b, a_u = sum of neighbor
    // rows, z_u = normalize([r_u || a_u] U + c), logit = z w + b.
    const std::size_t n = g.num_nodes;
    const std::size_t w = 16;
    Matrix r = matmul(g.attributes, p.reducers[0].weight);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            r(i, j) += p.reducers[0].bias[j];
        }
    }
    Matrix joined(n, 2 * w);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t j = 0; j < w; ++j) {
            joined(u, j) = r(u, j);
        }
        for (std::size_t e = g.offsets[u]; e < g.offsets[u + 1]; ++e) {
            for (std::size_t j = 0; j < w; ++j) {
                joined(u, w + j) += r(g.neighbors[e], j);
            }
        }
    }
    Matrix z = matmul(joined, p.updates[0][0].weight);
    for (std::size_t u = 0; u < n; ++u) {
        double sq = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            z(u, j) += p.updates[0][0].bias[j];
            sq += z(u, j) * z(u, j);
        }
        for (std::size_t j = 0; j < w; ++j) {
            z(u, j) /= std::sqrt(sq);
        }
    }
    CHECK(max_abs_diff(out.representation, z) < 1e-12);
    CHECK(out.masked == out.representation);
    for (std::size_t u = 0; u < n; ++u) {
        double logit = p.classifier.bias[0];
        for (std::size_t j = 0; j < w; ++j) {
            logit += z(u, j) * p.classifier.weight(j, 0);
        }
        CHECK(std::abs(out.class_logits[u] - logit) < 1e-12);
    }
}

TEST_CASE("all-ones mask reproduces the unmasked classifier output") {
    const AttributedGraph g = small_graph(8);
    ModelParams masked = make_params({}, g.feature_dim());
    ModelParams unmasked = masked;
    unmasked.config.use_mask = false;
    masked.mask_logits.fill(1000.0);
    const GraphContext ctx = GraphContext::build(g);
    const ForwardResult a = run_forward(masked, ctx, Mode::Infer, nullptr);
    const ForwardResult b = run_forward(unmasked, ctx, Mode::Infer, nullptr);
    CHECK(a.masked == b.representation);
    CHECK(a.class_logits == b.class_logits);
}

TEST_CASE("theta follows the enabled components and matches bound leaves") {
    ModelConfig c;
    ModelParams full = make_params(c, 5);
    // assigner 4 + reducers 8 + updates 8 + mask 1 + classifier 2
    CHECK(full.theta().size() == 23);
    c.use_assigner = false;
    c.use_mask = false;
    ModelParams bare = make_params(c, 5);
    CHECK(bare.theta().size() == 18);
    CHECK(bare.discriminator_params().size() == 2);

    Tape t;
    const BoundParams b = bind(t, full, true);
    const auto theta = full.theta();
    REQUIRE(b.theta_leaves.size() == theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        CHECK(t.value(b.theta_leaves[i]) == *theta[i]);
        CHECK(t.requires_grad(b.theta_leaves[i]));
    }
}

TEST_CASE("initialization: zero biases, mask logits at +2, bounded weights") {
    const ModelParams p = make_params({}, 10);
    for (const double v : p.mask_logits.data()) {
        CHECK(v == 2.0);
    }
    CHECK(1.0 / (1.0 + std::exp(-2.0)) == doctest::Approx(0.8808).epsilon(1e-4));
    for (const auto& r : p.reducers) {
        CHECK(r.bias == Matrix(1, 4, 0.0));
        const double limit = std::sqrt(6.0 / (10.0 + 4.0));
        for (const double v : r.weight.data()) {
            CHECK(std::abs(v) <= limit);
        }
    }
}
