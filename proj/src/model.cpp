#include "fairsad/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fairsad/gumbel.hpp"

namespace fairsad {

namespace {

LinearParams glorot(std::size_t in, std::size_t out, Rng& rng) {
    LinearParams p{Matrix(in, out), Matrix(1, out)};
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : p.weight.data()) {
        v = rng.uniform(-limit, limit);
    }
    return p;
}

BoundLinear bind_linear(ad::Tape& tape, const LinearParams& p, bool trainable,
                        std::vector<ad::NodeId>& leaves) {
    BoundLinear b;
    b.weight = trainable ? tape.variable(p.weight) : tape.constant(p.weight);
    b.bias = trainable ? tape.variable(p.bias) : tape.constant(p.bias);
    leaves.push_back(b.weight);
    leaves.push_back(b.bias);
    return b;
}

ad::NodeId linear(ad::Tape& tape, ad::NodeId x, const BoundLinear& p) {
    return tape.bias_add(tape.matmul(x, p.weight), p.bias);
}

}  // namespace

void ModelConfig::validate() const {
    if (channels == 0) {
        throw std::invalid_argument("model config: channels must be >= 1");
    }
    if (hidden_dim == 0 || hidden_dim % channels != 0) {
        throw std::invalid_argument("model config: hidden_dim " + std::to_string(hidden_dim) +
                                    " is not divisible by channels " + std::to_string(channels));
    }
    if (layers == 0) {
        throw std::invalid_argument("model config: layers must be >= 1");
    }
    if (use_assigner && assigner_hidden == 0) {
        throw std::invalid_argument("model config: assigner_hidden must be >= 1");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("model config: temperature must be positive");
    }
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::size_t input_dim, Rng& rng) {
    config.validate();
    if (input_dim == 0) {
        throw std::invalid_argument("model: input dimension must be >= 1");
    }
    ModelParams p;
    p.config = config;
    p.input_dim = input_dim;
    const std::size_t k = config.channels;
    const std::size_t width = config.channel_width();
    if (config.use_assigner) {
        p.assigner_hidden = glorot(2 * input_dim, config.assigner_hidden, rng);
        p.assigner_out = glorot(config.assigner_hidden, k, rng);
    }
    for (std::size_t c = 0; c < k; ++c) {
        p.reducers.push_back(glorot(input_dim, width, rng));
    }
    p.updates.resize(config.layers);
    for (std::size_t l = 0; l < config.layers; ++l) {
        for (std::size_t c = 0; c < k; ++c) {
            p.updates[l].push_back(glorot(2 * width, width, rng));
        }
    }
    if (config.use_mask) {
        p.mask_logits = Matrix(1, config.hidden_dim, config.initial_mask_logit);
    }
    p.classifier = glorot(config.hidden_dim, 1, rng);
    p.discriminator = glorot(width, k, rng);
    return p;
}

std::vector<Matrix*> ModelParams::theta() {
    std::vector<Matrix*> out;
    if (config.use_assigner) {
        out.insert(out.end(), {&assigner_hidden.weight, &assigner_hidden.bias,
                               &assigner_out.weight, &assigner_out.bias});
    }
    for (auto& r : reducers) {
        out.insert(out.end(), {&r.weight, &r.bias});
    }
    for (auto& layer : updates) {
        for (auto& u : layer) {
            out.insert(out.end(), {&u.weight, &u.bias});
        }
    }
    if (config.use_mask) {
        out.push_back(&mask_logits);
    }
    out.insert(out.end(), {&classifier.weight, &classifier.bias});
    return out;
}

std::vector<const Matrix*> ModelParams::theta() const {
    auto mutable_ptrs = const_cast<ModelParams*>(this)->theta();
    return {mutable_ptrs.begin(), mutable_ptrs.end()};
}

std::vector<Matrix*> ModelParams::discriminator_params() {
    return {&discriminator.weight, &discriminator.bias};
}

GraphContext GraphContext::build(const AttributedGraph& graph, bool with_arc_inputs) {
    GraphContext ctx;
    ctx.num_nodes = graph.num_nodes;
    ctx.attributes = graph.attributes;
    auto arcs = std::make_shared<ad::ArcPattern>();
    arcs->offsets = graph.offsets;
    arcs->sources = graph.neighbors;
    ctx.arcs = std::move(arcs);
    if (with_arc_inputs) {
        const std::size_t d = graph.feature_dim();
        ctx.arc_inputs = Matrix(graph.num_arcs(), 2 * d);
        for (std::size_t u = 0; u < graph.num_nodes; ++u) {
            const auto xu = graph.attributes.row(u);
            for (std::size_t e = graph.offsets[u]; e < graph.offsets[u + 1]; ++e) {
                const auto xv = graph.attributes.row(graph.neighbors[e]);
                auto row = ctx.arc_inputs.row(e);
                std::copy(xu.begin(), xu.end(), row.begin());
                std::copy(xv.begin(), xv.end(), row.begin() + static_cast<std::ptrdiff_t>(d));
            }
        }
    }
    return ctx;
}

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
    BoundParams b;
    b.config = params.config;
    auto& leaves = b.theta_leaves;
    if (params.config.use_assigner) {
        b.assigner_hidden = bind_linear(tape, params.assigner_hidden, trainable, leaves);
        b.assigner_out = bind_linear(tape, params.assigner_out, trainable, leaves);
    }
    for (const auto& r : params.reducers) {
        b.reducers.push_back(bind_linear(tape, r, trainable, leaves));
    }
    for (const auto& layer : params.updates) {
        b.updates.emplace_back();
        for (const auto& u : layer) {
            b.updates.back().push_back(bind_linear(tape, u, trainable, leaves));
        }
    }
    if (params.config.use_mask) {
        b.mask_logits =
            trainable ? tape.variable(params.mask_logits) : tape.constant(params.mask_logits);
        leaves.push_back(*b.mask_logits);
    }
    b.classifier = bind_linear(tape, params.classifier, trainable, leaves);
    b.discriminator = bind_linear(tape, params.discriminator, trainable, b.discriminator_leaves);
    return b;
}

ad::NodeId assign_neighbor_weights(ad::Tape& tape, const BoundParams& params,
                                   const GraphContext& context) {
    if (!params.assigner_hidden || !params.assigner_out) {
        throw std::logic_error("assign_neighbor_weights: model has no assigner");
    }
    if (context.arc_inputs.rows() != context.arcs->num_arcs()) {
        throw std::logic_error("assign_neighbor_weights: context built without arc inputs");
    }
    const ad::NodeId inputs = tape.constant(context.arc_inputs);
    const ad::NodeId hidden = tape.relu(linear(tape, inputs, *params.assigner_hidden));
    const ad::NodeId scores = linear(tape, hidden, *params.assigner_out);
    return tape.row_softmax(scores);
}

std::vector<ad::NodeId> reduce_attributes(ad::Tape& tape, const BoundParams& params,
                                          ad::NodeId attributes) {
    std::vector<ad::NodeId> reduced;
    reduced.reserve(params.reducers.size());
    for (const auto& r : params.reducers) {
        reduced.push_back(linear(tape, attributes, r));
    }
    return reduced;
}

std::vector<ad::NodeId> disentangled_conv(ad::Tape& tape, const BoundParams& params,
                                          std::span<const ad::NodeId> channels,
                                          ad::NodeId arc_weights, const GraphContext& context,
                                          std::size_t layer) {
    const std::size_t k = channels.size();
    if (layer >= params.updates.size() || params.updates[layer].size() != k) {
        throw std::invalid_argument("disentangled_conv: no update maps for layer " +
                                    std::to_string(layer));
    }
    const std::size_t weight_cols = tape.value(arc_weights).cols();
    std::vector<ad::NodeId> next;
    next.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        const ad::NodeId w =
            weight_cols == 1 ? arc_weights : tape.slice_cols(arc_weights, c, c + 1);
        const ad::NodeId aggregate = tape.scatter_sum(channels[c], w, context.arcs);
        const std::array<ad::NodeId, 2> parts{channels[c], aggregate};
        const ad::NodeId joined = tape.concat_cols(parts);
        const ad::NodeId updated = linear(tape, joined, params.updates[layer][c]);
        next.push_back(tape.row_l2_normalize(updated));
    }
    return next;
}

MaskedRepresentation apply_mask(ad::Tape& tape, ad::NodeId representation,
                                ad::NodeId mask_logits, Mode mode, double temperature, Rng* rng) {
    ad::NodeId mask;
    if (mode == Mode::Train) {
        if (rng == nullptr) {
            throw std::invalid_argument("apply_mask: train mode needs a random stream");
        }
        if (!(temperature > 0.0)) {
            throw std::invalid_argument("apply_mask: temperature must be positive");
        }
        const std::size_t dims = tape.value(mask_logits).cols();
        const ad::NodeId noise = tape.constant(gumbel_difference_noise(dims, *rng));
        mask = tape.sigmoid(tape.scale(tape.add(mask_logits, noise), 1.0 / temperature));
    } else {
        mask = tape.sigmoid(mask_logits);
    }
    return {tape.scale_columns(representation, mask), mask};
}

ad::NodeId classify(ad::Tape& tape, const BoundParams& params, ad::NodeId masked) {
    return linear(tape, masked, params.classifier);
}

std::vector<ad::NodeId> discriminate_channels(ad::Tape& tape, const BoundParams& params,
                                              ad::NodeId masked) {
    const std::size_t k = params.config.channels;
    const std::size_t width = params.config.channel_width();
    std::vector<ad::NodeId> logits;
    logits.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        const ad::NodeId block = tape.slice_cols(masked, c * width, (c + 1) * width);
        logits.push_back(linear(tape, block, params.discriminator));
    }
    return logits;
}

ForwardNodes forward(ad::Tape& tape, const BoundParams& params, const GraphContext& context,
                     Mode mode, Rng* rng) {
    const ModelConfig& config = params.config;
    ForwardNodes out;
    ad::NodeId weights;
    if (config.use_assigner) {
        weights = assign_neighbor_weights(tape, params, context);
        out.arc_weights = weights;
    } else {
        weights = tape.constant(Matrix(context.arcs->num_arcs(), 1,
                                       1.0 / static_cast<double>(config.channels)));
    }
    const ad::NodeId x = tape.constant(context.attributes);
    out.reduced = reduce_attributes(tape, params, x);
    std::vector<ad::NodeId> channels = out.reduced;
    for (std::size_t l = 0; l < config.layers; ++l) {
        channels = disentangled_conv(tape, params, channels, weights, context, l);
    }
    out.channels = channels;
    out.representation = channels.size() == 1 ? channels.front() : tape.concat_cols(channels);

    if (config.use_mask) {
        const MaskedRepresentation m =
            apply_mask(tape, out.representation, *params.mask_logits, mode, config.temperature, rng);
        out.masked = m.masked;
        out.mask = m.mask;
    } else {
        out.mask = tape.constant(Matrix(1, config.hidden_dim, 1.0));
        out.masked = out.representation;
    }
    out.class_logits = classify(tape, params, out.masked);
    if (mode == Mode::Train) {
        out.channel_logits = discriminate_channels(tape, params, out.masked);
    }
    return out;
}

ForwardResult run_forward(const ModelParams& params, const GraphContext& context, Mode mode,
                          Rng* rng) {
    ad::Tape tape;
    const BoundParams bound = bind(tape, params, false);
    const ForwardNodes nodes = forward(tape, bound, context, mode, rng);
    ForwardResult result;
    if (nodes.arc_weights) {
        result.arc_weights = tape.value(*nodes.arc_weights);
    }
    result.representation = tape.value(nodes.representation);
    result.masked = tape.value(nodes.masked);
    result.mask = tape.value(nodes.mask);
    result.class_logits = tape.value(nodes.class_logits);
    for (const auto id : nodes.channel_logits) {
        result.channel_logits.push_back(tape.value(id));
    }
    return result;
}

Matrix gather_channel_logits(std::span<const Matrix> channel_logits,
                             std::span<const std::size_t> nodes) {
    if (channel_logits.empty()) {
        return {};
    }
    const std::size_t classes = channel_logits.front().cols();
    Matrix out(channel_logits.size() * nodes.size(), classes);
    std::size_t r = 0;
    for (const Matrix& logits : channel_logits) {
        for (const std::size_t v : nodes) {
            const auto src = logits.row(v);
            std::copy(src.begin(), src.end(), out.row(r).begin());
            ++r;
        }
    }
    return out;
}

}  // namespace fairsad
