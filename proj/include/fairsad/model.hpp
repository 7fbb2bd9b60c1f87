#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fairsad/graph.hpp"
#include "fairsad/matrix.hpp"
#include "fairsad/rng.hpp"
#include "fairsad/tape.hpp"

namespace fairsad {

enum class Mode { Train, Infer };

struct ModelConfig {
    std::size_t channels = 4;         // K
    std::size_t hidden_dim = 16;      // d_h, split evenly over channels
    std::size_t layers = 1;
    std::size_t assigner_hidden = 16;
    double temperature = 1.0;         // Gumbel relaxation temperature
    double initial_mask_logit = 2.0;
    bool use_assigner = true;         // false: every arc weight is 1/K
    bool use_mask = true;             // false: mask fixed to all ones

    std::size_t channel_width() const { return hidden_dim / channels; }
    void validate() const;
};

struct LinearParams {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out
};

// Learnable parameters. theta() covers assigner, reducers, update maps, mask
// logits and classifier; the channel discriminator is kept apart because it
// is optimized by its own step.
struct ModelParams {
    ModelConfig config;
    std::size_t input_dim = 0;
    LinearParams assigner_hidden;  // 2d -> assigner_hidden
    LinearParams assigner_out;     // assigner_hidden -> K
    std::vector<LinearParams> reducers;              // [channel] d -> d_h/K
    std::vector<std::vector<LinearParams>> updates;  // [layer][channel] 2(d_h/K) -> d_h/K
    Matrix mask_logits;                              // 1 x d_h
    LinearParams classifier;                         // d_h -> 1
    LinearParams discriminator;                      // d_h/K -> K

    // Glorot-uniform weights, zero biases, mask logits at the configured value.
    static ModelParams initialize(const ModelConfig& config, std::size_t input_dim, Rng& rng);

    std::vector<Matrix*> theta();
    std::vector<const Matrix*> theta() const;
    std::vector<Matrix*> discriminator_params();
};

// Graph-dependent constants shared by every forward pass.
struct GraphContext {
    std::shared_ptr<const ad::ArcPattern> arcs;
    Matrix attributes;
    Matrix arc_inputs;  // per arc (u <- v): [x_u || x_v]; empty without assigner
    std::size_t num_nodes = 0;

    static GraphContext build(const AttributedGraph& graph, bool with_arc_inputs = true);
};

struct BoundLinear {
    ad::NodeId weight;
    ad::NodeId bias;
};

// Parameters recorded on a tape, as variables (trainable) or constants.
struct BoundParams {
    std::optional<BoundLinear> assigner_hidden;
    std::optional<BoundLinear> assigner_out;
    std::vector<BoundLinear> reducers;
    std::vector<std::vector<BoundLinear>> updates;
    std::optional<ad::NodeId> mask_logits;
    BoundLinear classifier;
    BoundLinear discriminator;
    ModelConfig config;

    // Leaves in the same order as ModelParams::theta() / discriminator_params().
    std::vector<ad::NodeId> theta_leaves;
    std::vector<ad::NodeId> discriminator_leaves;
};

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool trainable);

// Arc weights, m_arcs x K; each row is a softmax over channels of the
// assigner MLP applied to [x_u || x_v].
ad::NodeId assign_neighbor_weights(ad::Tape& tape, const BoundParams& params,
                                   const GraphContext& context);

// R^k = X W_k + b_k for each channel.
std::vector<ad::NodeId> reduce_attributes(ad::Tape& tape, const BoundParams& params,
                                          ad::NodeId attributes);

// One message-passing layer per channel: weighted neighbor sum, linear update
// on [self || aggregate], then row L2 normalization.
std::vector<ad::NodeId> disentangled_conv(ad::Tape& tape, const BoundParams& params,
                                          std::span<const ad::NodeId> channels,
                                          ad::NodeId arc_weights, const GraphContext& context,
                                          std::size_t layer);

struct MaskedRepresentation {
    ad::NodeId masked;  // H ⊙ m
    ad::NodeId mask;    // 1 x d_h
};

// Train: m = sigmoid((logits + g1 - g0) / temperature), fresh noise per call.
// Infer: m = sigmoid(logits).
MaskedRepresentation apply_mask(ad::Tape& tape, ad::NodeId representation,
                                ad::NodeId mask_logits, Mode mode, double temperature, Rng* rng);

ad::NodeId classify(ad::Tape& tape, const BoundParams& params, ad::NodeId masked);

// Per channel k, an n x K logit matrix from the shared discriminator applied
// to the k-th masked channel block. Row labels are the channel index k.
std::vector<ad::NodeId> discriminate_channels(ad::Tape& tape, const BoundParams& params,
                                              ad::NodeId masked);

struct ForwardNodes {
    std::optional<ad::NodeId> arc_weights;
    std::vector<ad::NodeId> reduced;
    std::vector<ad::NodeId> channels;  // Z^k after the last layer
    ad::NodeId representation;         // H
    ad::NodeId masked;                 // H~
    ad::NodeId mask;
    ad::NodeId class_logits;           // n x 1
    std::vector<ad::NodeId> channel_logits;  // train mode only
};

ForwardNodes forward(ad::Tape& tape, const BoundParams& params, const GraphContext& context,
                     Mode mode, Rng* rng);

struct ForwardResult {
    Matrix arc_weights;
    Matrix representation;
    Matrix masked;
    Matrix mask;
    Matrix class_logits;
    std::vector<Matrix> channel_logits;
};

ForwardResult run_forward(const ModelParams& params, const GraphContext& context, Mode mode,
                          Rng* rng);

// Stacks the rows of each channel's logits for the given nodes:
// (|nodes| * K) x K, channel-major.
Matrix gather_channel_logits(std::span<const Matrix> channel_logits,
                             std::span<const std::size_t> nodes);

}  // namespace fairsad
