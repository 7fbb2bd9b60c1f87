#include "fairsad/harness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fairsad/adam.hpp"
#include "fairsad/rng.hpp"
#include "fairsad/tape.hpp"

namespace fairsad {

namespace {

std::vector<Matrix> gradients_of(const ad::Gradients& grads, std::span<const ad::NodeId> leaves) {
    std::vector<Matrix> out;
    out.reserve(leaves.size());
    for (const ad::NodeId id : leaves) {
        out.push_back(grads.of(id));
    }
    return out;
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data().begin(), m.data().end(), [](double v) { return std::isfinite(v); });
}

ad::NodeId zero(ad::Tape& tape) { return tape.constant(Matrix(1, 1, 0.0)); }

Metrics evaluate_in(const ModelParams& params, const GraphContext& context,
                    const AttributedGraph& graph, std::span<const std::size_t> nodes) {
    const ForwardResult out = run_forward(params, context, Mode::Infer, nullptr);
    return compute_metrics(out.class_logits.data(), graph.labels, graph.sensitive, nodes);
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
    Dataset data;
    if (config.synthetic) {
        data.graph = generate_synthetic(config.synthetic_spec);
        data.source = "synthetic";
    } else if (!config.nodes_path.empty() && !config.edges_path.empty()) {
        LoadedGraph loaded = load_graph(config.nodes_path, config.edges_path, config.schema);
        data.graph = std::move(loaded.graph);
        data.report = loaded.report;
        data.source = config.nodes_path;
    } else {
        throw std::invalid_argument("no dataset: set nodes and edges, or synthetic = true");
    }
    if (config.normalize) {
        data.graph = normalize_features(std::move(data.graph));
    }
    data.masks = split_nodes(data.graph, config.split, config.split_seed);
    return data;
}

const std::vector<std::size_t>& eval_nodes(const RunConfig& config, const SplitMasks& masks) {
    return config.eval_split == EvalSplit::Test ? masks.test : masks.val;
}

Metrics evaluate(const ModelParams& params, const AttributedGraph& graph,
                 std::span<const std::size_t> nodes) {
    return evaluate_in(params, GraphContext::build(graph, params.config.use_assigner), graph, nodes);
}

TrainResult train(const RunConfig& config, const Dataset& data, std::uint64_t seed) {
    config.validate();
    const AttributedGraph& graph = data.graph;
    const SplitMasks& masks = data.masks;
    if (masks.train.empty()) {
        throw std::invalid_argument("train: empty train split");
    }
    const ModelConfig model = config.effective_model();
    const bool macro = config.macro_active();
    const bool mask_loss = config.mask_loss_active();
    const std::span<const std::size_t> mask_nodes =
        config.mask_loss_nodes == MaskLossNodes::All ? std::span<const std::size_t>{}
                                                     : std::span<const std::size_t>(masks.train);

    const Rng root(seed);
    Rng init = root.split(1);
    Rng noise = root.split(2);
    const GraphContext context = GraphContext::build(graph, model.use_assigner);

    TrainResult result;
    result.params = ModelParams::initialize(model, graph.feature_dim(), init);
    result.initial = result.params;
    ModelParams& params = result.params;
    ModelParams best = params;

    AdamOptions options;
    options.lr = config.lr;
    options.weight_decay = config.weight_decay;
    const std::vector<Matrix*> theta = params.theta();
    const std::vector<Matrix*> disc = params.discriminator_params();
    AdamState theta_state = AdamState::for_parameters(theta, options);
    AdamState disc_state = AdamState::for_parameters(disc, options);

    double best_auc = -1.0;
    result.history.epochs.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        ad::Tape tape;
        const BoundParams bound = bind(tape, params, true);
        const ForwardNodes fwd = forward(tape, bound, context, Mode::Train, &noise);

        const ad::NodeId l_c = classification_loss(tape, fwd.class_logits, graph.labels, masks.train);
        const ad::NodeId l_dc =
            macro ? distance_correlation_loss(tape, fwd.masked, model.channels) : zero(tape);
        const ad::NodeId l_d =
            macro ? discriminator_loss(tape, fwd.channel_logits, masks.train) : zero(tape);
        const ad::NodeId l_m =
            mask_loss ? mask_covariance_loss(tape, fwd.masked, graph.sensitive, mask_nodes)
                      : zero(tape);
        const LossNodes losses = combine_losses(tape, l_c, l_dc, l_d, l_m, config.alpha, config.beta);

        EpochRecord record;
        record.losses = total_loss(tape.scalar(l_c), tape.scalar(l_dc), tape.scalar(l_d),
                                   tape.scalar(l_m), config.alpha, config.beta);
        if (!std::isfinite(tape.scalar(losses.total))) {
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                     ": non-finite total loss");
        }
        if ((!macro && (record.losses.distance_correlation != 0.0 ||
                        record.losses.discriminator != 0.0)) ||
            (!mask_loss && record.losses.mask != 0.0)) {
            throw std::logic_error("ablated loss term is not zero");
        }

        const std::vector<Matrix> theta_grads =
            gradients_of(tape.backprop(losses.total), bound.theta_leaves);
        if (macro) {
            const std::vector<Matrix> disc_grads =
                gradients_of(tape.backprop(l_d), bound.discriminator_leaves);
            adam_step(theta, theta_grads, theta_state);
            adam_step(disc, disc_grads, disc_state);
        } else {
            adam_step(theta, theta_grads, theta_state);
        }

        if (!masks.val.empty()) {
            const ForwardResult out = run_forward(params, context, Mode::Infer, nullptr);
            if (!all_finite(out.class_logits)) {
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) +
                                         ": non-finite predictions");
            }
            record.validation =
                compute_metrics(out.class_logits.data(), graph.labels, graph.sensitive, masks.val);
            if (record.validation.auc > best_auc) {
                best_auc = record.validation.auc;
                best = params;
                result.history.selected_epoch = epoch;
            }
        } else {
            best = params;
            result.history.selected_epoch = epoch;
        }
        result.history.epochs.push_back(record);
    }
    params = std::move(best);
    return result;
}

ExperimentResult run_experiment(const RunConfig& config, const Dataset& data) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    result.source = data.source;
    std::vector<Metrics> metrics;
    for (const std::uint64_t seed : config.seeds) {
        try {
            TrainResult trained = train(config, data, seed);
            SeedRun run;
            run.seed = seed;
            run.metrics = evaluate(trained.params, data.graph, eval_nodes(config, data.masks));
            run.history = std::move(trained.history);
            run.params = std::move(trained.params);
            run.initial = std::move(trained.initial);
            metrics.push_back(run.metrics);
            result.runs.push_back(std::move(run));
        } catch (const std::exception& e) {
            throw std::runtime_error("seed " + std::to_string(seed) + ": " + e.what());
        }
    }
    result.report = MetricsReport::aggregate(metrics);
    return result;
}

ExperimentResult run_experiment(const RunConfig& config) {
    config.validate();
    return run_experiment(config, load_dataset(config));
}

std::vector<double> correlation_with_sensitive(const Matrix& values,
                                               std::span<const int> sensitive) {
    const std::size_t n = values.rows();
    if (sensitive.size() != n || n == 0) {
        throw std::invalid_argument("correlation_with_sensitive: size mismatch");
    }
    double s_mean = 0.0;
    for (const int s : sensitive) {
        s_mean += s;
    }
    s_mean /= static_cast<double>(n);
    double s_var = 0.0;
    for (const int s : sensitive) {
        s_var += (s - s_mean) * (s - s_mean);
    }
    std::vector<double> out(values.cols(), 0.0);
    for (std::size_t c = 0; c < values.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean += values(i, c);
        }
        mean /= static_cast<double>(n);
        double cov = 0.0;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = values(i, c) - mean;
            cov += d * (sensitive[i] - s_mean);
            var += d * d;
        }
        if (var > 1e-300 && s_var > 0.0) {
            out[c] = cov / std::sqrt(var * s_var);
        }
    }
    return out;
}

ChannelDiagnostics channel_diagnostics(const ModelParams& params, const AttributedGraph& graph) {
    const GraphContext context = GraphContext::build(graph, params.config.use_assigner);
    const ForwardResult out = run_forward(params, context, Mode::Infer, nullptr);
    const std::vector<double> corr = correlation_with_sensitive(out.representation, graph.sensitive);
    const std::size_t k = params.config.channels;
    const std::size_t width = params.config.channel_width();
    ChannelDiagnostics d;
    d.channel_correlation.assign(k, 0.0);
    d.channel_mask.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = c * width; j < (c + 1) * width; ++j) {
            d.channel_correlation[c] += std::abs(corr[j]) / static_cast<double>(width);
            d.channel_mask[c] += out.mask[j] / static_cast<double>(width);
        }
    }
    d.most_correlated = static_cast<std::size_t>(
        std::max_element(d.channel_correlation.begin(), d.channel_correlation.end()) -
        d.channel_correlation.begin());
    d.least_kept = static_cast<std::size_t>(
        std::min_element(d.channel_mask.begin(), d.channel_mask.end()) - d.channel_mask.begin());
    return d;
}

double masked_correlation_outside(const ModelParams& params, const AttributedGraph& graph,
                                  std::size_t excluded_channel) {
    const GraphContext context = GraphContext::build(graph, params.config.use_assigner);
    const ForwardResult out = run_forward(params, context, Mode::Infer, nullptr);
    const std::vector<double> corr = correlation_with_sensitive(out.masked, graph.sensitive);
    const std::size_t width = params.config.channel_width();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < corr.size(); ++j) {
        if (j / width == excluded_channel) {
            continue;
        }
        total += std::abs(corr[j]);
        ++count;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

}  // namespace fairsad
