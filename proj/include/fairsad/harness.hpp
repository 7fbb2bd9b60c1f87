#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairsad/config.hpp"
#include "fairsad/graph.hpp"
#include "fairsad/metrics.hpp"
#include "fairsad/model.hpp"
#include "fairsad/objectives.hpp"

namespace fairsad {

struct Dataset {
    AttributedGraph graph;
    SplitMasks masks;
    EdgeBuildReport report;
    std::string source;
};

// Loads files or generates the synthetic graph, normalizes features if asked,
// and splits with config.split_seed. Throws std::invalid_argument if the
// config names no dataset.
Dataset load_dataset(const RunConfig& config);

struct EpochRecord {
    LossBreakdown losses;  // train-mode forward before the update
    Metrics validation;    // inference-mode forward after the update
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::size_t selected_epoch = 0;
};

struct TrainResult {
    ModelParams initial;  // parameters before the first update
    ModelParams params;   // parameters at the selected epoch
    TrainHistory history;
};

// Full-batch training. Each epoch: one Adam step on theta with the total
// loss, then (when the macro terms are active) one Adam step on the
// discriminator with L_d alone. Keeps the epoch with the best validation AUC.
TrainResult train(const RunConfig& config, const Dataset& data, std::uint64_t seed);

const std::vector<std::size_t>& eval_nodes(const RunConfig& config, const SplitMasks& masks);

// Inference-mode metrics on the given nodes.
Metrics evaluate(const ModelParams& params, const AttributedGraph& graph,
                 std::span<const std::size_t> nodes);

struct SeedRun {
    std::uint64_t seed = 0;
    Metrics metrics;
    TrainHistory history;
    ModelParams params;
    ModelParams initial;
};

struct ExperimentResult {
    RunConfig config;
    std::string source;
    std::vector<SeedRun> runs;
    MetricsReport report;
};

// Trains and evaluates every seed; a failing seed aborts with its id.
ExperimentResult run_experiment(const RunConfig& config, const Dataset& data);
ExperimentResult run_experiment(const RunConfig& config);

// Pearson correlation of each column of `values` with s over all nodes; 0
// for constant columns.
std::vector<double> correlation_with_sensitive(const Matrix& values,
                                               std::span<const int> sensitive);

struct ChannelDiagnostics {
    std::vector<double> channel_correlation;  // mean |corr| of pre-mask columns with s
    std::vector<double> channel_mask;         // mean inference mask value
    std::size_t most_correlated = 0;
    std::size_t least_kept = 0;
    bool identified() const { return most_correlated == least_kept; }
};

// Which channel the mask suppresses, relative to which channel carries s.
ChannelDiagnostics channel_diagnostics(const ModelParams& params, const AttributedGraph& graph);

// Mean |corr(s, column)| of the masked representation, over the columns of
// every channel except `excluded_channel`.
double masked_correlation_outside(const ModelParams& params, const AttributedGraph& graph,
                                  std::size_t excluded_channel);

}  // namespace fairsad
