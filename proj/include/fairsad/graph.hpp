#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fairsad/matrix.hpp"

namespace fairsad {

// Label value for nodes without a ground-truth label.
inline constexpr int kMissingLabel = -1;

// Undirected attributed graph. Every undirected edge is stored as two arcs in
// CSR form; arcs of node u are neighbors[offsets[u] .. offsets[u+1]), sorted.
struct AttributedGraph {
    std::size_t num_nodes = 0;
    std::size_t num_edges = 0;  // undirected pairs
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> neighbors;
    Matrix attributes;          // n x d
    std::vector<int> sensitive;  // 0/1
    std::vector<int> labels;     // 0/1 or kMissingLabel

    std::size_t num_arcs() const { return neighbors.size(); }
    std::size_t feature_dim() const { return attributes.cols(); }
    std::size_t degree(std::size_t u) const { return offsets[u + 1] - offsets[u]; }
    bool has_arc(std::size_t u, std::size_t v) const;

    // Throws std::invalid_argument naming the first violated invariant.
    void validate() const;
};

// Builds CSR arcs from an undirected edge list. Self-loops and duplicates
// (in either orientation) are dropped and counted.
struct EdgeBuildReport {
    std::size_t self_loops_dropped = 0;
    std::size_t duplicates_dropped = 0;
    std::string summary() const;
};

EdgeBuildReport build_adjacency(AttributedGraph& graph,
                                const std::vector<std::pair<std::size_t, std::size_t>>& edges);

struct GraphSchema {
    std::string id_column = "id";
    std::string sensitive_column = "sensitive";
    std::string label_column = "label";
    std::string src_column = "src";
    std::string dst_column = "dst";
    char delimiter = ',';
};

struct LoadedGraph {
    AttributedGraph graph;
    EdgeBuildReport report;
};

// Nodes file: header row then one row per node. Feature columns are all
// columns other than id/sensitive/label, in file order. An empty label or -1
// marks an unlabeled node. Errors throw std::runtime_error naming the row.
LoadedGraph load_graph(const std::filesystem::path& nodes_path,
                       const std::filesystem::path& edges_path,
                       const GraphSchema& schema = {});

void write_graph(const AttributedGraph& graph, const std::filesystem::path& nodes_path,
                 const std::filesystem::path& edges_path, char delimiter = ',');

// Min-max scaling of each attribute column into [0,1]; constant columns -> 0.
AttributedGraph normalize_features(AttributedGraph graph);

struct SplitMasks {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

struct SplitRatios {
    double train = 0.5;
    double val = 0.25;
    double test = 0.25;
};

// Shuffles labeled nodes with the given seed. Train and val sizes are
// floor(ratio * labeled); test takes floor((train+val+test) * labeled) minus
// those, so with ratios summing to one test receives the rounding remainder.
SplitMasks split_nodes(const AttributedGraph& graph, const SplitRatios& ratios,
                       std::uint64_t seed);

struct SyntheticSpec {
    std::size_t nodes_per_group = 200;
    double p_intra = 0.05;
    double p_inter = 0.005;
    std::size_t feature_dim = 8;
    double leakage = 1.0;           // sensitive signal strength in features
    double label_signal = 1.0;      // label signal strength in features
    double label_correlation = 0.0;  // P(label copied from sensitive group)
    std::uint64_t seed = 0;

    void validate() const;
};

// Two-block SBM, sensitive attribute = block id. Labels: with probability
// label_correlation y = s, otherwise y ~ Bernoulli(1/2). The first half of
// the feature dimensions carry +-label_signal by label, the rest carry
// +-leakage by sensitive group, plus unit Gaussian noise on every entry.
AttributedGraph generate_synthetic(const SyntheticSpec& spec);

}  // namespace fairsad
