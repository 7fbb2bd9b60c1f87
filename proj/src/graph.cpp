#include "fairsad/graph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "fairsad/rng.hpp"

namespace fairsad {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    std::string out(s.substr(first, last - first + 1));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
        out = out.substr(1, out.size() - 2);
    }
    return out;
}

std::vector<std::string> split_row(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(delimiter, start);
        if (pos == std::string::npos) {
            fields.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        fields.push_back(trim(std::string_view(line).substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) {
        return false;
    }
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::filesystem::path& path) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw std::runtime_error(where(path, 1) + ": missing column '" + name + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

bool AttributedGraph::has_arc(std::size_t u, std::size_t v) const {
    const auto first = neighbors.begin() + static_cast<std::ptrdiff_t>(offsets[u]);
    const auto last = neighbors.begin() + static_cast<std::ptrdiff_t>(offsets[u + 1]);
    return std::binary_search(first, last, v);
}

void AttributedGraph::validate() const {
    if (offsets.size() != num_nodes + 1) {
        throw std::invalid_argument("graph: offsets length " + std::to_string(offsets.size()) +
                                    " != n+1");
    }
    if (attributes.rows() != num_nodes) {
        throw std::invalid_argument("graph: attribute rows " +
                                    std::to_string(attributes.rows()) + " != n");
    }
    if (sensitive.size() != num_nodes || labels.size() != num_nodes) {
        throw std::invalid_argument("graph: sensitive/label length != n");
    }
    if (neighbors.size() != 2 * num_edges) {
        throw std::invalid_argument("graph: arc count " + std::to_string(neighbors.size()) +
                                    " != 2m");
    }
    for (std::size_t u = 0; u < num_nodes; ++u) {
        if (sensitive[u] != 0 && sensitive[u] != 1) {
            throw std::invalid_argument("graph: node " + std::to_string(u) +
                                        " has non-binary sensitive value");
        }
        if (labels[u] != 0 && labels[u] != 1 && labels[u] != kMissingLabel) {
            throw std::invalid_argument("graph: node " + std::to_string(u) +
                                        " has invalid label");
        }
        for (std::size_t e = offsets[u]; e < offsets[u + 1]; ++e) {
            const std::size_t v = neighbors[e];
            if (v >= num_nodes) {
                throw std::invalid_argument("graph: arc target out of range");
            }
            if (v == u) {
                throw std::invalid_argument("graph: self-loop at node " + std::to_string(u));
            }
            if (e > offsets[u] && neighbors[e - 1] >= v) {
                throw std::invalid_argument("graph: unsorted or duplicate arcs at node " +
                                            std::to_string(u));
            }
            if (!has_arc(v, u)) {
                throw std::invalid_argument("graph: arc (" + std::to_string(u) + "," +
                                            std::to_string(v) + ") has no reverse");
            }
        }
    }
}

std::string EdgeBuildReport::summary() const {
    std::ostringstream out;
    out << self_loops_dropped << (self_loops_dropped == 1 ? " self-loop" : " self-loops")
        << " dropped, " << duplicates_dropped
        << (duplicates_dropped == 1 ? " duplicate" : " duplicates") << " dropped";
    return out.str();
}

EdgeBuildReport build_adjacency(AttributedGraph& graph,
                                const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    EdgeBuildReport report;
    std::vector<std::pair<std::size_t, std::size_t>> canonical;
    canonical.reserve(edges.size());
    for (const auto& [a, b] : edges) {
        if (a >= graph.num_nodes || b >= graph.num_nodes) {
            throw std::invalid_argument("build_adjacency: edge endpoint out of range");
        }
        if (a == b) {
            ++report.self_loops_dropped;
            continue;
        }
        canonical.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(canonical.begin(), canonical.end());
    const auto unique_end = std::unique(canonical.begin(), canonical.end());
    report.duplicates_dropped = static_cast<std::size_t>(canonical.end() - unique_end);
    canonical.erase(unique_end, canonical.end());

    graph.num_edges = canonical.size();
    std::vector<std::size_t> degree(graph.num_nodes, 0);
    for (const auto& [a, b] : canonical) {
        ++degree[a];
        ++degree[b];
    }
    graph.offsets.assign(graph.num_nodes + 1, 0);
    for (std::size_t u = 0; u < graph.num_nodes; ++u) {
        graph.offsets[u + 1] = graph.offsets[u] + degree[u];
    }
    graph.neighbors.assign(graph.offsets.back(), 0);
    std::vector<std::size_t> cursor(graph.offsets.begin(), graph.offsets.end() - 1);
    for (const auto& [a, b] : canonical) {
        graph.neighbors[cursor[a]++] = b;
        graph.neighbors[cursor[b]++] = a;
    }
    for (std::size_t u = 0; u < graph.num_nodes; ++u) {
        std::sort(graph.neighbors.begin() + static_cast<std::ptrdiff_t>(graph.offsets[u]),
                  graph.neighbors.begin() + static_cast<std::ptrdiff_t>(graph.offsets[u + 1]));
    }
    return report;
}

LoadedGraph load_graph(const std::filesystem::path& nodes_path,
                       const std::filesystem::path& edges_path, const GraphSchema& schema) {
    std::ifstream nodes_in(nodes_path);
    if (!nodes_in) {
        throw std::runtime_error("cannot open nodes file " + nodes_path.string());
    }
    std::string line;
    if (!std::getline(nodes_in, line)) {
        throw std::runtime_error(where(nodes_path, 1) + ": empty nodes file");
    }
    const auto header = split_row(line, schema.delimiter);
    const std::size_t id_col = column_index(header, schema.id_column, nodes_path);
    const std::size_t s_col = column_index(header, schema.sensitive_column, nodes_path);
    const std::size_t y_col = column_index(header, schema.label_column, nodes_path);
    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != id_col && c != s_col && c != y_col) {
            feature_cols.push_back(c);
        }
    }

    LoadedGraph loaded;
    AttributedGraph& graph = loaded.graph;
    std::unordered_map<std::string, std::size_t> index_of;
    std::vector<double> features;
    std::size_t line_no = 1;
    while (std::getline(nodes_in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_row(line, schema.delimiter);
        if (fields.size() != header.size()) {
            throw std::runtime_error(where(nodes_path, line_no) + ": expected " +
                                     std::to_string(header.size()) + " columns (d=" +
                                     std::to_string(feature_cols.size()) + "), got " +
                                     std::to_string(fields.size()));
        }
        const std::string& id = fields[id_col];
        if (!index_of.emplace(id, graph.num_nodes).second) {
            throw std::runtime_error(where(nodes_path, line_no) + ": duplicate node id '" + id +
                                     "'");
        }
        for (const std::size_t c : feature_cols) {
            double v = 0.0;
            if (!parse_double(fields[c], v)) {
                throw std::runtime_error(where(nodes_path, line_no) + ": non-numeric value '" +
                                         fields[c] + "' in column '" + header[c] + "'");
            }
            features.push_back(v);
        }
        double s = 0.0;
        if (!parse_double(fields[s_col], s) || (s != 0.0 && s != 1.0)) {
            throw std::runtime_error(where(nodes_path, line_no) + ": non-binary sensitive value '" +
                                     fields[s_col] + "'");
        }
        graph.sensitive.push_back(static_cast<int>(s));
        const std::string& label_text = fields[y_col];
        double y = 0.0;
        if (label_text.empty()) {
            graph.labels.push_back(kMissingLabel);
        } else if (!parse_double(label_text, y) || (y != 0.0 && y != 1.0 && y != -1.0)) {
            throw std::runtime_error(where(nodes_path, line_no) + ": invalid label '" +
                                     label_text + "'");
        } else {
            graph.labels.push_back(y == -1.0 ? kMissingLabel : static_cast<int>(y));
        }
        ++graph.num_nodes;
    }
    graph.attributes = Matrix(graph.num_nodes, feature_cols.size(), std::move(features));

    std::ifstream edges_in(edges_path);
    if (!edges_in) {
        throw std::runtime_error("cannot open edges file " + edges_path.string());
    }
    if (!std::getline(edges_in, line)) {
        throw std::runtime_error(where(edges_path, 1) + ": empty edges file");
    }
    const auto edge_header = split_row(line, schema.delimiter);
    const std::size_t src_col = column_index(edge_header, schema.src_column, edges_path);
    const std::size_t dst_col = column_index(edge_header, schema.dst_column, edges_path);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    line_no = 1;
    while (std::getline(edges_in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split_row(line, schema.delimiter);
        if (fields.size() != edge_header.size()) {
            throw std::runtime_error(where(edges_path, line_no) + ": expected " +
                                     std::to_string(edge_header.size()) + " columns");
        }
        const auto src = index_of.find(fields[src_col]);
        const auto dst = index_of.find(fields[dst_col]);
        if (src == index_of.end() || dst == index_of.end()) {
            const std::string& bad = src == index_of.end() ? fields[src_col] : fields[dst_col];
            throw std::runtime_error(where(edges_path, line_no) + ": unknown node id '" + bad +
                                     "'");
        }
        edges.emplace_back(src->second, dst->second);
    }
    loaded.report = build_adjacency(graph, edges);
    graph.validate();
    return loaded;
}

void write_graph(const AttributedGraph& graph, const std::filesystem::path& nodes_path,
                 const std::filesystem::path& edges_path, char delimiter) {
    std::ofstream nodes_out(nodes_path);
    if (!nodes_out) {
        throw std::runtime_error("cannot write " + nodes_path.string());
    }
    nodes_out << std::setprecision(17);
    nodes_out << "id";
    for (std::size_t j = 0; j < graph.feature_dim(); ++j) {
        nodes_out << delimiter << 'f' << j;
    }
    nodes_out << delimiter << "sensitive" << delimiter << "label\n";
    for (std::size_t u = 0; u < graph.num_nodes; ++u) {
        nodes_out << u;
        for (const double v : graph.attributes.row(u)) {
            nodes_out << delimiter << v;
        }
        nodes_out << delimiter << graph.sensitive[u] << delimiter;
        if (graph.labels[u] != kMissingLabel) {
            nodes_out << graph.labels[u];
        }
        nodes_out << '\n';
    }

    std::ofstream edges_out(edges_path);
    if (!edges_out) {
        throw std::runtime_error("cannot write " + edges_path.string());
    }
    edges_out << "src" << delimiter << "dst\n";
    for (std::size_t u = 0; u < graph.num_nodes; ++u) {
        for (std::size_t e = graph.offsets[u]; e < graph.offsets[u + 1]; ++e) {
            if (u < graph.neighbors[e]) {
                edges_out << u << delimiter << graph.neighbors[e] << '\n';
            }
        }
    }
}

AttributedGraph normalize_features(AttributedGraph graph) {
    Matrix& x = graph.attributes;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < x.rows(); ++r) {
            lo = std::min(lo, x(r, c));
            hi = std::max(hi, x(r, c));
        }
        const double range = hi - lo;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            x(r, c) = range > 0.0 ? (x(r, c) - lo) / range : 0.0;
        }
    }
    return graph;
}

SplitMasks split_nodes(const AttributedGraph& graph, const SplitRatios& ratios,
                       std::uint64_t seed) {
    if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 ||
        ratios.train + ratios.val + ratios.test > 1.0 + 1e-9) {
        throw std::invalid_argument("split_nodes: ratios must be nonnegative and sum to <= 1");
    }
    std::vector<std::size_t> labeled;
    for (std::size_t u = 0; u < graph.num_nodes; ++u) {
        if (graph.labels[u] != kMissingLabel) {
            labeled.push_back(u);
        }
    }
    const double count = static_cast<double>(labeled.size());
    const auto floor_count = [count](double r) {
        return static_cast<std::size_t>(std::floor(r * count + 1e-9));
    };
    const std::size_t n_train = floor_count(ratios.train);
    if (n_train == 0) {
        throw std::invalid_argument("split_nodes: empty train split");
    }
    const std::size_t n_val = floor_count(ratios.val);
    const std::size_t n_used =
        std::min(labeled.size(), floor_count(ratios.train + ratios.val + ratios.test));
    const std::size_t n_test = n_used - std::min(n_used, n_train + n_val);

    // Fisher-Yates with our own stream so the permutation is portable.
    Rng rng = Rng(seed).split(0x5b1d);
    for (std::size_t i = labeled.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(labeled[i - 1], labeled[j]);
    }
    SplitMasks masks;
    masks.train.assign(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_train));
    masks.val.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train),
                     labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    masks.test.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                      labeled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val + n_test));
    std::sort(masks.train.begin(), masks.train.end());
    std::sort(masks.val.begin(), masks.val.end());
    std::sort(masks.test.begin(), masks.test.end());
    return masks;
}

void SyntheticSpec::validate() const {
    if (nodes_per_group == 0) {
        throw std::invalid_argument("synthetic spec: zero nodes per group");
    }
    if (feature_dim == 0) {
        throw std::invalid_argument("synthetic spec: zero feature dimension");
    }
    const auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in_unit(p_intra) || !in_unit(p_inter) || !in_unit(label_correlation)) {
        throw std::invalid_argument("synthetic spec: probabilities must lie in [0,1]");
    }
    if (leakage < 0.0 || label_signal < 0.0) {
        throw std::invalid_argument("synthetic spec: signal strengths must be >= 0");
    }
}

AttributedGraph generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    Rng edge_rng = root.split(1);
    Rng label_rng = root.split(2);
    Rng feature_rng = root.split(3);

    AttributedGraph graph;
    graph.num_nodes = 2 * spec.nodes_per_group;
    const std::size_t n = graph.num_nodes;
    graph.sensitive.resize(n);
    graph.labels.resize(n);
    for (std::size_t u = 0; u < n; ++u) {
        graph.sensitive[u] = u < spec.nodes_per_group ? 0 : 1;
    }
    for (std::size_t u = 0; u < n; ++u) {
        const bool copy = label_rng.bernoulli(spec.label_correlation);
        const bool coin = label_rng.bernoulli(0.5);
        graph.labels[u] = copy ? graph.sensitive[u] : (coin ? 1 : 0);
    }

    const std::size_t label_dims = spec.feature_dim / 2;
    graph.attributes = Matrix(n, spec.feature_dim);
    for (std::size_t u = 0; u < n; ++u) {
        const double y_sign = graph.labels[u] == 1 ? 1.0 : -1.0;
        const double s_sign = graph.sensitive[u] == 1 ? 1.0 : -1.0;
        for (std::size_t j = 0; j < spec.feature_dim; ++j) {
            const double mean = j < label_dims ? spec.label_signal * y_sign : spec.leakage * s_sign;
            graph.attributes(u, j) = mean + feature_rng.normal();
        }
    }

    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            const double p = graph.sensitive[u] == graph.sensitive[v] ? spec.p_intra : spec.p_inter;
            if (edge_rng.bernoulli(p)) {
                edges.emplace_back(u, v);
            }
        }
    }
    build_adjacency(graph, edges);
    graph.validate();
    return graph;
}

}  // namespace fairsad
