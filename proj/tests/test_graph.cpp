#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "fairsad/graph.hpp"
#include "support.hpp"

using namespace fairsad;

namespace {

AttributedGraph bare_graph(std::size_t n, std::size_t d = 1) {
    AttributedGraph g;
    g.num_nodes = n;
    g.attributes = Matrix(n, d);
    g.sensitive.assign(n, 0);
    g.labels.assign(n, 0);
    return g;
}

bool symmetric(const AttributedGraph& g) {
    for (std::size_t u = 0; u < g.num_nodes; ++u) {
        for (std::size_t e = g.offsets[u]; e < g.offsets[u + 1]; ++e) {
            if (!g.has_arc(g.neighbors[e], u)) {
                return false;
            }
        }
    }
    return true;
}

std::string load_error(const std::string& nodes, const std::string& edges) {
    testing::TempDir dir("graph_err");
    testing::write_text(dir / "n.csv", nodes);
    testing::write_text(dir / "e.csv", edges);
    try {
        load_graph(dir / "n.csv", dir / "e.csv");
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_CASE("single edge is stored in both directions") {
    AttributedGraph g = bare_graph(3);
    build_adjacency(g, {{0, 1}});
    CHECK(g.num_edges == 1);
    CHECK(g.num_arcs() == 2);
    CHECK(g.has_arc(0, 1));
    CHECK(g.has_arc(1, 0));
    CHECK_FALSE(g.has_arc(0, 2));
    CHECK(g.degree(2) == 0);
}

TEST_CASE("reversed duplicate and self-loop are dropped and counted") {
    AttributedGraph g = bare_graph(3);
    const EdgeBuildReport report = build_adjacency(g, {{0, 1}, {1, 0}, {2, 2}});
    CHECK(g.num_edges == 1);
    CHECK(report.self_loops_dropped == 1);
    CHECK(report.duplicates_dropped == 1);
    CHECK(report.summary() == "1 self-loop dropped, 1 duplicate dropped");
    CHECK_NOTHROW(g.validate());
}

TEST_CASE("load_graph reads features, sensitive values and unlabeled rows") {
    testing::TempDir dir("graph_load");
    testing::write_text(dir / "n.csv",
                        "id,age,sensitive,income,label\n"
                        "a,1.5,0,3,1\n"
                        "b,2.5,1,4,\n"
                        "c,3.5,1,5,-1\n"
                        "d,4.5,0,6,0\n");
    testing::write_text(dir / "e.csv", "src,dst\na,b\nc,b\nd,d\nb,a\n");
    const LoadedGraph loaded = load_graph(dir / "n.csv", dir / "e.csv");
    const AttributedGraph& g = loaded.graph;
    CHECK(g.num_nodes == 4);
    CHECK(g.feature_dim() == 2);
    CHECK(g.attributes(2, 0) == 3.5);
    CHECK(g.attributes(2, 1) == 5.0);
    CHECK(g.sensitive == std::vector<int>{0, 1, 1, 0});
    CHECK(g.labels == std::vector<int>{1, kMissingLabel, kMissingLabel, 0});
    CHECK(g.num_edges == 2);
    CHECK(loaded.report.summary() == "1 self-loop dropped, 1 duplicate dropped");
    CHECK(symmetric(g));
}

TEST_CASE("German-format file keeps 1000 rows and 27 feature columns") {
    testing::TempDir dir("graph_german");
    std::ostringstream nodes;
    nodes << "id";
    for (int j = 0; j < 27; ++j) {
        nodes << ",f" << j;
    }
    nodes << ",sensitive,label\n";
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        nodes << i;
        for (int j = 0; j < 27; ++j) {
            nodes << "," << rng.uniform(0.0, 10.0);
        }
        nodes << "," << rng.below(2) << "," << rng.below(2) << "\n";
    }
    std::ostringstream edges;
    edges << "src,dst\n";
    for (int i = 0; i < 3000; ++i) {
        edges << rng.below(1000) << "," << rng.below(1000) << "\n";
    }
    testing::write_text(dir / "n.csv", nodes.str());
    testing::write_text(dir / "e.csv", edges.str());
    const LoadedGraph loaded = load_graph(dir / "n.csv", dir / "e.csv");
    CHECK(loaded.graph.num_nodes == 1000);
    CHECK(loaded.graph.feature_dim() == 27);
    CHECK(symmetric(loaded.graph));
}

TEST_CASE("load_graph errors name the offending row") {
    const std::string header = "id,f0,sensitive,label\n";
    CHECK(load_error(header + "0,1,0,1\n1,2,1,0\n", "src,dst\n0,7\n").find("e.csv:2") !=
          std::string::npos);
    CHECK(load_error(header + "0,1,0,1\n1,2,1,0\n", "src,dst\n0,7\n").find("unknown node id") !=
          std::string::npos);
    const std::string bad_s = load_error(header + "0,1,0,1\n1,2,2,0\n", "src,dst\n0,1\n");
    CHECK(bad_s.find("n.csv:3") != std::string::npos);
    CHECK(bad_s.find("non-binary sensitive") != std::string::npos);
    const std::string bad_d = load_error(header + "0,1,0,1\n1,2,5,1,0\n", "src,dst\n0,1\n");
    CHECK(bad_d.find("n.csv:3") != std::string::npos);
}

TEST_CASE("write_graph round-trips through load_graph") {
    SyntheticSpec spec;
    spec.nodes_per_group = 20;
    spec.seed = 4;
    const AttributedGraph g = generate_synthetic(spec);
    testing::TempDir dir("graph_roundtrip");
    write_graph(g, dir / "n.csv", dir / "e.csv");
    const AttributedGraph back = load_graph(dir / "n.csv", dir / "e.csv").graph;
    CHECK(back.offsets == g.offsets);
    CHECK(back.neighbors == g.neighbors);
    CHECK(back.sensitive == g.sensitive);
    CHECK(back.labels == g.labels);
    CHECK(max_abs_diff(back.attributes, g.attributes) == 0.0);
}

TEST_CASE("normalize_features scales columns into [0,1]") {
    AttributedGraph g = bare_graph(3, 3);
    g.attributes = Matrix{{2, 5, 0}, {4, 5, 1}, {6, 5, 1}};
    build_adjacency(g, {});
    const AttributedGraph n = normalize_features(g);
    CHECK(n.attributes(0, 0) == 0.0);
    CHECK(n.attributes(1, 0) == 0.5);
    CHECK(n.attributes(2, 0) == 1.0);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(n.attributes(i, 1) == 0.0);
        CHECK(n.attributes(i, 2) == g.attributes(i, 2));
    }
}

TEST_CASE("split sizes follow floor arithmetic") {
    AttributedGraph g = bare_graph(12);
    g.labels = {1, 0, 1, kMissingLabel, 0, 1, 0, 1, 0, kMissingLabel, 1, 0};
    build_adjacency(g, {});
    const SplitMasks m = split_nodes(g, {0.5, 0.25, 0.25}, 7);
    CHECK(m.train.size() == 5);
    CHECK(m.val.size() == 2);
    CHECK(m.test.size() == 3);

    std::set<std::size_t> seen;
    for (const auto* part : {&m.train, &m.val, &m.test}) {
        for (const std::size_t v : *part) {
            CHECK(g.labels[v] != kMissingLabel);
            CHECK(seen.insert(v).second);
        }
    }

    const SplitMasks again = split_nodes(g, {0.5, 0.25, 0.25}, 7);
    CHECK(again.train == m.train);
    CHECK(again.val == m.val);
    CHECK(again.test == m.test);
}

TEST_CASE("zero train ratio is rejected") {
    AttributedGraph g = bare_graph(10);
    build_adjacency(g, {});
    CHECK_THROWS_WITH_AS(split_nodes(g, {0.0, 0.5, 0.5}, 1), doctest::Contains("empty train split"),
                         std::invalid_argument);
}

TEST_CASE("synthetic graph without leakage or correlation has independent s and y") {
    SyntheticSpec spec;
    spec.nodes_per_group = 500;
    spec.leakage = 0.0;
    spec.label_correlation = 0.0;
    spec.seed = 11;
    const AttributedGraph g = generate_synthetic(spec);
    double ms = 0, my = 0;
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
        ms += g.sensitive[i];
        my += g.labels[i];
    }
    ms /= g.num_nodes;
    my /= g.num_nodes;
    double cov = 0, vs = 0, vy = 0;
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
        cov += (g.sensitive[i] - ms) * (g.labels[i] - my);
        vs += (g.sensitive[i] - ms) * (g.sensitive[i] - ms);
        vy += (g.labels[i] - my) * (g.labels[i] - my);
    }
    CHECK(std::abs(cov / std::sqrt(vs * vy)) < 0.1);
}

TEST_CASE("SBM edge count lies within three sigma of its expectation") {
    SyntheticSpec spec;
    spec.nodes_per_group = 200;
    spec.p_intra = 0.05;
    spec.p_inter = 0.005;
    // Independent pair count: both blocks' internal pairs plus all cross pairs.
    const double intra_pairs = 2.0 * 200.0 * 199.0 / 2.0;
    const double inter_pairs = 200.0 * 200.0;
    const double mean = intra_pairs * 0.05 + inter_pairs * 0.005;
    const double sigma = std::sqrt(intra_pairs * 0.05 * 0.95 + inter_pairs * 0.005 * 0.995);
    CHECK(mean == doctest::Approx(2190.0));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        spec.seed = seed;
        const AttributedGraph g = generate_synthetic(spec);
        CHECK(std::abs(static_cast<double>(g.num_edges) - mean) < 3.0 * sigma);
        CHECK(symmetric(g));
        CHECK_NOTHROW(g.validate());
    }
}

TEST_CASE("synthetic generation is deterministic") {
    SyntheticSpec spec;
    spec.seed = 99;
    const AttributedGraph a = generate_synthetic(spec);
    const AttributedGraph b = generate_synthetic(spec);
    CHECK(a.neighbors == b.neighbors);
    CHECK(a.labels == b.labels);
    CHECK(a.attributes == b.attributes);
    spec.seed = 100;
    CHECK_FALSE(generate_synthetic(spec).neighbors == a.neighbors);
}

TEST_CASE("label/sensitive gap grows with label correlation") {
    std::vector<double> gaps;
    for (const double c : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        double mean_gap = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            SyntheticSpec spec;
            spec.label_correlation = c;
            spec.seed = seed;
            const AttributedGraph g = generate_synthetic(spec);
            double pos[2] = {0, 0};
            double cnt[2] = {0, 0};
            for (std::size_t i = 0; i < g.num_nodes; ++i) {
                cnt[g.sensitive[i]] += 1;
                pos[g.sensitive[i]] += g.labels[i];
            }
            mean_gap += std::abs(pos[0] / cnt[0] - pos[1] / cnt[1]) / 5.0;
        }
        gaps.push_back(mean_gap);
    }
    for (std::size_t i = 1; i < gaps.size(); ++i) {
        CHECK(gaps[i] >= gaps[i - 1]);
    }
    CHECK(gaps.back() == doctest::Approx(1.0));
}

TEST_CASE("degenerate synthetic spec is rejected") {
    SyntheticSpec spec;
    spec.nodes_per_group = 0;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
    spec.nodes_per_group = 10;
    spec.p_intra = 1.5;
    CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
}
