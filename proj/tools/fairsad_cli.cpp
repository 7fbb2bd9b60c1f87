// Command-line front end: train, eval, synth, gradcheck, sweep.
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairsad/config.hpp"
#include "fairsad/gradcheck_suite.hpp"
#include "fairsad/harness.hpp"
#include "fairsad/report.hpp"

namespace {

using namespace fairsad;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigArgs {
    std::string path;
    std::map<std::string, std::string> overrides;
};

void add_config_options(CLI::App* app, ConfigArgs& args, const std::set<std::string>& skip = {},
                        bool with_file = true) {
    if (with_file) {
        app->add_option("--config", args.path, "flat key = value config file");
    }
    for (const std::string& key : config_keys()) {
        if (skip.count(key) != 0) {
            continue;
        }
        app->add_option_function<std::string>(
            "--" + key, [&args, key](const std::string& v) { args.overrides[key] = v; },
            "config key " + key);
    }
}

RunConfig resolve(const ConfigArgs& args) {
    RunConfig config = args.path.empty() ? RunConfig{} : load_config(args.path);
    apply_overrides(config, args.overrides);
    config.validate();
    return config;
}

RunConfig resolve_with_dataset(const ConfigArgs& args) {
    RunConfig config = resolve(args);
    if (!config.has_dataset()) {
        throw UsageError("no dataset given: pass --nodes and --edges, or --synthetic true");
    }
    return config;
}

void print_load_report(const Dataset& data) {
    const EdgeBuildReport& r = data.report;
    if (r.self_loops_dropped + r.duplicates_dropped > 0) {
        std::fprintf(stderr, "%s: %s\n", data.source.c_str(), r.summary().c_str());
    }
}

int cmd_train(const ConfigArgs& args, const std::string& out_dir) {
    const RunConfig config = resolve_with_dataset(args);
    const Dataset data = load_dataset(config);
    print_load_report(data);
    const ExperimentResult result = run_experiment(config, data);
    std::cout << report_table(result);
    if (!out_dir.empty()) {
        write_report(result, out_dir);
        for (const SeedRun& run : result.runs) {
            save_params(run.params, std::filesystem::path(out_dir) /
                                        ("model_seed" + std::to_string(run.seed) + ".json"));
        }
    }
    return 0;
}

int cmd_eval(const ConfigArgs& args, const std::string& model_path) {
    const RunConfig config = resolve_with_dataset(args);
    const Dataset data = load_dataset(config);
    print_load_report(data);
    const ModelParams params = load_params(model_path);
    if (params.input_dim != data.graph.feature_dim()) {
        throw std::invalid_argument("model expects " + std::to_string(params.input_dim) +
                                    " features, dataset has " +
                                    std::to_string(data.graph.feature_dim()));
    }
    const Metrics m = evaluate(params, data.graph, eval_nodes(config, data.masks));
    std::printf("auc %.4f\nf1 %.4f\ndelta_dp %.4f\ndelta_eo %.4f\n", m.auc, m.f1, m.delta_dp,
                m.delta_eo);
    return 0;
}

int cmd_synth(const ConfigArgs& args, const std::string& nodes_out, const std::string& edges_out) {
    RunConfig config = resolve(args);
    config.synthetic_spec.validate();
    const AttributedGraph graph = generate_synthetic(config.synthetic_spec);
    write_graph(graph, nodes_out, edges_out);
    std::printf("wrote %zu nodes, %zu edges\n", graph.num_nodes, graph.num_edges);
    return 0;
}

int cmd_gradcheck(std::size_t points) {
    GradcheckOptions options;
    options.points = points;
    const auto entries = run_gradcheck_suite(options);
    for (const auto& e : entries) {
        std::printf("%-28s max_rel_error %.3e  %s\n", e.name.c_str(), e.max_error,
                    e.passed ? "ok" : "FAIL");
    }
    return all_passed(entries) ? 0 : 1;
}

std::vector<std::size_t> parse_values(const std::string& text, const char* what) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string item = text.substr(pos, comma - pos);
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(item, &used);
            if (used != item.size() || v == 0) {
                throw std::invalid_argument(item);
            }
            out.push_back(v);
        } catch (const std::exception&) {
            throw UsageError(std::string("--") + what + ": bad value '" + item + "'");
        }
        pos = comma + 1;
    }
    return out;
}

int cmd_sweep(const ConfigArgs& args, const std::string& channels, const std::string& layers,
              const std::string& out_dir) {
    if (channels.empty() == layers.empty()) {
        throw UsageError("sweep needs exactly one of --channels or --layers");
    }
    const RunConfig base = resolve_with_dataset(args);
    const Dataset data = load_dataset(base);
    print_load_report(data);
    const bool by_channels = !channels.empty();
    const auto values = parse_values(by_channels ? channels : layers,
                                     by_channels ? "channels" : "layers");
    std::printf("%-9s %18s %18s %18s %18s\n", by_channels ? "channels" : "layers", "auc", "f1",
                "delta_dp", "delta_eo");
    for (const std::size_t v : values) {
        RunConfig config = base;
        (by_channels ? config.model.channels : config.model.layers) = v;
        const ExperimentResult result = run_experiment(config, data);
        const MetricsReport& r = result.report;
        std::printf("%-9zu %8.2f +- %6.2f %8.2f +- %6.2f %8.2f +- %6.2f %8.2f +- %6.2f\n", v,
                    r.auc.mean, r.auc.std, r.f1.mean, r.f1.std, r.delta_dp.mean, r.delta_dp.std,
                    r.delta_eo.mean, r.delta_eo.std);
        std::fflush(stdout);
        if (!out_dir.empty()) {
            write_report(result, std::filesystem::path(out_dir) /
                                     ((by_channels ? "channels_" : "layers_") + std::to_string(v)));
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fair node classification with disentangled channels and channel masking"};
    app.require_subcommand(1);

    ConfigArgs train_args;
    std::string train_out;
    CLI::App* train = app.add_subcommand("train", "train and evaluate over the configured seeds");
    add_config_options(train, train_args);
    train->add_option("--out", train_out, "directory for report, curves and model files");

    ConfigArgs eval_args;
    std::string model_path;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model");
    add_config_options(eval, eval_args);
    eval->add_option("--model", model_path, "model file written by train")->required();

    ConfigArgs synth_args;
    std::string nodes_out;
    std::string edges_out;
    CLI::App* synth = app.add_subcommand("synth", "write a synthetic graph as nodes/edges files");
    std::set<std::string> non_synth;
    for (const std::string& key : config_keys()) {
        if (key.rfind("synth_", 0) != 0) {
            non_synth.insert(key);
        }
    }
    add_config_options(synth, synth_args, non_synth);
    synth->add_option("--nodes-out", nodes_out, "nodes file to write")->required();
    synth->add_option("--edges-out", edges_out, "edges file to write")->required();

    std::size_t points = 20;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--points", points, "random points per check");

    ConfigArgs sweep_args;
    std::string sweep_channels;
    std::string sweep_layers;
    std::string sweep_out;
    CLI::App* sweep = app.add_subcommand("sweep", "vary channel count or depth");
    add_config_options(sweep, sweep_args, {"channels", "layers"});
    sweep->add_option("--channels", sweep_channels, "comma-separated channel counts, e.g. 1,2,4,8");
    sweep->add_option("--layers", sweep_layers, "comma-separated layer counts, e.g. 1,2,3");
    sweep->add_option("--out", sweep_out, "directory for per-value reports");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*train) {
            return cmd_train(train_args, train_out);
        }
        if (*eval) {
            return cmd_eval(eval_args, model_path);
        }
        if (*synth) {
            return cmd_synth(synth_args, nodes_out, edges_out);
        }
        if (*gradcheck) {
            return cmd_gradcheck(points);
        }
        if (*sweep) {
            return cmd_sweep(sweep_args, sweep_channels, sweep_layers, sweep_out);
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
