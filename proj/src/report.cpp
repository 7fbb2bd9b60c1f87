#include "fairsad/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fairsad {

namespace {

using nlohmann::json;

json summary_json(const MetricSummary& s) {
    return {{"per_seed", s.per_seed}, {"mean", s.mean}, {"std", s.std}};
}

json matrix_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from(const json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

json linear_json(const LinearParams& p) {
    return {{"weight", matrix_json(p.weight)}, {"bias", matrix_json(p.bias)}};
}

LinearParams linear_from(const json& j) {
    return {matrix_from(j.at("weight")), matrix_from(j.at("bias"))};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << text;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%10.2f", v);
    return buf;
}

}  // namespace

std::string report_json(const ExperimentResult& result) {
    json config = json::object();
    for (const auto& [key, value] : result.config.entries()) {
        config[key] = value;
    }
    json metrics = json::object();
    for (const auto& [name, summary] : result.report.rows()) {
        metrics[name] = summary_json(*summary);
    }
    json seeds = json::array();
    for (const SeedRun& run : result.runs) {
        seeds.push_back({{"seed", run.seed},
                         {"selected_epoch", run.history.selected_epoch},
                         {"auc", run.metrics.auc},
                         {"f1", run.metrics.f1},
                         {"delta_dp", run.metrics.delta_dp},
                         {"delta_eo", run.metrics.delta_eo}});
    }
    json doc = {{"source", result.source}, {"config", config}, {"metrics", metrics},
                {"runs", seeds}};
    return doc.dump(2) + "\n";
}

std::string report_table(const ExperimentResult& result) {
    std::string out = "source: " + result.source + "\n";
    out += "seed        auc        f1  delta_dp  delta_eo  epoch\n";
    for (const SeedRun& run : result.runs) {
        char seed[16];
        std::snprintf(seed, sizeof seed, "%-4llu", static_cast<unsigned long long>(run.seed));
        out += seed + cell(run.metrics.auc) + cell(run.metrics.f1) + cell(run.metrics.delta_dp) +
               cell(run.metrics.delta_eo) + "  " + std::to_string(run.history.selected_epoch) +
               "\n";
    }
    const MetricsReport& r = result.report;
    out += "mean" + cell(r.auc.mean) + cell(r.f1.mean) + cell(r.delta_dp.mean) +
           cell(r.delta_eo.mean) + "\n";
    out += "std " + cell(r.auc.std) + cell(r.f1.std) + cell(r.delta_dp.std) +
           cell(r.delta_eo.std) + "\n";
    return out;
}

std::string curves_csv(const TrainHistory& history) {
    std::string out = "epoch,L_c,L_dc,L_d,L_m,total,val_auc\n";
    char line[256];
    for (std::size_t e = 0; e < history.epochs.size(); ++e) {
        const EpochRecord& r = history.epochs[e];
        std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.6f\n", e,
                      r.losses.classification, r.losses.distance_correlation,
                      r.losses.discriminator, r.losses.mask, r.losses.total, r.validation.auc);
        out += line;
    }
    return out;
}

void write_report(const ExperimentResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json", report_json(result));
    write_file(dir / "report.txt", report_table(result));
    for (const SeedRun& run : result.runs) {
        write_file(dir / ("curves_seed" + std::to_string(run.seed) + ".csv"),
                   curves_csv(run.history));
    }
}

std::string params_json(const ModelParams& p) {
    const ModelConfig& c = p.config;
    json config = {{"channels", c.channels},
                   {"hidden_dim", c.hidden_dim},
                   {"layers", c.layers},
                   {"assigner_hidden", c.assigner_hidden},
                   {"temperature", c.temperature},
                   {"initial_mask_logit", c.initial_mask_logit},
                   {"use_assigner", c.use_assigner},
                   {"use_mask", c.use_mask}};
    json reducers = json::array();
    for (const auto& r : p.reducers) {
        reducers.push_back(linear_json(r));
    }
    json updates = json::array();
    for (const auto& layer : p.updates) {
        json row = json::array();
        for (const auto& u : layer) {
            row.push_back(linear_json(u));
        }
        updates.push_back(row);
    }
    json doc = {{"config", config},
                {"input_dim", p.input_dim},
                {"reducers", reducers},
                {"updates", updates},
                {"classifier", linear_json(p.classifier)},
                {"discriminator", linear_json(p.discriminator)}};
    if (c.use_assigner) {
        doc["assigner_hidden"] = linear_json(p.assigner_hidden);
        doc["assigner_out"] = linear_json(p.assigner_out);
    }
    if (c.use_mask) {
        doc["mask_logits"] = matrix_json(p.mask_logits);
    }
    return doc.dump() + "\n";
}

ModelParams params_from_json(const std::string& text) {
    try {
        const json doc = json::parse(text);
        const json& c = doc.at("config");
        ModelParams p;
        p.config.channels = c.at("channels").get<std::size_t>();
        p.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
        p.config.layers = c.at("layers").get<std::size_t>();
        p.config.assigner_hidden = c.at("assigner_hidden").get<std::size_t>();
        p.config.temperature = c.at("temperature").get<double>();
        p.config.initial_mask_logit = c.at("initial_mask_logit").get<double>();
        p.config.use_assigner = c.at("use_assigner").get<bool>();
        p.config.use_mask = c.at("use_mask").get<bool>();
        p.config.validate();
        p.input_dim = doc.at("input_dim").get<std::size_t>();
        for (const auto& r : doc.at("reducers")) {
            p.reducers.push_back(linear_from(r));
        }
        for (const auto& layer : doc.at("updates")) {
            p.updates.emplace_back();
            for (const auto& u : layer) {
                p.updates.back().push_back(linear_from(u));
            }
        }
        p.classifier = linear_from(doc.at("classifier"));
        p.discriminator = linear_from(doc.at("discriminator"));
        if (p.config.use_assigner) {
            p.assigner_hidden = linear_from(doc.at("assigner_hidden"));
            p.assigner_out = linear_from(doc.at("assigner_out"));
        }
        if (p.config.use_mask) {
            p.mask_logits = matrix_from(doc.at("mask_logits"));
        }
        if (p.reducers.size() != p.config.channels || p.updates.size() != p.config.layers) {
            throw std::invalid_argument("parameter counts do not match the stored config");
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed model file: ") + e.what());
    }
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
    write_file(path, params_json(params));
}

ModelParams load_params(const std::filesystem::path& path) {
    return params_from_json(read_file(path));
}

}  // namespace fairsad
