#include "fairsad/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace fairsad {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
    throw std::invalid_argument("config key '" + key + "': '" + value + "' is not " + expected);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size()) {
        bad_value(key, text, "a number");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size()) {
        bad_value(key, text, "a non-negative integer");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") {
        return true;
    }
    if (text == "false" || text == "0" || text == "no") {
        return false;
    }
    bad_value(key, text, "a boolean");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(trim(item));
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return {buf, end};
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Key {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define FAIRSAD_DOUBLE(KEY, FIELD)                                                          \
    Key {                                                                                   \
        KEY, [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(KEY, v); },    \
            [](const RunConfig& c) { return fmt(c.FIELD); }                                 \
    }
#define FAIRSAD_SIZE(KEY, FIELD)                                                            \
    Key {                                                                                   \
        KEY, [](RunConfig& c, const std::string& v) { c.FIELD = parse_uint(KEY, v); },      \
            [](const RunConfig& c) { return std::to_string(c.FIELD); }                      \
    }
#define FAIRSAD_BOOL(KEY, FIELD)                                                            \
    Key {                                                                                   \
        KEY, [](RunConfig& c, const std::string& v) { c.FIELD = parse_bool(KEY, v); },      \
            [](const RunConfig& c) { return fmt(c.FIELD); }                                 \
    }
#define FAIRSAD_STRING(KEY, FIELD)                                                          \
    Key {                                                                                   \
        KEY, [](RunConfig& c, const std::string& v) { c.FIELD = v; },                       \
            [](const RunConfig& c) { return c.FIELD; }                                      \
    }

const std::vector<Key>& key_table() {
    static const std::vector<Key> table = {
        FAIRSAD_STRING("nodes", nodes_path),
        FAIRSAD_STRING("edges", edges_path),
        FAIRSAD_STRING("id_column", schema.id_column),
        FAIRSAD_STRING("sensitive_column", schema.sensitive_column),
        FAIRSAD_STRING("label_column", schema.label_column),
        Key{"delimiter",
            [](RunConfig& c, const std::string& v) {
                if (v == "tab" || v == "\\t") {
                    c.schema.delimiter = '\t';
                } else if (v.size() == 1) {
                    c.schema.delimiter = v[0];
                } else {
                    bad_value("delimiter", v, "a single character or 'tab'");
                }
            },
            [](const RunConfig& c) {
                return c.schema.delimiter == '\t' ? std::string("tab")
                                                  : std::string(1, c.schema.delimiter);
            }},
        FAIRSAD_BOOL("normalize", normalize),
        FAIRSAD_BOOL("synthetic", synthetic),
        FAIRSAD_SIZE("synth_nodes_per_group", synthetic_spec.nodes_per_group),
        FAIRSAD_DOUBLE("synth_p_intra", synthetic_spec.p_intra),
        FAIRSAD_DOUBLE("synth_p_inter", synthetic_spec.p_inter),
        FAIRSAD_SIZE("synth_feature_dim", synthetic_spec.feature_dim),
        FAIRSAD_DOUBLE("synth_leakage", synthetic_spec.leakage),
        FAIRSAD_DOUBLE("synth_label_signal", synthetic_spec.label_signal),
        FAIRSAD_DOUBLE("synth_label_correlation", synthetic_spec.label_correlation),
        FAIRSAD_SIZE("synth_seed", synthetic_spec.seed),
        FAIRSAD_SIZE("channels", model.channels),
        FAIRSAD_SIZE("hidden_dim", model.hidden_dim),
        FAIRSAD_SIZE("layers", model.layers),
        FAIRSAD_SIZE("assigner_hidden", model.assigner_hidden),
        FAIRSAD_DOUBLE("temperature", model.temperature),
        FAIRSAD_DOUBLE("initial_mask_logit", model.initial_mask_logit),
        FAIRSAD_DOUBLE("alpha", alpha),
        FAIRSAD_DOUBLE("beta", beta),
        FAIRSAD_DOUBLE("lr", lr),
        FAIRSAD_DOUBLE("weight_decay", weight_decay),
        FAIRSAD_SIZE("epochs", epochs),
        Key{"seeds",
            [](RunConfig& c, const std::string& v) {
                c.seeds.clear();
                for (const auto& item : split_list(v)) {
                    c.seeds.push_back(parse_uint("seeds", item));
                }
            },
            [](const RunConfig& c) {
                std::string out;
                for (std::size_t i = 0; i < c.seeds.size(); ++i) {
                    out += (i ? "," : "") + std::to_string(c.seeds[i]);
                }
                return out;
            }},
        Key{"split",
            [](RunConfig& c, const std::string& v) {
                const auto items = split_list(v);
                if (items.size() != 3) {
                    bad_value("split", v, "three comma-separated ratios");
                }
                c.split = {parse_double("split", items[0]), parse_double("split", items[1]),
                           parse_double("split", items[2])};
            },
            [](const RunConfig& c) {
                return fmt(c.split.train) + "," + fmt(c.split.val) + "," + fmt(c.split.test);
            }},
        FAIRSAD_SIZE("split_seed", split_seed),
        FAIRSAD_BOOL("disable_disentanglement", disable_disentanglement),
        FAIRSAD_BOOL("disable_mask", disable_mask),
        FAIRSAD_BOOL("disable_micro", disable_micro),
        FAIRSAD_BOOL("disable_macro", disable_macro),
        Key{"mask_loss_nodes",
            [](RunConfig& c, const std::string& v) {
                if (v == "all") {
                    c.mask_loss_nodes = MaskLossNodes::All;
                } else if (v == "train") {
                    c.mask_loss_nodes = MaskLossNodes::Train;
                } else {
                    bad_value("mask_loss_nodes", v, "'all' or 'train'");
                }
            },
            [](const RunConfig& c) {
                return std::string(c.mask_loss_nodes == MaskLossNodes::All ? "all" : "train");
            }},
        Key{"eval_split",
            [](RunConfig& c, const std::string& v) {
                if (v == "test") {
                    c.eval_split = EvalSplit::Test;
                } else if (v == "val") {
                    c.eval_split = EvalSplit::Val;
                } else {
                    bad_value("eval_split", v, "'test' or 'val'");
                }
            },
            [](const RunConfig& c) {
                return std::string(c.eval_split == EvalSplit::Test ? "test" : "val");
            }},
    };
    return table;
}

#undef FAIRSAD_DOUBLE
#undef FAIRSAD_SIZE
#undef FAIRSAD_BOOL
#undef FAIRSAD_STRING

}  // namespace

ModelConfig RunConfig::effective_model() const {
    ModelConfig m = model;
    if (disable_disentanglement || disable_micro) {
        m.channels = 1;
        m.use_assigner = false;
    }
    if (disable_mask) {
        m.use_mask = false;
    }
    return m;
}

bool RunConfig::macro_active() const {
    return !disable_disentanglement && !disable_macro && effective_model().channels > 1;
}

void RunConfig::validate() const {
    effective_model().validate();
    if (epochs == 0) {
        throw std::invalid_argument("config: epochs must be >= 1");
    }
    if (!(lr > 0.0)) {
        throw std::invalid_argument("config: lr must be positive");
    }
    if (alpha < 0.0 || beta < 0.0 || weight_decay < 0.0) {
        throw std::invalid_argument("config: alpha, beta and weight_decay must be non-negative");
    }
    if (seeds.empty()) {
        throw std::invalid_argument("config: at least one seed is required");
    }
    if (!(split.train >= 0.0 && split.val >= 0.0 && split.test >= 0.0) ||
        split.train + split.val + split.test > 1.0 + 1e-9) {
        throw std::invalid_argument("config: split ratios must be non-negative and sum to <= 1");
    }
    if (synthetic) {
        synthetic_spec.validate();
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    for (const Key& k : key_table()) {
        if (k.name == key) {
            k.set(*this, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const Key& k : key_table()) {
        out.emplace_back(k.name, k.get(*this));
    }
    return out;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const Key& k : key_table()) {
            out.push_back(k.name);
        }
        return out;
    }();
    return keys;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(number) + ": ";
        if (eq == std::string::npos) {
            throw std::invalid_argument(where + "expected 'key = value'");
        }
        try {
            config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(where + e.what());
        }
    }
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.string());
}

void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& overrides) {
    for (const auto& [key, value] : overrides) {
        if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }
    // Apply in table order so the result does not depend on map ordering.
    for (const std::string& key : config_keys()) {
        const auto it = overrides.find(key);
        if (it != overrides.end()) {
            config.set(key, it->second);
        }
    }
}

std::string format_config(const RunConfig& config) {
    std::string out;
    for (const auto& [key, value] : config.entries()) {
        out += key + " = " + value + "\n";
    }
    return out;
}

}  // namespace fairsad
