#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fairsad/graph.hpp"
#include "fairsad/model.hpp"

namespace fairsad {

enum class MaskLossNodes { All, Train };
enum class EvalSplit { Test, Val };

struct RunConfig {
    // Dataset: either a nodes/edges file pair or the synthetic generator.
    std::string nodes_path;
    std::string edges_path;
    GraphSchema schema;
    bool synthetic = false;
    SyntheticSpec synthetic_spec;
    bool normalize = true;

    ModelConfig model;
    double alpha = 0.1;
    double beta = 1.0;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::size_t epochs = 1000;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    SplitRatios split;
    std::uint64_t split_seed = 0;

    bool disable_disentanglement = false;
    bool disable_mask = false;
    bool disable_micro = false;
    bool disable_macro = false;
    MaskLossNodes mask_loss_nodes = MaskLossNodes::All;
    EvalSplit eval_split = EvalSplit::Test;

    bool has_dataset() const { return synthetic || (!nodes_path.empty() && !edges_path.empty()); }

    // Model shape after ablations: no disentanglement / no micro => K = 1 and
    // no assigner; no mask => all-ones mask.
    ModelConfig effective_model() const;
    // L_dc and L_d are in the objective and the discriminator is stepped.
    bool macro_active() const;
    bool mask_loss_active() const { return !disable_mask; }

    void validate() const;

    // Sets one key from its text form; throws std::invalid_argument on an
    // unknown key or malformed value.
    void set(const std::string& key, const std::string& value);
    // All keys in a fixed order with their current values.
    std::vector<std::pair<std::string, std::string>> entries() const;
};

// Every accepted key, in the order entries() lists them.
const std::vector<std::string>& config_keys();

// Flat `key = value` text; '#' starts a comment. Errors name the line.
RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& overrides);
std::string format_config(const RunConfig& config);

}  // namespace fairsad
