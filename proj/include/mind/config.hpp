#pragma once

// JSON experiment configuration: a "data" section (SyntheticConfig), a
// "train" section (TrainConfig), an optional "sweep" section and an output
// directory. Unknown keys are rejected; every value is type-checked.

#include "mind/synth.hpp"
#include "mind/train.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mind {

struct SweepSpec
{
    /// Empty for the variant suite.
    std::string variable;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
    /// Oracle estimator settings for the epsilon study.
    std::size_t oracle_batch_size = 1024;
    std::size_t oracle_passes = 40;
    double oracle_alpha = 0.99;
};

struct ExperimentConfig
{
    SyntheticConfig data;
    TrainConfig train;
    std::optional<SweepSpec> sweep;
    std::string output_dir = "out";

    void validate() const
    {
        data.validate();
        train.validate();
        if (sweep) {
            if (sweep->seeds.empty())
                throw ConfigError("sweep.seeds: must not be empty");
            if (!sweep->variable.empty() && sweep->values.empty())
                throw ConfigError("sweep.values: must not be empty when sweep.variable is set");
            if (sweep->oracle_batch_size < 1)
                throw ConfigError("sweep.oracle_batch_size: must be >= 1");
            if (!(sweep->oracle_alpha >= 0.0 && sweep->oracle_alpha < 1.0))
                throw ConfigError("sweep.oracle_alpha: must lie in [0, 1)");
        }
    }
};

namespace detail {

    using json = nlohmann::json;

    inline double as_number(const json& v, const std::string& key)
    {
        if (!v.is_number())
            throw ConfigError(key + ": expected a number");
        return v.get<double>();
    }

    inline std::uint64_t as_unsigned(const json& v, const std::string& key)
    {
        if (v.is_number_unsigned())
            return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
            return static_cast<std::uint64_t>(v.get<std::int64_t>());
        throw ConfigError(key + ": expected a non-negative integer");
    }

    inline bool as_bool(const json& v, const std::string& key)
    {
        if (!v.is_boolean())
            throw ConfigError(key + ": expected true or false");
        return v.get<bool>();
    }

    inline std::string as_string(const json& v, const std::string& key)
    {
        if (!v.is_string())
            throw ConfigError(key + ": expected a string");
        return v.get<std::string>();
    }

    inline const json& as_array(const json& v, const std::string& key)
    {
        if (!v.is_array())
            throw ConfigError(key + ": expected an array");
        return v;
    }

    using Setter = std::function<void(const json&, const std::string&)>;

    inline void apply_section(const json& section, const std::string& prefix, const std::map<std::string, Setter>& setters)
    {
        if (!section.is_object())
            throw ConfigError(prefix + ": expected an object");
        for (const auto& [key, value] : section.items()) {
            const std::string path = prefix + "." + key;
            const auto it = setters.find(key);
            if (it == setters.end())
                throw ConfigError(path + ": unknown key");
            it->second(value, path);
        }
    }

    inline std::size_t as_size(const json& v, const std::string& key)
    {
        return static_cast<std::size_t>(as_unsigned(v, key));
    }

    inline void parse_data(const json& j, SyntheticConfig& c)
    {
        apply_section(j, "data",
                      {
                          {"generator", [&](const json& v, const std::string& k) { c.generator = parse_generator(as_string(v, k)); }},
                          {"num_modes", [&](const json& v, const std::string& k) { c.num_modes = as_size(v, k); }},
                          {"num_classes", [&](const json& v, const std::string& k) { c.num_classes = as_size(v, k); }},
                          {"input_dim", [&](const json& v, const std::string& k) { c.input_dim = as_size(v, k); }},
                          {"samples_per_mode", [&](const json& v, const std::string& k) { c.samples_per_mode = as_size(v, k); }},
                          {"anchor_fraction", [&](const json& v, const std::string& k) { c.anchor_fraction = as_number(v, k); }},
                          {"diag_mass", [&](const json& v, const std::string& k) { c.diag_mass = as_number(v, k); }},
                          {"cluster_spread", [&](const json& v, const std::string& k) { c.cluster_spread = as_number(v, k); }},
                          {"epsilon", [&](const json& v, const std::string& k) { c.epsilon = as_number(v, k); }},
                          {"manifold_lipschitz", [&](const json& v, const std::string& k) { c.manifold_lipschitz = as_number(v, k); }},
                          {"center_separation", [&](const json& v, const std::string& k) { c.center_separation = as_number(v, k); }},
                          {"curve_radius", [&](const json& v, const std::string& k) { c.curve_radius = as_number(v, k); }},
                          {"class_separation", [&](const json& v, const std::string& k) { c.class_separation = as_number(v, k); }},
                          {"seed", [&](const json& v, const std::string& k) { c.seed = as_unsigned(v, k); }},
                      });
    }

    inline void parse_train(const json& j, TrainConfig& c)
    {
        apply_section(j, "train",
                      {
                          {"epochs", [&](const json& v, const std::string& k) { c.epochs = as_size(v, k); }},
                          {"batch_size", [&](const json& v, const std::string& k) { c.batch_size = as_size(v, k); }},
                          {"learning_rate", [&](const json& v, const std::string& k) { c.learning_rate = as_number(v, k); }},
                          {"lambda", [&](const json& v, const std::string& k) { c.lambda = as_number(v, k); }},
                          {"num_modes", [&](const json& v, const std::string& k) { c.num_modes = as_size(v, k); }},
                          {"alpha", [&](const json& v, const std::string& k) { c.alpha = as_number(v, k); }},
                          {"warm_up_epochs", [&](const json& v, const std::string& k) { c.warm_up_epochs = as_size(v, k); }},
                          {"temperature", [&](const json& v, const std::string& k) { c.temperature = as_number(v, k); }},
                          {"seed", [&](const json& v, const std::string& k) { c.seed = as_unsigned(v, k); }},
                          {"variant", [&](const json& v, const std::string& k) { c.variant = parse_variant(as_string(v, k)); }},
                          {"hidden_dim", [&](const json& v, const std::string& k) { c.hidden_dim = as_size(v, k); }},
                          {"feature_dim", [&](const json& v, const std::string& k) { c.feature_dim = as_size(v, k); }},
                          {"init_diag", [&](const json& v, const std::string& k) { c.init_diag = as_number(v, k); }},
                          {"test_fraction", [&](const json& v, const std::string& k) { c.test_fraction = as_number(v, k); }},
                          {"detach_omega", [&](const json& v, const std::string& k) { c.detach_omega = as_bool(v, k); }},
                          {"oracle_proxy", [&](const json& v, const std::string& k) { c.oracle_proxy = as_bool(v, k); }},
                      });
    }

    inline void parse_sweep(const json& j, SweepSpec& s)
    {
        apply_section(j, "sweep",
                      {
                          {"variable", [&](const json& v, const std::string& k) { s.variable = as_string(v, k); }},
                          {"values",
                           [&](const json& v, const std::string& k) {
                               s.values.clear();
                               for (const auto& e : as_array(v, k))
                                   s.values.push_back(as_number(e, k + "[]"));
                           }},
                          {"seeds",
                           [&](const json& v, const std::string& k) {
                               s.seeds.clear();
                               for (const auto& e : as_array(v, k))
                                   s.seeds.push_back(as_unsigned(e, k + "[]"));
                           }},
                          {"variants",
                           [&](const json& v, const std::string& k) {
                               s.variants.clear();
                               for (const auto& e : as_array(v, k))
                                   s.variants.push_back(parse_variant(as_string(e, k + "[]")));
                           }},
                          {"oracle_batch_size", [&](const json& v, const std::string& k) { s.oracle_batch_size = as_size(v, k); }},
                          {"oracle_passes", [&](const json& v, const std::string& k) { s.oracle_passes = as_size(v, k); }},
                          {"oracle_alpha", [&](const json& v, const std::string& k) { s.oracle_alpha = as_number(v, k); }},
                      });
    }

} // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text)
{
    using json = nlohmann::json;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object())
        throw ConfigError("config: top level must be an object");
    ExperimentConfig cfg;
    if (!root.contains("data"))
        throw ConfigError("data: required section missing");
    if (!root.contains("train"))
        throw ConfigError("train: required section missing");
    for (const auto& [key, value] : root.items()) {
        if (key == "data")
            detail::parse_data(value, cfg.data);
        else if (key == "train")
            detail::parse_train(value, cfg.train);
        else if (key == "sweep") {
            cfg.sweep.emplace();
            detail::parse_sweep(value, *cfg.sweep);
        } else if (key == "output_dir")
            cfg.output_dir = detail::as_string(value, key);
        else
            throw ConfigError(key + ": unknown key");
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_experiment_config(buf.str());
}

} // namespace mind
