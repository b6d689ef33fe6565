#pragma once

// JSON run configuration for the CLI. Seeds are mandatory: the tool never
// falls back to wall-clock entropy.

#include <json.hpp>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "stresscast/bma.hpp"
#include "stresscast/errors.hpp"
#include "stresscast/frameworks.hpp"
#include "stresscast/network.hpp"
#include "stresscast/panel.hpp"
#include "stresscast/quarter.hpp"

namespace stresscast::cli {

struct RunConfig {
    std::string bank_panel_path;
    std::string macro_path;
    std::string out_dir;
    std::string scenario_path;  // optional
    char delimiter = ',';

    ColumnMap bank_columns;
    ColumnMap macro_columns;
    ColumnMap scenario_columns;

    FeatureRecipe recipe;

    double split_ratio = 0.8;
    std::uint64_t split_seed = 0;
    QuarterRange in_sample{};
    QuarterRange out_of_time{};

    std::vector<frameworks::FrameworkKind> frameworks_selected;
    bma::BmaOptions bma;
    std::vector<nn::NetworkConfig> grid;
    int cv_folds = 5;
    std::uint64_t network_seed = 0;
    bayesnn::BayesTrainOptions bayes;

    QuarterRange projection_range{};
    bool projection_range_set = false;
    double large_threshold = 200e9;

    nlohmann::json raw;  // resolved snapshot source
};

inline ColumnMap parse_columns(const nlohmann::json& j) {
    ColumnMap map;
    for (const auto& [key, value] : j.items()) map[key] = value.get<std::string>();
    return map;
}

inline QuarterRange parse_range(const nlohmann::json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 2)
        throw UsageError("config: " + what + " must be [first, last] quarters");
    return {Quarter::parse(j[0].get<std::string>()), Quarter::parse(j[1].get<std::string>())};
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
    }

    RunConfig cfg;
    cfg.raw = j;
    try {
        const auto& paths = j.at("paths");
        cfg.bank_panel_path = paths.at("bank_panel").get<std::string>();
        cfg.macro_path = paths.at("macro").get<std::string>();
        cfg.out_dir = paths.at("out_dir").get<std::string>();
        if (paths.contains("scenario")) cfg.scenario_path = paths["scenario"].get<std::string>();

        if (j.contains("delimiter")) {
            const auto d = j["delimiter"].get<std::string>();
            if (d.size() != 1) throw UsageError("config: delimiter must be one character");
            cfg.delimiter = d[0];
        }
        if (j.contains("columns")) {
            const auto& cols = j["columns"];
            if (cols.contains("bank")) cfg.bank_columns = parse_columns(cols["bank"]);
            if (cols.contains("macro")) cfg.macro_columns = parse_columns(cols["macro"]);
            if (cols.contains("scenario")) cfg.scenario_columns = parse_columns(cols["scenario"]);
        }
        if (j.contains("recipe")) {
            const auto& r = j["recipe"];
            if (r.contains("macro_lags")) cfg.recipe.macro_lags = r["macro_lags"].get<std::vector<int>>();
            if (r.contains("financial_lags"))
                cfg.recipe.financial_lags = r["financial_lags"].get<std::vector<int>>();
            if (r.contains("included_financials"))
                cfg.recipe.included_financials =
                    r["included_financials"].get<std::vector<std::string>>();
        }

        const auto& split = j.at("split");
        cfg.split_ratio = split.at("ratio").get<double>();
        if (!split.contains("seed")) throw UsageError("config: split.seed is mandatory");
        cfg.split_seed = split.at("seed").get<std::uint64_t>();
        cfg.in_sample = parse_range(split.at("in_sample"), "split.in_sample");
        cfg.out_of_time = parse_range(split.at("out_of_time"), "split.out_of_time");

        for (const auto& name : j.at("frameworks"))
            cfg.frameworks_selected.push_back(frameworks::parse_framework(name.get<std::string>()));

        bool needs_bma = false, needs_net = false;
        for (auto kind : cfg.frameworks_selected) {
            needs_bma = needs_bma || !frameworks::is_neural(kind);
            needs_net = needs_net || frameworks::is_neural(kind);
        }

        if (j.contains("bma")) {
            const auto& b = j["bma"];
            if (b.contains("g")) cfg.bma.g = b["g"].get<double>();
            if (b.contains("g_rule")) {
                const auto rule = b["g_rule"].get<std::string>();
                if (rule == "bric")
                    cfg.bma.bric = true;
                else if (rule != "uip")
                    throw UsageError("config: bma.g_rule must be 'uip' or 'bric'");
            }
            if (b.contains("prior")) {
                const auto prior = b["prior"].get<std::string>();
                if (prior == "uniform")
                    cfg.bma.prior_kind = bma::ModelPriorKind::Uniform;
                else if (prior == "binomial-beta")
                    cfg.bma.prior_kind = bma::ModelPriorKind::BinomialBeta;
                else
                    throw UsageError("config: bma.prior must be 'uniform' or 'binomial-beta'");
            }
            if (b.contains("expected_model_size"))
                cfg.bma.expected_model_size = b["expected_model_size"].get<double>();
            if (b.contains("draws")) cfg.bma.draws = b["draws"].get<long>();
            if (b.contains("burnin")) cfg.bma.burnin = b["burnin"].get<long>();
            if (b.contains("enumeration_cap"))
                cfg.bma.enumeration_cap = b["enumeration_cap"].get<int>();
            if (b.contains("outlier_mad_threshold"))
                cfg.bma.outlier_mad_threshold = b["outlier_mad_threshold"].get<double>();
            if (b.contains("seed")) cfg.bma.seed = b["seed"].get<std::uint64_t>();
            else if (needs_bma) throw UsageError("config: bma.seed is mandatory");
        } else if (needs_bma) {
            throw UsageError("config: bma section (with seed) is mandatory for satellite/constant runs");
        }

        if (j.contains("network")) {
            const auto& n = j["network"];
            if (!n.contains("seed")) throw UsageError("config: network.seed is mandatory");
            cfg.network_seed = n["seed"].get<std::uint64_t>();
            if (n.contains("cv_folds")) cfg.cv_folds = n["cv_folds"].get<int>();
            if (n.contains("bayes")) {
                const auto& b = n["bayes"];
                if (b.contains("prior_scale")) cfg.bayes.prior_scale = b["prior_scale"].get<double>();
                if (b.contains("sigma_init")) cfg.bayes.sigma_init = b["sigma_init"].get<double>();
                if (b.contains("temperature_start"))
                    cfg.bayes.temperature_start = b["temperature_start"].get<double>();
                if (b.contains("temperature_end"))
                    cfg.bayes.temperature_end = b["temperature_end"].get<double>();
            }
            for (const auto& g : n.at("grid")) {
                nn::NetworkConfig net;
                net.seed = cfg.network_seed;
                const auto hidden = g.at("hidden").get<std::vector<int>>();
                net.layer_widths.push_back(-1);  // input width resolved at train time
                for (int w : hidden) net.layer_widths.push_back(w);
                net.layer_widths.push_back(nn::kOutputWidth);
                if (g.contains("dropout")) net.dropout_rate = g["dropout"].get<double>();
                if (g.contains("learning_rate")) net.learning_rate = g["learning_rate"].get<double>();
                if (g.contains("momentum")) net.momentum = g["momentum"].get<double>();
                if (g.contains("batch_size")) net.batch_size = g["batch_size"].get<int>();
                if (g.contains("epochs")) net.epochs = g["epochs"].get<int>();
                if (g.contains("lwta_block_size"))
                    net.lwta_block_size = g["lwta_block_size"].get<int>();
                cfg.grid.push_back(std::move(net));
            }
            if (cfg.grid.empty()) throw UsageError("config: network.grid must not be empty");
        } else if (needs_net) {
            throw UsageError("config: network section (with seed and grid) is mandatory for deep runs");
        }

        if (j.contains("projection") && j["projection"].contains("as_of")) {
            cfg.projection_range = parse_range(j["projection"]["as_of"], "projection.as_of");
            cfg.projection_range_set = true;
        }
        if (j.contains("evaluate") && j["evaluate"].contains("large_threshold"))
            cfg.large_threshold = j["evaluate"]["large_threshold"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    cfg.recipe.validate();
    return cfg;
}

// Written next to outputs so every run is auditable.
inline void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
    nlohmann::json snapshot = cfg.raw;
    snapshot["paths"]["out_dir"] = cfg.out_dir;
    snapshot["resolved"] = {
        {"feature_dim", cfg.recipe.feature_dim()},
        {"split_seed", cfg.split_seed},
        {"delimiter", std::string(1, cfg.delimiter)},
    };
    std::ofstream out(dir + "/resolved_config.json");
    if (!out) throw DataError("cannot write '" + dir + "/resolved_config.json'");
    out << snapshot.dump(2) << "\n";
}

}  // namespace stresscast::cli
