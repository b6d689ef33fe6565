#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stresscast/balance.hpp"
#include "stresscast/bayes_network.hpp"
#include "stresscast/bma.hpp"
#include "stresscast/network.hpp"
#include "stresscast/panel.hpp"

namespace stresscast::frameworks {

enum class FrameworkKind {
    ConstantBalanceSheet,
    SatelliteBma,
    DeepStressPoint,      // dropout-ReLU point estimate
    DeepStressBayesRelu,  // variational weights, ReLU
    DeepStressBayesLwta,  // variational weights, LWTA blocks
};

const std::vector<FrameworkKind>& all_frameworks();
std::string to_string(FrameworkKind kind);
FrameworkKind parse_framework(const std::string& name);  // throws UsageError listing valid names
balance::RwaMethod rwa_method(FrameworkKind kind);
bool is_neural(FrameworkKind kind);

// One bank's one-year-ahead projection.
struct Projection {
    std::string bank_id;
    Quarter as_of;
    balance::TargetVector targets;
    double projected_capital = 0;
    double projected_rwa = 0;
    double predicted_car = 0;
    FrameworkKind framework = FrameworkKind::ConstantBalanceSheet;
};

// Macro overrides for quarters strictly after the anchor (the last actual
// quarter the run calibrates on).
struct ScenarioPath {
    Quarter anchor;
    std::map<int, MacroQuarter> overrides;  // keyed by quarter index

    void check() const;  // contiguous, strictly after anchor
};

// Scenario rows may override any subset of the indicators; missing cells keep
// the observed values from `base` (a quarter absent from `base` must override
// all ten).
ScenarioPath load_scenario(const std::string& path, const ColumnMap& schema, Quarter anchor,
                           const MacroSeries& base, char delimiter = ',');

struct FitOptions {
    FeatureRecipe recipe;  // the recipe the panels were built with
    bma::BmaOptions bma;
    std::vector<nn::NetworkConfig> grid;  // CV candidates; single entry skips the search
    int cv_folds = 5;
    bayesnn::BayesTrainOptions bayes;
    std::string report_dir;  // when set, training reports land here
};

// Everything projection needs: the estimator plus the train-time recipe and
// standardization statistics (reused verbatim out-of-time).
struct FittedArtifact {
    FrameworkKind kind = FrameworkKind::ConstantBalanceSheet;
    FeatureRecipe recipe;
    FeatureStats stats;
    std::optional<bma::SatelliteSet> satellites;  // 9 models, or 4 yields for Constant
    std::optional<nn::NetworkConfig> net_config;
    std::optional<nn::NetworkParams> net_params;
    std::optional<bayesnn::VariationalParams> var_params;
};

// Fits the framework on raw (unstandardized) supervised panels; train
// statistics are computed here and stored in the artifact. Neural variants
// take the grid's single config as-is (cmd_train layers 5-fold CV on top).
FittedArtifact fit(FrameworkKind kind, const SupervisedPanel& train_panel,
                   const SupervisedPanel& valid_panel, const FitOptions& opt);

// Predicts the framework's 9 targets for one standardized feature vector.
balance::TargetVector predict_targets(const FittedArtifact& art, const std::vector<double>& x_raw);

// Builds the feature row at as_of (scenario overrides consulted first),
// applies the artifact, and rolls the balance sheet forward one year.
// Throws DataError on insufficient history or a missing quarter.
Projection project_bank(const FittedArtifact& art, const BankHistory& bank, const MacroView& macro,
                        Quarter as_of);

struct SkipRecord {
    std::string bank_id;
    Quarter as_of;
    std::string reason;
};

struct ProjectionRun {
    std::vector<Projection> projections;
    std::vector<SkipRecord> skips;
};

// One projection per (bank, as_of) in the range with sufficient history;
// banks failing preconditions land in the skip report, never silently
// dropped. Output sorted by (bank_id, as_of).
ProjectionRun project_all(const FittedArtifact& art, const std::vector<BankQuarter>& panel,
                          const MacroSeries& macro, const ScenarioPath* scenario,
                          QuarterRange as_of_range);

// End-to-end CAR-RMSE fold scorer for nn::cross_validate: trains the config
// on the fold's train entities and scores full projections against actual
// CARs on the held-out entities.
nn::FoldScorer make_car_scorer(FrameworkKind kind, const SupervisedPanel& panel,
                               const std::vector<BankQuarter>& raw_panel,
                               const MacroSeries& macro, QuarterRange as_of_range,
                               const FitOptions& opt);

void save_artifact(const FittedArtifact& art, const std::string& dir);
FittedArtifact load_artifact(const std::string& dir);

}  // namespace stresscast::frameworks
