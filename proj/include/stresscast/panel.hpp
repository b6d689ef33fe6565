#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stresscast/quarter.hpp"

namespace stresscast {

// One bank's statement snapshot for one quarter. Currency fields are levels,
// yields are annual fractions.
struct BankQuarter {
    std::string bank_id;
    Quarter quarter;
    double net_loans = 0;
    double deposits_total = 0;
    double deposits_domestic = 0;
    double assets_avg = 0;
    double earning_assets_avg = 0;
    double equity_avg = 0;
    double loans_avg = 0;
    double cfd = 0;        // deposit cost of funding
    double yea = 0;        // yield on earning assets
    double nfia = 0;       // noninterest income to average assets
    double rw_density = 0; // RWA / assets
    double loss_loan = 0;  // loss allowance to loans
    double rwa_total = 0;
    double car = 0;
    bool failed = false;

    // Throws DataError on a violated invariant. rwa_total vs rw_density*assets
    // is checked within `rwa_tolerance` relative error when both are present.
    void check(double rwa_tolerance = 0.05) const;
};

// The ten macro indicators for one quarter.
struct MacroQuarter {
    Quarter quarter;
    double gdp = 0;
    double exports = 0;
    double govcredit = 0;
    double debt = 0;
    double govexp = 0;
    double inflat = 0;
    double rre = 0;
    double unr = 0;
    double yield10y = 0;
    double stocks = 0;

    static constexpr int kIndicators = 10;
    static const std::array<const char*, kIndicators>& names();
    std::array<double, kIndicators> values() const;

    void check() const;
};

// Registry of financial variables addressable from a FeatureRecipe.
const std::vector<std::string>& financial_variable_names();           // all 14
const std::vector<std::string>& default_feature_financials();         // the 9 modelled ones
double financial_value(const BankQuarter& b, const std::string& name); // throws DataError

// Canonical target block of a supervised row. Growth rates are one-year
// (t -> t+4); yields are the t+4 values. Both RWA measures are kept so one
// cached panel serves every framework.
enum TargetIndex : int {
    kTargetGDep = 0,
    kTargetGLoan,
    kTargetGAsset,
    kTargetGEasset,
    kTargetCostOfRisk,
    kTargetYea,
    kTargetCfd,
    kTargetNfia,
    kTargetRwaGrowth,
    kTargetRwDensity,
    kTargetCount,
};
const std::array<const char*, kTargetCount>& target_names();

// Declares which lags enter the feature vector. Offsets are in quarters,
// non-negative, sorted, unique.
struct FeatureRecipe {
    std::vector<int> macro_lags{0, 4, 8, 12};
    std::vector<int> financial_lags{0, 4, 8};
    std::vector<std::string> included_financials = default_feature_financials();

    int feature_dim() const;
    std::vector<std::string> feature_names() const;
    void validate() const;  // throws DataError
};

struct PanelRow {
    std::string bank_id;
    Quarter quarter;  // feature quarter; targets refer to quarter+4
    std::vector<double> x;
    std::array<double, kTargetCount> y{};
};

struct SupervisedPanel {
    std::vector<PanelRow> rows;
    int feature_dim = 0;
    std::vector<std::string> feature_names;
};

struct SplitAssignment {
    std::set<std::string> train_ids;
    std::set<std::string> validation_ids;
    QuarterRange in_sample_window{};
    QuarterRange out_of_time_window{};
};

// Maps canonical field names to file column headers.
using ColumnMap = std::map<std::string, std::string>;

std::vector<BankQuarter> load_bank_panel(const std::string& path, const ColumnMap& schema,
                                         char delimiter = ',');
std::vector<MacroQuarter> load_macro(const std::string& path, const ColumnMap& schema,
                                     char delimiter = ',');

// Drops failed-bank records, order preserved.
std::vector<BankQuarter> filter_failed(const std::vector<BankQuarter>& panel);

// MAD-rule outlier cleaning with linear interpolation between the nearest
// non-flagged neighbours; endpoints take the nearest non-flagged value.
// MAD = median(|x - median|); with MAD = 0 nothing is flagged.
std::vector<double> clean_outliers(const std::vector<double>& series, double mad_threshold);

// Entity-level split, deterministic in `seed`.
SplitAssignment split_panel(const std::vector<BankQuarter>& panel, double ratio,
                            std::uint64_t seed, QuarterRange in_sample,
                            QuarterRange out_of_time);

// Quarter-indexed series of one bank's records.
struct BankHistory {
    std::string bank_id;
    std::map<int, BankQuarter> by_index;

    const BankQuarter* find(Quarter q) const;
};
std::map<std::string, BankHistory> index_panel(const std::vector<BankQuarter>& panel);

struct MacroSeries {
    std::map<int, MacroQuarter> by_index;

    MacroSeries() = default;
    explicit MacroSeries(const std::vector<MacroQuarter>& series);
    const MacroQuarter* find(Quarter q) const;
};

// Macro lookup with optional per-quarter overrides (scenario injection).
struct MacroView {
    const MacroSeries* base = nullptr;
    const std::map<int, MacroQuarter>* overrides = nullptr;

    const MacroQuarter* find(Quarter q) const;
};

// Appends the recipe's feature vector for `bank` at `as_of` to `out`.
// Returns false (leaving `out` untouched) if any required lag is missing.
bool build_feature_row(const BankHistory& bank, const MacroView& macro,
                       const FeatureRecipe& recipe, Quarter as_of, std::vector<double>& out);

// Fills the 10-target block for `bank` at `as_of`. False when the t+4 record
// is missing or a growth base is zero/non-finite.
bool compute_targets(const BankHistory& bank, Quarter as_of, std::array<double, kTargetCount>& out);

struct BuildStats {
    long rows_emitted = 0;
    long rows_dropped = 0;
};

// Supervised rows for every (bank, quarter) with complete lags and a valid
// t+4 target. Rows come out sorted by (bank_id, quarter).
SupervisedPanel build_features(const std::vector<BankQuarter>& panel,
                               const std::vector<MacroQuarter>& macro,
                               const FeatureRecipe& recipe, BuildStats* stats = nullptr);

// Per-feature affine statistics. sd is the population convention (divide by
// N); constant columns (sd = 0) pass through unscaled and are flagged.
struct FeatureStats {
    std::vector<double> mean;
    std::vector<double> sd;
    std::vector<std::uint8_t> constant;
};

// Applies (x - mean)/sd per feature. Stats are computed from `panel` when
// absent (train time) and applied as-is when present (test time). Targets are
// never scaled.
std::pair<SupervisedPanel, FeatureStats> standardize(
    const SupervisedPanel& panel, const std::optional<FeatureStats>& stats = std::nullopt);

// Inverse of the standardize transform (used by round-trip checks).
SupervisedPanel unstandardize(const SupervisedPanel& panel, const FeatureStats& stats);

// Canonical columnar cache. Text format documented in the README; reruns on
// identical input are byte-identical.
void save_panel(const SupervisedPanel& panel, const std::string& path);
SupervisedPanel load_panel(const std::string& path);

}  // namespace stresscast
