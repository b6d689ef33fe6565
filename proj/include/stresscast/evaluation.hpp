#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "stresscast/frameworks.hpp"
#include "stresscast/panel.hpp"

namespace stresscast::eval {

double rmse(std::span<const double> pred, std::span<const double> actual);
double mae(std::span<const double> pred, std::span<const double> actual);

struct MapeResult {
    double value = 0;   // fraction, not percent
    long excluded = 0;  // pairs with actual == 0
};
MapeResult mape(std::span<const double> pred, std::span<const double> actual);

struct MetricRow {
    std::string framework;
    std::string sample;  // "out_of_time" | "in_sample"
    std::string cohort;  // "all" | "large"
    double rmse = 0;
    double mae = 0;
    double mape = 0;
    double mean_predicted_car = 0;
    double mean_actual_car = 0;
    long n = 0;
    long mape_excluded = 0;
};

struct SeriesPoint {
    Quarter target_quarter;
    std::string cohort;
    double mean_predicted = 0;
    double mean_actual = 0;
    long n = 0;
};

struct EvaluationReport {
    std::vector<MetricRow> rows;
    std::map<std::string, std::vector<SeriesPoint>> series;  // per framework
    long unmatched = 0;        // projections with no actual CAR
    long outside_windows = 0;  // target quarter in neither sample window
    std::vector<std::string> omitted;  // empty framework/sample/cohort cells
};

// Banks whose assets_avg at the as_of quarter strictly exceeds the threshold
// ("more than 200 billion").
std::vector<frameworks::Projection> subset_large(const std::vector<frameworks::Projection>& projections,
                                                 const std::vector<BankQuarter>& panel,
                                                 double threshold = 200e9);

// Joins projections with actual CARs at as_of+4 and aggregates MetricRows per
// framework x sample x cohort plus per-quarter mean CAR series. Sample
// attribution is by target quarter against the split windows. Throws
// DataError when nothing matches.
EvaluationReport evaluate(const std::vector<frameworks::Projection>& projections,
                          const std::vector<BankQuarter>& actuals, const SplitAssignment& split,
                          double large_threshold = 200e9);

// Writes metrics.csv (framework x sample x cohort, 2-decimal rounding, MAPE
// footnote), one car_series_<framework>.csv per framework, and manifest.txt.
// Byte-stable across reruns.
void emit_report(const EvaluationReport& report, const std::string& out_dir);

}  // namespace stresscast::eval
