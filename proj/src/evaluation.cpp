#include "stresscast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "stresscast/errors.hpp"

namespace stresscast::eval {

namespace fs = std::filesystem;

namespace {
void require_lengths(std::span<const double> pred, std::span<const double> actual) {
    if (pred.size() != actual.size()) throw DataError("metric inputs differ in length");
    if (pred.empty()) throw DataError("metric on empty input");
}
}  // namespace

double rmse(std::span<const double> pred, std::span<const double> actual) {
    require_lengths(pred, actual);
    double ss = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - actual[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> actual) {
    require_lengths(pred, actual);
    double total = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - actual[i]);
    return total / static_cast<double>(pred.size());
}

MapeResult mape(std::span<const double> pred, std::span<const double> actual) {
    require_lengths(pred, actual);
    MapeResult out;
    double total = 0;
    long used = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (actual[i] == 0.0) {
            ++out.excluded;
            continue;
        }
        total += std::abs(pred[i] - actual[i]) / std::abs(actual[i]);
        ++used;
    }
    if (used == 0) throw DataError("mape: every pair has actual == 0");
    out.value = total / static_cast<double>(used);
    return out;
}

std::vector<frameworks::Projection> subset_large(
    const std::vector<frameworks::Projection>& projections, const std::vector<BankQuarter>& panel,
    double threshold) {
    const auto banks = index_panel(panel);
    std::vector<frameworks::Projection> out;
    for (const auto& p : projections) {
        auto it = banks.find(p.bank_id);
        if (it == banks.end()) continue;
        const BankQuarter* record = it->second.find(p.as_of);
        if (record && record->assets_avg > threshold) out.push_back(p);
    }
    return out;
}

namespace {

struct Joined {
    const frameworks::Projection* projection;
    double actual_car;
    bool large;
};

struct CellStats {
    std::vector<double> pred;
    std::vector<double> actual;
};

const char* kSamples[] = {"out_of_time", "in_sample"};
const char* kCohorts[] = {"all", "large"};

}  // namespace

EvaluationReport evaluate(const std::vector<frameworks::Projection>& projections,
                          const std::vector<BankQuarter>& actuals, const SplitAssignment& split,
                          double large_threshold) {
    const auto banks = index_panel(actuals);
    EvaluationReport report;

    std::vector<Joined> joined;
    joined.reserve(projections.size());
    for (const auto& p : projections) {
        auto it = banks.find(p.bank_id);
        const BankQuarter* fwd = it == banks.end() ? nullptr : it->second.find(p.as_of + 4);
        if (!fwd) {
            ++report.unmatched;
            continue;
        }
        const BankQuarter* at = it->second.find(p.as_of);
        joined.push_back({&p, fwd->car, at && at->assets_avg > large_threshold});
    }
    if (joined.empty()) throw DataError("evaluate: zero matched projection/actual pairs");

    // framework -> sample -> cohort cells, plus per-quarter series.
    std::map<std::string, std::map<std::string, std::map<std::string, CellStats>>> cells;
    std::map<std::string, std::map<std::pair<int, std::string>, CellStats>> series;
    for (const auto& j : joined) {
        const Quarter target_q = j.projection->as_of + 4;
        const char* sample = nullptr;
        if (split.out_of_time_window.contains(target_q))
            sample = "out_of_time";
        else if (split.in_sample_window.contains(target_q))
            sample = "in_sample";
        else {
            ++report.outside_windows;
            continue;
        }
        const std::string fw = frameworks::to_string(j.projection->framework);
        auto add = [&](const char* cohort) {
            auto& cell = cells[fw][sample][cohort];
            cell.pred.push_back(j.projection->predicted_car);
            cell.actual.push_back(j.actual_car);
            auto& sp = series[fw][{target_q.index(), cohort}];
            sp.pred.push_back(j.projection->predicted_car);
            sp.actual.push_back(j.actual_car);
        };
        add("all");
        if (j.large) add("large");
    }

    for (const auto& [fw, by_sample] : cells) {
        for (const char* sample : kSamples) {
            auto s_it = by_sample.find(sample);
            for (const char* cohort : kCohorts) {
                if (s_it == by_sample.end() || !s_it->second.count(cohort)) {
                    report.omitted.push_back(fw + std::string("/") + sample + "/" + cohort);
                    continue;
                }
                const CellStats& cell = s_it->second.at(cohort);
                MetricRow row;
                row.framework = fw;
                row.sample = sample;
                row.cohort = cohort;
                row.rmse = rmse(cell.pred, cell.actual);
                row.mae = mae(cell.pred, cell.actual);
                const MapeResult mp = mape(cell.pred, cell.actual);
                row.mape = mp.value;
                row.mape_excluded = mp.excluded;
                row.n = static_cast<long>(cell.pred.size());
                for (double v : cell.pred) row.mean_predicted_car += v;
                for (double v : cell.actual) row.mean_actual_car += v;
                row.mean_predicted_car /= static_cast<double>(row.n);
                row.mean_actual_car /= static_cast<double>(row.n);
                report.rows.push_back(std::move(row));
            }
        }
    }

    for (const auto& [fw, by_key] : series) {
        auto& out = report.series[fw];
        for (const auto& [key, cell] : by_key) {
            SeriesPoint point;
            point.target_quarter = Quarter::from_index(key.first);
            point.cohort = key.second;
            point.n = static_cast<long>(cell.pred.size());
            for (double v : cell.pred) point.mean_predicted += v;
            for (double v : cell.actual) point.mean_actual += v;
            point.mean_predicted /= static_cast<double>(point.n);
            point.mean_actual /= static_cast<double>(point.n);
            out.push_back(std::move(point));
        }
        std::sort(out.begin(), out.end(), [](const SeriesPoint& a, const SeriesPoint& b) {
            if (a.target_quarter != b.target_quarter) return a.target_quarter < b.target_quarter;
            return a.cohort < b.cohort;
        });
    }
    return report;
}

namespace {
std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}
}  // namespace

void emit_report(const EvaluationReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);

    {
        std::ofstream out(out_dir + "/metrics.csv");
        if (!out) throw DataError("cannot write '" + out_dir + "/metrics.csv'");
        out << "# MAPE is a fraction of the actual CAR (not percent); pairs with actual = 0 are"
               " excluded from MAPE only.\n";
        out << "framework,sample,cohort,rmse,mae,mape,mean_predicted_car,mean_actual_car,n,"
               "mape_excluded\n";
        // Fixed ordering: framework enum order x sample x cohort.
        std::vector<MetricRow> rows = report.rows;
        auto fw_rank = [](const std::string& fw) {
            const auto& all = frameworks::all_frameworks();
            for (std::size_t i = 0; i < all.size(); ++i)
                if (frameworks::to_string(all[i]) == fw) return i;
            return all.size();
        };
        auto rank = [&](const MetricRow& r) {
            const int sample = r.sample == "out_of_time" ? 0 : 1;
            const int cohort = r.cohort == "all" ? 0 : 1;
            return std::tuple(fw_rank(r.framework), sample, cohort);
        };
        std::sort(rows.begin(), rows.end(),
                  [&](const MetricRow& a, const MetricRow& b) { return rank(a) < rank(b); });
        for (const auto& r : rows) {
            out << r.framework << ',' << r.sample << ',' << r.cohort << ',' << fmt2(r.rmse) << ','
                << fmt2(r.mae) << ',' << fmt2(r.mape) << ',' << fmt2(r.mean_predicted_car) << ','
                << fmt2(r.mean_actual_car) << ',' << r.n << ',' << r.mape_excluded << '\n';
        }
    }

    for (const auto& [fw, points] : report.series) {
        std::ofstream out(out_dir + "/car_series_" + fw + ".csv");
        if (!out) throw DataError("cannot write series file for " + fw);
        out << "target_quarter,cohort,mean_predicted_car,mean_actual_car,n\n";
        for (const auto& p : points)
            out << p.target_quarter.str() << ',' << p.cohort << ',' << fmt2(p.mean_predicted)
                << ',' << fmt2(p.mean_actual) << ',' << p.n << '\n';
    }

    {
        std::ofstream out(out_dir + "/manifest.txt");
        out << "metrics.csv\n";
        for (const auto& [fw, points] : report.series) out << "car_series_" << fw << ".csv\n";
        out << "unmatched " << report.unmatched << "\n";
        out << "outside_windows " << report.outside_windows << "\n";
        for (const auto& cell : report.omitted) out << "omitted " << cell << "\n";
    }
}

}  // namespace stresscast::eval
