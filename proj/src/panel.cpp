#include "stresscast/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <unordered_map>

#include "csv.hpp"
#include "stresscast/errors.hpp"
#include "stresscast/rng.hpp"

namespace stresscast {

namespace {

std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void BankQuarter::check(double rwa_tolerance) const {
    const struct {
        const char* name;
        double v;
    } currencies[] = {
        {"net_loans", net_loans},       {"deposits_total", deposits_total},
        {"deposits_domestic", deposits_domestic}, {"assets_avg", assets_avg},
        {"earning_assets_avg", earning_assets_avg}, {"equity_avg", equity_avg},
        {"loans_avg", loans_avg},       {"rwa_total", rwa_total},
    };
    for (const auto& c : currencies) {
        if (!std::isfinite(c.v) || c.v < 0)
            throw DataError("invariant violation: " + std::string(c.name) + " < 0 for bank " +
                            bank_id + " " + quarter.str());
    }
    if (!(rw_density >= 0 && rw_density <= 5.0))
        throw DataError("invariant violation: rw_density outside [0,5] for bank " + bank_id);
    if (!(car >= 0))
        throw DataError("invariant violation: car < 0 for bank " + bank_id);
    if (rwa_total > 0 && rw_density > 0 && assets_avg > 0) {
        const double implied = rw_density * assets_avg;
        if (std::abs(rwa_total - implied) > rwa_tolerance * rwa_total)
            throw DataError("invariant violation: rwa_total inconsistent with rw_density*assets_avg for bank " +
                            bank_id + " " + quarter.str());
    }
}

const std::array<const char*, MacroQuarter::kIndicators>& MacroQuarter::names() {
    static const std::array<const char*, kIndicators> kNames = {
        "gdp", "export", "govcredit", "debt", "govexp",
        "inflat", "rre", "unr", "yield10y", "stocks"};
    return kNames;
}

std::array<double, MacroQuarter::kIndicators> MacroQuarter::values() const {
    return {gdp, exports, govcredit, debt, govexp, inflat, rre, unr, yield10y, stocks};
}

void MacroQuarter::check() const {
    for (double v : values())
        if (!std::isfinite(v)) throw DataError("non-finite macro indicator at " + quarter.str());
    if (!(unr >= 0.0 && unr <= 1.0))
        throw DataError("invariant violation: unr outside [0,1] at " + quarter.str());
}

const std::vector<std::string>& financial_variable_names() {
    static const std::vector<std::string> kAll = {
        "net_loans", "deposits_total", "deposits_domestic", "assets_avg",
        "earning_assets_avg", "equity_avg", "loans_avg", "cfd", "yea",
        "nfia", "rw_density", "loss_loan", "rwa_total", "car"};
    return kAll;
}

const std::vector<std::string>& default_feature_financials() {
    static const std::vector<std::string> kDefault = {
        "deposits_total", "loans_avg", "assets_avg", "earning_assets_avg",
        "loss_loan", "yea", "cfd", "nfia", "rw_density"};
    return kDefault;
}

double financial_value(const BankQuarter& b, const std::string& name) {
    if (name == "net_loans") return b.net_loans;
    if (name == "deposits_total") return b.deposits_total;
    if (name == "deposits_domestic") return b.deposits_domestic;
    if (name == "assets_avg") return b.assets_avg;
    if (name == "earning_assets_avg") return b.earning_assets_avg;
    if (name == "equity_avg") return b.equity_avg;
    if (name == "loans_avg") return b.loans_avg;
    if (name == "cfd") return b.cfd;
    if (name == "yea") return b.yea;
    if (name == "nfia") return b.nfia;
    if (name == "rw_density") return b.rw_density;
    if (name == "loss_loan") return b.loss_loan;
    if (name == "rwa_total") return b.rwa_total;
    if (name == "car") return b.car;
    throw DataError("unknown financial variable '" + name + "'");
}

const std::array<const char*, kTargetCount>& target_names() {
    static const std::array<const char*, kTargetCount> kNames = {
        "g_dep", "g_loan", "g_asset", "g_easset", "cost_of_risk",
        "yea", "cfd", "nfia", "rwa_growth", "rw_density"};
    return kNames;
}

void FeatureRecipe::validate() const {
    for (const auto* lags : {&macro_lags, &financial_lags}) {
        for (std::size_t i = 0; i < lags->size(); ++i) {
            if ((*lags)[i] < 0) throw DataError("negative lag offset");
            if (i > 0 && (*lags)[i] <= (*lags)[i - 1])
                throw DataError("lag offsets must be sorted and unique");
        }
    }
    for (const auto& name : included_financials) {
        const auto& all = financial_variable_names();
        if (std::find(all.begin(), all.end(), name) == all.end())
            throw DataError("unknown financial variable '" + name + "' in recipe");
    }
}

int FeatureRecipe::feature_dim() const {
    return static_cast<int>(macro_lags.size()) * MacroQuarter::kIndicators +
           static_cast<int>(financial_lags.size()) * static_cast<int>(included_financials.size());
}

std::vector<std::string> FeatureRecipe::feature_names() const {
    std::vector<std::string> out;
    out.reserve(feature_dim());
    for (int lag : macro_lags)
        for (const char* name : MacroQuarter::names())
            out.push_back(std::string(name) + "_l" + std::to_string(lag));
    for (int lag : financial_lags)
        for (const auto& name : included_financials)
            out.push_back(name + "_l" + std::to_string(lag));
    return out;
}

namespace {

bool parse_failed_flag(const std::string& s) {
    if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
    throw DataError("unparseable boolean '" + s + "' in failed column");
}

std::string mapped(const ColumnMap& schema, const std::string& canonical) {
    auto it = schema.find(canonical);
    return it == schema.end() ? canonical : it->second;
}

}  // namespace

std::vector<BankQuarter> load_bank_panel(const std::string& path, const ColumnMap& schema,
                                         char delimiter) {
    const auto table = detail::read_csv(path, delimiter);
    static const char* kNumeric[] = {
        "net_loans", "deposits_total", "deposits_domestic", "assets_avg",
        "earning_assets_avg", "equity_avg", "loans_avg", "cfd", "yea",
        "nfia", "rw_density", "loss_loan", "rwa_total", "car"};

    const int id_col = table.column(mapped(schema, "bank_id"));
    const int quarter_col = table.column(mapped(schema, "quarter"));
    const int failed_col = table.column(mapped(schema, "failed"));
    std::vector<int> numeric_cols;
    for (const char* name : kNumeric) numeric_cols.push_back(table.column(mapped(schema, name)));

    std::vector<BankQuarter> out;
    out.reserve(table.rows.size());
    std::set<std::pair<std::string, int>> seen;
    for (const auto& row : table.rows) {
        BankQuarter b;
        b.bank_id = row[id_col];
        b.quarter = Quarter::parse(row[quarter_col]);
        const std::string context = path + " (" + b.bank_id + ", " + b.quarter.str() + ")";
        double* fields[] = {&b.net_loans, &b.deposits_total, &b.deposits_domestic, &b.assets_avg,
                            &b.earning_assets_avg, &b.equity_avg, &b.loans_avg, &b.cfd,
                            &b.yea, &b.nfia, &b.rw_density, &b.loss_loan, &b.rwa_total, &b.car};
        for (std::size_t i = 0; i < numeric_cols.size(); ++i)
            *fields[i] = detail::parse_double(row[numeric_cols[i]], context);
        b.failed = parse_failed_flag(row[failed_col]);
        if (!seen.emplace(b.bank_id, b.quarter.index()).second)
            throw DataError("duplicate record (" + b.bank_id + ", " + b.quarter.str() + ")");
        b.check();
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<MacroQuarter> load_macro(const std::string& path, const ColumnMap& schema,
                                     char delimiter) {
    const auto table = detail::read_csv(path, delimiter);
    const int quarter_col = table.column(mapped(schema, "quarter"));
    std::vector<int> cols;
    for (const char* name : MacroQuarter::names()) cols.push_back(table.column(mapped(schema, name)));

    std::vector<MacroQuarter> out;
    std::set<int> seen;
    for (const auto& row : table.rows) {
        MacroQuarter m;
        m.quarter = Quarter::parse(row[quarter_col]);
        const std::string context = path + " (" + m.quarter.str() + ")";
        double* fields[] = {&m.gdp, &m.exports, &m.govcredit, &m.debt, &m.govexp,
                            &m.inflat, &m.rre, &m.unr, &m.yield10y, &m.stocks};
        for (std::size_t i = 0; i < cols.size(); ++i)
            *fields[i] = detail::parse_double(row[cols[i]], context);
        if (!seen.insert(m.quarter.index()).second)
            throw DataError("duplicate macro quarter " + m.quarter.str());
        m.check();
        out.push_back(m);
    }
    return out;
}

std::vector<BankQuarter> filter_failed(const std::vector<BankQuarter>& panel) {
    std::vector<BankQuarter> out;
    out.reserve(panel.size());
    for (const auto& b : panel)
        if (!b.failed) out.push_back(b);
    return out;
}

std::vector<double> clean_outliers(const std::vector<double>& series, double mad_threshold) {
    if (series.size() < 3) throw DataError("clean_outliers needs at least 3 points");
    const double med = median_of(series);
    std::vector<double> dev(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) dev[i] = std::abs(series[i] - med);
    const double mad = median_of(dev);
    if (mad == 0.0) return series;

    std::vector<bool> flagged(series.size());
    bool any_anchor = false;
    for (std::size_t i = 0; i < series.size(); ++i) {
        flagged[i] = dev[i] / mad > mad_threshold;
        any_anchor = any_anchor || !flagged[i];
    }
    if (!any_anchor) return series;  // nothing to interpolate from

    std::vector<double> out = series;
    const int n = static_cast<int>(series.size());
    for (int i = 0; i < n; ++i) {
        if (!flagged[i]) continue;
        int left = i - 1;
        while (left >= 0 && flagged[left]) --left;
        int right = i + 1;
        while (right < n && flagged[right]) ++right;
        if (left >= 0 && right < n) {
            const double w = static_cast<double>(i - left) / static_cast<double>(right - left);
            out[i] = series[left] + w * (series[right] - series[left]);
        } else if (left >= 0) {
            out[i] = series[left];
        } else {
            out[i] = series[right];
        }
    }
    return out;
}

SplitAssignment split_panel(const std::vector<BankQuarter>& panel, double ratio,
                            std::uint64_t seed, QuarterRange in_sample,
                            QuarterRange out_of_time) {
    if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("split ratio must be in (0,1)");
    if (!(out_of_time.first > in_sample.last))
        throw DataError("out-of-time window must start after the in-sample window");

    std::set<std::string> unique_ids;
    for (const auto& b : panel) unique_ids.insert(b.bank_id);
    if (unique_ids.size() < 2) throw DataError("need at least 2 entities to split");

    std::vector<std::string> ids(unique_ids.begin(), unique_ids.end());
    Rng rng(seed);
    shuffle(ids, rng);

    auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ids.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);

    SplitAssignment out;
    out.in_sample_window = in_sample;
    out.out_of_time_window = out_of_time;
    for (std::size_t i = 0; i < ids.size(); ++i)
        (i < n_train ? out.train_ids : out.validation_ids).insert(ids[i]);
    return out;
}

const BankQuarter* BankHistory::find(Quarter q) const {
    auto it = by_index.find(q.index());
    return it == by_index.end() ? nullptr : &it->second;
}

std::map<std::string, BankHistory> index_panel(const std::vector<BankQuarter>& panel) {
    std::map<std::string, BankHistory> out;
    for (const auto& b : panel) {
        auto& hist = out[b.bank_id];
        hist.bank_id = b.bank_id;
        hist.by_index.emplace(b.quarter.index(), b);
    }
    return out;
}

MacroSeries::MacroSeries(const std::vector<MacroQuarter>& series) {
    for (const auto& m : series) by_index.emplace(m.quarter.index(), m);
}

const MacroQuarter* MacroSeries::find(Quarter q) const {
    auto it = by_index.find(q.index());
    return it == by_index.end() ? nullptr : &it->second;
}

const MacroQuarter* MacroView::find(Quarter q) const {
    if (overrides) {
        auto it = overrides->find(q.index());
        if (it != overrides->end()) return &it->second;
    }
    return base ? base->find(q) : nullptr;
}

bool build_feature_row(const BankHistory& bank, const MacroView& macro,
                       const FeatureRecipe& recipe, Quarter as_of, std::vector<double>& out) {
    const std::size_t start = out.size();
    for (int lag : recipe.macro_lags) {
        const MacroQuarter* m = macro.find(as_of - lag);
        if (!m) {
            out.resize(start);
            return false;
        }
        for (double v : m->values()) out.push_back(v);
    }
    for (int lag : recipe.financial_lags) {
        const BankQuarter* b = bank.find(as_of - lag);
        if (!b) {
            out.resize(start);
            return false;
        }
        for (const auto& name : recipe.included_financials)
            out.push_back(financial_value(*b, name));
    }
    return true;
}

bool compute_targets(const BankHistory& bank, Quarter as_of,
                     std::array<double, kTargetCount>& out) {
    const BankQuarter* cur = bank.find(as_of);
    const BankQuarter* fwd = bank.find(as_of + 4);
    if (!cur || !fwd) return false;

    auto growth = [](double from, double to, double& dst) {
        if (!(from > 0)) return false;
        dst = (to - from) / from;
        return std::isfinite(dst) && dst > -1.0;
    };
    if (!growth(cur->deposits_total, fwd->deposits_total, out[kTargetGDep])) return false;
    if (!growth(cur->loans_avg, fwd->loans_avg, out[kTargetGLoan])) return false;
    if (!growth(cur->assets_avg, fwd->assets_avg, out[kTargetGAsset])) return false;
    if (!growth(cur->earning_assets_avg, fwd->earning_assets_avg, out[kTargetGEasset])) return false;
    if (!growth(cur->rwa_total, fwd->rwa_total, out[kTargetRwaGrowth])) return false;
    out[kTargetCostOfRisk] = fwd->loss_loan;
    out[kTargetYea] = fwd->yea;
    out[kTargetCfd] = fwd->cfd;
    out[kTargetNfia] = fwd->nfia;
    out[kTargetRwDensity] = fwd->rw_density;
    for (double v : out)
        if (!std::isfinite(v)) return false;
    return true;
}

SupervisedPanel build_features(const std::vector<BankQuarter>& panel,
                               const std::vector<MacroQuarter>& macro,
                               const FeatureRecipe& recipe, BuildStats* stats) {
    recipe.validate();
    const auto banks = index_panel(panel);
    const MacroSeries macro_series(macro);
    const MacroView view{&macro_series, nullptr};

    SupervisedPanel out;
    out.feature_dim = recipe.feature_dim();
    out.feature_names = recipe.feature_names();

    BuildStats local;
    for (const auto& [bank_id, hist] : banks) {
        for (const auto& [q_index, record] : hist.by_index) {
            const Quarter as_of = Quarter::from_index(q_index);
            PanelRow row;
            row.bank_id = bank_id;
            row.quarter = as_of;
            row.x.reserve(out.feature_dim);
            if (!build_feature_row(hist, view, recipe, as_of, row.x) ||
                !compute_targets(hist, as_of, row.y)) {
                ++local.rows_dropped;
                continue;
            }
            ++local.rows_emitted;
            out.rows.push_back(std::move(row));
        }
    }
    if (stats) *stats = local;
    if (out.rows.empty()) throw DataError("build_features produced an empty result set");
    return out;
}

std::pair<SupervisedPanel, FeatureStats> standardize(const SupervisedPanel& panel,
                                                     const std::optional<FeatureStats>& given) {
    const int dim = panel.feature_dim;
    FeatureStats stats;
    if (given) {
        stats = *given;
        if (static_cast<int>(stats.mean.size()) != dim || static_cast<int>(stats.sd.size()) != dim)
            throw DataError("standardize: stats dimension mismatch");
    } else {
        stats.mean.assign(dim, 0.0);
        stats.sd.assign(dim, 0.0);
        stats.constant.assign(dim, 0);
        const double n = static_cast<double>(panel.rows.size());
        if (n == 0) throw DataError("standardize: empty panel");
        for (const auto& row : panel.rows)
            for (int j = 0; j < dim; ++j) stats.mean[j] += row.x[j];
        for (int j = 0; j < dim; ++j) stats.mean[j] /= n;
        for (const auto& row : panel.rows)
            for (int j = 0; j < dim; ++j) {
                const double d = row.x[j] - stats.mean[j];
                stats.sd[j] += d * d;
            }
        for (int j = 0; j < dim; ++j) {
            stats.sd[j] = std::sqrt(stats.sd[j] / n);  // population convention
            if (stats.sd[j] == 0.0) stats.constant[j] = 1;
        }
    }

    SupervisedPanel out = panel;
    for (auto& row : out.rows)
        for (int j = 0; j < dim; ++j)
            if (!stats.constant[j]) row.x[j] = (row.x[j] - stats.mean[j]) / stats.sd[j];
    return {std::move(out), std::move(stats)};
}

SupervisedPanel unstandardize(const SupervisedPanel& panel, const FeatureStats& stats) {
    SupervisedPanel out = panel;
    for (auto& row : out.rows)
        for (int j = 0; j < panel.feature_dim; ++j)
            if (!stats.constant[j]) row.x[j] = row.x[j] * stats.sd[j] + stats.mean[j];
    return out;
}

void save_panel(const SupervisedPanel& panel, const std::string& path) {
    std::ofstream outf(path);
    if (!outf) throw DataError("cannot write '" + path + "'");
    outf << "#stresscast-panel v1\n";
    outf << "#features " << panel.feature_dim << "\n";
    for (const auto& name : panel.feature_names) outf << "#feature " << name << "\n";
    outf << "#targets " << kTargetCount << "\n";
    outf << "#rows " << panel.rows.size() << "\n";
    for (const auto& row : panel.rows) {
        outf << row.bank_id << '\t' << row.quarter.str();
        for (double v : row.x) outf << '\t' << fmt_full(v);
        for (double v : row.y) outf << '\t' << fmt_full(v);
        outf << '\n';
    }
}

SupervisedPanel load_panel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "#stresscast-panel v1")
        throw DataError("'" + path + "' is not a panel cache");

    SupervisedPanel out;
    std::size_t expected_rows = 0;
    while (in.peek() == '#' && std::getline(in, line)) {
        const auto fields = detail::split_line(line, ' ');
        if (fields[0] == "#features") out.feature_dim = std::stoi(fields[1]);
        else if (fields[0] == "#feature") out.feature_names.push_back(fields[1]);
        else if (fields[0] == "#targets" && std::stoi(fields[1]) != kTargetCount)
            throw DataError("panel cache has an unexpected target block");
        else if (fields[0] == "#rows") expected_rows = std::stoul(fields[1]);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = detail::split_line(line, '\t');
        if (static_cast<int>(fields.size()) != 2 + out.feature_dim + kTargetCount)
            throw DataError("panel cache row has wrong field count");
        PanelRow row;
        row.bank_id = fields[0];
        row.quarter = Quarter::parse(fields[1]);
        for (int j = 0; j < out.feature_dim; ++j)
            row.x.push_back(detail::parse_double(fields[2 + j], path));
        for (int j = 0; j < kTargetCount; ++j)
            row.y[j] = detail::parse_double(fields[2 + out.feature_dim + j], path);
        out.rows.push_back(std::move(row));
    }
    if (out.rows.size() != expected_rows) throw DataError("panel cache row count mismatch");
    return out;
}

}  // namespace stresscast
