#include "stresscast/frameworks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "csv.hpp"
#include "stresscast/errors.hpp"
#include "stresscast/evaluation.hpp"

namespace stresscast::frameworks {

namespace fs = std::filesystem;

namespace {
std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

const std::vector<FrameworkKind>& all_frameworks() {
    static const std::vector<FrameworkKind> kAll = {
        FrameworkKind::ConstantBalanceSheet, FrameworkKind::SatelliteBma,
        FrameworkKind::DeepStressPoint, FrameworkKind::DeepStressBayesRelu,
        FrameworkKind::DeepStressBayesLwta};
    return kAll;
}

std::string to_string(FrameworkKind kind) {
    switch (kind) {
        case FrameworkKind::ConstantBalanceSheet: return "constant";
        case FrameworkKind::SatelliteBma: return "satellite";
        case FrameworkKind::DeepStressPoint: return "deep-point";
        case FrameworkKind::DeepStressBayesRelu: return "deep-bayes-relu";
        case FrameworkKind::DeepStressBayesLwta: return "deep-bayes-lwta";
    }
    throw DataError("unknown framework kind");
}

FrameworkKind parse_framework(const std::string& name) {
    for (FrameworkKind kind : all_frameworks())
        if (name == to_string(kind)) return kind;
    std::string valid;
    for (FrameworkKind kind : all_frameworks()) {
        if (!valid.empty()) valid += ", ";
        valid += to_string(kind);
    }
    throw UsageError("unknown framework '" + name + "' (valid: " + valid + ")");
}

balance::RwaMethod rwa_method(FrameworkKind kind) {
    switch (kind) {
        case FrameworkKind::ConstantBalanceSheet: return balance::RwaMethod::Constant;
        case FrameworkKind::SatelliteBma: return balance::RwaMethod::SatelliteDensity;
        default: return balance::RwaMethod::NeuralGrowth;
    }
}

bool is_neural(FrameworkKind kind) {
    return kind == FrameworkKind::DeepStressPoint || kind == FrameworkKind::DeepStressBayesRelu ||
           kind == FrameworkKind::DeepStressBayesLwta;
}

void ScenarioPath::check() const {
    int expected = anchor.index() + 1;
    for (const auto& [idx, macro] : overrides) {
        if (idx <= anchor.index())
            throw DataError("scenario override at " + Quarter::from_index(idx).str() +
                            " is not after the anchor " + anchor.str());
        if (idx != expected)
            throw DataError("scenario overrides are not contiguous at " +
                            Quarter::from_index(idx).str());
        ++expected;
        macro.check();
    }
}

ScenarioPath load_scenario(const std::string& path, const ColumnMap& schema, Quarter anchor,
                           const MacroSeries& base, char delimiter) {
    const auto table = detail::read_csv(path, delimiter);
    auto mapped = [&](const std::string& canonical) {
        auto it = schema.find(canonical);
        return it == schema.end() ? canonical : it->second;
    };
    const int quarter_col = table.column(mapped("quarter"));
    // Partial overrides allowed: indicators in the file replace the observed
    // values; empty cells keep them.
    std::vector<int> cols(MacroQuarter::kIndicators, -1);
    for (int i = 0; i < MacroQuarter::kIndicators; ++i) {
        const std::string header = mapped(MacroQuarter::names()[i]);
        auto it = table.col_index.find(header);
        if (it != table.col_index.end()) cols[i] = it->second;
    }

    ScenarioPath scenario;
    scenario.anchor = anchor;
    for (const auto& row : table.rows) {
        const Quarter q = Quarter::parse(row[quarter_col]);
        MacroQuarter m;
        if (const MacroQuarter* observed = base.find(q)) {
            m = *observed;
        } else {
            for (int i = 0; i < MacroQuarter::kIndicators; ++i)
                if (cols[i] < 0 || row[cols[i]].empty())
                    throw DataError("scenario quarter " + q.str() +
                                    " has no observed macro and is missing indicator '" +
                                    MacroQuarter::names()[i] + "'");
        }
        m.quarter = q;
        double* fields[] = {&m.gdp, &m.exports, &m.govcredit, &m.debt, &m.govexp,
                            &m.inflat, &m.rre, &m.unr, &m.yield10y, &m.stocks};
        for (int i = 0; i < MacroQuarter::kIndicators; ++i)
            if (cols[i] >= 0 && !row[cols[i]].empty())
                *fields[i] = detail::parse_double(row[cols[i]], path + " (" + q.str() + ")");
        scenario.overrides.emplace(q.index(), m);
    }
    scenario.check();
    return scenario;
}

namespace {

std::array<int, nn::kOutputWidth> framework_target_columns(balance::RwaMeasureKind kind) {
    std::array<int, nn::kOutputWidth> cols = {kTargetGDep,       kTargetGLoan, kTargetGAsset,
                                              kTargetGEasset,    kTargetCostOfRisk, kTargetYea,
                                              kTargetCfd,        kTargetNfia,
                                              kind == balance::RwaMeasureKind::Density
                                                  ? kTargetRwDensity
                                                  : kTargetRwaGrowth};
    return cols;
}

nn::Batch to_batch(const SupervisedPanel& panel, balance::RwaMeasureKind kind) {
    const auto cols = framework_target_columns(kind);
    nn::Batch batch;
    batch.X.resize(panel.rows.size(), panel.feature_dim);
    batch.Y.resize(panel.rows.size(), nn::kOutputWidth);
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        for (int j = 0; j < panel.feature_dim; ++j) batch.X(i, j) = panel.rows[i].x[j];
        for (int j = 0; j < nn::kOutputWidth; ++j) batch.Y(i, j) = panel.rows[i].y[cols[j]];
    }
    return batch;
}

std::vector<double> standardize_row(const std::vector<double>& x, const FeatureStats& stats) {
    if (x.size() != stats.mean.size()) throw DataError("feature/stats dimension mismatch");
    std::vector<double> out = x;
    for (std::size_t j = 0; j < out.size(); ++j)
        if (!stats.constant[j]) out[j] = (out[j] - stats.mean[j]) / stats.sd[j];
    return out;
}

}  // namespace

FittedArtifact fit(FrameworkKind kind, const SupervisedPanel& train_panel,
                   const SupervisedPanel& valid_panel, const FitOptions& opt) {
    FittedArtifact art;
    art.kind = kind;
    art.recipe = opt.recipe;

    auto [std_train, stats] = standardize(train_panel);
    art.stats = stats;

    switch (kind) {
        case FrameworkKind::SatelliteBma:
            art.satellites = bma::fit_satellites(std_train, opt.bma);
            break;
        case FrameworkKind::ConstantBalanceSheet:
            // Yields only: growths are frozen at zero and RWA stays constant.
            art.satellites = bma::fit_satellites(std_train, opt.bma, bma::yield_target_names());
            break;
        default: {
            if (opt.grid.size() != 1)
                throw DataError("fit expects exactly one network config (run CV first)");
            nn::NetworkConfig cfg = opt.grid.front();
            cfg.activation = kind == FrameworkKind::DeepStressBayesLwta ? nn::Activation::Lwta
                                                                        : nn::Activation::Relu;
            cfg.bayesian = kind != FrameworkKind::DeepStressPoint;
            if (cfg.layer_widths.empty() || cfg.layer_widths.front() != train_panel.feature_dim)
                throw DataError("network input width must equal the panel feature dimension");

            const auto [std_valid, unused] = standardize(valid_panel, stats);
            const nn::Batch train_b = to_batch(std_train, balance::RwaMeasureKind::Growth);
            const nn::Batch valid_b = to_batch(std_valid, balance::RwaMeasureKind::Growth);
            art.net_config = cfg;
            if (cfg.bayesian) {
                auto [vp, report] = bayesnn::train_bayesian(cfg, train_b, valid_b, opt.bayes);
                art.var_params = std::move(vp);
                if (!opt.report_dir.empty())
                    bayesnn::save_elbo_report(report, opt.report_dir + "/elbo_report.txt");
            } else {
                auto [params, report] = nn::train(cfg, train_b, valid_b);
                art.net_params = std::move(params);
                if (!opt.report_dir.empty())
                    nn::save_report(report, opt.report_dir + "/train_report.txt");
            }
            break;
        }
    }
    return art;
}

balance::TargetVector predict_targets(const FittedArtifact& art, const std::vector<double>& x_raw) {
    const std::vector<double> x = standardize_row(x_raw, art.stats);
    balance::TargetVector t;

    if (is_neural(art.kind)) {
        Eigen::VectorXd xv(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) xv[static_cast<int>(j)] = x[j];
        Eigen::VectorXd out;
        if (art.kind == FrameworkKind::DeepStressPoint)
            out = nn::forward(*art.net_config, *art.net_params, xv, nn::Mode::Infer);
        else
            out = bayesnn::forward_at(*art.net_config, bayesnn::posterior_mean(*art.var_params), xv);
        t.g_dep = out[0];
        t.g_loan = out[1];
        t.g_asset = out[2];
        t.g_easset = out[3];
        t.cost_of_risk = out[4];
        t.yea = out[5];
        t.cfd = out[6];
        t.nfia = out[7];
        t.rwa_measure = out[8];
        t.rwa_kind = balance::RwaMeasureKind::Growth;
        return t;
    }

    Eigen::VectorXd xv(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) xv[static_cast<int>(j)] = x[j];
    auto predict = [&](const std::string& target) {
        return bma::bma_predict(art.satellites->by_target.at(target), xv).mean;
    };
    t.cost_of_risk = predict("cost_of_risk");
    t.yea = predict("yea");
    t.cfd = predict("cfd");
    t.nfia = predict("nfia");
    if (art.kind == FrameworkKind::SatelliteBma) {
        t.g_dep = predict("g_dep");
        t.g_loan = predict("g_loan");
        t.g_asset = predict("g_asset");
        t.g_easset = predict("g_easset");
        t.rwa_measure = predict("rw_density");
        t.rwa_kind = balance::RwaMeasureKind::Density;
    } else {
        t.rwa_kind = balance::RwaMeasureKind::None;  // constant: zero growth, RWA frozen
    }
    return t;
}

Projection project_bank(const FittedArtifact& art, const BankHistory& bank, const MacroView& macro,
                        Quarter as_of) {
    const BankQuarter* record = bank.find(as_of);
    if (!record) throw DataError("no record for " + bank.bank_id + " at " + as_of.str());

    std::vector<double> x;
    if (!build_feature_row(bank, macro, art.recipe, as_of, x))
        throw DataError("insufficient history for " + bank.bank_id + " at " + as_of.str());

    balance::TargetVector t = predict_targets(art, x);
    t.check();

    balance::BankState state;
    state.capital = record->car * record->rwa_total;
    state.rwa = record->rwa_total;
    state.loans = record->loans_avg;
    state.earning_assets = record->earning_assets_avg;
    state.assets = record->assets_avg;
    state.deposits = record->deposits_total;

    Projection p;
    p.bank_id = bank.bank_id;
    p.as_of = as_of;
    p.targets = t;
    p.framework = art.kind;
    p.projected_capital = balance::roll_forward_capital(state, t);
    p.projected_rwa = balance::project_rwa(state, rwa_method(art.kind), t);
    p.predicted_car = balance::compute_car(p.projected_capital, p.projected_rwa);
    return p;
}

ProjectionRun project_all(const FittedArtifact& art, const std::vector<BankQuarter>& panel,
                          const MacroSeries& macro, const ScenarioPath* scenario,
                          QuarterRange as_of_range) {
    if (scenario) scenario->check();
    const MacroView view{&macro, scenario ? &scenario->overrides : nullptr};
    const auto banks = index_panel(panel);

    ProjectionRun run;
    for (const auto& [bank_id, hist] : banks) {
        for (int idx = as_of_range.first.index(); idx <= as_of_range.last.index(); ++idx) {
            const Quarter as_of = Quarter::from_index(idx);
            if (!hist.find(as_of)) continue;  // bank not observed this quarter
            try {
                run.projections.push_back(project_bank(art, hist, view, as_of));
            } catch (const std::exception& e) {
                run.skips.push_back({bank_id, as_of, e.what()});
            }
        }
    }
    return run;
}

nn::FoldScorer make_car_scorer(FrameworkKind kind, const SupervisedPanel& panel,
                               const std::vector<BankQuarter>& raw_panel,
                               const MacroSeries& macro, QuarterRange as_of_range,
                               const FitOptions& opt) {
    return [kind, &panel, &raw_panel, &macro, as_of_range, opt](
               const nn::NetworkConfig& cfg, const std::vector<std::string>& train_ids,
               const std::vector<std::string>& valid_ids) {
        const std::set<std::string> train_set(train_ids.begin(), train_ids.end());
        const std::set<std::string> valid_set(valid_ids.begin(), valid_ids.end());

        // Epoch selection gets its own entity split inside the training fold;
        // the held-out fold stays untouched until scoring.
        std::set<std::string> stop_set;
        int counter = 0;
        for (const auto& id : train_set)
            if (++counter % 5 == 0) stop_set.insert(id);

        SupervisedPanel train_sub, stop_sub;
        train_sub.feature_dim = stop_sub.feature_dim = panel.feature_dim;
        train_sub.feature_names = stop_sub.feature_names = panel.feature_names;
        for (const auto& row : panel.rows) {
            if (!train_set.count(row.bank_id)) continue;
            (stop_set.count(row.bank_id) ? stop_sub : train_sub).rows.push_back(row);
        }
        if (train_sub.rows.empty()) throw DataError("empty training fold");
        if (stop_sub.rows.empty()) stop_sub = train_sub;

        FitOptions fold_opt = opt;
        fold_opt.grid = {cfg};
        const FittedArtifact art = fit(kind, train_sub, stop_sub, fold_opt);

        std::vector<BankQuarter> valid_raw;
        for (const auto& b : raw_panel)
            if (valid_set.count(b.bank_id)) valid_raw.push_back(b);
        const ProjectionRun run = project_all(art, valid_raw, macro, nullptr, as_of_range);

        const auto actuals = index_panel(valid_raw);
        std::vector<double> pred, actual;
        for (const auto& p : run.projections) {
            const BankQuarter* fwd = actuals.at(p.bank_id).find(p.as_of + 4);
            if (!fwd) continue;
            pred.push_back(p.predicted_car);
            actual.push_back(fwd->car);
        }
        if (pred.empty()) throw DataError("no scored projections in fold");
        return eval::rmse(pred, actual);
    };
}

namespace {

void write_recipe(std::ofstream& out, const FeatureRecipe& recipe) {
    out << "macro_lags";
    for (int lag : recipe.macro_lags) out << ' ' << lag;
    out << "\nfinancial_lags";
    for (int lag : recipe.financial_lags) out << ' ' << lag;
    out << "\nincluded_financials";
    for (const auto& name : recipe.included_financials) out << ' ' << name;
    out << "\n";
}

void write_stats(std::ofstream& out, const FeatureStats& stats) {
    out << "stats_mean";
    for (double v : stats.mean) out << ' ' << fmt_full(v);
    out << "\nstats_sd";
    for (double v : stats.sd) out << ' ' << fmt_full(v);
    out << "\nstats_constant";
    for (auto v : stats.constant) out << ' ' << int(v);
    out << "\n";
}

void write_net_config(std::ofstream& out, const nn::NetworkConfig& cfg) {
    out << "net_widths";
    for (int w : cfg.layer_widths) out << ' ' << w;
    out << "\nnet_options " << (cfg.activation == nn::Activation::Lwta ? "lwta" : "relu") << ' '
        << cfg.lwta_block_size << ' ' << fmt_full(cfg.dropout_rate) << ' ' << (cfg.bayesian ? 1 : 0)
        << ' ' << cfg.seed << ' ' << fmt_full(cfg.learning_rate) << ' ' << fmt_full(cfg.momentum)
        << ' ' << cfg.batch_size << ' ' << cfg.epochs << "\n";
}

}  // namespace

void save_artifact(const FittedArtifact& art, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream meta(dir + "/meta.txt");
    if (!meta) throw DataError("cannot write '" + dir + "/meta.txt'");
    meta << "#stresscast-artifact v1\n";
    meta << "framework " << to_string(art.kind) << "\n";
    write_recipe(meta, art.recipe);
    write_stats(meta, art.stats);
    if (art.satellites) {
        meta << "satellites";
        for (const auto& [name, summary] : art.satellites->by_target) {
            meta << ' ' << name;
            bma::save_summary(summary, dir + "/satellite_" + name + ".txt");
        }
        meta << "\n";
    }
    if (art.net_config) write_net_config(meta, *art.net_config);
    if (art.net_params) nn::save_params(*art.net_params, dir + "/network.bin");
    if (art.var_params) bayesnn::save_variational(*art.var_params, dir + "/variational.bin");
}

FittedArtifact load_artifact(const std::string& dir) {
    std::ifstream meta(dir + "/meta.txt");
    if (!meta) throw DataError("cannot open '" + dir + "/meta.txt'");
    std::string line;
    if (!std::getline(meta, line) || line != "#stresscast-artifact v1")
        throw DataError("'" + dir + "' is not an artifact directory");

    FittedArtifact art;
    while (std::getline(meta, line)) {
        const auto fields = detail::split_line(line, ' ');
        if (fields.empty()) continue;
        const std::string& key = fields[0];
        if (key == "framework") {
            art.kind = parse_framework(fields[1]);
        } else if (key == "macro_lags") {
            art.recipe.macro_lags.clear();
            for (std::size_t i = 1; i < fields.size(); ++i)
                art.recipe.macro_lags.push_back(std::stoi(fields[i]));
        } else if (key == "financial_lags") {
            art.recipe.financial_lags.clear();
            for (std::size_t i = 1; i < fields.size(); ++i)
                art.recipe.financial_lags.push_back(std::stoi(fields[i]));
        } else if (key == "included_financials") {
            art.recipe.included_financials.assign(fields.begin() + 1, fields.end());
        } else if (key == "stats_mean") {
            for (std::size_t i = 1; i < fields.size(); ++i)
                art.stats.mean.push_back(detail::parse_double(fields[i], dir));
        } else if (key == "stats_sd") {
            for (std::size_t i = 1; i < fields.size(); ++i)
                art.stats.sd.push_back(detail::parse_double(fields[i], dir));
        } else if (key == "stats_constant") {
            for (std::size_t i = 1; i < fields.size(); ++i)
                art.stats.constant.push_back(static_cast<std::uint8_t>(std::stoi(fields[i])));
        } else if (key == "satellites") {
            bma::SatelliteSet set;
            for (std::size_t i = 1; i < fields.size(); ++i)
                set.by_target.emplace(fields[i],
                                      bma::load_summary(dir + "/satellite_" + fields[i] + ".txt"));
            art.satellites = std::move(set);
        } else if (key == "net_widths") {
            nn::NetworkConfig cfg;
            for (std::size_t i = 1; i < fields.size(); ++i)
                cfg.layer_widths.push_back(std::stoi(fields[i]));
            art.net_config = cfg;
        } else if (key == "net_options") {
            auto& cfg = *art.net_config;
            cfg.activation = fields[1] == "lwta" ? nn::Activation::Lwta : nn::Activation::Relu;
            cfg.lwta_block_size = std::stoi(fields[2]);
            cfg.dropout_rate = detail::parse_double(fields[3], dir);
            cfg.bayesian = fields[4] == "1";
            cfg.seed = std::stoull(fields[5]);
            cfg.learning_rate = detail::parse_double(fields[6], dir);
            cfg.momentum = detail::parse_double(fields[7], dir);
            cfg.batch_size = std::stoi(fields[8]);
            cfg.epochs = std::stoi(fields[9]);
        }
    }
    if (fs::exists(dir + "/network.bin")) art.net_params = nn::load_params(dir + "/network.bin");
    if (fs::exists(dir + "/variational.bin"))
        art.var_params = bayesnn::load_variational(dir + "/variational.bin");
    return art;
}

}  // namespace stresscast::frameworks
