// Command-line entry point: ingest -> train -> project -> evaluate/report,
// every stage deterministic given the config's seeds.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "run_config.hpp"
#include "stresscast/errors.hpp"
#include "stresscast/evaluation.hpp"
#include "stresscast/frameworks.hpp"
#include "stresscast/panel.hpp"

namespace fs = std::filesystem;
using namespace stresscast;
using cli::RunConfig;

namespace {

std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Inputs {
    std::vector<BankQuarter> panel;  // failed banks removed
    long failed_dropped = 0;
    std::vector<MacroQuarter> macro;
    MacroSeries macro_series;
};

Inputs load_inputs(const RunConfig& cfg) {
    Inputs in;
    const auto raw = load_bank_panel(cfg.bank_panel_path, cfg.bank_columns, cfg.delimiter);
    in.panel = filter_failed(raw);
    in.failed_dropped = static_cast<long>(raw.size() - in.panel.size());
    in.macro = load_macro(cfg.macro_path, cfg.macro_columns, cfg.delimiter);
    in.macro_series = MacroSeries(in.macro);
    return in;
}

std::string cache_path(const RunConfig& cfg) { return cfg.out_dir + "/panel_cache.tsv"; }

SupervisedPanel cached_or_built(const RunConfig& cfg, const Inputs& in) {
    if (fs::exists(cache_path(cfg))) return load_panel(cache_path(cfg));
    return build_features(in.panel, in.macro, cfg.recipe);
}

// Rows whose target quarter falls inside the window, restricted to an entity set.
SupervisedPanel window_rows(const SupervisedPanel& panel, const std::set<std::string>& ids,
                            QuarterRange target_window) {
    SupervisedPanel out;
    out.feature_dim = panel.feature_dim;
    out.feature_names = panel.feature_names;
    for (const auto& row : panel.rows)
        if (ids.count(row.bank_id) && target_window.contains(row.quarter + 4))
            out.rows.push_back(row);
    return out;
}

frameworks::FitOptions fit_options(const RunConfig& cfg, int input_dim) {
    frameworks::FitOptions opt;
    opt.recipe = cfg.recipe;
    opt.bma = cfg.bma;
    opt.cv_folds = cfg.cv_folds;
    opt.bayes = cfg.bayes;
    for (nn::NetworkConfig net : cfg.grid) {
        net.layer_widths.front() = input_dim;
        opt.grid.push_back(net);
    }
    return opt;
}

QuarterRange projection_range(const RunConfig& cfg) {
    if (cfg.projection_range_set) return cfg.projection_range;
    return {cfg.in_sample.first - 4, cfg.out_of_time.last - 4};
}

const char* rwa_kind_name(balance::RwaMeasureKind kind) {
    switch (kind) {
        case balance::RwaMeasureKind::Growth: return "growth";
        case balance::RwaMeasureKind::Density: return "density";
        default: return "none";
    }
}

balance::RwaMeasureKind parse_rwa_kind(const std::string& name) {
    if (name == "growth") return balance::RwaMeasureKind::Growth;
    if (name == "density") return balance::RwaMeasureKind::Density;
    if (name == "none") return balance::RwaMeasureKind::None;
    throw DataError("unknown rwa kind '" + name + "'");
}

std::string projections_path(const RunConfig& cfg, frameworks::FrameworkKind kind) {
    return cfg.out_dir + "/projections_" + frameworks::to_string(kind) + ".csv";
}

void write_projections(const frameworks::ProjectionRun& run, const RunConfig& cfg,
                       frameworks::FrameworkKind kind) {
    std::ofstream out(projections_path(cfg, kind));
    if (!out) throw DataError("cannot write projections for " + frameworks::to_string(kind));
    out << "framework,bank_id,as_of,g_dep,g_loan,g_asset,g_easset,cost_of_risk,yea,cfd,nfia,"
           "rwa_measure,rwa_kind,projected_capital,projected_rwa,predicted_car\n";
    for (const auto& p : run.projections) {
        const auto& t = p.targets;
        out << frameworks::to_string(p.framework) << ',' << p.bank_id << ',' << p.as_of.str() << ','
            << fmt_full(t.g_dep) << ',' << fmt_full(t.g_loan) << ',' << fmt_full(t.g_asset) << ','
            << fmt_full(t.g_easset) << ',' << fmt_full(t.cost_of_risk) << ',' << fmt_full(t.yea)
            << ',' << fmt_full(t.cfd) << ',' << fmt_full(t.nfia) << ',' << fmt_full(t.rwa_measure)
            << ',' << rwa_kind_name(t.rwa_kind) << ',' << fmt_full(p.projected_capital) << ','
            << fmt_full(p.projected_rwa) << ',' << fmt_full(p.predicted_car) << '\n';
    }

    std::ofstream skips(cfg.out_dir + "/skips_" + frameworks::to_string(kind) + ".csv");
    skips << "bank_id,as_of,reason\n";
    for (const auto& s : run.skips) skips << s.bank_id << ',' << s.as_of.str() << ',' << s.reason << '\n';
}

std::vector<frameworks::Projection> read_projections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open projections file '" + path + "' (run project first)");
    std::string line;
    std::getline(in, line);  // header
    std::vector<frameworks::Projection> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            if (pos == std::string::npos) {
                f.push_back(line.substr(start));
                break;
            }
            f.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        if (f.size() != 16) throw DataError(path + ": malformed projection row");
        frameworks::Projection p;
        p.framework = frameworks::parse_framework(f[0]);
        p.bank_id = f[1];
        p.as_of = Quarter::parse(f[2]);
        p.targets.g_dep = std::stod(f[3]);
        p.targets.g_loan = std::stod(f[4]);
        p.targets.g_asset = std::stod(f[5]);
        p.targets.g_easset = std::stod(f[6]);
        p.targets.cost_of_risk = std::stod(f[7]);
        p.targets.yea = std::stod(f[8]);
        p.targets.cfd = std::stod(f[9]);
        p.targets.nfia = std::stod(f[10]);
        p.targets.rwa_measure = std::stod(f[11]);
        p.targets.rwa_kind = parse_rwa_kind(f[12]);
        p.projected_capital = std::stod(f[13]);
        p.projected_rwa = std::stod(f[14]);
        p.predicted_car = std::stod(f[15]);
        out.push_back(std::move(p));
    }
    return out;
}

int cmd_ingest(const RunConfig& cfg) {
    const Inputs in = load_inputs(cfg);
    BuildStats stats;
    const auto panel = build_features(in.panel, in.macro, cfg.recipe, &stats);
    save_panel(panel, cache_path(cfg));
    cli::write_resolved_config(cfg, cfg.out_dir);
    std::cout << "ingest: banks_failed_dropped=" << in.failed_dropped
              << " rows_emitted=" << stats.rows_emitted << " rows_dropped=" << stats.rows_dropped
              << " feature_dim=" << panel.feature_dim << "\n";
    std::cout << "cache: " << cache_path(cfg) << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, frameworks::FrameworkKind kind) {
    const Inputs in = load_inputs(cfg);
    const auto panel = cached_or_built(cfg, in);
    const auto split =
        split_panel(in.panel, cfg.split_ratio, cfg.split_seed, cfg.in_sample, cfg.out_of_time);

    const auto train_panel = window_rows(panel, split.train_ids, cfg.in_sample);
    auto valid_panel = window_rows(panel, split.validation_ids, cfg.in_sample);
    if (train_panel.rows.empty()) throw DataError("no training rows inside the in-sample window");
    if (valid_panel.rows.empty()) valid_panel = train_panel;

    frameworks::FitOptions opt = fit_options(cfg, panel.feature_dim);
    const std::string artifact_dir = cfg.out_dir + "/artifact_" + frameworks::to_string(kind);
    fs::create_directories(artifact_dir);
    opt.report_dir = artifact_dir;

    if (frameworks::is_neural(kind) && opt.grid.size() > 1) {
        // Entity-level 5-fold CV on the training entities, scored by the
        // end-to-end CAR RMSE over the in-sample window.
        std::vector<std::string> ids(split.train_ids.begin(), split.train_ids.end());
        std::vector<BankQuarter> train_raw;
        for (const auto& b : in.panel)
            if (split.train_ids.count(b.bank_id)) train_raw.push_back(b);
        const QuarterRange cv_range{cfg.in_sample.first - 4, cfg.in_sample.last - 4};
        const auto scorer = frameworks::make_car_scorer(kind, train_panel, train_raw,
                                                        in.macro_series, cv_range, opt);
        std::vector<double> means;
        const auto best = nn::cross_validate(opt.grid, ids, cfg.cv_folds, scorer, &means);
        std::cout << "cv: candidates=" << opt.grid.size();
        for (double m : means) std::cout << ' ' << fmt_full(m);
        std::cout << "\n";
        opt.grid = {best};
    }

    const auto artifact = frameworks::fit(kind, train_panel, valid_panel, opt);
    frameworks::save_artifact(artifact, artifact_dir);
    cli::write_resolved_config(cfg, cfg.out_dir);
    std::cout << "train: framework=" << frameworks::to_string(kind)
              << " train_rows=" << train_panel.rows.size()
              << " valid_rows=" << valid_panel.rows.size() << " artifact=" << artifact_dir << "\n";
    return 0;
}

int cmd_project(const RunConfig& cfg, frameworks::FrameworkKind kind,
                const std::string& scenario_override) {
    const Inputs in = load_inputs(cfg);
    const std::string artifact_dir = cfg.out_dir + "/artifact_" + frameworks::to_string(kind);
    const auto artifact = frameworks::load_artifact(artifact_dir);

    std::optional<frameworks::ScenarioPath> scenario;
    const std::string scenario_path =
        !scenario_override.empty() ? scenario_override : cfg.scenario_path;
    if (!scenario_path.empty())
        scenario = frameworks::load_scenario(scenario_path, cfg.scenario_columns,
                                             cfg.in_sample.last, in.macro_series, cfg.delimiter);

    const auto run = frameworks::project_all(artifact, in.panel, in.macro_series,
                                             scenario ? &*scenario : nullptr, projection_range(cfg));
    write_projections(run, cfg, kind);
    cli::write_resolved_config(cfg, cfg.out_dir);
    std::cout << "project: framework=" << frameworks::to_string(kind)
              << " projections=" << run.projections.size() << " skips=" << run.skips.size() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
    const Inputs in = load_inputs(cfg);
    const auto split =
        split_panel(in.panel, cfg.split_ratio, cfg.split_seed, cfg.in_sample, cfg.out_of_time);

    std::vector<frameworks::Projection> projections;
    for (const auto kind : cfg.frameworks_selected) {
        const auto part = read_projections(projections_path(cfg, kind));
        projections.insert(projections.end(), part.begin(), part.end());
    }
    const auto report = eval::evaluate(projections, in.panel, split, cfg.large_threshold);

    // Every requested framework must produce both sample rows for the 'all'
    // cohort; an empty out-of-time (or in-sample) cell is a data error.
    for (const auto kind : cfg.frameworks_selected) {
        const std::string fw = frameworks::to_string(kind);
        for (const char* sample : {"out_of_time", "in_sample"}) {
            const bool found = std::any_of(report.rows.begin(), report.rows.end(),
                                           [&](const eval::MetricRow& row) {
                                               return row.framework == fw && row.sample == sample &&
                                                      row.cohort == "all";
                                           });
            if (!found)
                throw DataError("empty sample: no " + std::string(sample) +
                                " projections for framework '" + fw + "'");
        }
    }

    eval::emit_report(report, cfg.out_dir + "/report");
    cli::write_resolved_config(cfg, cfg.out_dir);
    std::cout << "evaluate: rows=" << report.rows.size() << " unmatched=" << report.unmatched
              << " outside_windows=" << report.outside_windows << " report=" << cfg.out_dir
              << "/report\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stresscast: one-year-ahead bank CAR projection and backtesting"};
    app.require_subcommand(1);

    std::string config_path, framework_name, scenario_path, out_override;
    std::int64_t seed_override = -1;
    app.add_option("--config", config_path, "run configuration (JSON)")->required();
    app.add_option("--out", out_override, "override paths.out_dir");
    app.add_option("--seed-override", seed_override, "override every configured seed");

    auto* ingest = app.add_subcommand("ingest", "load, clean, and cache the supervised panel");
    auto* train = app.add_subcommand("train", "fit one framework and persist the artifact");
    train->add_option("--framework", framework_name, "framework to fit")->required();
    auto* project = app.add_subcommand("project", "write one-year-ahead projections");
    project->add_option("--framework", framework_name, "framework to project")->required();
    project->add_option("--scenario", scenario_path, "macro scenario file (quarter overrides)");
    auto* evaluate = app.add_subcommand("evaluate", "join projections with actuals and emit metrics");
    auto* report = app.add_subcommand("report", "re-render report files from stored projections");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg = cli::load_run_config(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (seed_override >= 0) {
            cfg.split_seed = static_cast<std::uint64_t>(seed_override);
            cfg.bma.seed = static_cast<std::uint64_t>(seed_override);
            for (auto& net : cfg.grid) net.seed = static_cast<std::uint64_t>(seed_override);
        }
        fs::create_directories(cfg.out_dir);

        if (*ingest) return cmd_ingest(cfg);
        if (*train) return cmd_train(cfg, frameworks::parse_framework(framework_name));
        if (*project)
            return cmd_project(cfg, frameworks::parse_framework(framework_name), scenario_path);
        if (*evaluate || *report) return cmd_evaluate(cfg);
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
