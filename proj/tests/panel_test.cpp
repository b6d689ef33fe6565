#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "stresscast/errors.hpp"
#include "stresscast/panel.hpp"
#include "stresscast/rng.hpp"
#include "support/synth.hpp"

using namespace stresscast;
namespace fs = std::filesystem;

namespace {

BankQuarter make_bank(const std::string& id, Quarter q, double scale = 1.0) {
    BankQuarter b;
    b.bank_id = id;
    b.quarter = q;
    b.net_loans = 580 * scale;
    b.deposits_total = 750 * scale;
    b.deposits_domestic = 600 * scale;
    b.assets_avg = 1000 * scale;
    b.earning_assets_avg = 850 * scale;
    b.equity_avg = 100 * scale;
    b.loans_avg = 600 * scale;
    b.cfd = 0.012;
    b.yea = 0.035;
    b.nfia = 0.011;
    b.rw_density = 0.7;
    b.loss_loan = 0.005;
    b.rwa_total = 700 * scale;
    b.car = 0.15;
    return b;
}

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "stresscast_panel_test";
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

const char* kBankHeader =
    "bank_id,quarter,net_loans,deposits_total,deposits_domestic,assets_avg,"
    "earning_assets_avg,equity_avg,loans_avg,cfd,yea,nfia,rw_density,loss_loan,rwa_total,car,failed";

std::string bank_row(const std::string& id, const std::string& q, double assets = 1000) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%s,%s,580,750,600,%g,850,100,600,0.012,0.035,0.011,0.7,0.005,%g,0.15,0",
                  id.c_str(), q.c_str(), assets, 0.7 * assets);
    return buf;
}

}  // namespace

TEST_CASE("quarter ordering and arithmetic") {
    const Quarter q1{2010, 4};
    const Quarter q2{2011, 1};
    CHECK(q1 < q2);
    CHECK(q2 - q1 == 1);
    CHECK((q1 + 1) == q2);
    CHECK((q2 - 5) == Quarter{2009, 4});
    CHECK(Quarter::parse("2012Q3") == Quarter{2012, 3});
    CHECK(Quarter{2012, 3}.str() == "2012Q3");
    CHECK_THROWS_AS(Quarter::parse("2012"), DataError);
    CHECK_THROWS_AS(Quarter::parse("2012Q5"), DataError);
}

TEST_CASE("load_bank_panel reads one record per bank-quarter") {
    const auto path = temp_dir() / "ok.csv";
    std::string content = std::string(kBankHeader) + "\n";
    for (const char* id : {"B1", "B2"})
        for (const char* q : {"2010Q1", "2010Q2", "2010Q3"}) content += bank_row(id, q) + "\n";
    write_file(path, content);

    const auto panel = load_bank_panel(path.string(), {});
    CHECK(panel.size() == 6);
    CHECK(panel[0].bank_id == "B1");
    CHECK(panel[0].deposits_total == 750);
}

TEST_CASE("load_bank_panel rejects invariant violations") {
    const auto path = temp_dir() / "neg.csv";
    write_file(path, std::string(kBankHeader) + "\n" + bank_row("B1", "2010Q1", -5) + "\n");
    CHECK_THROWS_WITH_AS(load_bank_panel(path.string(), {}),
                         doctest::Contains("invariant violation"), DataError);
}

TEST_CASE("load_bank_panel names the duplicate key") {
    const auto path = temp_dir() / "dup.csv";
    write_file(path, std::string(kBankHeader) + "\n" + bank_row("B1", "2010Q2") + "\n" +
                         bank_row("B1", "2010Q2") + "\n");
    CHECK_THROWS_WITH_AS(load_bank_panel(path.string(), {}), doctest::Contains("(B1, 2010Q2)"),
                         DataError);
}

TEST_CASE("load_bank_panel reports missing mandatory columns") {
    const auto path = temp_dir() / "missing.csv";
    write_file(path, "bank_id,quarter\nB1,2010Q1\n");
    CHECK_THROWS_WITH_AS(load_bank_panel(path.string(), {}),
                         doctest::Contains("missing mandatory column"), DataError);
}

TEST_CASE("load_bank_panel honors a column map") {
    const auto path = temp_dir() / "mapped.csv";
    std::string header = kBankHeader;
    header.replace(header.find("bank_id"), 7, "CERT");
    write_file(path, header + "\n" + bank_row("B9", "2011Q1") + "\n");
    const auto panel = load_bank_panel(path.string(), {{"bank_id", "CERT"}});
    CHECK(panel.size() == 1);
    CHECK(panel[0].bank_id == "B9");
}

TEST_CASE("filter_failed") {
    std::vector<BankQuarter> panel;
    for (int i = 0; i < 10; ++i) {
        auto b = make_bank("B" + std::to_string(i), Quarter{2010, 1});
        b.failed = i < 3;
        panel.push_back(b);
    }
    SUBCASE("drops failed records, order preserved") {
        const auto kept = filter_failed(panel);
        CHECK(kept.size() == 7);
        CHECK(kept.front().bank_id == "B3");
        CHECK(kept.back().bank_id == "B9");
    }
    SUBCASE("no failed records: identical panel") {
        auto healthy = panel;
        for (auto& b : healthy) b.failed = false;
        CHECK(filter_failed(healthy).size() == 10);
    }
    SUBCASE("entirely failed: empty panel") {
        auto doomed = panel;
        for (auto& b : doomed) b.failed = true;
        CHECK(filter_failed(doomed).empty());
    }
}

TEST_CASE("clean_outliers hand-worked example") {
    // median 3, MAD 1.5, z(100) = 97/1.5 = 64.67 > 5; interpolate (2+4)/2.
    const auto cleaned = clean_outliers({1, 2, 100, 4}, 5.0);
    REQUIRE(cleaned.size() == 4);
    CHECK(cleaned[0] == 1.0);
    CHECK(cleaned[1] == 2.0);
    CHECK(cleaned[2] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(cleaned[3] == 4.0);
}

TEST_CASE("clean_outliers degenerate cases") {
    CHECK(clean_outliers({5, 5, 5, 5}, 0.1) == std::vector<double>{5, 5, 5, 5});  // MAD = 0
    const std::vector<double> calm = {1.0, 1.1, 0.9, 1.05};
    CHECK(clean_outliers(calm, 5.0) == calm);
    CHECK_THROWS_AS(clean_outliers({1, 2}, 5.0), DataError);
}

TEST_CASE("clean_outliers endpoints take the nearest anchor") {
    const auto cleaned = clean_outliers({500, 1, 2, 1, 2}, 5.0);
    CHECK(cleaned[0] == 1.0);
}

TEST_CASE("clean_outliers is idempotent on spiky series") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> series;
        for (int i = 0; i < 40; ++i) series.push_back(std::sin(0.3 * i) + 0.1 * normal(rng));
        series[5] += 50;
        series[22] -= 80;
        const auto once = clean_outliers(series, 5.0);
        const auto twice = clean_outliers(once, 5.0);
        CHECK(once == twice);
    }
}

TEST_CASE("split_panel counts, disjointness, determinism") {
    std::vector<BankQuarter> panel;
    for (int i = 0; i < 10; ++i) panel.push_back(make_bank("B" + std::to_string(i), Quarter{2010, 1}));
    const QuarterRange in_sample{{2010, 1}, {2013, 4}};
    const QuarterRange out_of_time{{2014, 1}, {2015, 4}};

    const auto split = split_panel(panel, 0.8, 42, in_sample, out_of_time);
    CHECK(split.train_ids.size() == 8);
    CHECK(split.validation_ids.size() == 2);
    for (const auto& id : split.validation_ids) CHECK(split.train_ids.count(id) == 0);

    const auto again = split_panel(panel, 0.8, 42, in_sample, out_of_time);
    CHECK(split.train_ids == again.train_ids);
    CHECK(split.validation_ids == again.validation_ids);

    CHECK_THROWS_AS(split_panel(panel, 1.5, 1, in_sample, out_of_time), DataError);
    CHECK_THROWS_AS(split_panel({panel[0]}, 0.8, 1, in_sample, out_of_time), DataError);
    CHECK_THROWS_AS(split_panel(panel, 0.8, 1, out_of_time, in_sample), DataError);
}

TEST_CASE("split_panel is entity-disjoint and exhaustive for any seed/ratio") {
    std::vector<BankQuarter> panel;
    for (int i = 0; i < 23; ++i)
        for (int q = 0; q < 2; ++q)
            panel.push_back(make_bank("B" + std::to_string(i), Quarter{2010, 1} + q));
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
        for (double ratio : {0.2, 0.5, 0.8, 0.93}) {
            const auto split = split_panel(panel, ratio, seed, {{2010, 1}, {2013, 4}},
                                           {{2014, 1}, {2015, 4}});
            std::set<std::string> all;
            all.insert(split.train_ids.begin(), split.train_ids.end());
            all.insert(split.validation_ids.begin(), split.validation_ids.end());
            CHECK(all.size() == 23);
            CHECK(split.train_ids.size() + split.validation_ids.size() == 23);
        }
    }
}

TEST_CASE("build_features dimensions follow the recipe") {
    const auto data = synth::make_panel({.banks = 6, .quarters = 24, .seed = 3});

    SUBCASE("macro-only recipe gives dim 10") {
        FeatureRecipe recipe;
        recipe.macro_lags = {0};
        recipe.financial_lags = {};
        const auto panel = build_features(data.bank_panel, data.macro, recipe);
        CHECK(panel.feature_dim == 10);
        CHECK(panel.feature_names.size() == 10);
    }
    SUBCASE("default recipe gives dim 67") {
        const FeatureRecipe recipe;
        CHECK(recipe.feature_dim() == 67);
        const auto panel = build_features(data.bank_panel, data.macro, recipe);
        CHECK(panel.feature_dim == 67);
        for (const auto& row : panel.rows) CHECK(row.x.size() == 67);
    }
    SUBCASE("random recipes match the pure dimension function") {
        Rng rng(11);
        for (int rep = 0; rep < 25; ++rep) {
            FeatureRecipe recipe;
            recipe.macro_lags.clear();
            recipe.financial_lags.clear();
            for (int lag = 0; lag <= 8; ++lag) {
                if (uniform01(rng) < 0.4) recipe.macro_lags.push_back(lag);
                if (uniform01(rng) < 0.4) recipe.financial_lags.push_back(lag);
            }
            if (recipe.macro_lags.empty()) recipe.macro_lags = {0};
            recipe.included_financials.clear();
            for (const auto& name : financial_variable_names())
                if (uniform01(rng) < 0.5) recipe.included_financials.push_back(name);
            const auto panel = build_features(data.bank_panel, data.macro, recipe);
            CHECK(panel.feature_dim == recipe.feature_dim());
            CHECK(panel.feature_names == recipe.feature_names());
        }
    }
}

TEST_CASE("build_features drops banks with insufficient history") {
    auto data = synth::make_panel({.banks = 3, .quarters = 24, .seed = 5});
    // Truncate one bank to 8 quarters: 12 lags + 4-ahead target cannot fit.
    std::vector<BankQuarter> panel;
    for (const auto& b : data.bank_panel)
        if (b.bank_id != "B0001" || b.quarter < Quarter{2008, 1} + 8) panel.push_back(b);

    BuildStats stats;
    const auto sup = build_features(panel, data.macro, FeatureRecipe{}, &stats);
    for (const auto& row : sup.rows) CHECK(row.bank_id != "B0001");
    CHECK(stats.rows_dropped > 0);
    CHECK(stats.rows_emitted == static_cast<long>(sup.rows.size()));
}

TEST_CASE("build_features rejects unknown financials and empty results") {
    const auto data = synth::make_panel({.banks = 3, .quarters = 24, .seed = 5});
    FeatureRecipe bad;
    bad.included_financials = {"nonexistent"};
    CHECK_THROWS_WITH_AS(build_features(data.bank_panel, data.macro, bad),
                         doctest::Contains("unknown financial variable"), DataError);

    FeatureRecipe needy;  // 40-quarter lag is unsatisfiable on a 24-quarter panel
    needy.macro_lags = {0, 40};
    CHECK_THROWS_WITH_AS(build_features(data.bank_panel, data.macro, needy),
                         doctest::Contains("empty result set"), DataError);
}

TEST_CASE("leakage guard: features never look past as_of, target is exactly t+4") {
    const auto data = synth::make_panel({.banks = 2, .quarters = 24, .seed = 9});
    FeatureRecipe recipe;  // default lags {0,4,8,12}
    const auto full = build_features(data.bank_panel, data.macro, recipe);

    // Pick a row and rebuild its features with macro truncated at as_of:
    // identical features proves no future macro enters the vector.
    const auto& row = full.rows.front();
    std::vector<MacroQuarter> truncated;
    for (const auto& m : data.macro)
        if (m.quarter <= row.quarter) truncated.push_back(m);
    const MacroSeries series(truncated);
    const MacroView view{&series, nullptr};
    const auto banks = index_panel(data.bank_panel);
    std::vector<double> rebuilt;
    REQUIRE(build_feature_row(banks.at(row.bank_id), view, recipe, row.quarter, rebuilt));
    CHECK(rebuilt == row.x);

    // Perturb the record at t+4: the target block must change.
    auto perturbed_panel = data.bank_panel;
    for (auto& b : perturbed_panel)
        if (b.bank_id == row.bank_id && b.quarter == row.quarter + 4) b.yea += 0.5;
    const auto perturbed = index_panel(perturbed_panel);
    std::array<double, kTargetCount> y{};
    REQUIRE(compute_targets(perturbed.at(row.bank_id), row.quarter, y));
    CHECK(y[kTargetYea] == doctest::Approx(row.y[kTargetYea] + 0.5));
}

TEST_CASE("standardize hand example and contract") {
    SupervisedPanel panel;
    panel.feature_dim = 2;
    panel.feature_names = {"a", "const"};
    for (double v : {1.0, 3.0}) {
        PanelRow row;
        row.bank_id = "B";
        row.quarter = Quarter{2010, 1};
        row.x = {v, 7.0};
        panel.rows.push_back(row);
    }

    auto [scaled, stats] = standardize(panel);
    // Population convention: mean 2, sd 1.
    CHECK(stats.mean[0] == 2.0);
    CHECK(stats.sd[0] == 1.0);
    CHECK(scaled.rows[0].x[0] == -1.0);
    CHECK(scaled.rows[1].x[0] == 1.0);
    CHECK(stats.constant[1] == 1);          // sd = 0 column flagged
    CHECK(scaled.rows[0].x[1] == 7.0);      // and passed through

    // Test-time application: columns are not re-centered on test means.
    SupervisedPanel test = panel;
    test.rows[0].x = {10.0, 7.0};
    test.rows[1].x = {12.0, 7.0};
    auto [scaled_test, stats2] = standardize(test, stats);
    CHECK(scaled_test.rows[0].x[0] == 8.0);  // (10-2)/1, not centered to 0
    CHECK(stats2.mean == stats.mean);

    FeatureStats wrong;
    wrong.mean = {0.0};
    wrong.sd = {1.0};
    wrong.constant = {0};
    CHECK_THROWS_AS(standardize(panel, wrong), DataError);
}

TEST_CASE("standardize round-trips to 1e-12 relative error") {
    const auto data = synth::make_panel({.banks = 4, .quarters = 24, .seed = 13});
    const auto panel = build_features(data.bank_panel, data.macro, FeatureRecipe{});
    const auto [scaled, stats] = standardize(panel);
    const auto back = unstandardize(scaled, stats);
    for (std::size_t i = 0; i < panel.rows.size(); ++i)
        for (int j = 0; j < panel.feature_dim; ++j) {
            const double orig = panel.rows[i].x[j];
            const double rt = back.rows[i].x[j];
            CHECK(std::abs(rt - orig) <= 1e-12 * std::max(1.0, std::abs(orig)));
        }
    // Targets are never scaled.
    for (std::size_t i = 0; i < panel.rows.size(); ++i) CHECK(scaled.rows[i].y == panel.rows[i].y);
}

TEST_CASE("panel cache round-trips and is byte-stable") {
    const auto data = synth::make_panel({.banks = 3, .quarters = 20, .seed = 17});
    FeatureRecipe recipe;
    recipe.macro_lags = {0, 4};
    recipe.financial_lags = {0};
    const auto panel = build_features(data.bank_panel, data.macro, recipe);

    const auto path1 = temp_dir() / "cache1.tsv";
    const auto path2 = temp_dir() / "cache2.tsv";
    save_panel(panel, path1.string());
    const auto loaded = load_panel(path1.string());
    CHECK(loaded.feature_dim == panel.feature_dim);
    CHECK(loaded.rows.size() == panel.rows.size());
    save_panel(loaded, path2.string());

    std::ifstream f1(path1), f2(path2);
    const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    CHECK(!s1.empty());
}

TEST_CASE("synthetic panel satisfies the record invariants") {
    const auto data = synth::make_panel({.banks = 8, .quarters = 24, .seed = 21, .failed_every = 4});
    int failed = 0;
    for (const auto& b : data.bank_panel) {
        b.check();
        failed += b.failed;
    }
    CHECK(failed == 2 * 24);  // every 4th of 8 banks
    for (const auto& m : data.macro) m.check();
}
