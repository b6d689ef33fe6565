#pragma once

namespace stresscast::balance {

// How the one-year RWA figure is obtained. Each framework maps to exactly
// one method.
enum class RwaMethod {
    NeuralGrowth,      // rwa * (1 + growth)
    SatelliteDensity,  // density * projected assets
    Constant,          // rwa unchanged
};

// What the rwa_measure field of a TargetVector means. Never mixed across
// frameworks.
enum class RwaMeasureKind {
    None,     // constant balance sheet: measure unused
    Growth,   // one-year RWA growth rate
    Density,  // one-year-ahead RW density
};

// Start-of-period balance sheet levels.
struct BankState {
    double capital = 0;
    double rwa = 0;
    double loans = 0;
    double earning_assets = 0;
    double assets = 0;
    double deposits = 0;

    void check() const;  // non-negative levels, capital <= assets
};

// The nine modelled quantities: four one-year growth rates, four yields, one
// RWA measure tagged by kind.
struct TargetVector {
    double g_dep = 0;
    double g_loan = 0;
    double g_asset = 0;
    double g_easset = 0;
    double cost_of_risk = 0;
    double yea = 0;
    double cfd = 0;
    double nfia = 0;
    double rwa_measure = 0;
    RwaMeasureKind rwa_kind = RwaMeasureKind::None;

    void check() const;  // growths > -1, everything finite
};

// Capital_{t-1} + yea*earning_assets - cost_of_risk*loans + nfia*assets
// - cfd*deposits. Yields apply to start-of-period balances. May go negative;
// insolvency is representable, not clamped.
double roll_forward_capital(const BankState& state, const TargetVector& t);

// Scales loans/deposits/assets/earning_assets by their growth rates. Capital
// and RWA are untouched (they have their own operations).
BankState apply_growth(BankState state, const TargetVector& t);

// One-year-ahead RWA under the given method. `state` is the start-of-period
// state; SatelliteDensity uses assets * (1 + g_asset) as the projected base.
double project_rwa(const BankState& state, RwaMethod method, const TargetVector& t);

// capital / rwa; throws NumericError when rwa <= 0.
double compute_car(double capital, double rwa);

}  // namespace stresscast::balance
