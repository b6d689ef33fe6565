#include "stresscast/balance.hpp"

#include <cmath>
#include <string>

#include "stresscast/errors.hpp"

namespace stresscast::balance {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

void BankState::check() const {
    for (double v : {capital, rwa, loans, earning_assets, assets, deposits})
        require_finite(v, "balance sheet level");
    if (rwa < 0 || loans < 0 || earning_assets < 0 || assets < 0 || deposits < 0 || capital < 0)
        throw DataError("negative balance sheet level");
    if (capital > assets) throw DataError("capital exceeds assets");
}

void TargetVector::check() const {
    for (double v : {g_dep, g_loan, g_asset, g_easset}) {
        require_finite(v, "growth rate");
        if (v <= -1.0) throw DataError("growth rate <= -100%");
    }
    for (double v : {cost_of_risk, yea, cfd, nfia, rwa_measure}) require_finite(v, "yield");
}

double roll_forward_capital(const BankState& state, const TargetVector& t) {
    const double capital = state.capital + t.yea * state.earning_assets -
                           t.cost_of_risk * state.loans + t.nfia * state.assets -
                           t.cfd * state.deposits;
    require_finite(capital, "rolled capital");
    return capital;
}

BankState apply_growth(BankState state, const TargetVector& t) {
    state.loans *= 1.0 + t.g_loan;
    state.deposits *= 1.0 + t.g_dep;
    state.assets *= 1.0 + t.g_asset;
    state.earning_assets *= 1.0 + t.g_easset;
    return state;
}

double project_rwa(const BankState& state, RwaMethod method, const TargetVector& t) {
    switch (method) {
        case RwaMethod::Constant:
            return state.rwa;
        case RwaMethod::NeuralGrowth:
            if (t.rwa_kind != RwaMeasureKind::Growth)
                throw DataError("rwa_measure is not tagged as growth");
            return state.rwa * (1.0 + t.rwa_measure);
        case RwaMethod::SatelliteDensity:
            if (t.rwa_kind != RwaMeasureKind::Density)
                throw DataError("rwa_measure is not tagged as density");
            return t.rwa_measure * state.assets * (1.0 + t.g_asset);
    }
    throw DataError("unknown RWA method");
}

double compute_car(double capital, double rwa) {
    if (!(rwa > 0)) throw NumericError("CAR undefined: rwa <= 0");
    return capital / rwa;
}

}  // namespace stresscast::balance
