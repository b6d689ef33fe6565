#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stresscast/panel.hpp"

namespace stresscast::bma {

// Inclusion mask over K candidate regressors. The all-zero (null) model is
// valid.
struct RegressorMask {
    std::vector<std::uint64_t> words;
    int size = 0;

    static RegressorMask zeros(int k);
    bool test(int i) const;
    void set(int i, bool v);
    void flip(int i);
    int count() const;

    std::string to_bitstring() const;  // index 0 first, '0'/'1'
    static RegressorMask from_bitstring(const std::string& bits);

    bool operator==(const RegressorMask&) const = default;
};

struct MaskHash {
    std::size_t operator()(const RegressorMask& m) const;
};

// Candidate regressors and response. Columns and y are mean-centered on
// construction; the intercept is handled analytically outside the g-prior.
struct DesignMatrix {
    Eigen::MatrixXd Xc;       // centered columns
    Eigen::VectorXd yc;       // centered response
    Eigen::RowVectorXd x_mean;
    double y_mean = 0;
    double tss = 0;           // (y - ybar)'(y - ybar)
    std::vector<std::string> names;

    static DesignMatrix build(Eigen::MatrixXd X, Eigen::VectorXd y,
                              std::vector<std::string> names = {});

    long n() const { return Xc.rows(); }
    int k() const { return static_cast<int>(Xc.cols()); }
};

struct OlsFit {
    Eigen::VectorXd beta;  // one entry per included column
    double rss = 0;
    double r2 = 0;
};

// Least squares on the included columns via column-pivoted QR; throws
// NumericError naming the offending columns on rank deficiency. Inputs are
// the centered design.
OlsFit ols_fit(const Eigen::MatrixXd& x_sub, const Eigen::VectorXd& y);
OlsFit ols_fit(const DesignMatrix& d, const RegressorMask& model);

struct ZellnerPosterior {
    Eigen::VectorXd mean;  // (g/(1+g)) * beta_hat
    Eigen::MatrixXd cov;   // s^2 * f * (1 - f*R^2) * (X'X)^-1, f = g/(1+g)
};
// s^2 = tss / (N - 3).
ZellnerPosterior zellner_posterior(const DesignMatrix& d, const RegressorMask& model, double g);

// Log g-prior marginal likelihood up to the model-independent constant:
//   -((N-1)/2) log(1 - f R^2) - (k/2) log(1+g),  f = g/(1+g).
// Null model (k = 0, R^2 = 0) evaluates to exactly 0. An R^2 >= 1 is clamped
// to 1 - 1e-12 and flagged through `clamped` when supplied.
double log_marginal_likelihood(const DesignMatrix& d, const RegressorMask& model, double g,
                               bool* clamped = nullptr);

enum class ModelPriorKind { Uniform, BinomialBeta };

// Uniform: constant 0. Binomial-beta: log B(a+k, b+K-k) - log B(a, b) with
// a = 1, b = (K-m)/m for prior expected model size m in (0, K).
double model_prior_logp(const RegressorMask& model, ModelPriorKind kind, double expected_size);

struct ModelRecord {
    RegressorMask mask;
    double log_ml = 0;
    double log_prior = 0;
    double pmp = 0;
    Eigen::VectorXd post_mean;  // included coords, mask order
    Eigen::MatrixXd post_cov;
};

struct PosteriorSummary {
    // Highest-PMP models, capped at BmaOptions::retained_models; aggregates
    // below are over the full evaluated/visited model set.
    std::vector<ModelRecord> models;
    Eigen::VectorXd inclusion_prob;  // per regressor
    Eigen::VectorXd coef_mean;       // aggregated, zero where excluded
    Eigen::VectorXd coef_var;        // law-of-total-variance aggregate
    double g = 0;
    ModelPriorKind prior_kind = ModelPriorKind::Uniform;
    double prior_expected_size = 0;
    long n = 0;
    int k = 0;
    long models_evaluated = 0;  // enumeration: all; MCMC: distinct visited
    Eigen::RowVectorXd x_mean;
    double y_mean = 0;
    std::vector<std::string> names;
};

struct BmaOptions {
    double g = 0;                // <= 0: UIP, g = N
    bool bric = false;           // g = max(N, K^2) robustness rule
    ModelPriorKind prior_kind = ModelPriorKind::BinomialBeta;
    double expected_model_size = 0;  // <= 0: K/2
    long draws = 20000;
    long burnin = 10000;
    std::uint64_t seed = 1;
    int enumeration_cap = 20;    // hard cap on K for exhaustive evaluation
    int retained_models = 512;
    double outlier_mad_threshold = 5.0;

    double resolve_g(long n, int k) const;
    double resolve_expected_size(int k) const;
};

// Exhaustive 2^K evaluation; throws DataError above the cap.
PosteriorSummary enumerate_posterior(const DesignMatrix& d, const BmaOptions& opt);

// Birth/death Metropolis-Hastings: proposal flips one uniformly chosen
// regressor, acceptance exp(dlogML + dlogPrior), PMPs are post-burn-in visit
// frequencies. Deterministic given the seed.
PosteriorSummary mcmc_birth_death(const DesignMatrix& d, const BmaOptions& opt);

struct Prediction {
    double mean = 0;
    double variance = 0;  // within-model + between-model dispersion proxy
};
// x_new is in raw regressor units (length K); centering uses the stored
// column means.
Prediction bma_predict(const PosteriorSummary& s, const Eigen::VectorXd& x_new);

// One summary per target variable, canonical names.
struct SatelliteSet {
    std::map<std::string, PosteriorSummary> by_target;
};
const std::vector<std::string>& satellite_target_names();  // 4 growths, 4 yields, rw_density
const std::vector<std::string>& yield_target_names();      // the 4 yields only

// Fits one BMA per named target on outlier-cleaned regressors (cleaning is
// per feature column within each bank's time-ordered block). Enumerates when
// K <= enumeration_cap, otherwise runs the MCMC. g defaults to UIP (g = N).
SatelliteSet fit_satellites(const SupervisedPanel& panel, const BmaOptions& opt,
                            const std::vector<std::string>& targets = satellite_target_names());

// Audit-grade text round-trip (masks as bitstrings, log-MLs, PMPs).
void save_summary(const PosteriorSummary& s, const std::string& path);
PosteriorSummary load_summary(const std::string& path);

}  // namespace stresscast::bma
