#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stresscast/network.hpp"
#include "stresscast/rng.hpp"

namespace stresscast::bayesnn {

double softplus(double x);
double softplus_inv(double y);

// Mean-field Gaussian posterior over one dense layer's weights and biases.
// sigma = softplus(rho) keeps scales positive without constraints.
struct VariationalLayer {
    Eigen::MatrixXd w_mu;
    Eigen::MatrixXd w_rho;
    Eigen::VectorXd b_mu;
    Eigen::VectorXd b_rho;
    double prior_scale = 1.0;

    Eigen::MatrixXd w_sigma() const;
    Eigen::VectorXd b_sigma() const;
};

struct VariationalParams {
    std::vector<VariationalLayer> layers;
    double log_noise_var = 0.0;  // learned homoscedastic output variance

    // mu uses the same fan-in initializer (and rng stream position) as
    // NetworkParams::init so the vanishing-KL limit tracks the point net.
    static VariationalParams init(const std::vector<int>& widths, double prior_scale,
                                  double sigma_init, Rng& rng);
};

// Per-entry standard normal noise, shaped like the network parameters.
nn::NetworkParams draw_noise(const VariationalParams& vp, Rng& rng);
nn::NetworkParams zero_noise(const VariationalParams& vp);

// Reparameterized sample W = mu + sigma .* eps.
nn::NetworkParams sample_weights(const VariationalParams& vp, const nn::NetworkParams& eps);
nn::NetworkParams sample_weights(const VariationalParams& vp, Rng& rng);
nn::NetworkParams posterior_mean(const VariationalParams& vp);

// KL(q || N(0, prior_scale^2)) summed over entries:
//   log(sp/s) + (s^2 + mu^2)/(2 sp^2) - 1/2.
double kl_gaussian(const VariationalLayer& layer);
double kl_total(const VariationalParams& vp);

// Per-block winner selection. Train mode: soft mask softmax(h/tau + gumbel),
// output h .* mask (keeps gradients flowing); infer mode: hard argmax with
// lowest-index tie-break, losers zeroed.
Eigen::VectorXd lwta_forward(const Eigen::VectorXd& pre, int block_size, double temperature,
                             Rng* rng, nn::Mode mode);

// softmax(h) over one block: probability each unit wins.
Eigen::VectorXd lwta_winner_probs(const Eigen::VectorXd& block);

// Per-layer, per-sample Gumbel draws for relaxed LWTA selection. Held fixed
// across evaluations so the finite-difference oracle sees a deterministic
// objective.
struct LwtaNoise {
    std::vector<Eigen::MatrixXd> per_layer;  // samples x hidden width
};
LwtaNoise draw_lwta_noise(const nn::NetworkConfig& cfg, int n_samples, Rng& rng);

struct ElboTerms {
    double nll = 0;   // batch-summed Gaussian NLL under one weight sample
    double kl = 0;    // kl_total, unweighted
    double elbo = 0;  // -nll - (batch/n_total) * kl
};

// One-sample minibatch ELBO with fixed reparameterization noise. `noise`
// enables the relaxed (train-mode) LWTA masks; without it LWTA uses the
// noiseless tempered softmax.
ElboTerms elbo(const nn::NetworkConfig& cfg, const VariationalParams& vp, const nn::Batch& batch,
               long n_total, const nn::NetworkParams& eps, double temperature = 1.0,
               const LwtaNoise* noise = nullptr);

struct VariationalGradients {
    std::vector<VariationalLayer> layers;  // gradient w.r.t. mu/rho, same shapes
    double log_noise_var = 0;
};

// Exact gradients of -ELBO w.r.t. mu, rho and log_noise_var with eps and any
// LWTA noise held fixed. Soft LWTA masks are differentiated through.
VariationalGradients elbo_backward(const nn::NetworkConfig& cfg, const VariationalParams& vp,
                                   const nn::Batch& batch, long n_total,
                                   const nn::NetworkParams& eps, double temperature = 1.0,
                                   const LwtaNoise* noise = nullptr, ElboTerms* terms = nullptr);

struct ElboReport {
    std::vector<ElboTerms> per_epoch;   // epoch-summed terms
    std::vector<double> valid_loss;     // MSE at the posterior mean
    int selected_epoch = -1;
    std::uint64_t seed = 0;
};

struct BayesTrainOptions {
    double prior_scale = 1.0;
    double sigma_init = 1e-3;
    double temperature_start = 0.67;
    double temperature_end = 0.1;
    double noise_lr_scale = 0.5;     // separate step scale for log_noise_var
    double log_noise_floor = -23.0;  // ~1e-10 variance floor
};

// ELBO-ascent training (SGD on mu, rho, log_noise_var); one weight sample per
// batch. Inference uses posterior-mean weights with argmax LWTA. cfg.activation
// selects the relu|lwta variant. Deterministic given cfg.seed.
std::pair<VariationalParams, ElboReport> train_bayesian(const nn::NetworkConfig& cfg,
                                                        const nn::Batch& train_data,
                                                        const nn::Batch& valid_data,
                                                        const BayesTrainOptions& opt = {});

// Forward pass at fixed weights for the given variant (argmax LWTA at infer).
Eigen::VectorXd forward_at(const nn::NetworkConfig& cfg, const nn::NetworkParams& weights,
                           const Eigen::VectorXd& x);

// Same binary container as nn::save_params, tagged as variational.
void save_variational(const VariationalParams& vp, const std::string& path);
VariationalParams load_variational(const std::string& path);

void save_elbo_report(const ElboReport& report, const std::string& path);

}  // namespace stresscast::bayesnn
