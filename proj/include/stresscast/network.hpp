#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stresscast/rng.hpp"

namespace stresscast::nn {

inline constexpr int kOutputWidth = 9;

enum class Activation { Relu, Lwta };
enum class Mode { Train, Infer };

struct NetworkConfig {
    std::vector<int> layer_widths;  // input, hidden..., output
    Activation activation = Activation::Relu;
    int lwta_block_size = 2;        // units per block, Lwta only
    double dropout_rate = 0.0;
    bool input_dropout = false;     // extend dropout to the input units
    bool bayesian = false;
    std::uint64_t seed = 1;
    double learning_rate = 0.01;
    double momentum = 0.0;
    int batch_size = 32;
    int epochs = 100;

    int hidden_layers() const { return static_cast<int>(layer_widths.size()) - 2; }
    long param_count() const;
    // Stress-test contract: 1..5 hidden layers, output width 9, dropout in
    // [0,1). Throws DataError. Enforced on the train/CV paths; the raw
    // forward/backward machinery is shape-generic.
    void check() const;
};

struct NetworkParams {
    struct Layer {
        Eigen::MatrixXd W;  // in x out
        Eigen::VectorXd b;
    };
    std::vector<Layer> layers;

    // Scaled uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    static NetworkParams init(const std::vector<int>& widths, Rng& rng);
};

// y_k = sum_d W(d,k) x_d + b_k
Eigen::VectorXd dense_forward(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                              const Eigen::VectorXd& x);

Eigen::VectorXd relu(Eigen::VectorXd v);

// Inverted dropout: train mode zeroes units with probability `rate` and
// scales survivors by 1/(1-rate); infer mode is the identity.
Eigen::VectorXd dropout_apply(Eigen::VectorXd v, double rate, Rng& rng, Mode mode);

// Dense/ReLU/dropout stack with a linear output head. Train mode draws
// dropout masks from `rng`.
Eigen::VectorXd forward(const NetworkConfig& cfg, const NetworkParams& p,
                        const Eigen::VectorXd& x, Mode mode, Rng* rng = nullptr);

// Mean over samples and outputs of squared error. Rows are samples.
double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

struct Batch {
    Eigen::MatrixXd X;  // samples x features
    Eigen::MatrixXd Y;  // samples x outputs
};

// Per-layer, per-sample dropout masks holding the inverted-dropout scale
// (0 or 1/(1-rate)). `input` stays empty unless cfg.input_dropout.
struct DropoutMasks {
    Eigen::MatrixXd input;                   // samples x input width, or empty
    std::vector<Eigen::MatrixXd> per_layer;  // samples x hidden width
};
DropoutMasks draw_dropout_masks(const NetworkConfig& cfg, int n_samples, Rng& rng);

// Training loss of the batch under fixed masks (the quantity backward
// differentiates; also the finite-difference oracle's target).
double loss_with_masks(const NetworkConfig& cfg, const NetworkParams& p, const Batch& batch,
                       const DropoutMasks& masks);

struct Gradients {
    std::vector<NetworkParams::Layer> layers;  // same shapes as the params
};

// Exact reverse-mode gradients of loss_with_masks w.r.t. every weight and
// bias; ReLU subgradient at 0 is 0. Throws NumericError (with layer index)
// on a non-finite gradient.
Gradients backward(const NetworkConfig& cfg, const NetworkParams& p, const Batch& batch,
                   const DropoutMasks& masks);

struct TrainReport {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> valid_loss;
    int selected_epoch = -1;         // argmin of valid_loss
    std::uint64_t seed = 0;
};

// Mini-batch SGD (optional momentum); keeps the parameters of the epoch with
// minimal validation loss. Deterministic given cfg.seed. Throws NumericError
// with the epoch index on divergence.
std::pair<NetworkParams, TrainReport> train(const NetworkConfig& cfg, const Batch& train_data,
                                            const Batch& valid_data);

// Deterministic entity partition into `folds` groups (sorted ids,
// round-robin).
std::vector<std::vector<std::string>> partition_entities(std::vector<std::string> ids, int folds);

// Scores one candidate on one fold: train on train_ids, evaluate on
// valid_ids, return the end-to-end CAR RMSE (the frameworks module supplies
// the production scorer).
using FoldScorer = std::function<double(const NetworkConfig&, const std::vector<std::string>& train_ids,
                                        const std::vector<std::string>& valid_ids)>;

// Picks the config with minimal mean fold RMSE; ties broken by fewer
// parameters, then config order. Throws DataError on an empty fold.
NetworkConfig cross_validate(const std::vector<NetworkConfig>& configs,
                             const std::vector<std::string>& entity_ids, int folds,
                             const FoldScorer& score, std::vector<double>* mean_rmse = nullptr);

// Versioned binary container with shape manifest (shared with the
// variational variant via the tag byte).
void save_params(const NetworkParams& p, const std::string& path);
NetworkParams load_params(const std::string& path);

void save_report(const TrainReport& r, const std::string& path);

}  // namespace stresscast::nn
