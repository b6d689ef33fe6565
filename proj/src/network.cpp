#include "stresscast/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "stresscast/errors.hpp"

namespace stresscast::nn {

long NetworkConfig::param_count() const {
    long count = 0;
    for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
        count += static_cast<long>(layer_widths[l]) * layer_widths[l + 1] + layer_widths[l + 1];
    return count;
}

void NetworkConfig::check() const {
    const int hidden = hidden_layers();
    if (hidden < 1 || hidden > 5)
        throw DataError("network needs 1..5 hidden layers, got " + std::to_string(hidden));
    if (layer_widths.back() != kOutputWidth)
        throw DataError("output width must be " + std::to_string(kOutputWidth));
    for (int w : layer_widths)
        if (w < 1) throw DataError("layer widths must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw DataError("dropout rate must lie in [0,1)");
    if (activation == Activation::Lwta) {
        if (lwta_block_size < 2) throw DataError("LWTA blocks need at least 2 units");
        for (std::size_t l = 1; l + 1 < layer_widths.size(); ++l)
            if (layer_widths[l] % lwta_block_size != 0)
                throw DataError("hidden width " + std::to_string(layer_widths[l]) +
                                " is not a multiple of the LWTA block size");
    }
}

NetworkParams NetworkParams::init(const std::vector<int>& widths, Rng& rng) {
    NetworkParams p;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        NetworkParams::Layer layer;
        const int fan_in = widths[l];
        const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
        layer.W.resize(fan_in, widths[l + 1]);
        for (int r = 0; r < layer.W.rows(); ++r)
            for (int c = 0; c < layer.W.cols(); ++c)
                layer.W(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
        layer.b = Eigen::VectorXd::Zero(widths[l + 1]);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

Eigen::VectorXd dense_forward(const Eigen::MatrixXd& W, const Eigen::VectorXd& b,
                              const Eigen::VectorXd& x) {
    if (W.rows() != x.size() || W.cols() != b.size())
        throw DataError("dense_forward shape mismatch");
    return W.transpose() * x + b;
}

Eigen::VectorXd relu(Eigen::VectorXd v) { return v.cwiseMax(0.0); }

Eigen::VectorXd dropout_apply(Eigen::VectorXd v, double rate, Rng& rng, Mode mode) {
    if (mode == Mode::Infer || rate == 0.0) return v;
    const double scale = 1.0 / (1.0 - rate);
    for (int i = 0; i < v.size(); ++i) v[i] = uniform01(rng) < rate ? 0.0 : v[i] * scale;
    return v;
}

Eigen::VectorXd forward(const NetworkConfig& cfg, const NetworkParams& p,
                        const Eigen::VectorXd& x, Mode mode, Rng* rng) {
    if (x.size() != p.layers.front().W.rows()) throw DataError("forward: input width mismatch");
    Eigen::VectorXd a = x;
    if (cfg.input_dropout && cfg.dropout_rate > 0.0 && mode == Mode::Train) {
        if (!rng) throw DataError("train-mode forward with dropout needs an rng");
        a = dropout_apply(std::move(a), cfg.dropout_rate, *rng, mode);
    }
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        a = dense_forward(p.layers[l].W, p.layers[l].b, a);
        if (l + 1 < p.layers.size()) {
            a = relu(std::move(a));
            if (cfg.dropout_rate > 0.0 && mode == Mode::Train) {
                if (!rng) throw DataError("train-mode forward with dropout needs an rng");
                a = dropout_apply(std::move(a), cfg.dropout_rate, *rng, mode);
            }
        }
    }
    return a;
}

double loss_mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DataError("loss_mse shape mismatch");
    if (pred.rows() == 0) throw DataError("loss_mse on empty batch");
    return (pred - target).squaredNorm() / static_cast<double>(pred.rows() * pred.cols());
}

DropoutMasks draw_dropout_masks(const NetworkConfig& cfg, int n_samples, Rng& rng) {
    DropoutMasks masks;
    const double rate = cfg.dropout_rate;
    const double scale = rate > 0.0 ? 1.0 / (1.0 - rate) : 1.0;
    auto draw = [&](int width) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n_samples, width, 1.0);
        if (rate > 0.0)
            for (int i = 0; i < m.rows(); ++i)
                for (int j = 0; j < m.cols(); ++j) m(i, j) = uniform01(rng) < rate ? 0.0 : scale;
        return m;
    };
    if (cfg.input_dropout) masks.input = draw(cfg.layer_widths.front());
    for (std::size_t l = 1; l + 1 < cfg.layer_widths.size(); ++l)
        masks.per_layer.push_back(draw(cfg.layer_widths[l]));
    return masks;
}

namespace {

struct ForwardTrace {
    std::vector<Eigen::MatrixXd> z;  // pre-activations per layer
    std::vector<Eigen::MatrixXd> a;  // post (activation+mask); a[0] is the input
};

ForwardTrace forward_batch(const NetworkParams& p, const Batch& batch, const DropoutMasks& masks) {
    ForwardTrace t;
    t.a.push_back(masks.input.size() > 0 ? batch.X.cwiseProduct(masks.input) : batch.X);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        Eigen::MatrixXd z =
            (t.a.back() * p.layers[l].W).rowwise() + p.layers[l].b.transpose();
        if (l + 1 < p.layers.size()) {
            Eigen::MatrixXd a = z.cwiseMax(0.0);
            if (l < masks.per_layer.size()) a = a.cwiseProduct(masks.per_layer[l]);
            t.z.push_back(std::move(z));
            t.a.push_back(std::move(a));
        } else {
            t.a.push_back(z);
            t.z.push_back(std::move(z));
        }
    }
    return t;
}

}  // namespace

double loss_with_masks(const NetworkConfig& /*cfg*/, const NetworkParams& p, const Batch& batch,
                       const DropoutMasks& masks) {
    const ForwardTrace t = forward_batch(p, batch, masks);
    return loss_mse(t.a.back(), batch.Y);
}

Gradients backward(const NetworkConfig& /*cfg*/, const NetworkParams& p, const Batch& batch,
                   const DropoutMasks& masks) {
    if (batch.X.rows() == 0) throw DataError("backward on empty batch");
    const ForwardTrace t = forward_batch(p, batch, masks);
    const std::size_t n_layers = p.layers.size();
    const double denom = static_cast<double>(batch.X.rows()) * batch.Y.cols();

    Gradients g;
    g.layers.resize(n_layers);

    Eigen::MatrixXd dz = 2.0 * (t.a.back() - batch.Y) / denom;
    for (std::size_t l = n_layers; l-- > 0;) {
        g.layers[l].W = t.a[l].transpose() * dz;
        g.layers[l].b = dz.colwise().sum();
        if (!g.layers[l].W.allFinite() || !g.layers[l].b.allFinite())
            throw NumericError("non-finite gradient in layer " + std::to_string(l));
        if (l > 0) {
            Eigen::MatrixXd da = dz * p.layers[l].W.transpose();
            if (l - 1 < masks.per_layer.size()) da = da.cwiseProduct(masks.per_layer[l - 1]);
            // ReLU subgradient at 0 is 0.
            dz = da.cwiseProduct((t.z[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return g;
}

std::pair<NetworkParams, TrainReport> train(const NetworkConfig& cfg, const Batch& train_data,
                                            const Batch& valid_data) {
    cfg.check();
    if (train_data.X.rows() == 0 || valid_data.X.rows() == 0)
        throw DataError("train: empty panel");

    Rng rng(cfg.seed);
    NetworkParams params = NetworkParams::init(cfg.layer_widths, rng);
    std::vector<NetworkParams::Layer> velocity;
    for (const auto& layer : params.layers)
        velocity.push_back({Eigen::MatrixXd::Zero(layer.W.rows(), layer.W.cols()),
                            Eigen::VectorXd::Zero(layer.b.size())});

    TrainReport report;
    report.seed = cfg.seed;
    const long n = train_data.X.rows();
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0);

    NetworkParams best = params;
    double best_valid = std::numeric_limits<double>::infinity();
    const DropoutMasks no_masks;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        double epoch_loss = 0;
        long seen = 0;
        for (long start = 0; start < n; start += cfg.batch_size) {
            const long len = std::min<long>(cfg.batch_size, n - start);
            Batch batch;
            batch.X.resize(len, train_data.X.cols());
            batch.Y.resize(len, train_data.Y.cols());
            for (long i = 0; i < len; ++i) {
                batch.X.row(i) = train_data.X.row(order[start + i]);
                batch.Y.row(i) = train_data.Y.row(order[start + i]);
            }
            const DropoutMasks masks = cfg.dropout_rate > 0.0
                                           ? draw_dropout_masks(cfg, static_cast<int>(len), rng)
                                           : DropoutMasks{};
            const double batch_loss = loss_with_masks(cfg, params, batch, masks);
            if (!std::isfinite(batch_loss))
                throw NumericError("training diverged at epoch " + std::to_string(epoch));
            const Gradients grads = backward(cfg, params, batch, masks);
            for (std::size_t l = 0; l < params.layers.size(); ++l) {
                velocity[l].W = cfg.momentum * velocity[l].W + grads.layers[l].W;
                velocity[l].b = cfg.momentum * velocity[l].b + grads.layers[l].b;
                params.layers[l].W -= cfg.learning_rate * velocity[l].W;
                params.layers[l].b -= cfg.learning_rate * velocity[l].b;
            }
            epoch_loss += batch_loss * static_cast<double>(len);
            seen += len;
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(seen));

        // Validation at inference (no dropout).
        Eigen::MatrixXd pred(valid_data.X.rows(), valid_data.Y.cols());
        const ForwardTrace t = forward_batch(params, {valid_data.X, valid_data.Y}, no_masks);
        pred = t.a.back();
        const double vloss = loss_mse(pred, valid_data.Y);
        if (!std::isfinite(vloss))
            throw NumericError("validation loss non-finite at epoch " + std::to_string(epoch));
        report.valid_loss.push_back(vloss);
        if (vloss < best_valid) {
            best_valid = vloss;
            best = params;
            report.selected_epoch = epoch;
        }
    }
    return {std::move(best), std::move(report)};
}

std::vector<std::vector<std::string>> partition_entities(std::vector<std::string> ids, int folds) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (folds < 2) throw DataError("cross-validation needs at least 2 folds");
    std::vector<std::vector<std::string>> out(folds);
    for (std::size_t i = 0; i < ids.size(); ++i) out[i % folds].push_back(ids[i]);
    for (const auto& fold : out)
        if (fold.empty()) throw DataError("empty cross-validation fold");
    return out;
}

NetworkConfig cross_validate(const std::vector<NetworkConfig>& configs,
                             const std::vector<std::string>& entity_ids, int folds,
                             const FoldScorer& score, std::vector<double>* mean_rmse) {
    if (configs.empty()) throw DataError("cross_validate: no candidate configs");
    const auto partition = partition_entities(entity_ids, folds);

    std::vector<double> means(configs.size(), 0.0);
    for (std::size_t c = 0; c < configs.size(); ++c) {
        double total = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::string> train_ids;
            for (int other = 0; other < folds; ++other)
                if (other != f)
                    train_ids.insert(train_ids.end(), partition[other].begin(),
                                     partition[other].end());
            const double fold_rmse = score(configs[c], train_ids, partition[f]);
            if (!std::isfinite(fold_rmse))
                throw NumericError("non-finite CV score for candidate " + std::to_string(c));
            total += fold_rmse;
        }
        means[c] = total / folds;
    }
    if (mean_rmse) *mean_rmse = means;

    std::size_t best = 0;
    for (std::size_t c = 1; c < configs.size(); ++c) {
        if (means[c] < means[best] ||
            (means[c] == means[best] && configs[c].param_count() < configs[best].param_count()))
            best = c;
    }
    return configs[best];
}

namespace {

constexpr char kMagic[4] = {'S', 'T', 'N', 'P'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
}
Eigen::MatrixXd read_matrix(std::ifstream& in) {
    const auto rows = read_u32(in);
    const auto cols = read_u32(in);
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) {
            double v = 0;
            in.read(reinterpret_cast<char*>(&v), sizeof v);
            m(r, c) = v;
        }
    if (!in) throw DataError("truncated parameter container");
    return m;
}

}  // namespace

void save_params(const NetworkParams& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(kMagic, 4);
    write_u32(out, 1);  // version
    write_u32(out, 0);  // tag: point parameters
    write_u32(out, static_cast<std::uint32_t>(p.layers.size()));
    for (const auto& layer : p.layers) {
        write_matrix(out, layer.W);
        write_matrix(out, layer.b);
    }
}

NetworkParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("'" + path + "' is not a parameter container");
    if (read_u32(in) != 1) throw DataError("unsupported parameter container version");
    if (read_u32(in) != 0) throw DataError("'" + path + "' holds variational parameters");
    const auto n_layers = read_u32(in);
    NetworkParams p;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        NetworkParams::Layer layer;
        layer.W = read_matrix(in);
        layer.b = read_matrix(in).col(0);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

void save_report(const TrainReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    char buf[32];
    out << "#stresscast-train-report v1\n";
    out << "seed " << r.seed << "\n";
    out << "selected_epoch " << r.selected_epoch << "\n";
    out << "epoch\ttrain_loss\tvalid_loss\n";
    for (std::size_t e = 0; e < r.train_loss.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.train_loss[e]);
        out << e << '\t' << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", r.valid_loss[e]);
        out << '\t' << buf << '\n';
    }
}

}  // namespace stresscast::nn
