#include "stresscast/bayes_network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "stresscast/errors.hpp"

namespace stresscast::bayesnn {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

Eigen::MatrixXd VariationalLayer::w_sigma() const {
    return w_rho.unaryExpr([](double r) { return softplus(r); });
}

Eigen::VectorXd VariationalLayer::b_sigma() const {
    return b_rho.unaryExpr([](double r) { return softplus(r); });
}

VariationalParams VariationalParams::init(const std::vector<int>& widths, double prior_scale,
                                          double sigma_init, Rng& rng) {
    // Means reuse the point-net initializer so the two share a stream.
    const nn::NetworkParams point = nn::NetworkParams::init(widths, rng);
    const double rho0 = softplus_inv(sigma_init);

    VariationalParams vp;
    for (const auto& layer : point.layers) {
        VariationalLayer v;
        v.w_mu = layer.W;
        v.w_rho = Eigen::MatrixXd::Constant(layer.W.rows(), layer.W.cols(), rho0);
        v.b_mu = layer.b;
        v.b_rho = Eigen::VectorXd::Constant(layer.b.size(), rho0);
        v.prior_scale = prior_scale;
        vp.layers.push_back(std::move(v));
    }
    vp.log_noise_var = 0.0;
    return vp;
}

nn::NetworkParams draw_noise(const VariationalParams& vp, Rng& rng) {
    nn::NetworkParams eps;
    for (const auto& layer : vp.layers) {
        nn::NetworkParams::Layer e;
        e.W.resize(layer.w_mu.rows(), layer.w_mu.cols());
        for (int r = 0; r < e.W.rows(); ++r)
            for (int c = 0; c < e.W.cols(); ++c) e.W(r, c) = normal(rng);
        e.b.resize(layer.b_mu.size());
        for (int i = 0; i < e.b.size(); ++i) e.b[i] = normal(rng);
        eps.layers.push_back(std::move(e));
    }
    return eps;
}

nn::NetworkParams zero_noise(const VariationalParams& vp) {
    nn::NetworkParams eps;
    for (const auto& layer : vp.layers)
        eps.layers.push_back({Eigen::MatrixXd::Zero(layer.w_mu.rows(), layer.w_mu.cols()),
                              Eigen::VectorXd::Zero(layer.b_mu.size())});
    return eps;
}

nn::NetworkParams sample_weights(const VariationalParams& vp, const nn::NetworkParams& eps) {
    nn::NetworkParams out;
    for (std::size_t l = 0; l < vp.layers.size(); ++l) {
        nn::NetworkParams::Layer w;
        w.W = vp.layers[l].w_mu + vp.layers[l].w_sigma().cwiseProduct(eps.layers[l].W);
        w.b = vp.layers[l].b_mu + vp.layers[l].b_sigma().cwiseProduct(eps.layers[l].b);
        out.layers.push_back(std::move(w));
    }
    return out;
}

nn::NetworkParams sample_weights(const VariationalParams& vp, Rng& rng) {
    return sample_weights(vp, draw_noise(vp, rng));
}

nn::NetworkParams posterior_mean(const VariationalParams& vp) {
    return sample_weights(vp, zero_noise(vp));
}

namespace {

double kl_entry(double mu, double sigma, double prior) {
    return std::log(prior / sigma) + (sigma * sigma + mu * mu) / (2.0 * prior * prior) - 0.5;
}

}  // namespace

double kl_gaussian(const VariationalLayer& layer) {
    if (!(layer.prior_scale > 0)) throw DataError("prior scale must be positive");
    double kl = 0;
    const Eigen::MatrixXd ws = layer.w_sigma();
    for (int r = 0; r < layer.w_mu.rows(); ++r)
        for (int c = 0; c < layer.w_mu.cols(); ++c)
            kl += kl_entry(layer.w_mu(r, c), ws(r, c), layer.prior_scale);
    const Eigen::VectorXd bs = layer.b_sigma();
    for (int i = 0; i < layer.b_mu.size(); ++i)
        kl += kl_entry(layer.b_mu[i], bs[i], layer.prior_scale);
    return kl;
}

double kl_total(const VariationalParams& vp) {
    double kl = 0;
    for (const auto& layer : vp.layers) kl += kl_gaussian(layer);
    return kl;
}

Eigen::VectorXd lwta_winner_probs(const Eigen::VectorXd& block) {
    const double m = block.maxCoeff();
    Eigen::VectorXd p = (block.array() - m).exp();
    return p / p.sum();
}

namespace {

// Soft winner mask for one block: softmax(h/tau + gumbel). The tempered
// logits dominate the noise as tau -> 0, so selection converges to argmax(h).
Eigen::VectorXd soft_mask(const Eigen::VectorXd& h, double tau, const double* gumbel_row) {
    Eigen::VectorXd logits = h / tau;
    if (gumbel_row)
        for (int i = 0; i < logits.size(); ++i) logits[i] += gumbel_row[i];
    const double m = logits.maxCoeff();
    Eigen::VectorXd p = (logits.array() - m).exp();
    return p / p.sum();
}

Eigen::VectorXd hard_mask(const Eigen::VectorXd& h) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(h.size());
    int winner = 0;
    for (int i = 1; i < h.size(); ++i)
        if (h[i] > h[winner]) winner = i;  // lowest-index tie-break
    m[winner] = 1.0;
    return m;
}

}  // namespace

Eigen::VectorXd lwta_forward(const Eigen::VectorXd& pre, int block_size, double temperature,
                             Rng* rng, nn::Mode mode) {
    if (block_size < 2 || pre.size() % block_size != 0)
        throw DataError("LWTA width is not a multiple of the block size");
    Eigen::VectorXd out(pre.size());
    for (int start = 0; start < pre.size(); start += block_size) {
        const Eigen::VectorXd h = pre.segment(start, block_size);
        Eigen::VectorXd mask;
        if (mode == nn::Mode::Infer) {
            mask = hard_mask(h);
        } else {
            if (!(temperature > 0)) throw DataError("train-mode LWTA needs a positive temperature");
            Eigen::VectorXd g(block_size);
            for (int i = 0; i < block_size; ++i) g[i] = rng ? gumbel(*rng) : 0.0;
            mask = soft_mask(h, temperature, g.data());
        }
        out.segment(start, block_size) = h.cwiseProduct(mask);
    }
    return out;
}

LwtaNoise draw_lwta_noise(const nn::NetworkConfig& cfg, int n_samples, Rng& rng) {
    LwtaNoise noise;
    for (std::size_t l = 1; l + 1 < cfg.layer_widths.size(); ++l) {
        Eigen::MatrixXd g(n_samples, cfg.layer_widths[l]);
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) g(i, j) = gumbel(rng);
        noise.per_layer.push_back(std::move(g));
    }
    return noise;
}

namespace {

struct BayesTrace {
    std::vector<Eigen::MatrixXd> z;      // pre-activations
    std::vector<Eigen::MatrixXd> a;      // post-activations; a[0] = input
    std::vector<Eigen::MatrixXd> masks;  // LWTA soft masks per hidden layer
};

BayesTrace forward_bayes(const nn::NetworkConfig& cfg, const nn::NetworkParams& w,
                         const nn::Batch& batch, double temperature, const LwtaNoise* noise) {
    BayesTrace t;
    t.a.push_back(batch.X);
    const std::size_t n_layers = w.layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        Eigen::MatrixXd z = (t.a.back() * w.layers[l].W).rowwise() + w.layers[l].b.transpose();
        if (l + 1 == n_layers) {
            t.a.push_back(z);
            t.z.push_back(std::move(z));
            continue;
        }
        if (cfg.activation == nn::Activation::Relu) {
            t.a.push_back(z.cwiseMax(0.0));
        } else {
            const int bs = cfg.lwta_block_size;
            Eigen::MatrixXd mask(z.rows(), z.cols());
            Eigen::MatrixXd a(z.rows(), z.cols());
            for (int i = 0; i < z.rows(); ++i) {
                for (int start = 0; start < z.cols(); start += bs) {
                    const Eigen::VectorXd h = z.row(i).segment(start, bs).transpose();
                    const double* g = (noise && l < noise->per_layer.size())
                                          ? noise->per_layer[l].row(i).data() + start
                                          : nullptr;
                    mask.row(i).segment(start, bs) = soft_mask(h, temperature, g).transpose();
                }
            }
            a = z.cwiseProduct(mask);
            t.masks.push_back(std::move(mask));
            t.a.push_back(std::move(a));
        }
        t.z.push_back(std::move(z));
    }
    return t;
}

// Gaussian NLL summed over the batch and outputs.
double gaussian_nll(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& y, double log_v) {
    const double v = std::exp(log_v);
    const double rss = (pred - y).squaredNorm();
    const double elements = static_cast<double>(pred.rows() * pred.cols());
    return rss / (2.0 * v) + 0.5 * elements * (kLog2Pi + log_v);
}

struct LikelihoodGrads {
    nn::Gradients weights;   // dNLL/dW, dNLL/db at the sampled weights
    double log_noise_var = 0;  // dNLL/dlog_v
    double nll = 0;
};

LikelihoodGrads nll_backward(const nn::NetworkConfig& cfg, const nn::NetworkParams& w,
                             const nn::Batch& batch, double log_v, double temperature,
                             const LwtaNoise* noise) {
    const BayesTrace t = forward_bayes(cfg, w, batch, temperature, noise);
    const std::size_t n_layers = w.layers.size();
    const double v = std::exp(log_v);
    const Eigen::MatrixXd resid = t.a.back() - batch.Y;

    LikelihoodGrads out;
    out.nll = gaussian_nll(t.a.back(), batch.Y, log_v);
    const double elements = static_cast<double>(resid.rows() * resid.cols());
    out.log_noise_var = -resid.squaredNorm() / (2.0 * v) + 0.5 * elements;
    out.weights.layers.resize(n_layers);

    Eigen::MatrixXd dz = resid / v;
    for (std::size_t l = n_layers; l-- > 0;) {
        out.weights.layers[l].W = t.a[l].transpose() * dz;
        out.weights.layers[l].b = dz.colwise().sum();
        if (!out.weights.layers[l].W.allFinite())
            throw NumericError("non-finite gradient in layer " + std::to_string(l));
        if (l == 0) break;
        Eigen::MatrixXd da = dz * w.layers[l].W.transpose();
        const Eigen::MatrixXd& z = t.z[l - 1];
        if (cfg.activation == nn::Activation::Relu) {
            dz = da.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
        } else {
            // out = h .* m, m = softmax(h/tau + g):
            // dh_j = da_j m_j + (m_j/tau)(c_j - sum_i c_i m_i), c_j = da_j h_j.
            const Eigen::MatrixXd& m = t.masks[l - 1];
            const int bs = cfg.lwta_block_size;
            dz.resize(da.rows(), da.cols());
            for (int i = 0; i < da.rows(); ++i) {
                for (int start = 0; start < da.cols(); start += bs) {
                    double s = 0;
                    for (int j = 0; j < bs; ++j)
                        s += da(i, start + j) * z(i, start + j) * m(i, start + j);
                    for (int j = 0; j < bs; ++j) {
                        const double c = da(i, start + j) * z(i, start + j);
                        dz(i, start + j) = da(i, start + j) * m(i, start + j) +
                                           m(i, start + j) / temperature * (c - s);
                    }
                }
            }
        }
    }
    return out;
}

struct KlGrads {
    std::vector<VariationalLayer> layers;  // d(KL)/dmu, d(KL)/drho in mu/rho slots
};

KlGrads kl_backward(const VariationalParams& vp) {
    KlGrads out;
    for (const auto& layer : vp.layers) {
        VariationalLayer g;
        const double p2 = layer.prior_scale * layer.prior_scale;
        g.w_mu = layer.w_mu / p2;
        g.b_mu = layer.b_mu / p2;
        const Eigen::MatrixXd ws = layer.w_sigma();
        const Eigen::VectorXd bs = layer.b_sigma();
        // dKL/dsigma = -1/sigma + sigma/p2, chained through softplus.
        g.w_rho = (ws.array() / p2 - ws.array().inverse()).matrix().cwiseProduct(
            layer.w_rho.unaryExpr([](double r) { return 1.0 / (1.0 + std::exp(-r)); }));
        g.b_rho = (bs.array() / p2 - bs.array().inverse()).matrix().cwiseProduct(
            layer.b_rho.unaryExpr([](double r) { return 1.0 / (1.0 + std::exp(-r)); }));
        out.layers.push_back(std::move(g));
    }
    return out;
}

}  // namespace

ElboTerms elbo(const nn::NetworkConfig& cfg, const VariationalParams& vp, const nn::Batch& batch,
               long n_total, const nn::NetworkParams& eps, double temperature,
               const LwtaNoise* noise) {
    if (batch.X.rows() > n_total) throw DataError("elbo: batch larger than n_total");
    const nn::NetworkParams w = sample_weights(vp, eps);
    const BayesTrace t = forward_bayes(cfg, w, batch, temperature, noise);
    ElboTerms terms;
    terms.nll = gaussian_nll(t.a.back(), batch.Y, vp.log_noise_var);
    terms.kl = kl_total(vp);
    terms.elbo = -terms.nll - static_cast<double>(batch.X.rows()) / n_total * terms.kl;
    if (!std::isfinite(terms.elbo)) throw NumericError("non-finite ELBO");
    return terms;
}

VariationalGradients elbo_backward(const nn::NetworkConfig& cfg, const VariationalParams& vp,
                                   const nn::Batch& batch, long n_total,
                                   const nn::NetworkParams& eps, double temperature,
                                   const LwtaNoise* noise, ElboTerms* terms) {
    const nn::NetworkParams w = sample_weights(vp, eps);
    const LikelihoodGrads lik =
        nll_backward(cfg, w, batch, vp.log_noise_var, temperature, noise);
    const KlGrads kl = kl_backward(vp);
    const double kl_weight = static_cast<double>(batch.X.rows()) / n_total;

    if (terms) {
        terms->nll = lik.nll;
        terms->kl = kl_total(vp);
        terms->elbo = -terms->nll - kl_weight * terms->kl;
    }

    VariationalGradients out;
    out.log_noise_var = lik.log_noise_var;
    for (std::size_t l = 0; l < vp.layers.size(); ++l) {
        VariationalLayer g;
        const auto& layer = vp.layers[l];
        const auto& dW = lik.weights.layers[l].W;
        const auto& db = lik.weights.layers[l].b;
        auto sig = [](double r) { return 1.0 / (1.0 + std::exp(-r)); };
        // dW/dmu = 1, dW/drho = eps * sigmoid(rho).
        g.w_mu = dW + kl_weight * kl.layers[l].w_mu;
        g.b_mu = db + kl_weight * kl.layers[l].b_mu;
        g.w_rho = dW.cwiseProduct(eps.layers[l].W).cwiseProduct(layer.w_rho.unaryExpr(sig)) +
                  kl_weight * kl.layers[l].w_rho;
        g.b_rho = db.cwiseProduct(eps.layers[l].b).cwiseProduct(layer.b_rho.unaryExpr(sig)) +
                  kl_weight * kl.layers[l].b_rho;
        out.layers.push_back(std::move(g));
    }
    return out;
}

Eigen::VectorXd forward_at(const nn::NetworkConfig& cfg, const nn::NetworkParams& weights,
                           const Eigen::VectorXd& x) {
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        a = nn::dense_forward(weights.layers[l].W, weights.layers[l].b, a);
        if (l + 1 < weights.layers.size()) {
            if (cfg.activation == nn::Activation::Relu)
                a = nn::relu(std::move(a));
            else
                a = lwta_forward(a, cfg.lwta_block_size, 1.0, nullptr, nn::Mode::Infer);
        }
    }
    return a;
}

std::pair<VariationalParams, ElboReport> train_bayesian(const nn::NetworkConfig& cfg,
                                                        const nn::Batch& train_data,
                                                        const nn::Batch& valid_data,
                                                        const BayesTrainOptions& opt) {
    cfg.check();
    if (train_data.X.rows() == 0 || valid_data.X.rows() == 0)
        throw DataError("train_bayesian: empty panel");

    Rng rng(cfg.seed);  // init + batch shuffles, aligned with nn::train
    Rng eps_rng = derive_stream(cfg.seed, 1);
    Rng lwta_rng = derive_stream(cfg.seed, 2);
    VariationalParams vp =
        VariationalParams::init(cfg.layer_widths, opt.prior_scale, opt.sigma_init, rng);

    ElboReport report;
    report.seed = cfg.seed;
    const long n = train_data.X.rows();
    const double out_width = static_cast<double>(train_data.Y.cols());
    std::vector<long> order(n);
    std::iota(order.begin(), order.end(), 0);

    VariationalParams best = vp;
    double best_valid = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double frac = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 1.0;
        const double tau =
            opt.temperature_start + frac * (opt.temperature_end - opt.temperature_start);
        shuffle(order, rng);
        ElboTerms epoch_terms;

        for (long start = 0; start < n; start += cfg.batch_size) {
            const long len = std::min<long>(cfg.batch_size, n - start);
            nn::Batch batch;
            batch.X.resize(len, train_data.X.cols());
            batch.Y.resize(len, train_data.Y.cols());
            for (long i = 0; i < len; ++i) {
                batch.X.row(i) = train_data.X.row(order[start + i]);
                batch.Y.row(i) = train_data.Y.row(order[start + i]);
            }
            const nn::NetworkParams eps = draw_noise(vp, eps_rng);
            const LwtaNoise noise = cfg.activation == nn::Activation::Lwta
                                        ? draw_lwta_noise(cfg, static_cast<int>(len), lwta_rng)
                                        : LwtaNoise{};
            const nn::NetworkParams w = sample_weights(vp, eps);
            const LikelihoodGrads lik =
                nll_backward(cfg, w, batch, vp.log_noise_var, tau, &noise);
            const KlGrads kl = kl_backward(vp);
            const double kl_now = kl_total(vp);
            const double kl_weight = static_cast<double>(len) / n;

            if (!std::isfinite(lik.nll))
                throw NumericError("ELBO training diverged at epoch " + std::to_string(epoch));
            epoch_terms.nll += lik.nll;
            epoch_terms.kl += kl_weight * kl_now;

            // Weight steps are noise-scale-free: likelihood gradients carry a
            // 1/sigma_y^2 factor that is cancelled here (the per-element MSE
            // gradient), with the KL pull scaled to match. log_noise_var
            // follows its raw per-element gradient.
            const double v = std::exp(vp.log_noise_var);
            const double denom = static_cast<double>(len) * out_width;
            const double w_lik = 2.0 * v / denom;
            const double w_kl = 2.0 * v * kl_weight / denom;
            auto sig = [](double r) { return 1.0 / (1.0 + std::exp(-r)); };
            for (std::size_t l = 0; l < vp.layers.size(); ++l) {
                auto& layer = vp.layers[l];
                const auto& dW = lik.weights.layers[l].W;
                const auto& db = lik.weights.layers[l].b;
                layer.w_mu -= cfg.learning_rate * (w_lik * dW + w_kl * kl.layers[l].w_mu);
                layer.b_mu -= cfg.learning_rate * (w_lik * db + w_kl * kl.layers[l].b_mu);
                layer.w_rho -= cfg.learning_rate *
                               (w_lik * dW.cwiseProduct(eps.layers[l].W)
                                            .cwiseProduct(layer.w_rho.unaryExpr(sig)) +
                                w_kl * kl.layers[l].w_rho);
                layer.b_rho -= cfg.learning_rate *
                               (w_lik * db.cwiseProduct(eps.layers[l].b)
                                            .cwiseProduct(layer.b_rho.unaryExpr(sig)) +
                                w_kl * kl.layers[l].b_rho);
            }
            vp.log_noise_var -= cfg.learning_rate * opt.noise_lr_scale *
                                (lik.log_noise_var / denom);
            vp.log_noise_var = std::max(vp.log_noise_var, opt.log_noise_floor);
        }
        epoch_terms.elbo = -epoch_terms.nll - epoch_terms.kl;
        report.per_epoch.push_back(epoch_terms);

        // Validation MSE at the posterior mean (argmax LWTA).
        const nn::NetworkParams mean_w = posterior_mean(vp);
        double vloss = 0;
        for (int i = 0; i < valid_data.X.rows(); ++i) {
            const Eigen::VectorXd pred = forward_at(cfg, mean_w, valid_data.X.row(i).transpose());
            vloss += (pred - valid_data.Y.row(i).transpose()).squaredNorm();
        }
        vloss /= static_cast<double>(valid_data.X.rows() * valid_data.Y.cols());
        if (!std::isfinite(vloss))
            throw NumericError("validation loss non-finite at epoch " + std::to_string(epoch));
        report.valid_loss.push_back(vloss);
        if (vloss < best_valid) {
            best_valid = vloss;
            best = vp;
            report.selected_epoch = epoch;
        }
    }
    return {std::move(best), std::move(report)};
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
void write_double(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
double read_double(std::ifstream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
}  // namespace

void save_variational(const VariationalParams& vp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(kMagic, 4);
    write_u32(out, 1);  // version
    write_u32(out, 1);  // tag: variational
    write_u32(out, static_cast<std::uint32_t>(vp.layers.size()));
    write_double(out, vp.log_noise_var);
    for (const auto& layer : vp.layers) {
        write_double(out, layer.prior_scale);
        write_matrix(out, layer.w_mu);
        write_matrix(out, layer.w_rho);
        write_matrix(out, layer.b_mu);
        write_matrix(out, layer.b_rho);
    }
}

void save_elbo_report(const ElboReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    char buf[32];
    auto fmt = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "#stresscast-elbo-report v1\n";
    out << "seed " << report.seed << "\n";
    out << "selected_epoch " << report.selected_epoch << "\n";
    out << "epoch\tnll\tkl\telbo\tvalid_loss\n";
    for (std::size_t e = 0; e < report.per_epoch.size(); ++e) {
        const auto& t = report.per_epoch[e];
        out << e << '\t' << fmt(t.nll) << '\t' << fmt(t.kl) << '\t' << fmt(t.elbo) << '\t'
            << fmt(report.valid_loss[e]) << '\n';
    }
}

VariationalParams load_variational(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path + "' is not a parameter container");
    if (read_u32(in) != 1) throw DataError("unsupported parameter container version");
    if (read_u32(in) != 1) throw DataError("'" + path + "' holds point parameters");
    const auto n_layers = read_u32(in);
    VariationalParams vp;
    vp.log_noise_var = read_double(in);
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        VariationalLayer layer;
        layer.prior_scale = read_double(in);
        layer.w_mu = read_matrix(in);
        layer.w_rho = read_matrix(in);
        layer.b_mu = read_matrix(in).col(0);
        layer.b_rho = read_matrix(in).col(0);
        vp.layers.push_back(std::move(layer));
    }
    return vp;
}

}  // namespace stresscast::bayesnn
