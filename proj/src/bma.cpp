#include "stresscast/bma.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "csv.hpp"
#include "stresscast/errors.hpp"
#include "stresscast/rng.hpp"

namespace stresscast::bma {

namespace {

std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace

RegressorMask RegressorMask::zeros(int k) {
    RegressorMask m;
    m.size = k;
    m.words.assign((k + 63) / 64, 0);
    return m;
}

bool RegressorMask::test(int i) const { return (words[i / 64] >> (i % 64)) & 1u; }

void RegressorMask::set(int i, bool v) {
    if (v)
        words[i / 64] |= std::uint64_t{1} << (i % 64);
    else
        words[i / 64] &= ~(std::uint64_t{1} << (i % 64));
}

void RegressorMask::flip(int i) { words[i / 64] ^= std::uint64_t{1} << (i % 64); }

int RegressorMask::count() const {
    int c = 0;
    for (auto w : words) c += std::popcount(w);
    return c;
}

std::string RegressorMask::to_bitstring() const {
    std::string s(size, '0');
    for (int i = 0; i < size; ++i)
        if (test(i)) s[i] = '1';
    return s;
}

RegressorMask RegressorMask::from_bitstring(const std::string& bits) {
    RegressorMask m = zeros(static_cast<int>(bits.size()));
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] == '1')
            m.set(static_cast<int>(i), true);
        else if (bits[i] != '0')
            throw DataError("bad mask bitstring '" + bits + "'");
    }
    return m;
}

std::size_t MaskHash::operator()(const RegressorMask& m) const {
    std::size_t h = 1469598103934665603ull;
    for (auto w : m.words) {
        h ^= w;
        h *= 1099511628211ull;
    }
    return h ^ static_cast<std::size_t>(m.size);
}

DesignMatrix DesignMatrix::build(Eigen::MatrixXd X, Eigen::VectorXd y,
                                 std::vector<std::string> names) {
    if (X.rows() != y.size()) throw DataError("design matrix rows do not match response length");
    DesignMatrix d;
    d.x_mean = X.colwise().mean();
    d.y_mean = y.mean();
    d.Xc = X.rowwise() - d.x_mean;
    d.yc = y.array() - d.y_mean;
    d.tss = d.yc.squaredNorm();
    if (names.empty()) {
        for (int j = 0; j < X.cols(); ++j) names.push_back("x" + std::to_string(j));
    } else if (static_cast<int>(names.size()) != X.cols()) {
        throw DataError("design matrix column/name count mismatch");
    }
    d.names = std::move(names);
    return d;
}

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const RegressorMask& model) {
    Eigen::MatrixXd sub(X.rows(), model.count());
    int c = 0;
    for (int j = 0; j < model.size; ++j)
        if (model.test(j)) sub.col(c++) = X.col(j);
    return sub;
}

std::vector<int> included_indices(const RegressorMask& model) {
    std::vector<int> idx;
    for (int j = 0; j < model.size; ++j)
        if (model.test(j)) idx.push_back(j);
    return idx;
}

void require_dof(long n, int k_active) {
    if (n <= k_active + 3)
        throw DataError("degrees-of-freedom guard: N <= k + 3 for a " + std::to_string(k_active) +
                        "-regressor model with N = " + std::to_string(n));
}

}  // namespace

OlsFit ols_fit(const Eigen::MatrixXd& x_sub, const Eigen::VectorXd& y) {
    OlsFit fit;
    const double y_mean = y.mean();
    const double tss = (y.array() - y_mean).matrix().squaredNorm();
    if (x_sub.cols() == 0) {
        fit.rss = tss;
        fit.r2 = 0.0;
        return fit;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_sub);
    if (qr.rank() < x_sub.cols()) {
        const auto perm = qr.colsPermutation().indices();
        std::string cols;
        for (int j = static_cast<int>(qr.rank()); j < x_sub.cols(); ++j) {
            if (!cols.empty()) cols += ", ";
            cols += std::to_string(perm[j]);
        }
        throw NumericError("singular design: dependent columns {" + cols + "}");
    }
    // Pivoted R has a decreasing diagonal; reject numerically unusable fits.
    const int last = static_cast<int>(x_sub.cols()) - 1;
    const double cond = std::abs(qr.matrixR()(0, 0)) / std::abs(qr.matrixR()(last, last));
    if (!(cond < 1e10))
        throw NumericError("singular design: condition ratio " + std::to_string(cond));
    fit.beta = qr.solve(y);
    fit.rss = (y - x_sub * fit.beta).squaredNorm();
    fit.rss = std::max(fit.rss, 0.0);
    fit.r2 = tss > 0 ? 1.0 - fit.rss / tss : 0.0;
    return fit;
}

OlsFit ols_fit(const DesignMatrix& d, const RegressorMask& model) {
    try {
        return ols_fit(select_columns(d.Xc, model), d.yc);
    } catch (const NumericError&) {
        // Re-map column indices to names for the caller.
        const auto idx = included_indices(model);
        std::string cols;
        Eigen::MatrixXd sub = select_columns(d.Xc, model);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
        const auto perm = qr.colsPermutation().indices();
        for (int j = static_cast<int>(qr.rank()); j < sub.cols(); ++j) {
            if (!cols.empty()) cols += ", ";
            cols += d.names[idx[perm[j]]];
        }
        throw NumericError("singular design: dependent columns {" + cols + "}");
    }
}

ZellnerPosterior zellner_posterior(const DesignMatrix& d, const RegressorMask& model, double g) {
    require_dof(d.n(), model.count());
    ZellnerPosterior out;
    if (model.count() == 0) return out;

    const Eigen::MatrixXd sub = select_columns(d.Xc, model);
    const OlsFit fit = ols_fit(d, model);
    const double f = g / (1.0 + g);
    out.mean = f * fit.beta;

    const Eigen::MatrixXd xtx = sub.transpose() * sub;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw NumericError("singular X'X in posterior covariance");
    const Eigen::MatrixXd xtx_inv =
        ldlt.solve(Eigen::MatrixXd::Identity(xtx.rows(), xtx.cols()));
    const double s2 = d.tss / static_cast<double>(d.n() - 3);
    out.cov = s2 * f * (1.0 - f * fit.r2) * xtx_inv;
    return out;
}

double log_marginal_likelihood(const DesignMatrix& d, const RegressorMask& model, double g,
                               bool* clamped) {
    require_dof(d.n(), model.count());
    if (clamped) *clamped = false;
    const int k = model.count();
    double r2 = 0.0;
    if (k > 0) {
        r2 = ols_fit(d, model).r2;
        if (r2 >= 1.0) {
            r2 = 1.0 - 1e-12;
            if (clamped) *clamped = true;
        }
    }
    const double f = g / (1.0 + g);
    const double n1 = static_cast<double>(d.n() - 1);
    return -0.5 * n1 * std::log1p(-f * r2) - 0.5 * k * std::log1p(g);
}

double model_prior_logp(const RegressorMask& model, ModelPriorKind kind, double expected_size) {
    if (kind == ModelPriorKind::Uniform) return 0.0;
    const int K = model.size;
    const double m = expected_size;
    if (!(m > 0.0 && m < static_cast<double>(K)))
        throw DataError("binomial-beta expected model size must lie in (0, K)");
    const double a = 1.0;
    const double b = (static_cast<double>(K) - m) / m;
    const int k = model.count();
    return log_beta(a + k, b + K - k) - log_beta(a, b);
}

double BmaOptions::resolve_g(long n, int k) const {
    if (g > 0) return g;
    if (bric) return std::max(static_cast<double>(n), static_cast<double>(k) * k);
    return static_cast<double>(n);  // UIP
}

double BmaOptions::resolve_expected_size(int k) const {
    return expected_model_size > 0 ? expected_model_size : 0.5 * k;
}

namespace {

// Streaming weighted aggregation over models with max-rescaled log weights
// (enumeration) or plain counts (MCMC).
struct Aggregator {
    explicit Aggregator(int k)
        : incl(Eigen::VectorXd::Zero(k)),
          m1(Eigen::VectorXd::Zero(k)),
          m2(Eigen::VectorXd::Zero(k)) {}

    double total = 0;
    Eigen::VectorXd incl, m1, m2;

    void add(const RegressorMask& mask, const ZellnerPosterior& post, double w) {
        total += w;
        int c = 0;
        for (int j = 0; j < mask.size; ++j) {
            if (!mask.test(j)) continue;
            incl[j] += w;
            m1[j] += w * post.mean[c];
            m2[j] += w * (post.cov(c, c) + post.mean[c] * post.mean[c]);
            ++c;
        }
    }

    void rescale(double factor) {
        total *= factor;
        incl *= factor;
        m1 *= factor;
        m2 *= factor;
    }

    void finish(PosteriorSummary& s) const {
        s.inclusion_prob = incl / total;
        s.coef_mean = m1 / total;
        s.coef_var = (m2 / total).array() - s.coef_mean.array().square();
        s.coef_var = s.coef_var.cwiseMax(0.0);
    }
};

PosteriorSummary make_summary_shell(const DesignMatrix& d, const BmaOptions& opt) {
    PosteriorSummary s;
    s.g = opt.resolve_g(d.n(), d.k());
    s.prior_kind = opt.prior_kind;
    s.prior_expected_size = opt.prior_kind == ModelPriorKind::BinomialBeta
                                ? opt.resolve_expected_size(d.k())
                                : 0.0;
    s.n = d.n();
    s.k = d.k();
    s.x_mean = d.x_mean;
    s.y_mean = d.y_mean;
    s.names = d.names;
    return s;
}

double log_post_weight(const DesignMatrix& d, const RegressorMask& mask, double g,
                       const BmaOptions& opt, double expected_size) {
    return log_marginal_likelihood(d, mask, g) +
           model_prior_logp(mask, opt.prior_kind, expected_size);
}

void sort_records(std::vector<ModelRecord>& records) {
    std::sort(records.begin(), records.end(), [](const ModelRecord& a, const ModelRecord& b) {
        if (a.pmp != b.pmp) return a.pmp > b.pmp;
        return a.mask.to_bitstring() < b.mask.to_bitstring();
    });
}

}  // namespace

PosteriorSummary enumerate_posterior(const DesignMatrix& d, const BmaOptions& opt) {
    const int K = d.k();
    if (K > opt.enumeration_cap)
        throw DataError("enumeration cap exceeded: K = " + std::to_string(K) + " > " +
                        std::to_string(opt.enumeration_cap));
    PosteriorSummary s = make_summary_shell(d, opt);
    const double expected_size = s.prior_expected_size;
    const std::uint64_t n_models = std::uint64_t{1} << K;

    Aggregator agg(K);
    double max_logw = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, std::uint64_t>> weights;  // (logw, mask bits)
    weights.reserve(n_models);

    for (std::uint64_t bits = 0; bits < n_models; ++bits) {
        RegressorMask mask = RegressorMask::zeros(K);
        mask.words[0] = bits;
        if (d.n() <= mask.count() + 3) continue;  // dof guard: zero weight
        double logw;
        ZellnerPosterior post;
        try {
            logw = log_post_weight(d, mask, s.g, opt, expected_size);
            post = zellner_posterior(d, mask, s.g);
        } catch (const NumericError&) {
            continue;  // singular model: zero mass
        }
        if (logw > max_logw) {
            if (std::isfinite(max_logw)) agg.rescale(std::exp(max_logw - logw));
            max_logw = logw;
        }
        agg.add(mask, post, std::exp(logw - max_logw));
        weights.emplace_back(logw, bits);
        ++s.models_evaluated;
    }
    if (weights.empty()) throw DataError("no model satisfies the degrees-of-freedom guard");

    double z = 0;
    for (const auto& [logw, bits] : weights) z += std::exp(logw - max_logw);

    agg.finish(s);

    // Retain the top models by weight with full posterior moments.
    const std::size_t keep = std::min<std::size_t>(weights.size(),
                                                   static_cast<std::size_t>(opt.retained_models));
    std::partial_sort(weights.begin(), weights.begin() + keep, weights.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    for (std::size_t i = 0; i < keep; ++i) {
        ModelRecord rec;
        rec.mask = RegressorMask::zeros(K);
        rec.mask.words[0] = weights[i].second;
        rec.log_ml = log_marginal_likelihood(d, rec.mask, s.g);
        rec.log_prior = model_prior_logp(rec.mask, opt.prior_kind, expected_size);
        rec.pmp = std::exp(weights[i].first - max_logw) / z;
        const auto post = zellner_posterior(d, rec.mask, s.g);
        rec.post_mean = post.mean;
        rec.post_cov = post.cov;
        s.models.push_back(std::move(rec));
    }
    sort_records(s.models);
    return s;
}

PosteriorSummary mcmc_birth_death(const DesignMatrix& d, const BmaOptions& opt) {
    if (!(opt.draws > opt.burnin && opt.burnin >= 0))
        throw DataError("mcmc requires draws > burnin >= 0");
    const int K = d.k();
    PosteriorSummary s = make_summary_shell(d, opt);
    const double expected_size = s.prior_expected_size;
    Rng rng(opt.seed);

    std::unordered_map<RegressorMask, double, MaskHash> logw_cache;
    auto logw_of = [&](const RegressorMask& mask) {
        auto it = logw_cache.find(mask);
        if (it != logw_cache.end()) return it->second;
        double v;
        try {
            v = log_post_weight(d, mask, s.g, opt, expected_size);
        } catch (const NumericError&) {
            v = -std::numeric_limits<double>::infinity();  // singular model: zero mass
        }
        logw_cache.emplace(mask, v);
        return v;
    };

    RegressorMask current = RegressorMask::zeros(K);
    double current_logw = logw_of(current);
    std::unordered_map<RegressorMask, long, MaskHash> visits;

    // One draw applies K single-flip proposals; the visit frequency of the
    // post-sweep state estimates the PMP. Sweeping keeps the 20000/10000
    // frequency estimates near the iid Monte Carlo error.
    for (long step = 1; step <= opt.draws; ++step) {
        for (int inner = 0; inner < K; ++inner) {
            const int j = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(K)));
            RegressorMask proposal = current;
            proposal.flip(j);
            const double u = uniform01(rng);
            if (d.n() <= proposal.count() + 3) continue;  // dof guard: auto-reject
            const double prop_logw = logw_of(proposal);
            if (std::log(u) < prop_logw - current_logw) {
                current = std::move(proposal);
                current_logw = prop_logw;
            }
        }
        if (step > opt.burnin) ++visits[current];
    }

    const double retained = static_cast<double>(opt.draws - opt.burnin);
    Aggregator agg(K);
    std::vector<std::pair<long, const RegressorMask*>> by_count;
    by_count.reserve(visits.size());
    for (const auto& [mask, count] : visits) {
        try {
            agg.add(mask, zellner_posterior(d, mask, s.g), static_cast<double>(count));
        } catch (const NumericError&) {
            continue;  // borderline-singular visit: no moment contribution
        }
        by_count.emplace_back(count, &mask);
    }
    s.models_evaluated = static_cast<long>(visits.size());
    agg.finish(s);

    std::sort(by_count.begin(), by_count.end(),
              [](const auto& a, const auto& b) {
                  if (a.first != b.first) return a.first > b.first;
                  return a.second->to_bitstring() < b.second->to_bitstring();
              });
    const std::size_t keep = std::min<std::size_t>(by_count.size(),
                                                   static_cast<std::size_t>(opt.retained_models));
    for (std::size_t i = 0; i < keep; ++i) {
        ModelRecord rec;
        rec.mask = *by_count[i].second;
        rec.log_ml = log_marginal_likelihood(d, rec.mask, s.g);
        rec.log_prior = model_prior_logp(rec.mask, opt.prior_kind, expected_size);
        rec.pmp = static_cast<double>(by_count[i].first) / retained;
        const auto post = zellner_posterior(d, rec.mask, s.g);
        rec.post_mean = post.mean;
        rec.post_cov = post.cov;
        s.models.push_back(std::move(rec));
    }
    sort_records(s.models);
    return s;
}

Prediction bma_predict(const PosteriorSummary& s, const Eigen::VectorXd& x_new) {
    if (x_new.size() != s.k)
        throw DataError("bma_predict: x dimension " + std::to_string(x_new.size()) +
                        " != K = " + std::to_string(s.k));
    const Eigen::VectorXd xc = x_new - s.x_mean.transpose();

    Prediction out;
    out.mean = s.y_mean + xc.dot(s.coef_mean);

    // Within/between decomposition over the retained models, renormalized to
    // their joint mass.
    double mass = 0, within = 0, between = 0, mean_retained = 0;
    std::vector<double> model_means(s.models.size());
    for (std::size_t i = 0; i < s.models.size(); ++i) {
        const auto& rec = s.models[i];
        Eigen::VectorXd xm(rec.mask.count());
        int c = 0;
        for (int j = 0; j < rec.mask.size; ++j)
            if (rec.mask.test(j)) xm[c++] = xc[j];
        model_means[i] = s.y_mean + (c > 0 ? xm.dot(rec.post_mean) : 0.0);
        if (c > 0) within += rec.pmp * xm.dot(rec.post_cov * xm);
        mean_retained += rec.pmp * model_means[i];
        mass += rec.pmp;
    }
    if (mass > 0) {
        mean_retained /= mass;
        for (std::size_t i = 0; i < s.models.size(); ++i) {
            const double d_mean = model_means[i] - mean_retained;
            between += s.models[i].pmp * d_mean * d_mean;
        }
        out.variance = within / mass + between / mass;
    }
    return out;
}

const std::vector<std::string>& satellite_target_names() {
    static const std::vector<std::string> kNames = {
        "g_dep", "g_loan", "g_asset", "g_easset", "cost_of_risk",
        "yea", "cfd", "nfia", "rw_density"};
    return kNames;
}

const std::vector<std::string>& yield_target_names() {
    static const std::vector<std::string> kNames = {"cost_of_risk", "yea", "cfd", "nfia"};
    return kNames;
}

namespace {

int target_index_of(const std::string& name) {
    const auto& names = target_names();
    for (int i = 0; i < kTargetCount; ++i)
        if (name == names[i]) return i;
    throw DataError("unknown target '" + name + "'");
}

// Outlier-clean each feature column inside each bank's time-ordered block.
Eigen::MatrixXd cleaned_design(const SupervisedPanel& panel, double mad_threshold) {
    const long n = static_cast<long>(panel.rows.size());
    Eigen::MatrixXd X(n, panel.feature_dim);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < panel.feature_dim; ++j) X(i, j) = panel.rows[i].x[j];

    long block_start = 0;
    for (long i = 1; i <= n; ++i) {
        if (i < n && panel.rows[i].bank_id == panel.rows[block_start].bank_id) continue;
        const long len = i - block_start;
        if (len >= 3) {
            std::vector<double> col(len);
            for (int j = 0; j < panel.feature_dim; ++j) {
                for (long r = 0; r < len; ++r) col[r] = X(block_start + r, j);
                const auto cleaned = clean_outliers(col, mad_threshold);
                for (long r = 0; r < len; ++r) X(block_start + r, j) = cleaned[r];
            }
        }
        block_start = i;
    }
    return X;
}

}  // namespace

SatelliteSet fit_satellites(const SupervisedPanel& panel, const BmaOptions& opt,
                            const std::vector<std::string>& targets) {
    if (panel.rows.empty()) throw DataError("fit_satellites: empty panel");
    const Eigen::MatrixXd X = cleaned_design(panel, opt.outlier_mad_threshold);
    const long n = X.rows();

    SatelliteSet out;
    for (const auto& target : targets) {
        const int t_idx = target_index_of(target);
        Eigen::VectorXd y(n);
        for (long i = 0; i < n; ++i) y[i] = panel.rows[i].y[t_idx];
        const DesignMatrix d = DesignMatrix::build(X, y, panel.feature_names);
        out.by_target.emplace(target, d.k() <= opt.enumeration_cap
                                          ? enumerate_posterior(d, opt)
                                          : mcmc_birth_death(d, opt));
    }
    return out;
}

void save_summary(const PosteriorSummary& s, const std::string& path) {
    std::ofstream outf(path);
    if (!outf) throw DataError("cannot write '" + path + "'");
    outf << "#stresscast-bma v1\n";
    outf << "g " << fmt_full(s.g) << "\n";
    outf << "prior " << (s.prior_kind == ModelPriorKind::Uniform ? "uniform" : "binomial-beta")
         << " " << fmt_full(s.prior_expected_size) << "\n";
    outf << "n " << s.n << "\nk " << s.k << "\n";
    outf << "y_mean " << fmt_full(s.y_mean) << "\n";
    outf << "models_evaluated " << s.models_evaluated << "\n";
    outf << "names";
    for (const auto& name : s.names) outf << ' ' << name;
    outf << "\n";
    auto write_vec = [&](const char* label, const Eigen::VectorXd& v) {
        outf << label;
        for (int i = 0; i < v.size(); ++i) outf << ' ' << fmt_full(v[i]);
        outf << "\n";
    };
    write_vec("x_mean", s.x_mean.transpose());
    write_vec("inclusion", s.inclusion_prob);
    write_vec("coef_mean", s.coef_mean);
    write_vec("coef_var", s.coef_var);
    outf << "models " << s.models.size() << "\n";
    for (const auto& rec : s.models) {
        outf << rec.mask.to_bitstring() << ' ' << fmt_full(rec.log_ml) << ' '
             << fmt_full(rec.log_prior) << ' ' << fmt_full(rec.pmp);
        for (int i = 0; i < rec.post_mean.size(); ++i) outf << ' ' << fmt_full(rec.post_mean[i]);
        for (int r = 0; r < rec.post_cov.rows(); ++r)
            for (int c = 0; c < rec.post_cov.cols(); ++c) outf << ' ' << fmt_full(rec.post_cov(r, c));
        outf << "\n";
    }
}

PosteriorSummary load_summary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "#stresscast-bma v1")
        throw DataError("'" + path + "' is not a posterior summary");

    PosteriorSummary s;
    auto next_fields = [&](const std::string& expect) {
        if (!std::getline(in, line)) throw DataError(path + ": truncated summary");
        auto fields = detail::split_line(line, ' ');
        if (fields.empty() || fields[0] != expect)
            throw DataError(path + ": expected '" + expect + "' line");
        return fields;
    };
    s.g = detail::parse_double(next_fields("g")[1], path);
    {
        const auto fields = next_fields("prior");
        s.prior_kind = fields[1] == "uniform" ? ModelPriorKind::Uniform : ModelPriorKind::BinomialBeta;
        s.prior_expected_size = detail::parse_double(fields[2], path);
    }
    s.n = std::stol(next_fields("n")[1]);
    s.k = std::stoi(next_fields("k")[1]);
    s.y_mean = detail::parse_double(next_fields("y_mean")[1], path);
    s.models_evaluated = std::stol(next_fields("models_evaluated")[1]);
    {
        const auto fields = next_fields("names");
        s.names.assign(fields.begin() + 1, fields.end());
    }
    auto read_vec = [&](const std::string& label) {
        const auto fields = next_fields(label);
        Eigen::VectorXd v(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i)
            v[static_cast<int>(i - 1)] = detail::parse_double(fields[i], path);
        return v;
    };
    s.x_mean = read_vec("x_mean").transpose();
    s.inclusion_prob = read_vec("inclusion");
    s.coef_mean = read_vec("coef_mean");
    s.coef_var = read_vec("coef_var");
    const long n_models = std::stol(next_fields("models")[1]);
    for (long m = 0; m < n_models; ++m) {
        if (!std::getline(in, line)) throw DataError(path + ": truncated model list");
        const auto fields = detail::split_line(line, ' ');
        ModelRecord rec;
        rec.mask = RegressorMask::from_bitstring(fields[0]);
        rec.log_ml = detail::parse_double(fields[1], path);
        rec.log_prior = detail::parse_double(fields[2], path);
        rec.pmp = detail::parse_double(fields[3], path);
        const int km = rec.mask.count();
        if (static_cast<int>(fields.size()) != 4 + km + km * km)
            throw DataError(path + ": model record field count mismatch");
        rec.post_mean.resize(km);
        for (int i = 0; i < km; ++i) rec.post_mean[i] = detail::parse_double(fields[4 + i], path);
        rec.post_cov.resize(km, km);
        for (int r = 0; r < km; ++r)
            for (int c = 0; c < km; ++c)
                rec.post_cov(r, c) = detail::parse_double(fields[4 + km + r * km + c], path);
        s.models.push_back(std::move(rec));
    }
    return s;
}

}  // namespace stresscast::bma
