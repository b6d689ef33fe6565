#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "stresscast/errors.hpp"
#include "stresscast/network.hpp"
#include "stresscast/rng.hpp"

using namespace stresscast;
using namespace stresscast::nn;

namespace {

// Corpus convention: relative error with a unit floor in the denominator.
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

NetworkConfig small_config(std::vector<int> widths, double dropout = 0.0, std::uint64_t seed = 1) {
    NetworkConfig cfg;
    cfg.layer_widths = std::move(widths);
    cfg.dropout_rate = dropout;
    cfg.seed = seed;
    return cfg;
}

// True when every hidden pre-activation keeps a safe margin from the ReLU
// kink, so central differences see a locally smooth objective.
bool away_from_kinks(const NetworkParams& p, const Batch& batch, const DropoutMasks& masks,
                     double margin) {
    Eigen::MatrixXd a = masks.input.size() > 0 ? batch.X.cwiseProduct(masks.input) : batch.X;
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
        Eigen::MatrixXd z = (a * p.layers[l].W).rowwise() + p.layers[l].b.transpose();
        if (z.cwiseAbs().minCoeff() < margin) return false;
        a = z.cwiseMax(0.0);
        if (l < masks.per_layer.size()) a = a.cwiseProduct(masks.per_layer[l]);
    }
    return true;
}

// Finite-difference gradient of loss_with_masks w.r.t. every parameter.
double max_gradcheck_error(const NetworkConfig& cfg, NetworkParams params, const Batch& batch,
                           const DropoutMasks& masks) {
    const Gradients grads = backward(cfg, params, batch, masks);
    const double h = 1e-5;
    double worst = 0;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto check = [&](double& slot, double analytic) {
            const double orig = slot;
            slot = orig + h;
            const double up = loss_with_masks(cfg, params, batch, masks);
            slot = orig - h;
            const double down = loss_with_masks(cfg, params, batch, masks);
            slot = orig;
            worst = std::max(worst, rel_err((up - down) / (2 * h), analytic));
        };
        for (int r = 0; r < params.layers[l].W.rows(); ++r)
            for (int c = 0; c < params.layers[l].W.cols(); ++c)
                check(params.layers[l].W(r, c), grads.layers[l].W(r, c));
        for (int i = 0; i < params.layers[l].b.size(); ++i)
            check(params.layers[l].b[i], grads.layers[l].b[i]);
    }
    return worst;
}

}  // namespace

TEST_CASE("dense_forward") {
    SUBCASE("identity weights pass the input through") {
        const Eigen::MatrixXd W = Eigen::MatrixXd::Identity(3, 3);
        const Eigen::VectorXd b = Eigen::VectorXd::Zero(3);
        Eigen::VectorXd x(3);
        x << 1.5, -2.0, 0.25;
        CHECK(dense_forward(W, b, x) == x);
    }
    SUBCASE("zero input returns the bias") {
        const Eigen::MatrixXd W = Eigen::MatrixXd::Constant(2, 4, 3.0);
        Eigen::VectorXd b(4);
        b << 1, 2, 3, 4;
        CHECK(dense_forward(W, b, Eigen::VectorXd::Zero(2)) == b);
    }
    SUBCASE("forced arithmetic") {
        Eigen::MatrixXd W(2, 2);
        W << 1, 2, 3, 4;
        Eigen::VectorXd x(2);
        x << 1, 1;
        const Eigen::VectorXd y = dense_forward(W, Eigen::VectorXd::Zero(2), x);
        CHECK(y[0] == 4.0);
        CHECK(y[1] == 6.0);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(
            dense_forward(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)),
            DataError);
    }
}

TEST_CASE("relu") {
    Eigen::VectorXd v(3);
    v << -2.0, 3.0, 0.0;
    const Eigen::VectorXd out = relu(v);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 3.0);
    CHECK(out[2] == 0.0);
}

TEST_CASE("dropout_apply") {
    Rng rng(1);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(8);
    SUBCASE("rate 0 is the identity in both modes") {
        CHECK(dropout_apply(ones, 0.0, rng, Mode::Train) == ones);
        CHECK(dropout_apply(ones, 0.0, rng, Mode::Infer) == ones);
    }
    SUBCASE("infer mode is the identity at any rate") {
        CHECK(dropout_apply(ones, 0.7, rng, Mode::Infer) == ones);
    }
    SUBCASE("inverted scaling keeps the expectation: 1e5 draws within [0.98, 1.02]") {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(8);
        const int draws = 100000;
        for (int i = 0; i < draws; ++i)
            mean += dropout_apply(ones, 0.5, rng, Mode::Train);
        mean /= draws;
        for (int j = 0; j < mean.size(); ++j) {
            CHECK(mean[j] > 0.98);
            CHECK(mean[j] < 1.02);
        }
    }
}

TEST_CASE("forward") {
    SUBCASE("all-zero one-hidden-layer network emits the zero 9-vector") {
        const auto cfg = small_config({4, 6, 9});
        NetworkParams p;
        p.layers.push_back({Eigen::MatrixXd::Zero(4, 6), Eigen::VectorXd::Zero(6)});
        p.layers.push_back({Eigen::MatrixXd::Zero(6, 9), Eigen::VectorXd::Zero(9)});
        const Eigen::VectorXd out = forward(cfg, p, Eigen::VectorXd::Ones(4), Mode::Infer);
        CHECK(out.size() == 9);
        CHECK(out.isZero(0.0));
    }
    SUBCASE("dropout 0: train equals infer bitwise") {
        const auto cfg = small_config({5, 8, 9});
        Rng rng(3);
        const NetworkParams p = NetworkParams::init(cfg.layer_widths, rng);
        Eigen::VectorXd x(5);
        for (int i = 0; i < 5; ++i) x[i] = normal(rng);
        Rng mode_rng(9);
        CHECK(forward(cfg, p, x, Mode::Train, &mode_rng) == forward(cfg, p, x, Mode::Infer));
    }
    SUBCASE("matches a straight-line reimplementation to 1e-12") {
        const auto cfg = small_config({6, 7, 5, 9});
        Rng rng(17);
        const NetworkParams p = NetworkParams::init(cfg.layer_widths, rng);
        Eigen::VectorXd x(6);
        for (int i = 0; i < 6; ++i) x[i] = normal(rng);

        // Independent loop-by-loop forward pass.
        std::vector<double> acts(x.data(), x.data() + x.size());
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            std::vector<double> next(p.layers[l].W.cols());
            for (int k = 0; k < p.layers[l].W.cols(); ++k) {
                double total = p.layers[l].b[k];
                for (int d = 0; d < p.layers[l].W.rows(); ++d)
                    total += p.layers[l].W(d, k) * acts[d];
                next[k] = (l + 1 < p.layers.size() && total < 0) ? 0.0 : total;
            }
            acts = std::move(next);
        }
        const Eigen::VectorXd out = forward(cfg, p, x, Mode::Infer);
        REQUIRE(out.size() == 9);
        for (int k = 0; k < 9; ++k) CHECK(out[k] == doctest::Approx(acts[k]).epsilon(1e-12));
    }
}

TEST_CASE("loss_mse") {
    Eigen::MatrixXd a(2, 3), b(2, 3);
    a.setConstant(1.0);
    b.setConstant(1.0);
    CHECK(loss_mse(a, b) == 0.0);
    b.setConstant(1.0 - 0.3);
    CHECK(loss_mse(a, b) == doctest::Approx(0.09).epsilon(1e-14));

    Eigen::MatrixXd pred(2, 1), target(2, 1);
    pred << 0, 0;
    target << 1, 3;
    CHECK(loss_mse(pred, target) == doctest::Approx(5.0));  // (1 + 9) / 2
}

TEST_CASE("backward") {
    SUBCASE("zero-error batch has all-zero gradients") {
        const auto cfg = small_config({3, 4, 2});
        NetworkParams p;
        p.layers.push_back({Eigen::MatrixXd::Zero(3, 4), Eigen::VectorXd::Zero(4)});
        p.layers.push_back({Eigen::MatrixXd::Zero(4, 2), Eigen::VectorXd::Zero(2)});
        Batch batch;
        batch.X = Eigen::MatrixXd::Random(5, 3);
        batch.Y = Eigen::MatrixXd::Zero(5, 2);  // outputs are exactly zero
        const Gradients g = backward(cfg, p, batch, {});
        for (const auto& layer : g.layers) {
            CHECK(layer.W.isZero(0.0));
            CHECK(layer.b.isZero(0.0));
        }
    }
    SUBCASE("single linear layer, single sample: gradient is 2*(pred-target)*x") {
        NetworkParams p;
        Rng rng(5);
        p.layers.push_back({Eigen::MatrixXd::Zero(3, 1), Eigen::VectorXd::Zero(1)});
        for (int r = 0; r < 3; ++r) p.layers[0].W(r, 0) = normal(rng);
        Batch batch;
        batch.X.resize(1, 3);
        batch.X << 0.5, -1.0, 2.0;
        batch.Y.resize(1, 1);
        batch.Y << 0.7;
        const double pred = (batch.X * p.layers[0].W)(0, 0);
        const Gradients g = backward(small_config({3, 1}), p, batch, {});
        for (int r = 0; r < 3; ++r)
            CHECK(g.layers[0].W(r, 0) ==
                  doctest::Approx(2.0 * (pred - 0.7) * batch.X(0, r)).epsilon(1e-12));
    }
    SUBCASE("matches central finite differences on seeded 2-hidden-layer configs") {
        Rng rng(11);
        int checked = 0;
        while (checked < 8) {
            auto cfg = small_config({5, 9, 7, 4}, checked % 2 ? 0.3 : 0.0);
            cfg.input_dropout = checked % 4 == 1;
            NetworkParams p = NetworkParams::init(cfg.layer_widths, rng);
            Batch batch;
            batch.X.resize(6, 5);
            batch.Y.resize(6, 4);
            for (int i = 0; i < 6; ++i) {
                for (int j = 0; j < 5; ++j) batch.X(i, j) = normal(rng);
                for (int j = 0; j < 4; ++j) batch.Y(i, j) = normal(rng);
            }
            const DropoutMasks masks = draw_dropout_masks(cfg, 6, rng);
            // Resample draws that park a pre-activation inside the
            // finite-difference window of the ReLU kink.
            if (!away_from_kinks(p, batch, masks, 1e-3)) continue;
            CHECK(max_gradcheck_error(cfg, p, batch, masks) < 1e-5);
            ++checked;
        }
    }
}

TEST_CASE("permutation equivariance of hidden units") {
    // Dyadic-grid weights and inputs keep every product and sum exactly
    // representable, so the bit-identity claim is checked in exact arithmetic.
    const auto cfg = small_config({4, 6, 9});
    Rng rng(13);
    auto dyadic = [&rng]() {
        return static_cast<double>(static_cast<int>(uniform_below(rng, 129)) - 64) / 64.0;
    };
    NetworkParams p;
    p.layers.push_back({Eigen::MatrixXd::Zero(4, 6), Eigen::VectorXd::Zero(6)});
    p.layers.push_back({Eigen::MatrixXd::Zero(6, 9), Eigen::VectorXd::Zero(9)});
    for (auto& layer : p.layers) {
        for (int r = 0; r < layer.W.rows(); ++r)
            for (int c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = dyadic();
        for (int i = 0; i < layer.b.size(); ++i) layer.b[i] = dyadic();
    }
    Eigen::VectorXd x(4);
    for (int i = 0; i < 4; ++i) x[i] = dyadic();
    const Eigen::VectorXd base = forward(cfg, p, x, Mode::Infer);

    // Swap hidden units 1 and 4 consistently across both weight matrices.
    NetworkParams q = p;
    q.layers[0].W.col(1).swap(q.layers[0].W.col(4));
    std::swap(q.layers[0].b[1], q.layers[0].b[4]);
    q.layers[1].W.row(1).swap(q.layers[1].W.row(4));
    const Eigen::VectorXd permuted = forward(cfg, q, x, Mode::Infer);
    CHECK(base == permuted);  // bit-identical
}

TEST_CASE("full-batch GD on a single linear layer never increases the loss") {
    Rng rng(19);
    NetworkParams p;
    p.layers.push_back({Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(2)});
    Batch batch;
    batch.X.resize(30, 3);
    batch.Y.resize(30, 2);
    Eigen::MatrixXd truth(3, 2);
    truth << 1, -2, 0.5, 0.3, -1, 2;
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 3; ++j) batch.X(i, j) = normal(rng);
    batch.Y = batch.X * truth;

    const auto cfg = small_config({3, 2});
    double prev = loss_with_masks(cfg, p, batch, {});
    for (int step = 0; step < 200; ++step) {
        const Gradients g = backward(cfg, p, batch, {});
        p.layers[0].W -= 0.05 * g.layers[0].W;
        p.layers[0].b -= 0.05 * g.layers[0].b;
        const double now = loss_with_masks(cfg, p, batch, {});
        CHECK(now <= prev + 1e-12);
        prev = now;
    }
}

TEST_CASE("train") {
    // Synthetic linear 9-output target.
    Rng rng(23);
    Batch train_b, valid_b;
    Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(6, 9);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 9; ++c) truth(r, c) = 0.5 * normal(rng);
    auto fill = [&](Batch& b, int n) {
        b.X.resize(n, 6);
        b.Y.resize(n, 9);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 6; ++j) b.X(i, j) = normal(rng);
        b.Y = b.X * truth;
    };
    fill(train_b, 200);
    fill(valid_b, 50);

    NetworkConfig cfg = small_config({6, 16, 9});
    cfg.epochs = 200;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 32;

    SUBCASE("fits a linear target to under 10% of its variance") {
        auto [params, report] = train(cfg, train_b, valid_b);
        const double var = (train_b.Y.array() - train_b.Y.mean()).square().mean();
        CHECK(report.train_loss.back() < 0.10 * var);
        CHECK(report.selected_epoch >= 0);
        // The selected epoch is the argmin of the validation curve.
        double best = report.valid_loss[report.selected_epoch];
        for (double v : report.valid_loss) CHECK(best <= v);
    }
    SUBCASE("same seed twice gives identical parameters") {
        auto [p1, r1] = train(cfg, train_b, valid_b);
        auto [p2, r2] = train(cfg, train_b, valid_b);
        for (std::size_t l = 0; l < p1.layers.size(); ++l) {
            CHECK(p1.layers[l].W == p2.layers[l].W);
            CHECK(p1.layers[l].b == p2.layers[l].b);
        }
        CHECK(r1.selected_epoch == r2.selected_epoch);
    }
    SUBCASE("learning rate 0 leaves the initialization untouched") {
        NetworkConfig frozen = cfg;
        frozen.learning_rate = 0.0;
        frozen.epochs = 3;
        auto [params, report] = train(frozen, train_b, valid_b);
        Rng init_rng(frozen.seed);
        const NetworkParams init = NetworkParams::init(frozen.layer_widths, init_rng);
        for (std::size_t l = 0; l < params.layers.size(); ++l)
            CHECK(params.layers[l].W == init.layers[l].W);
    }
    SUBCASE("config contract violations are rejected") {
        NetworkConfig bad = cfg;
        bad.layer_widths = {6, 9};  // no hidden layer
        CHECK_THROWS_AS(train(bad, train_b, valid_b), DataError);
        bad = cfg;
        bad.layer_widths = {6, 16, 8};  // wrong output width
        CHECK_THROWS_AS(train(bad, train_b, valid_b), DataError);
        bad = cfg;
        bad.dropout_rate = 1.0;
        CHECK_THROWS_AS(train(bad, train_b, valid_b), DataError);
    }
}

TEST_CASE("cross_validate") {
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) ids.push_back("B" + std::to_string(i));

    SUBCASE("a single config is returned unconditionally") {
        const auto cfg = small_config({4, 8, 9});
        const auto best = cross_validate({cfg}, ids, 5,
                                         [](const NetworkConfig&, const auto&, const auto&) {
                                             return 1.0;
                                         });
        CHECK(best.layer_widths == cfg.layer_widths);
    }
    SUBCASE("identical scores fall back to fewer parameters, then config order") {
        auto big = small_config({4, 16, 9}, 0.0, 1);
        auto small_net = small_config({4, 8, 9}, 0.0, 2);
        const auto flat = [](const NetworkConfig&, const auto&, const auto&) { return 2.5; };
        CHECK(cross_validate({big, small_net}, ids, 4, flat).layer_widths ==
              small_net.layer_widths);
        //

        auto twin_a = small_config({4, 8, 9}, 0.0, 11);
        auto twin_b = small_config({4, 8, 9}, 0.0, 22);
        CHECK(cross_validate({twin_a, twin_b}, ids, 4, flat).seed == 11);
    }
    SUBCASE("fold partition covers every entity exactly once") {
        const auto partition = partition_entities(ids, 5);
        std::size_t total = 0;
        for (const auto& fold : partition) total += fold.size();
        CHECK(total == ids.size());
        CHECK_THROWS_AS(partition_entities({"a", "b"}, 5), DataError);
    }
    SUBCASE("scorer fold sizes are train/valid complements") {
        cross_validate({small_config({4, 8, 9})}, ids, 5,
                       [&](const NetworkConfig&, const std::vector<std::string>& train,
                           const std::vector<std::string>& valid) {
                           CHECK(train.size() + valid.size() == ids.size());
                           CHECK(!valid.empty());
                           return 1.0;
                       });
    }
}

TEST_CASE("parameter container round-trip") {
    Rng rng(29);
    const NetworkParams p = NetworkParams::init({5, 12, 9}, rng);
    const auto dir = std::filesystem::temp_directory_path() / "stresscast_nn_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "net.bin").string();
    save_params(p, path);
    const NetworkParams loaded = load_params(path);
    REQUIRE(loaded.layers.size() == p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        CHECK(loaded.layers[l].W == p.layers[l].W);
        CHECK(loaded.layers[l].b == p.layers[l].b);
    }
}
