// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "beamfix/csv.hpp"
#include "beamfix/error.hpp"
#include "beamfix/nn.hpp"
#include "beamfix/rng.hpp"
#include "test_util.hpp"

using namespace beamfix;
using namespace beamfix::nn;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * rng.uniform(-1.0, 1.0);
    }
    return m;
}

// Hand-rolled dense forward pass: explicit loops, no Eigen products.
std::vector<double> loop_forward(const MlpModel& m, std::vector<double> v) {
    const auto& layers = m.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& w = layers[l].weights;
        std::vector<double> out(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            double acc = layers[l].bias[r];
            for (Eigen::Index c = 0; c < w.cols(); ++c) acc += w(r, c) * v[static_cast<std::size_t>(c)];
            out[static_cast<std::size_t>(r)] = (l + 1 < layers.size()) ? std::max(acc, 0.0) : acc;
        }
        v = std::move(out);
    }
    return v;
}

struct LinearFixture {
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
};

LinearFixture linear_fixture(int n, std::uint64_t seed) {
    Rng rng(seed);
    LinearFixture f{Eigen::MatrixXd(1, n), Eigen::MatrixXd(1, n)};
    for (int i = 0; i < n; ++i) {
        f.x(0, i) = rng.uniform(-1.0, 1.0);
        f.y(0, i) = 2.0 * f.x(0, i);
    }
    return f;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveZero) {
    const auto m = MlpModel::zeros({3, 5, 2});
    Rng rng(1);
    for (int i = 0; i < 10; ++i) {
        EXPECT_EQ(m.forward(random_matrix(3, 1, rng).col(0)), Eigen::VectorXd::Zero(2));
    }
}

TEST(Forward, IdentityLayer) {
    Layer l{Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4)};
    const auto m = MlpModel::from_layers({l});
    Eigen::VectorXd v(4);
    v << 1.5, -2.0, 0.0, 3.25;
    EXPECT_EQ(m.forward(v), v);
}

TEST(Forward, MatchesLoopOracle) {
    const auto m = MlpModel::random({5, 7, 6, 3}, 99);
    Rng rng(3);
    const Eigen::MatrixXd xs = random_matrix(5, 20, rng, 2.0);
    const Eigen::MatrixXd batch = m.forward_batch(xs);
    for (Eigen::Index c = 0; c < xs.cols(); ++c) {
        const auto ref = loop_forward(m, {xs.col(c).data(), xs.col(c).data() + 5});
        const Eigen::VectorXd single = m.forward(xs.col(c));
        for (int r = 0; r < 3; ++r) {
            EXPECT_NEAR(single[r], ref[static_cast<std::size_t>(r)], 1e-12);
            EXPECT_NEAR(batch(r, c), ref[static_cast<std::size_t>(r)], 1e-12);
        }
    }
    EXPECT_THROW(m.forward(Eigen::VectorXd::Zero(4)), ValidationError);
}

TEST(Model, ParametersRoundTripAndCount) {
    auto m = MlpModel::random({3, 4, 2}, 5);
    EXPECT_EQ(m.parameter_count(), 3u * 4 + 4 + 4 * 2 + 2);
    const Eigen::VectorXd p = m.parameters();
    EXPECT_EQ(p[1], m.layers()[0].weights(1, 0));  // column-major
    auto z = MlpModel::zeros({3, 4, 2});
    z.set_parameters(p);
    EXPECT_EQ(z.parameters(), p);
    EXPECT_THROW(z.set_parameters(Eigen::VectorXd::Zero(3)), ValidationError);
    EXPECT_EQ(MlpModel::random({3, 4, 2}, 5).parameters(), p);
    for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_LE(std::abs(p[i]), 1.0);
}

TEST(Model, FromLayersRejectsMismatch) {
    Layer a{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4)};
    Layer b{Eigen::MatrixXd::Zero(2, 5), Eigen::VectorXd::Zero(2)};
    try {
        MlpModel::from_layers({a, b});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
}

TEST(MseLoss, Values) {
    Rng rng(2);
    const Eigen::MatrixXd p = random_matrix(3, 17, rng);
    EXPECT_EQ(mse_loss(p, p), 0.0);
    Eigen::MatrixXd a(1, 2), b(1, 2);
    a << 0, 0;
    b << 1, -1;
    EXPECT_DOUBLE_EQ(mse_loss(a, b), 1.0);
    const Eigen::MatrixXd t = random_matrix(3, 17, rng);
    double brute = 0.0;
    for (Eigen::Index c = 0; c < 17; ++c) {
        for (Eigen::Index r = 0; r < 3; ++r) brute += (p(r, c) - t(r, c)) * (p(r, c) - t(r, c));
    }
    brute /= 3.0 * 17.0;
    EXPECT_NEAR(mse_loss(p, t), brute, 1e-12);
    EXPECT_THROW(mse_loss(p, t.leftCols(3)), ValidationError);
}

TEST(Normalizer, RoundTripAndFloors) {
    Rng rng(7);
    Eigen::MatrixXd x = random_matrix(3, 50, rng, 100.0);
    x.row(2).setConstant(4.0);
    const Eigen::MatrixXd y = random_matrix(2, 50, rng, 1e-3).array() + 33.4;
    Eigen::VectorXd floor(2);
    floor << 1e-2, 1e-2;
    const auto n = Normalizer::fit(x, y, {}, floor);
    EXPECT_EQ(n.input_scale[2], 1.0);  // constant feature falls back to the floor
    EXPECT_EQ(n.target_scale[0], 1e-2);
    const Eigen::MatrixXd back = n.denormalize_targets(n.normalize_targets(y));
    for (Eigen::Index i = 0; i < y.size(); ++i) EXPECT_NEAR(back(i), y(i), 1e-12 * std::abs(y(i)));
    const auto id = Normalizer::identity(3, 2);
    EXPECT_EQ(id.normalize_inputs(x), x);
}

TEST(GradientCheck, SmallRandomModel) {
    const auto m = MlpModel::random({4, 8, 6, 3}, 17);  // 111 parameters
    ASSERT_LE(m.parameter_count(), 200u);
    Rng rng(5);
    const auto r = gradient_check(m, random_matrix(4, 6, rng), random_matrix(3, 6, rng));
    EXPECT_LT(r.max_relative_error, 1e-4);
    EXPECT_GT(r.parameters_checked, 90u);
    EXPECT_EQ(r.parameters_checked + r.parameters_skipped, m.parameter_count());
}

TEST(GradientCheck, LinearModelIsNearlyExact) {
    const auto m = MlpModel::random({5, 3}, 4);
    Rng rng(6);
    const auto r = gradient_check(m, random_matrix(5, 10, rng), random_matrix(3, 10, rng));
    EXPECT_LT(r.max_relative_error, 1e-7);
    EXPECT_EQ(r.parameters_skipped, 0u);
}

TEST(GradientCheck, ZeroModelZeroTargets) {
    const auto m = MlpModel::zeros({3, 4, 2});
    Rng rng(1);
    const Eigen::MatrixXd x = random_matrix(3, 5, rng);
    Eigen::VectorXd g;
    const double loss = loss_and_gradient(m, x, Eigen::MatrixXd::Zero(2, 5), g);
    EXPECT_EQ(loss, 0.0);
    EXPECT_EQ(g, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.parameter_count())));
    const auto r = gradient_check(m, x, Eigen::MatrixXd::Zero(2, 5));
    EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(GradientCheck, PipelineArchitecturesAtInit) {
    Rng rng(12);
    const auto txid = MlpModel::random({64, 64, 64, 2}, 1);
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(64, 8);
    for (int c = 0; c < 8; ++c) onehot(static_cast<Eigen::Index>(rng.below(64)), c) = 1.0;
    EXPECT_LT(gradient_check(txid, onehot, random_matrix(2, 8, rng)).max_relative_error, 1e-4);
    const auto den = MlpModel::random({2, 64, 64, 2}, 2);
    EXPECT_LT(gradient_check(den, random_matrix(2, 8, rng, 2.0), random_matrix(2, 8, rng)).max_relative_error,
              1e-4);
}

TEST(Train, LearnsLinearRelation) {
    const auto tr = linear_fixture(200, 1);
    const auto held = linear_fixture(50, 2);
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.learning_rate = 3e-3;
    const auto res = train(MlpModel::random({1, 1}, 3), tr.x, tr.y, cfg, Normalizer::fit(tr.x, tr.y));
    EXPECT_LT(mse_loss(res.model.predict_batch(held.x), held.y), 1e-4);
    EXPECT_NEAR(res.model.predict(Eigen::VectorXd::Constant(1, 0.3))[0], 0.6, 1e-6);
}

TEST(Train, LossNonIncreasingAtSmallLearningRate) {
    const auto tr = linear_fixture(200, 1);
    TrainConfig cfg;
    cfg.epochs = 300;
    cfg.learning_rate = 1e-3;
    for (const std::vector<int>& dims : {std::vector<int>{1, 1}, std::vector<int>{1, 16, 1}}) {
        const auto res = train(MlpModel::random(dims, 3), tr.x, tr.y, cfg, Normalizer::fit(tr.x, tr.y));
        ASSERT_EQ(res.loss_history.size(), 300u);
        // 5% band absorbs mini-batch noise.
        for (std::size_t i = 1; i < res.loss_history.size(); ++i) {
            EXPECT_LE(res.loss_history[i], res.loss_history[i - 1] * 1.05) << "epoch " << i;
        }
        EXPECT_LT(res.loss_history.back(), res.loss_history.front());
    }
}

TEST(Train, ZeroEpochsKeepsInitialization) {
    const auto tr = linear_fixture(20, 1);
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto init = MlpModel::random({1, 4, 1}, 3);
    const auto res = train(init, tr.x, tr.y, cfg, Normalizer::identity(1, 1));
    EXPECT_EQ(res.model.parameters(), init.parameters());
    EXPECT_TRUE(res.loss_history.empty());
}

TEST(Train, DeterministicAndSeedSensitive) {
    const auto tr = linear_fixture(64, 9);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    const auto init = MlpModel::random({1, 8, 1}, 3);
    const auto a = train(init, tr.x, tr.y, cfg, Normalizer::identity(1, 1));
    const auto b = train(init, tr.x, tr.y, cfg, Normalizer::identity(1, 1));
    EXPECT_TRUE(a.model == b.model);
    EXPECT_EQ(a.loss_history, b.loss_history);
    cfg.seed = 8;
    EXPECT_FALSE(train(init, tr.x, tr.y, cfg, Normalizer::identity(1, 1)).model == a.model);
}

TEST(Train, DivergenceIsReported) {
    const auto tr = linear_fixture(64, 9);
    Eigen::MatrixXd y = tr.y * 1e300;
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.learning_rate = 10.0;
    EXPECT_THROW(train(MlpModel::random({1, 8, 1}, 3), tr.x, y, cfg, Normalizer::identity(1, 1)),
                 RuntimeFailure);
}

TEST(Train, ValidatesConfigAndShapes) {
    const auto tr = linear_fixture(10, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    const auto init = MlpModel::random({1, 4, 1}, 3);
    EXPECT_THROW(train(init, tr.x, tr.y, cfg, Normalizer::identity(1, 1)), ValidationError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    EXPECT_THROW(train(init, tr.x, tr.y, cfg, Normalizer::identity(1, 1)), ValidationError);
    cfg = TrainConfig{};
    EXPECT_THROW(train(init, tr.x, tr.y.leftCols(5), cfg, Normalizer::identity(1, 1)), ValidationError);
}

TEST(Weights, SaveLoadRoundTrip) {
    const auto dir = fixture::scratch_dir("nn_weights");
    auto m = MlpModel::random({6, 9, 4}, 21);
    Rng rng(4);
    m.normalizer = Normalizer::fit(random_matrix(6, 30, rng), random_matrix(4, 30, rng));
    save_weights(m, dir / "m.json");
    const auto back = load_weights(dir / "m.json");
    EXPECT_TRUE(back == m);
    const Eigen::MatrixXd xs = random_matrix(6, 100, rng);
    EXPECT_EQ(back.predict_batch(xs), m.predict_batch(xs));
}

TEST(Weights, TruncatedFileRejected) {
    const auto dir = fixture::scratch_dir("nn_truncated");
    const std::string text = to_json(MlpModel::random({3, 4, 2}, 1));
    csv::write_file(dir / "t.json", text.substr(0, text.size() / 2));
    EXPECT_THROW(load_weights(dir / "t.json"), ValidationError);
    EXPECT_THROW(load_weights(dir / "missing.json"), std::exception);
}

TEST(Weights, InconsistentDimsNameTheLayer) {
    auto j = nlohmann::json::parse(to_json(MlpModel::random({3, 4, 2}, 1)));
    j["layers"][1]["weights"].erase(0);
    try {
        from_json(j.dump());
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
    auto k = nlohmann::json::parse(to_json(MlpModel::random({3, 4, 2}, 1)));
    k["layer_dims"] = {3, 5, 2};
    EXPECT_THROW(from_json(k.dump()), ValidationError);
}

TEST(LossHistory, CsvLayout) {
    const std::vector<double> h{0.5, 0.25};
    EXPECT_EQ(format_loss_history_csv(h), "epoch,loss\n1,0.5\n2,0.25\n");
}
