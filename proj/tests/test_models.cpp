#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "propwatch/error.hpp"
#include "propwatch/models.hpp"
#include "propwatch/random.hpp"

using namespace propwatch;
namespace fs = std::filesystem;

namespace {

double accuracy(const std::vector<double>& p, const Labels& y) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < y.size(); ++i) ok += (p[i] >= 0.5) == (y[i] == 1);
    return static_cast<double>(ok) / static_cast<double>(y.size());
}

void blobs(Rows& X, Labels& y, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        int c = static_cast<int>(i % 2);
        double cx = c ? 2.0 : -2.0;
        X.push_back({cx + 0.5 * rng.normal(), cx + 0.5 * rng.normal()});
        y.push_back(c);
    }
}

MLPModel random_mlp(Rng& rng) {
    MLPParams p;
    p.h1 = 1 + rng.below(8);
    p.h2 = 1 + rng.below(6);
    p.seed = rng.next();
    auto m = init_mlp(1 + rng.below(6), p);
    // nonzero biases so the bias path is exercised too
    for (auto& b : m.b)
        for (Eigen::Index k = 0; k < b.size(); ++k) b(k) = rng.uniform(-0.5, 0.5);
    return m;
}

fs::path temp_file(const std::string& name) {
    auto dir = fs::temp_directory_path() / "propwatch_test_models";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("gbt separates a 1-d threshold exactly") {
    Rows X;
    Labels y;
    for (int i = 0; i < 100; ++i) {
        double x = i < 50 ? i * 0.1 : 5.1 + (i - 50) * 0.1;
        X.push_back({x});
        y.push_back(x > 5 ? 1 : 0);
    }
    auto m = train_gbt(X, y);
    CHECK(accuracy(m.predict(X), y) == 1.0);
}

TEST_CASE("gbt on a constant feature predicts the base rate") {
    Rows X(40, std::vector<double>{3.0, 3.0});
    Labels y(40, 0);
    for (int i = 0; i < 10; ++i) y[static_cast<std::size_t>(i)] = 1;
    auto m = train_gbt(X, y);
    for (const auto& t : m.trees) CHECK(t.nodes.size() == 1);
    CHECK(m.predict(std::vector<double>{3.0, 3.0}) == doctest::Approx(0.25).epsilon(1e-6));
    CHECK(m.predict(std::vector<double>{-100.0, 7.0}) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("gbt with zero trees returns sigmoid of the base score") {
    Rows X{{0.0}, {1.0}, {2.0}, {3.0}};
    Labels y{0, 1, 1, 1};
    GBTParams p;
    p.trees = 0;
    auto m = train_gbt(X, y, p);
    double expect = 1.0 / (1.0 + std::exp(-static_cast<double>(m.base_score)));
    CHECK(m.predict(std::vector<double>{1.5}) == expect);
    CHECK(expect == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("gbt learns xor") {
    Rng rng(7);
    Rows X;
    Labels y;
    for (int i = 0; i < 400; ++i) {
        double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
        X.push_back({a, b});
        y.push_back((a > 0) != (b > 0) ? 1 : 0);
    }
    auto m = train_gbt(X, y);
    CHECK(accuracy(m.predict(X), y) >= 0.95);
}

TEST_CASE("gbt training loss never increases across rounds") {
    Rng rng(2024);
    for (int d = 0; d < 20; ++d) {
        std::size_t n = 30 + rng.below(150), f = 1 + rng.below(5);
        Rows X;
        Labels y;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row;
            for (std::size_t k = 0; k < f; ++k) row.push_back(std::round(rng.normal() * 4) / 4);
            double s = row[0] + (f > 1 ? row[1] * row[1] : 0.0) + rng.normal();
            X.push_back(row);
            y.push_back(s > 0.3 ? 1 : 0);
        }
        y[0] = 0;
        y[1] = 1;
        GBTParams p;
        p.trees = 60;
        p.depth = 1 + static_cast<int>(rng.below(5));
        p.learning_rate = rng.uniform(0.05, 1.5);
        p.min_child = 1 + rng.below(6);
        p.lambda = rng.uniform(0.0, 2.0);
        p.subsample = d % 2 ? 0.6 : 1.0;
        p.seed = rng.next();
        auto m = train_gbt(X, y, p);
        REQUIRE(m.train_loss.size() == 61);
        for (std::size_t r = 1; r < m.train_loss.size(); ++r) CHECK(m.train_loss[r] <= m.train_loss[r - 1]);
        for (const auto& t : m.trees)
            for (const auto& node : t.nodes) {
                CHECK(std::isfinite(node.value));
                if (node.feature >= 0) CHECK(static_cast<std::size_t>(node.feature) < f);
            }
    }
}

TEST_CASE("gbt rejects bad input") {
    CHECK_THROWS_AS(train_gbt({{1.0}, {2.0}}, {1, 1}), Error);
    CHECK_THROWS_AS(train_gbt({{1.0}, {2.0}}, {1}), Error);
    CHECK_THROWS_AS(train_gbt({{1.0}, {2.0, 3.0}}, {0, 1}), Error);
    auto m = train_gbt({{1.0}, {2.0}}, {0, 1});
    CHECK_THROWS_AS(m.predict(std::vector<double>{1.0, 2.0}), Error);
}

TEST_CASE("mlp fits separable blobs and is deterministic") {
    Rows X;
    Labels y;
    blobs(X, y, 200, 11);
    MLPParams p;
    p.seed = 5;
    auto a = train_mlp(X, y, p);
    auto b = train_mlp(X, y, p);
    CHECK(accuracy(a.predict(X), y) >= 0.99);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
    CHECK(a.parameters() == b.parameters());
    CHECK(a.layer_sizes() == std::vector<std::size_t>{2, 256, 64, 1});
}

TEST_CASE("mlp rejects single class and shape mismatch") {
    CHECK_THROWS_AS(train_mlp({{1.0, 2.0}, {2.0, 1.0}}, {0, 0}), Error);
    CHECK_THROWS_AS(train_mlp({{1.0, 2.0, 3.0}, {2.0, 1.0, 0.0}}, {0, 1}, {}, InputKind::pair), Error);
    auto m = init_mlp(3, MLPParams{});
    CHECK_THROWS_AS(m.predict(std::vector<double>{1.0}), Error);
}

TEST_CASE("mlp hand-computed forward pass") {
    MLPModel m;
    Eigen::MatrixXd w1(2, 2), w2(2, 2), w3(1, 2);
    w1 << 1, 0, 0, 1;
    w2 << 1, -1, 0, 2;
    w3 << 2, 1;
    Eigen::VectorXd b1(2), b2(2), b3(1);
    b1 << 0.5, -1;
    b2 << 0, -3;
    b3 << 0.25;
    m.W = {w1, w2, w3};
    m.b = {b1, b2, b3};
    // z1 = (1.5, 1), z2 = (0.5, -1) -> relu (0.5, 0), z3 = 1.25
    CHECK(m.logit(std::vector<double>{1.0, 2.0}) == doctest::Approx(1.25));
    CHECK(m.predict(std::vector<double>{1.0, 2.0}) == doctest::Approx(0.7772998611746911));
    auto batch = m.predict(Rows{{1.0, 2.0}, {-1.0, -1.0}, {1.0, 2.0}});
    REQUIRE(batch.size() == 3);
    CHECK(batch[0] == batch[2]);
    CHECK(batch[1] == doctest::Approx(1.0 / (1.0 + std::exp(-0.25))));
}

TEST_CASE("gradient check over random small architectures") {
    Rng rng(99);
    double worst = 0.0;
    std::size_t checked = 0;
    for (int draw = 0; draw < 100; ++draw) {
        auto m = random_mlp(rng);
        std::vector<double> x;
        for (std::size_t k = 0; k < m.input_size(); ++k) x.push_back(rng.normal());
        auto r = grad_check(m, x, static_cast<int>(rng.below(2)));
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
    }
    CHECK(checked > 1000);
    CHECK(worst < 1e-4);
}

TEST_CASE("gradient check after ten training steps") {
    Rows X;
    Labels y;
    blobs(X, y, 40, 3);
    MLPParams p;
    p.h1 = 12;
    p.h2 = 6;
    p.batch = 4;
    p.epochs = 1;  // 40 / 4 = 10 Adam steps
    p.learning_rate = 0.01;
    auto m = train_mlp(X, y, p);
    for (std::size_t i = 0; i < 5; ++i) CHECK(grad_check(m, X[i], y[i]).max_rel_error < 1e-3);
}

TEST_CASE("zero-weight model has closed-form gradient") {
    MLPParams p;
    p.h1 = 3;
    p.h2 = 2;
    auto m = init_mlp(4, p);
    m.set_parameters(std::vector<double>(m.parameter_count(), 0.0));
    std::vector<double> x{0.3, -1.0, 2.0, 0.5};
    for (int y : {0, 1}) {
        auto g = mlp_gradient(m, x, y);
        // only the output bias sees a signal: dL/db3 = sigmoid(0) - y
        for (std::size_t k = 0; k + 1 < g.size(); ++k) CHECK(g[k] == 0.0);
        CHECK(g.back() == doctest::Approx(0.5 - y));
    }
}

TEST_CASE("pair model training ignores row order") {
    Rng rng(17);
    Rows X;
    Labels y;
    for (int i = 0; i < 60; ++i) {
        std::vector<double> row;
        for (int k = 0; k < 6; ++k) row.push_back(rng.normal());
        y.push_back(row[0] + row[3] > 0 ? 1 : 0);
        X.push_back(row);
    }
    MLPParams p;
    p.h1 = 8;
    p.h2 = 4;
    p.epochs = 5;
    p.batch = 16;
    p.seed = 3;
    auto a = train_mlp(X, y, p, InputKind::pair, 3);
    std::vector<std::size_t> perm(X.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    Rows Xp;
    Labels yp;
    for (auto i : perm) {
        Xp.push_back(X[i]);
        yp.push_back(y[i]);
    }
    auto b = train_mlp(Xp, yp, p, InputKind::pair, 3);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.embedding_dim == 3);
}

TEST_CASE("ensemble rule") {
    CHECK(ensemble_predict(0.9, 0.9));
    CHECK_FALSE(ensemble_predict(0.2, 0.3));
    CHECK(ensemble_predict(0.5, 0.5));
    CHECK_FALSE(ensemble_predict(0.5, 0.4999));
    CHECK(ensemble_predict(0.1, 0.6, EnsembleMode::any));
    CHECK_FALSE(ensemble_predict(0.4, 0.4, EnsembleMode::any));
    // binarized inputs: majority of two with ties to positive
    for (int a : {0, 1})
        for (int b : {0, 1}) CHECK(ensemble_predict(a, b) == (a + b >= 1));
}

TEST_CASE("verdict is threshold-monotone") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        double s = rng.uniform(), t1 = rng.uniform(), t2 = t1 + rng.uniform(0, 1 - t1);
        auto lo = make_verdict(s, t1, "m"), hi = make_verdict(s, t2, "m");
        CHECK(lo.label == (s >= t1 ? Label::propaganda : Label::user));
        if (lo.label == Label::user) CHECK(hi.label == Label::user);
    }
}

TEST_CASE("pair vector layout") {
    std::vector<float> a{1, 2, 3}, b{4, 5, 6};
    CHECK(build_pair_vector(std::span<const float>(a), b) == std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(build_pair_vector(std::nullopt, b) == std::vector<double>{0, 0, 0, 4, 5, 6});
    std::vector<float> short_one{1};
    CHECK_THROWS_AS(build_pair_vector(std::span<const float>(short_one), b), Error);
}

TEST_CASE("gbt save and load keeps predictions") {
    Rng rng(4);
    Rows X;
    Labels y;
    for (int i = 0; i < 120; ++i) {
        double a = rng.normal(), b = rng.normal();
        X.push_back({a, b, rng.normal()});
        y.push_back(a * b > 0 ? 1 : 0);
    }
    GBTParams p;
    p.trees = 30;
    auto m = train_gbt(X, y, p, "schema-A");
    auto path = temp_file("gbt.json");
    save_model(m, path);
    auto back = load_gbt(path, "schema-A");
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x{rng.normal(), rng.normal(), rng.normal()};
        CHECK(back.predict(x) == m.predict(x));
    }
    CHECK(serialize_model(back) == serialize_model(m));
    CHECK(model_id(back) == model_id(m));
    try {
        load_gbt(path, "schema-B");
        FAIL("expected a schema mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::format);
    }
    CHECK_THROWS_AS(load_mlp(path, InputKind::reply), Error);
}

TEST_CASE("mlp save and load is bitwise") {
    Rows X;
    Labels y;
    blobs(X, y, 60, 8);
    MLPParams p;
    p.h1 = 16;
    p.h2 = 8;
    p.epochs = 3;
    auto m = train_mlp(X, y, p);
    m.provenance = "hash3gram-2";
    auto path = temp_file("mlp.json");
    save_model(m, path);
    auto back = load_mlp(path, InputKind::reply, 2);
    CHECK(back.parameters() == m.parameters());
    CHECK(back.provenance == "hash3gram-2");
    CHECK_THROWS_AS(load_mlp(path, InputKind::pair), Error);
    CHECK_THROWS_AS(load_mlp(path, InputKind::reply, 3), Error);
    CHECK_THROWS_AS(parse_model("{\"kind\":\"svm\",\"version\":1}"), Error);
    CHECK_THROWS_AS(parse_model("not json"), Error);
}
