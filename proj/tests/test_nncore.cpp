#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rarecast/adam.hpp"
#include "rarecast/checkpoint.hpp"
#include "rarecast/gradcheck.hpp"
#include "rarecast/nn.hpp"
#include "rarecast/rng.hpp"

using namespace rarecast;

namespace {

std::vector<double> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::vector<double> dummy;
    return dummy;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("logistic and leaky relu basics") {
    CHECK(logistic(0.0) == doctest::Approx(0.5));
    CHECK(leaky_relu(-1.0, 0.01) == doctest::Approx(-0.01));
    CHECK(leaky_relu(2.0, 0.01) == doctest::Approx(2.0));
}

TEST_CASE("softmax sums to one and logistic stays in (0,1)") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> logits(5), probs(5);
        for (auto& v : logits) v = rng.uniform(-10, 10);
        softmax(logits, probs);
        double sum = 0.0;
        for (double p : probs) sum += p;
        CHECK(std::abs(sum - 1.0) < 1e-12);
        const double s = logistic(rng.uniform(-30, 30));
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }
}

TEST_CASE("loss closed forms") {
    // uniform logits over 3 classes
    std::vector<double> logits = {0.3, 0.3, 0.3};
    CHECK(cross_entropy(logits, 1, 1.0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    // zero logits, all-ones bits
    std::vector<double> z = {0.0, 0.0};
    std::vector<int> bits = {1, 1};
    CHECK(bce_multilabel(z, bits, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // mse of identical vectors
    std::vector<double> a = {1.0, -2.0, 3.0};
    CHECK(mse(a, a) == 0.0);
    // weight scales linearly
    CHECK(cross_entropy(logits, 0, 2.5) ==
          doctest::Approx(2.5 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("affine forward and zero-weight case") {
    Affine aff;
    aff.resize(2, 3);
    std::vector<double> x = {1.0, 2.0, 3.0};
    std::vector<double> y(2);
    aff.b[0] = -1.0;
    aff.b[1] = 4.0;
    aff.forward(x.data(), y.data());
    CHECK(y[0] == doctest::Approx(-1.0));
    CHECK(y[1] == doctest::Approx(4.0));
}

TEST_CASE("mlp with zero weights returns output bias") {
    Mlp2 mlp;
    mlp.resize(2, 4, 3);
    mlp.l2.b[0] = 0.7;
    mlp.l2.b[1] = -0.2;
    std::vector<double> x = {0.1, -0.5, 2.0};
    std::vector<double> y(2);
    mlp.forward(x.data(), y.data());
    CHECK(y[0] == doctest::Approx(0.7));
    CHECK(y[1] == doctest::Approx(-0.2));
}

TEST_CASE("lstm zero parameters give zero hidden state") {
    LstmCell cell;
    cell.resize(4, 3);
    std::vector<double> x = {1.0, -2.0, 0.5};
    std::vector<double> h0(4, 0.0), c0(4, 0.0), h(4), c(4), gates(16);
    cell.step(x.data(), h0.data(), c0.data(), h.data(), c.data(), gates.data());
    for (double v : h) CHECK(v == doctest::Approx(0.0));
    for (int j = 0; j < 4; ++j) CHECK(gates[12 + j] == doctest::Approx(0.5));  // o gate
}

TEST_CASE("lstm saturated forget gate keeps cell state") {
    Rng rng(3);
    LstmCell cell;
    cell.resize(3, 2);
    cell.init(rng);
    for (std::size_t j = 3; j < 6; ++j) cell.b[j] = 50.0;  // forget bias -> 1
    std::vector<double> x = {0.3, -0.1};
    std::vector<double> h0 = {0.1, 0.2, -0.3}, c0 = {0.5, -0.7, 0.9};
    std::vector<double> h(3), c(3), gates(12);
    cell.step(x.data(), h0.data(), c0.data(), h.data(), c.data(), gates.data());
    for (int j = 0; j < 3; ++j) {
        const double expected = c0[std::size_t(j)] + gates[std::size_t(j)] * gates[std::size_t(6 + j)];
        CHECK(c[std::size_t(j)] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("gradients: affine, mlp, lstm sequence vs central differences") {
    Rng rng(11);
    const double eps = 1e-5, tol = 1e-4;

    for (int draw = 0; draw < 10; ++draw) {
        // mlp scalar head: loss = sum(y)
        Mlp2 mlp;
        mlp.resize(3, 5, 4);
        mlp.init(rng);
        std::vector<double> x(4);
        for (auto& v : x) v = rng.normal();

        Mlp2 g;
        g.resize(3, 5, 4);
        Mlp2::Cache cache;
        std::vector<double> y(3);
        mlp.forward(x.data(), y.data(), &cache);
        std::vector<double> dy = {1.0, 1.0, 1.0};
        mlp.backward(cache, dy.data(), g, nullptr);

        ParamSet params, grads;
        params.add("l1.W", &mlp.l1.W);
        params.add("l1.b", &mlp.l1.b);
        params.add("l2.W", &mlp.l2.W);
        params.add("l2.b", &mlp.l2.b);
        grads.add("l1.W", &g.l1.W);
        grads.add("l1.b", &g.l1.b);
        grads.add("l2.W", &g.l2.W);
        grads.add("l2.b", &g.l2.b);

        auto f = [&]() {
            std::vector<double> out(3);
            mlp.forward(x.data(), out.data());
            return out[0] + out[1] + out[2];
        };
        const auto coords = flatten(params);
        const auto analytic = flatten_values(grads);
        CHECK(grad_check(f, coords, analytic, eps) < tol);
    }

    for (int draw = 0; draw < 10; ++draw) {
        // lstm over a short sequence: loss = sum over steps of sum(h_t)
        const int T = 4, F = 3, H = 5;
        LstmCell cell;
        cell.resize(H, F);
        cell.init(rng);
        std::vector<double> x(std::size_t(T) * F);
        for (auto& v : x) v = rng.normal();

        LstmSeqCache cache;
        lstm_forward(cell, x.data(), T, cache);
        std::vector<double> dh(std::size_t(T) * H, 1.0);
        LstmCell g;
        g.resize(H, F);
        lstm_backward(cell, cache, dh.data(), g, nullptr);

        ParamSet params, grads;
        params.add("w_ih", &cell.w_ih);
        params.add("w_hh", &cell.w_hh);
        params.add("b", &cell.b);
        grads.add("w_ih", &g.w_ih);
        grads.add("w_hh", &g.w_hh);
        grads.add("b", &g.b);

        auto f = [&]() {
            LstmSeqCache c2;
            lstm_forward(cell, x.data(), T, c2);
            double acc = 0.0;
            for (double v : c2.h) acc += v;
            return acc;
        };
        CHECK(grad_check(f, flatten(params), flatten_values(grads), eps) < tol);
    }
}

TEST_CASE("lstm input gradients match central differences") {
    Rng rng(13);
    const int T = 3, F = 2, H = 4;
    LstmCell cell;
    cell.resize(H, F);
    cell.init(rng);
    std::vector<double> x(std::size_t(T) * F);
    for (auto& v : x) v = rng.normal();

    LstmSeqCache cache;
    lstm_forward(cell, x.data(), T, cache);
    std::vector<double> dh(std::size_t(T) * H, 1.0);
    LstmCell g;
    g.resize(H, F);
    std::vector<double> dx(x.size(), 0.0);
    lstm_backward(cell, cache, dh.data(), g, dx.data());

    std::vector<double*> coords;
    for (auto& v : x) coords.push_back(&v);
    auto f = [&]() {
        LstmSeqCache c2;
        lstm_forward(cell, x.data(), T, c2);
        double acc = 0.0;
        for (double v : c2.h) acc += v;
        return acc;
    };
    CHECK(grad_check(f, coords, dx, 1e-5) < 1e-4);
}

TEST_CASE("loss gradients vs central differences") {
    Rng rng(17);
    for (int draw = 0; draw < 10; ++draw) {
        std::vector<double> logits(4);
        for (auto& v : logits) v = rng.normal();
        const int label = int(rng.below(4));
        const double w = rng.uniform(0.5, 2.0);

        std::vector<double> analytic(4, 0.0);
        cross_entropy_grad(logits, label, w, 1.0, analytic.data());
        std::vector<double*> coords;
        for (auto& v : logits) coords.push_back(&v);
        auto f = [&]() { return cross_entropy(logits, label, w); };
        CHECK(grad_check(f, coords, analytic, 1e-5) < 1e-4);

        std::vector<int> bits = {int(rng.below(2)), int(rng.below(2)), int(rng.below(2)),
                                 int(rng.below(2))};
        std::vector<double> ganalytic(4, 0.0);
        bce_multilabel_grad(logits, bits, w, 1.0, ganalytic.data());
        auto fb = [&]() { return bce_multilabel(logits, bits, w); };
        CHECK(grad_check(fb, coords, ganalytic, 1e-5) < 1e-4);
    }
}

TEST_CASE("grad_check on analytic functions") {
    double w = 3.0;
    std::vector<double*> coords = {&w};
    // f(w) = w^2, analytic gradient 6 at w=3
    std::vector<double> analytic = {6.0};
    auto f = [&]() { return w * w; };
    CHECK(grad_check(f, coords, analytic, 1e-5) < 1e-8);
    // linear function: exact to machine precision
    std::vector<double> lin_grad = {4.0};
    auto lin = [&]() { return 4.0 * w + 1.0; };
    CHECK(grad_check(lin, coords, lin_grad, 1e-5) < 1e-10);
}

TEST_CASE("adam first step and zero-gradient fixed point") {
    Tensor p = Tensor::zeros({3});
    p.v = {1.0, -2.0, 0.5};
    Tensor g = Tensor::zeros({3});
    ParamSet params, grads;
    params.add("p", &p);
    grads.add("g", &g);
    AdamState st;
    st.init(3);

    g.fill(1.0);
    adam_step(st, params, grads, 0.001);
    CHECK(p.v[0] == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
    CHECK(p.v[1] == doctest::Approx(-2.0 - 0.001).epsilon(1e-6));

    const auto before = p.v;
    g.fill(0.0);
    for (int i = 0; i < 5; ++i) adam_step(st, params, grads, 0.001);
    // with zero gradients the first moment decays and steps stay tiny
    for (int i = 0; i < 3; ++i) CHECK(std::abs(p.v[std::size_t(i)] - before[std::size_t(i)]) < 5e-3);
}

TEST_CASE("adam stays put when gradients are zero from the start") {
    Tensor p = Tensor::zeros({2});
    p.v = {0.3, -0.4};
    Tensor g = Tensor::zeros({2});
    ParamSet params, grads;
    params.add("p", &p);
    grads.add("g", &g);
    AdamState st;
    st.init(2);
    for (int i = 0; i < 100; ++i) adam_step(st, params, grads, 0.01);
    CHECK(p.v[0] == doctest::Approx(0.3));
    CHECK(p.v[1] == doctest::Approx(-0.4));
}

TEST_CASE("adam minimizes a quadratic") {
    Tensor p = Tensor::zeros({1});
    p.v = {1.0};
    Tensor g = Tensor::zeros({1});
    ParamSet params, grads;
    params.add("p", &p);
    grads.add("g", &g);
    AdamState st;
    st.init(1);
    for (int i = 0; i < 500; ++i) {
        g.v[0] = 2.0 * p.v[0];  // d/dw w^2
        adam_step(st, params, grads, 0.01);
    }
    CHECK(std::abs(p.v[0]) < 0.1);
}

TEST_CASE("lr schedule: warmup then exponential decay") {
    LrSchedule sched{0.002};
    CHECK(sched.lr(0) == doctest::Approx(0.002));
    CHECK(sched.lr(9) == doctest::Approx(0.002));
    CHECK(sched.lr(10) == doctest::Approx(0.002 * 0.95));
    CHECK(sched.lr(11) == doctest::Approx(0.002 * 0.95 * 0.95));
}

TEST_CASE("checkpoint container round-trips bit-exactly") {
    Rng rng(23);
    Tensor a = Tensor::zeros({3, 4});
    Tensor b = Tensor::zeros({2, 2, 2});
    Tensor scalarish = Tensor::zeros({1});
    for (auto& v : a.v) v = rng.normal() * 1e-7;
    for (auto& v : b.v) v = rng.normal() * 1e9;
    scalarish.v[0] = -0.0;

    const auto dir = std::filesystem::temp_directory_path() / "rarecast_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto p1 = dir / "one.knwr";
    const auto p2 = dir / "two.knwr";
    save_checkpoint(p1, {{"a", &a}, {"deep/name", &b}, {"s", &scalarish}});
    auto loaded = load_checkpoint(p1);
    REQUIRE(loaded.size() == 3);
    CHECK(loaded.at("a").shape == a.shape);
    Tensor& la = loaded.at("a");
    Tensor& lb = loaded.at("deep/name");
    Tensor& ls = loaded.at("s");
    save_checkpoint(p2, {{"a", &la}, {"deep/name", &lb}, {"s", &ls}});
    CHECK(slurp(p1) == slurp(p2));
    CHECK(std::memcmp(la.v.data(), a.v.data(), a.v.size() * sizeof(double)) == 0);
}

TEST_CASE("forward passes are deterministic") {
    Rng rng(29);
    Mlp2 mlp;
    mlp.resize(3, 8, 5);
    mlp.init(rng);
    std::vector<double> x(5);
    for (auto& v : x) v = rng.normal();
    std::vector<double> y1(3), y2(3);
    mlp.forward(x.data(), y1.data());
    mlp.forward(x.data(), y2.data());
    CHECK(std::memcmp(y1.data(), y2.data(), sizeof(double) * 3) == 0);
}
