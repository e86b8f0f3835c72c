#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "support.hpp"

#include "dclp/error.hpp"
#include "dclp/grad_check.hpp"
#include "dclp/graph.hpp"
#include "dclp/ops.hpp"
#include "dclp/rng.hpp"

using namespace dclp;
using testing::random_tensor;

namespace {

// sum(op_output * fixed random weights) so every output entry matters and
// gradients are O(1) instead of cancelling out.
Var weighted_sum(Graph& g, Var v, std::uint64_t seed = 99) {
    Rng rng(seed);
    Tensor w(v.shape());
    for (double& x : w.data) x = rng.normal();
    return ops::sum(ops::mul(v, g.constant(w)));
}

void expect_pass(const GradCheckReport& r, double tol) {
    for (const auto& e : r.entries) {
        CAPTURE(e.name);
        CAPTURE(e.max_error);
        CHECK(e.max_error <= tol);
    }
    CHECK(r.passed);
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
    Tensor t(Shape{2, 3}, 1.5);
    CHECK(t.size() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    Tensor v(Shape{4});
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 4);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    t.zero_grad();
    CHECK(t.grad.size() == t.data.size());
    t.data[4] = NAN;
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng streams are reproducible") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        CHECK(x == b.next());
        differs = differs || x != c.next();
    }
    CHECK(differs);
    Rng r(7);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(r.below(13) < 13);
    }
    // normal draws: mean 0, var 1 within a loose band
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        s += z;
        s2 += z * z;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    Rng saved(5);
    saved.next();
    Rng restored(0);
    restored.set_state(saved.state());
    CHECK(restored.next() == saved.next());
}

TEST_CASE("matmul") {
    Graph g;
    auto a = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    auto eye = g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    CHECK(ops::matmul(a, eye).value().data == std::vector<double>{1, 2, 3, 4});

    auto col = g.constant(Tensor::matrix(2, 1, {5, 6}));
    auto c = ops::matmul(a, col);
    CHECK(c.shape() == Shape{2, 1});
    // hand multiplication
    CHECK(c.value().data == std::vector<double>{1 * 5 + 2 * 6, 3 * 5 + 4 * 6});

    Rng rng(1);
    auto z = ops::matmul(g.constant(Tensor::zeros({1, 3})), g.constant(random_tensor({3, 5}, rng)));
    CHECK(z.value().data == std::vector<double>(5, 0.0));

    try {
        ops::matmul(a, g.constant(Tensor::zeros({3, 2})));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x2]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("softmax_rows") {
    Graph g;
    auto s = ops::softmax_rows(g.constant(Tensor::matrix(3, 3, {0, 0, 0, std::log(1.0), std::log(2.0), std::log(3.0), 1000, 0, 0})));
    const auto& v = s.value().data;
    for (int j = 0; j < 3; ++j) CHECK(v[j] == doctest::Approx(1.0 / 3).epsilon(1e-15));
    CHECK(v[3] == doctest::Approx(1.0 / 6).epsilon(1e-14));
    CHECK(v[4] == doctest::Approx(2.0 / 6).epsilon(1e-14));
    CHECK(v[5] == doctest::Approx(3.0 / 6).epsilon(1e-14));
    CHECK(v[6] == doctest::Approx(1.0));
    CHECK(v[7] < 1e-300);
    CHECK(s.value().all_finite());
}

TEST_CASE("softmax_rows: rows sum to one and ignore per-row shifts") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Graph g;
        Tensor x = random_tensor({4, 7}, rng, 5.0);
        Tensor shifted = x;
        for (std::size_t i = 0; i < 4; ++i) {
            const double c = 100.0 * rng.normal();
            for (std::size_t j = 0; j < 7; ++j) shifted.at(i, j) += c;
        }
        const auto a = ops::softmax_rows(g.constant(x)).value();
        const auto b = ops::softmax_rows(g.constant(shifted)).value();
        for (std::size_t i = 0; i < 4; ++i) {
            double sum = 0;
            for (std::size_t j = 0; j < 7; ++j) sum += a.at(i, j);
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
        CHECK(testing::max_abs_diff(a.data, b.data) <= 1e-12);
    }
}

TEST_CASE("layer_norm") {
    Graph g;
    auto ones = g.constant(Tensor(Shape{2}, 1.0));
    auto zeros = g.constant(Tensor(Shape{2}, 0.0));

    auto c = ops::layer_norm(g.constant(Tensor::matrix(1, 2, {4, 4})), ones, zeros);
    CHECK(c.value().data == std::vector<double>{0, 0});

    auto r = ops::layer_norm(g.constant(Tensor::matrix(1, 2, {1, 3})), ones, zeros, 1e-14);
    CHECK(r.value().data[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.value().data[1] == doctest::Approx(1.0).epsilon(1e-12));

    auto b = g.constant(Tensor(Shape{2}, std::vector<double>{0.25, -7}));
    auto k = ops::layer_norm(g.constant(Tensor::matrix(1, 2, {-3, 11})), zeros, b);
    CHECK(k.value().data == std::vector<double>{0.25, -7});

    CHECK_THROWS_AS(ops::layer_norm(g.constant(Tensor::matrix(1, 2, {1, 2})), ones, zeros, 0.0), ConfigError);
}

TEST_CASE("layer_norm standardizes rows") {
    // Unit variance holds up to var / (var + eps); a tiny eps isolates the
    // standardization itself.
    Rng rng(11);
    const std::size_t d = 16;
    Graph g;
    auto ones = g.constant(Tensor(Shape{d}, 1.0));
    auto zeros = g.constant(Tensor(Shape{d}, 0.0));
    for (int trial = 0; trial < 100; ++trial) {
        const double spread = std::pow(10.0, -2.0 + 4.0 * rng.uniform());
        Tensor x = random_tensor({3, d}, rng, spread);
        for (double& v : x.data) v += 10.0 * rng.normal();
        const auto y = ops::layer_norm(g.constant(x), ones, zeros, 1e-12).value();
        for (std::size_t i = 0; i < 3; ++i) {
            double in_mean = 0, in_var = 0;
            for (std::size_t j = 0; j < d; ++j) in_mean += x.at(i, j) / d;
            for (std::size_t j = 0; j < d; ++j) in_var += (x.at(i, j) - in_mean) * (x.at(i, j) - in_mean) / d;
            if (in_var < 1e-4) continue;
            double mean = 0, var = 0;
            for (std::size_t j = 0; j < d; ++j) mean += y.at(i, j) / d;
            for (std::size_t j = 0; j < d; ++j) var += (y.at(i, j) - mean) * (y.at(i, j) - mean) / d;
            CHECK(std::abs(mean) <= 1e-9);
            CHECK(std::abs(var - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("gelu") {
    Graph g;
    auto oracle = [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); };
    CHECK(ops::gelu(g.constant(Tensor::scalar(0.0))).item() == 0.0);
    const double g3 = ops::gelu(g.constant(Tensor::scalar(3.0))).item();
    CHECK(g3 == doctest::Approx(oracle(3.0)).epsilon(1e-15));
    CHECK(std::abs(g3 - 2.99595) < 5e-6);

    std::vector<double> grid;
    for (int i = -200; i <= 200; ++i) grid.push_back(i * 0.05);
    Tensor x(Shape{grid.size()}, grid);
    Tensor nx = x;
    for (double& v : nx.data) v = -v;
    const auto a = ops::gelu(g.constant(x)).value();
    const auto b = ops::gelu(g.constant(nx)).value();
    for (std::size_t i = 0; i < grid.size(); ++i) CHECK(std::abs(a.data[i] - b.data[i] - grid[i]) <= 1e-12);
}

TEST_CASE("dropout") {
    Rng rng(5);
    Graph g;
    Tensor x = random_tensor({3, 4}, rng);
    auto xv = g.constant(x);
    CHECK(ops::dropout(xv, 0.5, rng, false).value().data == x.data);
    CHECK(ops::dropout(xv, 0.0, rng, true).value().data == x.data);
    CHECK_THROWS_AS(ops::dropout(xv, 1.0, rng, true), ConfigError);

    const std::size_t n = 100000;
    const double p = 0.2;
    const auto y = ops::dropout(g.constant(Tensor(Shape{n}, 1.0)), p, rng, true).value();
    std::size_t zeros = 0;
    double mean = 0;
    for (double v : y.data) {
        if (v == 0.0) ++zeros;
        else CHECK(v == doctest::Approx(1.0 / (1.0 - p)).epsilon(1e-15));
        mean += v / n;
    }
    // binomial: zero fraction sd sqrt(p(1-p)/n); mean sd sqrt(p/(1-p)/n)
    const double frac_sd = std::sqrt(p * (1 - p) / n);
    const double mean_sd = std::sqrt(p / (1 - p) / n);
    CHECK(std::abs(static_cast<double>(zeros) / n - p) <= 3 * frac_sd);
    CHECK(std::abs(mean - 1.0) <= 3 * mean_sd);
}

TEST_CASE("backward basics") {
    Rng rng(2);
    Tensor w = random_tensor({2, 3}, rng);
    w.requires_grad = true;
    {
        Graph g;
        auto grads = g.backward(ops::sum(g.param(w)));
        CHECK(grads.at(&w) == std::vector<double>(6, 1.0));
    }
    {
        Tensor p(Shape{3}, std::vector<double>{1, 2, 3});
        p.requires_grad = true;
        Graph g;
        auto v = g.param(p);
        auto grads = g.backward(ops::sum(ops::mul(v, v)));
        CHECK(grads.at(&p) == std::vector<double>{2, 4, 6});
    }
    {
        Graph g;
        CHECK_THROWS_AS(g.backward(g.param(w)), ContractError);
    }
    {
        Tensor unused = random_tensor({4}, rng);
        unused.requires_grad = true;
        Graph g;
        g.param(unused);
        auto grads = g.backward(ops::sum(g.param(w)));
        CHECK(grads.at(&unused) == std::vector<double>(4, 0.0));
    }
}

TEST_CASE("backward visits each node once and accumulates fan-out") {
    Tensor x(Shape{2}, std::vector<double>{0.5, -1.5});
    x.requires_grad = true;
    Graph g;
    auto v = g.param(x);
    auto e = ops::exp(v);
    // e used three times
    auto loss = ops::sum(ops::add(ops::mul(e, e), e));
    const std::size_t nodes = g.size();
    auto grads = g.backward(loss);
    CHECK(g.last_backward_visits() <= nodes);
    CHECK(g.last_backward_visits() == 4);  // exp, mul, add, sum
    for (std::size_t i = 0; i < 2; ++i) {
        const double ex = std::exp(x.data[i]);
        CHECK(grads.at(&x)[i] == doctest::Approx(2 * ex * ex + ex).epsilon(1e-14));
    }
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(8);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    a.requires_grad = b.requires_grad = true;
    auto grads_for = [&](double c) {
        Graph g;
        auto y = ops::gelu(ops::matmul(g.param(a), g.param(b)));
        auto loss = ops::scale(weighted_sum(g, ops::softmax_rows(y)), c);
        return g.backward(loss);
    };
    const auto base = grads_for(1.0);
    for (double c : {-2.0, 0.0, 3.0}) {
        const auto scaled = grads_for(c);
        for (const Tensor* t : {&a, &b}) {
            const auto& s = scaled.at(t);
            const auto& r = base.at(t);
            // exact for powers of two; c = 3 rounds once per chain-rule product
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (c == 3.0) CHECK(s[i] == doctest::Approx(c * r[i]).epsilon(1e-13));
                else CHECK(s[i] == c * r[i]);
            }
        }
    }
}

TEST_CASE("grad_check: exact quadratic") {
    Rng rng(4);
    Tensor p = random_tensor({5, 3}, rng);
    p.requires_grad = true;
    auto f = [&](Graph& g) {
        auto v = g.param(p);
        return ops::scale(ops::sum(ops::mul(v, v)), 0.5);
    };
    GradCheckOptions opt;
    opt.tol = 1e-7;
    auto r = grad_check(f, {{"p", &p}}, opt);
    expect_pass(r, 1e-7);
    CHECK(r.entries.size() == 1);
    CHECK(r.entries[0].checked == 15);
}

TEST_CASE("grad_check: corrupted backward is caught and named") {
    Rng rng(6);
    Tensor good = random_tensor({3}, rng);
    Tensor bad = random_tensor({3}, rng);
    good.requires_grad = bad.requires_grad = true;
    auto broken_square = [](Var x) {
        Tensor out = x.value();
        for (double& v : out.data) v = v * v;
        return x.graph()->record(std::move(out), {x}, [x](Graph& g, std::size_t self) {
            const auto& up = g.grad(self);
            auto& gx = g.grad(x.id());
            const auto& xv = x.value().data;
            for (std::size_t i = 0; i < up.size(); ++i) gx[i] += up[i] * xv[i];  // should be 2x
        });
    };
    auto f = [&](Graph& g) {
        auto gv = g.param(good);
        return ops::add(ops::sum(ops::mul(gv, gv)), ops::sum(broken_square(g.param(bad))));
    };
    auto r = grad_check(f, {{"good", &good}, {"bad", &bad}});
    CHECK_FALSE(r.passed);
    const auto failed = r.failures();
    REQUIRE(failed.size() == 1);
    CHECK(failed[0] == "bad");
    CHECK(r.to_text().find("FAIL bad") != std::string::npos);
}

TEST_CASE("grad_check: nondeterministic forward is rejected") {
    Tensor p(Shape{2}, 1.0);
    p.requires_grad = true;
    int calls = 0;
    auto f = [&](Graph& g) { return ops::scale(ops::sum(g.param(p)), 1.0 + 1e-3 * ++calls); };
    CHECK_THROWS_AS(grad_check(f, {{"p", &p}}), DeterminismError);
}

TEST_CASE("grad_check: entry sampling keeps the largest gradients") {
    Tensor p(Shape{6}, std::vector<double>{1, -5, 2, 4, -3, 0.5});
    p.requires_grad = true;
    auto f = [&](Graph& g) {
        auto v = g.param(p);
        return ops::scale(ops::sum(ops::mul(v, v)), 0.5);
    };
    GradCheckOptions opt;
    opt.max_entries = 2;
    auto r = grad_check(f, {{"p", &p}}, opt);
    CHECK(r.entries[0].checked == 2);
    CHECK(std::abs(r.entries[0].worst_analytic) >= 4.0);
    CHECK(r.passed);
}

TEST_CASE("every differentiable op passes grad_check") {
    struct Case {
        std::string name;
        std::vector<Shape> shapes;
        std::function<Var(Graph&, const std::vector<Var>&)> build;
    };
    const std::vector<std::size_t> targets{2, 0, 3};
    const std::vector<std::size_t> ids{1, 3, 1, 0};
    const std::vector<Case> cases{
        {"matmul", {{3, 4}, {4, 2}}, [](Graph&, const auto& v) { return ops::matmul(v[0], v[1]); }},
        {"transpose", {{3, 4}}, [](Graph&, const auto& v) { return ops::transpose(v[0]); }},
        {"add", {{2, 3}, {2, 3}}, [](Graph&, const auto& v) { return ops::add(v[0], v[1]); }},
        {"sub", {{2, 3}, {2, 3}}, [](Graph&, const auto& v) { return ops::sub(v[0], v[1]); }},
        {"mul", {{2, 3}, {2, 3}}, [](Graph&, const auto& v) { return ops::mul(v[0], v[1]); }},
        {"scale", {{2, 3}}, [](Graph&, const auto& v) { return ops::scale(v[0], -1.7); }},
        {"scale_by", {{2, 3}, {1}}, [](Graph&, const auto& v) { return ops::scale_by(v[0], v[1]); }},
        {"exp", {{2, 3}}, [](Graph&, const auto& v) { return ops::exp(v[0]); }},
        {"add_row", {{3, 4}, {4}}, [](Graph&, const auto& v) { return ops::add_row(v[0], v[1]); }},
        {"affine", {{3, 4}, {4, 5}, {5}}, [](Graph&, const auto& v) { return ops::affine(v[0], v[1], v[2]); }},
        {"mean", {{3, 4}}, [](Graph&, const auto& v) { return ops::mean(v[0]); }},
        {"softmax_rows", {{3, 5}}, [](Graph&, const auto& v) { return ops::softmax_rows(v[0]); }},
        {"cross_entropy_rows", {{3, 4}},
         [&](Graph&, const auto& v) { return ops::cross_entropy_rows(v[0], targets); }},
        {"layer_norm", {{3, 6}, {6}, {6}}, [](Graph&, const auto& v) { return ops::layer_norm(v[0], v[1], v[2]); }},
        {"gelu", {{3, 4}}, [](Graph&, const auto& v) { return ops::gelu(v[0]); }},
        {"l2_normalize_rows", {{3, 5}}, [](Graph&, const auto& v) { return ops::l2_normalize_rows(v[0]); }},
        {"concat_rows", {{2, 3}, {1, 3}}, [](Graph&, const auto& v) { return ops::concat_rows({v[0], v[1]}); }},
        {"concat_cols", {{2, 3}, {2, 2}}, [](Graph&, const auto& v) { return ops::concat_cols(v[0], v[1]); }},
        {"slice_rows", {{5, 3}}, [](Graph&, const auto& v) { return ops::slice_rows(v[0], 1, 3); }},
        {"mean_rows", {{5, 3}}, [](Graph&, const auto& v) { return ops::mean_rows(v[0], 3); }},
        {"gather_rows", {{4, 3}}, [&](Graph&, const auto& v) { return ops::gather_rows(v[0], ids); }},
        {"relative_bias", {{2, 5}}, [](Graph&, const auto& v) { return ops::relative_bias(v[0], 4, 2); }},
        {"attention", {{4, 6}, {4, 6}, {4, 6}},
         [](Graph&, const auto& v) { return ops::attention(v[0], v[1], v[2], 2, std::nullopt, 4); }},
        {"attention+bias+mask", {{5, 6}, {5, 6}, {5, 6}, {2, 3}},
         [](Graph&, const auto& v) {
             return ops::attention(v[0], v[1], v[2], 2, ops::relative_bias(v[3], 5, 1), 3);
         }},
    };
    Rng rng(123);
    for (const auto& c : cases) {
        SUBCASE(c.name.c_str()) {
            std::vector<Tensor> inputs;
            for (const auto& s : c.shapes) {
                inputs.push_back(random_tensor(s, rng));
                inputs.back().requires_grad = true;
            }
            std::vector<NamedTensor> named;
            for (std::size_t i = 0; i < inputs.size(); ++i) named.push_back({c.name + "#" + std::to_string(i), &inputs[i]});
            auto f = [&](Graph& g) {
                std::vector<Var> vars;
                for (auto& t : inputs) vars.push_back(g.param(t));
                return weighted_sum(g, c.build(g, vars));
            };
            expect_pass(grad_check(f, named), 1e-5);
        }
    }
}

TEST_CASE("relative_bias indexing") {
    Graph g;
    auto zero = ops::relative_bias(g.constant(Tensor::zeros({2, 3})), 4, 1);
    CHECK(zero.value().data == std::vector<double>(2 * 16, 0.0));

    auto b = ops::relative_bias(g.constant(Tensor::matrix(1, 3, {-1, 0, 2})), 3, 1).value();
    CHECK(b.shape == Shape{1, 9});
    // row i=0: distances 0, 1, 2 -> clipped 0, 1, 1
    CHECK(std::vector<double>(b.data.begin(), b.data.begin() + 3) == std::vector<double>{0, 2, 2});
    for (std::size_t i = 0; i < 3; ++i) CHECK(b.data[i * 3 + i] == 0.0);
    // row i=2: distances -2, -1, 0
    CHECK(std::vector<double>(b.data.begin() + 6, b.data.end()) == std::vector<double>{-1, -1, 0});
}

TEST_CASE("attention probabilities") {
    Rng rng(9);
    const std::size_t L = 6, heads = 3;
    Tensor q = random_tensor({L, 6}, rng, 2.0), k = random_tensor({L, 6}, rng, 2.0);
    Tensor bias = random_tensor({heads, L * L}, rng);
    for (std::size_t valid : {std::size_t{1}, std::size_t{4}, L}) {
        const auto p = ops::attention_probabilities(q, k, &bias, heads, valid);
        for (std::size_t h = 0; h < heads; ++h)
            for (std::size_t i = 0; i < L; ++i) {
                double s = 0;
                for (std::size_t j = 0; j < L; ++j) {
                    const double w = p.data[h * L * L + i * L + j];
                    if (j >= valid) CHECK(w == 0.0);
                    s += w;
                }
                CHECK(std::abs(s - 1.0) <= 1e-12);
            }
    }
    const auto none = ops::attention_probabilities(q, k, nullptr, heads, 0);
    CHECK(none.data == std::vector<double>(heads * L * L, 0.0));
    // one token attends to itself with weight exactly 1
    Tensor q1 = random_tensor({1, 6}, rng), k1 = random_tensor({1, 6}, rng);
    const auto single = ops::attention_probabilities(q1, k1, nullptr, heads, 1);
    CHECK(single.data == std::vector<double>(heads, 1.0));
}

TEST_CASE("l2_normalize_rows rejects zero rows") {
    Graph g;
    CHECK_THROWS_AS(ops::l2_normalize_rows(g.constant(Tensor::matrix(2, 2, {1, 1, 0, 0}))), DegenerateVectorError);
}
