// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "treedec/autodiff.hpp"
#include "treedec/error.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace treedec;
using namespace treedec::nn;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

// Reduces any output to a scalar through fixed random weights.
Var project(Var out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor w = random_tensor(out.shape(), rng);
    return sum(mul(out, out.tape->constant(w)));
}

double rel_error(const Tensor& a, const Tensor& n) {
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - n[i]));
        na = std::max(na, std::abs(a[i]));
        nn = std::max(nn, std::abs(n[i]));
    }
    return diff / std::max({na, nn, 1e-10});
}

// Largest per-input relative error between the tape gradient and central differences.
double gradcheck(const std::vector<Tensor>& inputs, const Builder& f, double h = 1e-5) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
        tape.backward(f(tape, leaves));
        for (auto v : leaves) analytic.push_back(tape.grad(v));
    }
    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape tape(false);
        std::vector<Var> leaves;
        for (const auto& t : xs) leaves.push_back(tape.leaf(t));
        return f(tape, leaves).item();
    };
    double worst = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        Tensor numeric(inputs[k].shape());
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto plus = inputs;
            auto minus = inputs;
            plus[k][i] += h;
            minus[k][i] -= h;
            numeric[i] = (eval(plus) - eval(minus)) / (2 * h);
        }
        worst = std::max(worst, rel_error(analytic[k], numeric));
    }
    return worst;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar-loop GRU, written independently of the tape ops.
std::vector<double> gru_oracle(const std::vector<double>& x, const std::vector<double>& h,
                               const std::vector<Tensor>& p) {
    const int n = static_cast<int>(h.size());
    const int in = static_cast<int>(x.size());
    auto mv = [&](const Tensor& W, const std::vector<double>& v, int j) {
        double s = 0;
        for (std::size_t k = 0; k < v.size(); ++k) s += W[j * v.size() + k] * v[k];
        return s;
    };
    (void)in;
    std::vector<double> z(n), r(n), rh(n), out(n);
    for (int j = 0; j < n; ++j) {
        z[j] = sig(mv(p[0], x, j) + mv(p[3], h, j) + p[6][j]);
        r[j] = sig(mv(p[1], x, j) + mv(p[4], h, j) + p[7][j]);
        rh[j] = r[j] * h[j];
    }
    for (int j = 0; j < n; ++j) {
        const double c = std::tanh(mv(p[2], x, j) + mv(p[5], rh, j) + p[8][j]);
        out[j] = (1 - z[j]) * h[j] + z[j] * c;
    }
    return out;
}

std::vector<Tensor> gru_params(int in, int n, std::mt19937_64& rng) {
    std::vector<Tensor> p;
    for (int i = 0; i < 3; ++i) p.push_back(random_tensor({n, in}, rng));
    for (int i = 0; i < 3; ++i) p.push_back(random_tensor({n, n}, rng));
    for (int i = 0; i < 3; ++i) p.push_back(random_tensor({n}, rng));
    return p;
}

GruWeights gru_weights(const std::vector<Var>& v, std::size_t off) {
    return {v[off], v[off + 1], v[off + 2], v[off + 3], v[off + 4], v[off + 5], v[off + 6], v[off + 7], v[off + 8]};
}

} // namespace

TEST_CASE("gru_cell: zero input, state and weights give zero") {
    Tape tape(false);
    std::vector<Var> v;
    for (Shape s : {Shape{3, 2}, Shape{3, 2}, Shape{3, 2}, Shape{3, 3}, Shape{3, 3}, Shape{3, 3}, Shape{3}, Shape{3}, Shape{3}})
        v.push_back(tape.constant(Tensor(s)));
    auto out = gru_cell(tape.constant(Tensor({2})), tape.constant(Tensor({3})), gru_weights(v, 0));
    for (double x : out.value().data()) CHECK(x == 0.0);
}

TEST_CASE("gru_cell matches the scalar oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto p = gru_params(4, 5, rng);
        auto x = random_tensor({4}, rng);
        auto h = random_tensor({5}, rng);
        Tape tape(false);
        std::vector<Var> v;
        for (auto& t : p) v.push_back(tape.constant(t));
        auto out = gru_cell(tape.constant(x), tape.constant(h), gru_weights(v, 0));
        auto want = gru_oracle(x.values(), h.values(), p);
        for (int j = 0; j < 5; ++j) CHECK(std::abs(out.value()[j] - want[j]) < 1e-12);
    }
}

TEST_CASE("gru_cell rejects mismatched shapes") {
    std::mt19937_64 rng(1);
    auto p = gru_params(4, 5, rng);
    Tape tape(false);
    std::vector<Var> v;
    for (auto& t : p) v.push_back(tape.constant(t));
    CHECK_THROWS_AS(gru_cell(tape.constant(Tensor({3})), tape.constant(Tensor({5})), gru_weights(v, 0)), Error);
    CHECK_THROWS_AS(gru_cell(tape.constant(Tensor({4})), tape.constant(Tensor({4})), gru_weights(v, 0)), Error);
}

TEST_CASE("gru_cell gradient matches central differences") {
    std::mt19937_64 rng(7);
    auto inputs = gru_params(3, 4, rng);
    inputs.push_back(random_tensor({3}, rng));
    inputs.push_back(random_tensor({4}, rng));
    const double err = gradcheck(inputs, [](Tape&, const std::vector<Var>& v) {
        return project(gru_cell(v[9], v[10], gru_weights(v, 0)), 11);
    });
    CHECK(err < 1e-6);
}

TEST_CASE("adaptive_avg_pool") {
    std::mt19937_64 rng(2);
    SUBCASE("identity") {
        auto a = random_tensor({4, 32}, rng);
        auto out = adaptive_avg_pool(a, 4, 32);
        CHECK(out.values() == a.values());
    }
    SUBCASE("constant") {
        Tensor a({8, 64}, 0.375);
        auto out = adaptive_avg_pool(a, 4, 32);
        CHECK(out.shape() == Shape{4, 32});
        for (double x : out.data()) CHECK(x == doctest::Approx(0.375).epsilon(1e-15));
    }
    SUBCASE("brute force bins") {
        auto a = random_tensor({5, 33}, rng);
        auto out = adaptive_avg_pool(a, 4, 32);
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 32; ++j) {
                const int r0 = (i * 5) / 4, r1 = ((i + 1) * 5 + 3) / 4;
                const int c0 = (j * 33) / 32, c1 = ((j + 1) * 33 + 31) / 32;
                double s = 0;
                int n = 0;
                for (int r = r0; r < r1; ++r)
                    for (int c = c0; c < c1; ++c, ++n) s += a.at(r, c);
                CHECK(std::abs(out.at(i, j) - s / n) < 1e-12);
            }
        }
    }
    SUBCASE("upsampling repeats cells") {
        Tensor a({1, 2}, std::vector<double>{1.0, 3.0});
        auto out = adaptive_avg_pool(a, 4, 4);
        CHECK(out.at(3, 0) == 1.0);
        CHECK(out.at(0, 3) == 3.0);
    }
    CHECK_THROWS_AS(adaptive_avg_pool(Tensor({0, 3}), 4, 32), Error);
}

TEST_CASE("masked_softmax") {
    Tensor logits = Tensor::vector({0.3, -1.2, 2.0, 0.1, 0.0, 0.7});
    auto plain = softmax(logits);
    auto all = masked_softmax(logits, MaskVector::all(), MaskMode::Multiply);
    auto all_neg = masked_softmax(logits, MaskVector::all(), MaskMode::NegInf);
    for (int i = 0; i < 6; ++i) {
        CHECK(std::abs(all[i] - plain[i]) < 1e-15);
        CHECK(std::abs(all_neg[i] - plain[i]) < 1e-15);
    }

    auto only = masked_softmax(logits, MaskVector::parse("100000"), MaskMode::NegInf);
    CHECK(std::abs(only[0] - 1.0) < 1e-6);
    for (int i = 1; i < 6; ++i) CHECK(only[i] < 1e-6);

    auto quirk = masked_softmax(Tensor({6}, 2.0), MaskVector::parse("110000"), MaskMode::Multiply);
    const double e2 = std::exp(2.0);
    const double Z = 2 * e2 + 4;
    for (int i = 0; i < 6; ++i) CHECK(std::abs(quirk[i] - (i < 2 ? e2 : 1.0) / Z) < 1e-15);

    CHECK_THROWS_AS(masked_softmax(logits, MaskVector::none(), MaskMode::Multiply), Error);
    try {
        masked_softmax(logits, MaskVector::none(), MaskMode::NegInf);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::AllMasked);
    }
}

TEST_CASE("kl_divergence") {
    auto direct = [](const std::vector<double>& p, const std::vector<double>& q) {
        double s = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
        return s;
    };
    const std::vector<double> u{0.25, 0.25, 0.25, 0.25};
    const std::vector<double> q{0.7, 0.1, 0.1, 0.1};
    CHECK(kl_divergence(Tensor::vector(u), Tensor::vector(u)) == 0.0);
    CHECK(std::abs(kl_divergence(Tensor::vector(u), Tensor::vector(q)) - direct(u, q)) < 1e-12);
    CHECK(std::abs(kl_divergence(Tensor::vector(q), Tensor::vector(u)) - direct(q, u)) < 1e-12);
    CHECK(kl_divergence(Tensor::vector({1, 0, 0}), Tensor::vector({0.5, 0.5, 0})) == doctest::Approx(std::log(2.0)));

    CHECK_THROWS_AS(kl_divergence(Tensor::vector({0.5, 0.5}), Tensor::vector({1.0, 0.0})), Error);
    CHECK_THROWS_AS(kl_divergence(Tensor::vector({0.5, 0.6}), Tensor::vector({0.5, 0.5})), Error);

    const double err = gradcheck({Tensor::vector({0.3, 0.2, 0.4, 0.1})}, [&](Tape&, const std::vector<Var>& v) {
        return kl_divergence(Tensor::vector(q), v[0]);
    });
    CHECK(err < 1e-6);
}

TEST_CASE("backward basics") {
    ParamStore store;
    std::mt19937_64 rng(0);
    auto& p = store.add_uniform("w", {3, 4}, 4, rng);
    auto& untouched = store.add_uniform("u", {2}, 2, rng);
    store.zero_grad();
    Tape tape;
    tape.backward(sum(tape.param(p)));
    for (double g : p.grad.data()) CHECK(g == 1.0);
    for (double g : untouched.grad.data()) CHECK(g == 0.0);
    CHECK(untouched.grad.shape() == untouched.value.shape());
}

TEST_CASE("backward is deterministic") {
    auto run = [] {
        ParamStore store;
        std::mt19937_64 rng(5);
        auto& w = store.add_uniform("w", {4, 3}, 3, rng);
        auto& b = store.add_uniform("b", {4}, 4, rng);
        store.zero_grad();
        Tape tape;
        auto x = tape.constant(Tensor::vector({0.1, -0.4, 0.9}));
        auto h = tanh(add(linear(x, tape.param(w)), tape.param(b)));
        tape.backward(sum(mul(h, h)));
        return std::make_pair(w.grad.values(), b.grad.values());
    };
    CHECK(run() == run());
}

TEST_CASE("non-finite values are rejected") {
    Tape tape;
    auto x = tape.leaf(Tensor::vector({1e308, 1e308}));
    CHECK_THROWS_AS(scale(x, 10.0), Error);
}

TEST_CASE("softmax and sigmoid ranges") {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 100; ++k) {
        auto t = random_tensor({7}, rng, -30, 30);
        CHECK(std::abs(softmax(t).sum() - 1.0) < 1e-9);
        Tape tape(false);
        auto s = sigmoid(tape.constant(t));
        for (double v : s.value().data()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("property: every op passes finite differences over 100 seeds") {
    struct Case {
        const char* name;
        std::function<std::vector<Tensor>(std::mt19937_64&)> inputs;
        Builder f;
    };
    const std::vector<Case> cases = {
        {"add", [](std::mt19937_64& r) { return std::vector{random_tensor({3, 2}, r), random_tensor({3, 2}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(add(v[0], v[1]), 1); }},
        {"sub", [](std::mt19937_64& r) { return std::vector{random_tensor({4}, r), random_tensor({4}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(sub(v[0], v[1]), 2); }},
        {"mul", [](std::mt19937_64& r) { return std::vector{random_tensor({4}, r), random_tensor({4}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(mul(v[0], v[1]), 3); }},
        {"scale", [](std::mt19937_64& r) { return std::vector{random_tensor({5}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(scale(v[0], -1.7), 4); }},
        {"mul_scalar", [](std::mt19937_64& r) { return std::vector{random_tensor({5}, r), random_tensor({}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(mul_scalar(v[0], v[1]), 5); }},
        {"add_rowwise", [](std::mt19937_64& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({4}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(add_rowwise(v[0], v[1]), 6); }},
        {"tanh", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, -2, 2)}; },
         [](Tape&, const std::vector<Var>& v) { return project(tanh(v[0]), 7); }},
        {"sigmoid", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, -4, 4)}; },
         [](Tape&, const std::vector<Var>& v) { return project(sigmoid(v[0]), 8); }},
        {"relu", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, 0.1, 1)}; },
         [](Tape&, const std::vector<Var>& v) { return project(relu(sub(v[0], scale(v[0], 0.0))), 9); }},
        {"relu_negative", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, -1, -0.1)}; },
         [](Tape&, const std::vector<Var>& v) { return add(project(relu(v[0]), 10), sum(v[0])); }},
        {"reshape_transpose", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(transpose(reshape(v[0], {2, 3})), 11); }},
        {"row_stack", [](std::mt19937_64& r) { return std::vector{random_tensor({3, 4}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(stack_rows({row(v[0], 2), row(v[0], 0)}), 12); }},
        {"pick_sum_all", [](std::mt19937_64& r) { return std::vector{random_tensor({5}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return sum_all({pick(v[0], 1), scale(pick(v[0], 4), 3.0)}); }},
        {"mean_rows", [](std::mt19937_64& r) { return std::vector{random_tensor({4, 3}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(mean_rows(v[0]), 13); }},
        {"linear", [](std::mt19937_64& r) { return std::vector{random_tensor({4}, r), random_tensor({3, 4}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(linear(v[0], v[1]), 14); }},
        {"linear_batched", [](std::mt19937_64& r) { return std::vector{random_tensor({5, 4}, r), random_tensor({3, 4}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(linear(v[0], v[1]), 15); }},
        {"weighted_rows", [](std::mt19937_64& r) { return std::vector{random_tensor({5}, r), random_tensor({5, 3}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(weighted_rows(v[0], v[1]), 16); }},
        {"softmax", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, -3, 3)}; },
         [](Tape&, const std::vector<Var>& v) { return project(softmax(v[0]), 17); }},
        {"log_softmax", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, -3, 3)}; },
         [](Tape&, const std::vector<Var>& v) { return project(log_softmax(v[0]), 18); }},
        {"apply_mask_multiply", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, -3, 3)}; },
         [](Tape&, const std::vector<Var>& v) {
             return project(log_softmax(apply_mask(v[0], MaskVector::parse("101100"), MaskMode::Multiply)), 19);
         }},
        {"apply_mask_neg_inf", [](std::mt19937_64& r) { return std::vector{random_tensor({6}, r, -3, 3)}; },
         [](Tape&, const std::vector<Var>& v) {
             return pick(log_softmax(apply_mask(v[0], MaskVector::parse("011010"), MaskMode::NegInf)), 1);
         }},
        {"kl_divergence", [](std::mt19937_64& r) { return std::vector{random_tensor({5}, r, 0.05, 1.0)}; },
         [](Tape&, const std::vector<Var>& v) {
             return kl_divergence(Tensor::vector({0.1, 0.3, 0.0, 0.4, 0.2}), softmax(v[0]));
         }},
        {"bce_with_logits", [](std::mt19937_64& r) { return std::vector{random_tensor({5}, r, -4, 4)}; },
         [](Tape&, const std::vector<Var>& v) { return bce_with_logits(v[0], Tensor::vector({0, 1, 0, 0, 1})); }},
        {"conv2d_stride1", [](std::mt19937_64& r) {
             return std::vector{random_tensor({2, 5, 4}, r), random_tensor({3, 2, 3, 3}, r), random_tensor({3}, r)};
         },
         [](Tape&, const std::vector<Var>& v) { return project(conv2d(v[0], v[1], v[2], 1), 20); }},
        {"conv2d_stride2", [](std::mt19937_64& r) {
             return std::vector{random_tensor({1, 6, 5}, r), random_tensor({2, 1, 3, 3}, r), random_tensor({2}, r)};
         },
         [](Tape&, const std::vector<Var>& v) { return project(conv2d(v[0], v[1], v[2], 2), 21); }},
        {"adaptive_avg_pool", [](std::mt19937_64& r) { return std::vector{random_tensor({5, 7}, r)}; },
         [](Tape&, const std::vector<Var>& v) { return project(adaptive_avg_pool(v[0], 2, 3), 22); }},
        {"gru_cell", [](std::mt19937_64& r) {
             auto p = gru_params(2, 3, r);
             p.push_back(random_tensor({2}, r));
             p.push_back(random_tensor({3}, r));
             return p;
         },
         [](Tape&, const std::vector<Var>& v) { return project(gru_cell(v[9], v[10], gru_weights(v, 0)), 23); }},
    };
    for (const auto& c : cases) {
        double worst = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            std::mt19937_64 rng(seed * 7919 + 1);
            worst = std::max(worst, gradcheck(c.inputs(rng), c.f));
        }
        INFO(c.name);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("conv2d against a direct loop") {
    std::mt19937_64 rng(4);
    auto x = random_tensor({2, 6, 5}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    for (int stride : {1, 2}) {
        Tape tape(false);
        auto out = conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride).value();
        const int Ho = (6 + stride - 1) / stride, Wo = (5 + stride - 1) / stride;
        REQUIRE(out.shape() == Shape{3, Ho, Wo});
        for (int o = 0; o < 3; ++o)
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    double s = b[o];
                    for (int c = 0; c < 2; ++c)
                        for (int di = 0; di < 3; ++di)
                            for (int dj = 0; dj < 3; ++dj) {
                                const int r = i * stride + di - 1, q = j * stride + dj - 1;
                                if (r < 0 || r >= 6 || q < 0 || q >= 5) continue;
                                s += w[((o * 2 + c) * 3 + di) * 3 + dj] * x[(c * 6 + r) * 5 + q];
                            }
                    CHECK(std::abs(out[(o * Ho + i) * Wo + j] - s) < 1e-12);
                }
    }
}

TEST_CASE("bce_with_logits is stable at large logits") {
    Tape tape(false);
    auto l = bce_with_logits(tape.constant(Tensor::vector({800.0, -800.0})), Tensor::vector({1.0, 0.0}));
    CHECK(l.item() == doctest::Approx(0.0));
    auto l2 = bce_with_logits(tape.constant(Tensor::vector({0.0})), Tensor::vector({1.0}));
    CHECK(l2.item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("Adadelta") {
    ParamStore store;
    auto& p = store.add("x", Tensor::vector({1.0, -2.0}));
    p.grad = Tensor::vector({0.5, -1.0});
    Adadelta opt(0.95, 1e-8, 1.0);
    opt.step(store);
    // First step by hand: E[g^2] = 0.05 g^2, dx = -sqrt(eps)/sqrt(E[g^2]+eps) g.
    for (int i = 0; i < 2; ++i) {
        const double g = i == 0 ? 0.5 : -1.0;
        const double eg2 = 0.05 * g * g;
        const double dx = -std::sqrt(1e-8) / std::sqrt(eg2 + 1e-8) * g;
        CHECK(std::abs(p.value[i] - ((i == 0 ? 1.0 : -2.0) + dx)) < 1e-15);
    }

    // Exported state restores an identical trajectory.
    ParamStore other;
    auto& q = other.add("x", p.value);
    Adadelta opt2(0.95, 1e-8, 1.0);
    opt2.import_state(opt.export_state());
    p.grad = Tensor::vector({0.2, 0.3});
    q.grad = p.grad;
    opt.step(store);
    opt2.step(other);
    CHECK(p.value.values() == q.value.values());
}

TEST_CASE("ParamStore") {
    ParamStore store;
    std::mt19937_64 rng(1);
    auto& w = store.add_uniform("w", {10, 20}, 20, rng);
    const double bound = 1.0 / std::sqrt(20.0);
    for (double v : w.value.data()) CHECK(std::abs(v) <= bound);
    CHECK(w.grad.shape() == w.value.shape());
    CHECK_THROWS_AS(store.add("w", Tensor({1})), Error);
    CHECK(store.scalar_count() == 200);
    CHECK_THROWS_AS(store.get("missing"), Error);
}

TEST_CASE("checkpoint round trip") {
    Checkpoint ck;
    ck.meta = "dim=4\nseed=3\n";
    ck.records.emplace_back("a", Tensor({2, 3}, std::vector<double>{1, 2, 3, 4, 5, -6.5}));
    ck.records.emplace_back("b", Tensor::scalar(0.125));
    const auto bytes = encode_checkpoint(ck);
    CHECK(bytes.substr(0, 4) == "TDCK");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1); // little-endian version
    auto back = decode_checkpoint(bytes);
    CHECK(back.version == 1);
    CHECK(back.meta == ck.meta);
    REQUIRE(back.records.size() == 2);
    CHECK(back.records[0].first == "a");
    CHECK(back.records[0].second.shape() == Shape{2, 3});
    CHECK(back.records[0].second.values() == ck.records[0].second.values());
    CHECK(back.records[1].second.item() == 0.125);

    CHECK_THROWS_AS(decode_checkpoint("XXXX"), Error);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), Error);
    CHECK_THROWS_AS(read_checkpoint("/nonexistent/file.ckpt"), Error);
}
