#include <doctest.h>

#include <cmath>

#include "capnet/errors.hpp"
#include "capnet/gradcheck.hpp"
#include "capnet/params.hpp"
#include "capnet/rng.hpp"
#include "capnet/tape.hpp"
#include "capnet/tensor.hpp"

using namespace capnet;

TEST_CASE("tensor shape and data stay consistent") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), DimensionError);
    CHECK_THROWS_AS(t.reshaped({5}), DimensionError);
    t.at(1, 2) = 4.0;
    CHECK(t[5] == 4.0);
}

TEST_CASE("matmul identity, hand product, annihilator") {
    Tensor id({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(matmul(id, a) == a);

    Tensor row({1, 2}, {1, 2});
    Tensor col({2, 1}, {3, 4});
    CHECK(matmul(row, col)[0] == doctest::Approx(11.0).epsilon(1e-15));

    Tensor zero({2, 2});
    Tensor prod = matmul(zero, a);
    for (std::size_t i = 0; i < prod.size(); ++i) CHECK(prod[i] == 0.0);

    CHECK_THROWS_AS(matmul(a, Tensor({3, 2})), DimensionError);
    CHECK_THROWS_WITH_AS(matmul(a, Tensor({3, 2})), doctest::Contains("(2x2)"), DimensionError);
}

TEST_CASE("elementwise forward values") {
    Tensor x = Tensor::from_vector({0.0});
    CHECK(elementwise(x, Elt::sigmoid)[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(elementwise(x, Elt::tanh)[0] == 0.0);
    CHECK(elementwise(Tensor::from_vector({std::log(3.0)}), Elt::sigmoid)[0] ==
          doctest::Approx(0.75).epsilon(1e-12));
    CHECK_THROWS_AS(elementwise(Tensor::from_vector({0.0}), Elt::log), DomainError);
    CHECK_THROWS_AS(elementwise(Tensor::from_vector({-1.0}), Elt::log), DomainError);
}

TEST_CASE("softmax uniform, derived ratio, shift invariance, errors") {
    Tensor equal = Tensor::from_vector({1.5, 1.5, 1.5, 1.5});
    Tensor u = softmax_vec(equal);
    for (std::size_t i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(0.25).epsilon(1e-15));

    Tensor z = Tensor::from_vector({std::log(3.0), 0.0});
    Tensor p = softmax_vec(z);
    CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-12));

    RngStream rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.below(8);
        Tensor logits({n});
        for (std::size_t i = 0; i < n; ++i) logits[i] = rng.uniform(-5.0, 5.0);
        Tensor base = softmax_vec(logits);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += base[i];
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        const double c = rng.uniform(-30.0, 30.0);
        Tensor shifted(logits.shape());
        for (std::size_t i = 0; i < n; ++i) shifted[i] = logits[i] + c;
        Tensor after = softmax_vec(shifted);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(after[i] - base[i]) <= 1e-12);
    }
    CHECK_THROWS_AS(softmax_vec(Tensor()), DimensionError);
}

TEST_CASE("adam zero gradients leave parameters unchanged") {
    ParamStore params;
    params.add("w", Tensor::from_vector({1.0, -2.0, 3.0}));
    AdamState state = AdamState::init(params, 1e-3);
    adam_step(params, state);
    CHECK(params.get("w").value == Tensor::from_vector({1.0, -2.0, 3.0}));
    CHECK(state.t == 1);
}

TEST_CASE("adam first step moves by about -lr * sign(g)") {
    ParamStore params;
    params.add("w", Tensor::from_vector({0.5}));
    params.get("w").grad[0] = 0.037;
    AdamState state = AdamState::init(params, 1e-2, 0.8, 0.999, 1e-12);
    adam_step(params, state);
    CHECK(params.get("w").value[0] == doctest::Approx(0.5 - 1e-2).epsilon(1e-9));

    ParamStore p2;
    p2.add("w", Tensor::from_vector({0.5}));
    p2.get("w").grad[0] = -2.4;
    AdamState s2 = AdamState::init(p2, 1e-2, 0.8, 0.999, 1e-12);
    adam_step(p2, s2);
    CHECK(p2.get("w").value[0] == doctest::Approx(0.5 + 1e-2).epsilon(1e-9));
}

TEST_CASE("adam is deterministic across identical stores") {
    auto build = []() {
        ParamStore params;
        RngStream rng(5);
        params.add_gaussian("a", {4, 3}, 0.5, rng);
        params.add_gaussian("b", {7}, 0.5, rng);
        for (auto& [name, p] : params) {
            for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] = rng.normal();
        }
        return params;
    };
    ParamStore p1 = build(), p2 = build();
    AdamState s1 = AdamState::init(p1, 3e-4), s2 = AdamState::init(p2, 3e-4);
    for (int i = 0; i < 5; ++i) {
        adam_step(p1, s1);
        adam_step(p2, s2);
    }
    CHECK(p1.get("a").value == p2.get("a").value);
    CHECK(p1.get("b").value == p2.get("b").value);
}

TEST_CASE("adam missing moment tensor is a state error") {
    ParamStore params;
    params.add("w", Tensor::from_vector({1.0}));
    AdamState state = AdamState::init(params, 1e-3);
    state.m.erase("w");
    CHECK_THROWS_AS(adam_step(params, state), StateError);
}

TEST_CASE("lr schedule values and monotonicity") {
    CHECK(lr_schedule(10, 4e-4) == 4e-4);
    CHECK(lr_schedule(20, 4e-4) == 4e-4);
    CHECK(std::abs(lr_schedule(70, 1.0) - 0.5) <= 1e-12);
    const double e21 = lr_schedule(21, 4e-4);
    CHECK(std::abs(e21 - 4e-4 * std::pow(0.5, 0.02)) / e21 <= 1e-12);
    CHECK(e21 == doctest::Approx(3.9449e-4).epsilon(1e-4));

    double prev = lr_schedule(1, 7e-3);
    for (int epoch = 2; epoch <= 120; ++epoch) {
        const double cur = lr_schedule(epoch, 7e-3);
        CHECK(cur <= prev + 1e-18);
        if (epoch <= 20) CHECK(cur == 7e-3);
        prev = cur;
    }
    CHECK_THROWS_AS(lr_schedule(5, 0.0), ValidationError);
}

namespace {

// Quadratic loss 0.5 * ||theta||^2; analytic gradient is theta itself.
double quad_loss(ParamStore& params, bool with_grad) {
    double total = 0.0;
    for (auto& [name, p] : params) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            total += 0.5 * p.value[i] * p.value[i];
            if (with_grad) p.grad[i] += p.value[i];
        }
    }
    return total;
}

}  // namespace

TEST_CASE("grad_check accepts the quadratic loss at tight tolerance") {
    ParamStore params;
    RngStream rng(17);
    params.add_gaussian("theta", {20}, 1.0, rng);
    auto report = grad_check(quad_loss, params, 1e-4, 1e-8);
    CHECK(report.ok());
    CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("grad_check flags a corrupted gradient") {
    ParamStore params;
    RngStream rng(18);
    params.add_gaussian("theta", {8}, 1.0, rng);
    LossFn corrupted = [](ParamStore& ps, bool with_grad) {
        double total = 0.0;
        for (auto& [name, p] : ps) {
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                total += 0.5 * p.value[i] * p.value[i];
                if (with_grad) p.grad[i] += 2.0 * p.value[i];  // deliberately doubled
            }
        }
        return total;
    };
    auto report = grad_check(corrupted, params, 1e-4, 1e-4);
    CHECK_FALSE(report.ok());
    CHECK(report.max_rel_error > 0.4);
}

TEST_CASE("grad_check rejects out-of-range eps and non-finite losses") {
    ParamStore params;
    params.add("w", Tensor::from_vector({1.0}));
    CHECK_THROWS_AS(grad_check(quad_loss, params, 1e-2, 1e-4), ValidationError);
    LossFn bad = [](ParamStore&, bool) { return std::nan(""); };
    CHECK_THROWS_AS(grad_check(bad, params, 1e-5, 1e-4), EvaluationError);
}

TEST_CASE("every tape primitive matches central differences on seeded tensors") {
    RngStream rng(23);
    auto run = [&](const char* tag, std::size_t n,
                   const std::function<ad::Value(ad::Tape&, ad::Value)>& fn, double lo,
                   double hi) {
        ParamStore params;
        Tensor init({n});
        for (std::size_t i = 0; i < n; ++i) {
            init[i] = rng.uniform(lo, hi);
            if (std::abs(init[i]) < 0.05) init[i] += 0.1;  // keep clear of relu kinks
        }
        params.add("x", std::move(init));
        LossFn loss = [&](ParamStore& ps, bool with_grad) {
            ad::Tape tape;
            ad::Value x = tape.param(ps.get("x"));
            ad::Value y = fn(tape, x);
            ad::Value out = ad::sum(ad::mul(y, y));
            if (with_grad) tape.backward(out);
            return out.val()[0];
        };
        INFO(tag);
        auto report = grad_check(loss, params, 1e-5, 1e-6, 99);
        CHECK(report.ok());
    };

    run("sigmoid", 9, [](ad::Tape&, ad::Value x) { return ad::sigmoid(x); }, -2, 2);
    run("tanh", 9, [](ad::Tape&, ad::Value x) { return ad::tanh_(x); }, -2, 2);
    run("relu", 9, [](ad::Tape&, ad::Value x) { return ad::relu(x); }, -2, 2);
    run("exp", 9, [](ad::Tape&, ad::Value x) { return ad::exp_(x); }, -2, 2);
    run("log", 9, [](ad::Tape&, ad::Value x) { return ad::log_(x); }, 0.3, 3);
    run("softmax", 7, [](ad::Tape&, ad::Value x) { return ad::softmax(x); }, -2, 2);
    run("scale_add", 6,
        [](ad::Tape&, ad::Value x) { return ad::add(ad::scale(x, 1.7), x); }, -2, 2);
    run("slice_concat", 8,
        [](ad::Tape&, ad::Value x) {
            return ad::concat({ad::slice(x, 4, 4), ad::slice(x, 0, 4)});
        },
        -2, 2);
    run("matmul", 12,
        [](ad::Tape&, ad::Value x) {
            ad::Value m = ad::reshape(x, {3, 4});
            return ad::matmul(ad::transpose(m), m);
        },
        -2, 2);
    run("cross_entropy", 6,
        [](ad::Tape&, ad::Value x) { return ad::cross_entropy_logits(x, 2); }, -2, 2);
    run("clamp", 6, [](ad::Tape&, ad::Value x) { return ad::clamp(x, -0.8, 0.8); }, -2, 2);
    run("conv", 27,
        [](ad::Tape& t, ad::Value x) {
            ad::Value img = ad::reshape(x, {3, 3, 3});
            ad::Value k = t.constant(Tensor::full({2, 3, 2, 2}, 0.3));
            ad::Value b = t.constant(Tensor::from_vector({0.1, -0.2}));
            return ad::conv2d(img, k, b, 1, 1, 1, 1);
        },
        -2, 2);
    run("avgpool", 32,
        [](ad::Tape&, ad::Value x) {
            return ad::adaptive_avg_pool(ad::reshape(x, {2, 4, 4}), 3, 3);
        },
        -2, 2);
    run("maxpool", 32,
        [](ad::Tape&, ad::Value x) {
            return ad::maxpool2d(ad::reshape(x, {2, 4, 4}), 2, 2, 2, 2);
        },
        -2, 2);
}

TEST_CASE("rng stream is reproducible and bounded") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    RngStream c(43);
    for (int i = 0; i < 1000; ++i) {
        const double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(c.below(7) < 7);
    }
}
