#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>

#include "doctest.h"
#include "lgode/grad_check.hpp"
#include "lgode/ops.hpp"
#include "lgode/optim.hpp"
#include "lgode/params.hpp"
#include "test_util.hpp"

using namespace lgode;
using namespace lgode::ad;

TEST_CASE("forward examples") {
    Tape t;
    std::mt19937_64 rng(3);
    const Tensor a = testing::random_tensor({3, 4}, rng);
    Var y = matmul(t.constant(Tensor::identity(3)), t.constant(a));
    CHECK(max_abs_diff(y.value(), a) == 0.0);

    Var s = softmax(t.constant(Tensor::row({0, 0, 0})), Axis::cols);
    for (double v : s.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    Var r = relu(t.constant(Tensor::row({-1, 2})));
    CHECK(r.value()[0] == 0.0);
    CHECK(r.value()[1] == 2.0);
}

TEST_CASE("shape mismatch names the op and both shapes") {
    Tape t;
    Var a = t.constant(Tensor({2, 3}));
    Var b = t.constant(Tensor({4, 5}));
    try {
        matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("matmul") != std::string::npos);
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x5") != std::string::npos);
    }
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(add(t.constant(Tensor({2, 3})), t.constant(Tensor({2, 1}))), ShapeError);
}

TEST_CASE("leading-axis broadcasting only") {
    Tape t;
    Var a = t.variable(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    Var b = t.variable(Tensor::row({10, 20}));
    Var y = add(a, b);
    CHECK(y.value()(2, 1) == 26.0);
    t.backward(sum(y));
    const Tensor gb = t.grad(b);
    CHECK(gb[0] == 3.0);
    CHECK(gb[1] == 3.0);
}

TEST_CASE("backward examples") {
    {
        Tape t;
        Var x = t.variable(Tensor::row({3.0}));
        t.backward(sum(square(x)));
        CHECK(t.grad(x)[0] == doctest::Approx(6.0));
    }
    {
        Tape t;
        Var x = t.constant(Tensor({1, 2}, 1.0));
        Var w = t.variable(Tensor({2, 1}, {0.3, -0.7}));
        t.backward(sum(matmul(x, w)));
        const Tensor g = t.grad(w);
        CHECK(g[0] == 1.0);
        CHECK(g[1] == 1.0);
    }
    {
        std::mt19937_64 rng(4);
        const Tensor c = testing::random_tensor({1, 6}, rng);
        const Tensor x = testing::random_tensor({1, 6}, rng, -2, 2);
        auto f = [&c](Tape& t, Var v) { return sum(mul(softmax(v, Axis::cols), t.constant(c))); };
        CHECK(grad_check(f, x, 1e-5).passed(1e-6));
    }
}

TEST_CASE("non-scalar loss is rejected") {
    Tape t;
    Var x = t.variable(Tensor({2, 2}, 1.0));
    CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_CASE("grad_check examples") {
    std::mt19937_64 rng(5);
    const Tensor x = testing::random_tensor({1, 8}, rng);
    auto f = [](Tape&, Var v) { return sum(tanh(v)); };
    CHECK(grad_check(f, x, 1e-5).passed(1e-6));

    auto lin = [](Tape&, Var v) { return sum(v); };
    const auto r = grad_check(lin, testing::random_tensor({3, 3}, rng), 1e-5);
    CHECK(r.passed(1e-10));

    // Non-finite output is a failed check, not a crash.
    auto bad = [](Tape&, Var v) { return sum(log(v)); };
    const auto rb = grad_check(bad, Tensor::row({-1.0, 2.0}), 1e-5);
    CHECK_FALSE(rb.finite);
    CHECK_FALSE(rb.passed(1.0));
}

namespace {

// A primitive under test: builds a scalar from random inputs of given shapes.
struct PrimitiveCase {
    const char* name;
    std::vector<Shape> shapes;
    std::function<Var(Tape&, const std::vector<Var>&)> fn;
    double lo = -1.0, hi = 1.0;
    bool away_from_zero = false;
};

Var weighted(Tape& t, Var y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(y, t.constant(testing::random_tensor(y.shape(), rng))));
}

}  // namespace

TEST_CASE("every primitive matches central differences over 100 random trials") {
    const Index gidx = make_index({2, 0, 0, 1, 2});
    const Index seg = make_index({0, 1, 1, 3, 3, 3});
    auto pairs = std::make_shared<const kernels::PairList>(
        kernels::PairList::build(4, {{0, 1}, {1, 0}, {0, 2}, {2, 3}, {3, 2}, {3, 0}}));

    std::vector<PrimitiveCase> cases = {
        {"add", {{3, 4}, {3, 4}}, [](Tape& t, const auto& v) { return weighted(t, add(v[0], v[1]), 1); }},
        {"add_bcast", {{3, 4}, {1, 4}}, [](Tape& t, const auto& v) { return weighted(t, add(v[0], v[1]), 2); }},
        {"sub", {{3, 4}, {1, 4}}, [](Tape& t, const auto& v) { return weighted(t, sub(v[0], v[1]), 3); }},
        {"mul", {{3, 4}, {1, 4}}, [](Tape& t, const auto& v) { return weighted(t, mul(v[0], v[1]), 4); }},
        {"scale", {{2, 3}}, [](Tape& t, const auto& v) { return weighted(t, scale(v[0], -1.7), 5); }},
        {"add_scalar", {{2, 3}}, [](Tape& t, const auto& v) { return weighted(t, add_scalar(v[0], 0.3), 6); }},
        {"matmul", {{3, 5}, {5, 2}}, [](Tape& t, const auto& v) { return weighted(t, matmul(v[0], v[1]), 7); }},
        {"transpose", {{3, 5}}, [](Tape& t, const auto& v) { return weighted(t, transpose(v[0]), 8); }},
        {"concat_cols", {{3, 2}, {3, 4}},
         [](Tape& t, const auto& v) { return weighted(t, concat_cols(std::span<const Var>(v)), 9); }},
        {"concat_rows", {{2, 3}, {4, 3}},
         [](Tape& t, const auto& v) { return weighted(t, concat_rows(std::span<const Var>(v)), 10); }},
        {"slice_cols", {{3, 6}}, [](Tape& t, const auto& v) { return weighted(t, slice_cols(v[0], 1, 4), 11); }},
        {"slice_rows", {{5, 2}}, [](Tape& t, const auto& v) { return weighted(t, slice_rows(v[0], 2, 5), 12); }},
        {"broadcast", {{1, 3}}, [](Tape& t, const auto& v) { return weighted(t, broadcast_rows(v[0], 4), 13); }},
        {"sum_rows", {{3, 4}}, [](Tape& t, const auto& v) { return weighted(t, sum(v[0], Axis::rows), 14); }},
        {"sum_cols", {{3, 4}}, [](Tape& t, const auto& v) { return weighted(t, sum(v[0], Axis::cols), 15); }},
        {"mean", {{3, 4}}, [](Tape& t, const auto& v) { return weighted(t, mean(v[0], Axis::rows), 16); }},
        {"exp", {{2, 4}}, [](Tape& t, const auto& v) { return weighted(t, exp(v[0]), 17); }},
        {"log", {{2, 4}}, [](Tape& t, const auto& v) { return weighted(t, log(v[0]), 18); }, 0.2, 2.0},
        {"tanh", {{2, 4}}, [](Tape& t, const auto& v) { return weighted(t, tanh(v[0]), 19); }},
        {"relu", {{2, 4}}, [](Tape& t, const auto& v) { return weighted(t, relu(v[0]), 20); }, -1, 1, true},
        {"sigmoid", {{2, 4}}, [](Tape& t, const auto& v) { return weighted(t, sigmoid(v[0]), 21); }, -4, 4},
        {"softplus", {{2, 4}}, [](Tape& t, const auto& v) { return weighted(t, softplus(v[0]), 22); }, -4, 4},
        {"square", {{2, 4}}, [](Tape& t, const auto& v) { return weighted(t, square(v[0]), 23); }},
        {"softmax_cols", {{3, 4}}, [](Tape& t, const auto& v) { return weighted(t, softmax(v[0], Axis::cols), 24); }},
        {"softmax_rows", {{3, 4}}, [](Tape& t, const auto& v) { return weighted(t, softmax(v[0], Axis::rows), 25); }},
        {"gather", {{3, 4}}, [gidx](Tape& t, const auto& v) { return weighted(t, gather_rows(v[0], gidx), 26); }},
        {"segment_sum", {{6, 3}},
         [seg](Tape& t, const auto& v) { return weighted(t, segment_sum(v[0], seg, 4), 27); }},
        {"segment_softmax", {{6, 1}},
         [seg](Tape& t, const auto& v) { return weighted(t, segment_softmax(v[0], seg, 4), 28); }, -3, 3},
        {"row_dot", {{4, 3}, {4, 3}}, [](Tape& t, const auto& v) { return weighted(t, row_dot(v[0], v[1]), 29); }},
        {"scale_rows", {{4, 3}, {4, 1}},
         [](Tape& t, const auto& v) { return weighted(t, scale_rows(v[0], v[1]), 30); }},
        {"pair_relu_sum", {{4, 5}, {4, 5}},
         [pairs](Tape& t, const auto& v) { return weighted(t, pair_relu_sum(v[0], v[1], pairs), 31); }, -1, 1,
         true},
    };

    std::mt19937_64 rng(2024);
    for (const auto& c : cases) {
        CAPTURE(c.name);
        double worst = 0.0;
        int trials = 0;
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<Tensor> inputs;
            for (const Shape& s : c.shapes)
                inputs.push_back(c.away_from_zero ? testing::random_away_from_zero(s, rng)
                                                  : testing::random_tensor(s, rng, c.lo, c.hi));
            if (std::string(c.name) == "pair_relu_sum") {
                // keep p_i + q_j away from the relu kink
                bool near_kink = false;
                for (std::size_t i = 0; i < 4 && !near_kink; ++i)
                    for (std::size_t j = 0; j < 4 && !near_kink; ++j)
                        for (std::size_t k = 0; k < 5; ++k)
                            if (std::abs(inputs[0](i, k) + inputs[1](j, k)) < 1e-3) near_kink = true;
                if (near_kink) continue;
            }
            const auto r = grad_check(c.fn, inputs);
            REQUIRE(r.finite);
            worst = std::max(worst, r.max_rel_error);
            ++trials;
        }
        CHECK(trials >= 90);
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("fused pair_relu_sum equals the composite gather/relu/segment_sum") {
    std::mt19937_64 rng(9);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pr = {{0, 1}, {0, 2}, {1, 0}, {2, 1}, {2, 0}};
    auto pl = std::make_shared<const kernels::PairList>(kernels::PairList::build(3, pr));
    std::vector<std::uint32_t> is, js;
    for (auto [i, j] : pr) {
        is.push_back(i);
        js.push_back(j);
    }
    Tape t;
    Var p = t.constant(testing::random_tensor({3, 7}, rng));
    Var q = t.constant(testing::random_tensor({3, 7}, rng));
    Var fused = pair_relu_sum(p, q, pl);
    Var comp = segment_sum(relu(add(gather_rows(p, make_index(is)), gather_rows(q, make_index(js)))),
                           make_index(is), 3);
    CHECK(max_abs_diff(fused.value(), comp.value()) < 1e-14);
}

TEST_CASE("forward is deterministic and replayable") {
    std::mt19937_64 rng(10);
    const Tensor w = testing::random_tensor({4, 4}, rng), x = testing::random_tensor({3, 4}, rng);
    auto run = [&] {
        Tape t;
        Var y = softmax(tanh(matmul(t.constant(x), t.variable(w))), Axis::cols);
        return sum(square(y)).value().item();
    };
    const double a = run(), b = run();
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("tape keeps topological order and leaf gradients have matching shapes") {
    Tape t;
    Var a = t.variable(Tensor({2, 3}, 0.5));
    Var b = t.variable(Tensor({3, 1}, -0.25));
    Var c = t.constant(Tensor({2, 1}, 2.0));
    Var loss = sum(mul(matmul(a, b), c));
    for (NodeId k = 0; k < t.size(); ++k)
        for (NodeId p : t.parents(k)) CHECK(p < k);
    t.backward(loss);
    CHECK(t.grad(a).shape() == a.shape());
    CHECK(t.grad(b).shape() == b.shape());
}

TEST_CASE("parameter init and checkpoint round trip") {
    std::mt19937_64 rng(11);
    ParamSet ps;
    auto w = ps.add_weight("layer.weight", 16, 4, rng);
    auto b = ps.add_bias("layer.bias", 4);
    for (double v : ps[w].value.values()) CHECK(std::abs(v) <= 0.25);
    for (double v : ps[b].value.values()) CHECK(v == 0.0);

    const auto path = std::filesystem::temp_directory_path() / "lgode_ckpt_test.bin";
    ps.save(path);
    ParamSet other;
    std::mt19937_64 rng2(99);
    other.add_weight("layer.weight", 16, 4, rng2);
    other.add_bias("layer.bias", 4);
    other.load(path);
    CHECK(max_abs_diff(other[0].value, ps[w].value) == 0.0);

    ParamSet wrong;
    wrong.add_weight("layer.weight", 8, 4, rng2);
    wrong.add_bias("layer.bias", 4);
    try {
        wrong.load(path);
        FAIL("expected mismatch");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("layer.weight: checkpoint 16x4, model 8x4") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("adam update rule") {
    ParamSet ps;
    auto h = ps.add("w", Tensor::row({1.0, -2.0, 3.0}));
    Adam opt(ps, {.learning_rate = 0.1});

    ps.zero_grad();
    CHECK(opt.step(ps));
    CHECK(ps[h].value[0] == 1.0);
    CHECK(ps[h].value[1] == -2.0);

    // First step with gradient g moves each coordinate by -lr * sign(g).
    ps[h].grad = Tensor::row({0.5, -4.0, 1e-3});
    Adam fresh(ps, {.learning_rate = 0.1});
    fresh.step(ps);
    CHECK(ps[h].value[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(ps[h].value[1] == doctest::Approx(-1.9).epsilon(1e-6));
    CHECK(ps[h].value[2] == doctest::Approx(2.9).epsilon(1e-4));

    ps[h].grad = Tensor::row({std::nan(""), 0, 0});
    const Tensor before = ps[h].value;
    CHECK_FALSE(fresh.step(ps));
    CHECK(max_abs_diff(before, ps[h].value) == 0.0);
    CHECK(fresh.steps_skipped() == 1);
}

TEST_CASE("adam shrinks a quadratic bowl") {
    ParamSet ps;
    auto h = ps.add("w", Tensor::row({3.0, -4.0, 2.0, 1.0}));
    double n0 = 0;
    for (double v : ps[h].value.values()) n0 += v * v;
    Adam opt(ps, {.learning_rate = 0.05});
    for (int it = 0; it < 200; ++it) {
        for (std::size_t i = 0; i < 4; ++i) ps[h].grad[i] = 2.0 * ps[h].value[i];
        opt.step(ps);
    }
    double n1 = 0;
    for (double v : ps[h].value.values()) n1 += v * v;
    CHECK(std::sqrt(n1) * 100.0 <= std::sqrt(n0));
}
