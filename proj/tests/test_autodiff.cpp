#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "oracles.hpp"
#include "qasa/rng.hpp"
#include "qasa/tensor.hpp"

using namespace qasa;

namespace {

std::vector<double> random_values(std::size_t n, SplitMix64& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Gradient check harness: `build` maps a leaf tensor to a scalar loss.
void check_gradient(const Shape& shape,
                    const std::function<Tensor(const Tensor&)>& build,
                    std::uint64_t seed, double rel = 1e-4, double abs_small = 1e-6) {
    SplitMix64 rng(seed);
    const auto base = random_values(numel(shape), rng);

    Tape tape;
    Tensor x = tape.leaf(shape, base);
    Tensor loss = build(x);
    const auto grads = tape.backward(loss);
    const auto& analytic = grads.at(x);

    const auto numeric = oracle::finite_difference(
        [&](std::span<const double> v) {
            Tensor xv(shape, std::vector<double>(v.begin(), v.end()));
            return build(xv).scalar_value();
        },
        base);

    REQUIRE(analytic.size() == numeric.size());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        INFO("component " << i << " analytic=" << analytic[i]
                          << " numeric=" << numeric[i]);
        REQUIRE(oracle::grad_close(analytic[i], numeric[i], rel, abs_small));
    }
}

Tensor weighted_sum(const Tensor& t, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Tensor w(t.shape(), random_values(t.size(), rng));
    return sum(mul(t, w));
}

}  // namespace

TEST_CASE("matmul identity and hand cases") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor b({2, 2}, {3, 4, 5, 6});
    const Tensor c = matmul(eye, b);
    REQUIRE(c.values() == std::vector<double>{3, 4, 5, 6});

    const Tensor r = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
    REQUIRE(r.shape() == Shape{1, 1});
    REQUIRE(r[0] == 11.0);
}

TEST_CASE("matmul rejects mismatched shapes") {
    const Tensor a({2, 3}, std::vector<double>(6, 1.0));
    const Tensor b({2, 2}, std::vector<double>(4, 1.0));
    REQUIRE_THROWS_MATCHES(matmul(a, b), DimensionError,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("[2x3]") &&
                               Catch::Matchers::ContainsSubstring("[2x2]")));
}

TEST_CASE("matmul gradient matches finite differences") {
    SplitMix64 rng(11);
    const Tensor b({3, 3}, random_values(9, rng));
    check_gradient({3, 3}, [&](const Tensor& a) { return sum(matmul(a, b)); }, 12,
                   1e-6, 1e-9);
    const Tensor a({3, 3}, random_values(9, rng));
    check_gradient({3, 3}, [&](const Tensor& bb) { return sum(matmul(a, bb)); }, 13,
                   1e-6, 1e-9);
}

TEST_CASE("layer_norm analytic cases") {
    const Tensor gain({3}, {1, 1, 1});
    const Tensor bias({3}, {0, 0, 0});
    const Tensor y = layer_norm(Tensor({3}, {1, 1, 1}), gain, bias, 1e-5);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(y[i] == 0.0);

    const Tensor y2 = layer_norm(Tensor({2}, {0, 2}), Tensor({2}, {1, 1}),
                                 Tensor({2}, {0, 0}), 0.0);
    REQUIRE_THAT(y2[0], Catch::Matchers::WithinAbs(-1.0, 1e-14));
    REQUIRE_THAT(y2[1], Catch::Matchers::WithinAbs(1.0, 1e-14));
}

TEST_CASE("layer_norm rejects empty last axis") {
    const Tensor x({0}, {});
    const Tensor g({0}, {});
    REQUIRE_THROWS_AS(layer_norm(x, g, g, 1e-5), DimensionError);
}

TEST_CASE("layer_norm gradient matches finite differences") {
    SplitMix64 rng(21);
    const Tensor gain({4}, random_values(4, rng));
    const Tensor bias({4}, random_values(4, rng));
    check_gradient({4}, [&](const Tensor& x) {
        return weighted_sum(layer_norm(x, gain, bias, 1e-5), 22);
    }, 23, 1e-5, 1e-7);

    // gain and bias sides
    const Tensor x({2, 4}, random_values(8, rng));
    check_gradient({4}, [&](const Tensor& g) {
        return weighted_sum(layer_norm(x, g, bias, 1e-5), 24);
    }, 25, 1e-5, 1e-7);
    check_gradient({4}, [&](const Tensor& b) {
        return weighted_sum(layer_norm(x, gain, b, 1e-5), 26);
    }, 27, 1e-5, 1e-7);
}

TEST_CASE("softmax_last symmetry and stability") {
    const Tensor y = softmax_last(Tensor({2}, {0, 0}));
    REQUIRE(y[0] == 0.5);
    REQUIRE(y[1] == 0.5);
    const Tensor big = softmax_last(Tensor({2}, {1000, 1000}));
    REQUIRE(big[0] == 0.5);
    REQUIRE(big[1] == 0.5);
}

TEST_CASE("softmax_last rows sum to one") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor y = softmax_last(Tensor({8}, random_values(8, rng)));
        double s = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            REQUIRE(y[i] >= 0.0);
            REQUIRE(y[i] <= 1.0);
            s += y[i];
        }
        REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("softmax_last gradient matches finite differences") {
    check_gradient({6}, [&](const Tensor& x) {
        return weighted_sum(softmax_last(x), 33);
    }, 34, 1e-5, 1e-8);
}

TEST_CASE("gelu values and derivative") {
    const Tensor z = gelu(Tensor::scalar(0.0));
    REQUIRE(z[0] == 0.0);
    const Tensor ten = gelu(Tensor::scalar(10.0));
    REQUIRE_THAT(ten[0], Catch::Matchers::WithinAbs(10.0, 1e-6));

    Tape tape;
    Tensor x = tape.leaf({1}, {0.0});
    const auto grads = tape.backward(sum(gelu(x)));
    REQUIRE_THAT(grads.at(x)[0], Catch::Matchers::WithinAbs(0.5, 1e-8));
}

TEST_CASE("gelu gradient matches finite differences") {
    check_gradient({5}, [&](const Tensor& x) { return weighted_sum(gelu(x), 41); },
                   42, 1e-5, 1e-8);
}

TEST_CASE("elementwise basics") {
    REQUIRE(tanh(Tensor::scalar(0.0))[0] == 0.0);

    const Tensor x({2, 2}, {1, 2, 3, 4});
    const Tensor y = add(x, Tensor::zeros({2, 2}));
    REQUIRE(y.values() == x.values());

    const Tensor m({3, 2}, {1, 2, 3, 4, 5, 6});
    const Tensor last = slice_last_timestep(m);
    REQUIRE(last.shape() == Shape{2});
    REQUIRE(last.values() == std::vector<double>{5, 6});

    REQUIRE_THROWS_AS(add(x, Tensor({3}, {1, 2, 3})), DimensionError);
}

TEST_CASE("scalar broadcast add and mul") {
    const Tensor x({3}, {1, 2, 3});
    const Tensor s = Tensor::scalar(2.0);
    REQUIRE(add(x, s).values() == std::vector<double>{3, 4, 5});
    REQUIRE(add(s, x).values() == std::vector<double>{3, 4, 5});
    REQUIRE(mul(x, s).values() == std::vector<double>{2, 4, 6});
    REQUIRE(sub(x, s).values() == std::vector<double>{-1, 0, 1});
}

TEST_CASE("elementwise gradients match finite differences") {
    check_gradient({4}, [&](const Tensor& x) { return weighted_sum(tanh(x), 51); },
                   52, 1e-5, 1e-8);
    SplitMix64 rng(53);
    const Tensor other({4}, random_values(4, rng));
    check_gradient({4}, [&](const Tensor& x) {
        return weighted_sum(mul(x, other), 54);
    }, 55, 1e-6, 1e-9);
    check_gradient({4}, [&](const Tensor& x) {
        return weighted_sum(sub(other, x), 56);
    }, 57, 1e-6, 1e-9);
    check_gradient({4}, [&](const Tensor& x) {
        return weighted_sum(scale(x, -1.7), 58);
    }, 59, 1e-6, 1e-9);
    check_gradient({1}, [&](const Tensor& s) {
        return weighted_sum(add(other, s), 60);
    }, 61, 1e-6, 1e-9);
}

TEST_CASE("linear transpose concat stack slice gradients") {
    SplitMix64 rng(71);
    const Tensor x({3, 2}, random_values(6, rng));
    const Tensor w({2, 4}, random_values(8, rng));
    const Tensor b({4}, random_values(4, rng));
    check_gradient({3, 2}, [&](const Tensor& xx) {
        return weighted_sum(linear(xx, w, b), 72);
    }, 73, 1e-5, 1e-8);
    check_gradient({2, 4}, [&](const Tensor& ww) {
        return weighted_sum(linear(x, ww, b), 74);
    }, 75, 1e-5, 1e-8);
    check_gradient({4}, [&](const Tensor& bb) {
        return weighted_sum(linear(x, w, bb), 76);
    }, 77, 1e-5, 1e-8);
    check_gradient({3, 2}, [&](const Tensor& xx) {
        return weighted_sum(transpose(xx), 78);
    }, 79, 1e-6, 1e-9);
    check_gradient({2, 3}, [&](const Tensor& xx) {
        return weighted_sum(concat_cols({xx, scale(xx, 2.0)}), 80);
    }, 81, 1e-5, 1e-8);
    check_gradient({4}, [&](const Tensor& r) {
        return weighted_sum(stack_rows({r, tanh(r)}), 82);
    }, 83, 1e-5, 1e-8);
    check_gradient({3, 2}, [&](const Tensor& xx) {
        return weighted_sum(slice_row(xx, 1), 84);
    }, 85, 1e-6, 1e-9);
    check_gradient({6}, [&](const Tensor& xx) {
        return weighted_sum(reshape(xx, {2, 3}), 86);
    }, 87, 1e-6, 1e-9);
    check_gradient({5}, [&](const Tensor& xx) { return mean(xx); }, 88, 1e-6, 1e-9);
}

TEST_CASE("backward hand cases") {
    Tape tape;
    Tensor x = tape.leaf({3}, {1, -2, 3});
    const auto g1 = tape.backward(sum(x));
    REQUIRE(g1.at(x) == std::vector<double>{1, 1, 1});

    Tape tape2;
    Tensor x2 = tape2.leaf({3}, {1, -2, 3});
    const auto g2 = tape2.backward(scale(sum(mul(x2, x2)), 0.5));
    REQUIRE(g2.at(x2) == std::vector<double>{1, -2, 3});
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape tape;
    Tensor x = tape.leaf({3}, {1, 2, 3});
    Tensor y = scale(x, 2.0);
    REQUIRE_THROWS_AS(tape.backward(y), ContractViolation);
}

TEST_CASE("fan-out accumulates exactly") {
    Tape tape;
    Tensor x = tape.leaf({2}, {0.3, -0.4});
    const auto g = tape.backward(sum(add(x, x)));
    REQUIRE(g.at(x) == std::vector<double>{2.0, 2.0});
}

TEST_CASE("unused parameters receive zero gradients, not absent") {
    Tape tape;
    Tensor used = tape.leaf({2}, {1, 2});
    Tensor unused = tape.leaf({3}, {4, 5, 6});
    const auto g = tape.backward(sum(used));
    REQUIRE(g.at(unused) == std::vector<double>{0, 0, 0});
}

TEST_CASE("tape replay produces bit-identical gradients") {
    SplitMix64 rng(91);
    const auto vals = random_values(6, rng);
    auto run = [&]() {
        Tape tape;
        Tensor x = tape.leaf({2, 3}, vals);
        Tensor y = layer_norm(gelu(matmul(x, transpose(x))),
                              Tensor({2}, {1.0, 0.5}), Tensor({2}, {0.1, -0.1}),
                              1e-5);
        return tape.backward(sum(y)).at(x);
    };
    REQUIRE(run() == run());
}

TEST_CASE("no-grad guard suspends recording") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1, 2});
    {
        NoGradGuard guard(tape);
        Tensor y = scale(x, 3.0);
        REQUIRE(y.node() == -1);
        REQUIRE_FALSE(y.requires_grad());
    }
    Tensor z = scale(x, 3.0);
    REQUIRE(z.node() >= 0);
}

TEST_CASE("tape reset truncates to watermark") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1, 2});
    const auto watermark = tape.mark();
    for (int i = 0; i < 5; ++i) {
        Tensor y = sum(scale(x, static_cast<double>(i)));
        tape.backward(y);
        tape.reset_to(watermark);
    }
    REQUIRE(tape.num_nodes() == watermark);
}

TEST_CASE("custom_node linear map matches native scale bit-exactly") {
    const std::vector<double> vals{0.5, -1.5, 2.5};

    Tape t1;
    Tensor a = t1.leaf({3}, vals);
    const auto native = t1.backward(weighted_sum(scale(a, 2.0), 101)).at(a);

    Tape t2;
    Tensor b = t2.leaf({3}, vals);
    Tensor doubled = custom_node(
        {b}, {3},
        [](const auto& ins) {
            std::vector<double> out(ins[0].begin(), ins[0].end());
            for (auto& v : out) v *= 2.0;
            return out;
        },
        [](const auto&) {
            std::vector<double> jac(9, 0.0);
            for (int i = 0; i < 3; ++i) jac[i * 3 + i] = 2.0;
            return std::vector<std::vector<double>>{jac};
        });
    const auto wrapped = t2.backward(weighted_sum(doubled, 101)).at(b);
    REQUIRE(native == wrapped);
}

TEST_CASE("custom_node zero Jacobian annihilates upstream gradient") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1.0, 2.0});
    Tensor y = custom_node(
        {x}, {2},
        [](const auto& ins) {
            return std::vector<double>(ins[0].begin(), ins[0].end());
        },
        [](const auto&) {
            return std::vector<std::vector<double>>{std::vector<double>(4, 0.0)};
        });
    const auto g = tape.backward(sum(y));
    REQUIRE(g.at(x) == std::vector<double>{0.0, 0.0});
}

TEST_CASE("custom_node rejects Jacobian shape mismatch") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1.0, 2.0});
    Tensor y = custom_node(
        {x}, {2},
        [](const auto& ins) {
            return std::vector<double>(ins[0].begin(), ins[0].end());
        },
        [](const auto&) {
            return std::vector<std::vector<double>>{std::vector<double>(3, 0.0)};
        });
    REQUIRE_THROWS_AS(tape.backward(sum(y)), DimensionError);
}

TEST_CASE("forward outputs stay finite on finite inputs") {
    SplitMix64 rng(111);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor x({4, 4}, random_values(16, rng));
        const Tensor y = softmax_last(
            layer_norm(gelu(matmul(x, x)), Tensor::full({4}, 1.0),
                       Tensor::zeros({4}), 1e-5));
        for (const double v : y.data()) REQUIRE(std::isfinite(v));
    }
}
