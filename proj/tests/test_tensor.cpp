// Copyright 2026 The CERM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <vector>

#include "cerm/checkpoint.hpp"
#include "cerm/graph.hpp"
#include "cerm/optim.hpp"
#include "cerm/rng.hpp"
#include "cerm/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace cerm;

namespace {

// Runs the finite-difference oracle against the tape for an op composed into
// a scalar via dot() with fixed random weights.
void check_op_gradients(const std::vector<Shape>& shapes,
                        const std::function<Value(Graph&, std::vector<Value>&)>& build,
                        std::uint64_t seed, double tol = 1e-4) {
    Rng rng(seed);
    std::vector<std::vector<double>> vals;
    std::size_t total = 0;
    for (const Shape& s : shapes) {
        vals.push_back(gradcheck::random_values(shape_numel(s), rng));
        total += shape_numel(s);
    }

    auto eval = [&](const std::vector<double>& flat) {
        Graph g;
        std::vector<Value> ins;
        std::size_t off = 0;
        for (const Shape& s : shapes) {
            const std::size_t n = shape_numel(s);
            std::vector<double> chunk(flat.begin() + off, flat.begin() + off + n);
            ins.push_back(g.input(Tensor(s, std::move(chunk)), true));
            off += n;
        }
        return build(g, ins).item();
    };

    std::vector<double> flat;
    for (const auto& v : vals) flat.insert(flat.end(), v.begin(), v.end());

    Graph g;
    std::vector<Value> ins;
    for (std::size_t i = 0; i < shapes.size(); ++i)
        ins.push_back(g.input(Tensor(shapes[i], vals[i]), true));
    Value loss = build(g, ins);
    g.backward(loss);
    std::vector<double> analytic;
    for (const Value& v : ins) {
        Tensor gt = v.grad();
        analytic.insert(analytic.end(), gt.values().begin(), gt.values().end());
    }

    auto rep = gradcheck::check(flat, eval, analytic);
    INFO("max rel err " << rep.max_rel_err << " at flat index " << rep.worst_index
                        << " analytic=" << rep.analytic_at_worst
                        << " numeric=" << rep.numeric_at_worst);
    CHECK(rep.ok(tol));
}

Value weighted(Graph& g, Value out, std::uint64_t seed) {
    Rng rng(seed);
    Tensor w(out.shape());
    for (double& v : w.values()) v = rng.uniform(-1.0, 1.0);
    return dot(out, g.constant(w));
}

}  // namespace

TEST_CASE("relu forward matches definition") {
    Graph g;
    Value y = relu(g.constant(Tensor::vec({-1, 0, 2})));
    CHECK(y.tensor().values() == std::vector<double>{0, 0, 2});

    Value z = relu(g.constant(Tensor::vec({0, 0, 0})));
    CHECK(z.tensor().values() == std::vector<double>{0, 0, 0});
}

TEST_CASE("relu gradient of sum at [-1, 2]") {
    Graph g;
    Value x = g.input(Tensor::vec({-1, 2}), true);
    Value loss = sum(relu(x));
    g.backward(loss);
    Tensor gt = x.grad();
    CHECK(gt[0] == 0.0);
    CHECK(gt[1] == 1.0);

    // independent finite-difference confirmation, h = 1e-6
    auto f = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x > 0 ? x : 0.0;
        return s;
    };
    auto rep = gradcheck::check({-1, 2}, f, {0.0, 1.0}, 1e-6);
    CHECK(rep.ok(1e-4));
}

TEST_CASE("softmax symmetry, stability, shift invariance") {
    Graph g;
    Value u = softmax(g.constant(Tensor::vec({0, 0, 0})));
    for (double v : u.tensor().values()) CHECK(v == Catch::Approx(1.0 / 3).margin(1e-15));

    Value s = softmax(g.constant(Tensor::vec({1000, 0, 0})));
    CHECK(s.tensor()[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(s.tensor()[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(s.tensor().all_finite());

    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto vals = gradcheck::random_values(5, rng, -3.0, 3.0);
        const double c = rng.uniform(-10.0, 10.0);
        auto shifted = vals;
        for (double& v : shifted) v += c;
        Graph gg;
        Value a = softmax(gg.constant(Tensor::vec(vals)));
        Value b = softmax(gg.constant(Tensor::vec(shifted)));
        double total = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(std::fabs(a.tensor()[i] - b.tensor()[i]) < 1e-12);
            total += a.tensor()[i];
        }
        CHECK(std::fabs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("linear with identity weights is identity") {
    Graph g;
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Value y = linear(g.constant(Tensor::vec({1.5, -2.0, 0.25})), g.constant(eye),
                     g.constant(Tensor::vec({0, 0, 0})));
    CHECK(y.tensor().values() == std::vector<double>{1.5, -2.0, 0.25});
}

TEST_CASE("concat of vectors") {
    Graph g;
    Value y = concat(g.constant(Tensor::vec({1, 2})), g.constant(Tensor::vec({3})));
    CHECK(y.tensor().values() == std::vector<double>{1, 2, 3});
}

TEST_CASE("dot self gradient is 2x") {
    Graph g;
    Value x = g.input(Tensor::vec({3.0}), true);
    Value loss = dot(x, x);
    g.backward(loss);
    CHECK(x.grad()[0] == Catch::Approx(6.0).margin(1e-12));

    auto f = [](const std::vector<double>& v) { return v[0] * v[0]; };
    auto rep = gradcheck::check({3.0}, f, {6.0});
    CHECK(rep.ok(1e-4));
}

TEST_CASE("shape mismatch diagnostics name both shapes") {
    Graph g;
    Value a = g.constant(Tensor::vec({1, 2, 3}));
    Value b = g.constant(Tensor::vec({1, 2}));
    try {
        add(a, b);
        FAIL("expected shape error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[3]") != std::string::npos);
        CHECK(msg.find("[2]") != std::string::npos);
    }
}

TEST_CASE("backward rejects non-scalar loss") {
    Graph g;
    Value x = g.input(Tensor::vec({1, 2}), true);
    Value y = relu(x);
    CHECK_THROWS_AS(g.backward(y), Error);
}

TEST_CASE("backward of softmax cross-entropy at uniform logits") {
    Graph g;
    Value logits = g.input(Tensor::vec({0, 0, 0}), true);
    Value p = softmax(logits);
    Tensor onehot = Tensor::vec({1, 0, 0});
    Value loss = scale(dot(log_floor(p), g.constant(onehot)), -1.0);
    g.backward(loss);
    Tensor gt = logits.grad();
    CHECK(gt[0] == Catch::Approx(-2.0 / 3).margin(1e-12));
    CHECK(gt[1] == Catch::Approx(1.0 / 3).margin(1e-12));
    CHECK(gt[2] == Catch::Approx(1.0 / 3).margin(1e-12));
}

TEST_CASE("constant loss leaves all gradients zero") {
    Graph g;
    Value x = g.input(Tensor::vec({1, 2, 3}), true);
    Value loss = g.constant(5.0);
    g.backward(loss);
    const Tensor gx = x.grad();
    for (double v : gx.values()) CHECK(v == 0.0);
}

TEST_CASE("gradient check: elementwise and reduction primitives") {
    check_op_gradients({{4}, {4}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, add(in[0], in[1]), 1);
    }, 101);
    check_op_gradients({{4}, {4}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, sub(in[0], in[1]), 2);
    }, 102);
    check_op_gradients({{4}, {4}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, mul(in[0], in[1]), 3);
    }, 103);
    check_op_gradients({{5}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, scale(in[0], -2.5), 4);
    }, 104);
    check_op_gradients({{6}}, [](Graph& g, std::vector<Value>& in) {
        return sum(in[0]);
    }, 105);
    check_op_gradients({{6}}, [](Graph& g, std::vector<Value>& in) {
        return mean(in[0]);
    }, 106);
    check_op_gradients({{5}, {5}}, [](Graph& g, std::vector<Value>& in) {
        return dot(in[0], in[1]);
    }, 107);
}

TEST_CASE("gradient check: relu and log away from their kinks") {
    // inputs nudged away from 0 (relu) and the floor (log) where central
    // differences straddle the nondifferentiable point
    Rng rng(42);
    std::vector<double> vals = gradcheck::random_values(6, rng);
    for (double& v : vals) {
        if (std::fabs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
    }
    Graph g;
    Value x = g.input(Tensor::vec(vals), true);
    Value loss = weighted(g, relu(x), 5);
    g.backward(loss);
    auto eval = [&](const std::vector<double>& flat) {
        Graph gg;
        Value xx = gg.input(Tensor::vec(flat), true);
        return weighted(gg, relu(xx), 5).item();
    };
    auto rep = gradcheck::check(vals, eval, x.grad().values());
    CHECK(rep.ok(1e-4));

    std::vector<double> pos = gradcheck::random_values(6, rng, 0.1, 2.0);
    Graph g2;
    Value x2 = g2.input(Tensor::vec(pos), true);
    Value loss2 = weighted(g2, log_floor(x2), 6);
    g2.backward(loss2);
    auto eval2 = [&](const std::vector<double>& flat) {
        Graph gg;
        Value xx = gg.input(Tensor::vec(flat), true);
        return weighted(gg, log_floor(xx), 6).item();
    };
    auto rep2 = gradcheck::check(pos, eval2, x2.grad().values());
    CHECK(rep2.ok(1e-4));
}

TEST_CASE("gradient check: shape primitives") {
    check_op_gradients({{3}, {4}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, concat(in[0], in[1]), 7);
    }, 108);
    check_op_gradients({{6}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, slice(in[0], 1, 4), 8);
    }, 109);
    check_op_gradients({{3, 6}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, slice_cols(in[0], 2, 5), 9);
    }, 110);
    check_op_gradients({{3, 2}, {3, 3}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, concat_cols({in[0], in[1]}), 10);
    }, 111);
    check_op_gradients({{3, 4}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, transpose(in[0]), 11);
    }, 112);
}

TEST_CASE("gradient check: matmul, linear, softmax, gather, layer norm, cosine") {
    check_op_gradients({{3, 4}, {4, 2}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, matmul(in[0], in[1]), 12);
    }, 113);
    check_op_gradients({{5}, {5, 3}, {3}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, linear(in[0], in[1], in[2]), 13);
    }, 114);
    check_op_gradients({{2, 5}, {5, 3}, {3}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, linear(in[0], in[1], in[2]), 14);
    }, 115);
    check_op_gradients({{5}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, softmax(in[0]), 15);
    }, 116);
    check_op_gradients({{3, 4}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, softmax(in[0], 1), 16);
    }, 117);
    check_op_gradients({{3, 4}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, softmax(in[0], 0), 17);
    }, 118);
    check_op_gradients({{4, 3}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, gather_rows(in[0], {2, 0, 2, 1}), 18);
    }, 119);
    check_op_gradients({{3, 6}, {6}, {6}}, [](Graph& g, std::vector<Value>& in) {
        return weighted(g, layer_norm(in[0], in[1], in[2]), 19);
    }, 120);
    check_op_gradients({{5}, {5}}, [](Graph& g, std::vector<Value>& in) {
        return cosine_similarity(in[0], in[1]);
    }, 121);
}

TEST_CASE("gradient check: dropout with a pinned mask") {
    check_op_gradients({{8}}, [](Graph& g, std::vector<Value>& in) {
        Rng mask_rng(99);
        return weighted(g, dropout(in[0], 0.5, mask_rng, true), 20);
    }, 122);
}

TEST_CASE("dropout identity at eval time, inverted scaling at train time") {
    Graph g;
    Rng rng(3);
    Value x = g.constant(Tensor::vec({1, 2, 3, 4}));
    Value eval_out = dropout(x, 0.5, rng, false);
    CHECK(eval_out.tensor().values() == x.tensor().values());

    Rng rng2(3);
    Value train_out = dropout(x, 0.5, rng2, true);
    for (std::size_t i = 0; i < 4; ++i) {
        const double v = train_out.tensor()[i];
        CHECK((v == 0.0 || v == Catch::Approx(x.tensor()[i] * 2.0)));
    }
}

TEST_CASE("cosine similarity zero-norm convention") {
    Graph g;
    Value z = g.input(Tensor::vec({0, 0}), true);
    Value a = g.constant(Tensor::vec({1, 2}));
    Value c = cosine_similarity(z, a);
    CHECK(c.item() == 0.0);
    g.backward(c);
    CHECK(z.grad().values() == std::vector<double>{0, 0});
}

TEST_CASE("adam first step and identities") {
    SECTION("unit gradient, lr 1e-3") {
        ParamMap params{{"w", Tensor::scalar(0.0)}};
        GradMap grads{{"w", Tensor::scalar(1.0)}};
        AdamState state;
        adam_step(params, grads, state, 1e-3);
        const double expected = -(1e-3 * (0.1 / 0.1) / (std::sqrt(0.001 / 0.001) + 1e-8));
        CHECK(params.at("w").item() == Catch::Approx(expected).margin(1e-15));
        CHECK(params.at("w").item() == Catch::Approx(-9.99999e-4).margin(1e-8));
        CHECK(state.step == 1);
    }
    SECTION("zero gradient gives zero delta") {
        ParamMap params{{"w", Tensor::vec({1.0, -2.0})}};
        GradMap grads{{"w", Tensor::vec({0.0, 0.0})}};
        AdamState state;
        adam_step(params, grads, state, 0.01);
        CHECK(params.at("w").values() == std::vector<double>{1.0, -2.0});
    }
    SECTION("identical state and inputs give identical results") {
        auto run = [] {
            ParamMap params{{"w", Tensor::vec({0.5, -0.25, 3.0})}};
            GradMap grads{{"w", Tensor::vec({0.1, -0.7, 0.3})}};
            AdamState state;
            for (int i = 0; i < 5; ++i) adam_step(params, grads, state, 2e-3);
            return params.at("w").values();
        };
        CHECK(run() == run());
    }
    SECTION("shape mismatch rejected") {
        ParamMap params{{"w", Tensor::vec({1.0, 2.0})}};
        GradMap grads{{"w", Tensor::vec({1.0})}};
        AdamState state;
        CHECK_THROWS_AS(adam_step(params, grads, state, 1e-3), Error);
    }
}

namespace {

// Mean cross-entropy of softmax(x . w) over a toy batch; used to compare
// micro-batch accumulation against the full-batch gradient.
GradMap toy_batch_grad(const std::vector<std::vector<double>>& batch,
                       const std::vector<double>& wvals) {
    Graph g;
    Value w = g.input(Tensor::vec(wvals), true);
    Value total = g.constant(0.0);
    for (const auto& x : batch) {
        Value logits = mul(g.constant(Tensor::vec(x)), w);
        Value p = softmax(logits);
        Value loss_i = scale(dot(log_floor(p), g.constant(Tensor::vec({1, 0, 0}))), -1.0);
        total = add(total, loss_i);
    }
    Value loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    g.backward(loss);
    return {{"w", w.grad()}};
}

}  // namespace

TEST_CASE("gradient accumulation equals full-batch gradient") {
    Rng rng(77);
    std::vector<std::vector<double>> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(gradcheck::random_values(3, rng));
    const std::vector<double> w = gradcheck::random_values(3, rng);

    GradMap full = toy_batch_grad(batch, w);

    SECTION("k = 1 is a plain step") {
        GradAccumulator acc;
        acc.add(full, 4);
        GradMap out = acc.finalize();
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(out.at("w")[i] == Catch::Approx(full.at("w")[i]).margin(1e-15));
    }

    SECTION("2 + 2 split equals full batch within 1e-10") {
        GradAccumulator acc;
        acc.add(toy_batch_grad({batch[0], batch[1]}, w), 2);
        acc.add(toy_batch_grad({batch[2], batch[3]}, w), 2);
        GradMap out = acc.finalize();
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(std::fabs(out.at("w")[i] - full.at("w")[i]) < 1e-10);
    }

    SECTION("arbitrary partition equals full batch within 1e-10") {
        GradAccumulator acc;
        acc.add(toy_batch_grad({batch[0]}, w), 1);
        acc.add(toy_batch_grad({batch[1], batch[2], batch[3]}, w), 3);
        GradMap out = acc.finalize();
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(std::fabs(out.at("w")[i] - full.at("w")[i]) < 1e-10);
    }

    SECTION("empty micro-batch rejected") {
        GradAccumulator acc;
        CHECK_THROWS_AS(acc.add(full, 0), Error);
    }

    SECTION("empty accumulation window rejected") {
        GradAccumulator acc;
        CHECK_THROWS_AS(acc.finalize(), Error);
    }
}

TEST_CASE("single-threaded determinism is bit-exact") {
    auto run = [] {
        Rng rng(123);
        Graph g;
        Value x = g.input(Tensor::vec(gradcheck::random_values(8, rng)), true);
        Value w = g.input(Tensor(Shape{8, 4}, gradcheck::random_values(32, rng)), true);
        Value b = g.input(Tensor::vec(gradcheck::random_values(4, rng)), true);
        Value p = softmax(relu(linear(x, w, b)));
        Value loss = scale(dot(log_floor(p), g.constant(Tensor::vec({0, 1, 0, 0}))), -1.0);
        g.backward(loss);
        std::vector<double> out = p.tensor().values();
        auto gw = w.grad().values();
        out.insert(out.end(), gw.begin(), gw.end());
        out.push_back(loss.item());
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), Error);
    CHECK_THROWS_AS(Tensor(Shape{0}), Error);
    Tensor t({2, 2}, {1, 2, 3, 4});
    CHECK(t.size() == 4);
    CHECK(t.at(1, 0) == 3.0);
    CHECK(t.all_finite());
}

TEST_CASE("checkpoint round-trips named tensors exactly") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "cerm_test_ckpt.txt";

    Rng rng(5);
    Checkpoint ckpt;
    ckpt.meta["class_order"] = "negative,neutral,positive";
    ckpt.meta["static_dim"] = "200";
    ckpt.tensors.emplace("d1.weight", Tensor({3, 2}, gradcheck::random_values(6, rng)));
    ckpt.tensors.emplace("d1.bias", Tensor::vec({1e-17, -3.25, 0.1 + 0.2}));
    save_checkpoint(ckpt, path.string());

    Checkpoint back = load_checkpoint(path.string());
    CHECK(back.meta == ckpt.meta);
    REQUIRE(back.tensors.size() == 2);
    for (const auto& [name, t] : ckpt.tensors) {
        REQUIRE(back.tensors.count(name) == 1);
        CHECK(back.tensors.at(name).shape() == t.shape());
        CHECK(back.tensors.at(name).values() == t.values());
    }
    fs::remove(path);
}

TEST_CASE("checkpoint loader rejects foreign and truncated files") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "cerm_test_bad_ckpt.txt";
    {
        std::ofstream out(path);
        out << "NOT-A-CKPT\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), Error);
    {
        std::ofstream out(path);
        out << Checkpoint::kMagic << "\nmeta a b\n";
    }
    CHECK_THROWS_AS(load_checkpoint(path.string()), Error);
    fs::remove(path);
}
