#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace fe2e;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, bool requires_grad = true, double scl = 1.0) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    std::vector<double> data(static_cast<std::size_t>(n));
    for (double& v : data) v = scl * rng.normal();
    return Tensor::from_data(shape, std::move(data), requires_grad);
}

}  // namespace

TEST_CASE("shape bookkeeping and basic contracts") {
    Tensor t = Tensor::zeros({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.dim(-1) == 3);
    CHECK_THROWS_AS(Tensor::zeros({0, 2}), LabError);
    CHECK_THROWS_AS(t.item(), LabError);

    Tensor a = Tensor::from_data({2}, {1.0, 2.0}, true);
    Tensor s = sum(a);
    CHECK(s.item() == 3.0);
    CHECK_THROWS_AS(a.backward(), LabError);  // non-scalar loss
}

TEST_CASE("loss = sum(w) gives unit gradients, loss = ||w||^2 gives 2w") {
    Tensor w = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    sum(w).backward();
    for (double g : w.grad()) CHECK(g == 1.0);

    w.zero_grad();
    sum(mul(w, w)).backward();
    CHECK(w.grad()[0] == doctest::Approx(2.0));
    CHECK(w.grad()[1] == doctest::Approx(-4.0));
    CHECK(w.grad()[2] == doctest::Approx(1.0));
}

TEST_CASE("backward touches shared subgraphs exactly once") {
    // y = x * x reused twice: loss = sum(y) + sum(y) -> dloss/dx = 4x
    Tensor x = Tensor::from_data({2}, {3.0, -1.0}, true);
    Tensor y = mul(x, x);
    Tensor loss = add(sum(y), sum(y));
    loss.backward();
    CHECK(x.grad()[0] == doctest::Approx(12.0));
    CHECK(x.grad()[1] == doctest::Approx(-4.0));
}

TEST_CASE("no-grad mode records no graph") {
    Tensor w = Tensor::from_data({2}, {1.0, 2.0}, true);
    NoGradGuard guard;
    Tensor y = mul(w, w);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("elementwise and broadcast ops match finite differences") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor bias = random_tensor({4}, rng);
        CHECK(fd_max_rel_error([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b}) < 1e-4);
        CHECK(fd_max_rel_error([&] { return sum(mul(add(a, bias), a)); }, {a, bias}) < 1e-4);
        CHECK(fd_max_rel_error([&] { return mean(scale(add_scalar(a, 0.7), -1.3)); }, {a}) < 1e-4);
    }
}

TEST_CASE("matmul in all supported rank combinations matches finite differences") {
    Rng rng(32);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor a2 = random_tensor({3, 4}, rng);
        Tensor b2 = random_tensor({4, 2}, rng);
        CHECK(fd_max_rel_error([&] { return sum(matmul(a2, b2)); }, {a2, b2}) < 1e-4);

        Tensor a3 = random_tensor({2, 3, 4}, rng);
        CHECK(fd_max_rel_error([&] { return sum(mul(matmul(a3, b2), matmul(a3, b2))); }, {a3, b2}) < 1e-4);

        Tensor b3 = random_tensor({2, 4, 3}, rng);
        CHECK(fd_max_rel_error([&] { return sum(matmul(a3, b3)); }, {a3, b3}) < 1e-4);
    }
    Tensor bad = Tensor::zeros({3, 3});
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 4}), bad), LabError);
}

TEST_CASE("matmul values match a straight-line re-computation") {
    Rng rng(33);
    Tensor a = random_tensor({5, 7}, rng, false);
    Tensor b = random_tensor({7, 4}, rng, false);
    Tensor c = matmul(a, b);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 7; ++k) acc += a.values()[i * 7 + k] * b.values()[k * 4 + j];
            CHECK(c.values()[i * 4 + j] == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("transpose, reshape, slicing and concatenation match finite differences") {
    Rng rng(34);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor a = random_tensor({2, 4, 3}, rng);
        Tensor b = random_tensor({2, 2, 3}, rng);
        CHECK(fd_max_rel_error([&] { return sum(mul(transpose_last2(a), transpose_last2(a))); }, {a}) < 1e-4);
        CHECK(fd_max_rel_error([&] { return sum(mul(slice_seq(a, 1, 2), b)); }, {a, b}) < 1e-4);
        CHECK(fd_max_rel_error([&] { return sum(mul(concat_seq(a, b), concat_seq(a, b))); }, {a, b}) < 1e-4);

        Tensor c = random_tensor({3, 2}, rng);
        Tensor d = random_tensor({3, 5}, rng);
        CHECK(fd_max_rel_error([&] { return sum(mul(concat_cols({c, d}), concat_cols({c, d}))); }, {c, d}) < 1e-4);
        CHECK(fd_max_rel_error([&] { return sum(mul(reshape(c, {2, 3}), reshape(c, {2, 3}))); }, {c}) < 1e-4);
    }
    CHECK_THROWS_AS(slice_seq(Tensor::zeros({1, 3, 2}), 2, 2), LabError);
    CHECK_THROWS_AS(concat_seq(Tensor::zeros({1, 3, 2}), Tensor::zeros({2, 3, 2})), LabError);
}

TEST_CASE("slice/concat round trip is the identity") {
    Rng rng(35);
    Tensor a = random_tensor({2, 3, 4}, rng, false);
    Tensor b = random_tensor({2, 3, 4}, rng, false);
    Tensor cat = concat_seq(a, b);
    Tensor left = slice_seq(cat, 0, 3);
    Tensor right = slice_seq(cat, 3, 3);
    CHECK(left.values() == a.values());
    CHECK(right.values() == b.values());
}

TEST_CASE("gelu matches finite differences and fixed values") {
    CHECK(gelu(Tensor::scalar(0.0)).item() == 0.0);
    // gelu(x) -> x for large x, -> 0 for very negative x
    CHECK(gelu(Tensor::scalar(10.0)).item() == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(std::fabs(gelu(Tensor::scalar(-10.0)).item()) < 1e-9);

    Rng rng(36);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor a = random_tensor({4, 5}, rng);
        CHECK(fd_max_rel_error([&] { return sum(mul(gelu(a), gelu(a))); }, {a}) < 1e-4);
    }
}

TEST_CASE("layer_norm normalizes rows and matches finite differences") {
    Rng rng(41);
    Tensor g = Tensor::full({4}, 1.0, true);
    Tensor b = Tensor::zeros({4}, true);
    Tensor x = random_tensor({2, 3, 4}, rng);
    Tensor y = layer_norm(x, g, b);
    for (int r = 0; r < 6; ++r) {
        double mean_v = 0.0, var = 0.0;
        for (int j = 0; j < 4; ++j) mean_v += y.values()[r * 4 + j];
        mean_v /= 4.0;
        for (int j = 0; j < 4; ++j) {
            double d = y.values()[r * 4 + j] - mean_v;
            var += d * d;
        }
        CHECK(std::fabs(mean_v) < 1e-12);
        CHECK(var / 4.0 == doctest::Approx(1.0).epsilon(1e-3));  // eps-softened variance
    }
    for (int rep = 0; rep < 20; ++rep) {
        Tensor gg = random_tensor({4}, rng);
        Tensor bb = random_tensor({4}, rng);
        Tensor xx = random_tensor({2, 3, 4}, rng);
        Tensor vv = random_tensor({2, 3, 4}, rng);
        CHECK(fd_max_rel_error([&] { return sum(mul(layer_norm(xx, gg, bb), vv)); },
                               {xx, gg, bb}) < 1e-4);
    }
}

TEST_CASE("softmax rows sum to one and match finite differences") {
    Rng rng(37);
    Tensor logits = random_tensor({2, 3, 3}, rng);
    Tensor y = masked_softmax(logits);
    for (int r = 0; r < 6; ++r) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) s += y.values()[r * 3 + j];
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (int rep = 0; rep < 20; ++rep) {
        Tensor l = random_tensor({2, 3, 3}, rng);
        Tensor v = random_tensor({2, 3, 3}, rng);
        CHECK(fd_max_rel_error([&] { return sum(mul(masked_softmax(l), v)); }, {l, v}) < 1e-4);
    }
}

TEST_CASE("masked softmax zeroes disallowed entries exactly") {
    GridMask mask(4, 4, 0);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if ((i < 2) == (j < 2)) mask.at(j, i) = 1;
        }
    }
    Rng rng(38);
    Tensor logits = random_tensor({1, 4, 4}, rng);
    Tensor y = masked_softmax(logits, &mask);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double v = y.values()[i * 4 + j];
            if ((i < 2) != (j < 2)) {
                CHECK(v == 0.0);
            } else {
                CHECK(v > 0.0);
            }
        }
    }
    Tensor t = random_tensor({1, 4, 4}, rng);
    CHECK(fd_max_rel_error([&] { return sum(mul(masked_softmax(logits, &mask), t)); }, {logits}) < 1e-4);
}

TEST_CASE("mean_squared_norm equals the per-sample squared norm mean") {
    Tensor pred = Tensor::from_data({2, 2}, {1.0, 0.0, 3.0, 4.0}, true);
    Tensor target = Tensor::zeros({2, 2});
    CHECK(mean_squared_norm(pred, target).item() == doctest::Approx((1.0 + 25.0) / 2.0));

    Rng rng(39);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor p = random_tensor({3, 4}, rng);
        Tensor t = random_tensor({3, 4}, rng);
        CHECK(fd_max_rel_error([&] { return mean_squared_norm(p, t); }, {p, t}) < 1e-4);
    }
}

TEST_CASE("dispersion loss hand-counted examples") {
    // identical features: every pairwise distance is zero
    Tensor same = Tensor::from_data({3, 2}, {1.0, 2.0, 1.0, 2.0, 1.0, 2.0}, true);
    CHECK(dispersion_loss(same, 1.0).item() == doctest::Approx(0.0).epsilon(1e-12));

    // batch of 2 with ||eta1 - eta2||^2 = ln 2: ordered pairs give (1 + 1 + 0.5 + 0.5)/4
    double d = std::sqrt(std::log(2.0));
    Tensor two = Tensor::from_data({2, 1}, {0.0, d}, true);
    CHECK(dispersion_loss(two, 1.0).item() == doctest::Approx(std::log(0.75)).epsilon(1e-12));

    // excluding self pairs: mean is exp(-ln2) = 0.5
    CHECK(dispersion_loss(two, 1.0, false).item() == doctest::Approx(std::log(0.5)).epsilon(1e-12));

    // growing separation strictly decreases the loss
    double prev = 0.0;
    bool first = true;
    for (double s : {0.5, 1.0, 2.0, 4.0}) {
        Tensor f = Tensor::from_data({2, 1}, {0.0, s}, false);
        double loss = dispersion_loss(f, 1.0).item();
        if (!first) CHECK(loss < prev);
        prev = loss;
        first = false;
    }
}

TEST_CASE("dispersion loss is nonpositive and differentiable") {
    Rng rng(40);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor f = random_tensor({4, 3}, rng);
        CHECK(dispersion_loss(f, 1.0).item() <= 0.0);
        CHECK(fd_max_rel_error([&] { return dispersion_loss(f, 1.0); }, {f}) < 1e-4);
        CHECK(fd_max_rel_error([&] { return dispersion_loss(f, 0.7, false); }, {f}) < 1e-4);
    }
    CHECK_THROWS_AS(dispersion_loss(Tensor::zeros({1, 3}), 1.0, false), LabError);
    CHECK_THROWS_AS(dispersion_loss(Tensor::zeros({2, 3}), 0.0), LabError);
}
