#include <doctest.h>

#include <cmath>

#include "invercl/adam.hpp"
#include "invercl/rng.hpp"
#include "invercl/stats.hpp"
#include "invercl/tensor.hpp"

using namespace invercl;

TEST_CASE("tensor helpers") {
    Tensor t = Tensor::matrix(2, 3);
    t.at(1, 2) = 5.0;
    CHECK(t.numel() == 6);
    CHECK(t.data[5] == 5.0);
    CHECK(tensor_row(t, 1) == std::vector<double>{0.0, 0.0, 5.0});

    CHECK(dot({1, 2}, {3, 4}) == doctest::Approx(11.0));
    CHECK(norm2({3, 4}) == doctest::Approx(5.0));
    CHECK(cosine({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(norm2(normalized({3, 4})) == doctest::Approx(1.0));

    CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}));
    Tensor bad = Tensor::matrix(1, 1);
    bad.data[0] = std::nan("");
    CHECK(!tensor_all_finite(bad));
    CHECK_THROWS(tensor_require_finite(bad, "x"));
}

TEST_CASE("batch stats: two-point symmetry") {
    Tensor b({2, 2}, std::vector<double>{0, 0, 2, 2});
    LayerStats s = batch_stats(b);
    CHECK(s.mean[0] == doctest::Approx(1.0));
    CHECK(s.mean[1] == doctest::Approx(1.0));
    // population std: sqrt(((0-1)^2 + (2-1)^2)/2) = 1
    CHECK(s.std[0] == doctest::Approx(1.0));
    CHECK(s.std[1] == doctest::Approx(1.0));
    CHECK(s.sample_count == 2);
}

TEST_CASE("batch stats: batch of one rejected, constant batch floored") {
    CHECK_THROWS(batch_stats(Tensor::matrix(1, 3)));
    Tensor c({3, 2}, std::vector<double>{4, 4, 4, 4, 4, 4});
    LayerStats s = batch_stats(c);
    CHECK(s.std[0] == kStdFloor);
    CHECK(s.std[1] == kStdFloor);
}

TEST_CASE("merging two equal batches keeps the moments") {
    Tensor b({2, 2}, std::vector<double>{0, 0, 2, 2});
    LayerStats a = batch_stats(b);
    LayerStats acc = a;
    merge_stats(acc, a);
    CHECK(acc.sample_count == 4);
    CHECK(acc.mean[0] == doctest::Approx(a.mean[0]));
    CHECK(acc.std[0] == doctest::Approx(a.std[0]));
}

TEST_CASE("merging {0,0} and {2,2} pools to mean 1, std 1") {
    LayerStats acc = batch_stats(Tensor({2, 1}, std::vector<double>{0, 0}));
    merge_stats(acc, batch_stats(Tensor({2, 1}, std::vector<double>{2, 2})));
    CHECK(acc.mean[0] == doctest::Approx(1.0));
    CHECK(acc.std[0] == doctest::Approx(1.0));
}

TEST_CASE("pooled stats over k batches equal stats of the concatenation") {
    Rng rng(42);
    const std::size_t d = 5;
    std::vector<Tensor> batches;
    std::vector<double> all;
    std::size_t total = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t n = 2 + rng.index(6);
        Tensor b = Tensor::matrix(n, d);
        for (double& v : b.data) v = rng.normal(rng.uniform(-2, 2), rng.uniform(0.2, 3.0));
        for (double v : b.data) all.push_back(v);
        total += n;
        batches.push_back(std::move(b));
    }
    LayerStats acc;
    for (const Tensor& b : batches) merge_stats(acc, batch_stats(b));
    LayerStats direct = batch_stats(Tensor({total, d}, all));
    REQUIRE(acc.sample_count == total);
    for (std::size_t j = 0; j < d; ++j) {
        CHECK(acc.mean[j] == doctest::Approx(direct.mean[j]).epsilon(1e-10));
        CHECK(acc.std[j] == doctest::Approx(direct.std[j]).epsilon(1e-10));
    }
}

TEST_CASE("rng substreams are deterministic and name-separated") {
    Rng a = Rng::substream(7, "alpha");
    Rng b = Rng::substream(7, "alpha");
    Rng c = Rng::substream(7, "beta");
    bool identical = true, different = false;
    for (int i = 0; i < 16; ++i) {
        const double va = a.normal(), vb = b.normal(), vc = c.normal();
        identical = identical && (va == vb);
        different = different || (va != vc);
    }
    CHECK(identical);
    CHECK(different);

    Rng p(3);
    std::vector<std::size_t> perm = p.permutation(8);
    std::vector<bool> seen(8, false);
    for (std::size_t i : perm) seen[i] = true;
    for (bool v : seen) CHECK(v);
}

TEST_CASE("optimizer: zero gradient leaves the variable unchanged") {
    std::vector<double> v{1.0, -2.0};
    AdamState st(2, 0.1);
    adam_step(v, {0.0, 0.0}, st);
    CHECK(v[0] == 1.0);
    CHECK(v[1] == -2.0);
    CHECK(st.step_count == 1);
}

TEST_CASE("optimizer: bias-corrected first step is ~ -lr * sign(g)") {
    std::vector<double> v{0.0};
    AdamState st(1, 0.05);
    adam_step(v, {0.3}, st);
    // first-step normalized update: lr * g / (|g| + eps')
    CHECK(v[0] == doctest::Approx(-0.05).epsilon(1e-4));
}

TEST_CASE("optimizer: 100 steps on v^2 from v=1, lr=0.1 reaches |v| < 0.05") {
    std::vector<double> v{1.0};
    AdamState st(1, 0.1);
    for (int s = 0; s < 100; ++s) adam_step(v, {2.0 * v[0]}, st);
    CHECK(std::abs(v[0]) < 0.05);
}

TEST_CASE("optimizer rejects mismatched shapes") {
    std::vector<double> v{1.0};
    AdamState st(2, 0.1);
    CHECK_THROWS(adam_step(v, {0.0}, st));
}
