#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "tsgen/discriminator.hpp"
#include "tsgen/errors.hpp"
#include "tsgen/nn.hpp"
#include "tsgen/rng.hpp"
#include "tsgen/tensor.hpp"

using namespace tsgen;

namespace {

Tensor random_block(std::size_t b, std::size_t d, Rng& rng) {
    std::vector<double> v(b * d);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from({b, d}, std::move(v));
}

void zero_tensor(Tensor t) {
    double* p = t.data_mut();
    for (std::size_t i = 0; i < t.numel(); ++i) p[i] = 0.0;
}

double linf_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

}  // namespace

TEST_SUITE("discriminator") {

TEST_CASE("zeroed classification head yields exactly even odds") {
    DiscriminatorConfig cfg;
    cfg.dim_x = 2;
    cfg.d_layer = 2;
    cfg.substeps = 2;
    Rng rng(3);
    Discriminator d = Discriminator::create(cfg, rng);
    REQUIRE(d.cfg.dim_c == 8);  // default 4 * dim_x
    zero_tensor(d.fc_cls.W);
    zero_tensor(d.fc_cls.b);

    std::vector<Tensor> xs{random_block(3, 2, rng), random_block(3, 2, rng)};
    std::vector<std::vector<double>> times{{0.2, 0.7}, {0.1, 0.9}, {0.5, 1.0}};
    Tensor p = d.prob_real(xs, times);
    for (std::size_t j = 0; j < 3; ++j) CHECK(p.at(j) == 0.5);
}

TEST_CASE("zero drift reduces the model to a discrete stacked GRU") {
    DiscriminatorConfig cfg;
    cfg.dim_x = 3;
    cfg.dim_c = 5;
    cfg.d_layer = 2;
    cfg.substeps = 4;
    Rng rng(11);
    Discriminator d = Discriminator::create(cfg, rng);
    d.q_field_scale = 0.0;

    const std::size_t b = 2, n = 4;
    std::vector<Tensor> xs;
    Rng xr(29);
    for (std::size_t i = 0; i < n; ++i) xs.push_back(random_block(b, 3, xr));
    std::vector<std::vector<double>> times{{0.1, 0.3, 0.6, 1.0}, {0.2, 0.4, 0.7, 0.9}};

    Tensor got = d.logits(xs, times);

    // Plain stacked GRU over the same observation sequence.
    Tensor c0 = d.fc_init.forward(xs[0]);
    Tensor c1 = d.jumps[1].forward(c0, Tensor::zeros({b, 5}));
    for (std::size_t i = 1; i < n; ++i) {
        c0 = d.jumps[0].forward(xs[i], c0);
        c1 = d.jumps[1].forward(c0, c1);
    }
    Tensor expect = d.fc_cls.forward(c1);
    CHECK(linf_diff(got, expect) == 0.0);
}

TEST_CASE("two-way softmax output is a proper probability") {
    DiscriminatorConfig cfg;
    cfg.dim_x = 1;
    cfg.d_layer = 1;
    cfg.substeps = 2;
    Rng rng(7);
    Discriminator d = Discriminator::create(cfg, rng);

    std::vector<Tensor> xs{random_block(4, 1, rng), random_block(4, 1, rng),
                           random_block(4, 1, rng)};
    std::vector<std::vector<double>> times(4, {0.1, 0.5, 1.0});
    Tensor lg = d.logits(xs, times);
    Tensor p = d.prob_real(xs, times);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(p.at(j) > 0.0);
        CHECK(p.at(j) < 1.0);
        const double e0 = std::exp(lg.at(j, 0)), e1 = std::exp(lg.at(j, 1));
        CHECK(std::abs(p.at(j) - e0 / (e0 + e1)) <= 1e-12);
        const double p1 = 1.0 / (1.0 + std::exp(lg.at(j, 0) - lg.at(j, 1)));
        CHECK(std::abs(p.at(j) + p1 - 1.0) <= 1e-12);
    }
}

TEST_CASE("per-sample outputs ignore batch order and batch company") {
    DiscriminatorConfig cfg;
    cfg.dim_x = 2;
    cfg.dim_c = 6;
    cfg.d_layer = 2;
    cfg.substeps = 3;
    Rng rng(13);
    Discriminator d = Discriminator::create(cfg, rng);

    const std::size_t b = 3, n = 3;
    Rng xr(17);
    std::vector<Tensor> xs;
    for (std::size_t i = 0; i < n; ++i) xs.push_back(random_block(b, 2, xr));
    std::vector<std::vector<double>> times{{0.1, 0.4, 0.8}, {0.2, 0.5, 1.0}, {0.3, 0.6, 0.7}};
    Tensor base = d.logits(xs, times);

    // Reversed batch order.
    std::vector<std::size_t> perm{2, 1, 0};
    std::vector<Tensor> xs_p;
    std::vector<std::vector<double>> times_p;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v;
        for (auto j : perm)
            for (std::size_t c = 0; c < 2; ++c) v.push_back(xs[i].at(j, c));
        xs_p.push_back(Tensor::from({b, 2}, std::move(v)));
    }
    for (auto j : perm) times_p.push_back(times[j]);
    Tensor permuted = d.logits(xs_p, times_p);
    for (std::size_t j = 0; j < b; ++j)
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(permuted.at(j, c) == base.at(perm[j], c));

    // Singleton batches reproduce each row.
    for (std::size_t j = 0; j < b; ++j) {
        std::vector<Tensor> one;
        for (std::size_t i = 0; i < n; ++i) {
            one.push_back(Tensor::from({1, 2}, {xs[i].at(j, 0), xs[i].at(j, 1)}));
        }
        Tensor lj = d.logits(one, {times[j]});
        CHECK(lj.at(0, 0) == base.at(j, 0));
        CHECK(lj.at(0, 1) == base.at(j, 1));
    }
}

TEST_CASE("cross-entropy through the classifier passes a gradient check") {
    DiscriminatorConfig cfg;
    cfg.dim_x = 2;
    cfg.dim_c = 3;
    cfg.d_layer = 2;
    cfg.substeps = 2;
    Rng rng(23);
    Discriminator d = Discriminator::create(cfg, rng);

    const std::size_t b = 2, n = 3;
    Rng xr(31);
    std::vector<Tensor> xs;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(b * 2);
        for (auto& x : v) x = xr.uniform(-1.0, 1.0);
        xs.push_back(Tensor::param({b, 2}, std::move(v)));
    }
    std::vector<std::vector<double>> times{{0.2, 0.5, 1.0}, {0.1, 0.6, 0.8}};

    ParamSet ps;
    d.collect(ps, "d");
    std::vector<Tensor> leaves = ps.tensors();
    for (const auto& x : xs) leaves.push_back(x);  // adversarial input path

    std::vector<int> target{0, 1};
    auto loss = [&] { return mean(cross_entropy_logits(d.logits(xs, times), target)); };
    CHECK(gradient_check(loss, leaves) <= 1e-3);
}

TEST_CASE("malformed inputs are rejected") {
    DiscriminatorConfig cfg;
    cfg.dim_x = 2;
    cfg.substeps = 2;
    Rng rng(41);
    Discriminator d = Discriminator::create(cfg, rng);

    std::vector<Tensor> xs{random_block(2, 2, rng), random_block(2, 2, rng)};
    std::vector<std::vector<double>> good{{0.1, 0.5}, {0.2, 0.6}};
    CHECK_THROWS_AS(d.logits({}, good), value_error);
    CHECK_THROWS_AS(d.logits({xs[0], random_block(2, 3, rng)}, good), shape_error);
    CHECK_THROWS_AS(d.logits({xs[0], random_block(3, 2, rng)}, good), shape_error);
    CHECK_THROWS_AS(d.logits(xs, {{0.1, 0.5}}), shape_error);
    CHECK_THROWS_AS(d.logits(xs, {{0.1, 0.5}, {0.2}}), shape_error);
    CHECK_THROWS_AS(d.logits(xs, {{0.1, 0.5}, {0.6, 0.2}}), value_error);

    DiscriminatorConfig bad = cfg;
    bad.d_layer = 0;
    CHECK_THROWS_AS(Discriminator::create(bad, rng), value_error);
    bad = cfg;
    bad.dim_x = 0;
    CHECK_THROWS_AS(Discriminator::create(bad, rng), value_error);
    bad = cfg;
    bad.substeps = 0;
    CHECK_THROWS_AS(Discriminator::create(bad, rng), value_error);
}

}  // TEST_SUITE
