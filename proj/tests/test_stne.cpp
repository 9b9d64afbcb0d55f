#include <cmath>

#include "doctest.h"
#include "nexus/grad_check.hpp"
#include "nexus/rng.hpp"
#include "nexus/stne.hpp"

using namespace nexus;

namespace {

TimeEncoding window_encoding(long long start, std::size_t window, long long period) {
    std::vector<long long> steps(window);
    for (std::size_t i = 0; i < window; ++i) steps[i] = start + static_cast<long long>(i);
    return sinusoidal_time_encoding(steps, period);
}

double max_abs_row_diff(const Tensor& a, std::size_t i, std::size_t j) {
    double m = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
        m = std::max(m, std::fabs(a.at(i, c) - a.at(j, c)));
    }
    return m;
}

}  // namespace

TEST_SUITE_BEGIN("stne");

TEST_CASE("zero time projection makes the embedding constant across nodes") {
    StnEmbedding emb = init_stn_embedding(5, 4, 12, 8, 1);
    emb.time_proj.fill(0.0);
    Tensor e_t = fuse_stne(emb, window_encoding(37, 12, 288));
    for (std::size_t i = 1; i < 5; ++i) CHECK(max_abs_row_diff(e_t, 0, i) == 0.0);
}

TEST_CASE("identical time-of-day windows give identical embeddings") {
    StnEmbedding emb = init_stn_embedding(3, 4, 12, 8, 2);
    Tensor a = fuse_stne(emb, window_encoding(10, 12, 288));
    Tensor b = fuse_stne(emb, window_encoding(10 + 288, 12, 288));  // same phase next day
    CHECK(a.equals(b));
}

TEST_CASE("morning and evening windows are contextualized differently") {
    StnEmbedding emb = init_stn_embedding(3, 4, 12, 8, 3);
    Tensor morning = fuse_stne(emb, window_encoding(24, 12, 288));
    Tensor evening = fuse_stne(emb, window_encoding(200, 12, 288));
    double diff = 0.0;
    for (std::size_t i = 0; i < morning.size(); ++i) {
        diff = std::max(diff, std::fabs(morning[i] - evening[i]));
    }
    CHECK(diff > 1e-8);
}

TEST_CASE("permuting the node dictionary permutes embedding rows identically") {
    StnEmbedding emb = init_stn_embedding(4, 6, 12, 8, 4);
    Tensor base = fuse_stne(emb, window_encoding(50, 12, 288));

    const std::size_t perm[4] = {2, 0, 3, 1};
    StnEmbedding permuted = emb;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            permuted.node_dict.at(i, j) = emb.node_dict.at(perm[i], j);
    Tensor out = fuse_stne(permuted, window_encoding(50, 12, 288));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 8; ++c) CHECK(out.at(i, c) == base.at(perm[i], c));
}

TEST_CASE("shape mismatch in the chain is a shape error") {
    StnEmbedding emb = init_stn_embedding(3, 4, 12, 8, 5);
    CHECK_THROWS_AS(fuse_stne(emb, window_encoding(0, 10, 288)), ShapeError);
}

TEST_CASE("fusion gradient passes finite differences for all parameters") {
    StnEmbedding emb = init_stn_embedding(3, 4, 6, 8, 6);
    TimeEncoding enc = window_encoding(17, 6, 288);
    Rng rng(7);
    Tensor weights = Tensor::zeros({3, 8});
    for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = rng.uniform(-1.0, 1.0);

    auto build = [&](Tape& tape) {
        StnEmbedding::Vars vars = emb.lift(tape);
        Var e_t = fuse_stne(tape, vars, tape.constant(enc.u));
        return std::pair{vars, tape.sum(tape.mul(e_t, tape.constant(weights)))};
    };
    auto eval = [&]() {
        Tape tape;
        return tape.value(build(tape).second)[0];
    };

    Tape tape;
    auto [vars, loss] = build(tape);
    tape.backward(loss);
    std::vector<Tensor> grads = {tape.grad(vars.node_dict), tape.grad(vars.time_proj),
                                 tape.grad(vars.emb_proj),  tape.grad(vars.fuse_w1),
                                 tape.grad(vars.fuse_b1),   tape.grad(vars.fuse_w2),
                                 tape.grad(vars.fuse_b2)};
    GradCheckReport report = grad_check(emb.params("stne"), eval, grads, {});
    INFO(report.summary());
    CHECK(report.passed());
}

TEST_SUITE_END();
