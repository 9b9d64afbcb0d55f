#include <cmath>
#include <vector>

#include "doctest.h"
#include "nexus/mixers.hpp"
#include "nexus/rng.hpp"

using namespace nexus;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Scalar recomputation of the full dense space-mixer layer, softmax kernel.
Tensor space_mix_oracle(const Tensor& h, const Tensor& e, const SpaceMixerParams& params) {
    const std::size_t n = h.rows(), d = h.cols(), de = e.cols();
    // softmax feature map
    std::vector<std::vector<double>> phi(n, std::vector<double>(de));
    for (std::size_t i = 0; i < n; ++i) {
        double mx = e.at(i, 0);
        for (std::size_t j = 1; j < de; ++j) mx = std::max(mx, e.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < de; ++j) {
            phi[i][j] = std::exp(e.at(i, j) - mx);
            s += phi[i][j];
        }
        for (std::size_t j = 0; j < de; ++j) phi[i][j] /= s;
    }
    Tensor out = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        // smoothing weights against every node
        std::vector<double> k(n);
        double ksum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < de; ++c) dot += phi[i][c] * phi[j][c];
            k[j] = dot;
            ksum += dot;
        }
        std::vector<double> pre(d);
        for (std::size_t c = 0; c < d; ++c) {
            double smooth = 0.0;
            for (std::size_t j = 0; j < n; ++j) smooth += k[j] * h.at(j, c);
            smooth /= ksum;
            double lin = 0.0;
            for (std::size_t c2 = 0; c2 < d; ++c2) lin += h.at(i, c2) * params.theta.at(c2, c);
            pre[c] = lin + smooth;
        }
        // residual + gelu + layer norm
        std::vector<double> resid(d);
        double mean = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double x = pre[c];
            const double g =
                0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
            resid[c] = h.at(i, c) + g;
            mean += resid[c];
        }
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) var += (resid[c] - mean) * (resid[c] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t c = 0; c < d; ++c) {
            out.at(i, c) = (resid[c] - mean) * inv * params.ln_gain[c] + params.ln_bias[c];
        }
    }
    return out;
}

}  // namespace

TEST_SUITE_BEGIN("mixers");

TEST_CASE("fold lays rows out time-major") {
    Tensor x = Tensor::from({2, 3, 1}, {1, 2, 3, 4, 5, 6});
    Tensor f = fold(x);
    CHECK(f.equals(Tensor::matrix({{1, 2, 3}, {4, 5, 6}})));

    Tensor y = Tensor::from({1, 2, 2}, {10, 11, 12, 13});
    CHECK(fold(y).equals(Tensor::matrix({{10, 11, 12, 13}})));
}

TEST_CASE("unfold inverts fold's layout") {
    Tensor y = Tensor::from({1, 4}, {7, 8, 9, 10});
    Tensor u = unfold(y, 2, 2);
    CHECK(u.at(0, 0, 0) == 7.0);
    CHECK(u.at(0, 0, 1) == 8.0);
    CHECK(u.at(0, 1, 0) == 9.0);
    CHECK(u.at(0, 1, 1) == 10.0);

    Tensor zeros = unfold(Tensor::zeros({3, 6}), 3, 2);
    for (std::size_t i = 0; i < zeros.size(); ++i) CHECK(zeros[i] == 0.0);

    CHECK_THROWS_AS(unfold(Tensor::zeros({3, 5}), 2, 2), ShapeError);
}

TEST_CASE("fold and unfold are mutually inverse on random data") {
    Rng rng(1);
    Tensor x = random_tensor({4, 5, 3}, rng);
    CHECK(unfold(fold(x), 5, 3).equals(x));
    Tensor y = random_tensor({4, 15}, rng);
    CHECK(fold(unfold(y, 5, 3)).equals(y));
}

TEST_CASE("apply_kernel fixed points and positivity") {
    CHECK(apply_kernel(KernelKind::Softmax, Tensor::matrix({{0, 0}}))
              .equals(Tensor::matrix({{0.5, 0.5}})));
    CHECK(apply_kernel(KernelKind::EluPlusOne, Tensor::matrix({{0}})).equals(
        Tensor::matrix({{1}})));

    Rng rng(2);
    Tensor x = random_tensor({5, 6}, rng, -3.0, 3.0);
    Tensor ex = apply_kernel(KernelKind::Exp, x);
    Tensor el = apply_kernel(KernelKind::EluPlusOne, x);
    for (std::size_t i = 0; i < ex.size(); ++i) {
        CHECK(ex[i] > 0.0);
        CHECK(el[i] > 0.0);
    }

    Tensor sm = apply_kernel(KernelKind::Softmax, x);
    for (std::size_t i = 0; i < 5; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 6; ++j) s += sm.at(i, j);
        CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("normalized kernels reject all-zero rows") {
    Tensor x = Tensor::matrix({{1, 2}, {0, 0}});
    CHECK_THROWS_AS(apply_kernel(KernelKind::IdentityNormalized, x), DomainError);
    CHECK_THROWS_AS(apply_kernel(KernelKind::ReluNormalized, x), DomainError);
}

TEST_CASE("identical embedding rows smooth to the plain mean") {
    Rng rng(3);
    Tensor h = random_tensor({4, 3}, rng);
    Tensor e = Tensor::zeros({4, 5});
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) e.at(i, j) = 0.3 * static_cast<double>(j) - 0.7;
    for (KernelKind kind : {KernelKind::Softmax, KernelKind::EluPlusOne, KernelKind::Exp}) {
        Tensor smooth = kernel_smooth_kernelized(kind, h, e);
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t c = 0; c < 3; ++c) {
                double mean = 0.0;
                for (std::size_t j = 0; j < 4; ++j) mean += h.at(j, c);
                mean /= 4.0;
                CHECK(smooth.at(i, c) == doctest::Approx(mean).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("a single node smooths to itself") {
    Rng rng(4);
    Tensor h = random_tensor({1, 6}, rng);
    Tensor e = random_tensor({1, 4}, rng);
    CHECK(max_abs_diff(kernel_smooth_kernelized(KernelKind::Softmax, h, e), h) <= 1e-12);
    CHECK(max_abs_diff(kernel_smooth_dense(KernelKind::Softmax, h, e), h) <= 1e-12);
}

TEST_CASE("dense layer matches the scalar double-loop oracle") {
    Rng rng(5);
    SpaceMixerParams params = init_space_mixer(7, KernelKind::Softmax, 1, 11);
    Tensor h = random_tensor({6, 7}, rng);
    Tensor e = random_tensor({6, 7}, rng);
    Tensor got = space_mix_dense(h, e, params);
    Tensor want = space_mix_oracle(h, e, params);
    CHECK(max_abs_diff(got, want) <= 1e-12);
}

TEST_CASE("kernelized path equals the dense oracle for every kernel") {
    Rng rng(6);
    for (KernelKind kind : all_kernels()) {
        for (std::size_t n : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{4},
                              std::size_t{5}, std::size_t{6}, std::size_t{7}, std::size_t{8},
                              std::size_t{256}}) {
            Tensor h = random_tensor({n, 9}, rng);
            // positive-leaning embeddings keep the sign-sensitive kernels away
            // from degenerate weight sums
            Tensor e = random_tensor({n, 9}, rng, 0.1, 1.0);
            Tensor dense = kernel_smooth_dense(kind, h, e);
            Tensor fast = kernel_smooth_kernelized(kind, h, e);
            INFO(kernel_to_string(kind), " n=", n);
            CHECK(max_abs_diff(dense, fast) <= 1e-9);
        }
    }
}

TEST_CASE("smoothed states stay inside the convex hull for positive kernels") {
    Rng rng(7);
    Tensor h = random_tensor({10, 4}, rng, -2.0, 2.0);
    Tensor e = random_tensor({10, 4}, rng);
    for (KernelKind kind : {KernelKind::Softmax, KernelKind::EluPlusOne, KernelKind::Exp}) {
        Tensor smooth = kernel_smooth_kernelized(kind, h, e);
        for (std::size_t c = 0; c < 4; ++c) {
            double lo = h.at(0, c), hi = h.at(0, c);
            for (std::size_t j = 1; j < 10; ++j) {
                lo = std::min(lo, h.at(j, c));
                hi = std::max(hi, h.at(j, c));
            }
            for (std::size_t i = 0; i < 10; ++i) {
                CHECK(smooth.at(i, c) >= lo - 1e-12);
                CHECK(smooth.at(i, c) <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("degenerate kernel weight sums are rejected") {
    Tensor h = Tensor::matrix({{1, 2}, {3, 4}});
    Tensor e = Tensor::matrix({{1, 0}, {-1, 0}});  // opposite unit rows cancel
    CHECK_THROWS_AS(kernel_smooth_kernelized(KernelKind::IdentityNormalized, h, e), DomainError);
    CHECK_THROWS_AS(kernel_smooth_dense(KernelKind::IdentityNormalized, h, e), DomainError);
}

TEST_CASE("joint permutation equivariance of the space mixer") {
    Rng rng(8);
    SpaceMixerParams params = init_space_mixer(5, KernelKind::Softmax, 1, 12);
    Tensor h = random_tensor({6, 5}, rng);
    Tensor e = random_tensor({6, 5}, rng);
    Tensor base = space_mix_kernelized(h, e, params);

    const std::size_t perm[6] = {3, 1, 5, 0, 2, 4};
    Tensor hp = Tensor::zeros({6, 5});
    Tensor ep = Tensor::zeros({6, 5});
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t c = 0; c < 5; ++c) {
            hp.at(i, c) = h.at(perm[i], c);
            ep.at(i, c) = e.at(perm[i], c);
        }
    }
    Tensor out = space_mix_kernelized(hp, ep, params);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 5; ++c)
            CHECK(out.at(i, c) == doctest::Approx(base.at(perm[i], c)).epsilon(1e-12));
}

TEST_CASE("embeddings disambiguate windows with identical states") {
    Rng rng(9);
    SpaceMixerParams params = init_space_mixer(5, KernelKind::Softmax, 1, 13);
    Tensor h = random_tensor({4, 5}, rng);
    Tensor e_morning = random_tensor({4, 5}, rng);
    Tensor e_evening = random_tensor({4, 5}, rng);
    Tensor a = space_mix_kernelized(h, e_morning, params);
    Tensor b = space_mix_kernelized(h, e_evening, params);
    CHECK(max_abs_diff(a, b) > 1e-8);
}

TEST_CASE("time mixer separates nodes through the context columns") {
    Rng rng(10);
    TimeMixerParams params = init_time_mixer(6, 5, 14);
    Tensor x = Tensor::zeros({2, 6, 1});
    for (std::size_t t = 0; t < 6; ++t) {
        x.at(0, t, 0) = 0.3 * static_cast<double>(t);
        x.at(1, t, 0) = 0.3 * static_cast<double>(t);  // identical history
    }
    Tensor e = random_tensor({2, 5}, rng);
    Tensor out = time_mix(x, e, params);
    double diff = 0.0;
    for (std::size_t c = 0; c < 5; ++c) diff = std::max(diff, std::fabs(out.at(0, c) - out.at(1, c)));
    CHECK(diff > 1e-8);

    // nullify the context block: identical inputs now give identical rows
    TimeMixerParams blind = params;
    for (std::size_t i = 6; i < 11; ++i)
        for (std::size_t j = 0; j < 5; ++j) blind.input_w.at(i, j) = 0.0;
    Tensor blind_out = time_mix(x, e, blind);
    for (std::size_t c = 0; c < 5; ++c) CHECK(blind_out.at(0, c) == blind_out.at(1, c));
}

TEST_CASE("input projection splits into series and context blocks") {
    Rng rng(11);
    TimeMixerParams params = init_time_mixer(6, 5, 15);
    Tensor x = random_tensor({3, 6}, rng);   // already folded
    Tensor e = random_tensor({3, 5}, rng);

    // first linear layer via the mixer's own projection
    Tape tape;
    Var cat = tape.concat_cols(tape.constant(x), tape.constant(e));
    Tensor h0 = tape.value(
        tape.add_rowvec(tape.matmul(cat, tape.constant(params.input_w)),
                        tape.constant(params.input_b)));

    // block-matrix identity: [x || e] W == x Theta1 + e Theta2
    Tensor theta2 = params.context_block();
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            double want = params.input_b[j];
            for (std::size_t k = 0; k < 6; ++k) want += x.at(i, k) * params.input_w.at(k, j);
            for (std::size_t k = 0; k < 5; ++k) want += e.at(i, k) * theta2.at(k, j);
            CHECK(h0.at(i, j) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("mixer gradients pass finite differences") {
    Rng rng(12);
    Tensor x = random_tensor({3, 8}, rng);  // folded series, T*d_in = 8
    Tensor e = random_tensor({3, 6}, rng);
    Tensor w_time = random_tensor({3, 6}, rng);
    TimeMixerParams tm = init_time_mixer(8, 6, 16);

    auto build_time = [&](Tape& tape) {
        TimeMixerParams::Vars vars = tm.lift(tape);
        Var out = time_mix(tape, vars, tape.constant(x), tape.constant(e));
        return tape.sum(tape.mul(out, tape.constant(w_time)));
    };
    {
        auto eval = [&]() {
            Tape tape;
            return tape.value(build_time(tape))[0];
        };
        Tape tape;
        TimeMixerParams::Vars vars = tm.lift(tape);
        // rebuild on the same tape so grads line up with params() order
        Var out = time_mix(tape, vars, tape.constant(x), tape.constant(e));
        tape.backward(tape.sum(tape.mul(out, tape.constant(w_time))));
        std::vector<Tensor> grads = {tape.grad(vars.input_w), tape.grad(vars.input_b),
                                     tape.grad(vars.ff_w1),   tape.grad(vars.ff_b1),
                                     tape.grad(vars.ff_w2),   tape.grad(vars.ff_b2),
                                     tape.grad(vars.ln_gain), tape.grad(vars.ln_bias)};
        GradCheckReport report = grad_check(tm.params("time"), eval, grads, {});
        INFO(report.summary());
        CHECK(report.passed());
    }

    for (KernelKind kind : {KernelKind::Softmax, KernelKind::EluPlusOne, KernelKind::Exp}) {
        SpaceMixerParams sm = init_space_mixer(6, kind, 1, 17);
        Tensor h = random_tensor({3, 6}, rng);
        auto eval = [&]() {
            Tape tape;
            SpaceMixerParams::Vars vars = sm.lift(tape);
            Var out = space_mix_layer(tape, vars, kind, tape.constant(h), tape.constant(e), true);
            return tape.value(tape.sum(tape.mul(out, tape.constant(w_time))))[0];
        };
        Tape tape;
        SpaceMixerParams::Vars vars = sm.lift(tape);
        Var out = space_mix_layer(tape, vars, kind, tape.constant(h), tape.constant(e), true);
        tape.backward(tape.sum(tape.mul(out, tape.constant(w_time))));
        std::vector<Tensor> grads = {tape.grad(vars.theta), tape.grad(vars.ln_gain),
                                     tape.grad(vars.ln_bias)};
        GradCheckReport report = grad_check(sm.params("space"), eval, grads, {});
        INFO(kernel_to_string(kind), "\n", report.summary());
        CHECK(report.passed());
    }
}

TEST_SUITE_END();
