#include "nexus/mixers.hpp"

#include <cmath>

#include "nexus/rng.hpp"

namespace nexus {

namespace {

Tensor uniform_fan_in(std::size_t rows, std::size_t cols, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor w = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-scale, scale);
    return w;
}

void check_smooth_inputs(const Tensor& h, const Tensor& e) {
    if (h.rank() != 2 || e.rank() != 2 || h.rows() != e.rows()) {
        throw ShapeError("kernel_smooth: states " + h.shape_str() + " and embedding " +
                         e.shape_str() + " must share rows");
    }
}

// Degenerate weight sums cannot occur for the strictly positive feature maps
// (softmax, elu+1, exp); the normalized maps can cancel to zero.
void check_denominator(const Tensor& denom) {
    for (std::size_t i = 0; i < denom.size(); ++i) {
        if (denom[i] == 0.0) {
            throw DomainError("kernel_smooth: degenerate kernel, zero weight sum at row " +
                              std::to_string(i));
        }
    }
}

}  // namespace

KernelKind kernel_from_string(const std::string& name) {
    if (name == "softmax") return KernelKind::Softmax;
    if (name == "elu_plus_one") return KernelKind::EluPlusOne;
    if (name == "relu_normalized") return KernelKind::ReluNormalized;
    if (name == "exp") return KernelKind::Exp;
    if (name == "identity_normalized") return KernelKind::IdentityNormalized;
    throw DomainError("unknown kernel: " + name);
}

std::string kernel_to_string(KernelKind kind) {
    switch (kind) {
        case KernelKind::Softmax: return "softmax";
        case KernelKind::EluPlusOne: return "elu_plus_one";
        case KernelKind::ReluNormalized: return "relu_normalized";
        case KernelKind::Exp: return "exp";
        case KernelKind::IdentityNormalized: return "identity_normalized";
    }
    throw DomainError("unknown kernel enum value");
}

const std::vector<KernelKind>& all_kernels() {
    static const std::vector<KernelKind> kinds = {
        KernelKind::Softmax, KernelKind::EluPlusOne, KernelKind::ReluNormalized, KernelKind::Exp,
        KernelKind::IdentityNormalized};
    return kinds;
}

Tensor fold(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("fold: expected N x T x d tensor, got " + x.shape_str());
    return x.reshaped({x.dim(0), x.dim(1) * x.dim(2)});
}

Tensor unfold(const Tensor& y, std::size_t horizon, std::size_t d_out) {
    if (y.rank() != 2 || y.cols() != horizon * d_out) {
        throw ShapeError("unfold: " + y.shape_str() + " does not factor into horizon " +
                         std::to_string(horizon) + " x d_out " + std::to_string(d_out));
    }
    return y.reshaped({y.rows(), horizon, d_out});
}

TimeMixerParams::Vars TimeMixerParams::lift(Tape& tape) {
    Vars v;
    v.input_w = tape.leaf(input_w);
    v.input_b = tape.leaf(input_b);
    v.ff_w1 = tape.leaf(ff_w1);
    v.ff_b1 = tape.leaf(ff_b1);
    v.ff_w2 = tape.leaf(ff_w2);
    v.ff_b2 = tape.leaf(ff_b2);
    v.ln_gain = tape.leaf(ln_gain);
    v.ln_bias = tape.leaf(ln_bias);
    return v;
}

std::vector<ParamRef> TimeMixerParams::params(const std::string& prefix) {
    return {{prefix + ".input_w", &input_w}, {prefix + ".input_b", &input_b},
            {prefix + ".ff_w1", &ff_w1},     {prefix + ".ff_b1", &ff_b1},
            {prefix + ".ff_w2", &ff_w2},     {prefix + ".ff_b2", &ff_b2},
            {prefix + ".ln_gain", &ln_gain}, {prefix + ".ln_bias", &ln_bias}};
}

std::size_t TimeMixerParams::series_width() const { return input_w.rows() - hidden(); }

Tensor TimeMixerParams::context_block() const {
    const std::size_t d = hidden();
    const std::size_t offset = series_width();
    Tensor block = Tensor::zeros({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) block.at(i, j) = input_w.at(offset + i, j);
    return block;
}

TimeMixerParams init_time_mixer(std::size_t series_width, std::size_t hidden, std::uint64_t seed) {
    if (series_width < 1 || hidden < 1) throw DomainError("init_time_mixer: extents must be >= 1");
    Rng rng(seed);
    TimeMixerParams p;
    p.input_w = uniform_fan_in(series_width + hidden, hidden, rng);
    p.input_b = Tensor::zeros({1, hidden});
    p.ff_w1 = uniform_fan_in(hidden, hidden, rng);
    p.ff_b1 = Tensor::zeros({1, hidden});
    p.ff_w2 = uniform_fan_in(hidden, hidden, rng);
    p.ff_b2 = Tensor::zeros({1, hidden});
    p.ln_gain = Tensor::full({1, hidden}, 1.0);
    p.ln_bias = Tensor::zeros({1, hidden});
    return p;
}

SpaceMixerParams::Vars SpaceMixerParams::lift(Tape& tape) {
    Vars v;
    v.theta = tape.leaf(theta);
    v.ln_gain = tape.leaf(ln_gain);
    v.ln_bias = tape.leaf(ln_bias);
    return v;
}

std::vector<ParamRef> SpaceMixerParams::params(const std::string& prefix) {
    return {{prefix + ".theta", &theta},
            {prefix + ".ln_gain", &ln_gain},
            {prefix + ".ln_bias", &ln_bias}};
}

SpaceMixerParams init_space_mixer(std::size_t hidden, KernelKind kernel, std::size_t layers,
                                  std::uint64_t seed) {
    if (hidden < 1) throw DomainError("init_space_mixer: hidden width must be >= 1");
    if (layers < 1) throw DomainError("init_space_mixer: layer count must be >= 1");
    Rng rng(seed);
    SpaceMixerParams p;
    p.theta = uniform_fan_in(hidden, hidden, rng);
    p.ln_gain = Tensor::full({1, hidden}, 1.0);
    p.ln_bias = Tensor::zeros({1, hidden});
    p.kernel = kernel;
    p.layers = layers;
    return p;
}

Var apply_kernel(Tape& tape, KernelKind kind, Var x) {
    switch (kind) {
        case KernelKind::Softmax: return tape.softmax_rows(x);
        case KernelKind::EluPlusOne: return tape.elu_plus_one(x);
        case KernelKind::ReluNormalized: return tape.relu(tape.normalize_rows(x));
        case KernelKind::Exp: return tape.exp(x);
        case KernelKind::IdentityNormalized: return tape.normalize_rows(x);
    }
    throw DomainError("unknown kernel enum value");
}

Tensor apply_kernel(KernelKind kind, const Tensor& x) {
    Tape tape;
    Tensor out = tape.value(apply_kernel(tape, kind, tape.constant(x)));
    out.assert_finite("apply_kernel");
    return out;
}

Var kernel_smooth(Tape& tape, KernelKind kind, Var h, Var e, bool kernelized) {
    check_smooth_inputs(tape.value(h), tape.value(e));
    const std::size_t n = tape.value(h).rows();
    Var phi = apply_kernel(tape, kind, e);
    Var numer, denom;
    if (kernelized) {
        // (Psi H)_i = phi_i . (sum_j phi_j h_j^T) / phi_i . (sum_j phi_j)
        Var feature_sums = tape.matmul(tape.transpose(phi), h);  // D' x D
        Var ones_row = tape.constant(Tensor::full({1, n}, 1.0));
        Var col_sums = tape.matmul(ones_row, phi);  // 1 x D'
        numer = tape.matmul(phi, feature_sums);
        denom = tape.matmul(phi, tape.transpose(col_sums));
    } else {
        // N x N kernel matrix, quadratic time and space
        Var kernel_matrix = tape.matmul(phi, tape.transpose(phi));
        numer = tape.matmul(kernel_matrix, h);
        denom = tape.matmul(kernel_matrix, tape.constant(Tensor::full({n, 1}, 1.0)));
    }
    check_denominator(tape.value(denom));
    return tape.div_rows(numer, denom);
}

Tensor kernel_smooth_dense(KernelKind kind, const Tensor& h, const Tensor& e) {
    Tape tape;
    return tape.value(kernel_smooth(tape, kind, tape.constant(h), tape.constant(e), false));
}

Tensor kernel_smooth_kernelized(KernelKind kind, const Tensor& h, const Tensor& e) {
    Tape tape;
    return tape.value(kernel_smooth(tape, kind, tape.constant(h), tape.constant(e), true));
}

Var space_mix_layer(Tape& tape, const SpaceMixerParams::Vars& vars, KernelKind kind, Var h, Var e,
                    bool kernelized) {
    Var smoothed = kernel_smooth(tape, kind, h, e, kernelized);
    Var pre = tape.add(tape.matmul(h, vars.theta), smoothed);
    return tape.layer_norm(tape.add(h, tape.gelu(pre)), vars.ln_gain, vars.ln_bias, kLayerNormEps);
}

namespace {

Tensor space_mix_plain(const Tensor& h, const Tensor& e_t, SpaceMixerParams& params,
                       bool kernelized) {
    Tape tape;
    SpaceMixerParams::Vars vars = params.lift(tape);
    Tensor out = tape.value(space_mix_layer(tape, vars, params.kernel, tape.constant(h),
                                            tape.constant(e_t), kernelized));
    out.assert_finite("space_mix");
    return out;
}

}  // namespace

Tensor space_mix_dense(const Tensor& h, const Tensor& e_t, SpaceMixerParams& params) {
    return space_mix_plain(h, e_t, params, false);
}

Tensor space_mix_kernelized(const Tensor& h, const Tensor& e_t, SpaceMixerParams& params) {
    return space_mix_plain(h, e_t, params, true);
}

Var time_mix(Tape& tape, const TimeMixerParams::Vars& vars, Var x_folded, Var e_t) {
    const Tensor& x = tape.value(x_folded);
    const Tensor& emb = tape.value(e_t);
    const Tensor& w = tape.value(vars.input_w);
    if (x.rank() != 2 || emb.rank() != 2 || x.rows() != emb.rows() ||
        x.cols() + emb.cols() != w.rows()) {
        throw ShapeError("time_mix: series " + x.shape_str() + " with context " + emb.shape_str() +
                         " does not match projection " + w.shape_str());
    }
    Var h0 = tape.add_rowvec(tape.matmul(tape.concat_cols(x_folded, e_t), vars.input_w),
                             vars.input_b);
    Var ff = tape.add_rowvec(
        tape.matmul(tape.gelu(tape.add_rowvec(tape.matmul(h0, vars.ff_w1), vars.ff_b1)),
                    vars.ff_w2),
        vars.ff_b2);
    return tape.layer_norm(tape.add(h0, ff), vars.ln_gain, vars.ln_bias, kLayerNormEps);
}

Tensor time_mix(const Tensor& x_window, const Tensor& e_t, TimeMixerParams& params) {
    Tape tape;
    TimeMixerParams::Vars vars = params.lift(tape);
    Tensor out =
        tape.value(time_mix(tape, vars, tape.constant(fold(x_window)), tape.constant(e_t)));
    out.assert_finite("time_mix");
    return out;
}

}  // namespace nexus
