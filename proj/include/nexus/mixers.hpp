#pragma once

#include <string>
#include <vector>

#include "nexus/grad_check.hpp"
#include "nexus/tape.hpp"

namespace nexus {

// Row-wise feature maps available to the space mixer's kernel smoother.
// Softmax is the default; the two *Normalized maps divide by the row L2 norm
// first and reject all-zero rows.
enum class KernelKind { Softmax, EluPlusOne, ReluNormalized, Exp, IdentityNormalized };

KernelKind kernel_from_string(const std::string& name);
std::string kernel_to_string(KernelKind kind);
const std::vector<KernelKind>& all_kernels();

constexpr double kLayerNormEps = 1e-5;

// Flattens N x T x d_in into N x (T*d_in); row n is node n's feature vectors
// concatenated over time, time-major. Exact inverse pair with unfold.
Tensor fold(const Tensor& x);
Tensor unfold(const Tensor& y, std::size_t horizon, std::size_t d_out);

// Time mixer parameters. The input projection consumes the flattened series
// concatenated with the per-node embedding, so its weight stacks as
// [theta_series; theta_context]: the upper T*d_in rows act on the series and
// are shared by all nodes, the lower D rows are the per-node local
// adaptation. A two-layer feedforward with a residual shortcut and layer
// normalization follows.
struct TimeMixerParams {
    Tensor input_w;  // (T*d_in + D) x D
    Tensor input_b;  // 1 x D
    Tensor ff_w1;    // D x D
    Tensor ff_b1;    // 1 x D
    Tensor ff_w2;    // D x D
    Tensor ff_b2;    // 1 x D
    Tensor ln_gain;  // 1 x D
    Tensor ln_bias;  // 1 x D

    struct Vars {
        Var input_w, input_b, ff_w1, ff_b1, ff_w2, ff_b2, ln_gain, ln_bias;
    };
    Vars lift(Tape& tape);
    std::vector<ParamRef> params(const std::string& prefix);

    std::size_t series_width() const;  // T*d_in
    std::size_t hidden() const { return input_w.cols(); }
    // The context block of the input projection (the lower D rows).
    Tensor context_block() const;
};

TimeMixerParams init_time_mixer(std::size_t series_width, std::size_t hidden, std::uint64_t seed);

// Space mixer parameters. One feedforward weight is shared by all L layers,
// and every layer reuses the same embedding for its kernel query.
struct SpaceMixerParams {
    Tensor theta;    // D x D
    Tensor ln_gain;  // 1 x D
    Tensor ln_bias;  // 1 x D
    KernelKind kernel = KernelKind::Softmax;
    std::size_t layers = 1;

    struct Vars {
        Var theta, ln_gain, ln_bias;
    };
    Vars lift(Tape& tape);
    std::vector<ParamRef> params(const std::string& prefix);
};

SpaceMixerParams init_space_mixer(std::size_t hidden, KernelKind kernel, std::size_t layers,
                                  std::uint64_t seed);

// Row-wise feature map phi.
Var apply_kernel(Tape& tape, KernelKind kind, Var x);
Tensor apply_kernel(KernelKind kind, const Tensor& x);

// Kernel-smoothed states (Psi H)_i = sum_j K(e_i,e_j) h_j / sum_j K(e_i,e_j)
// with K(e_i,e_j) = phi(e_i).phi(e_j).
//
// kernelized=false materializes the N x N kernel matrix (the quadratic
// exactness oracle); kernelized=true reuses the two global feature sums, one
// O(N) pass, identical result in exact arithmetic. Summation order is fixed,
// so both paths are bit-reproducible.
Var kernel_smooth(Tape& tape, KernelKind kind, Var h, Var e, bool kernelized);
Tensor kernel_smooth_dense(KernelKind kind, const Tensor& h, const Tensor& e);
Tensor kernel_smooth_kernelized(KernelKind kind, const Tensor& h, const Tensor& e);

// One full space-mixer layer: LayerNorm(h + gelu(h Theta + Psi H)). The
// residual shortcut lets the layer degrade to (normalized) identity when
// mixing contributes nothing.
Var space_mix_layer(Tape& tape, const SpaceMixerParams::Vars& vars, KernelKind kind, Var h, Var e,
                    bool kernelized);
Tensor space_mix_dense(const Tensor& h, const Tensor& e_t, SpaceMixerParams& params);
Tensor space_mix_kernelized(const Tensor& h, const Tensor& e_t, SpaceMixerParams& params);

// Full time mixer: project [fold(x) || e_t], then feedforward with residual
// and layer normalization. x_folded is N x (T*d_in), e_t is N x D.
Var time_mix(Tape& tape, const TimeMixerParams::Vars& vars, Var x_folded, Var e_t);
Tensor time_mix(const Tensor& x_window, const Tensor& e_t, TimeMixerParams& params);

}  // namespace nexus
