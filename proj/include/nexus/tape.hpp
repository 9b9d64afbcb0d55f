#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nexus/tensor.hpp"

namespace nexus {

// Handle to a node on a Tape.
struct Var {
    std::uint32_t index = UINT32_MAX;
    bool valid() const { return index != UINT32_MAX; }
};

// Reverse-mode differentiation over an explicit tape. Nodes are appended in
// evaluation order, so node order is already a topological order and the
// backward pass is a single reverse sweep that visits each node exactly once.
// Gradients accumulate additively, so a value used twice receives the sum of
// both path gradients.
//
// Tapes are single-threaded; parallelism, when enabled via NEXUS_THREADS,
// lives inside individual kernels and partitions output rows, which keeps
// results bit-identical for any thread count.
class Tape {
public:
    // Differentiable input; its gradient is available after backward().
    Var leaf(Tensor value);
    // Non-differentiable input (data, masks, encodings).
    Var constant(Tensor value);

    const Tensor& value(Var v) const { return nodes_[v.index].value; }
    // Gradient of the last backward() root w.r.t. v; zeros if v is unused.
    const Tensor& grad(Var v);

    // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. Root must be
    // a 1x1 scalar with a finite value.
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_rowvec(Var a, Var v);  // (n x d) + (1 x d)
    Var concat_cols(Var a, Var b);
    Var slice_cols(Var a, std::size_t j0, std::size_t j1);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var gelu(Var a);
    Var relu(Var a);
    Var abs(Var a);
    Var exp(Var a);
    Var elu_plus_one(Var a);
    Var softmax_rows(Var a);
    Var normalize_rows(Var a);  // x / ||x||_2 per row
    Var layer_norm(Var x, Var gain, Var bias, double eps);
    Var div_rows(Var a, Var denom);  // (n x d) / (n x 1)
    Var sum(Var a);                  // -> 1x1
    Var mean(Var a);

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on first contribution during backward
        bool needs_grad = false;
        std::function<void(Tape&)> backprop;  // empty for inputs
    };

    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop);
    // Accumulation target for node i, allocating zeros on first use.
    Tensor& grad_buffer(std::uint32_t i);
    bool has_grad(std::uint32_t i) const { return !nodes_[i].grad.empty(); }
    bool needs(Var v) const { return nodes_[v.index].needs_grad; }

    std::vector<Node> nodes_;
};

// Raw matrix kernels shared by forward and backward passes.
// accumulate=false overwrites out, true adds into it.
namespace kernels {
void mm_nn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate);   // a . b
void mm_nt(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate);   // a . b^T
void mm_tn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate);   // a^T . b
}  // namespace kernels

// Value of NEXUS_THREADS (default 1), clamped to [1, 64].
int thread_count();

}  // namespace nexus
