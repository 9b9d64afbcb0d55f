#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nexus/encoding.hpp"
#include "nexus/grad_check.hpp"
#include "nexus/tape.hpp"

namespace nexus {

// Spatiotemporal node embedding: a learnable node dictionary informed with
// time-of-day context. The two encodings are projected to a shared width and
// fused with a two-layer MLP:
//
//   U~ = W_u . U          (D x d_u)
//   E~ = E . W_e          (N x d_u)
//   E_t = Mlp(E~ . U~^T)  (N x D)
//
// One instance is shared by the time mixer (as per-node context columns) and
// every space-mixer layer (as the kernel query).
struct StnEmbedding {
    Tensor node_dict;  // E: N x d_emb
    Tensor time_proj;  // W_u: D x T
    Tensor emb_proj;   // W_e: d_emb x d_u (d_u = 2)
    Tensor fuse_w1;    // D x D
    Tensor fuse_b1;    // 1 x D
    Tensor fuse_w2;    // D x D
    Tensor fuse_b2;    // 1 x D

    struct Vars {
        Var node_dict, time_proj, emb_proj, fuse_w1, fuse_b1, fuse_w2, fuse_b2;
    };

    Vars lift(Tape& tape);
    // Same field order as lift(); optimizer state and checkpoints key on
    // these names.
    std::vector<ParamRef> params(const std::string& prefix);

    std::size_t n_nodes() const { return node_dict.dim(0); }
    std::size_t d_emb() const { return node_dict.dim(1); }
    std::size_t hidden() const { return time_proj.dim(0); }
    std::size_t window() const { return time_proj.dim(1); }
};

StnEmbedding init_stn_embedding(std::size_t n_nodes, std::size_t d_emb, std::size_t window,
                                std::size_t hidden, std::uint64_t seed);

// Builds E_t on the tape; differentiable w.r.t. every StnEmbedding parameter.
Var fuse_stne(Tape& tape, const StnEmbedding::Vars& vars, Var time_encoding);

// Convenience evaluation outside a training graph.
Tensor fuse_stne(StnEmbedding& embedding, const TimeEncoding& time);

}  // namespace nexus
