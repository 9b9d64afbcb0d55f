#include "nexus/stne.hpp"

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

}  // namespace

StnEmbedding::Vars StnEmbedding::lift(Tape& tape) {
    Vars v;
    v.node_dict = tape.leaf(node_dict);
    v.time_proj = tape.leaf(time_proj);
    v.emb_proj = tape.leaf(emb_proj);
    v.fuse_w1 = tape.leaf(fuse_w1);
    v.fuse_b1 = tape.leaf(fuse_b1);
    v.fuse_w2 = tape.leaf(fuse_w2);
    v.fuse_b2 = tape.leaf(fuse_b2);
    return v;
}

std::vector<ParamRef> StnEmbedding::params(const std::string& prefix) {
    return {{prefix + ".E", &node_dict},        {prefix + ".W_u", &time_proj},
            {prefix + ".W_e", &emb_proj},       {prefix + ".fuse_w1", &fuse_w1},
            {prefix + ".fuse_b1", &fuse_b1},    {prefix + ".fuse_w2", &fuse_w2},
            {prefix + ".fuse_b2", &fuse_b2}};
}

StnEmbedding init_stn_embedding(std::size_t n_nodes, std::size_t d_emb, std::size_t window,
                                std::size_t hidden, std::uint64_t seed) {
    if (n_nodes < 1 || d_emb < 1 || hidden < 1 || window < 1) {
        throw DomainError("init_stn_embedding: extents must be >= 1");
    }
    StnEmbedding emb;
    emb.node_dict = init_node_embedding(n_nodes, d_emb, seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    emb.time_proj = uniform_fan_in(hidden, window, rng);
    emb.emb_proj = uniform_fan_in(d_emb, 2, rng);
    emb.fuse_w1 = uniform_fan_in(hidden, hidden, rng);
    emb.fuse_b1 = Tensor::zeros({1, hidden});
    emb.fuse_w2 = uniform_fan_in(hidden, hidden, rng);
    emb.fuse_b2 = Tensor::zeros({1, hidden});
    return emb;
}

Var fuse_stne(Tape& tape, const StnEmbedding::Vars& vars, Var time_encoding) {
    const Tensor& u = tape.value(time_encoding);
    const Tensor& wu = tape.value(vars.time_proj);
    if (u.rank() != 2 || u.cols() != tape.value(vars.emb_proj).cols() || u.rows() != wu.cols()) {
        throw ShapeError("fuse_stne: time encoding " + u.shape_str() +
                         " does not match projections W_u " + wu.shape_str() + ", W_e " +
                         tape.value(vars.emb_proj).shape_str());
    }
    Var u_tilde = tape.matmul(vars.time_proj, time_encoding);   // D x d_u
    Var e_tilde = tape.matmul(vars.node_dict, vars.emb_proj);   // N x d_u
    Var z = tape.matmul(e_tilde, tape.transpose(u_tilde));      // N x D
    Var hidden = tape.gelu(tape.add_rowvec(tape.matmul(z, vars.fuse_w1), vars.fuse_b1));
    return tape.add_rowvec(tape.matmul(hidden, vars.fuse_w2), vars.fuse_b2);
}

Tensor fuse_stne(StnEmbedding& embedding, const TimeEncoding& time) {
    Tape tape;
    StnEmbedding::Vars vars = embedding.lift(tape);
    Tensor out = tape.value(fuse_stne(tape, vars, tape.constant(time.u)));
    out.assert_finite("fuse_stne");
    return out;
}

}  // namespace nexus
