#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nexus/tensor.hpp"

namespace nexus {

// Time-of-day encoding for a window of absolute step indices: row i is
// (sin(2*pi*p_i/period), cos(2*pi*p_i/period)), so every row has unit norm
// and the encoding is periodic in p with the given period.
struct TimeEncoding {
    Tensor u;  // T x 2, sine column then cosine column
    long long period = 0;
};

// Indices are reduced modulo `period` before encoding; the encoding is
// periodic anyway and this bounds the argument magnitude.
TimeEncoding sinusoidal_time_encoding(std::span<const long long> step_indices, long long period);

// Repeats the encoding of step 0 for all T rows. Used by the variant that
// withholds time-of-day information from the embedding.
TimeEncoding constant_time_encoding(std::size_t window, long long period);

// Learnable node dictionary initializer: i.i.d. uniform in
// [-1/sqrt(d_emb), 1/sqrt(d_emb)], deterministic given the seed.
Tensor init_node_embedding(std::size_t n_nodes, std::size_t d_emb, std::uint64_t seed);

}  // namespace nexus
