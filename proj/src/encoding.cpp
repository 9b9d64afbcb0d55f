#include "nexus/encoding.hpp"

#include <cmath>

#include "nexus/rng.hpp"

namespace nexus {

TimeEncoding sinusoidal_time_encoding(std::span<const long long> step_indices, long long period) {
    if (period < 1) throw DomainError("sinusoidal_time_encoding: period must be >= 1");
    Tensor u = Tensor::zeros({step_indices.size(), 2});
    for (std::size_t i = 0; i < step_indices.size(); ++i) {
        long long p = step_indices[i] % period;
        if (p < 0) p += period;
        const double phase = 2.0 * M_PI * static_cast<double>(p) / static_cast<double>(period);
        u.at(i, 0) = std::sin(phase);
        u.at(i, 1) = std::cos(phase);
    }
    return {std::move(u), period};
}

TimeEncoding constant_time_encoding(std::size_t window, long long period) {
    if (period < 1) throw DomainError("constant_time_encoding: period must be >= 1");
    Tensor u = Tensor::zeros({window, 2});
    for (std::size_t i = 0; i < window; ++i) {
        u.at(i, 0) = 0.0;
        u.at(i, 1) = 1.0;
    }
    return {std::move(u), period};
}

Tensor init_node_embedding(std::size_t n_nodes, std::size_t d_emb, std::uint64_t seed) {
    if (n_nodes < 1 || d_emb < 1) {
        throw DomainError("init_node_embedding: extents must be >= 1");
    }
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_emb));
    Tensor e = Tensor::zeros({n_nodes, d_emb});
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = rng.uniform(-scale, scale);
    return e;
}

}  // namespace nexus
