#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nexus/tensor.hpp"

namespace nexus {

// Named handle to a mutable parameter tensor. Registries of these drive the
// optimizer, serialization, corruption and finite-difference checks; names
// are stable across runs and builds.
struct ParamRef {
    std::string name;
    Tensor* tensor;
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Coordinates checked per tensor; larger tensors are subsampled
    // deterministically from `seed`.
    std::size_t max_coords = 24;
    std::uint64_t seed = 0;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::size_t coords_failed = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tolerance = 0.0;

    bool passed() const;
    double worst_rel_err() const;
    std::string summary() const;
};

// Central finite differences per coordinate against the supplied analytic
// gradients. `eval` re-evaluates the scalar objective at the current
// parameter values; parameters are perturbed in place and restored. Relative
// error uses max(|fd|, |analytic|, 1e-6) as denominator so near-zero
// gradients are compared absolutely.
GradCheckReport grad_check(const std::vector<ParamRef>& params,
                           const std::function<double()>& eval,
                           const std::vector<Tensor>& analytic_grads,
                           const GradCheckOptions& options = {});

}  // namespace nexus
