#include "nexus/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nexus/rng.hpp"

namespace nexus {

namespace {

std::vector<std::size_t> pick_coords(std::size_t size, std::size_t max_coords, Rng& rng) {
    std::vector<std::size_t> coords;
    if (size <= max_coords) {
        coords.resize(size);
        for (std::size_t i = 0; i < size; ++i) coords[i] = i;
        return coords;
    }
    // Sample without replacement; sizes here are small enough for a retry set.
    coords.reserve(max_coords);
    while (coords.size() < max_coords) {
        const std::size_t c = static_cast<std::size_t>(rng.below(size));
        if (std::find(coords.begin(), coords.end(), c) == coords.end()) coords.push_back(c);
    }
    std::sort(coords.begin(), coords.end());
    return coords;
}

double eval_checked(const std::function<double()>& eval) {
    const double v = eval();
    if (!std::isfinite(v)) throw NumericError("grad_check: objective evaluated to non-finite value");
    return v;
}

}  // namespace

bool GradCheckReport::passed() const {
    for (const auto& e : entries) {
        if (e.coords_failed > 0) return false;
    }
    return true;
}

double GradCheckReport::worst_rel_err() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_err);
    return worst;
}

std::string GradCheckReport::summary() const {
    std::ostringstream out;
    for (const auto& e : entries) {
        out << e.name << ": max_rel_err=" << e.max_rel_err << " checked=" << e.coords_checked
            << " failed=" << e.coords_failed << "\n";
    }
    return out.str();
}

GradCheckReport grad_check(const std::vector<ParamRef>& params,
                           const std::function<double()>& eval,
                           const std::vector<Tensor>& analytic_grads,
                           const GradCheckOptions& options) {
    if (params.size() != analytic_grads.size()) {
        throw ShapeError("grad_check: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(analytic_grads.size()) + " gradients");
    }
    if (options.step <= 0.0) throw DomainError("grad_check: step must be positive");

    GradCheckReport report;
    report.tolerance = options.tolerance;
    Rng rng(options.seed);

    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p].tensor;
        const Tensor& grad = analytic_grads[p];
        if (!theta.same_shape(grad)) {
            throw ShapeError("grad_check: parameter " + params[p].name + " shape " +
                             theta.shape_str() + " vs gradient " + grad.shape_str());
        }
        GradCheckEntry entry;
        entry.name = params[p].name;
        for (std::size_t c : pick_coords(theta.size(), options.max_coords, rng)) {
            const double saved = theta[c];
            theta[c] = saved + options.step;
            const double f_plus = eval_checked(eval);
            theta[c] = saved - options.step;
            const double f_minus = eval_checked(eval);
            theta[c] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * options.step);
            const double rel = std::fabs(fd - grad[c]) /
                               std::max({std::fabs(fd), std::fabs(grad[c]), 1e-6});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
            entry.coords_checked += 1;
            if (rel > options.tolerance) entry.coords_failed += 1;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace nexus
