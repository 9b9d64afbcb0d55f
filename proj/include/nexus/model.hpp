#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nexus/mixers.hpp"
#include "nexus/stne.hpp"

namespace nexus {

// Architecture and variant switches for one model instance.
//
// The variant flags realize the ablations: use_stne=false replaces the
// fused embedding with zeros in both mixers (uniform mixing weights,
// parameter shapes unchanged so ablations stay paired); use_space_mixer=false
// drops the space-mixing stage entirely, keeping each channel independent;
// use_time_encoding=false freezes the time encoding to a constant row.
struct ModelConfig {
    std::size_t n_nodes = 1;
    std::size_t window = 12;
    std::size_t horizon = 12;
    std::size_t d_in = 1;
    std::size_t d_out = 1;
    std::size_t hidden = 32;
    std::size_t d_emb = 16;
    std::size_t layers = 1;
    KernelKind kernel = KernelKind::Softmax;
    long long period = 288;
    bool use_stne = true;
    bool use_space_mixer = true;
    bool use_time_encoding = true;
    std::vector<double> quantile_levels;  // empty: mean head only
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t mean_width() const { return horizon * d_out; }
    std::size_t readout_width() const { return (1 + quantile_levels.size()) * mean_width(); }
};

// Two-layer dense readout producing all H steps (and quantile heads) at once.
struct ReadoutParams {
    Tensor w1;  // D x D
    Tensor b1;  // 1 x D
    Tensor w2;  // D x readout_width
    Tensor b2;  // 1 x readout_width

    struct Vars {
        Var w1, b1, w2, b2;
    };
    Vars lift(Tape& tape);
    std::vector<ParamRef> params(const std::string& prefix);
};

// The assembled pipeline: STNE -> time mixer -> L space mixers -> readout.
struct ModelParams {
    ModelConfig config;
    StnEmbedding stne;
    TimeMixerParams time_mixer;
    std::optional<SpaceMixerParams> space_mixer;
    ReadoutParams readout;

    struct Vars {
        StnEmbedding::Vars stne;
        TimeMixerParams::Vars time_mixer;
        std::optional<SpaceMixerParams::Vars> space_mixer;
        ReadoutParams::Vars readout;
        // Parallel to ModelParams::params() order; the trainer zips the two.
        std::vector<Var> flat;
    };
    Vars lift(Tape& tape);
    std::vector<ParamRef> params();
    std::size_t parameter_count();
};

// Deterministic initialization from config.seed; same config and seed give
// bit-identical parameters.
ModelParams build_model(const ModelConfig& config);

// Builds the forward graph for one window. Returns the full readout output,
// N x readout_width, still folded; slice heads off it with mean_head /
// quantile_head. x is N x T x d_in; step_indices are the window's absolute
// input steps (length T).
Var forward_graph(Tape& tape, const ModelConfig& config, const ModelParams::Vars& vars,
                  const Tensor& x, std::span<const long long> step_indices);

Var mean_head(Tape& tape, const ModelConfig& config, Var readout_out);
Var quantile_head(Tape& tape, const ModelConfig& config, Var readout_out, std::size_t level_index);

// Point forecast, N x H x d_out.
Tensor forward(ModelParams& model, const Tensor& x, std::span<const long long> step_indices);

struct QuantileForecast {
    Tensor mean;                   // N x H x d_out
    std::vector<Tensor> quantiles; // one per level, same shape
};

// Mean head plus one head per quantile level. Levels must lie in (0, 1) and
// match the configuration the readout was sized with. No crossing constraint
// is enforced between heads.
QuantileForecast forward_with_quantiles(ModelParams& model, const Tensor& x,
                                        std::span<const long long> step_indices,
                                        std::span<const double> levels);

}  // namespace nexus
