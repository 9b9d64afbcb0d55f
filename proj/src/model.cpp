#include "nexus/model.hpp"

#include <cmath>

#include "nexus/encoding.hpp"
#include "nexus/rng.hpp"

namespace nexus {

namespace {

Tensor uniform_fan_in(std::size_t rows, std::size_t cols, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor w = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-scale, scale);
    return w;
}

void check_levels(std::span<const double> levels) {
    for (double q : levels) {
        if (!(q > 0.0 && q < 1.0)) {
            throw DomainError("quantile level " + std::to_string(q) + " outside (0, 1)");
        }
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (n_nodes < 1 || window < 1 || horizon < 1 || d_in < 1 || d_out < 1 || hidden < 1 ||
        d_emb < 1) {
        throw ConfigError("model config: all extents must be >= 1");
    }
    if (layers < 1) throw ConfigError("model config: layers must be >= 1");
    if (period < 1) throw ConfigError("model config: period must be >= 1");
    if (!use_stne && use_time_encoding) {
        throw ConfigError("model config: use_time_encoding requires use_stne");
    }
    check_levels(quantile_levels);
}

ReadoutParams::Vars ReadoutParams::lift(Tape& tape) {
    Vars v;
    v.w1 = tape.leaf(w1);
    v.b1 = tape.leaf(b1);
    v.w2 = tape.leaf(w2);
    v.b2 = tape.leaf(b2);
    return v;
}

std::vector<ParamRef> ReadoutParams::params(const std::string& prefix) {
    return {{prefix + ".w1", &w1}, {prefix + ".b1", &b1}, {prefix + ".w2", &w2},
            {prefix + ".b2", &b2}};
}

ModelParams::Vars ModelParams::lift(Tape& tape) {
    Vars v;
    v.stne = stne.lift(tape);
    v.time_mixer = time_mixer.lift(tape);
    if (space_mixer.has_value()) v.space_mixer = space_mixer->lift(tape);
    v.readout = readout.lift(tape);
    v.flat = {v.stne.node_dict, v.stne.time_proj, v.stne.emb_proj,  v.stne.fuse_w1,
              v.stne.fuse_b1,   v.stne.fuse_w2,   v.stne.fuse_b2,   v.time_mixer.input_w,
              v.time_mixer.input_b, v.time_mixer.ff_w1, v.time_mixer.ff_b1, v.time_mixer.ff_w2,
              v.time_mixer.ff_b2, v.time_mixer.ln_gain, v.time_mixer.ln_bias};
    if (v.space_mixer.has_value()) {
        v.flat.push_back(v.space_mixer->theta);
        v.flat.push_back(v.space_mixer->ln_gain);
        v.flat.push_back(v.space_mixer->ln_bias);
    }
    v.flat.push_back(v.readout.w1);
    v.flat.push_back(v.readout.b1);
    v.flat.push_back(v.readout.w2);
    v.flat.push_back(v.readout.b2);
    return v;
}

std::vector<ParamRef> ModelParams::params() {
    std::vector<ParamRef> refs = stne.params("stne");
    for (auto& r : time_mixer.params("time_mixer")) refs.push_back(r);
    if (space_mixer.has_value()) {
        for (auto& r : space_mixer->params("space_mixer")) refs.push_back(r);
    }
    for (auto& r : readout.params("readout")) refs.push_back(r);
    return refs;
}

std::size_t ModelParams::parameter_count() {
    std::size_t n = 0;
    for (const auto& ref : params()) n += ref.tensor->size();
    return n;
}

ModelParams build_model(const ModelConfig& config) {
    config.validate();
    ModelParams model;
    model.config = config;
    model.stne = init_stn_embedding(config.n_nodes, config.d_emb, config.window, config.hidden,
                                    config.seed);
    model.time_mixer =
        init_time_mixer(config.window * config.d_in, config.hidden, config.seed ^ 0xa5a5a5a5ULL);
    if (config.use_space_mixer) {
        model.space_mixer = init_space_mixer(config.hidden, config.kernel, config.layers,
                                             config.seed ^ 0x5a5a5a5aULL);
    }
    Rng rng(config.seed ^ 0xc3c3c3c3ULL);
    model.readout.w1 = uniform_fan_in(config.hidden, config.hidden, rng);
    model.readout.b1 = Tensor::zeros({1, config.hidden});
    model.readout.w2 = uniform_fan_in(config.hidden, config.readout_width(), rng);
    model.readout.b2 = Tensor::zeros({1, config.readout_width()});
    return model;
}

Var forward_graph(Tape& tape, const ModelConfig& config, const ModelParams::Vars& vars,
                  const Tensor& x, std::span<const long long> step_indices) {
    if (x.rank() != 3 || x.dim(0) != config.n_nodes || x.dim(1) != config.window ||
        x.dim(2) != config.d_in) {
        throw ShapeError("forward: window " + x.shape_str() + " does not match config (" +
                         std::to_string(config.n_nodes) + "x" + std::to_string(config.window) +
                         "x" + std::to_string(config.d_in) + ")");
    }
    if (step_indices.size() != config.window) {
        throw ShapeError("forward: expected " + std::to_string(config.window) +
                         " step indices, got " + std::to_string(step_indices.size()));
    }

    Var e_t;
    if (config.use_stne) {
        const TimeEncoding enc = config.use_time_encoding
                                     ? sinusoidal_time_encoding(step_indices, config.period)
                                     : constant_time_encoding(config.window, config.period);
        e_t = fuse_stne(tape, vars.stne, tape.constant(enc.u));
    } else {
        e_t = tape.constant(Tensor::zeros({config.n_nodes, config.hidden}));
    }

    Var h = time_mix(tape, vars.time_mixer, tape.constant(fold(x)), e_t);
    if (config.use_space_mixer) {
        for (std::size_t l = 0; l < config.layers; ++l) {
            h = space_mix_layer(tape, *vars.space_mixer, config.kernel, h, e_t, true);
        }
    }
    Var hidden = tape.gelu(tape.add_rowvec(tape.matmul(h, vars.readout.w1), vars.readout.b1));
    return tape.add_rowvec(tape.matmul(hidden, vars.readout.w2), vars.readout.b2);
}

Var mean_head(Tape& tape, const ModelConfig& config, Var readout_out) {
    return tape.slice_cols(readout_out, 0, config.mean_width());
}

Var quantile_head(Tape& tape, const ModelConfig& config, Var readout_out,
                  std::size_t level_index) {
    if (level_index >= config.quantile_levels.size()) {
        throw DomainError("quantile_head: level index out of range");
    }
    const std::size_t w = config.mean_width();
    return tape.slice_cols(readout_out, (1 + level_index) * w, (2 + level_index) * w);
}

Tensor forward(ModelParams& model, const Tensor& x, std::span<const long long> step_indices) {
    Tape tape;
    ModelParams::Vars vars = model.lift(tape);
    Var out = forward_graph(tape, model.config, vars, x, step_indices);
    Tensor mean = tape.value(mean_head(tape, model.config, out));
    mean.assert_finite("forward");
    return unfold(mean, model.config.horizon, model.config.d_out);
}

QuantileForecast forward_with_quantiles(ModelParams& model, const Tensor& x,
                                        std::span<const long long> step_indices,
                                        std::span<const double> levels) {
    check_levels(levels);
    const auto& configured = model.config.quantile_levels;
    if (levels.size() != configured.size() ||
        !std::equal(levels.begin(), levels.end(), configured.begin())) {
        throw DomainError("forward_with_quantiles: levels do not match the configured heads");
    }
    Tape tape;
    ModelParams::Vars vars = model.lift(tape);
    Var out = forward_graph(tape, model.config, vars, x, step_indices);
    QuantileForecast forecast;
    Tensor mean = tape.value(mean_head(tape, model.config, out));
    mean.assert_finite("forward_with_quantiles");
    forecast.mean = unfold(mean, model.config.horizon, model.config.d_out);
    for (std::size_t q = 0; q < levels.size(); ++q) {
        Tensor head = tape.value(quantile_head(tape, model.config, out, q));
        head.assert_finite("forward_with_quantiles");
        forecast.quantiles.push_back(unfold(head, model.config.horizon, model.config.d_out));
    }
    return forecast;
}

}  // namespace nexus
