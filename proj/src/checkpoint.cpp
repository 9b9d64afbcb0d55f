#include "nexus/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace nexus {

namespace detail {

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const unsigned char* data, std::size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (std::size_t i = 0; i < len; i += 3) {
        const unsigned b0 = data[i];
        const unsigned b1 = i + 1 < len ? data[i + 1] : 0;
        const unsigned b2 = i + 2 < len ? data[i + 2] : 0;
        out.push_back(kAlphabet[b0 >> 2]);
        out.push_back(kAlphabet[((b0 & 0x03) << 4) | (b1 >> 4)]);
        out.push_back(i + 1 < len ? kAlphabet[((b1 & 0x0f) << 2) | (b2 >> 6)] : '=');
        out.push_back(i + 2 < len ? kAlphabet[b2 & 0x3f] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
    auto value_of = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        if (c == '=') return -1;
        throw DataError("base64: unexpected character");
    };
    if (text.size() % 4 != 0) throw DataError("base64: truncated payload");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const int v0 = value_of(text[i]);
        const int v1 = value_of(text[i + 1]);
        const int v2 = value_of(text[i + 2]);
        const int v3 = value_of(text[i + 3]);
        if (v0 < 0 || v1 < 0) throw DataError("base64: malformed quartet");
        out.push_back(static_cast<unsigned char>((v0 << 2) | (v1 >> 4)));
        if (v2 >= 0) out.push_back(static_cast<unsigned char>(((v1 & 0x0f) << 4) | (v2 >> 2)));
        if (v3 >= 0) {
            if (v2 < 0) throw DataError("base64: malformed padding");
            out.push_back(static_cast<unsigned char>(((v2 & 0x03) << 6) | v3));
        }
    }
    return out;
}

}  // namespace detail

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
    nlohmann::json j;
    j["shape"] = t.shape();
    j["dtype"] = "f64le";
    j["data"] = detail::base64_encode(reinterpret_cast<const unsigned char*>(t.data()),
                                      t.size() * sizeof(double));
    return j;
}

Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
    if (j.at("dtype").get<std::string>() != "f64le") {
        throw DataError("checkpoint: unsupported dtype for tensor " + name);
    }
    const std::vector<std::size_t> shape = j.at("shape").get<std::vector<std::size_t>>();
    const std::vector<unsigned char> bytes = detail::base64_decode(j.at("data").get<std::string>());
    if (bytes.size() % sizeof(double) != 0) {
        throw DataError("checkpoint: payload size not a multiple of 8 for tensor " + name);
    }
    std::vector<double> values(bytes.size() / sizeof(double));
    std::memcpy(values.data(), bytes.data(), bytes.size());
    return Tensor::from(shape, std::move(values));
}

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& config) {
    return nlohmann::json{{"n_nodes", config.n_nodes},
                          {"window", config.window},
                          {"horizon", config.horizon},
                          {"d_in", config.d_in},
                          {"d_out", config.d_out},
                          {"hidden", config.hidden},
                          {"d_emb", config.d_emb},
                          {"layers", config.layers},
                          {"kernel", kernel_to_string(config.kernel)},
                          {"period", config.period},
                          {"use_stne", config.use_stne},
                          {"use_space_mixer", config.use_space_mixer},
                          {"use_time_encoding", config.use_time_encoding},
                          {"quantile_levels", config.quantile_levels},
                          {"seed", config.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig config;
    config.n_nodes = j.at("n_nodes").get<std::size_t>();
    config.window = j.at("window").get<std::size_t>();
    config.horizon = j.at("horizon").get<std::size_t>();
    config.d_in = j.at("d_in").get<std::size_t>();
    config.d_out = j.at("d_out").get<std::size_t>();
    config.hidden = j.at("hidden").get<std::size_t>();
    config.d_emb = j.at("d_emb").get<std::size_t>();
    config.layers = j.at("layers").get<std::size_t>();
    config.kernel = kernel_from_string(j.at("kernel").get<std::string>());
    config.period = j.at("period").get<long long>();
    config.use_stne = j.at("use_stne").get<bool>();
    config.use_space_mixer = j.at("use_space_mixer").get<bool>();
    config.use_time_encoding = j.at("use_time_encoding").get<bool>();
    config.quantile_levels = j.at("quantile_levels").get<std::vector<double>>();
    config.seed = j.at("seed").get<std::uint64_t>();
    config.validate();
    return config;
}

nlohmann::json checkpoint_to_json(ModelParams& model) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["config"] = model_config_to_json(model.config);
    nlohmann::json tensors = nlohmann::json::object();
    for (const ParamRef& ref : model.params()) tensors[ref.name] = tensor_to_json(*ref.tensor);
    j["tensors"] = std::move(tensors);
    return j;
}

ModelParams checkpoint_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != kCheckpointFormat) {
        throw DataError("checkpoint: missing or unsupported format tag");
    }
    ModelParams model = build_model(model_config_from_json(j.at("config")));
    const nlohmann::json& tensors = j.at("tensors");
    for (const ParamRef& ref : model.params()) {
        if (!tensors.contains(ref.name)) {
            throw DataError("checkpoint: missing tensor " + ref.name);
        }
        Tensor loaded = tensor_from_json(tensors.at(ref.name), ref.name);
        if (!loaded.same_shape(*ref.tensor)) {
            throw DataError("checkpoint: tensor " + ref.name + " has shape " + loaded.shape_str() +
                            ", expected " + ref.tensor->shape_str());
        }
        *ref.tensor = std::move(loaded);
    }
    return model;
}

void save_checkpoint(ModelParams& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
    out << checkpoint_to_json(model).dump(2) << "\n";
    if (!out) throw DataError("checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint: invalid JSON in " + path + ": " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace nexus
