#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "inpaint/dataset.hpp"
#include "inpaint/generator.hpp"
#include "inpaint/losses.hpp"

namespace inpaint {

// Every training/architecture/loss knob with its default. Config files are
// either flat key=value text or a JSON object with the same keys; unknown
// keys are errors in both formats.
struct TrainConfig {
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int64_t batch = 4;
    int64_t steps = 100;
    int64_t image_size = 64;
    int64_t base_channels = 16;
    uint64_t seed = 1;
    int64_t checkpoint_every = 50;
    int64_t log_every = 1;
    std::string precision = "double";  // or "float"
    std::string mask_kind = "irregular";  // or "center"
    std::string mask_bucket = "mix";   // 10-20 / 20-30 / 30-40 / 40-50 / mix
    int64_t ca_patch = 4;
    int64_t bpa_neighborhood = 3;
    double spatial_sigma = 0.0;  // <= 0: bottleneck_height / 4
    bool enable_sdff = true;
    bool enable_ca = true;
    bool enable_sknet = true;
    bool enable_bpfa = true;
    bool enable_pc = true;
    double lambda_rec = 1.0;
    double lambda_perc = 0.2;
    double lambda_style = 250.0;
    double lambda_adv = 0.2;
    double lambda_te = 1.0;
    double lambda_st = 1.0;
    uint64_t fx_seed = 1007341;  // feature-extractor pyramid seed
    std::string fx_weights;      // optional checkpoint-format weight file

    GeneratorConfig generator_config() const {
        GeneratorConfig g;
        g.image_size = image_size;
        g.base_channels = base_channels;
        g.enable_sdff = enable_sdff;
        g.enable_ca = enable_ca;
        g.enable_sknet = enable_sknet;
        g.enable_bpfa = enable_bpfa;
        g.enable_pc = enable_pc;
        g.ca_patch = ca_patch;
        g.bpa_neighborhood = bpa_neighborhood;
        g.spatial_sigma = spatial_sigma;
        return g;
    }

    LossWeights loss_weights() const {
        return {lambda_rec, lambda_perc, lambda_style, lambda_adv, lambda_te, lambda_st};
    }

    MaskPolicy mask_policy() const {
        MaskPolicy p;
        p.kind = mask_kind == "center" ? MaskKind::Center : MaskKind::Irregular;
        if (mask_bucket != "mix") p.bucket = parse_bucket(mask_bucket);
        return p;
    }

    void validate() const {
        require<ConfigError>(lr > 0, "lr must be positive, got ", lr);
        require<ConfigError>(batch >= 1, "batch must be >= 1, got ", batch);
        require<ConfigError>(steps >= 0, "steps must be >= 0, got ", steps);
        require<ConfigError>(checkpoint_every >= 1, "checkpoint_every must be >= 1");
        require<ConfigError>(log_every >= 1, "log_every must be >= 1");
        require<ConfigError>(precision == "double" || precision == "float",
                             "precision must be 'double' or 'float', got '", precision, "'");
        require<ConfigError>(mask_kind == "center" || mask_kind == "irregular",
                             "mask_kind must be 'center' or 'irregular', got '", mask_kind, "'");
        if (mask_bucket != "mix") parse_bucket(mask_bucket);
        generator_config().validate();
        loss_weights().validate();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["lr"] = lr;
        j["adam_beta1"] = adam_beta1;
        j["adam_beta2"] = adam_beta2;
        j["adam_eps"] = adam_eps;
        j["batch"] = batch;
        j["steps"] = steps;
        j["image_size"] = image_size;
        j["base_channels"] = base_channels;
        j["seed"] = seed;
        j["checkpoint_every"] = checkpoint_every;
        j["log_every"] = log_every;
        j["precision"] = precision;
        j["mask_kind"] = mask_kind;
        j["mask_bucket"] = mask_bucket;
        j["ca_patch"] = ca_patch;
        j["bpa_neighborhood"] = bpa_neighborhood;
        j["spatial_sigma"] = spatial_sigma;
        j["enable_sdff"] = enable_sdff;
        j["enable_ca"] = enable_ca;
        j["enable_sknet"] = enable_sknet;
        j["enable_bpfa"] = enable_bpfa;
        j["enable_pc"] = enable_pc;
        j["lambda_rec"] = lambda_rec;
        j["lambda_perc"] = lambda_perc;
        j["lambda_style"] = lambda_style;
        j["lambda_adv"] = lambda_adv;
        j["lambda_te"] = lambda_te;
        j["lambda_st"] = lambda_st;
        j["fx_seed"] = fx_seed;
        j["fx_weights"] = fx_weights;
        return j;
    }

    // nlohmann objects iterate in sorted key order, so this echo string is
    // canonical and byte-stable.
    std::string echo() const { return to_json().dump(); }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig cfg;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            if (!cfg.assign(key, it.value()))
                throw ConfigError("unknown config key '" + key + "'");
        }
        return cfg;
    }

  private:
    bool assign(const std::string& key, const nlohmann::json& v) {
        auto num = [&]() -> double {
            if (v.is_number()) return v.get<double>();
            if (v.is_string()) {
                try {
                    size_t used = 0;
                    const std::string s = v.get<std::string>();
                    const double d = std::stod(s, &used);
                    require<ConfigError>(used == s.size(), "bad numeric value '", s, "' for '",
                                         key, "'");
                    return d;
                } catch (const std::invalid_argument&) {
                    throw ConfigError("bad numeric value for '" + key + "'");
                }
            }
            throw ConfigError("bad numeric value for '" + key + "'");
        };
        auto flag = [&]() -> bool {
            if (v.is_boolean()) return v.get<bool>();
            const std::string s = v.is_string() ? v.get<std::string>() : v.dump();
            if (s == "true" || s == "1") return true;
            if (s == "false" || s == "0") return false;
            throw ConfigError("bad boolean value '" + s + "' for '" + key + "'");
        };
        auto str = [&]() -> std::string {
            return v.is_string() ? v.get<std::string>() : v.dump();
        };

        if (key == "lr") lr = num();
        else if (key == "adam_beta1") adam_beta1 = num();
        else if (key == "adam_beta2") adam_beta2 = num();
        else if (key == "adam_eps") adam_eps = num();
        else if (key == "batch") batch = static_cast<int64_t>(num());
        else if (key == "steps") steps = static_cast<int64_t>(num());
        else if (key == "image_size") image_size = static_cast<int64_t>(num());
        else if (key == "base_channels") base_channels = static_cast<int64_t>(num());
        else if (key == "seed") seed = static_cast<uint64_t>(num());
        else if (key == "checkpoint_every") checkpoint_every = static_cast<int64_t>(num());
        else if (key == "log_every") log_every = static_cast<int64_t>(num());
        else if (key == "precision") precision = str();
        else if (key == "mask_kind") mask_kind = str();
        else if (key == "mask_bucket") mask_bucket = str();
        else if (key == "ca_patch") ca_patch = static_cast<int64_t>(num());
        else if (key == "bpa_neighborhood") bpa_neighborhood = static_cast<int64_t>(num());
        else if (key == "spatial_sigma") spatial_sigma = num();
        else if (key == "enable_sdff") enable_sdff = flag();
        else if (key == "enable_ca") enable_ca = flag();
        else if (key == "enable_sknet") enable_sknet = flag();
        else if (key == "enable_bpfa") enable_bpfa = flag();
        else if (key == "enable_pc") enable_pc = flag();
        else if (key == "lambda_rec") lambda_rec = num();
        else if (key == "lambda_perc") lambda_perc = num();
        else if (key == "lambda_style") lambda_style = num();
        else if (key == "lambda_adv") lambda_adv = num();
        else if (key == "lambda_te") lambda_te = num();
        else if (key == "lambda_st") lambda_st = num();
        else if (key == "fx_seed") fx_seed = static_cast<uint64_t>(num());
        else if (key == "fx_weights") fx_weights = str();
        else return false;
        return true;
    }
};

inline TrainConfig parse_config_text(const std::string& text, const std::string& origin) {
    // sniff: first non-space character '{' means JSON
    size_t i = 0;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i < text.size() && text[i] == '{') {
        try {
            return TrainConfig::from_json(nlohmann::json::parse(text));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(origin + ": " + e.what());
        }
    }

    nlohmann::json j = nlohmann::json::object();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require<ConfigError>(eq != std::string::npos, origin, ":", lineno,
                             ": expected key=value, got '", line, "'");
        j[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return TrainConfig::from_json(j);
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require<ConfigError>(in.good(), path, ": cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

// Field-by-field comparison for checkpoint compatibility errors.
inline std::vector<std::string> config_diff(const nlohmann::json& a, const nlohmann::json& b) {
    std::vector<std::string> diffs;
    for (auto it = a.begin(); it != a.end(); ++it) {
        if (!b.contains(it.key()))
            diffs.push_back(it.key() + ": " + it.value().dump() + " vs <missing>");
        else if (b[it.key()] != it.value())
            diffs.push_back(it.key() + ": " + it.value().dump() + " vs " + b[it.key()].dump());
    }
    for (auto it = b.begin(); it != b.end(); ++it)
        if (!a.contains(it.key()))
            diffs.push_back(it.key() + ": <missing> vs " + it.value().dump());
    return diffs;
}

// Fields that shape parameters, buffers or optimizer slots. Resuming may
// change run-length knobs (steps, logging cadence) but never these.
inline std::vector<std::string> config_diff_structural(const nlohmann::json& a,
                                                       const nlohmann::json& b) {
    static const char* kStructural[] = {
        "image_size",   "base_channels", "ca_patch",    "bpa_neighborhood", "spatial_sigma",
        "enable_sdff",  "enable_ca",     "enable_sknet", "enable_bpfa",     "enable_pc",
        "precision",    "fx_seed",       "fx_weights"};
    std::vector<std::string> diffs;
    for (const char* key : kStructural) {
        const bool in_a = a.contains(key), in_b = b.contains(key);
        if (!in_a || !in_b || a[key] != b[key])
            diffs.push_back(std::string(key) + ": " + (in_a ? a[key].dump() : "<missing>") +
                            " vs " + (in_b ? b[key].dump() : "<missing>"));
    }
    return diffs;
}

}  // namespace inpaint
