#include "cobra/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "cobra/serialize.hpp"

namespace cobra {

void ModelConfig::validate() const {
    if (grid_h <= 0 || grid_w <= 0 || channels <= 0)
        throw ConfigError("grid dimensions must be positive");
    if (patch <= 0 || grid_h % patch != 0 || grid_w % patch != 0)
        throw ConfigError("patch size must divide grid dimensions");
    if (d_model <= 0 || d_model % heads != 0)
        throw ConfigError("d_model must be positive and divisible by heads");
    if (top_k < 1 || top_k > token_count())
        throw ConfigError("top_k must be in [1, patch token count]");
    if (sigma <= 0.0f) throw ConfigError("sigma must be positive");
    if (l_clip <= 0 || classes <= 1) throw ConfigError("l_clip/classes out of range");
}

namespace {

struct KeyBinding {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
    std::istringstream ss(v);
    T out{};
    ss >> out;
    if (ss.fail() || !ss.eof())
        throw ConfigError("invalid value for key '" + key + "': " + v);
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("invalid boolean for key '" + key + "': " + v);
}

#define NUM_KEY(name, field, type)                                                   \
    {name, KeyBinding{                                                               \
               [](ExperimentConfig& c, const std::string& v) {                       \
                   c.field = parse_num<type>(name, v);                               \
               },                                                                    \
               [](const ExperimentConfig& c) {                                       \
                   std::ostringstream ss;                                            \
                   ss << c.field;                                                    \
                   return ss.str();                                                  \
               }}}

#define FLT_KEY(name, field)                                                         \
    {name, KeyBinding{                                                               \
               [](ExperimentConfig& c, const std::string& v) {                       \
                   c.field = parse_num<float>(name, v);                              \
               },                                                                    \
               [](const ExperimentConfig& c) { return io::format_g6(c.field); }}}

// Ordered key table; resolved_text() emits in this order.
const std::vector<std::pair<std::string, KeyBinding>>& key_table() {
    static const std::vector<std::pair<std::string, KeyBinding>> table = {
        NUM_KEY("subjects", data.subjects, int),
        NUM_KEY("classes", data.classes, int),
        NUM_KEY("grid_h", data.grid_h, int),
        NUM_KEY("grid_w", data.grid_w, int),
        NUM_KEY("channels", data.channels, int),
        NUM_KEY("train_per_subject", data.train_per_subject, int),
        NUM_KEY("test_stimuli", data.test_stimuli, int),
        NUM_KEY("voxel_min", data.voxel_min, int),
        NUM_KEY("voxel_max", data.voxel_max, int),
        NUM_KEY("signature_dim", data.signature_dim, int),
        NUM_KEY("max_labels", data.max_labels, int),
        FLT_KEY("noise_scale", data.noise_scale),
        FLT_KEY("clip_noise", data.clip_noise),
        NUM_KEY("patch", model.patch, int),
        NUM_KEY("d_model", model.d_model, int),
        NUM_KEY("sc_depth", model.sc_depth, int),
        NUM_KEY("enc_depth", model.enc_depth, int),
        NUM_KEY("dec_depth", model.dec_depth, int),
        NUM_KEY("heads", model.heads, int),
        NUM_KEY("mlp_ratio", model.mlp_ratio, int),
        NUM_KEY("l_clip", model.l_clip, int),
        NUM_KEY("top_k", model.top_k, int),
        FLT_KEY("sigma", model.sigma),
        FLT_KEY("margin", model.margin),
        NUM_KEY("epochs", train.epochs, int),
        NUM_KEY("batch_size", train.batch_size, int),
        FLT_KEY("lr", train.lr),
        FLT_KEY("weight_decay", train.weight_decay),
        FLT_KEY("lambda_c", train.lambda_c),
        FLT_KEY("lambda_s", train.lambda_s),
        FLT_KEY("lambda_sc", train.lambda_sc),
        FLT_KEY("lambda_reg", train.lambda_reg),
        NUM_KEY("seed", train.seed, uint64_t),
        NUM_KEY("sc_trainable_steps", train.sc_trainable_steps, int),
        NUM_KEY("buffer_capacity", train.buffer_capacity, int),
        {"rehearsal_updates_old_modules",
         KeyBinding{[](ExperimentConfig& c, const std::string& v) {
                        c.train.rehearsal_updates_old_modules =
                            parse_bool("rehearsal_updates_old_modules", v);
                    },
                    [](const ExperimentConfig& c) {
                        return std::string(c.train.rehearsal_updates_old_modules ? "true"
                                                                                : "false");
                    }}},
        NUM_KEY("n_way", train.n_way, int),
        {"plan", KeyBinding{[](ExperimentConfig& c, const std::string& v) { c.plan = v; },
                            [](const ExperimentConfig& c) { return c.plan; }}},
    };
    return table;
}

#undef NUM_KEY
#undef FLT_KEY

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void sync_shared_fields(ExperimentConfig& c) {
    // Dataset geometry and the model's input geometry are one set of keys.
    c.model.grid_h = c.data.grid_h;
    c.model.grid_w = c.data.grid_w;
    c.model.channels = c.data.channels;
    c.model.classes = c.data.classes;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
    ExperimentConfig cfg;
    std::map<std::string, bool> seen;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool found = false;
        for (const auto& [name, binding] : key_table()) {
            if (name == key) {
                binding.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("unknown config key '" + key + "'");
        seen[key] = true;
    }
    if (!seen.count("subjects"))
        throw ConfigError("missing required config key 'subjects'");
    sync_shared_fields(cfg);
    cfg.model.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_text(ss.str());
}

std::string ExperimentConfig::resolved_text() const {
    std::ostringstream ss;
    for (const auto& [name, binding] : key_table())
        ss << name << " = " << binding.get(*this) << "\n";
    return ss.str();
}

ExperimentConfig paper_scale_preset() {
    ExperimentConfig c;
    c.data.subjects = 8;
    c.data.classes = 80;
    c.data.grid_h = 224;
    c.data.grid_w = 224;
    c.model.patch = 16;
    c.model.d_model = 768;
    c.model.sc_depth = 12;
    c.model.enc_depth = 4;
    c.model.dec_depth = 4;
    c.model.heads = 12;
    c.model.mlp_ratio = 4;
    c.model.top_k = 30;
    c.train.epochs = 300;
    c.train.lr = 2.5e-5f;
    c.train.batch_size = 32;
    sync_shared_fields(c);
    return c;
}

}  // namespace cobra
