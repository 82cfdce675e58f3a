#include "invercl/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace invercl {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (...) {
        throw std::invalid_argument("config: bad integer for " + key + ": " + v);
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad number for " + key + ": " + v);
    }
}

std::vector<std::size_t> parse_dims(const std::string& v, const std::string& key) {
    std::vector<std::size_t> dims;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) dims.push_back(parse_size(trim(item), key));
    if (dims.empty()) throw std::invalid_argument("config: empty list for " + key);
    return dims;
}

Activation parse_activation(const std::string& v) {
    if (v == "none") return Activation::none;
    if (v == "relu") return Activation::relu;
    if (v == "leaky_relu") return Activation::leaky_relu;
    if (v == "tanh") return Activation::tanh_fn;
    throw std::invalid_argument("config: unknown activation: " + v);
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh_fn: return "tanh";
    }
    return "none";
}

void apply(ExperimentConfig& c, const std::string& key, const std::string& value) {
    if (key == "dataset.classes") c.classes = parse_size(value, key);
    else if (key == "dataset.dim") c.dim = parse_size(value, key);
    else if (key == "dataset.per_class") c.per_class = parse_size(value, key);
    else if (key == "dataset.spread") c.spread = parse_double(value, key);
    else if (key == "network.layer_dims") c.layer_dims = parse_dims(value, key);
    else if (key == "network.activation") c.activation = parse_activation(value);
    else if (key == "network.head") {
        if (value == "linear") c.head_mode = HeadMode::linear;
        else if (value == "anchor") c.head_mode = HeadMode::anchor;
        else throw std::invalid_argument("config: unknown head mode: " + value);
        c.train.mode = c.head_mode;
    } else if (key == "network.tau") c.head_tau = parse_double(value, key);
    else if (key == "cl.tasks") c.num_tasks = parse_size(value, key);
    else if (key == "cl.epochs") c.train.epochs = parse_size(value, key);
    else if (key == "cl.batch_size") c.train.batch_size = parse_size(value, key);
    else if (key == "cl.lr") c.train.lr = parse_double(value, key);
    else if (key == "cl.lambda_hkd") c.train.loss_weights.lambda_hkd = parse_double(value, key);
    else if (key == "cl.lambda_rkd") c.train.loss_weights.lambda_rkd = parse_double(value, key);
    else if (key == "cl.lambda_ft") c.train.loss_weights.lambda_ft = parse_double(value, key);
    else if (key == "cl.lambda_tkd") c.train.loss_weights.lambda_tkd = parse_double(value, key);
    else if (key == "cl.lambda_tft") c.train.loss_weights.lambda_tft = parse_double(value, key);
    else if (key == "cl.scale_by_class_ratio")
        c.train.loss_weights.scale_by_class_ratio = parse_bool(value, key);
    else if (key == "replay.enabled") c.replay.enabled = parse_bool(value, key);
    else if (key == "replay.use_cfs") c.replay.use_cfs = parse_bool(value, key);
    else if (key == "replay.growth_a") c.replay.growth_a = parse_size(value, key);
    else if (key == "replay.growth_b") c.replay.growth_b = parse_size(value, key);
    else if (key == "replay.per_class_quota") c.replay.per_class_quota = parse_size(value, key);
    else if (key == "replay.entry_layer") c.replay.entry_layer = parse_size(value, key);
    else if (key == "inversion.steps_pmi") c.replay.pmi_steps = parse_size(value, key);
    else if (key == "inversion.steps_full") c.replay.full_steps = parse_size(value, key);
    else if (key == "inversion.lr_pmi") c.replay.pmi_lr = parse_double(value, key);
    else if (key == "inversion.lr_full") c.replay.full_lr = parse_double(value, key);
    else if (key == "inversion.alpha") c.alpha = parse_double(value, key);
    else if (key == "inversion.beta") c.beta = parse_double(value, key);
    else if (key == "inversion.gamma") c.gamma = parse_double(value, key);
    else if (key == "cfs.init_size") c.replay.cfs_init_size = parse_size(value, key);
    else if (key == "cfs.steps") c.replay.cfs_steps = parse_size(value, key);
    else if (key == "cfs.candidates") c.replay.cfs_candidates = parse_size(value, key);
    else if (key == "cfs.keep_ratio") c.replay.cfs_keep_ratio = parse_double(value, key);
    else if (key == "cfs.temperature") c.replay.cfs_temperature = parse_double(value, key);
    else if (key == "cfs.hidden") c.replay.contrastive_hidden = parse_size(value, key);
    else if (key == "cfs.epochs") c.replay.contrastive_epochs = parse_size(value, key);
    else if (key == "cfs.lr") c.replay.contrastive_lr = parse_double(value, key);
    else if (key == "run.seed") c.seed = parse_size(value, key);
    else if (key == "run.out_dir") c.out_dir = value;
    else if (key == "projection.last_task") c.project_last_task = parse_bool(value, key);
    else if (key == "projection.alpha") c.projection_alpha = parse_double(value, key);
    else throw std::invalid_argument("config: unknown key: " + key);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    bool hkd_set = false;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value: " + line);
        const std::string key = trim(line.substr(0, eq));
        if (key == "cl.lambda_hkd") hkd_set = true;
        apply(c, key, trim(line.substr(eq + 1)));
    }
    if (c.head_mode == HeadMode::anchor && !hkd_set)
        c.train.loss_weights.lambda_hkd = 0.1;
    if (c.layer_dims.size() < 2)
        throw std::invalid_argument("config: network.layer_dims needs at least 2 entries");
    if (c.layer_dims.front() != c.dim)
        throw std::invalid_argument("config: first layer dim must equal dataset.dim");
    if (c.num_tasks == 0 || c.classes % c.num_tasks != 0)
        throw std::invalid_argument("config: dataset.classes must be divisible by cl.tasks");
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_text(const ExperimentConfig& c) {
    std::ostringstream o;
    o.precision(17);
    o << "dataset.classes=" << c.classes << '\n';
    o << "dataset.dim=" << c.dim << '\n';
    o << "dataset.per_class=" << c.per_class << '\n';
    o << "dataset.spread=" << c.spread << '\n';
    o << "network.layer_dims=";
    for (std::size_t i = 0; i < c.layer_dims.size(); ++i)
        o << (i ? "," : "") << c.layer_dims[i];
    o << '\n';
    o << "network.activation=" << activation_name(c.activation) << '\n';
    o << "network.head=" << (c.head_mode == HeadMode::linear ? "linear" : "anchor") << '\n';
    o << "network.tau=" << c.head_tau << '\n';
    o << "cl.tasks=" << c.num_tasks << '\n';
    o << "cl.epochs=" << c.train.epochs << '\n';
    o << "cl.batch_size=" << c.train.batch_size << '\n';
    o << "cl.lr=" << c.train.lr << '\n';
    o << "cl.lambda_hkd=" << c.train.loss_weights.lambda_hkd << '\n';
    o << "cl.lambda_rkd=" << c.train.loss_weights.lambda_rkd << '\n';
    o << "cl.lambda_ft=" << c.train.loss_weights.lambda_ft << '\n';
    o << "cl.lambda_tkd=" << c.train.loss_weights.lambda_tkd << '\n';
    o << "cl.lambda_tft=" << c.train.loss_weights.lambda_tft << '\n';
    o << "cl.scale_by_class_ratio=" << (c.train.loss_weights.scale_by_class_ratio ? "true" : "false")
      << '\n';
    o << "replay.enabled=" << (c.replay.enabled ? "true" : "false") << '\n';
    o << "replay.use_cfs=" << (c.replay.use_cfs ? "true" : "false") << '\n';
    o << "replay.growth_a=" << c.replay.growth_a << '\n';
    o << "replay.growth_b=" << c.replay.growth_b << '\n';
    o << "replay.per_class_quota=" << c.replay.per_class_quota << '\n';
    o << "replay.entry_layer=" << c.replay.entry_layer << '\n';
    o << "inversion.steps_pmi=" << c.replay.pmi_steps << '\n';
    o << "inversion.steps_full=" << c.replay.full_steps << '\n';
    o << "inversion.lr_pmi=" << c.replay.pmi_lr << '\n';
    o << "inversion.lr_full=" << c.replay.full_lr << '\n';
    o << "inversion.alpha=" << c.alpha << '\n';
    o << "inversion.beta=" << c.beta << '\n';
    o << "inversion.gamma=" << c.gamma << '\n';
    o << "cfs.init_size=" << c.replay.cfs_init_size << '\n';
    o << "cfs.steps=" << c.replay.cfs_steps << '\n';
    o << "cfs.candidates=" << c.replay.cfs_candidates << '\n';
    o << "cfs.keep_ratio=" << c.replay.cfs_keep_ratio << '\n';
    o << "cfs.temperature=" << c.replay.cfs_temperature << '\n';
    o << "cfs.hidden=" << c.replay.contrastive_hidden << '\n';
    o << "cfs.epochs=" << c.replay.contrastive_epochs << '\n';
    o << "cfs.lr=" << c.replay.contrastive_lr << '\n';
    o << "run.seed=" << c.seed << '\n';
    o << "run.out_dir=" << c.out_dir << '\n';
    o << "projection.last_task=" << (c.project_last_task ? "true" : "false") << '\n';
    o << "projection.alpha=" << c.projection_alpha << '\n';
    return o.str();
}

}  // namespace invercl
