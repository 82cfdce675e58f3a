#include "invercl/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace invercl {

namespace {

void write_doubles(std::ostream& out, const std::vector<double>& v) {
    out << v.size();
    out.precision(17);
    for (double x : v) out << ' ' << x;
    out << '\n';
}

std::vector<double> read_doubles(std::istream& in) {
    std::size_t n = 0;
    in >> n;
    std::vector<double> v(n);
    for (double& x : v) in >> x;
    if (!in) throw std::runtime_error("checkpoint: truncated numeric block");
    return v;
}

const char* act_name(Activation a) {
    switch (a) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh_fn: return "tanh";
    }
    return "none";
}

Activation act_from(const std::string& s) {
    if (s == "none") return Activation::none;
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "tanh") return Activation::tanh_fn;
    throw std::runtime_error("checkpoint: unknown activation " + s);
}

}  // namespace

void save_network(const Network& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint file " + path);
    f << kCheckpointMagic << '\n';
    f << net.layers.size() << '\n';
    for (const auto& layer : net.layers) {
        f << "dense " << layer.out_dim() << ' ' << layer.in_dim() << ' '
          << act_name(layer.activation) << '\n';
        write_doubles(f, layer.weight.data);
        write_doubles(f, layer.bias.data);
    }
    f << (net.head.mode == HeadMode::linear ? "linear" : "anchor") << ' '
      << net.head.num_classes() << ' ' << net.head.feat_dim() << ' ' << net.head.tau << '\n';
    if (net.head.mode == HeadMode::linear) {
        write_doubles(f, net.head.weight.data);
        write_doubles(f, net.head.bias.data);
    } else {
        write_doubles(f, net.head.anchors.data);
    }
    f << net.stats.size() << '\n';
    for (const auto& s : net.stats) {
        f << s.sample_count << '\n';
        write_doubles(f, s.mean);
        write_doubles(f, s.std);
    }
}

Network load_network(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint file " + path);
    std::string magic;
    f >> magic;
    if (magic != kCheckpointMagic)
        throw std::runtime_error("checkpoint: bad magic header '" + magic + "'");
    std::size_t num_layers = 0;
    f >> num_layers;
    Network net;
    for (std::size_t l = 0; l < num_layers; ++l) {
        std::string kind, act;
        std::size_t out = 0, in = 0;
        f >> kind >> out >> in >> act;
        if (kind != "dense") throw std::runtime_error("checkpoint: unknown layer kind " + kind);
        LayerUnit unit;
        unit.activation = act_from(act);
        unit.weight = Tensor({out, in}, read_doubles(f));
        unit.bias = Tensor({out}, read_doubles(f));
        net.layers.push_back(std::move(unit));
    }
    std::string mode;
    std::size_t classes = 0, feat = 0;
    double tau = 0.0;
    f >> mode >> classes >> feat >> tau;
    net.head.tau = tau;
    if (mode == "linear") {
        net.head.mode = HeadMode::linear;
        net.head.weight = Tensor({classes, feat}, read_doubles(f));
        net.head.bias = Tensor({classes}, read_doubles(f));
    } else if (mode == "anchor") {
        net.head.mode = HeadMode::anchor;
        net.head.anchors = Tensor({classes, feat}, read_doubles(f));
    } else {
        throw std::runtime_error("checkpoint: unknown head mode " + mode);
    }
    std::size_t num_stats = 0;
    f >> num_stats;
    net.stats.resize(num_stats);
    for (auto& s : net.stats) {
        f >> s.sample_count;
        s.mean = read_doubles(f);
        s.std = read_doubles(f);
    }
    if (!f) throw std::runtime_error("checkpoint: truncated file " + path);
    return net;
}

}  // namespace invercl
