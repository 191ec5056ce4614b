#include "marlbc/nn.hpp"

#include <atomic>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "marlbc/error.hpp"
#include "marlbc/rng.hpp"

namespace marlbc::nn {

namespace {

std::uint64_t next_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

// Eigen's double tanh is scalar; the exp form vectorises and saturates cleanly.
Matrix fast_tanh(const Matrix& x) { return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix(); }

void apply_activation(Activation a, Matrix& z) {
    if (a == Activation::Relu) {
        z = z.cwiseMax(0.0);
    } else {
        z = fast_tanh(z);
    }
}

// Multiplies `grad` in place by the activation derivative at `pre`.
void scale_by_derivative(Activation a, const Matrix& pre, Matrix& grad) {
    if (a == Activation::Relu) {
        grad.array() *= (pre.array() > 0.0).cast<double>();
    } else {
        grad.array() *= 1.0 - fast_tanh(pre).array().square();
    }
}

}  // namespace

const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation '" + s + "'");
}

void ParamSet::set_zero() {
    for (auto& l : layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].weight += other.layers[i].weight;
        layers[i].bias += other.layers[i].bias;
    }
    return *this;
}

double ParamSet::squared_norm() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
    return s;
}

bool ParamSet::all_finite() const {
    for (const auto& l : layers) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
}

Mlp::Mlp(std::vector<int> layer_sizes, Activation activation)
    : sizes_(std::move(layer_sizes)), activation_(activation), id_(next_id()) {
    if (sizes_.size() < 2) throw ConfigError("mlp needs at least an input and an output size");
    for (int s : sizes_) {
        if (s <= 0) throw ConfigError("mlp layer sizes must be positive");
    }
    params_ = zeros_like();
}

Mlp::Mlp(const Mlp& other)
    : sizes_(other.sizes_), activation_(other.activation_), params_(other.params_), id_(next_id()) {}

Mlp& Mlp::operator=(const Mlp& other) {
    if (this != &other) {
        sizes_ = other.sizes_;
        activation_ = other.activation_;
        params_ = other.params_;
        id_ = next_id();
        version_ = 0;
    }
    return *this;
}

Mlp Mlp::init(std::vector<int> layer_sizes, Activation activation, std::uint64_t seed, double output_bound) {
    Mlp net(std::move(layer_sizes), activation);
    Rng rng(seed);
    const std::size_t n_layers = net.params_.layers.size();
    for (std::size_t li = 0; li < n_layers; ++li) {
        auto& layer = net.params_.layers[li];
        double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
        if (li + 1 == n_layers && output_bound > 0.0) bound = output_bound;
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
            for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = rng.uniform(-bound, bound);
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = rng.uniform(-bound, bound);
    }
    return net;
}

std::size_t Mlp::num_parameters() const {
    std::size_t count = 0;
    for (const auto& l : params_.layers) count += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return count;
}

ParamSet& Mlp::mutable_params() {
    touch();
    return params_;
}

ParamSet Mlp::zeros_like() const {
    ParamSet p;
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
        p.layers.push_back({Matrix::Zero(sizes_[i + 1], sizes_[i]), Vector::Zero(sizes_[i + 1])});
    }
    return p;
}

Matrix Mlp::forward(const Matrix& x, ForwardCache* cache) const {
    if (x.rows() != input_size()) throw ConfigError("mlp forward: input has wrong dimension");
    const std::size_t n_layers = params_.layers.size();
    if (cache) {
        cache->inputs.resize(n_layers);
        cache->pre.resize(n_layers);
        cache->net_id = id_;
        cache->version = version_;
    }
    Matrix h = x;
    for (std::size_t li = 0; li < n_layers; ++li) {
        const auto& layer = params_.layers[li];
        Matrix z(layer.weight.rows(), h.cols());
        z.noalias() = layer.weight * h;
        z.colwise() += layer.bias;
        if (cache) {
            cache->inputs[li] = std::move(h);
            cache->pre[li] = z;
        }
        if (li + 1 < n_layers) apply_activation(activation_, z);
        h = std::move(z);
    }
    return h;
}

Vector Mlp::forward(const Vector& x) const {
    Matrix in = x;
    return forward(in, nullptr).col(0);
}

Gradients Mlp::backward(const ForwardCache& cache, const Matrix& upstream) const {
    if (cache.net_id != id_ || cache.version != version_) {
        throw ProtocolError("mlp backward: stale forward cache");
    }
    const std::size_t n_layers = params_.layers.size();
    if (cache.pre.size() != n_layers || upstream.rows() != output_size() ||
        upstream.cols() != cache.pre.back().cols()) {
        throw ConfigError("mlp backward: upstream gradient has wrong shape");
    }
    Gradients g;
    g.params.layers.resize(n_layers);
    Matrix delta = upstream;
    for (std::size_t li = n_layers; li-- > 0;) {
        if (li + 1 < n_layers) scale_by_derivative(activation_, cache.pre[li], delta);
        auto& out = g.params.layers[li];
        out.weight.noalias() = delta * cache.inputs[li].transpose();
        out.bias = delta.rowwise().sum();
        Matrix next(params_.layers[li].weight.cols(), delta.cols());
        next.noalias() = params_.layers[li].weight.transpose() * delta;
        delta = std::move(next);
    }
    g.input = std::move(delta);
    return g;
}

bool Mlp::same_architecture(const Mlp& other) const {
    return sizes_ == other.sizes_ && activation_ == other.activation_;
}

nlohmann::json Mlp::to_json() const {
    nlohmann::json doc;
    doc["architecture"] = sizes_;
    doc["activation"] = to_string(activation_);
    doc["output_activation"] = "linear";
    auto layers = nlohmann::json::array();
    for (const auto& l : params_.layers) {
        auto w = nlohmann::json::array();
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(l.weight.cols()));
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weight(r, c);
            w.push_back(row);
        }
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        layers.push_back({{"weight", w}, {"bias", b}});
    }
    doc["layers"] = layers;
    return doc;
}

Mlp Mlp::from_json(const nlohmann::json& doc) {
    try {
        auto sizes = doc.at("architecture").get<std::vector<int>>();
        Mlp net(sizes, activation_from_string(doc.at("activation").get<std::string>()));
        const auto& layers = doc.at("layers");
        if (layers.size() != net.num_layers()) throw ConfigError("checkpoint: layer count does not match architecture");
        auto& params = net.mutable_params();
        for (std::size_t li = 0; li < layers.size(); ++li) {
            auto& dst = params.layers[li];
            const auto& w = layers[li].at("weight");
            const auto& b = layers[li].at("bias");
            if (w.size() != static_cast<std::size_t>(dst.weight.rows()) ||
                b.size() != static_cast<std::size_t>(dst.bias.size())) {
                throw ConfigError("checkpoint: layer " + std::to_string(li) + " shape mismatch");
            }
            for (std::size_t r = 0; r < w.size(); ++r) {
                if (w[r].size() != static_cast<std::size_t>(dst.weight.cols())) {
                    throw ConfigError("checkpoint: layer " + std::to_string(li) + " shape mismatch");
                }
                for (std::size_t c = 0; c < w[r].size(); ++c) {
                    dst.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[r][c].get<double>();
                }
            }
            for (std::size_t r = 0; r < b.size(); ++r) dst.bias(static_cast<Eigen::Index>(r)) = b[r].get<double>();
        }
        if (!net.params().all_finite()) throw ConfigError("checkpoint: non-finite parameter");
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint: malformed document: ") + e.what());
    }
}

void Mlp::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    out << to_json().dump() << "\n";
}

Mlp Mlp::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read checkpoint " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint " + path + ": " + e.what());
    }
    return from_json(doc);
}

AdamState AdamState::for_network(const Mlp& net, double lr) {
    AdamState s;
    s.lr = lr;
    s.m = net.zeros_like();
    s.v = net.zeros_like();
    return s;
}

void adam_step(Mlp& net, const ParamSet& grads, AdamState& opt) {
    if (grads.layers.size() != net.num_layers() || opt.m.layers.size() != net.num_layers()) {
        throw ConfigError("adam_step: shape mismatch");
    }
    opt.step += 1;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
        param.array() -= opt.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps);
    };
    auto& params = net.mutable_params();
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        update(params.layers[li].weight, grads.layers[li].weight, opt.m.layers[li].weight, opt.v.layers[li].weight);
        update(params.layers[li].bias, grads.layers[li].bias, opt.m.layers[li].bias, opt.v.layers[li].bias);
    }
}

void polyak_update(Mlp& target, const Mlp& source, double tau) {
    if (!target.same_architecture(source)) throw ConfigError("polyak_update: architecture mismatch");
    auto& dst = target.mutable_params();
    const auto& src = source.params();
    for (std::size_t li = 0; li < dst.layers.size(); ++li) {
        dst.layers[li].weight = (1.0 - tau) * dst.layers[li].weight + tau * src.layers[li].weight;
        dst.layers[li].bias = (1.0 - tau) * dst.layers[li].bias + tau * src.layers[li].bias;
    }
}

}  // namespace marlbc::nn
