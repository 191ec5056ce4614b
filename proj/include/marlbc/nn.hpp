#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

namespace marlbc::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Hidden-layer nonlinearity. The output layer is always linear.
enum class Activation { Tanh, Relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

/// Parameter-shaped container used for gradients and optimizer moments.
struct ParamSet {
    std::vector<Layer> layers;

    void set_zero();
    ParamSet& operator+=(const ParamSet& other);
    double squared_norm() const;
    bool all_finite() const;
};

class Mlp;

/// Activations saved by forward() for the matching backward().
struct ForwardCache {
    std::vector<Matrix> inputs;  // input to each layer (in x batch)
    std::vector<Matrix> pre;     // pre-activation of each layer (out x batch)
    std::uint64_t net_id = 0;
    std::uint64_t version = 0;
};

struct Gradients {
    ParamSet params;
    Matrix input;  // d objective / d x, in x batch
};

/// Dense feed-forward network with columns as samples.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::vector<int> layer_sizes, Activation activation);
    Mlp(const Mlp& other);
    Mlp& operator=(const Mlp& other);
    Mlp(Mlp&&) noexcept = default;
    Mlp& operator=(Mlp&&) noexcept = default;

    /// Fan-in scaled uniform init, bound 1/sqrt(fan_in). When
    /// `output_bound` > 0 the last layer uses that bound instead.
    static Mlp init(std::vector<int> layer_sizes, Activation activation, std::uint64_t seed,
                    double output_bound = -1.0);

    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return sizes_; }
    Activation activation() const { return activation_; }
    std::size_t num_layers() const { return params_.layers.size(); }
    std::size_t num_parameters() const;

    const ParamSet& params() const { return params_; }
    /// Mutable access; invalidates outstanding forward caches.
    ParamSet& mutable_params();
    /// Zero-shaped parameter set matching this network.
    ParamSet zeros_like() const;

    Matrix forward(const Matrix& x, ForwardCache* cache = nullptr) const;
    Vector forward(const Vector& x) const;

    /// Reverse-mode pass. `upstream` is d objective / d output (out x batch).
    /// Throws ProtocolError if the cache came from another network or the
    /// parameters changed since it was produced.
    Gradients backward(const ForwardCache& cache, const Matrix& upstream) const;

    bool same_architecture(const Mlp& other) const;

    nlohmann::json to_json() const;
    static Mlp from_json(const nlohmann::json& doc);
    void save(const std::string& path) const;
    static Mlp load(const std::string& path);

private:
    void touch() { ++version_; }

    std::vector<int> sizes_;
    Activation activation_ = Activation::Relu;
    ParamSet params_;
    std::uint64_t id_ = 0;
    std::uint64_t version_ = 0;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    ParamSet m;
    ParamSet v;

    static AdamState for_network(const Mlp& net, double lr);
};

/// Bias-corrected Adam step on every parameter of `net`.
void adam_step(Mlp& net, const ParamSet& grads, AdamState& opt);

/// target <- (1 - tau) target + tau source.
void polyak_update(Mlp& target, const Mlp& source, double tau);

}  // namespace marlbc::nn
