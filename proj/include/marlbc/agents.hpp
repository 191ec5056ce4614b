#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "marlbc/economy.hpp"
#include "marlbc/nn.hpp"
#include "marlbc/rng.hpp"

namespace marlbc {

enum class Algorithm { Ddpg, Td3, Sac };

const char* to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& s);

struct AgentConfig {
    Algorithm algorithm = Algorithm::Sac;
    double gamma = 0.95;
    int batch_size = 256;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    double tau = 0.005;
    // TD3
    int policy_delay = 2;
    double target_policy_noise = 0.2;
    double target_noise_clip = 0.5;
    // Number of critics: 1 for DDPG, 2 for TD3/SAC.
    int n_critics = 2;
    // DDPG/TD3 Gaussian exploration noise, network space.
    double exploration_noise = 0.1;
    // SAC
    std::optional<double> target_entropy;  // defaults to -action_dim
    double initial_entropy_coef = 1.0;
    double log_std_min = -20.0;
    double log_std_max = 2.0;

    std::vector<int> hidden{64, 64};
    nn::Activation activation = nn::Activation::Tanh;
    std::size_t buffer_capacity = 200000;
    std::size_t learning_starts = 100;
    /// Gradient updates per environment step (one step = one transition per household).
    int gradient_steps = 1;

    /// Per-algorithm defaults (learning rates, critic count, policy delay).
    static AgentConfig defaults_for(Algorithm a);
    void validate() const;
};

/// A minibatch with samples as columns.
struct Batch {
    nn::Matrix obs;
    nn::Matrix actions;  // network space, in [-1, 1]
    nn::Vector rewards;
    nn::Matrix next_obs;
    std::vector<std::uint8_t> truncated;
    std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
};

/// Fixed-capacity ring buffer of transitions. Actions are stored in network
/// space (before the affine map onto the action box).
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim);

    void push(std::span<const double> obs, std::span<const double> action, double reward,
              std::span<const double> next_obs, bool truncated);
    /// min(batch_size, size()) distinct stored indices, uniformly.
    Batch sample(std::size_t batch_size, Rng& rng) const;
    Batch gather(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    std::uint64_t inserted() const { return inserted_; }

private:
    std::size_t capacity_;
    int obs_dim_;
    int action_dim_;
    std::vector<double> obs_;
    std::vector<double> actions_;
    std::vector<double> rewards_;
    std::vector<double> next_obs_;
    std::vector<std::uint8_t> truncated_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;
    std::uint64_t inserted_ = 0;
};

struct UpdateLosses {
    double critic_loss = 0.0;
    std::optional<double> actor_loss;
    std::optional<double> entropy_coef;
    std::optional<double> entropy_loss;
    double mean_target = 0.0;
};

/// Maps a network-space action in [-1, 1] onto [floor, ceil].
double squash_to_box(double u, double floor, double ceil);

/// Log-density of u = tanh(x), x ~ N(mean, exp(log_std)^2), per dimension summed.
/// `pre_tanh` is x; uses the stable form of log(1 - tanh(x)^2).
double squashed_gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                                  std::span<const double> pre_tanh);

/// One actor, critics and targets shared by every household, plus the
/// replay buffer all households write into.
class SharedPolicy {
public:
    SharedPolicy(int obs_dim, int action_dim, AgentConfig config, std::uint64_t seed, double action_floor = 0.01,
                 double action_ceil = 0.99);

    /// Network-space actions for a batch of observations (obs_dim x batch).
    nn::Matrix act_network(const nn::Matrix& obs, bool explore, Rng& rng) const;
    /// Box actions for one observation per household.
    std::vector<HouseholdAction> act(const std::vector<Observation>& obs, bool explore, Rng& rng) const;
    HouseholdAction act(const Observation& obs, bool explore, Rng& rng) const;
    HouseholdAction to_household_action(const nn::Vector& network_action) const;

    UpdateLosses update(const Batch& batch);
    UpdateLosses update_ddpg(const Batch& batch);
    UpdateLosses update_td3(const Batch& batch);
    UpdateLosses update_sac(const Batch& batch);

    /// Critic regression targets for a batch, as used by the current algorithm.
    /// Continuation is never zeroed: horizon ends are truncations.
    nn::Vector td_targets(const Batch& batch);

    /// Gradient of -mean Q(s, mu(s)) with respect to the actor parameters,
    /// through the first critic (DDPG/TD3 actor objective).
    nn::ParamSet deterministic_actor_gradient(const Batch& batch, double* mean_q = nullptr) const;

    /// Samples from the buffer and applies one update. Throws ProtocolError
    /// before `learning_starts` transitions have been stored.
    UpdateLosses train_step();

    const AgentConfig& config() const { return config_; }
    int obs_dim() const { return obs_dim_; }
    int action_dim() const { return action_dim_; }
    double action_floor() const { return floor_; }
    double action_ceil() const { return ceil_; }
    long updates() const { return updates_; }
    double entropy_coef() const;
    double log_entropy_coef() const { return log_alpha_; }

    ReplayBuffer& buffer() { return buffer_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    Rng& rng() { return rng_; }

    nn::Mlp& actor() { return actor_; }
    const nn::Mlp& actor() const { return actor_; }
    nn::Mlp& actor_target() { return actor_target_; }
    const nn::Mlp& actor_target() const { return actor_target_; }
    nn::Mlp& critic(int i) { return critics_[static_cast<std::size_t>(i)]; }
    const nn::Mlp& critic(int i) const { return critics_[static_cast<std::size_t>(i)]; }
    nn::Mlp& critic_target(int i) { return critic_targets_[static_cast<std::size_t>(i)]; }
    const nn::Mlp& critic_target(int i) const { return critic_targets_[static_cast<std::size_t>(i)]; }
    int n_critics() const { return static_cast<int>(critics_.size()); }

    /// Writes one JSON file per network plus manifest.json into `dir`.
    void save(const std::string& dir, const std::string& config_hash) const;
    /// Restores networks and entropy coefficient from a checkpoint directory.
    static SharedPolicy load(const std::string& dir, AgentConfig config);

private:
    struct ActorSample {
        nn::Matrix u;         // tanh(x), action_dim x batch
        nn::Matrix noise;     // eps
        nn::Matrix log_std;   // clamped
        nn::Matrix clamped;   // 1 where log_std was clamped
        nn::Vector log_prob;  // per sample
    };
    ActorSample sample_sac(const nn::Matrix& actor_out, Rng& rng) const;
    nn::Matrix deterministic_action(const nn::Matrix& actor_out) const;
    double fit_critic(int i, const Batch& batch, const nn::Vector& targets);
    double actor_step_deterministic(const Batch& batch);
    void check_finite(const UpdateLosses& l) const;

    AgentConfig config_;
    int obs_dim_;
    int action_dim_;
    double floor_;
    double ceil_;
    nn::Mlp actor_;
    nn::Mlp actor_target_;
    std::vector<nn::Mlp> critics_;
    std::vector<nn::Mlp> critic_targets_;
    nn::AdamState actor_opt_;
    std::vector<nn::AdamState> critic_opts_;
    double log_alpha_ = 0.0;
    double alpha_m_ = 0.0;
    double alpha_v_ = 0.0;
    long alpha_step_ = 0;
    ReplayBuffer buffer_;
    Rng rng_;
    long updates_ = 0;
};

struct TrainSchedule {
    long per_agent_steps = 100000;
    long eval_interval = 2000;
    int eval_episodes = 5;
};

struct LearningCurve {
    std::vector<long> steps;  // per-agent steps at each checkpoint
    std::vector<double> mean_reward;
    std::vector<double> std_reward;
};

/// One row of evaluation diagnostics per (period, household).
struct EvalRecord {
    int episode;
    int t;
    int agent;
    double k, l, c_hat, c, a, w, r, K, L, Y, A, reward;
    bool employed;
};

struct EvalReport {
    double mean_reward = 0.0;  // per step, averaged over households and periods
    double std_reward = 0.0;   // across episodes of the per-episode mean
    int episodes = 0;
    std::vector<double> episode_mean_reward;
    std::vector<EvalRecord> records;
};

struct EvalOptions {
    int episodes = 5;
    std::uint64_t seed = 0;
    bool record = true;
};

/// Runs deterministic-policy episodes of the full horizon. Each episode uses
/// an environment seed derived from (seed, episode) only.
EvalReport evaluate(const SharedPolicy& policy, const EconomyParams& params, const ShockSpec& shocks,
                    const ObservationMask& mask, const EvalOptions& options);

/// Anything that maps per-household observations to box actions; lets
/// evaluation run synthetic policies.
using PolicyFn = std::function<std::vector<HouseholdAction>(const std::vector<Observation>&, const Economy&)>;
EvalReport evaluate_fn(const PolicyFn& policy, const EconomyParams& params, const ShockSpec& shocks,
                       const ObservationMask& mask, const EvalOptions& options);

struct TrainResult {
    SharedPolicy policy;
    LearningCurve curve;
    EvalReport initial_eval;  // untrained-policy checkpoint
    long total_steps = 0;     // n * per-agent steps
    long gradient_updates = 0;
};

using ProgressFn = std::function<void(long step, double mean_reward, double std_reward)>;

/// Shared-parameter off-policy training. The untrained policy is evaluated
/// once (initial_eval) and the curve has one point per eval_interval. Each
/// environment step pushes one transition per household and is followed by `gradient_steps` updates once
/// the buffer is warm. Episodes are truncated and restarted every horizon.
TrainResult train(const EconomyParams& params, const ShockSpec& shocks, const ObservationMask& mask,
                  const AgentConfig& config, const TrainSchedule& schedule, std::uint64_t seed,
                  const ProgressFn& progress = {});

}  // namespace marlbc
