#include "marlbc/agents.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <nlohmann/json.hpp>

#include "marlbc/error.hpp"

namespace marlbc {

using nn::Matrix;
using nn::Vector;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double softplus(double y) { return y > 0.0 ? y + std::log1p(std::exp(-y)) : std::log1p(std::exp(y)); }

// log(1 - tanh(x)^2) without cancellation.
double log_one_minus_tanh_sq(double x) { return 2.0 * (std::numbers::ln2 - x - softplus(-2.0 * x)); }

Matrix stack(const Matrix& top, const Matrix& bottom) {
    Matrix out(top.rows() + bottom.rows(), top.cols());
    out.topRows(top.rows()) = top;
    out.bottomRows(bottom.rows()) = bottom;
    return out;
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
    }
    return m;
}

Matrix to_matrix(const std::vector<Observation>& obs, int dim) {
    Matrix m(dim, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (obs[i].size() != static_cast<std::size_t>(dim)) throw ConfigError("observation has wrong dimension");
        for (int d = 0; d < dim; ++d) m(d, static_cast<Eigen::Index>(i)) = obs[i][static_cast<std::size_t>(d)];
    }
    return m;
}

}  // namespace

const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::Ddpg: return "ddpg";
        case Algorithm::Td3: return "td3";
        case Algorithm::Sac: return "sac";
    }
    return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
    if (s == "ddpg") return Algorithm::Ddpg;
    if (s == "td3") return Algorithm::Td3;
    if (s == "sac") return Algorithm::Sac;
    throw ConfigError("unknown algorithm '" + s + "' (expected ddpg, td3 or sac)");
}

AgentConfig AgentConfig::defaults_for(Algorithm a) {
    AgentConfig c;
    c.algorithm = a;
    switch (a) {
        case Algorithm::Ddpg:
            c.lr_actor = c.lr_critic = 1e-3;
            c.n_critics = 1;
            c.policy_delay = 1;
            c.target_policy_noise = 0.0;
            break;
        case Algorithm::Td3:
            c.lr_actor = c.lr_critic = 1e-3;
            c.n_critics = 2;
            break;
        case Algorithm::Sac:
            c.lr_actor = c.lr_critic = 3e-4;
            c.n_critics = 2;
            break;
    }
    return c;
}

void AgentConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("agent: " + m); };
    if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
    if (batch_size <= 0) fail("batch_size must be positive");
    if (!(lr_actor > 0.0 && lr_critic > 0.0)) fail("learning rates must be positive");
    if (!(tau >= 0.0 && tau <= 1.0)) fail("tau must lie in [0, 1]");
    if (policy_delay <= 0) fail("policy_delay must be positive");
    if (target_policy_noise < 0.0 || target_noise_clip < 0.0) fail("target noise settings must be >= 0");
    if (n_critics < 1 || n_critics > 2) fail("n_critics must be 1 or 2");
    if (exploration_noise < 0.0) fail("exploration_noise must be >= 0");
    if (!(initial_entropy_coef > 0.0)) fail("initial_entropy_coef must be positive");
    if (hidden.empty()) fail("at least one hidden layer required");
    for (int h : hidden) {
        if (h <= 0) fail("hidden sizes must be positive");
    }
    if (buffer_capacity == 0) fail("buffer_capacity must be positive");
    if (gradient_steps < 0) fail("gradient_steps must be >= 0");
}

// ---------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t capacity, int obs_dim, int action_dim)
    : capacity_(capacity), obs_dim_(obs_dim), action_dim_(action_dim) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    obs_.resize(capacity * static_cast<std::size_t>(obs_dim));
    next_obs_.resize(capacity * static_cast<std::size_t>(obs_dim));
    actions_.resize(capacity * static_cast<std::size_t>(action_dim));
    rewards_.resize(capacity);
    truncated_.resize(capacity);
}

void ReplayBuffer::push(std::span<const double> obs, std::span<const double> action, double reward,
                        std::span<const double> next_obs, bool truncated) {
    const auto od = static_cast<std::size_t>(obs_dim_);
    const auto ad = static_cast<std::size_t>(action_dim_);
    if (obs.size() != od || next_obs.size() != od || action.size() != ad) {
        throw ConfigError("replay push: transition has wrong dimensions");
    }
    std::copy(obs.begin(), obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(head_ * od));
    std::copy(next_obs.begin(), next_obs.end(), next_obs_.begin() + static_cast<std::ptrdiff_t>(head_ * od));
    std::copy(action.begin(), action.end(), actions_.begin() + static_cast<std::ptrdiff_t>(head_ * ad));
    rewards_[head_] = reward;
    truncated_[head_] = truncated ? 1 : 0;
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    ++inserted_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
    if (size_ == 0) throw ProtocolError("replay sample: buffer is empty");
    const std::size_t k = std::min(batch_size, size_);
    // Floyd's algorithm: k distinct indices from [0, size).
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(k * 2);
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = size_ - k; j < size_; ++j) {
        const std::size_t t = static_cast<std::size_t>(rng.index(j + 1));
        if (chosen.insert(t).second) {
            out.push_back(t);
        } else {
            chosen.insert(j);
            out.push_back(j);
        }
    }
    return out;
}

Batch ReplayBuffer::gather(std::span<const std::size_t> indices) const {
    const auto B = static_cast<Eigen::Index>(indices.size());
    Batch b;
    b.obs.resize(obs_dim_, B);
    b.next_obs.resize(obs_dim_, B);
    b.actions.resize(action_dim_, B);
    b.rewards.resize(B);
    b.truncated.resize(indices.size());
    for (Eigen::Index c = 0; c < B; ++c) {
        const std::size_t idx = indices[static_cast<std::size_t>(c)];
        if (idx >= size_) throw ConfigError("replay gather: index out of range");
        for (int d = 0; d < obs_dim_; ++d) {
            b.obs(d, c) = obs_[idx * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(d)];
            b.next_obs(d, c) = next_obs_[idx * static_cast<std::size_t>(obs_dim_) + static_cast<std::size_t>(d)];
        }
        for (int d = 0; d < action_dim_; ++d) {
            b.actions(d, c) = actions_[idx * static_cast<std::size_t>(action_dim_) + static_cast<std::size_t>(d)];
        }
        b.rewards(c) = rewards_[idx];
        b.truncated[static_cast<std::size_t>(c)] = truncated_[idx];
    }
    return b;
}

Batch ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
    const auto idx = sample_indices(batch_size, rng);
    return gather(idx);
}

// ---------------------------------------------------------------- policy helpers

double squash_to_box(double u, double floor, double ceil) {
    const double clipped = std::clamp(u, -1.0, 1.0);
    return floor + 0.5 * (clipped + 1.0) * (ceil - floor);
}

double squashed_gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                                  std::span<const double> pre_tanh) {
    double lp = 0.0;
    for (std::size_t d = 0; d < mean.size(); ++d) {
        const double sd = std::exp(log_std[d]);
        const double eps = (pre_tanh[d] - mean[d]) / sd;
        lp += -0.5 * eps * eps - log_std[d] - kHalfLog2Pi - log_one_minus_tanh_sq(pre_tanh[d]);
    }
    return lp;
}

SharedPolicy::SharedPolicy(int obs_dim, int action_dim, AgentConfig config, std::uint64_t seed, double action_floor,
                           double action_ceil)
    : config_(std::move(config)),
      obs_dim_(obs_dim),
      action_dim_(action_dim),
      floor_(action_floor),
      ceil_(action_ceil),
      buffer_(config_.buffer_capacity, obs_dim, action_dim),
      rng_(derive_seed(seed, 99)) {
    config_.validate();
    if (obs_dim <= 0 || action_dim <= 0) throw ConfigError("policy dimensions must be positive");
    if (config_.algorithm == Algorithm::Ddpg) config_.n_critics = 1;

    const bool sac = config_.algorithm == Algorithm::Sac;
    std::vector<int> actor_sizes{obs_dim};
    actor_sizes.insert(actor_sizes.end(), config_.hidden.begin(), config_.hidden.end());
    actor_sizes.push_back(sac ? 2 * action_dim : action_dim);
    actor_ = nn::Mlp::init(actor_sizes, config_.activation, derive_seed(seed, 0), 3e-3);
    actor_target_ = actor_;
    actor_opt_ = nn::AdamState::for_network(actor_, config_.lr_actor);

    std::vector<int> critic_sizes{obs_dim + action_dim};
    critic_sizes.insert(critic_sizes.end(), config_.hidden.begin(), config_.hidden.end());
    critic_sizes.push_back(1);
    for (int i = 0; i < config_.n_critics; ++i) {
        critics_.push_back(nn::Mlp::init(critic_sizes, config_.activation, derive_seed(seed, 10 + static_cast<std::uint64_t>(i))));
        critic_targets_.push_back(critics_.back());
        critic_opts_.push_back(nn::AdamState::for_network(critics_.back(), config_.lr_critic));
    }
    log_alpha_ = std::log(config_.initial_entropy_coef);
}

double SharedPolicy::entropy_coef() const { return std::exp(log_alpha_); }

Matrix SharedPolicy::deterministic_action(const Matrix& actor_out) const {
    return actor_out.topRows(action_dim_).array().tanh().matrix();
}

SharedPolicy::ActorSample SharedPolicy::sample_sac(const Matrix& out, Rng& rng) const {
    ActorSample s;
    const Eigen::Index d = action_dim_;
    const Eigen::Index B = out.cols();
    const Matrix mean = out.topRows(d);
    const Matrix raw_log_std = out.bottomRows(d);
    s.log_std = raw_log_std.cwiseMax(config_.log_std_min).cwiseMin(config_.log_std_max);
    s.clamped = ((raw_log_std.array() < config_.log_std_min) || (raw_log_std.array() > config_.log_std_max))
                    .cast<double>()
                    .matrix();
    s.noise = gaussian(d, B, rng);
    const Matrix x = mean.array() + s.log_std.array().exp() * s.noise.array();
    s.u = x.array().tanh().matrix();
    s.log_prob.resize(B);
    for (Eigen::Index c = 0; c < B; ++c) {
        double lp = 0.0;
        for (Eigen::Index r = 0; r < d; ++r) {
            lp += -0.5 * s.noise(r, c) * s.noise(r, c) - s.log_std(r, c) - kHalfLog2Pi -
                  log_one_minus_tanh_sq(x(r, c));
        }
        s.log_prob(c) = lp;
    }
    return s;
}

Matrix SharedPolicy::act_network(const Matrix& obs, bool explore, Rng& rng) const {
    const Matrix out = actor_.forward(obs);
    if (config_.algorithm == Algorithm::Sac) {
        if (!explore) return deterministic_action(out);
        return sample_sac(out, rng).u;
    }
    Matrix u = deterministic_action(out);
    if (explore && config_.exploration_noise > 0.0) {
        u += config_.exploration_noise * gaussian(u.rows(), u.cols(), rng);
        u = u.cwiseMax(-1.0).cwiseMin(1.0);
    }
    return u;
}

HouseholdAction SharedPolicy::to_household_action(const Vector& u) const {
    HouseholdAction a;
    a.consumption_fraction = squash_to_box(u(0), floor_, ceil_);
    a.labour = action_dim_ > 1 ? squash_to_box(u(1), floor_, ceil_) : 0.5 * (floor_ + ceil_);
    return a;
}

std::vector<HouseholdAction> SharedPolicy::act(const std::vector<Observation>& obs, bool explore, Rng& rng) const {
    const Matrix u = act_network(to_matrix(obs, obs_dim_), explore, rng);
    std::vector<HouseholdAction> out(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) out[i] = to_household_action(u.col(static_cast<Eigen::Index>(i)));
    return out;
}

HouseholdAction SharedPolicy::act(const Observation& obs, bool explore, Rng& rng) const {
    return act(std::vector<Observation>{obs}, explore, rng).front();
}

// ---------------------------------------------------------------- updates

Vector SharedPolicy::td_targets(const Batch& batch) {
    const double gamma = config_.gamma;
    Vector next_q;
    switch (config_.algorithm) {
        case Algorithm::Ddpg: {
            const Matrix u_next = deterministic_action(actor_target_.forward(batch.next_obs));
            next_q = critic_targets_[0].forward(stack(batch.next_obs, u_next)).row(0).transpose();
            break;
        }
        case Algorithm::Td3: {
            Matrix u_next = deterministic_action(actor_target_.forward(batch.next_obs));
            if (config_.target_policy_noise > 0.0) {
                Matrix noise = config_.target_policy_noise * gaussian(u_next.rows(), u_next.cols(), rng_);
                noise = noise.cwiseMax(-config_.target_noise_clip).cwiseMin(config_.target_noise_clip);
                u_next += noise;
            }
            u_next = u_next.cwiseMax(-1.0).cwiseMin(1.0);
            const Matrix in = stack(batch.next_obs, u_next);
            next_q = critic_targets_[0].forward(in).row(0).transpose();
            for (std::size_t j = 1; j < critic_targets_.size(); ++j) {
                next_q = next_q.cwiseMin(critic_targets_[j].forward(in).row(0).transpose());
            }
            break;
        }
        case Algorithm::Sac: {
            const ActorSample s = sample_sac(actor_.forward(batch.next_obs), rng_);
            const Matrix in = stack(batch.next_obs, s.u);
            next_q = critic_targets_[0].forward(in).row(0).transpose();
            for (std::size_t j = 1; j < critic_targets_.size(); ++j) {
                next_q = next_q.cwiseMin(critic_targets_[j].forward(in).row(0).transpose());
            }
            next_q -= entropy_coef() * s.log_prob;
            break;
        }
    }
    // Horizon ends are truncations of an infinite-horizon problem, so the
    // continuation value is kept for every transition.
    return batch.rewards + gamma * next_q;
}

double SharedPolicy::fit_critic(int i, const Batch& batch, const Vector& targets) {
    auto& critic = critics_[static_cast<std::size_t>(i)];
    nn::ForwardCache cache;
    const Matrix q = critic.forward(stack(batch.obs, batch.actions), &cache);
    const Eigen::Index B = q.cols();
    const Matrix diff = q - targets.transpose();
    const double loss = diff.squaredNorm() / static_cast<double>(B);
    const Matrix upstream = (2.0 / static_cast<double>(B)) * diff;
    const nn::Gradients g = critic.backward(cache, upstream);
    nn::adam_step(critic, g.params, critic_opts_[static_cast<std::size_t>(i)]);
    return loss;
}

nn::ParamSet SharedPolicy::deterministic_actor_gradient(const Batch& batch, double* mean_q) const {
    nn::ForwardCache actor_cache;
    const Matrix out = actor_.forward(batch.obs, &actor_cache);
    const Matrix u = deterministic_action(out);
    nn::ForwardCache critic_cache;
    const Matrix q = critics_[0].forward(stack(batch.obs, u), &critic_cache);
    const Eigen::Index B = q.cols();
    // Maximise mean Q: loss = -mean(Q).
    const Matrix upstream = Matrix::Constant(1, B, -1.0 / static_cast<double>(B));
    const nn::Gradients cg = critics_[0].backward(critic_cache, upstream);
    const Matrix d_u = cg.input.bottomRows(action_dim_);
    const Matrix d_out = (d_u.array() * (1.0 - u.array().square())).matrix();
    if (mean_q) *mean_q = q.mean();
    return actor_.backward(actor_cache, d_out).params;
}

double SharedPolicy::actor_step_deterministic(const Batch& batch) {
    double mean_q = 0.0;
    const nn::ParamSet g = deterministic_actor_gradient(batch, &mean_q);
    nn::adam_step(actor_, g, actor_opt_);
    return -mean_q;
}

void SharedPolicy::check_finite(const UpdateLosses& l) const {
    bool ok = std::isfinite(l.critic_loss) && std::isfinite(l.mean_target);
    if (l.actor_loss) ok = ok && std::isfinite(*l.actor_loss);
    if (l.entropy_coef) ok = ok && std::isfinite(*l.entropy_coef);
    if (l.entropy_loss) ok = ok && std::isfinite(*l.entropy_loss);
    if (ok) return;
    std::ostringstream msg;
    msg << "non-finite loss at update " << updates_ << " (" << to_string(config_.algorithm)
        << "): critic_loss=" << l.critic_loss << " mean_target=" << l.mean_target
        << " actor_loss=" << (l.actor_loss ? *l.actor_loss : 0.0) << " log_alpha=" << log_alpha_
        << " |actor|^2=" << actor_.params().squared_norm() << " |critic0|^2=" << critics_[0].params().squared_norm();
    throw TrainingDivergedError(msg.str());
}

UpdateLosses SharedPolicy::update_ddpg(const Batch& batch) {
    UpdateLosses l;
    const Vector y = td_targets(batch);
    l.mean_target = y.mean();
    l.critic_loss = fit_critic(0, batch, y);
    l.actor_loss = actor_step_deterministic(batch);
    nn::polyak_update(critic_targets_[0], critics_[0], config_.tau);
    nn::polyak_update(actor_target_, actor_, config_.tau);
    ++updates_;
    check_finite(l);
    return l;
}

UpdateLosses SharedPolicy::update_td3(const Batch& batch) {
    UpdateLosses l;
    const Vector y = td_targets(batch);
    l.mean_target = y.mean();
    double total = 0.0;
    for (int i = 0; i < n_critics(); ++i) total += fit_critic(i, batch, y);
    l.critic_loss = total / n_critics();
    ++updates_;
    if (updates_ % config_.policy_delay == 0) {
        l.actor_loss = actor_step_deterministic(batch);
        for (int i = 0; i < n_critics(); ++i) {
            nn::polyak_update(critic_targets_[static_cast<std::size_t>(i)], critics_[static_cast<std::size_t>(i)],
                              config_.tau);
        }
        nn::polyak_update(actor_target_, actor_, config_.tau);
    }
    check_finite(l);
    return l;
}

UpdateLosses SharedPolicy::update_sac(const Batch& batch) {
    UpdateLosses l;
    const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
    const double inv_b = 1.0 / static_cast<double>(B);
    const double alpha = entropy_coef();

    nn::ForwardCache actor_cache;
    const Matrix out = actor_.forward(batch.obs, &actor_cache);
    const ActorSample s = sample_sac(out, rng_);

    // Temperature: minimise alpha * (-log pi - target_entropy), parameterised by log alpha.
    const double target_entropy = config_.target_entropy.value_or(-static_cast<double>(action_dim_));
    const double excess = (-s.log_prob.array() - target_entropy).mean();
    l.entropy_loss = alpha * excess;
    const double g_alpha = alpha * excess;
    ++alpha_step_;
    alpha_m_ = 0.9 * alpha_m_ + 0.1 * g_alpha;
    alpha_v_ = 0.999 * alpha_v_ + 0.001 * g_alpha * g_alpha;
    const double m_hat = alpha_m_ / (1.0 - std::pow(0.9, static_cast<double>(alpha_step_)));
    const double v_hat = alpha_v_ / (1.0 - std::pow(0.999, static_cast<double>(alpha_step_)));

    // Critics use the pre-update coefficient.
    const Vector y = td_targets(batch);
    log_alpha_ -= config_.lr_actor * m_hat / (std::sqrt(v_hat) + 1e-8);
    l.entropy_coef = alpha;
    l.mean_target = y.mean();
    double total = 0.0;
    for (int i = 0; i < n_critics(); ++i) total += fit_critic(i, batch, y);
    l.critic_loss = total / n_critics();

    // Actor: minimise mean(alpha log pi - min_j Q_j(s, u)) through the reparameterised sample.
    const Matrix in = stack(batch.obs, s.u);
    std::vector<nn::ForwardCache> caches(critics_.size());
    std::vector<Matrix> qs(critics_.size());
    for (std::size_t j = 0; j < critics_.size(); ++j) qs[j] = critics_[j].forward(in, &caches[j]);
    Matrix q_min = qs[0];
    std::vector<int> argmin(static_cast<std::size_t>(B), 0);
    for (std::size_t j = 1; j < critics_.size(); ++j) {
        for (Eigen::Index c = 0; c < B; ++c) {
            if (qs[j](0, c) < q_min(0, c)) {
                q_min(0, c) = qs[j](0, c);
                argmin[static_cast<std::size_t>(c)] = static_cast<int>(j);
            }
        }
    }
    Matrix dq_du = Matrix::Zero(action_dim_, B);
    for (std::size_t j = 0; j < critics_.size(); ++j) {
        Matrix mask = Matrix::Zero(1, B);
        bool any = false;
        for (Eigen::Index c = 0; c < B; ++c) {
            if (argmin[static_cast<std::size_t>(c)] == static_cast<int>(j)) {
                mask(0, c) = 1.0;
                any = true;
            }
        }
        if (!any) continue;
        dq_du += critics_[j].backward(caches[j], mask).input.bottomRows(action_dim_);
    }
    const Matrix one_minus_u2 = 1.0 - s.u.array().square();
    const Matrix d_x = (alpha * 2.0 * s.u.array() - dq_du.array() * one_minus_u2.array()).matrix() * inv_b;
    const Matrix std_dev = s.log_std.array().exp();
    Matrix d_log_std =
        ((Matrix::Constant(action_dim_, B, -alpha * inv_b).array() + d_x.array() * std_dev.array() * s.noise.array()) *
         (1.0 - s.clamped.array()))
            .matrix();
    const nn::Gradients ag = actor_.backward(actor_cache, stack(d_x, d_log_std));
    nn::adam_step(actor_, ag.params, actor_opt_);
    l.actor_loss = (alpha * s.log_prob.transpose() - q_min).mean();

    for (std::size_t j = 0; j < critics_.size(); ++j) nn::polyak_update(critic_targets_[j], critics_[j], config_.tau);
    ++updates_;
    check_finite(l);
    return l;
}

UpdateLosses SharedPolicy::update(const Batch& batch) {
    switch (config_.algorithm) {
        case Algorithm::Ddpg: return update_ddpg(batch);
        case Algorithm::Td3: return update_td3(batch);
        case Algorithm::Sac: return update_sac(batch);
    }
    throw ConfigError("unknown algorithm");
}

UpdateLosses SharedPolicy::train_step() {
    if (buffer_.size() < std::max<std::size_t>(config_.learning_starts, 1)) {
        throw ProtocolError("train_step: replay buffer below learning_starts");
    }
    return update(buffer_.sample(static_cast<std::size_t>(config_.batch_size), rng_));
}

// ---------------------------------------------------------------- checkpoints

void SharedPolicy::save(const std::string& dir, const std::string& config_hash) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    actor_.save((fs::path(dir) / "actor.json").string());
    actor_target_.save((fs::path(dir) / "actor_target.json").string());
    for (std::size_t j = 0; j < critics_.size(); ++j) {
        critics_[j].save((fs::path(dir) / ("critic_" + std::to_string(j) + ".json")).string());
        critic_targets_[j].save((fs::path(dir) / ("critic_target_" + std::to_string(j) + ".json")).string());
    }
    std::ostringstream rng_state;
    rng_state << rng_.engine();
    const std::string state = rng_state.str();
    nlohmann::json manifest{
        {"algorithm", to_string(config_.algorithm)},
        {"config_hash", config_hash},
        {"rng_state_digest", std::to_string(std::hash<std::string>{}(state))},
        {"rng_state", state},
        {"gradient_updates", updates_},
        {"transitions_seen", buffer_.inserted()},
        {"obs_dim", obs_dim_},
        {"action_dim", action_dim_},
        {"action_floor", floor_},
        {"action_ceil", ceil_},
        {"log_entropy_coef", log_alpha_},
        {"n_critics", critics_.size()},
    };
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << manifest.dump(2) << "\n";
}

SharedPolicy SharedPolicy::load(const std::string& dir, AgentConfig config) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw ConfigError("checkpoint manifest missing in " + dir);
    nlohmann::json manifest;
    try {
        in >> manifest;
        config.algorithm = algorithm_from_string(manifest.at("algorithm").get<std::string>());
        config.n_critics = manifest.at("n_critics").get<int>();
        SharedPolicy p(manifest.at("obs_dim").get<int>(), manifest.at("action_dim").get<int>(), config, 0,
                       manifest.at("action_floor").get<double>(), manifest.at("action_ceil").get<double>());
        auto load_into = [&](nn::Mlp& net, const std::string& name) {
            nn::Mlp loaded = nn::Mlp::load((fs::path(dir) / name).string());
            if (!loaded.same_architecture(net)) throw ConfigError("checkpoint " + name + ": architecture mismatch");
            net = std::move(loaded);
        };
        load_into(p.actor_, "actor.json");
        load_into(p.actor_target_, "actor_target.json");
        for (std::size_t j = 0; j < p.critics_.size(); ++j) {
            load_into(p.critics_[j], "critic_" + std::to_string(j) + ".json");
            load_into(p.critic_targets_[j], "critic_target_" + std::to_string(j) + ".json");
        }
        p.log_alpha_ = manifest.at("log_entropy_coef").get<double>();
        p.updates_ = manifest.at("gradient_updates").get<long>();
        std::istringstream rs(manifest.at("rng_state").get<std::string>());
        rs >> p.rng_.engine();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("checkpoint manifest malformed: ") + e.what());
    }
}

// ---------------------------------------------------------------- evaluation

EvalReport evaluate_fn(const PolicyFn& policy, const EconomyParams& params, const ShockSpec& shocks,
                       const ObservationMask& mask, const EvalOptions& options) {
    if (options.episodes <= 0) throw ConfigError("evaluate: episodes must be positive");
    Economy env(params, shocks, mask);
    EvalReport report;
    report.episodes = options.episodes;
    double total = 0.0;
    long count = 0;
    for (int e = 0; e < options.episodes; ++e) {
        auto obs = env.reset(derive_seed(options.seed, static_cast<std::uint64_t>(e)));
        double ep_total = 0.0;
        long ep_count = 0;
        while (!env.done()) {
            const auto actions = policy(obs, env);
            const StepOutcome out = env.step(actions);
            for (int i = 0; i < params.n; ++i) {
                const auto ui = static_cast<std::size_t>(i);
                ep_total += out.rewards[ui];
                ++ep_count;
                if (options.record) {
                    report.records.push_back({e, out.t, i, out.capital[ui], out.labour[ui],
                                              out.consumption_fraction[ui], out.consumption[ui], out.wealth[ui],
                                              out.wage[ui], out.interest[ui], out.aggregate_capital,
                                              out.aggregate_labour, out.output, out.technology, out.rewards[ui],
                                              out.employed[ui] != 0});
                }
            }
            obs = out.observations;
        }
        report.episode_mean_reward.push_back(ep_total / static_cast<double>(ep_count));
        total += ep_total;
        count += ep_count;
    }
    report.mean_reward = total / static_cast<double>(count);
    double var = 0.0;
    for (double m : report.episode_mean_reward) {
        const double mean_of_means = report.mean_reward;
        var += (m - mean_of_means) * (m - mean_of_means);
    }
    report.std_reward = std::sqrt(var / static_cast<double>(report.episode_mean_reward.size()));
    return report;
}

EvalReport evaluate(const SharedPolicy& policy, const EconomyParams& params, const ShockSpec& shocks,
                    const ObservationMask& mask, const EvalOptions& options) {
    if (mask.size() != policy.obs_dim()) throw ConfigError("evaluate: observation mask does not match policy");
    Rng unused(0);
    PolicyFn fn = [&](const std::vector<Observation>& obs, const Economy&) { return policy.act(obs, false, unused); };
    return evaluate_fn(fn, params, shocks, mask, options);
}

// ---------------------------------------------------------------- training

TrainResult train(const EconomyParams& params, const ShockSpec& shocks, const ObservationMask& mask,
                  const AgentConfig& config, const TrainSchedule& schedule, std::uint64_t seed,
                  const ProgressFn& progress) {
    if (schedule.per_agent_steps <= 0) throw ConfigError("train: per_agent_steps must be positive");
    if (schedule.eval_interval <= 0) throw ConfigError("train: eval_interval must be positive");
    AgentConfig cfg = config;
    cfg.gamma = params.beta;
#ifdef __GLIBC__
    // Keep large Eigen temporaries on the heap instead of mmap/munmap per update.
    mallopt(M_MMAP_THRESHOLD, 1 << 26);
    mallopt(M_TRIM_THRESHOLD, 1 << 27);
#endif

    Economy env(params, shocks, mask);
    SharedPolicy policy(mask.size(), params.action_dim(), cfg, derive_seed(seed, 1), params.action_floor,
                        params.action_ceil);
    Rng explore_rng(derive_seed(seed, 2));
    const std::uint64_t eval_seed = derive_seed(seed, 3);
    const std::uint64_t episode_seed = derive_seed(seed, 4);

    EvalOptions eval_opts{schedule.eval_episodes, eval_seed, false};
    EvalOptions initial_opts{schedule.eval_episodes, eval_seed, true};
    EvalReport initial = evaluate(policy, params, shocks, mask, initial_opts);

    LearningCurve curve;
    if (progress) progress(0, initial.mean_reward, initial.std_reward);
    std::uint64_t episode = 0;
    auto obs = env.reset(derive_seed(episode_seed, episode));
    const int n = params.n;
    const int od = mask.size();
    const int ad = params.action_dim();
    Matrix obs_m(od, n);
    for (long step = 1; step <= schedule.per_agent_steps; ++step) {
        for (int i = 0; i < n; ++i) {
            for (int d = 0; d < od; ++d) obs_m(d, i) = obs[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
        }
        Matrix u;
        if (policy.buffer().size() < cfg.learning_starts) {
            u.resize(ad, n);
            for (int i = 0; i < n; ++i) {
                for (int d = 0; d < ad; ++d) u(d, i) = explore_rng.uniform(-1.0, 1.0);
            }
        } else {
            u = policy.act_network(obs_m, true, explore_rng);
        }
        std::vector<HouseholdAction> actions(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) actions[static_cast<std::size_t>(i)] = policy.to_household_action(u.col(i));
        const StepOutcome out = env.step(actions);
        for (int i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            const Vector ui_action = u.col(i);
            policy.buffer().push(obs[ui], std::span<const double>(ui_action.data(), static_cast<std::size_t>(ad)),
                                 out.rewards[ui], out.observations[ui], out.truncated);
        }
        if (policy.buffer().size() >= std::max<std::size_t>(cfg.learning_starts, 1)) {
            for (int g = 0; g < cfg.gradient_steps; ++g) policy.train_step();
        }
        if (out.truncated) {
            ++episode;
            obs = env.reset(derive_seed(episode_seed, episode));
        } else {
            obs = out.observations;
        }
        if (step % schedule.eval_interval == 0) {
            const EvalReport r = evaluate(policy, params, shocks, mask, eval_opts);
            curve.steps.push_back(step);
            curve.mean_reward.push_back(r.mean_reward);
            curve.std_reward.push_back(r.std_reward);
            if (progress) progress(step, r.mean_reward, r.std_reward);
        }
    }
    const long updates = policy.updates();
    return TrainResult{std::move(policy), std::move(curve), std::move(initial),
                       static_cast<long>(n) * schedule.per_agent_steps, updates};
}

}  // namespace marlbc
