#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "marlbc/agents.hpp"
#include "marlbc/config.hpp"
#include "marlbc/error.hpp"

using namespace marlbc;
using nn::Matrix;
using nn::Vector;
using doctest::Approx;

namespace {

AgentConfig small(Algorithm a) {
    AgentConfig c = AgentConfig::defaults_for(a);
    c.hidden = {8, 8};
    c.batch_size = 16;
    return c;
}

Batch random_batch(int obs_dim, int action_dim, int size, Rng& rng) {
    Batch b;
    b.obs = Matrix::Random(obs_dim, size);
    b.actions = Matrix::Random(action_dim, size);
    b.next_obs = Matrix::Random(obs_dim, size);
    b.rewards = Vector(size);
    for (int i = 0; i < size; ++i) b.rewards(i) = rng.normal();
    b.truncated.assign(static_cast<std::size_t>(size), 0);
    return b;
}

void zero(nn::Mlp& net) {
    for (auto& l : net.mutable_params().layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
}

}  // namespace

TEST_CASE("algorithm names") {
    CHECK(algorithm_from_string("td3") == Algorithm::Td3);
    CHECK(std::string(to_string(Algorithm::Sac)) == "sac");
    CHECK_THROWS_AS(algorithm_from_string("ppo"), ConfigError);
}

TEST_CASE("per-algorithm defaults") {
    CHECK(AgentConfig::defaults_for(Algorithm::Ddpg).lr_actor == 1e-3);
    CHECK(AgentConfig::defaults_for(Algorithm::Ddpg).n_critics == 1);
    CHECK(AgentConfig::defaults_for(Algorithm::Td3).lr_critic == 1e-3);
    CHECK(AgentConfig::defaults_for(Algorithm::Td3).n_critics == 2);
    CHECK(AgentConfig::defaults_for(Algorithm::Sac).lr_actor == 3e-4);
    const AgentConfig c = AgentConfig::defaults_for(Algorithm::Sac);
    CHECK(c.batch_size == 256);
    CHECK(c.tau == 0.005);
}

TEST_CASE("replay buffer is a ring of fixed capacity") {
    ReplayBuffer b(3, 1, 1);
    for (int i = 0; i < 5; ++i) {
        const double o = i;
        b.push(std::span(&o, 1), std::span(&o, 1), o, std::span(&o, 1), false);
    }
    CHECK(b.size() == 3);
    CHECK(b.inserted() == 5);
    const std::vector<std::size_t> all{0, 1, 2};
    const Batch g = b.gather(all);
    std::multiset<double> rewards(g.rewards.data(), g.rewards.data() + 3);
    CHECK(rewards == std::multiset<double>{2, 3, 4});
    Rng rng(1);
    CHECK(b.sample(10, rng).size() == 3);
    ReplayBuffer empty(3, 1, 1);
    CHECK_THROWS_AS(empty.sample(1, rng), ProtocolError);
}

TEST_CASE("replay sampling is uniform and without replacement") {
    ReplayBuffer b(50, 1, 1);
    for (int i = 0; i < 50; ++i) {
        const double o = i;
        b.push(std::span(&o, 1), std::span(&o, 1), o, std::span(&o, 1), false);
    }
    Rng rng(2);
    std::vector<double> counts(50, 0.0);
    const int draws = 20000;
    for (int k = 0; k < draws; ++k) {
        const auto idx = b.sample_indices(10, rng);
        CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 10);
        for (auto i : idx) counts[i] += 1.0;
    }
    const double expected = draws * 10.0 / 50.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 90.0);  // 49 dof, far tail
}

TEST_CASE("squash map") {
    CHECK(squash_to_box(0.0, 0.01, 0.99) == Approx(0.5).epsilon(1e-15));
    CHECK(squash_to_box(-1.0, 0.01, 0.99) == 0.01);
    CHECK(squash_to_box(1.0, 0.01, 0.99) == Approx(0.99).epsilon(1e-15));
    CHECK(squash_to_box(7.0, 0.01, 0.99) == Approx(0.99).epsilon(1e-15));
}

TEST_CASE("zero actor acts at the box midpoint") {
    for (Algorithm a : {Algorithm::Ddpg, Algorithm::Td3, Algorithm::Sac}) {
        SharedPolicy p(2, 2, small(a), 1);
        zero(p.actor());
        Rng rng(0);
        const HouseholdAction h = p.act(Observation{0.3, 1.0}, false, rng);
        CHECK(h.consumption_fraction == Approx(0.5).epsilon(1e-15));
        CHECK(h.labour == Approx(0.5).epsilon(1e-15));
    }
}

TEST_CASE("deterministic acting is repeatable") {
    SharedPolicy p(2, 2, small(Algorithm::Sac), 3);
    Rng rng(0);
    const HouseholdAction a = p.act(Observation{0.7, 1.1}, false, rng);
    const HouseholdAction b = p.act(Observation{0.7, 1.1}, false, rng);
    CHECK(a.consumption_fraction == b.consumption_fraction);
    CHECK(a.labour == b.labour);
}

TEST_CASE("actions stay inside the box for random nets and inputs") {
    Rng rng(4);
    int outside = 0;
    for (int k = 0; k < 1000; ++k) {
        const Algorithm alg = static_cast<Algorithm>(k % 3);
        AgentConfig c = small(alg);
        c.hidden = {4};
        SharedPolicy p(3, 2, c, static_cast<std::uint64_t>(k));
        for (auto& l : p.actor().mutable_params().layers) l.weight *= 1.0 + 50.0 * rng.uniform();
        const Matrix obs = 10.0 * Matrix::Random(3, 100);
        const Matrix u = p.act_network(obs, k % 2 == 0, rng);
        for (int i = 0; i < u.cols(); ++i) {
            const HouseholdAction h = p.to_household_action(u.col(i));
            if (!(h.consumption_fraction >= 0.01 && h.consumption_fraction <= 0.99 && h.labour >= 0.01 && h.labour <= 0.99)) {
                ++outside;
            }
        }
    }
    CHECK(outside == 0);
}

TEST_CASE("with gamma = 0 the critic target is the reward") {
    Rng rng(5);
    for (Algorithm a : {Algorithm::Ddpg, Algorithm::Td3, Algorithm::Sac}) {
        AgentConfig c = small(a);
        c.gamma = 0.0;
        SharedPolicy p(3, 2, c, 1);
        const Batch b = random_batch(3, 2, 16, rng);
        CHECK(p.td_targets(b) == b.rewards);
    }
}

TEST_CASE("targets bootstrap on truncated transitions") {
    Rng rng(6);
    SharedPolicy p(3, 2, small(Algorithm::Ddpg), 1);
    Batch b = random_batch(3, 2, 8, rng);
    const Vector y0 = p.td_targets(b);
    b.truncated.assign(8, 1);
    CHECK(p.td_targets(b) == y0);
}

TEST_CASE("DDPG actor gradient matches finite differences of mean Q") {
    Rng rng(7);
    AgentConfig c = small(Algorithm::Ddpg);
    c.hidden = {5, 4};
    c.activation = nn::Activation::Tanh;
    SharedPolicy p(3, 2, c, 11);
    // Move the actor away from its near-zero initial output layer.
    for (auto& l : p.actor().mutable_params().layers) l.weight.setRandom();
    const Batch b = random_batch(3, 2, 12, rng);
    const nn::ParamSet g = p.deterministic_actor_gradient(b);
    const double h = 1e-6;
    int bad = 0;
    for (std::size_t l = 0; l < p.actor().num_layers(); ++l) {
        for (Eigen::Index i = 0; i < p.actor().params().layers[l].weight.size(); ++i) {
            double qp = 0.0;
            double qm = 0.0;
            p.actor().mutable_params().layers[l].weight.data()[i] += h;
            p.deterministic_actor_gradient(b, &qp);
            p.actor().mutable_params().layers[l].weight.data()[i] -= 2 * h;
            p.deterministic_actor_gradient(b, &qm);
            p.actor().mutable_params().layers[l].weight.data()[i] += h;
            const double numeric = -(qp - qm) / (2 * h);
            const double analytic = g.layers[l].weight.data()[i];
            if (std::abs(analytic - numeric) > 1e-3 * std::max(std::abs(numeric), 1e-6)) ++bad;
        }
    }
    CHECK(bad == 0);
}

TEST_CASE("critic converges to the Bellman fixed point of a single transition") {
    AgentConfig c = small(Algorithm::Ddpg);
    c.gamma = 0.5;
    c.lr_critic = 1e-2;
    c.lr_actor = 1e-12;
    c.tau = 0.05;
    c.batch_size = 1;
    c.learning_starts = 1;
    SharedPolicy p(1, 1, c, 3);
    zero(p.actor());
    zero(p.actor_target());
    const double obs = 0.5;
    const double action = 0.0;  // what the zero actor plays
    p.buffer().push(std::span(&obs, 1), std::span(&action, 1), 1.0, std::span(&obs, 1), false);
    for (int i = 0; i < 4000; ++i) p.train_step();
    Matrix in(2, 1);
    in << obs, action;
    CHECK(p.critic(0).forward(in)(0, 0) == Approx(1.0 / (1.0 - 0.5)).epsilon(0.01));
}

TEST_CASE("identical twin critics give the single-critic target") {
    Rng rng(8);
    AgentConfig td3 = small(Algorithm::Td3);
    td3.target_policy_noise = 0.0;
    SharedPolicy twin(3, 2, td3, 21);
    twin.critic_target(1) = twin.critic_target(0);
    SharedPolicy single(3, 2, small(Algorithm::Ddpg), 21);
    const Batch b = random_batch(3, 2, 16, rng);
    CHECK((twin.td_targets(b) - single.td_targets(b)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("target smoothing noise is clipped") {
    Rng rng(9);
    AgentConfig c = small(Algorithm::Td3);
    c.hidden = {2};
    c.activation = nn::Activation::Relu;
    c.target_policy_noise = 100.0;
    c.target_noise_clip = 0.5;
    c.gamma = 0.9;
    SharedPolicy p(1, 1, c, 4);
    zero(p.actor_target());
    // Q'(s, u) = |u| through relu(u) + relu(-u).
    for (int j = 0; j < 2; ++j) {
        auto& q = p.critic_target(j).mutable_params().layers;
        q[0].weight << 0.0, 1.0, 0.0, -1.0;
        q[0].bias.setZero();
        q[1].weight << 1.0, 1.0;
        q[1].bias.setZero();
    }
    Batch b = random_batch(1, 1, 200, rng);
    b.rewards.setZero();
    const Vector y = p.td_targets(b);
    CHECK(y.maxCoeff() <= 0.9 * 0.5 + 1e-15);
    CHECK(y.maxCoeff() == Approx(0.9 * 0.5));
}

TEST_CASE("TD3 collapses to DDPG with one critic, no smoothing and no delay") {
    AgentConfig ddpg = small(Algorithm::Ddpg);
    AgentConfig td3 = ddpg;
    td3.algorithm = Algorithm::Td3;
    td3.n_critics = 1;
    td3.policy_delay = 1;
    td3.target_policy_noise = 0.0;
    ScenarioConfig s = preset("rbc_partial");
    s.economy.horizon = 50;
    const TrainSchedule sch{300, 100, 1};
    const TrainResult a = train(s.economy, s.shock_spec(), s.mask, ddpg, sch, 5);
    const TrainResult b = train(s.economy, s.shock_spec(), s.mask, td3, sch, 5);
    CHECK(a.curve.mean_reward == b.curve.mean_reward);
    for (std::size_t l = 0; l < a.policy.actor().num_layers(); ++l) {
        CHECK(a.policy.actor().params().layers[l].weight == b.policy.actor().params().layers[l].weight);
        CHECK(a.policy.critic(0).params().layers[l].weight == b.policy.critic(0).params().layers[l].weight);
    }
}

TEST_CASE("squashed Gaussian density integrates to one over the box") {
    Rng rng(10);
    const std::vector<std::pair<double, double>> cases{{0.0, 0.0}, {0.3, -0.5}, {-1.2, 0.4}};
    for (const auto& [mean, log_std] : cases) {
        const int n = 400000;
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double u = rng.uniform(-1.0, 1.0);
            const double x = std::atanh(u);
            sum += std::exp(squashed_gaussian_log_prob(std::span(&mean, 1), std::span(&log_std, 1), std::span(&x, 1)));
        }
        CHECK(2.0 * sum / n == Approx(1.0).epsilon(0.02));
    }
    // Two dimensions: the density factorises.
    const std::vector<double> mean{0.2, -0.1};
    const std::vector<double> log_std{-0.3, 0.1};
    const int n = 400000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const std::vector<double> x{std::atanh(rng.uniform(-1.0, 1.0)), std::atanh(rng.uniform(-1.0, 1.0))};
        sum += std::exp(squashed_gaussian_log_prob(mean, log_std, x));
    }
    CHECK(4.0 * sum / n == Approx(1.0).epsilon(0.02));
}

TEST_CASE("SAC temperature moves against the entropy excess and stays positive") {
    Rng rng(11);
    auto alpha_after = [&](double log_std) {
        AgentConfig c = small(Algorithm::Sac);
        SharedPolicy p(2, 1, c, 2);
        auto& out = p.actor().mutable_params().layers.back();
        out.weight.setZero();
        out.bias << 0.0, log_std;
        const double before = p.entropy_coef();
        p.update_sac(random_batch(2, 1, 64, rng));
        CHECK(p.entropy_coef() > 0.0);
        return p.entropy_coef() - before;
    };
    CHECK(alpha_after(0.0) < 0.0);    // unit-scale policy: entropy above -1
    CHECK(alpha_after(-6.0) > 0.0);   // near-deterministic: log pi large
}

TEST_CASE("train_step before learning_starts is a protocol error") {
    SharedPolicy p(2, 2, small(Algorithm::Sac), 1);
    CHECK_THROWS_AS(p.train_step(), ProtocolError);
}

TEST_CASE("training curve length and determinism") {
    ScenarioConfig s = preset("rbc_partial");
    s.economy.horizon = 60;
    AgentConfig c = small(Algorithm::Sac);
    const TrainSchedule sch{400, 100, 2};
    const TrainResult a = train(s.economy, s.shock_spec(), s.mask, c, sch, 9);
    const TrainResult b = train(s.economy, s.shock_spec(), s.mask, c, sch, 9);
    CHECK(a.curve.steps == std::vector<long>{100, 200, 300, 400});
    CHECK(a.curve.mean_reward == b.curve.mean_reward);
    CHECK(a.total_steps == 400);
    CHECK(a.gradient_updates == 400 - 100 + 1);
    CHECK(a.initial_eval.records.size() == 2u * 60u);
}

TEST_CASE("multi-household step accounting") {
    ScenarioConfig s = preset("rbc_grid");
    s.economy.horizon = 20;
    AgentConfig c = small(Algorithm::Td3);
    const TrainSchedule sch{30, 30, 1};
    const TrainResult r = train(s.economy, s.shock_spec(), s.mask, c, sch, 1);
    CHECK(r.total_steps == 9 * 30);
    CHECK(r.policy.buffer().inserted() == 9u * 30u);
}

TEST_CASE("evaluate with a constant policy matches a hand simulation") {
    ScenarioConfig s = preset("rbc_partial");
    s.ar1.sigma = 0.0;
    s.economy.horizon = 5;
    const HouseholdAction act{0.3, 0.25};
    PolicyFn fn = [&](const std::vector<Observation>& obs, const Economy&) {
        return std::vector<HouseholdAction>(obs.size(), act);
    };
    const EvalReport r = evaluate_fn(fn, s.economy, s.shock_spec(), s.mask, EvalOptions{1, 0, true});
    double k = 1.0;
    double total = 0.0;
    for (int t = 0; t < 5; ++t) {
        const double y = std::pow(k, 0.36) * std::pow(0.25, 0.64);
        const double a = 0.36 * y / k * k + 0.64 * y / 0.25 * 0.25 + 0.975 * k;
        const double c = 0.3 * a;
        const double rew = std::log(c) + 5.0 * std::log(0.75);
        CHECK(r.records[static_cast<std::size_t>(t)].reward == Approx(rew).epsilon(1e-13));
        CHECK(r.records[static_cast<std::size_t>(t)].k == Approx(k).epsilon(1e-13));
        total += rew;
        k = 0.7 * a;
    }
    CHECK(r.mean_reward == Approx(total / 5).epsilon(1e-13));
    CHECK_THROWS_AS(evaluate_fn(fn, s.economy, s.shock_spec(), s.mask, EvalOptions{0, 0, true}), ConfigError);
}

TEST_CASE("evaluation does not depend on how observations are batched") {
    ScenarioConfig s = preset("ks");
    s.economy.horizon = 30;
    SharedPolicy p(s.mask.size(), s.economy.action_dim(), small(Algorithm::Sac), 3);
    Rng unused(0);
    PolicyFn batched = [&](const std::vector<Observation>& obs, const Economy&) { return p.act(obs, false, unused); };
    PolicyFn one_by_one = [&](const std::vector<Observation>& obs, const Economy&) {
        std::vector<HouseholdAction> out;
        for (auto it = obs.rbegin(); it != obs.rend(); ++it) out.insert(out.begin(), p.act(*it, false, unused));
        return out;
    };
    const EvalReport a = evaluate_fn(batched, s.economy, s.shock_spec(), s.mask, EvalOptions{2, 4, true});
    const EvalReport b = evaluate_fn(one_by_one, s.economy, s.shock_spec(), s.mask, EvalOptions{2, 4, true});
    CHECK(a.mean_reward == Approx(b.mean_reward).epsilon(1e-14));
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i].k == Approx(b.records[i].k).epsilon(1e-14));
}

TEST_CASE("checkpoint round trip") {
    SharedPolicy p(3, 2, small(Algorithm::Td3), 5);
    const auto dir = std::filesystem::temp_directory_path() / "marlbc_ckpt_test";
    std::filesystem::remove_all(dir);
    p.save(dir.string(), "abc");
    const SharedPolicy q = SharedPolicy::load(dir.string(), small(Algorithm::Td3));
    CHECK(q.actor().params().layers[0].weight == p.actor().params().layers[0].weight);
    CHECK(q.critic_target(1).params().layers[1].bias == p.critic_target(1).params().layers[1].bias);
    std::filesystem::remove_all(dir);
}
