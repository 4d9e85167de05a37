#ifndef BISWIFT_RL_LOW_AGENT_HPP_
#define BISWIFT_RL_LOW_AGENT_HPP_

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "biswift/error.hpp"
#include "biswift/rl/adam.hpp"
#include "biswift/rl/mlp.hpp"
#include "biswift/threshold_grid.hpp"

namespace biswift::rl {

struct LowAgentConfig {
  int state_dim = 0;
  ThresholdGrid grid;
  std::vector<int> hidden{128, 128};
  double gamma = 0.9;
  double lr_actor = 0.005;
  double lr_critic = 0.01;
  double entropy_coef = 0.05;
  // Centre and scale advantages within each batch before the actor step.
  bool normalize_advantage = true;
  std::uint64_t seed = 1;
};

struct LowAction {
  int index = 0;
  double tr1 = 0.0;
  double tr2 = 0.0;
};

template <typename Scalar>
struct LowTrajectory {
  std::vector<VectorX<Scalar>> states;
  std::vector<int> actions;
  std::vector<Scalar> rewards;
  // Value of the state after the last step; absent means terminal.
  std::optional<Scalar> bootstrap;
};

struct LowLosses {
  double actor = 0.0;
  double critic = 0.0;
  double entropy = 0.0;
};

/// Numerically stable softmax over each column.
template <typename Scalar>
MatrixX<Scalar> softmax_columns(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const auto col = logits.col(j);
    p.col(j) = (col.array() - col.maxCoeff()).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

/// Discounted returns G_t = r_t + gamma * G_{t+1}, seeded by `bootstrap`.
template <typename Scalar>
std::vector<Scalar> discounted_returns(const std::vector<Scalar>& rewards,
                                       Scalar gamma, Scalar bootstrap = 0) {
  std::vector<Scalar> g(rewards.size());
  Scalar acc = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

/// Advantage actor-critic over the discrete threshold grid.
template <typename Scalar>
class LowAgent {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  explicit LowAgent(LowAgentConfig config) : config_(std::move(config)) {
    if (config_.state_dim <= 0)
      throw PreconditionError("LowAgent: state_dim must be positive");
    if (config_.grid.size() <= 0)
      throw PreconditionError("LowAgent: empty threshold grid");
    std::mt19937_64 rng(config_.seed);
    std::vector<int> pol{config_.state_dim};
    pol.insert(pol.end(), config_.hidden.begin(), config_.hidden.end());
    std::vector<int> val = pol;
    pol.push_back(config_.grid.size());
    val.push_back(1);
    // Zero output layer: the untrained policy is exactly uniform.
    policy_ = Mlp<Scalar>(pol, rng, Scalar(0));
    value_ = Mlp<Scalar>(val, rng);
    actor_opt_ = Adam<Scalar>(policy_, static_cast<Scalar>(config_.lr_actor));
    critic_opt_ = Adam<Scalar>(value_, static_cast<Scalar>(config_.lr_critic));
  }

  const LowAgentConfig& config() const { return config_; }
  int num_actions() const { return config_.grid.size(); }
  const Mlp<Scalar>& policy() const { return policy_; }
  const Mlp<Scalar>& value() const { return value_; }
  Mlp<Scalar>& policy() { return policy_; }
  Mlp<Scalar>& value() { return value_; }
  std::int64_t updates() const { return actor_opt_.steps(); }

  Vector probabilities(const Vector& state) const {
    check_state(state);
    return softmax_columns<Scalar>(policy_.forward(Matrix(state))).col(0);
  }

  Scalar state_value(const Vector& state) const {
    check_state(state);
    return value_.forward(Matrix(state))(0, 0);
  }

  LowAction action_at(int index) const {
    const auto [tr1, tr2] = config_.grid.at(index);
    return {index, tr1, tr2};
  }

  /// Samples from the policy, or takes the argmax (lowest index on ties).
  template <typename Rng>
  LowAction select_action(const Vector& state, Rng& rng, bool greedy) const {
    const Vector p = probabilities(state);
    int index = 0;
    if (greedy) {
      p.maxCoeff(&index);
    } else {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      double x = u(rng);
      index = static_cast<int>(p.size()) - 1;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        x -= static_cast<double>(p(i));
        if (x < 0.0) {
          index = static_cast<int>(i);
          break;
        }
      }
    }
    return action_at(index);
  }

  LowAction select_greedy(const Vector& state) const {
    std::mt19937_64 unused(0);
    return select_action(state, unused, true);
  }

  LowLosses update(const LowTrajectory<Scalar>& traj) {
    const std::size_t n = traj.states.size();
    if (n == 0 || traj.actions.size() != n || traj.rewards.size() != n)
      throw PreconditionError("LowAgent::update: malformed trajectory");
    Matrix x(config_.state_dim, static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < n; ++t) {
      check_state(traj.states[t]);
      x.col(static_cast<Eigen::Index>(t)) = traj.states[t];
    }
    const auto returns =
        discounted_returns<Scalar>(traj.rewards, static_cast<Scalar>(config_.gamma),
                                   traj.bootstrap.value_or(Scalar(0)));
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);

    typename Mlp<Scalar>::Tape vtape;
    const Matrix v = value_.forward(x, vtape);
    Matrix dv(1, static_cast<Eigen::Index>(n));
    Vector advantage(static_cast<Eigen::Index>(n));
    LowLosses losses;
    for (std::size_t t = 0; t < n; ++t) {
      const auto j = static_cast<Eigen::Index>(t);
      const Scalar diff = v(0, j) - returns[t];
      advantage(j) = -diff;
      dv(0, j) = diff * inv_n;
      losses.critic += 0.5 * static_cast<double>(diff * diff * inv_n);
    }

    if (config_.normalize_advantage && n > 1) {
      const Scalar mean = advantage.mean();
      const Scalar sd = std::sqrt((advantage.array() - mean).square().mean());
      advantage = ((advantage.array() - mean) / (sd + Scalar(1e-8))).matrix();
    }

    typename Mlp<Scalar>::Tape ptape;
    const Matrix logits = policy_.forward(x, ptape);
    const Matrix p = softmax_columns<Scalar>(logits);
    Matrix dlogits(p.rows(), p.cols());
    const Scalar beta = static_cast<Scalar>(config_.entropy_coef);
    for (std::size_t t = 0; t < n; ++t) {
      const auto j = static_cast<Eigen::Index>(t);
      const int a = traj.actions[t];
      if (a < 0 || a >= num_actions())
        throw PreconditionError("LowAgent::update: action out of range");
      const Vector logp = (p.col(j).array().max(Scalar(1e-30))).log().matrix();
      const Scalar entropy = -p.col(j).dot(logp);
      losses.actor -= static_cast<double>(advantage(j) * logp(a) * inv_n);
      losses.entropy += static_cast<double>(entropy * inv_n);
      // d/dlogits of -A log p_a - beta H.
      Vector g = advantage(j) * p.col(j);
      g(a) -= advantage(j);
      g += beta * p.col(j).cwiseProduct(logp + Vector::Constant(p.rows(), entropy));
      dlogits.col(j) = g * inv_n;
    }

    const auto gv = value_.backward(vtape, dv);
    const auto gp = policy_.backward(ptape, dlogits);
    critic_opt_.step(value_, gv);
    actor_opt_.step(policy_, gp);
    if (!policy_.all_finite() || !value_.all_finite())
      throw DivergenceError("LowAgent: non-finite parameters after update");
    return losses;
  }

  void save(std::ostream& out) const {
    out << "low_agent v1\n";
    policy_.save(out);
    value_.save(out);
    actor_opt_.save(out);
    critic_opt_.save(out);
  }

  void save_policy(std::ostream& out) const {
    out << "low_policy v1\n";
    policy_.save(out, true);
  }

  void load_policy(std::istream& in) {
    io::expect_token(in, "low_policy");
    io::expect_token(in, "v1");
    auto pol = Mlp<Scalar>::load(in);
    if (pol.sizes() != policy_.sizes())
      throw ValidationError("checkpoint: low agent architecture mismatch");
    policy_ = std::move(pol);
  }

  void load(std::istream& in) {
    io::expect_token(in, "low_agent");
    io::expect_token(in, "v1");
    auto pol = Mlp<Scalar>::load(in);
    auto val = Mlp<Scalar>::load(in);
    if (pol.sizes() != policy_.sizes() || val.sizes() != value_.sizes())
      throw ValidationError("checkpoint: low agent architecture mismatch");
    policy_ = std::move(pol);
    value_ = std::move(val);
    actor_opt_.load(in);
    critic_opt_.load(in);
  }

 private:
  void check_state(const Vector& s) const {
    if (s.size() != config_.state_dim)
      throw PreconditionError("LowAgent: state has dimension " +
                              std::to_string(s.size()) + ", expected " +
                              std::to_string(config_.state_dim));
  }

  LowAgentConfig config_;
  Mlp<Scalar> policy_;
  Mlp<Scalar> value_;
  Adam<Scalar> actor_opt_;
  Adam<Scalar> critic_opt_;
};

}  // namespace biswift::rl

#endif  // BISWIFT_RL_LOW_AGENT_HPP_
