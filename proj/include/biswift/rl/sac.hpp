#ifndef BISWIFT_RL_SAC_HPP_
#define BISWIFT_RL_SAC_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "biswift/error.hpp"
#include "biswift/rl/adam.hpp"
#include "biswift/rl/mlp.hpp"
#include "biswift/rl/replay_buffer.hpp"

namespace biswift::rl {

struct SacConfig {
  int state_dim = 0;
  int action_dim = 0;
  int policy_hidden = 256;
  int policy_hidden_layers = 4;
  int critic_hidden = 256;
  int critic_hidden_layers = 3;
  double lr_policy = 1e-3;
  double lr_value = 3e-3;
  double lr_q = 3e-4;
  double gamma = 0.9;
  double target_rate = 0.02;
  double alpha = 0.2;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  double squash_eps = 1e-6;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
};

struct SacLosses {
  bool updated = false;
  double q1 = 0.0;
  double q2 = 0.0;
  double value = 0.0;
  double policy = 0.0;
  double mean_log_prob = 0.0;
};

/// Soft actor-critic with a separate state-value net and its Polyak target.
/// Actions are tanh-squashed Gaussians in (-1, 1)^action_dim.
template <typename Scalar>
class HighController {
 public:
  using Vector = VectorX<Scalar>;
  using Matrix = MatrixX<Scalar>;

  explicit HighController(SacConfig config) : config_(config) {
    if (config_.state_dim <= 0 || config_.action_dim <= 0)
      throw PreconditionError("HighController: dimensions must be positive");
    if (config_.log_std_min > config_.log_std_max)
      throw PreconditionError("HighController: empty log-std range");
    std::mt19937_64 rng(config_.seed);
    const int s = config_.state_dim;
    const int a = config_.action_dim;
    std::vector<int> pol{s};
    pol.insert(pol.end(), config_.policy_hidden_layers, config_.policy_hidden);
    pol.push_back(2 * a);
    std::vector<int> q{s + a};
    q.insert(q.end(), config_.critic_hidden_layers, config_.critic_hidden);
    q.push_back(1);
    std::vector<int> v{s};
    v.insert(v.end(), config_.critic_hidden_layers, config_.critic_hidden);
    v.push_back(1);
    policy_ = Mlp<Scalar>(pol, rng, Scalar(0.1));
    q1_ = Mlp<Scalar>(q, rng);
    q2_ = Mlp<Scalar>(q, rng);
    value_ = Mlp<Scalar>(v, rng);
    target_ = value_;
    policy_opt_ = Adam<Scalar>(policy_, static_cast<Scalar>(config_.lr_policy));
    q1_opt_ = Adam<Scalar>(q1_, static_cast<Scalar>(config_.lr_q));
    q2_opt_ = Adam<Scalar>(q2_, static_cast<Scalar>(config_.lr_q));
    value_opt_ = Adam<Scalar>(value_, static_cast<Scalar>(config_.lr_value));
  }

  const SacConfig& config() const { return config_; }
  int state_dim() const { return config_.state_dim; }
  int action_dim() const { return config_.action_dim; }
  const Mlp<Scalar>& policy() const { return policy_; }
  const Mlp<Scalar>& q1() const { return q1_; }
  const Mlp<Scalar>& q2() const { return q2_; }
  const Mlp<Scalar>& value() const { return value_; }
  const Mlp<Scalar>& target_value() const { return target_; }
  Mlp<Scalar>& policy() { return policy_; }
  Mlp<Scalar>& value() { return value_; }
  Mlp<Scalar>& target_value() { return target_; }
  std::int64_t updates() const { return updates_; }

  /// Mean and clamped log-std of the pre-squash Gaussian.
  std::pair<Vector, Vector> distribution(const Vector& state) const {
    check_state(state);
    const Vector out = policy_.forward_one(state);
    const int a = config_.action_dim;
    Vector log_std = out.tail(a).cwiseMax(Scalar(config_.log_std_min))
                         .cwiseMin(Scalar(config_.log_std_max));
    return {out.head(a), log_std};
  }

  /// tanh(mean) in eval mode; a reparameterized squashed sample otherwise.
  template <typename Rng>
  Vector select_action(const Vector& state, Rng& rng, bool eval) const {
    const auto [mean, log_std] = distribution(state);
    if (eval) return mean.array().tanh().matrix();
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector u(mean.size());
    for (Eigen::Index i = 0; i < u.size(); ++i)
      u(i) = mean(i) + std::exp(log_std(i)) * static_cast<Scalar>(normal(rng));
    return u.array().tanh().matrix();
  }

  Vector select_eval(const Vector& state) const {
    std::mt19937_64 unused(0);
    return select_action(state, unused, true);
  }

  /// One gradient step on both Q nets, the value net and the policy, then a
  /// Polyak step of the target value net. A buffer smaller than the batch
  /// leaves every parameter untouched and reports updated = false.
  template <typename Rng>
  SacLosses update(const ReplayBuffer<Scalar>& buffer, Rng& rng) {
    SacLosses losses;
    if (buffer.size() < config_.batch_size || config_.batch_size == 0)
      return losses;
    const auto idx = buffer.sample(config_.batch_size, rng);
    const auto n = static_cast<Eigen::Index>(idx.size());
    const int s_dim = config_.state_dim;
    const int a_dim = config_.action_dim;
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
    const Scalar alpha = static_cast<Scalar>(config_.alpha);

    Matrix s(s_dim, n), s2(s_dim, n), act(a_dim, n);
    Vector r(n), not_done(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto& tr = buffer[idx[static_cast<std::size_t>(j)]];
      if (tr.state.size() != s_dim || tr.next_state.size() != s_dim ||
          tr.action.size() != a_dim)
        throw PreconditionError("HighController::update: transition shape");
      s.col(j) = tr.state;
      s2.col(j) = tr.next_state;
      act.col(j) = tr.action;
      r(j) = tr.reward;
      not_done(j) = tr.done ? Scalar(0) : Scalar(1);
    }

    // Q regression toward r + gamma * V_target(s').
    const Matrix v_next = target_.forward(s2);
    const Vector y = r + static_cast<Scalar>(config_.gamma) *
                             not_done.cwiseProduct(v_next.row(0).transpose());
    Matrix sa(s_dim + a_dim, n);
    sa.topRows(s_dim) = s;
    sa.bottomRows(a_dim) = act;
    losses.q1 = q_step(q1_, q1_opt_, sa, y, inv_n);
    losses.q2 = q_step(q2_, q2_opt_, sa, y, inv_n);

    // Fresh reparameterized actions from the current policy.
    typename Mlp<Scalar>::Tape ptape;
    const Matrix out = policy_.forward(s, ptape);
    Matrix eps(a_dim, n), u(a_dim, n), a_new(a_dim, n), sigma(a_dim, n);
    Matrix clamp_mask(a_dim, n);
    Vector log_pi(n);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr double kHalfLog2Pi = 0.91893853320467274178;
    for (Eigen::Index j = 0; j < n; ++j) {
      Scalar lp = 0;
      for (int i = 0; i < a_dim; ++i) {
        const Scalar raw = out(a_dim + i, j);
        const Scalar ls = std::clamp(raw, Scalar(config_.log_std_min),
                                     Scalar(config_.log_std_max));
        clamp_mask(i, j) = (raw < Scalar(config_.log_std_min) ||
                            raw > Scalar(config_.log_std_max))
                               ? Scalar(0)
                               : Scalar(1);
        eps(i, j) = static_cast<Scalar>(normal(rng));
        sigma(i, j) = std::exp(ls);
        u(i, j) = out(i, j) + sigma(i, j) * eps(i, j);
        a_new(i, j) = std::tanh(u(i, j));
        lp += -Scalar(0.5) * eps(i, j) * eps(i, j) - ls - Scalar(kHalfLog2Pi) -
              std::log(Scalar(1) - a_new(i, j) * a_new(i, j) +
                       Scalar(config_.squash_eps));
      }
      log_pi(j) = lp;
    }
    losses.mean_log_prob = static_cast<double>(log_pi.mean());

    Matrix sa_new(s_dim + a_dim, n);
    sa_new.topRows(s_dim) = s;
    sa_new.bottomRows(a_dim) = a_new;
    typename Mlp<Scalar>::Tape t1, t2;
    const Matrix qa1 = q1_.forward(sa_new, t1);
    const Matrix qa2 = q2_.forward(sa_new, t2);

    // Value regression toward min Q - alpha log pi.
    {
      typename Mlp<Scalar>::Tape vtape;
      const Matrix v = value_.forward(s, vtape);
      Matrix dv(1, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const Scalar target = std::min(qa1(0, j), qa2(0, j)) - alpha * log_pi(j);
        const Scalar diff = v(0, j) - target;
        dv(0, j) = diff * inv_n;
        losses.value += 0.5 * static_cast<double>(diff * diff * inv_n);
      }
      value_opt_.step(value_, value_.backward(vtape, dv));
    }

    // Policy: minimize alpha log pi - min Q through the sampled action.
    {
      Matrix up1 = Matrix::Zero(1, n), up2 = Matrix::Zero(1, n);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (qa1(0, j) <= qa2(0, j))
          up1(0, j) = Scalar(1);
        else
          up2(0, j) = Scalar(1);
        losses.policy += static_cast<double>(
            (alpha * log_pi(j) - std::min(qa1(0, j), qa2(0, j))) * inv_n);
      }
      Matrix in1, in2;
      q1_.backward(t1, up1, &in1);
      q2_.backward(t2, up2, &in2);
      const Matrix dq_da = in1.bottomRows(a_dim) + in2.bottomRows(a_dim);
      Matrix dout(2 * a_dim, n);
      for (Eigen::Index j = 0; j < n; ++j)
        for (int i = 0; i < a_dim; ++i) {
          const Scalar a = a_new(i, j);
          const Scalar one_m = Scalar(1) - a * a;
          const Scalar dlogpi_du =
              Scalar(2) * a * one_m / (one_m + Scalar(config_.squash_eps));
          const Scalar dl_du = alpha * dlogpi_du - dq_da(i, j) * one_m;
          dout(i, j) = dl_du * inv_n;
          dout(a_dim + i, j) = clamp_mask(i, j) *
                               (-alpha + dl_du * sigma(i, j) * eps(i, j)) * inv_n;
        }
      policy_opt_.step(policy_, policy_.backward(ptape, dout));
    }

    soft_update(target_, value_, static_cast<Scalar>(config_.target_rate));
    ++updates_;
    if (!policy_.all_finite() || !q1_.all_finite() || !q2_.all_finite() ||
        !value_.all_finite())
      throw DivergenceError("HighController: non-finite parameters");
    losses.updated = true;
    return losses;
  }

  void save(std::ostream& out) const {
    out << "sac v1 " << updates_ << '\n';
    for (const auto* net : {&policy_, &q1_, &q2_, &value_, &target_})
      net->save(out);
    policy_opt_.save(out);
    q1_opt_.save(out);
    q2_opt_.save(out);
    value_opt_.save(out);
  }

  /// Policy network only, rounded to single precision; enough to act.
  void save_policy(std::ostream& out) const {
    out << "sac_policy v1 " << updates_ << '\n';
    policy_.save(out, true);
  }

  void load_policy(std::istream& in) {
    io::expect_token(in, "sac_policy");
    io::expect_token(in, "v1");
    const auto updates = io::read_int<std::int64_t>(in);
    auto loaded = Mlp<Scalar>::load(in);
    if (loaded.sizes() != policy_.sizes())
      throw ValidationError("checkpoint: controller architecture mismatch");
    policy_ = std::move(loaded);
    updates_ = updates;
  }

  void load(std::istream& in) {
    io::expect_token(in, "sac");
    io::expect_token(in, "v1");
    const auto updates = io::read_int<std::int64_t>(in);
    for (auto* net : {&policy_, &q1_, &q2_, &value_, &target_}) {
      auto loaded = Mlp<Scalar>::load(in);
      if (loaded.sizes() != net->sizes())
        throw ValidationError("checkpoint: controller architecture mismatch");
      *net = std::move(loaded);
    }
    policy_opt_.load(in);
    q1_opt_.load(in);
    q2_opt_.load(in);
    value_opt_.load(in);
    updates_ = updates;
  }

 private:
  Scalar q_step(Mlp<Scalar>& net, Adam<Scalar>& opt, const Matrix& sa,
                const Vector& y, Scalar inv_n) {
    typename Mlp<Scalar>::Tape tape;
    const Matrix q = net.forward(sa, tape);
    const Matrix diff = q - y.transpose();
    opt.step(net, net.backward(tape, diff * inv_n));
    return Scalar(0.5) * diff.squaredNorm() * inv_n;
  }

  void check_state(const Vector& s) const {
    if (s.size() != config_.state_dim)
      throw PreconditionError("HighController: state has dimension " +
                              std::to_string(s.size()) + ", expected " +
                              std::to_string(config_.state_dim));
  }

  SacConfig config_;
  Mlp<Scalar> policy_;
  Mlp<Scalar> q1_;
  Mlp<Scalar> q2_;
  Mlp<Scalar> value_;
  Mlp<Scalar> target_;
  Adam<Scalar> policy_opt_;
  Adam<Scalar> q1_opt_;
  Adam<Scalar> q2_opt_;
  Adam<Scalar> value_opt_;
  std::int64_t updates_ = 0;
};

}  // namespace biswift::rl

#endif  // BISWIFT_RL_SAC_HPP_
