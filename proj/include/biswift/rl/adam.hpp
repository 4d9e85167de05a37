#ifndef BISWIFT_RL_ADAM_HPP_
#define BISWIFT_RL_ADAM_HPP_

#include <cmath>
#include <cstdint>

#include "biswift/rl/mlp.hpp"

namespace biswift::rl {

/// Bias-corrected Adam whose moments mirror one Mlp's parameter shapes.
template <typename Scalar>
class Adam {
 public:
  struct Options {
    Scalar lr = Scalar(1e-3);
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);
  };

  Adam() = default;
  Adam(const Mlp<Scalar>& net, Options options)
      : options_(options),
        first_(net.zero_gradients()),
        second_(net.zero_gradients()) {}
  Adam(const Mlp<Scalar>& net, Scalar lr) : Adam(net, Options{lr}) {}

  void step(Mlp<Scalar>& net, const MlpGradients<Scalar>& grads) {
    if (grads.weight.size() != first_.weight.size())
      throw PreconditionError("Adam::step: gradient shape mismatch");
    ++steps_;
    const Scalar b1 = options_.beta1;
    const Scalar b2 = options_.beta2;
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(steps_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(steps_));
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      if (param.rows() != g.rows() || param.cols() != g.cols())
        throw PreconditionError("Adam::step: gradient shape mismatch");
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
      param.array() -= options_.lr * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + options_.eps);
    };
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      update(net.layers()[l].weight, first_.weight[l], second_.weight[l],
             grads.weight[l]);
      update(net.layers()[l].bias, first_.bias[l], second_.bias[l],
             grads.bias[l]);
    }
  }

  std::int64_t steps() const { return steps_; }
  const Options& options() const { return options_; }
  const MlpGradients<Scalar>& first_moment() const { return first_; }
  const MlpGradients<Scalar>& second_moment() const { return second_; }

  void save(std::ostream& out) const {
    out << "adam v1 " << steps_ << ' ';
    io::write_scalar(out, options_.lr);
    out << ' ';
    io::write_scalar(out, options_.beta1);
    out << ' ';
    io::write_scalar(out, options_.beta2);
    out << ' ';
    io::write_scalar(out, options_.eps);
    out << ' ' << first_.weight.size() << '\n';
    for (const auto* moments : {&first_, &second_})
      for (std::size_t l = 0; l < moments->weight.size(); ++l) {
        io::write_dense(out, moments->weight[l]);
        io::write_dense(out, moments->bias[l]);
      }
  }

  /// Restores into an optimizer already shaped for the same net.
  void load(std::istream& in) {
    io::expect_token(in, "adam");
    io::expect_token(in, "v1");
    steps_ = io::read_int<std::int64_t>(in);
    options_.lr = io::read_scalar<Scalar>(in);
    options_.beta1 = io::read_scalar<Scalar>(in);
    options_.beta2 = io::read_scalar<Scalar>(in);
    options_.eps = io::read_scalar<Scalar>(in);
    if (io::read_int<std::size_t>(in) != first_.weight.size())
      throw ValidationError("checkpoint: optimizer layer count mismatch");
    for (auto* moments : {&first_, &second_})
      for (std::size_t l = 0; l < moments->weight.size(); ++l) {
        io::read_dense(in, moments->weight[l]);
        io::read_dense(in, moments->bias[l]);
      }
  }

 private:
  Options options_;
  MlpGradients<Scalar> first_;
  MlpGradients<Scalar> second_;
  std::int64_t steps_ = 0;
};

template <typename Scalar>
void adam_step(Mlp<Scalar>& net, const MlpGradients<Scalar>& grads,
               Adam<Scalar>& state) {
  state.step(net, grads);
}

}  // namespace biswift::rl

#endif  // BISWIFT_RL_ADAM_HPP_
