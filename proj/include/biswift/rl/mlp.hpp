#ifndef BISWIFT_RL_MLP_HPP_
#define BISWIFT_RL_MLP_HPP_

#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "biswift/error.hpp"
#include "biswift/rl/serialize.hpp"

namespace biswift::rl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Gradients (or any per-parameter quantity) shaped like an Mlp.
template <typename Scalar>
struct MlpGradients {
  std::vector<MatrixX<Scalar>> weight;
  std::vector<VectorX<Scalar>> bias;

  MlpGradients& operator+=(const MlpGradients& o) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      weight[i] += o.weight[i];
      bias[i] += o.bias[i];
    }
    return *this;
  }
  Scalar squared_norm() const {
    Scalar s = 0;
    for (std::size_t i = 0; i < weight.size(); ++i)
      s += weight[i].squaredNorm() + bias[i].squaredNorm();
    return s;
  }
};

/// Dense feed-forward net, ReLU on hidden layers, linear output. Batches are
/// column-major: one sample per column.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;
  };

  /// Activations kept by a forward pass for the matching backward pass.
  struct Tape {
    std::vector<Matrix> inputs;  // input of each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };

  Mlp() = default;

  /// Zero-initialized net with the given layer sizes (input first).
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2)
      throw PreconditionError("Mlp: need at least input and output sizes");
    for (int s : sizes_)
      if (s <= 0) throw PreconditionError("Mlp: layer sizes must be positive");
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i)
      layers_.push_back({Matrix::Zero(sizes_[i + 1], sizes_[i]),
                         Vector::Zero(sizes_[i + 1])});
  }

  /// He-uniform weights, zero biases; the output layer is scaled by
  /// `output_scale` (0 gives a constant initial output).
  template <typename Rng>
  Mlp(std::vector<int> sizes, Rng& rng, Scalar output_scale = Scalar(1))
      : Mlp(std::move(sizes)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Scalar bound = std::sqrt(Scalar(6) / sizes_[l]);
      std::uniform_real_distribution<Scalar> dist(-bound, bound);
      const Scalar scale = l + 1 == layers_.size() ? output_scale : Scalar(1);
      for (Eigen::Index j = 0; j < layers_[l].weight.cols(); ++j)
        for (Eigen::Index i = 0; i < layers_[l].weight.rows(); ++i)
          layers_[l].weight(i, j) = scale * dist(rng);
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < sizes_.size(); ++i)
      n += static_cast<std::size_t>(sizes_[i] + 1) * sizes_[i + 1];
    return n;
  }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weight * h;
      z.colwise() += layers_[l].bias;
      h = l + 1 < layers_.size() ? Matrix(z.cwiseMax(Scalar(0))) : z;
    }
    return h;
  }

  Vector forward_one(const Vector& x) const { return forward(Matrix(x)).col(0); }

  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x);
    tape.inputs.resize(layers_.size());
    tape.pre.resize(layers_.size());
    Matrix h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      tape.inputs[l] = h;
      tape.pre[l] = layers_[l].weight * h;
      tape.pre[l].colwise() += layers_[l].bias;
      h = l + 1 < layers_.size() ? Matrix(tape.pre[l].cwiseMax(Scalar(0)))
                                 : tape.pre[l];
    }
    return h;
  }

  /// Parameter gradients of sum(upstream .* output); optionally also the
  /// gradient with respect to the input batch.
  MlpGradients<Scalar> backward(const Tape& tape, const Matrix& upstream,
                                Matrix* input_grad = nullptr) const {
    if (tape.inputs.size() != layers_.size() ||
        upstream.rows() != output_dim() ||
        upstream.cols() != tape.inputs.front().cols())
      throw PreconditionError("Mlp::backward: shape mismatch");
    MlpGradients<Scalar> g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Matrix delta = upstream;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      g.weight[l].noalias() = delta * tape.inputs[l].transpose();
      g.bias[l] = delta.rowwise().sum();
      if (l > 0 || input_grad) {
        Matrix back = layers_[l].weight.transpose() * delta;
        if (l > 0) {
          delta = back.cwiseProduct(
              tape.pre[l - 1].unaryExpr([](Scalar v) {
                return v > Scalar(0) ? Scalar(1) : Scalar(0);
              }));
        } else {
          *input_grad = std::move(back);
        }
      }
    }
    return g;
  }

  MlpGradients<Scalar> zero_gradients() const {
    MlpGradients<Scalar> g;
    for (const auto& layer : layers_) {
      g.weight.push_back(Matrix::Zero(layer.weight.rows(), layer.weight.cols()));
      g.bias.push_back(Vector::Zero(layer.bias.size()));
    }
    return g;
  }

  bool all_finite() const {
    for (const auto& layer : layers_)
      if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
    return true;
  }

  void save(std::ostream& out, bool single_precision = false) const {
    out << "mlp v1 " << sizes_.size();
    for (int s : sizes_) out << ' ' << s;
    out << '\n';
    for (const auto& layer : layers_) {
      io::write_dense(out, layer.weight, single_precision);
      io::write_dense(out, layer.bias, single_precision);
    }
  }

  static Mlp load(std::istream& in) {
    io::expect_token(in, "mlp");
    io::expect_token(in, "v1");
    const auto n = io::read_int<std::size_t>(in);
    if (n < 2 || n > 64) throw ValidationError("checkpoint: bad layer count");
    std::vector<int> sizes(n);
    for (auto& s : sizes) s = io::read_int<int>(in);
    Mlp net(sizes);
    for (auto& layer : net.layers_) {
      io::read_dense(in, layer.weight);
      io::read_dense(in, layer.bias);
    }
    return net;
  }

 private:
  void check_input(const Matrix& x) const {
    if (layers_.empty() || x.rows() != input_dim())
      throw PreconditionError("Mlp: input has " + std::to_string(x.rows()) +
                              " rows, expected " +
                              std::to_string(layers_.empty() ? 0 : input_dim()));
  }

  std::vector<int> sizes_;
  std::vector<Layer> layers_;
};

template <typename Scalar>
MatrixX<Scalar> mlp_forward(const Mlp<Scalar>& net, const MatrixX<Scalar>& x) {
  return net.forward(x);
}

template <typename Scalar>
struct MlpBackward {
  MlpGradients<Scalar> params;
  MatrixX<Scalar> input;
};

template <typename Scalar>
MlpBackward<Scalar> mlp_backward(const Mlp<Scalar>& net,
                                 const MatrixX<Scalar>& x,
                                 const MatrixX<Scalar>& upstream) {
  typename Mlp<Scalar>::Tape tape;
  net.forward(x, tape);
  MlpBackward<Scalar> out;
  out.params = net.backward(tape, upstream, &out.input);
  return out;
}

/// target <- (1 - tau) * target + tau * source, element-wise.
template <typename Scalar>
void soft_update(Mlp<Scalar>& target, const Mlp<Scalar>& source, Scalar tau) {
  if (target.sizes() != source.sizes())
    throw PreconditionError("soft_update: architecture mismatch");
  for (std::size_t l = 0; l < target.layers().size(); ++l) {
    auto& t = target.layers()[l];
    const auto& s = source.layers()[l];
    t.weight = (Scalar(1) - tau) * t.weight + tau * s.weight;
    t.bias = (Scalar(1) - tau) * t.bias + tau * s.bias;
  }
}

}  // namespace biswift::rl

#endif  // BISWIFT_RL_MLP_HPP_
