#ifndef BISWIFT_RL_SERIALIZE_HPP_
#define BISWIFT_RL_SERIALIZE_HPP_

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Core>

#include "biswift/error.hpp"

// Hex-float text encoding: every value round-trips bit-exactly.
namespace biswift::rl::io {

inline void expect_token(std::istream& in, const std::string& want) {
  std::string got;
  if (!(in >> got) || got != want)
    throw ValidationError("checkpoint: expected '" + want + "', got '" + got +
                          "'");
}

template <typename T>
T read_int(std::istream& in) {
  long long v = 0;
  if (!(in >> v)) throw ValidationError("checkpoint: expected an integer");
  return static_cast<T>(v);
}

template <typename Scalar>
void write_scalar(std::ostream& out, Scalar v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%La", static_cast<long double>(v));
  out << buf;
}

template <typename Scalar>
Scalar read_scalar(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw ValidationError("checkpoint: truncated value list");
  char* end = nullptr;
  const long double v = std::strtold(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw ValidationError("checkpoint: bad number '" + tok + "'");
  return static_cast<Scalar>(v);
}

// `single` rounds every value to float first (about half the text).
template <typename Derived>
void write_dense(std::ostream& out, const Eigen::DenseBase<Derived>& m,
                 bool single = false) {
  out << m.rows() << ' ' << m.cols();
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      out << ' ';
      if (single)
        write_scalar(out, static_cast<float>(m(i, j)));
      else
        write_scalar(out, m(i, j));
    }
  out << '\n';
}

template <typename Derived>
void read_dense(std::istream& in, Eigen::PlainObjectBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const auto rows = read_int<Eigen::Index>(in);
  const auto cols = read_int<Eigen::Index>(in);
  if (rows != m.rows() || cols != m.cols())
    throw ValidationError("checkpoint: tensor shape mismatch");
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = read_scalar<Scalar>(in);
}

}  // namespace biswift::rl::io

#endif  // BISWIFT_RL_SERIALIZE_HPP_
