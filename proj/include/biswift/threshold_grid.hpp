#ifndef BISWIFT_THRESHOLD_GRID_HPP_
#define BISWIFT_THRESHOLD_GRID_HPP_

#include <cmath>
#include <stdexcept>
#include <utility>

namespace biswift {

/// Log-spaced (tr1, tr2) lattice; index = i1 * n2 + i2, so index order is
/// lexicographic in (tr1, tr2).
struct ThresholdGrid {
  double tr1_min = 0.15;
  double tr1_max = 3.0;
  double tr2_min = 0.05;
  double tr2_max = 3.0;
  int n1 = 8;
  int n2 = 8;

  int size() const { return n1 * n2; }

  static double log_point(double lo, double hi, int i, int n) {
    if (n <= 1) return lo;
    return lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  }

  std::pair<double, double> at(int index) const {
    if (index < 0 || index >= size())
      throw std::out_of_range("ThresholdGrid: index out of range");
    return {log_point(tr1_min, tr1_max, index / n2, n1),
            log_point(tr2_min, tr2_max, index % n2, n2)};
  }
};

}  // namespace biswift

#endif  // BISWIFT_THRESHOLD_GRID_HPP_
