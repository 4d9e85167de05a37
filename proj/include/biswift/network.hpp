#ifndef BISWIFT_NETWORK_HPP_
#define BISWIFT_NETWORK_HPP_

#include <span>
#include <vector>

#include "biswift/hybrid_codec.hpp"
#include "biswift/workload.hpp"

namespace biswift {

/// Per-stream bandwidth shares of a total budget. The sum of caps never
/// exceeds the total.
struct Allocation {
  std::vector<double> shares;
  double total_bw_kbps = 0.0;

  double cap(std::size_t stream) const {
    return shares[stream] * total_bw_kbps;
  }
  std::vector<double> caps() const;
  /// Sum of caps accumulated in stream order.
  double caps_sum() const;
};

/// Softmax over raw logits, then conservation-safe caps.
Allocation enforce_allocation(std::span<const double> raw_action,
                              double total_bw_kbps);

/// Wraps explicit non-negative shares; rescales if they overshoot the simplex.
Allocation make_allocation(std::vector<double> shares, double total_bw_kbps);

double transmission_time(double bits, double cap_kbps);

/// Fluid-flow completion time of the chunk's video plus anchors.
double transmit(const EncodedChunk& encoded, double cap_kbps,
                double start_time_s);

double total_bandwidth(const BandwidthTrace& trace, double t);

}  // namespace biswift

#endif  // BISWIFT_NETWORK_HPP_
