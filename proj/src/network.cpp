#include "biswift/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "biswift/error.hpp"

namespace biswift {

namespace {

// Pulls shares down by ulps until the summed caps fit under the total.
void conserve(Allocation& a) {
  for (int guard = 0; guard < 64 && a.caps_sum() > a.total_bw_kbps; ++guard) {
    for (auto& s : a.shares) s = std::nextafter(s, 0.0);
  }
}

}  // namespace

std::vector<double> Allocation::caps() const {
  std::vector<double> out(shares.size());
  for (std::size_t i = 0; i < shares.size(); ++i) out[i] = cap(i);
  return out;
}

double Allocation::caps_sum() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < shares.size(); ++i) sum += cap(i);
  return sum;
}

Allocation enforce_allocation(std::span<const double> raw_action,
                              double total_bw_kbps) {
  if (raw_action.empty())
    throw PreconditionError("enforce_allocation: empty stream set");
  if (!(total_bw_kbps > 0.0))
    throw PreconditionError("enforce_allocation: total bandwidth must be > 0");
  const double peak = *std::max_element(raw_action.begin(), raw_action.end());
  Allocation a;
  a.total_bw_kbps = total_bw_kbps;
  a.shares.resize(raw_action.size());
  double z = 0.0;
  for (std::size_t i = 0; i < raw_action.size(); ++i) {
    if (!std::isfinite(raw_action[i]))
      throw PreconditionError("enforce_allocation: non-finite logit");
    a.shares[i] = std::exp(raw_action[i] - peak);
    z += a.shares[i];
  }
  for (auto& s : a.shares) s /= z;
  conserve(a);
  return a;
}

Allocation make_allocation(std::vector<double> shares, double total_bw_kbps) {
  if (shares.empty())
    throw PreconditionError("make_allocation: empty stream set");
  if (!(total_bw_kbps > 0.0))
    throw PreconditionError("make_allocation: total bandwidth must be > 0");
  for (double s : shares)
    if (!(s >= 0.0) || !std::isfinite(s))
      throw PreconditionError("make_allocation: shares must be >= 0");
  const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  if (sum > 1.0)
    for (auto& s : shares) s /= sum;
  Allocation a{std::move(shares), total_bw_kbps};
  conserve(a);
  return a;
}

double transmission_time(double bits, double cap_kbps) {
  if (!(cap_kbps > 0.0))
    throw InfeasibleTransmission("transmission cap must be > 0 kbps");
  return bits / (cap_kbps * 1000.0);
}

double transmit(const EncodedChunk& encoded, double cap_kbps,
                double start_time_s) {
  return start_time_s + transmission_time(encoded.total_bits(), cap_kbps);
}

double total_bandwidth(const BandwidthTrace& trace, double t) {
  return trace.at(std::max(t, 0.0));
}

}  // namespace biswift
