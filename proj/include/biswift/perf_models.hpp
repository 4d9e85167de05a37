#ifndef BISWIFT_PERF_MODELS_HPP_
#define BISWIFT_PERF_MODELS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "biswift/workload.hpp"

namespace biswift {

enum class Resolution { k270p, k360p, k540p, k720p, k1080p };

int width(Resolution r);
int height(Resolution r);
inline double pixels(Resolution r) {
  return static_cast<double>(width(r)) * height(r);
}
std::string to_string(Resolution r);
Resolution resolution_from_string(const std::string& s);

inline constexpr int kQualityLevels = 5;
inline constexpr std::array<double, kQualityLevels> kLevelBitrateKbps = {
    500.0, 1000.0, 1500.0, 2000.0, 5000.0};
inline constexpr std::array<Resolution, kQualityLevels> kLevelResolution = {
    Resolution::k270p, Resolution::k360p, Resolution::k540p,
    Resolution::k720p, Resolution::k1080p};

/// Anchors are HD images taken at the camera's native resolution.
inline constexpr Resolution kAnchorResolution = Resolution::k1080p;

struct QualityConfig {
  int level = 0;
  double bitrate_kbps = kLevelBitrateKbps[0];
  Resolution resolution = kLevelResolution[0];
  int anchor_quality_factor = 60;

  bool operator==(const QualityConfig&) const = default;
};

/// One of the five configured (bitrate, resolution) levels.
QualityConfig quality_level(int level, int anchor_quality_factor = 60);
void validate_config(const QualityConfig& config);

struct LatencyBreakdown {
  double trans_s = 0.0;
  double queue_s = 0.0;
  double comp_s = 0.0;
  double total_s = 0.0;
};

enum class FrameType : std::uint8_t { kAnchor = 1, kTransfer = 2, kReuse = 3 };

struct ModelParams {
  // Logistic in log-bitrate: sigma(a0 + a1 ln(bitrate) - a2 difficulty).
  double acc_a0 = 1.0;
  double acc_a1 = 0.4;
  double acc_a2 = 0.9;
  // difficulty = w_count ln(1 + count) + w_size (-ln size)
  double difficulty_w_count = 0.6;
  double difficulty_w_size = 0.4;

  double hd_accuracy_base = 0.97;
  double anchor_quality_floor = 0.5;  // q(0)
  int anchor_quality_knee = 40;       // q saturates to 1 here

  double transfer_gain = 0.25;
  double transfer_decay = 0.05;
  double reuse_decay_lambda = 0.3;

  double t_infer_s = 0.025;
  double t_transfer_s = 0.010;
  double t_reuse_s = 0.006;

  double anchor_bits_per_pixel = 0.2;
  double anchor_size_rate = 0.03;  // s(f) = exp(rate (f - 60))
};

/// Throws ValidationError naming the offending field.
void validate_params(const ModelParams& params);

double difficulty(double object_count, double object_size,
                  const ModelParams& params);
double difficulty(const StreamProfile& profile, const ModelParams& params);

double base_accuracy(const QualityConfig& config, const StreamProfile& profile,
                     const ModelParams& params);

/// Saturating accuracy multiplier of the anchor JPEG quality factor.
double anchor_quality_gain(int quality_factor, const ModelParams& params);
/// Relative anchor size; equals 1 at factor 60.
double anchor_size_scale(int quality_factor, const ModelParams& params);

/// What a non-anchor frame can lean on. Empty optionals mean "no such frame
/// earlier in the session".
struct ReferenceContext {
  std::optional<int> anchor_distance;
  double accumulated_residual = 0.0;
  std::optional<double> last_inferred_accuracy;
};

double frame_accuracy(FrameType type, const QualityConfig& config,
                      const StreamProfile& profile,
                      const ReferenceContext& context,
                      const ModelParams& params);

/// Same as above with base accuracy precomputed (hot path for oracles).
double frame_accuracy(FrameType type, double base, int anchor_quality_factor,
                      const ReferenceContext& context,
                      const ModelParams& params);

double video_bits(const QualityConfig& config, double chunk_duration_s);
double anchor_bits(int quality_factor, Resolution resolution,
                   const ModelParams& params);

/// `frames_in_chunk` is the contract n1 + n2 + n3 must satisfy.
LatencyBreakdown compute_latency(int n1, int n2, int n3, int frames_in_chunk,
                                 double total_bits, double alloc_bw_kbps,
                                 double queue_delay_s,
                                 const ModelParams& params);

}  // namespace biswift

#endif  // BISWIFT_PERF_MODELS_HPP_
