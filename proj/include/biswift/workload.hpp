#ifndef BISWIFT_WORKLOAD_HPP_
#define BISWIFT_WORKLOAD_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "biswift/geometry.hpp"

namespace biswift {

inline constexpr int kSignatureDim = 128;

enum class Difficulty { kEasy, kHard, kCustom };

/// Statistics that describe a synthetic camera; the knobs of `kCustom`.
struct ProfileParams {
  double mean_object_count = 3.0;
  double mean_object_size = 0.15;
  double residual_intensity = 0.03;
  double scene_change_rate = 0.02;
};

struct StreamProfile {
  int stream_id = 0;
  double mean_object_count = 0.0;
  double mean_object_size = 1.0;
  double residual_intensity = 0.0;
  double scene_change_rate = 0.0;
  Eigen::VectorXd content_signature;

  ProfileParams params() const {
    return {mean_object_count, mean_object_size, residual_intensity,
            scene_change_rate};
  }
};

/// Throws ValidationError naming the offending field.
void validate_profile(const StreamProfile& profile);

/// Deterministic in (seed, difficulty, stream_id). Easy streams have few large
/// objects, hard streams many tiny ones.
StreamProfile gen_stream_profile(std::uint64_t seed, Difficulty difficulty,
                                 int stream_id = 0,
                                 const std::optional<ProfileParams>& custom =
                                     std::nullopt);

struct Frame {
  int index = 0;
  double raw_residual = 0.0;
  std::vector<MotionVector> motion_vectors;  // raster order over the grid
  std::vector<BoundingBox> objects;
  bool is_scene_change = false;
};

struct Chunk {
  int chunk_index = 0;
  std::vector<Frame> frames;
  Eigen::VectorXd key_frame_feature;
  BlockGrid grid;
  MotionVector drift;  // ground-truth global pan of the chunk
  double object_count = 0.0;
  double object_size = 0.0;  // mean area fraction of the chunk's objects

  double mean_residual() const;
};

struct GenOptions {
  int frames_per_chunk = 30;
  double scene_boost = 10.0;
  double residual_cv = 0.5;
  double kappa_noise = 0.05;
  double drift_sigma_px = 2.0;
  double jitter_sigma_px = 0.5;
  bool motion_vectors = true;
  bool objects = true;
  BlockGrid grid;
};

/// Pure function of (profile, chunk_index, seed, options).
Chunk gen_chunk(const StreamProfile& profile, int chunk_index,
                std::uint64_t seed, const GenOptions& options = {});

struct TraceSample {
  double time_s = 0.0;
  double bandwidth_kbps = 0.0;
};

class BandwidthTrace {
 public:
  BandwidthTrace() = default;
  /// Validates: non-empty, strictly increasing times, positive bandwidth.
  explicit BandwidthTrace(std::vector<TraceSample> samples);

  static BandwidthTrace constant(double kbps);

  /// Step-hold lookup; before the first sample the first value applies.
  double at(double t) const;
  const std::vector<TraceSample>& samples() const { return samples_; }

 private:
  std::vector<TraceSample> samples_;
};

BandwidthTrace parse_bandwidth_trace(std::istream& in);
BandwidthTrace load_bandwidth_trace(const std::filesystem::path& path);

}  // namespace biswift

#endif  // BISWIFT_WORKLOAD_HPP_
