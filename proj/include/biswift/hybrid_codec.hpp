#ifndef BISWIFT_HYBRID_CODEC_HPP_
#define BISWIFT_HYBRID_CODEC_HPP_

#include <array>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "biswift/geometry.hpp"
#include "biswift/perf_models.hpp"
#include "biswift/workload.hpp"

namespace biswift {

/// Per-frame pipeline choice plus the statistics it was decided on.
struct Assignment {
  std::vector<FrameType> types;
  std::vector<double> x;  // difference feature at decision time
  std::vector<double> r;  // accumulated residual at decision time

  std::size_t size() const { return types.size(); }
  /// Frame counts of pipelines 1, 2 and 3.
  std::array<int, 3> counts() const;
};

struct Thresholds {
  double tr1 = 0.0;
  double tr2 = 0.0;
  bool operator==(const Thresholds&) const = default;
};

struct CodecParams {
  // Weight of a scene-change frame's residual in the difference feature.
  double x_scene_weight = 3.0;
  double up_margin = 1.2;
};

/// Accumulators carried across chunk boundaries of one stream.
struct ClassifierState {
  double x_acc = 0.0;
  double r_acc = 0.0;
  bool session_started = false;  // false => next frame is forced to type 1
};

/// Difference-feature increment a frame contributes to X.
double difference_increment(const Frame& frame, const CodecParams& params);

/// Threshold rule: type 1 iff X > tr1, else type 2 iff R > tr2, else type 3.
/// Inference frames (types 1, 2) reset both accumulators.
Assignment classify_frames(const Chunk& chunk, Thresholds thresholds,
                           ClassifierState& state,
                           const CodecParams& params = {});
/// Fresh session: frame 0 is forced to be an anchor.
Assignment classify_frames(const Chunk& chunk, double tr1, double tr2,
                           const CodecParams& params = {});

/// Deadband controller: single step up, fast multi-step back-off.
QualityConfig select_quality_config(double alloc_bw_kbps, double prev_used_kbps,
                                    int current_level,
                                    double up_margin = 1.2,
                                    int anchor_quality_factor = 60);

/// Level the controller settles at when ramping up under a constant cap.
int settled_level(double alloc_bw_kbps, double up_margin = 1.2);

struct EncodedChunk {
  double video_bits = 0.0;
  std::vector<int> anchor_indices;
  double anchor_bits_total = 0.0;
  QualityConfig config;
  Assignment assignment;

  double total_bits() const { return video_bits + anchor_bits_total; }
};

EncodedChunk encode_chunk(const Chunk& chunk, const QualityConfig& config,
                          const Assignment& assignment,
                          double chunk_duration_s = 1.0,
                          const ModelParams& params = {});

/// Indices of the motion vectors whose block centers lie inside each box.
std::vector<std::vector<std::size_t>> assign_motion_vectors(
    std::span<const BoundingBox> boxes, const BlockGrid& grid);

/// Shifts each box by the mean of its assigned vectors; boxes with no vectors
/// stay put.
std::vector<BoundingBox> reuse_shift(
    std::span<const BoundingBox> boxes,
    std::span<const MotionVector> motion_vectors,
    const std::vector<std::vector<std::size_t>>& region_assignment);

/// Reference state at the end of the previous chunk.
struct TransferHistory {
  std::optional<int> frames_since_anchor;  // distance of the last frame
  double residual_since_inference = 0.0;
};

struct TransferContext {
  int anchor_distance = 0;
  double accumulated_residual = 0.0;
};

/// Distance to the nearest preceding anchor and residual accumulated since
/// the last inference frame, scanning the chunk up to `frame_index`.
TransferContext transfer_context(const Chunk& chunk,
                                 const Assignment& assignment, int frame_index,
                                 const TransferHistory& history = {});

}  // namespace biswift

#endif  // BISWIFT_HYBRID_CODEC_HPP_
