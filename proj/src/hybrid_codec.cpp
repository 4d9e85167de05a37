#include "biswift/hybrid_codec.hpp"

#include <algorithm>
#include <cmath>

#include "biswift/error.hpp"

namespace biswift {

std::array<int, 3> Assignment::counts() const {
  std::array<int, 3> n{0, 0, 0};
  for (auto t : types) ++n[static_cast<int>(t) - 1];
  return n;
}

double difference_increment(const Frame& frame, const CodecParams& params) {
  return frame.is_scene_change ? params.x_scene_weight * frame.raw_residual
                               : frame.raw_residual;
}

Assignment classify_frames(const Chunk& chunk, Thresholds th,
                           ClassifierState& state, const CodecParams& params) {
  if (!(th.tr1 >= 0.0) || !(th.tr2 >= 0.0))
    throw PreconditionError("classify_frames: thresholds must be >= 0");
  if (chunk.frames.empty())
    throw PreconditionError("classify_frames: empty chunk");
  Assignment out;
  const std::size_t n = chunk.frames.size();
  out.types.resize(n);
  out.x.resize(n);
  out.r.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    const Frame& frame = chunk.frames[f];
    state.x_acc += difference_increment(frame, params);
    state.r_acc += frame.raw_residual;
    out.x[f] = state.x_acc;
    out.r[f] = state.r_acc;
    FrameType type;
    if (!state.session_started) {
      type = FrameType::kAnchor;
      state.session_started = true;
    } else if (state.x_acc > th.tr1) {
      type = FrameType::kAnchor;
    } else if (state.r_acc > th.tr2) {
      type = FrameType::kTransfer;
    } else {
      type = FrameType::kReuse;
    }
    out.types[f] = type;
    if (type != FrameType::kReuse) {
      state.x_acc = 0.0;
      state.r_acc = 0.0;
    }
  }
  return out;
}

Assignment classify_frames(const Chunk& chunk, double tr1, double tr2,
                           const CodecParams& params) {
  ClassifierState fresh;
  return classify_frames(chunk, {tr1, tr2}, fresh, params);
}

QualityConfig select_quality_config(double alloc_bw_kbps, double prev_used_kbps,
                                    int current_level, double up_margin,
                                    int anchor_quality_factor) {
  if (current_level < 0 || current_level >= kQualityLevels)
    throw PreconditionError("select_quality_config: level must be in [0,4]");
  int level = current_level;
  if (level + 1 < kQualityLevels &&
      alloc_bw_kbps - prev_used_kbps >
          up_margin * kLevelBitrateKbps[level + 1]) {
    ++level;
  } else if (alloc_bw_kbps < kLevelBitrateKbps[level]) {
    level = 0;
    for (int l = kQualityLevels - 1; l > 0; --l) {
      if (kLevelBitrateKbps[l] <= alloc_bw_kbps) {
        level = l;
        break;
      }
    }
  }
  return quality_level(level, anchor_quality_factor);
}

int settled_level(double alloc_bw_kbps, double up_margin) {
  int level = 0;
  double prev = 0.0;
  for (int i = 0; i < 4 * kQualityLevels; ++i) {
    const int next =
        select_quality_config(alloc_bw_kbps, prev, level, up_margin).level;
    const double next_prev = kLevelBitrateKbps[next];
    if (next == level && next_prev == prev) break;
    level = next;
    prev = next_prev;
  }
  return level;
}

EncodedChunk encode_chunk(const Chunk& chunk, const QualityConfig& config,
                          const Assignment& assignment, double chunk_duration_s,
                          const ModelParams& params) {
  if (assignment.size() != chunk.frames.size())
    throw PreconditionError("encode_chunk: assignment does not match chunk");
  EncodedChunk enc;
  enc.config = config;
  enc.assignment = assignment;
  enc.video_bits = video_bits(config, chunk_duration_s);
  const double per_anchor =
      anchor_bits(config.anchor_quality_factor, kAnchorResolution, params);
  for (std::size_t f = 0; f < assignment.size(); ++f) {
    if (assignment.types[f] == FrameType::kAnchor) {
      enc.anchor_indices.push_back(static_cast<int>(f));
      enc.anchor_bits_total += per_anchor;
    }
  }
  return enc;
}

std::vector<std::vector<std::size_t>> assign_motion_vectors(
    std::span<const BoundingBox> boxes, const BlockGrid& grid) {
  std::vector<std::vector<std::size_t>> out(boxes.size());
  const int cols = grid.cols();
  const int rows = grid.rows();
  const double bs = grid.block_size;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoundingBox& box = boxes[i];
    const int c0 = std::max(0, static_cast<int>(std::floor(
                                   (box.cx - 0.5 * box.w) / bs - 0.5)));
    const int c1 = std::min(cols - 1, static_cast<int>(std::ceil(
                                          (box.cx + 0.5 * box.w) / bs - 0.5)));
    const int r0 = std::max(0, static_cast<int>(std::floor(
                                   (box.cy - 0.5 * box.h) / bs - 0.5)));
    const int r1 = std::min(rows - 1, static_cast<int>(std::ceil(
                                          (box.cy + 0.5 * box.h) / bs - 0.5)));
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        const int block = r * cols + c;
        if (box.contains(grid.center_x(block), grid.center_y(block)))
          out[i].push_back(static_cast<std::size_t>(block));
      }
    }
  }
  return out;
}

std::vector<BoundingBox> reuse_shift(
    std::span<const BoundingBox> boxes,
    std::span<const MotionVector> motion_vectors,
    const std::vector<std::vector<std::size_t>>& region_assignment) {
  if (region_assignment.size() != boxes.size())
    throw PreconditionError("reuse_shift: one region per box required");
  std::vector<BoundingBox> out(boxes.begin(), boxes.end());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& region = region_assignment[i];
    if (region.empty()) continue;
    for (std::size_t idx : region)
      if (idx >= motion_vectors.size())
        throw PreconditionError("reuse_shift: motion vector index out of range");
    // Offsets from the first vector: a uniform field shifts exactly.
    const MotionVector& ref = motion_vectors[region.front()];
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t idx : region) {
      sx += motion_vectors[idx].dx - ref.dx;
      sy += motion_vectors[idx].dy - ref.dy;
    }
    const double n = static_cast<double>(region.size());
    out[i].cx += ref.dx + sx / n;
    out[i].cy += ref.dy + sy / n;
  }
  return out;
}

TransferContext transfer_context(const Chunk& chunk,
                                 const Assignment& assignment, int frame_index,
                                 const TransferHistory& history) {
  if (frame_index < 0 ||
      frame_index >= static_cast<int>(assignment.types.size()) ||
      assignment.types.size() != chunk.frames.size())
    throw PreconditionError("transfer_context: frame index out of range");

  TransferContext ctx;
  int anchor = -1;
  for (int j = frame_index; j >= 0; --j) {
    if (assignment.types[j] == FrameType::kAnchor) {
      anchor = j;
      break;
    }
  }
  if (anchor >= 0) {
    ctx.anchor_distance = frame_index - anchor;
  } else if (history.frames_since_anchor) {
    ctx.anchor_distance = *history.frames_since_anchor + frame_index + 1;
  } else {
    throw MissingReference("transfer_context: no preceding anchor");
  }

  int inferred = -1;
  for (int j = frame_index; j >= 0; --j) {
    if (assignment.types[j] != FrameType::kReuse) {
      inferred = j;
      break;
    }
  }
  double residual = inferred < 0 ? history.residual_since_inference : 0.0;
  for (int j = inferred + 1; j <= frame_index; ++j)
    residual += chunk.frames[j].raw_residual;
  ctx.accumulated_residual = residual;
  return ctx;
}

}  // namespace biswift
