#include "biswift/perf_models.hpp"

#include <algorithm>
#include <cmath>

#include "biswift/error.hpp"

namespace biswift {

int width(Resolution r) {
  switch (r) {
    case Resolution::k270p: return 480;
    case Resolution::k360p: return 640;
    case Resolution::k540p: return 960;
    case Resolution::k720p: return 1280;
    case Resolution::k1080p: return 1920;
  }
  return 0;
}

int height(Resolution r) {
  switch (r) {
    case Resolution::k270p: return 270;
    case Resolution::k360p: return 360;
    case Resolution::k540p: return 540;
    case Resolution::k720p: return 720;
    case Resolution::k1080p: return 1080;
  }
  return 0;
}

std::string to_string(Resolution r) {
  return std::to_string(height(r)) + "p";
}

Resolution resolution_from_string(const std::string& s) {
  for (auto r : kLevelResolution)
    if (to_string(r) == s) return r;
  throw ValidationError("unknown resolution '" + s + "'");
}

QualityConfig quality_level(int level, int anchor_quality_factor) {
  if (level < 0 || level >= kQualityLevels)
    throw PreconditionError("quality level must be in [0,4], got " +
                            std::to_string(level));
  return {level, kLevelBitrateKbps[level], kLevelResolution[level],
          anchor_quality_factor};
}

void validate_config(const QualityConfig& c) {
  if (c.level < 0 || c.level >= kQualityLevels ||
      c.bitrate_kbps != kLevelBitrateKbps[c.level] ||
      c.resolution != kLevelResolution[c.level])
    throw ValidationError("quality config is not one of the configured levels");
  if (c.anchor_quality_factor < 1 || c.anchor_quality_factor > 100)
    throw ValidationError("anchor_quality_factor must be in [1,100]");
}

void validate_params(const ModelParams& p) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError(std::string("model.") + name + " must be > 0");
  };
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ValidationError(std::string("model.") + name + " must be >= 0");
  };
  if (!(p.hd_accuracy_base > 0.0 && p.hd_accuracy_base <= 1.0))
    throw ValidationError("model.hd_accuracy_base must be in (0,1]");
  if (!(p.anchor_quality_floor >= 0.0 && p.anchor_quality_floor <= 1.0))
    throw ValidationError("model.anchor_quality_floor must be in [0,1]");
  if (p.anchor_quality_knee < 1 || p.anchor_quality_knee > 100)
    throw ValidationError("model.anchor_quality_knee must be in [1,100]");
  non_negative(p.acc_a1, "acc_a1");
  non_negative(p.acc_a2, "acc_a2");
  non_negative(p.difficulty_w_count, "difficulty_w_count");
  non_negative(p.difficulty_w_size, "difficulty_w_size");
  non_negative(p.transfer_gain, "transfer_gain");
  non_negative(p.transfer_decay, "transfer_decay");
  non_negative(p.reuse_decay_lambda, "reuse_decay_lambda");
  positive(p.t_infer_s, "t_infer_s");
  positive(p.t_transfer_s, "t_transfer_s");
  positive(p.t_reuse_s, "t_reuse_s");
  positive(p.anchor_bits_per_pixel, "anchor_bits_per_pixel");
  positive(p.anchor_size_rate, "anchor_size_rate");
}

double difficulty(double object_count, double object_size,
                  const ModelParams& p) {
  return p.difficulty_w_count * std::log1p(std::max(object_count, 0.0)) -
         p.difficulty_w_size * std::log(std::clamp(object_size, 1e-12, 1.0));
}

double difficulty(const StreamProfile& profile, const ModelParams& p) {
  return difficulty(profile.mean_object_count, profile.mean_object_size, p);
}

double base_accuracy(const QualityConfig& config, const StreamProfile& profile,
                     const ModelParams& p) {
  const double z = p.acc_a0 + p.acc_a1 * std::log(config.bitrate_kbps) -
                   p.acc_a2 * difficulty(profile, p);
  return 1.0 / (1.0 + std::exp(-z));
}

double anchor_quality_gain(int factor, const ModelParams& p) {
  const double t =
      std::clamp(static_cast<double>(factor) / p.anchor_quality_knee, 0.0, 1.0);
  const double smooth = t * t * (3.0 - 2.0 * t);
  return p.anchor_quality_floor + (1.0 - p.anchor_quality_floor) * smooth;
}

double anchor_size_scale(int factor, const ModelParams& p) {
  return std::exp(p.anchor_size_rate * (factor - 60));
}

double frame_accuracy(FrameType type, double base, int anchor_quality_factor,
                      const ReferenceContext& ctx, const ModelParams& p) {
  const double anchor_acc =
      p.hd_accuracy_base * anchor_quality_gain(anchor_quality_factor, p);
  double acc = 0.0;
  switch (type) {
    case FrameType::kAnchor:
      acc = anchor_acc;
      break;
    case FrameType::kTransfer:
      if (!ctx.anchor_distance) {
        acc = base;
      } else {
        acc = std::min(1.0, base + p.transfer_gain *
                                       std::exp(-p.transfer_decay *
                                                *ctx.anchor_distance));
        // Transferred blocks cannot beat the HD image they came from.
        acc = std::min(acc, std::max(anchor_acc, base));
      }
      break;
    case FrameType::kReuse:
      if (!ctx.last_inferred_accuracy)
        throw MissingReference("reuse frame has no earlier inferred frame");
      acc = *ctx.last_inferred_accuracy *
            std::exp(-p.reuse_decay_lambda * ctx.accumulated_residual);
      break;
  }
  if (!std::isfinite(acc)) return 0.0;
  return std::clamp(acc, 0.0, 1.0);
}

double frame_accuracy(FrameType type, const QualityConfig& config,
                      const StreamProfile& profile, const ReferenceContext& ctx,
                      const ModelParams& p) {
  return frame_accuracy(type, base_accuracy(config, profile, p),
                        config.anchor_quality_factor, ctx, p);
}

double video_bits(const QualityConfig& config, double chunk_duration_s) {
  return config.bitrate_kbps * 1000.0 * chunk_duration_s;
}

double anchor_bits(int factor, Resolution resolution, const ModelParams& p) {
  if (factor < 1 || factor > 100)
    throw PreconditionError("anchor quality factor must be in [1,100], got " +
                            std::to_string(factor));
  return pixels(resolution) * p.anchor_bits_per_pixel *
         anchor_size_scale(factor, p);
}

LatencyBreakdown compute_latency(int n1, int n2, int n3, int frames_in_chunk,
                                 double total_bits, double alloc_bw_kbps,
                                 double queue_delay_s, const ModelParams& p) {
  if (n1 < 0 || n2 < 0 || n3 < 0 || n1 + n2 + n3 != frames_in_chunk)
    throw PreconditionError("compute_latency: n1 + n2 + n3 must equal " +
                            std::to_string(frames_in_chunk));
  if (!(alloc_bw_kbps > 0.0))
    throw InfeasibleTransmission("allocated bandwidth must be > 0 kbps");
  if (total_bits < 0.0 || queue_delay_s < 0.0)
    throw PreconditionError("compute_latency: negative bits or queue delay");
  LatencyBreakdown l;
  l.trans_s = total_bits / (alloc_bw_kbps * 1000.0);
  l.queue_s = queue_delay_s;
  l.comp_s = n1 * p.t_infer_s + n2 * (p.t_transfer_s + p.t_infer_s) +
             n3 * p.t_reuse_s;
  l.total_s = l.trans_s + l.queue_s + l.comp_s;
  return l;
}

}  // namespace biswift
