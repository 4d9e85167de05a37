#include "biswift/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <random>
#include <sstream>

#include "biswift/error.hpp"
#include "rng.hpp"

namespace biswift {

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Log-normal draw with the requested mean and coefficient of variation.
double lognormal_with_mean(std::mt19937_64& rng, double mean, double cv) {
  if (mean <= 0.0) return 0.0;
  const double sigma2 = std::log1p(cv * cv);
  const double mu = std::log(mean) - 0.5 * sigma2;
  return std::lognormal_distribution<double>(mu, std::sqrt(sigma2))(rng);
}

}  // namespace

void validate_profile(const StreamProfile& p) {
  if (!(p.mean_object_count >= 0.0) || !std::isfinite(p.mean_object_count))
    throw ValidationError("invalid profile: mean_object_count must be >= 0");
  if (!(p.mean_object_size > 0.0 && p.mean_object_size <= 1.0))
    throw ValidationError("invalid profile: mean_object_size must be in (0,1]");
  if (!(p.residual_intensity > 0.0) || !std::isfinite(p.residual_intensity))
    throw ValidationError("invalid profile: residual_intensity must be > 0");
  if (!(p.scene_change_rate >= 0.0 && p.scene_change_rate <= 1.0))
    throw ValidationError(
        "invalid profile: scene_change_rate must be in [0,1]");
  if (p.content_signature.size() != kSignatureDim)
    throw ValidationError("invalid profile: content_signature must have " +
                          std::to_string(kSignatureDim) + " entries");
}

StreamProfile gen_stream_profile(std::uint64_t seed, Difficulty difficulty,
                                 int stream_id,
                                 const std::optional<ProfileParams>& custom) {
  auto rng = detail::make_engine(seed, 0x5052'4f46u,
                                 static_cast<std::uint64_t>(difficulty),
                                 static_cast<std::uint64_t>(stream_id));
  StreamProfile p;
  p.stream_id = stream_id;
  switch (difficulty) {
    case Difficulty::kEasy:
      p.mean_object_count = uniform(rng, 2.0, 5.0);
      p.mean_object_size = uniform(rng, 0.10, 0.25);
      p.residual_intensity = uniform(rng, 0.02, 0.04);
      p.scene_change_rate = uniform(rng, 0.01, 0.03);
      break;
    case Difficulty::kHard:
      p.mean_object_count = uniform(rng, 30.0, 45.0);
      p.mean_object_size = uniform(rng, 0.003, 0.01);
      p.residual_intensity = uniform(rng, 0.04, 0.07);
      p.scene_change_rate = uniform(rng, 0.02, 0.05);
      break;
    case Difficulty::kCustom: {
      const ProfileParams params = custom.value_or(ProfileParams{});
      p.mean_object_count = params.mean_object_count;
      p.mean_object_size = params.mean_object_size;
      p.residual_intensity = params.residual_intensity;
      p.scene_change_rate = params.scene_change_rate;
      break;
    }
  }
  p.content_signature.resize(kSignatureDim);
  for (int i = 0; i < kSignatureDim; ++i)
    p.content_signature[i] = uniform(rng, 0.0, 1.0);
  validate_profile(p);
  return p;
}

double Chunk::mean_residual() const {
  if (frames.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& f : frames) sum += f.raw_residual;
  return sum / static_cast<double>(frames.size());
}

Chunk gen_chunk(const StreamProfile& profile, int chunk_index,
                std::uint64_t seed, const GenOptions& options) {
  if (options.frames_per_chunk <= 0)
    throw PreconditionError("gen_chunk: frames_per_chunk must be positive");
  auto rng = detail::make_engine(seed, 0x4348'4e4bu,
                                 static_cast<std::uint64_t>(profile.stream_id),
                                 static_cast<std::uint64_t>(chunk_index));
  Chunk chunk;
  chunk.chunk_index = chunk_index;
  chunk.grid = options.grid;

  std::normal_distribution<double> drift_dist(0.0, options.drift_sigma_px);
  chunk.drift = {drift_dist(rng), drift_dist(rng)};

  chunk.key_frame_feature = profile.content_signature;
  for (int i = 0; i < chunk.key_frame_feature.size(); ++i)
    chunk.key_frame_feature[i] +=
        uniform(rng, -options.kappa_noise, options.kappa_noise);

  // Objects persist through the chunk and move with the global drift.
  const int n_objects = static_cast<int>(
      std::poisson_distribution<int>(profile.mean_object_count)(rng));
  const double fw = options.grid.frame_width;
  const double fh = options.grid.frame_height;
  std::vector<BoundingBox> initial;
  initial.reserve(n_objects);
  double size_sum = 0.0;
  for (int i = 0; i < n_objects; ++i) {
    const double area = std::clamp(
        lognormal_with_mean(rng, profile.mean_object_size, 0.3), 1e-5, 1.0);
    size_sum += area;
    const double side = std::sqrt(area);
    initial.push_back({uniform(rng, 0.0, fw), uniform(rng, 0.0, fh),
                       side * fw, side * fh});
  }
  chunk.object_count = n_objects;
  chunk.object_size =
      n_objects > 0 ? size_sum / n_objects : profile.mean_object_size;

  std::bernoulli_distribution scene(profile.scene_change_rate);
  std::normal_distribution<double> jitter(0.0, options.jitter_sigma_px);
  chunk.frames.resize(options.frames_per_chunk);
  for (int f = 0; f < options.frames_per_chunk; ++f) {
    Frame& frame = chunk.frames[f];
    frame.index = f;
    frame.is_scene_change = scene(rng);
    frame.raw_residual = lognormal_with_mean(rng, profile.residual_intensity,
                                             options.residual_cv);
    if (frame.is_scene_change) frame.raw_residual *= options.scene_boost;
    if (options.objects) {
      frame.objects = initial;
      for (auto& box : frame.objects) {
        box.cx += f * chunk.drift.dx;
        box.cy += f * chunk.drift.dy;
      }
    }
    if (options.motion_vectors) {
      const int blocks = options.grid.blocks();
      frame.motion_vectors.resize(blocks);
      for (int b = 0; b < blocks; ++b)
        frame.motion_vectors[b] = {chunk.drift.dx + jitter(rng),
                                   chunk.drift.dy + jitter(rng)};
    }
  }
  return chunk;
}

BandwidthTrace::BandwidthTrace(std::vector<TraceSample> samples)
    : samples_(std::move(samples)) {
  if (samples_.empty())
    throw ValidationError("bandwidth trace has no samples");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (!(s.time_s >= 0.0) || !std::isfinite(s.time_s))
      throw ValidationError("bandwidth trace sample " + std::to_string(i + 1) +
                            ": time must be >= 0");
    if (!(s.bandwidth_kbps > 0.0) || !std::isfinite(s.bandwidth_kbps))
      throw ValidationError("bandwidth trace sample " + std::to_string(i + 1) +
                            ": bandwidth must be > 0");
    if (i > 0 && !(s.time_s > samples_[i - 1].time_s))
      throw ValidationError("bandwidth trace sample " + std::to_string(i + 1) +
                            ": times must be strictly increasing");
  }
}

BandwidthTrace BandwidthTrace::constant(double kbps) {
  return BandwidthTrace({{0.0, kbps}});
}

double BandwidthTrace::at(double t) const {
  auto it = std::upper_bound(
      samples_.begin(), samples_.end(), t,
      [](double value, const TraceSample& s) { return value < s.time_s; });
  if (it == samples_.begin()) return samples_.front().bandwidth_kbps;
  return std::prev(it)->bandwidth_kbps;
}

BandwidthTrace parse_bandwidth_trace(std::istream& in) {
  std::vector<TraceSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    TraceSample s;
    std::string rest;
    if (!(fields >> s.time_s >> s.bandwidth_kbps) || (fields >> rest))
      throw ParseError(line_no, "expected '<time_seconds> <bandwidth_kbps>'");
    samples.push_back(s);
  }
  return BandwidthTrace(std::move(samples));
}

BandwidthTrace load_bandwidth_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open bandwidth trace: " + path.string());
  return parse_bandwidth_trace(in);
}

}  // namespace biswift
