#ifndef BISWIFT_EDGE_SIM_HPP_
#define BISWIFT_EDGE_SIM_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "biswift/hybrid_codec.hpp"
#include "biswift/network.hpp"
#include "biswift/perf_models.hpp"
#include "biswift/workload.hpp"

namespace biswift {

/// Backlog of the two GPU pipelines, in frames. Reuse runs inline on the CPU
/// and is never queued.
struct EdgeQueues {
  int q1_len = 0;
  int q2_len = 0;
  bool operator==(const EdgeQueues&) const = default;
};

/// Waiting time of a batch that joins `queues`: pipeline 1 is served before
/// pipeline 2, so anchors only wait behind anchors.
double queue_delay(const EdgeQueues& queues, int n1, int n2,
                   const ModelParams& params);

struct ServiceLog {
  int served1 = 0;
  int served2 = 0;
  int q1_left_when_q2_served = 0;  // must be 0 whenever served2 > 0
};

class EdgeServer {
 public:
  explicit EdgeServer(ModelParams params = {}) : params_(params) {}

  /// Queues a batch and returns the delay it sees.
  double enqueue(int n1, int n2);
  ServiceLog serve(double budget_s);

  const EdgeQueues& queues() const { return queues_; }
  void set_queues(EdgeQueues q) { queues_ = q; }

 private:
  ModelParams params_;
  EdgeQueues queues_;
};

/// Single-batch step: enqueue the arrivals, then serve one budget.
std::pair<EdgeQueues, double> step_queues(EdgeQueues queues,
                                          std::pair<int, int> arrivals,
                                          double service_budget_s,
                                          const ModelParams& params);

/// Decoder-side references carried across chunks of one stream.
struct ReferenceState {
  std::optional<int> frames_since_anchor;
  double residual_since_inference = 0.0;
  std::optional<double> last_inferred_accuracy;
};

/// Per-frame accuracies of an assigned chunk; advances `refs`.
std::vector<double> evaluate_frames(const Chunk& chunk,
                                    const Assignment& assignment, double base,
                                    int anchor_quality_factor,
                                    ReferenceState& refs,
                                    const ModelParams& params);

struct ChunkOutcome {
  std::vector<double> frame_accuracy;
  LatencyBreakdown latency;
  double mean_accuracy = 0.0;
  bool deadline_violated = false;

  int stream = 0;
  int chunk_index = 0;
  QualityConfig config;
  Thresholds thresholds;
  std::array<int, 3> counts{0, 0, 0};
  double share = 0.0;
  double cap_kbps = 0.0;
  double sent_bits = 0.0;
  double mean_residual = 0.0;
  double object_count = 0.0;
  double object_size = 0.0;
};

/// Everything needed to score one stream's chunk under a candidate
/// classification. Pointers are non-owning and must outlive the context.
struct StreamEvalContext {
  const StreamProfile* profile = nullptr;
  const Chunk* chunk = nullptr;
  const ModelParams* model = nullptr;
  const CodecParams* codec = nullptr;
  QualityConfig config;
  double cap_kbps = 0.0;
  double share = 0.0;
  double chunk_seconds = 1.0;
  double tau_s = 1.0;
  EdgeQueues queues;
  ClassifierState classifier;
  ReferenceState refs;
};

/// Scores an assignment without mutating anything. The queue delay defaults
/// to what the batch would see behind `ctx.queues`.
ChunkOutcome evaluate_assignment(const StreamEvalContext& ctx,
                                 const Assignment& assignment,
                                 std::optional<double> queue_delay_s = {});

/// Classifies with the given thresholds from the context's carried state and
/// scores the result.
ChunkOutcome evaluate_thresholds(const StreamEvalContext& ctx, Thresholds th);

struct WorldConfig {
  int frames_per_chunk = 30;
  double chunk_seconds = 1.0;
  double tau_s = 1.0;
  double gpu_budget_s = 1.0;
  int anchor_quality_factor = 60;
  std::uint64_t seed = 1;
  ModelParams model;
  CodecParams codec;
  GenOptions gen = [] {
    GenOptions g;
    g.motion_vectors = false;
    return g;
  }();
};

struct StreamState {
  ClassifierState classifier;
  ReferenceState refs;
  int level = 0;
  double prev_used_kbps = 0.0;
};

struct StepResult {
  int chunk_index = 0;
  double total_bw_kbps = 0.0;
  Allocation allocation;
  std::vector<ChunkOutcome> outcomes;
  ServiceLog service;
  EdgeQueues queues_after;
};

/// Multi-stream world advanced one chunk at a time on a shared clock.
class World {
 public:
  using ThresholdChooser =
      std::function<Thresholds(std::size_t stream, const StreamEvalContext&)>;

  World(WorldConfig config, std::vector<StreamProfile> profiles,
        BandwidthTrace trace);

  std::size_t num_streams() const { return profiles_.size(); }
  int chunk_index() const { return chunk_index_; }
  double now_s() const { return chunk_index_ * config_.chunk_seconds; }
  double total_bandwidth() const;

  const WorldConfig& config() const { return config_; }
  const StreamProfile& profile(std::size_t c) const { return profiles_[c]; }
  const StreamState& stream_state(std::size_t c) const { return states_[c]; }
  const Chunk& upcoming_chunk(std::size_t c) const { return upcoming_[c]; }
  const EdgeQueues& queues() const { return server_.queues(); }

  /// Config the quality controller would pick for this stream under `cap`.
  QualityConfig next_config(std::size_t c, double cap_kbps) const;
  StreamEvalContext context(std::size_t c, double cap_kbps,
                            const QualityConfig& config,
                            double share = 0.0) const;
  StreamEvalContext context(std::size_t c, const Allocation& allocation) const;

  StepResult step(const Allocation& allocation,
                  const ThresholdChooser& chooser);

 private:
  void generate_upcoming();

  WorldConfig config_;
  std::vector<StreamProfile> profiles_;
  BandwidthTrace trace_;
  EdgeServer server_;
  std::vector<StreamState> states_;
  std::vector<Chunk> upcoming_;
  int chunk_index_ = 0;
};

/// Runs one chunk with fixed per-stream thresholds.
StepResult run_chunk_step(World& world, const Allocation& allocation,
                          std::span<const Thresholds> thresholds);

}  // namespace biswift

#endif  // BISWIFT_EDGE_SIM_HPP_
