#ifndef BISWIFT_ORCHESTRATOR_HPP_
#define BISWIFT_ORCHESTRATOR_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "biswift/edge_sim.hpp"
#include "biswift/network.hpp"
#include "biswift/rl/low_agent.hpp"
#include "biswift/rl/sac.hpp"
#include "biswift/threshold_grid.hpp"

namespace biswift {

struct RewardWeights {
  double alpha1 = 0.5;  // accuracy weight
  double alpha2 = 0.5;  // deadline penalty weight
  double tau_s = 1.0;
};

struct RewardRecord {
  int stream_id = 0;
  int chunk_index = 0;
  double mean_accuracy = 0.0;
  int penalty = 0;
  double reward = 0.0;
  LatencyBreakdown latency;
};

RewardRecord low_reward(const ChunkOutcome& outcome, double alpha1,
                        double alpha2, double tau_s);
RewardRecord low_reward(const ChunkOutcome& outcome, const RewardWeights& w);

/// Worst stream's reward. Throws PreconditionError on an empty set.
double high_reward(std::span<const RewardRecord> records);

/// Per-stream exponential moving average of rewards.
class Utility {
 public:
  explicit Utility(std::size_t num_streams, double decay = 0.9);
  void update(std::span<const RewardRecord> records);
  const std::vector<double>& values() const { return values_; }
  bool initialized() const { return initialized_; }

 private:
  double decay_;
  std::vector<double> values_;
  bool initialized_ = false;
};

// ---------------------------------------------------------------- states

struct LowStateScales {
  double x_max = 3.0;  // cumulative difference feature mapped to 1
  double bitrate_max_kbps = 5000.0;
  double height_max_px = 1080.0;
  double queue_max_frames = 60.0;
};

int low_state_dim(int frames_per_chunk, int num_streams);

/// Content signature, the cumulative difference feature per frame (starting
/// from the classifier's carried value), quality, every stream's share and
/// the two queue lengths, all in [0, 1].
Eigen::VectorXd build_low_state(const StreamEvalContext& ctx,
                                std::span<const double> shares,
                                const LowStateScales& scales = {});

struct HighStateScales {
  double count_max = 50.0;
  double log_size_min = -7.0;  // ln of the smallest object area mapped to 0
  double residual_max = 0.1;
  double neutral = 0.5;
};

/// Raw per-stream observations for the controller. Fields other than
/// `residual` come from the previous chunk and are absent on a cold start.
struct HighState {
  bool has_history = false;
  std::vector<double> num;
  std::vector<double> size;
  std::vector<double> residual;
  std::vector<double> last_share;
  std::vector<double> accuracy;
  std::vector<double> anchor_prop;

  std::size_t num_streams() const { return residual.size(); }
  Eigen::VectorXd to_vector(const HighStateScales& scales = {}) const;
};

int high_state_dim(int num_streams);

/// `last` is the most recent step (nullptr on a cold start).
HighState build_high_state(const World& world, const StepResult* last);

// ------------------------------------------------------------ allocators

Allocation even_alloc(std::size_t num_streams, double total_bw_kbps);

/// Shares proportional to the given difficulties.
std::vector<double> heuristic_shares(std::span<const double> difficulties);

/// Difficulty-proportional shares from the observed object statistics; even
/// on a cold start.
Allocation heuristic_alloc(const HighState& state, double total_bw_kbps,
                           const ModelParams& params = {});

/// Controller output in (-1, 1)^N scaled into logits, then softmaxed.
Allocation allocation_from_action(const Eigen::VectorXd& action,
                                  double action_scale, double total_bw_kbps);

// --------------------------------------------------------------- oracles

inline constexpr int kMaxOracleFrames = 12;

struct AssignmentOracleResult {
  bool feasible = false;
  Assignment best;
  double best_mean_accuracy = 0.0;
  std::int64_t evaluated = 0;  // assignments enumerated, 3^k
};

/// Enumerates every type sequence for the context's chunk (k <= 12 frames),
/// keeps those honoring the forced first anchor and the deadline, and returns
/// the most accurate. Ties keep the lexicographically first sequence.
AssignmentOracleResult exhaustive_assignment_oracle(const StreamEvalContext& ctx);

struct ThresholdOracleResult {
  int index = 0;
  Thresholds best;
  double reward = 0.0;
  ChunkOutcome outcome;
  int evaluated = 0;
};

/// Best grid pair by low-level reward; ties go to the smallest index.
ThresholdOracleResult threshold_grid_oracle(const StreamEvalContext& ctx,
                                            const ThresholdGrid& grid,
                                            const RewardWeights& weights);

inline constexpr std::size_t kMaxOracleStreams = 3;
inline constexpr int kMaxOracleLevels = 10;

/// Share vectors with every share a positive multiple of 1/xi.
std::vector<std::vector<int>> interior_simplex_grid(std::size_t parts, int xi);

struct AllocationOracleResult {
  Allocation best;
  double max_min_reward = 0.0;
  std::vector<double> stream_rewards;
  std::vector<Thresholds> thresholds;
  int evaluated = 0;
};

/// Brute-force max-min allocation over the interior simplex grid. Each
/// stream is scored at the quality level its cap settles to, against the
/// current queue snapshot, with its best grid thresholds.
AllocationOracleResult allocation_oracle(const World& world, int xi,
                                         const ThresholdGrid& grid,
                                         const RewardWeights& weights);

// ------------------------------------------------------------- sessions

enum class AllocatorKind { kEven, kHeuristic, kLearned, kOracle };
enum class ClassifierKind { kLearned, kGridOracle, kFixed };

const char* to_string(AllocatorKind kind);
const char* to_string(ClassifierKind kind);
AllocatorKind allocator_from_string(const std::string& name);
ClassifierKind classifier_from_string(const std::string& name);

struct AgentOptions {
  std::vector<int> low_hidden{128, 128};
  double low_gamma = 0.9;
  double low_lr_actor = 0.005;
  double low_lr_critic = 0.01;
  double low_entropy_coef = 0.05;
  bool low_normalize_advantage = true;
  rl::SacConfig high;  // dimensions are filled in by make_agents
  double action_scale = 2.0;
};

/// One low agent per stream plus the bandwidth controller.
struct Agents {
  std::vector<rl::LowAgent<double>> low;
  std::optional<rl::HighController<double>> high;
  double action_scale = 2.0;
  // Completed training epochs; resumed training continues from here.
  int epochs_trained = 0;
};

Agents make_agents(std::size_t num_streams, int frames_per_chunk,
                   const ThresholdGrid& grid, const AgentOptions& options,
                   std::uint64_t seed);

/// Full training state (networks, targets, optimizer moments).
void save_agents(const Agents& agents, const std::filesystem::path& dir);
/// Acting networks only, single precision. Cannot be resumed from.
void export_policies(const Agents& agents, const std::filesystem::path& dir);
/// Reads either kind; `is_policy_export` tells which is on disk.
void load_agents(Agents& agents, const std::filesystem::path& dir);
bool is_policy_export(const std::filesystem::path& dir);

struct SessionConfig {
  AllocatorKind allocator = AllocatorKind::kEven;
  ClassifierKind classifier = ClassifierKind::kFixed;
  Thresholds fixed{1.0, 0.3};
  int chunks = 100;
  int control_interval = 10;
  int oracle_levels = 10;
  RewardWeights weights;
  ThresholdGrid grid;
  LowStateScales low_scales;
  HighStateScales high_scales;
};

struct SessionStep {
  StepResult step;
  std::vector<RewardRecord> rewards;
};

/// Rolls `world` forward with frozen policies. Allocation decisions are made
/// every `control_interval` chunks and held in between (as shares).
std::vector<SessionStep> run_session(World& world, const SessionConfig& config,
                                     const Agents* agents);

struct FairnessMetrics {
  double mean_accuracy = 0.0;
  double min_accuracy = 0.0;  // worst stream's mean
  double p50 = 0.0;
  double p75 = 0.0;
  double spread = 0.0;  // p75 - p50 of the stream means
};

/// Nearest-rank percentile (q in (0, 100]) of unsorted values.
double nearest_rank(std::vector<double> values, double q);

FairnessMetrics fairness_metrics(std::span<const RewardRecord> history);

// -------------------------------------------------------------- training

struct TrainConfig {
  int epochs = 1;
  int episodes_per_epoch = 1;
  int chunks_per_episode = 100;
  int control_interval = 10;
  RewardWeights weights;
  ThresholdGrid grid;
  LowStateScales low_scales;
  HighStateScales high_scales;
  bool train_low = true;
  bool train_high = true;
  // Classifier used while training the controller alone.
  ClassifierKind classifier = ClassifierKind::kLearned;
  Thresholds fixed{1.0, 0.3};
  AllocatorKind fallback_allocator = AllocatorKind::kEven;
  int low_update_every = 10;
  double high_reward_scale = 1.0;
  int high_updates_per_transition = 1;
  std::size_t replay_capacity = 10000;
  std::size_t warmup_transitions = 128;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> checkpoint_dir;
  std::ostream* log = nullptr;  // training CSV
  std::function<void(int epoch, double mean_high_reward)> on_epoch;
  // Scored after every epoch (higher is better). When set, the best-scoring
  // agents are restored at the end and written as the final checkpoint.
  std::function<double(const Agents&)> validate;
};

struct TrainResult {
  int epochs_completed = 0;
  std::int64_t log_rows = 0;
  std::int64_t low_updates = 0;
  std::int64_t high_updates = 0;
  std::vector<double> epoch_mean_high_reward;
  std::vector<double> validation_scores;
  int best_epoch = -1;  // index into this run's epochs; -1 without validation
};

using WorldFactory = std::function<World(std::uint64_t episode_seed)>;

/// Mean worst-stream reward of frozen agents over one session per seed.
double validation_reward(const Agents& agents, const WorldFactory& make_world,
                         std::span<const std::uint64_t> seeds,
                         const SessionConfig& session);

/// Alternating schedule: each episode rolls a fresh world; the low agents
/// learn on-policy from per-chunk rewards, the controller acts every
/// `control_interval` chunks, stores transitions rewarded by the mean worst
/// stream reward over the interval, and learns off-policy from replay.
/// Throws DivergenceError when a loss or parameter turns non-finite.
TrainResult joint_train(const WorldFactory& make_world, Agents& agents,
                        const TrainConfig& config);

}  // namespace biswift

#endif  // BISWIFT_ORCHESTRATOR_HPP_
