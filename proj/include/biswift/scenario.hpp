#ifndef BISWIFT_SCENARIO_HPP_
#define BISWIFT_SCENARIO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "biswift/edge_sim.hpp"
#include "biswift/orchestrator.hpp"
#include "biswift/workload.hpp"

namespace biswift {

struct StreamSpec {
  Difficulty difficulty = Difficulty::kEasy;
  std::uint64_t profile_seed = 1;
  std::optional<ProfileParams> custom;
};

struct TrainingSpec {
  int epochs = 10;
  int episodes_per_epoch = 5;
  int chunks_per_episode = 100;
  int low_update_every = 10;
  double high_reward_scale = 10.0;
  int high_updates_per_transition = 2;
  std::size_t warmup_transitions = 128;
  std::size_t replay_capacity = 10000;
  // Unset means "whatever the scenario's classifier/allocator make learnable".
  std::optional<bool> train_low;
  std::optional<bool> train_high;
  // Best epoch by mean worst-stream reward on held-out seeds; 0 disables.
  int validation_seeds = 3;
  int validation_chunks = 100;
};

/// A fully validated experiment description. Relative paths in the source
/// document are resolved against the document's directory.
struct Scenario {
  std::string name;
  std::vector<StreamSpec> streams;
  std::optional<std::filesystem::path> trace_path;
  std::optional<double> constant_bw_kbps;
  BandwidthTrace trace = BandwidthTrace::constant(1.0);
  WorldConfig world;
  RewardWeights weights;
  int chunks = 500;
  int control_interval = 10;
  int oracle_levels = 10;
  AllocatorKind allocator = AllocatorKind::kEven;
  ClassifierKind classifier = ClassifierKind::kGridOracle;
  Thresholds fixed{1.0, 0.3};
  std::optional<std::filesystem::path> checkpoint;
  AgentOptions agents;
  TrainingSpec training;
  std::uint64_t seed = 1;

  std::size_t num_streams() const { return streams.size(); }
  std::vector<StreamProfile> profiles() const;
};

/// Parses and validates a JSON document. Errors are ValidationError with the
/// offending field path, e.g. "streams[1].difficulty".
Scenario parse_scenario(const std::string& json_text,
                        const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

/// The simulated world for one replicate; `seed` drives all content noise.
World make_world(const Scenario& scenario, std::uint64_t seed);

SessionConfig session_config(const Scenario& scenario);
TrainConfig train_config(const Scenario& scenario, int epochs,
                         std::uint64_t seed);

}  // namespace biswift

#endif  // BISWIFT_SCENARIO_HPP_
