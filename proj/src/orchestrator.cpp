#include "biswift/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <string>

#include "biswift/error.hpp"
#include "rng.hpp"

namespace biswift {

// ---------------------------------------------------------------- rewards

RewardRecord low_reward(const ChunkOutcome& outcome, double alpha1,
                        double alpha2, double tau_s) {
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0))
    throw PreconditionError("low_reward: weights must be >= 0");
  if (!(tau_s > 0.0)) throw PreconditionError("low_reward: tau must be > 0");
  RewardRecord r;
  r.stream_id = outcome.stream;
  r.chunk_index = outcome.chunk_index;
  r.mean_accuracy = outcome.mean_accuracy;
  r.penalty = outcome.latency.total_s > tau_s ? 1 : 0;
  r.reward = alpha1 * outcome.mean_accuracy - alpha2 * r.penalty;
  r.latency = outcome.latency;
  return r;
}

RewardRecord low_reward(const ChunkOutcome& outcome, const RewardWeights& w) {
  return low_reward(outcome, w.alpha1, w.alpha2, w.tau_s);
}

double high_reward(std::span<const RewardRecord> records) {
  if (records.empty())
    throw PreconditionError("high_reward: no stream rewards");
  double m = records.front().reward;
  for (const auto& r : records) m = std::min(m, r.reward);
  return m;
}

Utility::Utility(std::size_t num_streams, double decay)
    : decay_(decay), values_(num_streams, 0.0) {
  if (!(decay >= 0.0 && decay < 1.0))
    throw PreconditionError("Utility: decay must be in [0, 1)");
}

void Utility::update(std::span<const RewardRecord> records) {
  if (records.size() != values_.size())
    throw PreconditionError("Utility::update: one record per stream required");
  for (std::size_t c = 0; c < values_.size(); ++c) {
    const double r = records[c].reward;
    values_[c] = initialized_ ? decay_ * values_[c] + (1.0 - decay_) * r : r;
  }
  initialized_ = true;
}

// ----------------------------------------------------------------- states

namespace {

double unit(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

int low_state_dim(int frames_per_chunk, int num_streams) {
  return kSignatureDim + frames_per_chunk + 2 + num_streams + 2;
}

Eigen::VectorXd build_low_state(const StreamEvalContext& ctx,
                                std::span<const double> shares,
                                const LowStateScales& scales) {
  const Chunk& chunk = *ctx.chunk;
  const int frames = static_cast<int>(chunk.frames.size());
  const int n = static_cast<int>(shares.size());
  Eigen::VectorXd s(low_state_dim(frames, n));
  if (chunk.key_frame_feature.size() != kSignatureDim)
    throw PreconditionError("build_low_state: key-frame feature size");
  int k = 0;
  for (int i = 0; i < kSignatureDim; ++i) s[k++] = unit(chunk.key_frame_feature[i]);
  double x = ctx.classifier.session_started ? ctx.classifier.x_acc : 0.0;
  for (const auto& frame : chunk.frames) {
    x += difference_increment(frame, *ctx.codec);
    s[k++] = unit(x / scales.x_max);
  }
  s[k++] = unit(ctx.config.bitrate_kbps / scales.bitrate_max_kbps);
  s[k++] = unit(height(ctx.config.resolution) / scales.height_max_px);
  for (double b : shares) s[k++] = unit(b);
  s[k++] = unit(ctx.queues.q1_len / scales.queue_max_frames);
  s[k++] = unit(ctx.queues.q2_len / scales.queue_max_frames);
  return s;
}

int high_state_dim(int num_streams) { return 6 * num_streams; }

Eigen::VectorXd HighState::to_vector(const HighStateScales& scales) const {
  const std::size_t n = num_streams();
  Eigen::VectorXd v(6 * static_cast<Eigen::Index>(n));
  const double log_span = -scales.log_size_min;
  for (std::size_t c = 0; c < n; ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    const auto N = static_cast<Eigen::Index>(n);
    v[2 * N + i] = unit(residual[c] / scales.residual_max);
    if (!has_history) {
      v[i] = v[N + i] = v[3 * N + i] = v[4 * N + i] = v[5 * N + i] =
          scales.neutral;
      continue;
    }
    v[i] = unit(num[c] / scales.count_max);
    v[N + i] = unit((std::log(std::max(size[c], 1e-12)) - scales.log_size_min) /
                    log_span);
    v[3 * N + i] = unit(last_share[c]);
    v[4 * N + i] = unit(accuracy[c]);
    v[5 * N + i] = unit(anchor_prop[c]);
  }
  return v;
}

HighState build_high_state(const World& world, const StepResult* last) {
  const std::size_t n = world.num_streams();
  HighState h;
  h.residual.resize(n);
  for (std::size_t c = 0; c < n; ++c)
    h.residual[c] = world.upcoming_chunk(c).mean_residual();
  if (last == nullptr) return h;
  if (last->outcomes.size() != n)
    throw PreconditionError("build_high_state: step does not match world");
  h.has_history = true;
  h.num.resize(n);
  h.size.resize(n);
  h.last_share = last->allocation.shares;
  h.accuracy.resize(n);
  h.anchor_prop.assign(n, 0.0);
  double anchors = 0.0;
  for (const auto& o : last->outcomes) anchors += o.counts[0];
  for (std::size_t c = 0; c < n; ++c) {
    const auto& o = last->outcomes[c];
    h.num[c] = o.object_count;
    h.size[c] = o.object_size;
    h.accuracy[c] = o.mean_accuracy;
    if (anchors > 0.0) h.anchor_prop[c] = o.counts[0] / anchors;
  }
  return h;
}

// ------------------------------------------------------------- allocators

Allocation even_alloc(std::size_t num_streams, double total_bw_kbps) {
  if (num_streams == 0) throw PreconditionError("even_alloc: no streams");
  return make_allocation(
      std::vector<double>(num_streams, 1.0 / static_cast<double>(num_streams)),
      total_bw_kbps);
}

std::vector<double> heuristic_shares(std::span<const double> difficulties) {
  if (difficulties.empty())
    throw PreconditionError("heuristic_shares: no streams");
  double sum = 0.0;
  for (double d : difficulties) {
    if (!(d >= 0.0) || !std::isfinite(d))
      throw PreconditionError("heuristic_shares: difficulty must be >= 0");
    sum += d;
  }
  const double n = static_cast<double>(difficulties.size());
  std::vector<double> out;
  for (double d : difficulties) out.push_back(sum > 0.0 ? d / sum : 1.0 / n);
  return out;
}

Allocation heuristic_alloc(const HighState& state, double total_bw_kbps,
                           const ModelParams& params) {
  const std::size_t n = state.num_streams();
  if (!state.has_history) return even_alloc(n, total_bw_kbps);
  std::vector<double> d(n);
  for (std::size_t c = 0; c < n; ++c)
    d[c] = std::max(difficulty(state.num[c], std::max(state.size[c], 1e-6),
                               params),
                    0.0);
  return make_allocation(heuristic_shares(d), total_bw_kbps);
}

Allocation allocation_from_action(const Eigen::VectorXd& action,
                                  double action_scale, double total_bw_kbps) {
  const Eigen::VectorXd logits = action * action_scale;
  return enforce_allocation(std::span<const double>(logits.data(), logits.size()),
                            total_bw_kbps);
}

// ---------------------------------------------------------------- oracles

AssignmentOracleResult exhaustive_assignment_oracle(
    const StreamEvalContext& ctx) {
  const int k = static_cast<int>(ctx.chunk->frames.size());
  if (k < 1 || k > kMaxOracleFrames)
    throw PreconditionError("exhaustive_assignment_oracle: " +
                            std::to_string(k) + " frames exceeds the limit of " +
                            std::to_string(kMaxOracleFrames));
  std::int64_t total = 1;
  for (int i = 0; i < k; ++i) total *= 3;

  AssignmentOracleResult res;
  res.evaluated = total;
  Assignment a;
  a.types.assign(k, FrameType::kAnchor);
  a.x.assign(k, 0.0);
  a.r.assign(k, 0.0);
  const bool forced = !ctx.classifier.session_started;
  for (std::int64_t code = 0; code < total; ++code) {
    std::int64_t rest = code;
    for (int f = k - 1; f >= 0; --f) {
      a.types[f] = static_cast<FrameType>(1 + rest % 3);
      rest /= 3;
    }
    if (forced && a.types[0] != FrameType::kAnchor) continue;
    ChunkOutcome o;
    try {
      o = evaluate_assignment(ctx, a);
    } catch (const MissingReference&) {
      continue;
    }
    if (o.deadline_violated) continue;
    if (!res.feasible || o.mean_accuracy > res.best_mean_accuracy) {
      res.feasible = true;
      res.best = a;
      res.best_mean_accuracy = o.mean_accuracy;
    }
  }
  return res;
}

ThresholdOracleResult threshold_grid_oracle(const StreamEvalContext& ctx,
                                            const ThresholdGrid& grid,
                                            const RewardWeights& weights) {
  if (grid.size() <= 0)
    throw PreconditionError("threshold_grid_oracle: empty grid");
  ThresholdOracleResult res;
  for (int i = 0; i < grid.size(); ++i) {
    const auto [tr1, tr2] = grid.at(i);
    ChunkOutcome o = evaluate_thresholds(ctx, {tr1, tr2});
    const double r = low_reward(o, weights).reward;
    ++res.evaluated;
    if (i == 0 || r > res.reward) {
      res.index = i;
      res.best = {tr1, tr2};
      res.reward = r;
      res.outcome = std::move(o);
    }
  }
  return res;
}

std::vector<std::vector<int>> interior_simplex_grid(std::size_t parts, int xi) {
  std::vector<std::vector<int>> out;
  if (parts == 0 || xi < static_cast<int>(parts)) return out;
  std::vector<int> m(parts, 1);
  // Recursive fill of parts 0..n-2; the last part takes the remainder.
  std::function<void(std::size_t, int)> fill = [&](std::size_t i, int left) {
    if (i + 1 == parts) {
      m[i] = left;
      out.push_back(m);
      return;
    }
    const int reserve = static_cast<int>(parts - i - 1);
    for (int v = 1; v <= left - reserve; ++v) {
      m[i] = v;
      fill(i + 1, left - v);
    }
  };
  fill(0, xi);
  return out;
}

AllocationOracleResult allocation_oracle(const World& world, int xi,
                                         const ThresholdGrid& grid,
                                         const RewardWeights& weights) {
  const std::size_t n = world.num_streams();
  if (n > kMaxOracleStreams)
    throw PreconditionError("allocation_oracle: " + std::to_string(n) +
                            " streams exceeds the limit of " +
                            std::to_string(kMaxOracleStreams));
  if (xi < static_cast<int>(n) || xi > kMaxOracleLevels)
    throw PreconditionError("allocation_oracle: levels must be in [" +
                            std::to_string(n) + ", " +
                            std::to_string(kMaxOracleLevels) + "]");
  const double bw = world.total_bandwidth();
  const auto& wc = world.config();

  // A stream's best reward depends only on its own share, so each
  // (stream, share) pair is solved once.
  std::map<std::pair<std::size_t, int>, ThresholdOracleResult> cache;
  auto solve = [&](std::size_t c, int m) -> const ThresholdOracleResult& {
    auto it = cache.find({c, m});
    if (it != cache.end()) return it->second;
    const double share = static_cast<double>(m) / xi;
    const double cap = share * bw;
    const QualityConfig config = quality_level(
        settled_level(cap, wc.codec.up_margin), wc.anchor_quality_factor);
    const auto ctx = world.context(c, cap, config, share);
    return cache.emplace(std::make_pair(c, m),
                         threshold_grid_oracle(ctx, grid, weights))
        .first->second;
  };

  AllocationOracleResult res;
  bool first = true;
  for (const auto& m : interior_simplex_grid(n, xi)) {
    ++res.evaluated;
    double worst = 0.0;
    std::vector<double> rewards(n);
    std::vector<Thresholds> th(n);
    for (std::size_t c = 0; c < n; ++c) {
      const auto& r = solve(c, m[c]);
      rewards[c] = r.reward;
      th[c] = r.best;
      worst = c == 0 ? r.reward : std::min(worst, r.reward);
    }
    if (first || worst > res.max_min_reward) {
      first = false;
      std::vector<double> shares(n);
      for (std::size_t c = 0; c < n; ++c)
        shares[c] = static_cast<double>(m[c]) / xi;
      res.best = make_allocation(shares, bw);
      res.max_min_reward = worst;
      res.stream_rewards = rewards;
      res.thresholds = th;
    }
  }
  return res;
}

// --------------------------------------------------------------- sessions

const char* to_string(AllocatorKind kind) {
  switch (kind) {
    case AllocatorKind::kEven: return "even";
    case AllocatorKind::kHeuristic: return "heuristic";
    case AllocatorKind::kLearned: return "learned";
    case AllocatorKind::kOracle: return "oracle";
  }
  return "?";
}

const char* to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kLearned: return "learned";
    case ClassifierKind::kGridOracle: return "grid_oracle";
    case ClassifierKind::kFixed: return "fixed";
  }
  return "?";
}

AllocatorKind allocator_from_string(const std::string& name) {
  for (auto k : {AllocatorKind::kEven, AllocatorKind::kHeuristic,
                 AllocatorKind::kLearned, AllocatorKind::kOracle})
    if (name == to_string(k)) return k;
  throw ValidationError("unknown allocator '" + name +
                        "' (expected even, heuristic, learned or oracle)");
}

ClassifierKind classifier_from_string(const std::string& name) {
  for (auto k : {ClassifierKind::kLearned, ClassifierKind::kGridOracle,
                 ClassifierKind::kFixed})
    if (name == to_string(k)) return k;
  throw ValidationError("unknown classifier '" + name +
                        "' (expected learned, grid_oracle or fixed)");
}

Agents make_agents(std::size_t num_streams, int frames_per_chunk,
                   const ThresholdGrid& grid, const AgentOptions& options,
                   std::uint64_t seed) {
  if (num_streams == 0) throw PreconditionError("make_agents: no streams");
  Agents agents;
  agents.action_scale = options.action_scale;
  const int n = static_cast<int>(num_streams);
  for (std::size_t c = 0; c < num_streams; ++c) {
    rl::LowAgentConfig lc;
    lc.state_dim = low_state_dim(frames_per_chunk, n);
    lc.grid = grid;
    lc.hidden = options.low_hidden;
    lc.gamma = options.low_gamma;
    lc.lr_actor = options.low_lr_actor;
    lc.lr_critic = options.low_lr_critic;
    lc.entropy_coef = options.low_entropy_coef;
    lc.normalize_advantage = options.low_normalize_advantage;
    lc.seed = detail::make_engine(seed, 1u, c)();
    agents.low.emplace_back(lc);
  }
  rl::SacConfig hc = options.high;
  hc.state_dim = high_state_dim(n);
  hc.action_dim = n;
  hc.seed = detail::make_engine(seed, 2u)();
  agents.high.emplace(hc);
  return agents;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot read checkpoint " + p.string());
  return in;
}

std::filesystem::path low_path(const std::filesystem::path& dir,
                               std::size_t c) {
  return dir / ("low_" + std::to_string(c) + ".ckpt");
}

}  // namespace

namespace {

void write_meta(const Agents& agents, const std::filesystem::path& dir,
                const char* kind) {
  std::filesystem::create_directories(dir);
  auto out = open_out(dir / "agents.meta");
  out << "agents v1 " << agents.low.size() << ' ' << (agents.high ? 1 : 0)
      << ' ';
  rl::io::write_scalar(out, agents.action_scale);
  out << ' ' << agents.epochs_trained << ' ' << kind << '\n';
}

}  // namespace

void save_agents(const Agents& agents, const std::filesystem::path& dir) {
  write_meta(agents, dir, "full");
  for (std::size_t c = 0; c < agents.low.size(); ++c) {
    auto out = open_out(low_path(dir, c));
    agents.low[c].save(out);
  }
  if (agents.high) {
    auto out = open_out(dir / "high.ckpt");
    agents.high->save(out);
  }
}

void export_policies(const Agents& agents, const std::filesystem::path& dir) {
  write_meta(agents, dir, "policy");
  for (std::size_t c = 0; c < agents.low.size(); ++c) {
    auto out = open_out(low_path(dir, c));
    agents.low[c].save_policy(out);
  }
  if (agents.high) {
    auto out = open_out(dir / "high.ckpt");
    agents.high->save_policy(out);
  }
}

namespace {

struct Meta {
  std::size_t streams = 0;
  bool has_high = false;
  double action_scale = 0.0;
  int epochs_trained = 0;
  bool policy_only = false;
};

Meta read_meta(const std::filesystem::path& dir) {
  auto in = open_in(dir / "agents.meta");
  rl::io::expect_token(in, "agents");
  rl::io::expect_token(in, "v1");
  Meta m;
  m.streams = rl::io::read_int<std::size_t>(in);
  m.has_high = rl::io::read_int<int>(in) != 0;
  m.action_scale = rl::io::read_scalar<double>(in);
  m.epochs_trained = rl::io::read_int<int>(in);
  std::string kind;
  in >> kind;
  if (kind != "full" && kind != "policy")
    throw ValidationError("checkpoint " + dir.string() + ": unknown kind '" +
                          kind + "'");
  m.policy_only = kind == "policy";
  return m;
}

}  // namespace

bool is_policy_export(const std::filesystem::path& dir) {
  return read_meta(dir).policy_only;
}

void load_agents(Agents& agents, const std::filesystem::path& dir) {
  const Meta meta = read_meta(dir);
  if (meta.streams != agents.low.size() ||
      meta.has_high != agents.high.has_value())
    throw ValidationError("checkpoint " + dir.string() +
                          ": stream count does not match the scenario");
  for (std::size_t c = 0; c < meta.streams; ++c) {
    auto in = open_in(low_path(dir, c));
    if (meta.policy_only)
      agents.low[c].load_policy(in);
    else
      agents.low[c].load(in);
  }
  if (meta.has_high) {
    auto in = open_in(dir / "high.ckpt");
    if (meta.policy_only)
      agents.high->load_policy(in);
    else
      agents.high->load(in);
  }
  agents.action_scale = meta.action_scale;
  agents.epochs_trained = meta.epochs_trained;
}

namespace {

// Shares decided at control steps and held between them.
class AllocationPolicy {
 public:
  AllocationPolicy(const SessionConfig& cfg, const Agents* agents)
      : cfg_(cfg), agents_(agents) {
    if (cfg.allocator == AllocatorKind::kLearned &&
        (agents == nullptr || !agents->high))
      throw PreconditionError("learned allocator needs a trained controller");
  }

  Allocation decide(const World& world, const StepResult* last) {
    const double bw = world.total_bandwidth();
    switch (cfg_.allocator) {
      case AllocatorKind::kEven:
        return even_alloc(world.num_streams(), bw);
      case AllocatorKind::kHeuristic:
        return heuristic_alloc(build_high_state(world, last), bw,
                               world.config().model);
      case AllocatorKind::kLearned: {
        const Eigen::VectorXd s =
            build_high_state(world, last).to_vector(cfg_.high_scales);
        return allocation_from_action(agents_->high->select_eval(s),
                                      agents_->action_scale, bw);
      }
      case AllocatorKind::kOracle:
        return allocation_oracle(world, cfg_.oracle_levels, cfg_.grid,
                                 cfg_.weights)
            .best;
    }
    throw PreconditionError("unknown allocator");
  }

 private:
  const SessionConfig& cfg_;
  const Agents* agents_;
};

}  // namespace

std::vector<SessionStep> run_session(World& world, const SessionConfig& cfg,
                                     const Agents* agents) {
  if (cfg.chunks < 0 || cfg.control_interval < 1)
    throw PreconditionError("run_session: bad horizon or control interval");
  if (cfg.classifier == ClassifierKind::kLearned &&
      (agents == nullptr || agents->low.size() != world.num_streams()))
    throw PreconditionError("learned classifier needs one agent per stream");
  AllocationPolicy policy(cfg, agents);
  std::vector<SessionStep> out;
  out.reserve(static_cast<std::size_t>(cfg.chunks));
  std::vector<double> shares;
  for (int t = 0; t < cfg.chunks; ++t) {
    const StepResult* last = out.empty() ? nullptr : &out.back().step;
    Allocation alloc;
    if (t % cfg.control_interval == 0) {
      alloc = policy.decide(world, last);
      shares = alloc.shares;
    } else {
      alloc = make_allocation(shares, world.total_bandwidth());
    }
    auto chooser = [&](std::size_t c, const StreamEvalContext& ctx) {
      switch (cfg.classifier) {
        case ClassifierKind::kLearned: {
          const auto s = build_low_state(ctx, alloc.shares, cfg.low_scales);
          const auto a = agents->low[c].select_greedy(s);
          return Thresholds{a.tr1, a.tr2};
        }
        case ClassifierKind::kGridOracle:
          return threshold_grid_oracle(ctx, cfg.grid, cfg.weights).best;
        case ClassifierKind::kFixed:
          return cfg.fixed;
      }
      return cfg.fixed;
    };
    SessionStep s;
    s.step = world.step(alloc, chooser);
    for (const auto& o : s.step.outcomes)
      s.rewards.push_back(low_reward(o, cfg.weights));
    out.push_back(std::move(s));
  }
  return out;
}

double nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) throw PreconditionError("nearest_rank: no values");
  if (!(q > 0.0 && q <= 100.0))
    throw PreconditionError("nearest_rank: percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * n - 1e-12));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

FairnessMetrics fairness_metrics(std::span<const RewardRecord> history) {
  if (history.empty())
    throw PreconditionError("fairness_metrics: empty history");
  std::map<int, std::pair<double, int>> per_stream;
  std::vector<double> all;
  all.reserve(history.size());
  double total = 0.0;
  for (const auto& r : history) {
    all.push_back(r.mean_accuracy);
    total += r.mean_accuracy;
    auto& [sum, count] = per_stream[r.stream_id];
    sum += r.mean_accuracy;
    ++count;
  }
  std::vector<double> means;
  for (const auto& [id, sc] : per_stream) means.push_back(sc.first / sc.second);
  FairnessMetrics m;
  m.mean_accuracy = total / static_cast<double>(history.size());
  m.min_accuracy = *std::min_element(means.begin(), means.end());
  m.p50 = nearest_rank(all, 50.0);
  m.p75 = nearest_rank(all, 75.0);
  m.spread = nearest_rank(means, 75.0) - nearest_rank(means, 50.0);
  return m;
}

// --------------------------------------------------------------- training

namespace {

bool finite(double v) { return std::isfinite(v); }

}  // namespace

double validation_reward(const Agents& agents, const WorldFactory& make_world,
                         std::span<const std::uint64_t> seeds,
                         const SessionConfig& session) {
  if (seeds.empty()) throw PreconditionError("validation_reward: no seeds");
  double total = 0.0;
  std::int64_t chunks = 0;
  for (const std::uint64_t seed : seeds) {
    World world = make_world(seed);
    for (const auto& s : run_session(world, session, &agents)) {
      total += high_reward(s.rewards);
      ++chunks;
    }
  }
  return chunks > 0 ? total / static_cast<double>(chunks) : 0.0;
}

TrainResult joint_train(const WorldFactory& make_world, Agents& agents,
                        const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.episodes_per_epoch < 1 ||
      cfg.chunks_per_episode < 1 || cfg.control_interval < 1 ||
      cfg.low_update_every < 1)
    throw PreconditionError("joint_train: invalid schedule");
  if (cfg.train_high && !agents.high)
    throw PreconditionError("joint_train: no controller to train");

  TrainResult result;
  auto act_rng = detail::make_engine(cfg.seed, 10u);
  auto update_rng = detail::make_engine(cfg.seed, 11u);
  rl::ReplayBuffer<double> buffer(cfg.replay_capacity);
  std::uniform_real_distribution<double> explore(-1.0, 1.0);

  if (cfg.log)
    *cfg.log << "# schema=1\nepoch,episode,chunk,stream,reward,r_high,"
                "actor_loss,critic_loss,q_loss,value_loss,policy_loss\n";

  rl::LowLosses last_low;
  rl::SacLosses last_high;
  std::optional<Agents> best;
  double best_score = 0.0;
  int episode_counter = agents.epochs_trained * cfg.episodes_per_epoch;

  for (int i = 0; i < cfg.epochs; ++i) {
    const int epoch = agents.epochs_trained;
    double epoch_high = 0.0;
    int epoch_chunks = 0;
    for (int ep = 0; ep < cfg.episodes_per_epoch; ++ep, ++episode_counter) {
      World world =
          make_world(detail::make_engine(cfg.seed, 20u, episode_counter)());
      const std::size_t n = world.num_streams();
      const bool learned_low = cfg.classifier == ClassifierKind::kLearned;
      if (learned_low && agents.low.size() != n)
        throw PreconditionError("joint_train: one low agent per stream required");
      if (agents.high && agents.high->action_dim() != static_cast<int>(n))
        throw PreconditionError("joint_train: controller/world size mismatch");

      std::vector<rl::LowTrajectory<double>> traj(n);
      std::optional<StepResult> last;
      std::vector<double> shares;
      Eigen::VectorXd high_s, high_a;
      bool pending = false;
      double interval_sum = 0.0;
      int interval_len = 0;

      auto flush_high = [&](const Eigen::VectorXd& next_state) {
        if (!pending) return;
        rl::Transition<double> tr;
        tr.state = high_s;
        tr.action = high_a;
        tr.reward = cfg.high_reward_scale * interval_sum / interval_len;
        tr.next_state = next_state;
        tr.done = false;
        buffer.push(std::move(tr));
        for (int u = 0; u < cfg.high_updates_per_transition; ++u) {
          auto l = agents.high->update(buffer, update_rng);
          if (l.updated) {
            if (!finite(l.q1) || !finite(l.q2) || !finite(l.value) ||
                !finite(l.policy))
              throw DivergenceError("joint_train: controller loss diverged");
            last_high = l;
            ++result.high_updates;
          }
        }
        pending = false;
        interval_sum = 0.0;
        interval_len = 0;
      };

      for (int t = 0; t < cfg.chunks_per_episode; ++t) {
        const double bw = world.total_bandwidth();
        Allocation alloc;
        if (t % cfg.control_interval == 0) {
          const HighState hs = build_high_state(world, last ? &*last : nullptr);
          if (cfg.train_high) {
            const Eigen::VectorXd s = hs.to_vector(cfg.high_scales);
            flush_high(s);
            Eigen::VectorXd a(static_cast<Eigen::Index>(n));
            if (buffer.total_pushed() < cfg.warmup_transitions) {
              for (auto& v : a) v = explore(act_rng);
            } else {
              a = agents.high->select_action(s, act_rng, false);
            }
            high_s = s;
            high_a = a;
            pending = true;
            alloc = allocation_from_action(a, agents.action_scale, bw);
          } else if (cfg.fallback_allocator == AllocatorKind::kHeuristic) {
            alloc = heuristic_alloc(hs, bw, world.config().model);
          } else if (cfg.fallback_allocator == AllocatorKind::kLearned &&
                     agents.high) {
            alloc = allocation_from_action(
                agents.high->select_eval(hs.to_vector(cfg.high_scales)),
                agents.action_scale, bw);
          } else {
            alloc = even_alloc(n, bw);
          }
          shares = alloc.shares;
        } else {
          alloc = make_allocation(shares, bw);
        }

        auto chooser = [&](std::size_t c, const StreamEvalContext& ctx) {
          if (learned_low) {
            auto s = build_low_state(ctx, alloc.shares, cfg.low_scales);
            const auto a = cfg.train_low
                               ? agents.low[c].select_action(s, act_rng, false)
                               : agents.low[c].select_greedy(s);
            traj[c].states.push_back(std::move(s));
            traj[c].actions.push_back(a.index);
            return Thresholds{a.tr1, a.tr2};
          }
          if (cfg.classifier == ClassifierKind::kFixed) return cfg.fixed;
          return threshold_grid_oracle(ctx, cfg.grid, cfg.weights).best;
        };
        StepResult step = world.step(alloc, chooser);
        std::vector<RewardRecord> rewards;
        for (const auto& o : step.outcomes)
          rewards.push_back(low_reward(o, cfg.weights));
        const double r_high = high_reward(rewards);
        interval_sum += r_high;
        ++interval_len;
        epoch_high += r_high;
        ++epoch_chunks;

        if (learned_low && cfg.train_low) {
          const bool end = t + 1 == cfg.chunks_per_episode;
          for (std::size_t c = 0; c < n; ++c) {
            traj[c].rewards.push_back(rewards[c].reward);
            if (static_cast<int>(traj[c].rewards.size()) < cfg.low_update_every &&
                !end)
              continue;
            // Bootstrap from the next chunk seen under the held shares.
            const auto next_alloc = make_allocation(shares, world.total_bandwidth());
            const auto next_ctx = world.context(c, next_alloc);
            traj[c].bootstrap = agents.low[c].state_value(
                build_low_state(next_ctx, next_alloc.shares, cfg.low_scales));
            last_low = agents.low[c].update(traj[c]);
            if (!finite(last_low.actor) || !finite(last_low.critic))
              throw DivergenceError("joint_train: low-level loss diverged");
            ++result.low_updates;
            traj[c] = {};
          }
        } else if (learned_low) {
          for (auto& tr : traj) tr = {};
        }

        if (cfg.log) {
          for (std::size_t c = 0; c < n; ++c) {
            *cfg.log << epoch << ',' << ep << ',' << step.chunk_index << ','
                     << c << ',' << rewards[c].reward << ',' << r_high << ','
                     << last_low.actor << ',' << last_low.critic << ','
                     << 0.5 * (last_high.q1 + last_high.q2) << ','
                     << last_high.value << ',' << last_high.policy << '\n';
            ++result.log_rows;
          }
        }
        last = std::move(step);
      }
      if (cfg.train_high && pending)
        flush_high(build_high_state(world, last ? &*last : nullptr)
                       .to_vector(cfg.high_scales));
    }
    result.epoch_mean_high_reward.push_back(
        epoch_chunks > 0 ? epoch_high / epoch_chunks : 0.0);
    ++result.epochs_completed;
    ++agents.epochs_trained;
    if (cfg.validate) {
      const double score = cfg.validate(agents);
      if (!finite(score))
        throw DivergenceError("joint_train: validation score is not finite");
      result.validation_scores.push_back(score);
      if (!best || score > best_score) {
        best = agents;
        best_score = score;
        result.best_epoch = i;
      }
    }
    if (cfg.checkpoint_dir) {
      save_agents(agents, *cfg.checkpoint_dir /
                              ("epoch_" + std::to_string(epoch + 1)));
      save_agents(agents, *cfg.checkpoint_dir);
    }
    if (cfg.on_epoch) cfg.on_epoch(epoch, result.epoch_mean_high_reward.back());
  }
  if (best) {
    const int total = agents.epochs_trained;
    agents = std::move(*best);
    agents.epochs_trained = total;
    if (cfg.checkpoint_dir) save_agents(agents, *cfg.checkpoint_dir);
  }
  return result;
}

}  // namespace biswift
