#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"

#include "biswift/error.hpp"
#include "biswift/orchestrator.hpp"
#include "biswift/scenario.hpp"

using namespace biswift;
namespace fs = std::filesystem;

namespace {

ChunkOutcome outcome(double acc, double total_s, int stream = 0) {
  ChunkOutcome o;
  o.mean_accuracy = acc;
  o.latency.total_s = total_s;
  o.latency.trans_s = total_s;
  o.stream = stream;
  return o;
}

RewardRecord record(int stream, double acc, double reward = 0.0) {
  RewardRecord r;
  r.stream_id = stream;
  r.mean_accuracy = acc;
  r.reward = reward;
  return r;
}

// Short-chunk world like the oracle command builds: k frames at 30 fps.
World small_world(std::vector<StreamProfile> profiles, int k, double kbps,
                  std::uint64_t seed, double tau = 1.0) {
  WorldConfig wc;
  wc.frames_per_chunk = k;
  wc.chunk_seconds = k / 30.0;
  wc.tau_s = tau;
  wc.seed = seed;
  return World(wc, std::move(profiles), BandwidthTrace::constant(kbps));
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("biswift_orch_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_net(const rl::Mlp<double>& a, const rl::Mlp<double>& b) {
  if (a.sizes() != b.sizes()) return false;
  for (std::size_t l = 0; l < a.layers().size(); ++l)
    if (a.layers()[l].weight != b.layers()[l].weight ||
        a.layers()[l].bias != b.layers()[l].bias)
      return false;
  return true;
}

const char* kTwoStream = R"({
  "name": "two",
  "streams": [{"difficulty": "hard", "profile_seed": 5},
              {"difficulty": "easy", "profile_seed": 5}],
  "bandwidth_kbps": 5000,
  "chunks": 200,
  "allocator": "learned",
  "classifier": "grid_oracle",
  "agents": {"sac_alpha": 0.1},
  "training": {"epochs": 6, "episodes_per_epoch": 10, "chunks_per_episode": 100,
               "validation_seeds": 2, "validation_chunks": 100},
  "seed": 3
})";

}  // namespace

TEST_CASE("low reward") {
  CHECK(low_reward(outcome(0.9, 0.8), 0.5, 0.5, 1.0).reward == doctest::Approx(0.45));
  const auto late = low_reward(outcome(0.9, 1.2), 0.5, 0.5, 1.0);
  CHECK(late.reward == doctest::Approx(-0.05));
  CHECK(late.penalty == 1);
  CHECK(low_reward(outcome(0.0, 5.0), 0.5, 0.5, 1.0).reward == -0.5);
  CHECK(low_reward(outcome(0.7, 1.0), 0.5, 0.5, 1.0).penalty == 0);
}

TEST_CASE("rewards stay within [-alpha2, alpha1]") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double a1 = u(rng), a2 = u(rng);
    std::vector<RewardRecord> recs;
    for (int c = 0; c < 4; ++c) {
      recs.push_back(low_reward(outcome(u(rng), 2.0 * u(rng), c), a1, a2, 1.0));
      CHECK(recs.back().reward >= -a2);
      CHECK(recs.back().reward <= a1);
    }
    const double h = high_reward(recs);
    for (const auto& r : recs) CHECK(h <= r.reward);
  }
}

TEST_CASE("high reward is the minimum") {
  std::vector<RewardRecord> r{record(0, 0, 0.4), record(1, 0, 0.2), record(2, 0, 0.3)};
  CHECK(high_reward(r) == 0.2);
  std::sort(r.begin(), r.end(),
            [](const auto& a, const auto& b) { return a.reward > b.reward; });
  CHECK(high_reward(r) == 0.2);
  std::vector<RewardRecord> one{record(0, 0, -0.1)};
  CHECK(high_reward(one) == -0.1);
  CHECK_THROWS_AS(high_reward(std::span<const RewardRecord>{}), PreconditionError);
}

TEST_CASE("utility is a bounded moving average") {
  Utility u(2);
  std::vector<RewardRecord> r{record(0, 0, 0.5), record(1, 0, -0.5)};
  for (int i = 0; i < 50; ++i) {
    u.update(r);
    CHECK(u.values()[0] <= 0.5);
    CHECK(u.values()[1] >= -0.5);
  }
  CHECK(u.values()[0] == doctest::Approx(0.5));
}

TEST_CASE("high state shapes and cold start") {
  std::vector<StreamProfile> ps;
  for (int i = 0; i < 4; ++i) ps.push_back(gen_stream_profile(1, Difficulty::kEasy, i));
  World w(WorldConfig{}, ps, BandwidthTrace::constant(16000));
  const HighState cold = build_high_state(w, nullptr);
  CHECK_FALSE(cold.has_history);
  CHECK(cold.num_streams() == 4);
  const HighStateScales scales;
  const Eigen::VectorXd v = cold.to_vector(scales);
  REQUIRE(v.size() == high_state_dim(4));
  // everything except the current residual is history
  int neutral = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) neutral += v(i) == scales.neutral;
  CHECK(neutral >= 5 * 4);

  const auto step = run_chunk_step(w, even_alloc(4, 16000),
                                   std::vector<Thresholds>(4, {1.0, 0.3}));
  const HighState h = build_high_state(w, &step);
  CHECK(h.has_history);
  for (const auto* vec : {&h.num, &h.size, &h.residual, &h.last_share, &h.accuracy,
                          &h.anchor_prop})
    CHECK(vec->size() == 4);
  double sum = 0.0;
  for (double p : h.anchor_prop) {
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    sum += p;
  }
  CHECK(sum <= 1.0 + 1e-9);
  const Eigen::VectorXd hv = h.to_vector(scales);
  CHECK(hv.minCoeff() >= 0.0);
  CHECK(hv.maxCoeff() <= 1.0);
}

TEST_CASE("anchor proportions count pipeline-one arrivals") {
  std::vector<StreamProfile> ps;
  for (int i = 0; i < 4; ++i) ps.push_back(gen_stream_profile(1, Difficulty::kEasy, i));
  World w(WorldConfig{}, ps, BandwidthTrace::constant(16000));
  StepResult step;
  step.allocation = even_alloc(4, 16000);
  for (int c = 0; c < 4; ++c) {
    ChunkOutcome o;
    o.stream = c;
    o.counts = c == 0 ? std::array<int, 3>{3, 0, 27} : std::array<int, 3>{0, 0, 30};
    step.outcomes.push_back(o);
  }
  const HighState h = build_high_state(w, &step);
  // 3 of 30 frames, normalized by the pipeline-one total (w = 10)
  CHECK(h.anchor_prop == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("low state is normalized") {
  std::vector<StreamProfile> ps{gen_stream_profile(1, Difficulty::kHard, 0),
                                gen_stream_profile(1, Difficulty::kEasy, 1)};
  World w(WorldConfig{}, ps, BandwidthTrace::constant(8000));
  const auto alloc = even_alloc(2, 8000);
  for (int i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      const auto s = build_low_state(w.context(c, alloc), alloc.shares);
      CHECK(s.size() == low_state_dim(30, 2));
      CHECK(s.minCoeff() >= 0.0);
      CHECK(s.maxCoeff() <= 1.0);
    }
    run_chunk_step(w, alloc, std::vector<Thresholds>(2, {0.5, 0.1}));
  }
  CHECK(low_state_dim(30, 4) == 128 + 30 + 2 + 4 + 2);
}

TEST_CASE("baseline allocators") {
  const auto even = even_alloc(4, 16000);
  for (double s : even.shares) CHECK(s == 0.25);
  const std::vector<double> d{1.0, 3.0};
  CHECK(heuristic_shares(d) == std::vector<double>{0.25, 0.75});
  const std::vector<double> same{2.0, 2.0, 2.0};
  for (double s : heuristic_shares(same)) CHECK(s == doctest::Approx(1.0 / 3.0));

  HighState cold;
  cold.residual.assign(3, 0.1);
  CHECK(heuristic_alloc(cold, 9000).shares == even_alloc(3, 9000).shares);
  HighState h = cold;
  h.has_history = true;
  h.num = {40.0, 2.0, 2.0};
  h.size = {0.005, 0.2, 0.2};
  const auto a = heuristic_alloc(h, 9000);
  CHECK(a.shares[0] > a.shares[1]);
  CHECK(a.shares[1] == doctest::Approx(a.shares[2]));
}

TEST_CASE("exhaustive oracle") {
  const auto p = gen_stream_profile(1, Difficulty::kHard);
  {
    World w = small_world({p}, 8, 1e9, 1, 1e9);
    const auto ctx = w.context(0, 1e9, quality_level(0));
    const auto r = exhaustive_assignment_oracle(ctx);
    CHECK(r.evaluated == 6561);
    REQUIRE(r.feasible);
    for (auto t : r.best.types) CHECK(t == FrameType::kAnchor);
  }
  {
    // 2 anchors + 4 reuses take 0.074 s, any third inference breaks 0.08 s
    World w = small_world({p}, 6, 1e12, 1, 0.08);
    const auto ctx = w.context(0, 1e12, quality_level(0));
    const auto r = exhaustive_assignment_oracle(ctx);
    REQUIRE(r.feasible);
    const auto n = r.best.counts();
    CHECK(n[0] + n[1] == 2);
  }
  {
    World w = small_world({p}, 1, 16000, 1);
    const auto ctx = w.context(0, 16000, quality_level(2));
    const auto r = exhaustive_assignment_oracle(ctx);
    CHECK(r.evaluated == 3);
    REQUIRE(r.best.types.size() == 1);
    CHECK(r.best.types[0] == FrameType::kAnchor);
    const ModelParams m;
    CHECK(r.best_mean_accuracy ==
          doctest::Approx(m.hd_accuracy_base * anchor_quality_gain(60, m)));
  }
  {
    World w = small_world({p}, 13, 16000, 1);
    CHECK_THROWS_AS(exhaustive_assignment_oracle(w.context(0, 16000, quality_level(2))),
                    PreconditionError);
  }
}

TEST_CASE("threshold grid oracle") {
  const auto p = gen_stream_profile(2, Difficulty::kHard);
  World w = small_world({p}, 8, 4000, 2);
  const auto ctx = w.context(0, 4000, quality_level(2));
  const RewardWeights weights;

  ThresholdGrid one;
  one.n1 = one.n2 = 1;
  const auto single = threshold_grid_oracle(ctx, one, weights);
  CHECK(single.index == 0);
  CHECK(single.best == Thresholds{one.tr1_min, one.tr2_min});

  // above every possible X and R: all pairs classify identically
  ThresholdGrid flat{1e6, 1e7, 1e6, 1e7, 3, 3};
  const auto tie = threshold_grid_oracle(ctx, flat, weights);
  CHECK(tie.index == 0);
  CHECK(tie.best == Thresholds{1e6, 1e6});

  const ThresholdGrid grid;
  const auto best = threshold_grid_oracle(ctx, grid, weights);
  CHECK(best.evaluated == 64);
  for (int i = 0; i < grid.size(); ++i) {
    const auto [tr1, tr2] = grid.at(i);
    CHECK(best.reward >=
          low_reward(evaluate_thresholds(ctx, {tr1, tr2}), weights).reward);
  }
}

TEST_CASE("grid oracle never beats the exhaustive optimum") {
  const ThresholdGrid grid;
  const RewardWeights weights;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto p = gen_stream_profile(seed, seed % 2 ? Difficulty::kHard : Difficulty::kEasy);
    World w = small_world({p}, 7, 3000 + 200.0 * seed, seed);
    for (int chunk = 0; chunk < 2; ++chunk) {
      const auto ctx = w.context(0, even_alloc(1, w.total_bandwidth()));
      const auto ex = exhaustive_assignment_oracle(ctx);
      const auto g = threshold_grid_oracle(ctx, grid, weights);
      if (ex.feasible)
        CHECK(g.reward <= weights.alpha1 * ex.best_mean_accuracy + 1e-12);
      else
        CHECK(g.outcome.deadline_violated);
      run_chunk_step(w, even_alloc(1, w.total_bandwidth()),
                     std::vector<Thresholds>{g.best});
    }
  }
}

TEST_CASE("interior simplex grid") {
  const auto two = interior_simplex_grid(2, 10);
  CHECK(two.size() == 9);
  for (const auto& m : two) {
    CHECK(m[0] + m[1] == 10);
    CHECK(m[0] > 0);
    CHECK(m[1] > 0);
  }
  CHECK(interior_simplex_grid(3, 10).size() == 36);
  CHECK(interior_simplex_grid(1, 10).size() == 1);
  CHECK(interior_simplex_grid(3, 2).empty());
}

TEST_CASE("allocation oracle") {
  const ThresholdGrid grid;
  const RewardWeights weights;
  const auto easy = gen_stream_profile(5, Difficulty::kEasy, 0);
  const auto hard = gen_stream_profile(5, Difficulty::kHard, 1);

  SUBCASE("identical streams admit the even split") {
    World w = small_world({hard, hard}, 8, 3000, 4);
    const auto r = allocation_oracle(w, 10, grid, weights);
    CHECK(r.evaluated == 9);
    const auto cfg = quality_level(settled_level(1500), 60);
    double even_min = 1.0;
    for (std::size_t c = 0; c < 2; ++c)
      even_min = std::min(
          even_min, threshold_grid_oracle(w.context(c, 1500, cfg, 0.5), grid, weights)
                        .reward);
    CHECK(even_min == r.max_min_reward);
  }

  SUBCASE("the hard stream gets at least half under a tight link") {
    World w = small_world({hard, easy}, 8, 2000, 6);
    const auto r = allocation_oracle(w, 10, grid, weights);
    CHECK(r.best.shares[0] >= 0.5);
    double sum = 0.0;
    for (double s : r.best.shares) sum += s;
    CHECK(sum <= 1.0 + 1e-12);
    CHECK(r.best.caps_sum() <= w.total_bandwidth());
  }

  SUBCASE("relabeling streams permutes the optimum") {
    World ab = small_world({hard, easy}, 8, 2500, 7);
    auto easy0 = easy, hard1 = hard;
    easy0.stream_id = 1;
    hard1.stream_id = 0;
    World ba = small_world({easy, hard}, 8, 2500, 7);
    const auto r1 = allocation_oracle(ab, 10, grid, weights);
    const auto r2 = allocation_oracle(ba, 10, grid, weights);
    CHECK(r1.max_min_reward == r2.max_min_reward);
  }

  SUBCASE("size guards") {
    World four = small_world({easy, easy, hard, hard}, 4, 4000, 1);
    CHECK_THROWS_AS(allocation_oracle(four, 10, grid, weights), PreconditionError);
    World two = small_world({easy, hard}, 4, 4000, 1);
    CHECK_THROWS_AS(allocation_oracle(two, 11, grid, weights), PreconditionError);
    CHECK_THROWS_AS(allocation_oracle(two, 1, grid, weights), PreconditionError);
  }
}

TEST_CASE("fairness metrics") {
  std::vector<RewardRecord> flat{record(0, 0.7), record(1, 0.7), record(0, 0.7)};
  CHECK(fairness_metrics(flat).spread == 0.0);

  std::vector<RewardRecord> two{record(0, 0.8), record(1, 0.9), record(0, 0.8),
                                record(1, 0.9)};
  const auto m = fairness_metrics(two);
  CHECK(m.min_accuracy == doctest::Approx(0.8));
  CHECK(m.mean_accuracy == doctest::Approx(0.85));

  CHECK(nearest_rank({1, 2, 3, 4}, 50) == 2);
  CHECK(nearest_rank({4, 3, 2, 1}, 75) == 3);
  CHECK(nearest_rank({5}, 100) == 5);
  CHECK_THROWS_AS(fairness_metrics(std::span<const RewardRecord>{}), PreconditionError);
}

TEST_CASE("sessions hold allocations between control points") {
  const Scenario sc = parse_scenario(kTwoStream, ".");
  World w = make_world(sc, 9);
  SessionConfig cfg = session_config(sc);
  cfg.allocator = AllocatorKind::kHeuristic;
  cfg.chunks = 35;
  const auto steps = run_session(w, cfg, nullptr);
  REQUIRE(steps.size() == 35);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i % 10 != 0)
      CHECK(steps[i].step.allocation.shares == steps[i - 1].step.allocation.shares);
    CHECK(steps[i].step.allocation.caps_sum() <= steps[i].step.total_bw_kbps);
    CHECK(steps[i].rewards.size() == 2);
  }
  CHECK(steps[10].step.allocation.shares != steps[0].step.allocation.shares);

  cfg.allocator = AllocatorKind::kLearned;
  World w2 = make_world(sc, 9);
  CHECK_THROWS(run_session(w2, cfg, nullptr));
}

TEST_CASE("joint training bookkeeping") {
  const Scenario sc = parse_scenario(kTwoStream, ".");
  auto factory = [&](std::uint64_t s) { return make_world(sc, s); };
  const ThresholdGrid grid;

  SUBCASE("zero epochs leaves the initialization") {
    Agents a = make_agents(2, 30, grid, sc.agents, 4);
    const Agents init = make_agents(2, 30, grid, sc.agents, 4);
    TrainConfig cfg = train_config(sc, 0, 4);
    const auto r = joint_train(factory, a, cfg);
    CHECK(r.epochs_completed == 0);
    CHECK(same_net(a.high->policy(), init.high->policy()));
    CHECK(same_net(a.low[0].policy(), init.low[0].policy()));
  }

  SUBCASE("logs are deterministic and fully accounted") {
    auto train_once = [&](std::string& log) {
      Agents a = make_agents(2, 30, grid, sc.agents, 4);
      TrainConfig cfg = train_config(sc, 2, 4);
      cfg.episodes_per_epoch = 2;
      cfg.chunks_per_episode = 20;
      cfg.train_low = true;
      cfg.classifier = ClassifierKind::kLearned;
      cfg.validate = nullptr;
      std::ostringstream out;
      cfg.log = &out;
      const auto r = joint_train(factory, a, cfg);
      log = out.str();
      return r;
    };
    std::string l1, l2;
    const auto r1 = train_once(l1);
    train_once(l2);
    CHECK(l1 == l2);
    CHECK(r1.log_rows == 2 * 2 * 20 * 2);
    CHECK(std::count(l1.begin(), l1.end(), '\n') == 2 + r1.log_rows);
    CHECK(r1.low_updates > 0);
  }

  SUBCASE("non-finite validation aborts") {
    Agents a = make_agents(2, 30, grid, sc.agents, 4);
    TrainConfig cfg = train_config(sc, 1, 4);
    cfg.episodes_per_epoch = 1;
    cfg.chunks_per_episode = 10;
    cfg.validate = [](const Agents&) { return std::nan(""); };
    CHECK_THROWS_AS(joint_train(factory, a, cfg), DivergenceError);
  }
}

TEST_CASE("agent checkpoints") {
  const ThresholdGrid grid;
  AgentOptions opt;
  Agents a = make_agents(3, 30, grid, opt, 2);
  a.epochs_trained = 7;
  a.high->policy().layers()[0].bias.setConstant(0.123456789);
  const fs::path full = scratch_dir("full"), pol = scratch_dir("policy");
  save_agents(a, full);
  export_policies(a, pol);
  CHECK_FALSE(is_policy_export(full));
  CHECK(is_policy_export(pol));

  Agents b = make_agents(3, 30, grid, opt, 99);
  load_agents(b, full);
  CHECK(b.epochs_trained == 7);
  CHECK(same_net(a.high->policy(), b.high->policy()));
  CHECK(same_net(a.high->value(), b.high->value()));
  CHECK(same_net(a.low[2].value(), b.low[2].value()));

  Agents c = make_agents(3, 30, grid, opt, 99);
  load_agents(c, pol);
  const auto& pa = a.high->policy().layers()[0].bias;
  const auto& pc = c.high->policy().layers()[0].bias;
  CHECK(pc == pa.cast<float>().cast<double>());

  Agents wrong = make_agents(2, 30, grid, opt, 1);
  CHECK_THROWS_AS(load_agents(wrong, full), ValidationError);
  CHECK_THROWS(load_agents(wrong, scratch_dir("empty")));
}

TEST_CASE("trained controller matches or beats even on two streams") {
  const Scenario sc = parse_scenario(kTwoStream, ".");
  Agents agents = make_agents(sc.num_streams(), sc.world.frames_per_chunk,
                              ThresholdGrid{}, sc.agents, sc.seed);
  auto factory = [&](std::uint64_t s) { return make_world(sc, s); };
  const auto r = joint_train(factory, agents, train_config(sc, sc.training.epochs, sc.seed));
  CHECK(r.epochs_completed == sc.training.epochs);
  CHECK(r.best_epoch >= 0);

  SessionConfig learned = session_config(sc);
  learned.allocator = AllocatorKind::kLearned;
  SessionConfig even = learned;
  even.allocator = AllocatorKind::kEven;
  double learned_min = 0.0, even_min = 0.0;
  for (std::uint64_t seed : {501u, 502u}) {
    World wl = make_world(sc, seed), we = make_world(sc, seed);
    const auto sl = run_session(wl, learned, &agents);
    const auto se = run_session(we, even, nullptr);
    auto min_mean_reward = [](const std::vector<SessionStep>& steps) {
      std::vector<double> sum(steps.front().rewards.size(), 0.0);
      for (const auto& s : steps)
        for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += s.rewards[c].reward;
      return *std::min_element(sum.begin(), sum.end()) / steps.size();
    };
    learned_min += min_mean_reward(sl);
    even_min += min_mean_reward(se);
  }
  MESSAGE("min-stream reward: learned " << learned_min / 2 << ", even " << even_min / 2);
  CHECK(learned_min >= even_min);
}
