#include "biswift/scenario.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "biswift/error.hpp"
#include "rng.hpp"

namespace biswift {

namespace {

using nlohmann::json;

// Cursor into the document that knows its own path for error messages.
class Field {
 public:
  Field(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError((path_.empty() ? "<root>" : path_) + ": " + what);
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  Field at(const std::string& key) const {
    if (!j_.contains(key)) fail("missing field '" + key + "'");
    return Field(j_.at(key), join(key));
  }

  Field at(std::size_t i) const {
    return Field(j_.at(i), path_ + "[" + std::to_string(i) + "]");
  }

  void expect_object(const std::set<std::string>& allowed) const {
    if (!j_.is_object()) fail("expected an object");
    for (const auto& [key, _] : j_.items())
      if (!allowed.count(key)) Field(j_[key], join(key)).fail("unknown field");
  }

  double number(double lo, double hi) const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v) || v < lo || v > hi)
      fail("value " + j_.dump() + " outside [" + fmt(lo) + ", " + fmt(hi) + "]");
    return v;
  }

  long long integer(long long lo, long long hi) const {
    if (!j_.is_number_integer()) fail("expected an integer");
    const auto v = j_.get<long long>();
    if (v < lo || v > hi)
      fail("value " + j_.dump() + " outside [" + std::to_string(lo) + ", " +
           std::to_string(hi) + "]");
    return v;
  }

  std::uint64_t seed() const {
    if (!j_.is_number_unsigned()) fail("expected a non-negative integer");
    return j_.get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  void number_into(const std::string& key, double& out, double lo,
                   double hi) const {
    if (has(key)) out = at(key).number(lo, hi);
  }
  template <typename Int>
  void integer_into(const std::string& key, Int& out, long long lo,
                    long long hi) const {
    if (has(key)) out = static_cast<Int>(at(key).integer(lo, hi));
  }

 private:
  std::string join(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  static std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }

  const json& j_;
  std::string path_;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

StreamSpec parse_stream(const Field& f) {
  f.expect_object({"difficulty", "profile_seed", "params"});
  StreamSpec s;
  const std::string d = f.at("difficulty").string();
  if (d == "easy") {
    s.difficulty = Difficulty::kEasy;
  } else if (d == "hard") {
    s.difficulty = Difficulty::kHard;
  } else if (d == "custom") {
    s.difficulty = Difficulty::kCustom;
  } else {
    f.at("difficulty").fail("expected easy, hard or custom, got '" + d + "'");
  }
  if (f.has("profile_seed")) s.profile_seed = f.at("profile_seed").seed();
  if (s.difficulty == Difficulty::kCustom) {
    const Field p = f.at("params");
    p.expect_object({"mean_object_count", "mean_object_size",
                     "residual_intensity", "scene_change_rate"});
    ProfileParams pp;
    p.number_into("mean_object_count", pp.mean_object_count, 0.0, 1e4);
    p.number_into("mean_object_size", pp.mean_object_size, 1e-9, 1.0);
    p.number_into("residual_intensity", pp.residual_intensity, 0.0, 1.0);
    p.number_into("scene_change_rate", pp.scene_change_rate, 0.0, 1.0);
    s.custom = pp;
  } else if (f.has("params")) {
    f.at("params").fail("only custom streams take explicit params");
  }
  return s;
}

void parse_model(const Field& f, ModelParams& m) {
  f.expect_object({"acc_a0", "acc_a1", "acc_a2", "difficulty_w_count",
                   "difficulty_w_size", "hd_accuracy_base",
                   "anchor_quality_floor", "anchor_quality_knee",
                   "transfer_gain", "transfer_decay", "reuse_decay_lambda",
                   "t_infer_s", "t_transfer_s", "t_reuse_s",
                   "anchor_bits_per_pixel", "anchor_size_rate"});
  f.number_into("acc_a0", m.acc_a0, -kInf, kInf);
  f.number_into("acc_a1", m.acc_a1, -kInf, kInf);
  f.number_into("acc_a2", m.acc_a2, -kInf, kInf);
  f.number_into("difficulty_w_count", m.difficulty_w_count, -kInf, kInf);
  f.number_into("difficulty_w_size", m.difficulty_w_size, -kInf, kInf);
  f.number_into("hd_accuracy_base", m.hd_accuracy_base, -kInf, kInf);
  f.number_into("anchor_quality_floor", m.anchor_quality_floor, -kInf, kInf);
  f.integer_into("anchor_quality_knee", m.anchor_quality_knee, 1, 100);
  f.number_into("transfer_gain", m.transfer_gain, -kInf, kInf);
  f.number_into("transfer_decay", m.transfer_decay, -kInf, kInf);
  f.number_into("reuse_decay_lambda", m.reuse_decay_lambda, -kInf, kInf);
  f.number_into("t_infer_s", m.t_infer_s, -kInf, kInf);
  f.number_into("t_transfer_s", m.t_transfer_s, -kInf, kInf);
  f.number_into("t_reuse_s", m.t_reuse_s, -kInf, kInf);
  f.number_into("anchor_bits_per_pixel", m.anchor_bits_per_pixel, -kInf, kInf);
  f.number_into("anchor_size_rate", m.anchor_size_rate, -kInf, kInf);
  try {
    validate_params(m);
  } catch (const ValidationError& e) {
    f.fail(e.what());
  }
}

void parse_classifier(const Field& f, Scenario& sc) {
  if (f.raw().is_string()) {
    const std::string name = f.string();
    if (name == "fixed") f.fail("fixed classifier needs {\"fixed\": [tr1, tr2]}");
    try {
      sc.classifier = classifier_from_string(name);
    } catch (const ValidationError& e) {
      f.fail(e.what());
    }
    return;
  }
  f.expect_object({"fixed"});
  const Field pair = f.at("fixed");
  if (!pair.raw().is_array() || pair.raw().size() != 2)
    pair.fail("expected [tr1, tr2]");
  sc.classifier = ClassifierKind::kFixed;
  sc.fixed.tr1 = pair.at(0).number(0.0, kInf);
  sc.fixed.tr2 = pair.at(1).number(0.0, kInf);
}

void parse_agents(const Field& f, AgentOptions& a) {
  f.expect_object({"low_entropy_coef", "low_lr_actor", "low_lr_critic",
                   "low_gamma", "sac_alpha", "sac_batch", "action_scale"});
  f.number_into("low_entropy_coef", a.low_entropy_coef, 0.0, 10.0);
  f.number_into("low_lr_actor", a.low_lr_actor, 1e-9, 1.0);
  f.number_into("low_lr_critic", a.low_lr_critic, 1e-9, 1.0);
  f.number_into("low_gamma", a.low_gamma, 0.0, 1.0);
  f.number_into("sac_alpha", a.high.alpha, 0.0, 10.0);
  f.integer_into("sac_batch", a.high.batch_size, 1, 1 << 20);
  f.number_into("action_scale", a.action_scale, 1e-6, 100.0);
}

void parse_training(const Field& f, TrainingSpec& t) {
  f.expect_object({"epochs", "episodes_per_epoch", "chunks_per_episode",
                   "low_update_every", "high_reward_scale",
                   "high_updates_per_transition", "warmup_transitions",
                   "replay_capacity", "train_low", "train_high",
                   "validation_seeds", "validation_chunks"});
  f.integer_into("epochs", t.epochs, 0, 1 << 20);
  f.integer_into("episodes_per_epoch", t.episodes_per_epoch, 1, 1 << 20);
  f.integer_into("chunks_per_episode", t.chunks_per_episode, 1, 1 << 24);
  f.integer_into("low_update_every", t.low_update_every, 1, 1 << 20);
  f.number_into("high_reward_scale", t.high_reward_scale, 1e-9, 1e6);
  f.integer_into("high_updates_per_transition", t.high_updates_per_transition,
                 0, 1000);
  f.integer_into("warmup_transitions", t.warmup_transitions, 0, 1 << 24);
  f.integer_into("replay_capacity", t.replay_capacity, 1, 1 << 24);
  if (f.has("train_low")) t.train_low = f.at("train_low").boolean();
  if (f.has("train_high")) t.train_high = f.at("train_high").boolean();
  f.integer_into("validation_seeds", t.validation_seeds, 0, 1000);
  f.integer_into("validation_chunks", t.validation_chunks, 1, 1 << 20);
}

}  // namespace

std::vector<StreamProfile> Scenario::profiles() const {
  std::vector<StreamProfile> out;
  out.reserve(streams.size());
  for (std::size_t c = 0; c < streams.size(); ++c)
    out.push_back(gen_stream_profile(streams[c].profile_seed,
                                     streams[c].difficulty,
                                     static_cast<int>(c), streams[c].custom));
  return out;
}

Scenario parse_scenario(const std::string& json_text,
                        const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("scenario is not valid JSON: ") + e.what());
  }
  const Field root(doc, "");
  root.expect_object({"name", "streams", "trace", "bandwidth_kbps",
                      "chunk_seconds", "fps", "tau_s", "gpu_budget_s",
                      "quality", "model", "reward", "chunks",
                      "control_interval", "oracle_levels", "allocator",
                      "classifier", "checkpoint", "agents", "training",
                      "seed"});

  Scenario sc;
  if (root.has("name")) sc.name = root.at("name").string();

  const Field streams = root.at("streams");
  if (!streams.raw().is_array() || streams.raw().empty())
    streams.fail("expected a non-empty array");
  for (std::size_t i = 0; i < streams.raw().size(); ++i)
    sc.streams.push_back(parse_stream(streams.at(i)));

  if (root.has("trace") == root.has("bandwidth_kbps"))
    root.fail("exactly one of 'trace' or 'bandwidth_kbps' is required");
  if (root.has("trace")) {
    const Field t = root.at("trace");
    std::filesystem::path p = t.string();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) t.fail("file not found: " + p.string());
    try {
      sc.trace = load_bandwidth_trace(p);
    } catch (const Error& e) {
      t.fail(e.what());
    }
    sc.trace_path = p;
  } else {
    sc.constant_bw_kbps = root.at("bandwidth_kbps").number(1e-3, 1e9);
    sc.trace = BandwidthTrace::constant(*sc.constant_bw_kbps);
  }

  WorldConfig& w = sc.world;
  root.number_into("chunk_seconds", w.chunk_seconds, 1e-3, 3600.0);
  double fps = 30.0;
  root.number_into("fps", fps, 1.0, 1000.0);
  const double frames = fps * w.chunk_seconds;
  if (std::abs(frames - std::round(frames)) > 1e-9)
    root.at("fps").fail("fps x chunk_seconds must be a whole number of frames");
  w.frames_per_chunk = static_cast<int>(std::round(frames));
  w.gen.frames_per_chunk = w.frames_per_chunk;
  root.number_into("gpu_budget_s", w.gpu_budget_s, 1e-6, 3600.0);

  if (root.has("quality")) {
    const Field q = root.at("quality");
    q.expect_object({"anchor_quality_factor"});
    q.integer_into("anchor_quality_factor", w.anchor_quality_factor, 1, 100);
  }
  if (root.has("model")) parse_model(root.at("model"), w.model);

  if (root.has("reward")) {
    const Field r = root.at("reward");
    r.expect_object({"alpha1", "alpha2", "tau_s"});
    r.number_into("alpha1", sc.weights.alpha1, 0.0, 1e6);
    r.number_into("alpha2", sc.weights.alpha2, 0.0, 1e6);
    r.number_into("tau_s", sc.weights.tau_s, 1e-6, 3600.0);
  }
  w.tau_s = sc.weights.tau_s;

  root.integer_into("chunks", sc.chunks, 1, 1 << 24);
  root.integer_into("control_interval", sc.control_interval, 1, 1 << 20);
  root.integer_into("oracle_levels", sc.oracle_levels, 1, kMaxOracleLevels);

  if (root.has("allocator")) {
    const Field a = root.at("allocator");
    try {
      sc.allocator = allocator_from_string(a.string());
    } catch (const ValidationError& e) {
      a.fail(e.what());
    }
  }
  if (root.has("classifier")) parse_classifier(root.at("classifier"), sc);

  if (root.has("checkpoint")) {
    std::filesystem::path p = root.at("checkpoint").string();
    if (p.is_relative()) p = base_dir / p;
    sc.checkpoint = p;
  }
  if (root.has("agents")) parse_agents(root.at("agents"), sc.agents);
  if (root.has("training")) parse_training(root.at("training"), sc.training);
  if (root.has("seed")) sc.seed = root.at("seed").seed();
  w.seed = sc.seed;

  for (const auto& p : sc.profiles()) validate_profile(p);
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  auto sc = parse_scenario(text.str(), path.parent_path());
  if (sc.name.empty()) sc.name = path.stem().string();
  return sc;
}

World make_world(const Scenario& scenario, std::uint64_t seed) {
  WorldConfig wc = scenario.world;
  wc.seed = seed;
  return World(wc, scenario.profiles(), scenario.trace);
}

SessionConfig session_config(const Scenario& scenario) {
  SessionConfig cfg;
  cfg.allocator = scenario.allocator;
  cfg.classifier = scenario.classifier;
  cfg.fixed = scenario.fixed;
  cfg.chunks = scenario.chunks;
  cfg.control_interval = scenario.control_interval;
  cfg.oracle_levels = scenario.oracle_levels;
  cfg.weights = scenario.weights;
  return cfg;
}

TrainConfig train_config(const Scenario& scenario, int epochs,
                         std::uint64_t seed) {
  const TrainingSpec& t = scenario.training;
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.episodes_per_epoch = t.episodes_per_epoch;
  cfg.chunks_per_episode = t.chunks_per_episode;
  cfg.control_interval = scenario.control_interval;
  cfg.weights = scenario.weights;
  cfg.classifier = scenario.classifier;
  cfg.fixed = scenario.fixed;
  cfg.train_low = t.train_low.value_or(scenario.classifier ==
                                       ClassifierKind::kLearned);
  cfg.train_high = t.train_high.value_or(scenario.allocator ==
                                         AllocatorKind::kLearned);
  cfg.fallback_allocator = scenario.allocator == AllocatorKind::kLearned
                               ? AllocatorKind::kEven
                               : scenario.allocator;
  cfg.low_update_every = t.low_update_every;
  cfg.high_reward_scale = t.high_reward_scale;
  cfg.high_updates_per_transition = t.high_updates_per_transition;
  cfg.warmup_transitions = t.warmup_transitions;
  cfg.replay_capacity = t.replay_capacity;
  cfg.seed = seed;
  if (t.validation_seeds > 0) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < t.validation_seeds; ++i)
      seeds.push_back(detail::make_engine(seed, 30u, i)());
    SessionConfig session = session_config(scenario);
    session.chunks = t.validation_chunks;
    if (cfg.train_high) session.allocator = AllocatorKind::kLearned;
    auto factory = [scenario](std::uint64_t s) { return make_world(scenario, s); };
    cfg.validate = [factory, seeds, session](const Agents& agents) {
      return validation_reward(agents, factory, seeds, session);
    };
  }
  return cfg;
}

}  // namespace biswift
