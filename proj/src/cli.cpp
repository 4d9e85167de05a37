#include "biswift/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "biswift/error.hpp"

namespace biswift::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

bool needs_agents(const Scenario& sc) {
  return sc.allocator == AllocatorKind::kLearned ||
         sc.classifier == ClassifierKind::kLearned;
}

}  // namespace

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag,
                           std::uint64_t scenario_seed) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BISWIFT_SIM_SEED"); env && *env) {
    const std::string s = env;
    if (s.find_first_not_of("0123456789") != std::string::npos)
      throw ValidationError("BISWIFT_SIM_SEED: expected an unsigned integer, got '" +
                            s + "'");
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw ValidationError("BISWIFT_SIM_SEED: out of range");
    }
  }
  return scenario_seed;
}

Agents scenario_agents(const Scenario& scenario,
                       const std::optional<fs::path>& checkpoint,
                       std::uint64_t init_seed) {
  Agents agents = make_agents(scenario.num_streams(),
                              scenario.world.frames_per_chunk, ThresholdGrid{},
                              scenario.agents, init_seed);
  if (checkpoint) {
    if (!fs::exists(*checkpoint / "agents.meta"))
      throw ValidationError("checkpoint: no agents.meta in " +
                            checkpoint->string());
    load_agents(agents, *checkpoint);
  }
  return agents;
}

// ------------------------------------------------------------------- run

void write_run_csv(std::ostream& out, const std::vector<SessionStep>& steps,
                   const std::string& allocator, const std::string& classifier,
                   std::uint64_t seed, double chunk_seconds) {
  out << "# schema=" << kCsvSchema << " allocator=" << allocator
      << " classifier=" << classifier << " seed=" << seed
      << " chunk_seconds=" << num(chunk_seconds) << '\n';
  out << kRunColumns << '\n';
  for (const auto& s : steps) {
    for (std::size_t c = 0; c < s.step.outcomes.size(); ++c) {
      const ChunkOutcome& o = s.step.outcomes[c];
      const LatencyBreakdown& l = o.latency;
      out << o.chunk_index << ',' << o.stream << ',' << num(o.share) << ','
          << num(o.config.bitrate_kbps) << ',' << to_string(o.config.resolution)
          << ',' << o.counts[0] << ',' << o.counts[1] << ',' << o.counts[2]
          << ',' << num(o.mean_accuracy) << ',' << num(l.trans_s) << ','
          << num(l.queue_s) << ',' << num(l.comp_s) << ',' << num(l.total_s)
          << ',' << (o.deadline_violated ? 1 : 0) << ','
          << num(s.rewards[c].reward) << '\n';
    }
  }
}

RunSummary summarize_run(const std::vector<SessionStep>& steps,
                         double chunk_seconds) {
  RunSummary r;
  std::vector<RewardRecord> history;
  double frames = 0.0, anchors = 0.0, transfers = 0.0, reuses = 0.0;
  double trans = 0.0, queue = 0.0, comp = 0.0, total = 0.0;
  double used = 0.0, violations = 0.0, reward = 0.0;
  std::size_t n = 0;
  for (const auto& s : steps) {
    n = std::max(n, s.step.outcomes.size());
    double chunk_used = 0.0;
    for (std::size_t c = 0; c < s.step.outcomes.size(); ++c) {
      const ChunkOutcome& o = s.step.outcomes[c];
      history.push_back(s.rewards[c]);
      anchors += o.counts[0];
      transfers += o.counts[1];
      reuses += o.counts[2];
      frames += o.counts[0] + o.counts[1] + o.counts[2];
      trans += o.latency.trans_s;
      queue += o.latency.queue_s;
      comp += o.latency.comp_s;
      total += o.latency.total_s;
      violations += o.deadline_violated ? 1.0 : 0.0;
      reward += s.rewards[c].reward;
      chunk_used += o.share * std::min(o.latency.trans_s, chunk_seconds);
    }
    used += chunk_used / chunk_seconds;
  }
  r.chunks = static_cast<int>(steps.size());
  if (history.empty()) return r;
  r.fairness = fairness_metrics(history);
  r.stream_mean_accuracy.assign(n, 0.0);
  std::vector<int> counts(n, 0);
  for (const auto& h : history) {
    r.stream_mean_accuracy[h.stream_id] += h.mean_accuracy;
    ++counts[h.stream_id];
  }
  for (std::size_t c = 0; c < n; ++c)
    if (counts[c] > 0) r.stream_mean_accuracy[c] /= counts[c];
  r.utilization = used / static_cast<double>(steps.size());
  r.anchor_fraction = frames > 0 ? anchors / frames : 0.0;
  r.transfer_fraction = frames > 0 ? transfers / frames : 0.0;
  r.reuse_fraction = frames > 0 ? reuses / frames : 0.0;
  if (total > 0) {
    r.trans_share = trans / total;
    r.queue_share = queue / total;
    r.comp_share = comp / total;
  }
  const double records = static_cast<double>(history.size());
  r.violation_rate = violations / records;
  r.mean_reward = reward / records;
  return r;
}

namespace {

std::string summary_json(const RunSummary& r) {
  nlohmann::ordered_json j;
  j["schema"] = kCsvSchema;
  j["scenario"] = r.scenario;
  j["allocator"] = r.allocator;
  j["classifier"] = r.classifier;
  j["seed"] = r.seed;
  j["chunks"] = r.chunks;
  j["accuracy"] = {{"mean", r.fairness.mean_accuracy},
                   {"min_stream", r.fairness.min_accuracy},
                   {"p50", r.fairness.p50},
                   {"p75", r.fairness.p75},
                   {"spread", r.fairness.spread},
                   {"per_stream", r.stream_mean_accuracy}};
  j["bandwidth_utilization"] = r.utilization;
  j["frame_types"] = {{"anchor_fraction", r.anchor_fraction},
                      {"transfer_fraction", r.transfer_fraction},
                      {"reuse_fraction", r.reuse_fraction},
                      {"reference_anchor_fraction", {0.07, 0.08}}};
  j["latency_shares"] = {{"transmission", r.trans_share},
                         {"queueing", r.queue_share},
                         {"computation", r.comp_share}};
  j["violation_rate"] = r.violation_rate;
  j["mean_reward"] = r.mean_reward;
  j["csv"] = r.csv.filename().string();
  return j.dump(2) + "\n";
}

RunSummary run_one(const Scenario& sc, const Agents* agents,
                   std::uint64_t seed, const fs::path& out_dir) {
  World world = make_world(sc, seed);
  const SessionConfig cfg = session_config(sc);
  const auto steps = run_session(world, cfg, agents);

  RunSummary r = summarize_run(steps, sc.world.chunk_seconds);
  r.scenario = sc.name;
  r.allocator = to_string(sc.allocator);
  r.classifier = to_string(sc.classifier);
  r.seed = seed;
  const std::string stem = "run_" + r.allocator + "_" + r.classifier + "_s" +
                           std::to_string(seed);
  r.csv = out_dir / (stem + ".csv");
  r.summary = out_dir / (stem + ".json");
  {
    auto out = open_out(r.csv);
    write_run_csv(out, steps, r.allocator, r.classifier, seed,
                  sc.world.chunk_seconds);
  }
  {
    auto out = open_out(r.summary);
    out << summary_json(r);
  }
  return r;
}

}  // namespace

std::vector<RunSummary> cmd_run(const RunOptions& options) {
  Scenario sc = load_scenario(options.scenario);
  if (options.allocator) sc.allocator = allocator_from_string(*options.allocator);
  if (options.classifier) {
    sc.classifier = classifier_from_string(*options.classifier);
    if (sc.classifier == ClassifierKind::kFixed)
      throw ValidationError("--classifier: fixed thresholds come from the scenario");
  }
  if (options.chunks) {
    if (*options.chunks < 1) throw ValidationError("--chunks: must be positive");
    sc.chunks = *options.chunks;
  }
  if (options.replicates < 1)
    throw ValidationError("--replicates: must be positive");
  if (options.jobs < 1) throw ValidationError("--jobs: must be positive");
  if (sc.allocator == AllocatorKind::kOracle &&
      sc.num_streams() > kMaxOracleStreams)
    throw PreconditionError("allocator=oracle is limited to " +
                            std::to_string(kMaxOracleStreams) + " streams");

  const std::uint64_t seed = resolve_seed(options.seed, sc.seed);
  std::optional<Agents> agents;
  if (needs_agents(sc)) {
    const auto ckpt = options.checkpoint ? options.checkpoint : sc.checkpoint;
    if (!ckpt)
      throw ValidationError(
          "checkpoint: learned components need a checkpoint (scenario field "
          "'checkpoint' or --checkpoint)");
    agents = scenario_agents(sc, ckpt, 0);
  }
  const Agents* shared = agents ? &*agents : nullptr;

  const auto reps = static_cast<std::size_t>(options.replicates);
  std::vector<RunSummary> results(reps);
  std::vector<std::exception_ptr> errors(reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < reps;) {
      try {
        results[i] = run_one(sc, shared, seed + i, options.out);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads =
      std::min<std::size_t>(reps, static_cast<std::size_t>(options.jobs));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

// ----------------------------------------------------------------- train

TrainSummary cmd_train(const TrainOptions& options) {
  const Scenario sc = load_scenario(options.scenario);
  const int epochs = options.epochs.value_or(sc.training.epochs);
  if (epochs < 0) throw ValidationError("--epochs: must be non-negative");
  const std::uint64_t seed = resolve_seed(options.seed, sc.seed);

  if (options.resume && is_policy_export(*options.resume))
    throw ValidationError("--resume: " + options.resume->string() +
                          " holds policies only; resume needs a full checkpoint");
  Agents agents = scenario_agents(sc, options.resume, seed);
  TrainConfig cfg = train_config(sc, epochs, seed);
  TrainSummary summary;
  summary.checkpoint = options.out / "checkpoint";
  summary.policy = options.out / "policy";
  summary.log = options.out / "train_log.csv";
  cfg.checkpoint_dir = summary.checkpoint;

  auto log = open_out(summary.log);
  cfg.log = &log;
  auto factory = [&sc](std::uint64_t s) { return make_world(sc, s); };
  summary.result = joint_train(factory, agents, cfg);
  // Always leave a loadable checkpoint, even for zero epochs.
  save_agents(agents, summary.checkpoint);
  export_policies(agents, summary.policy);
  summary.epochs_trained = agents.epochs_trained;
  return summary;
}

// ---------------------------------------------------------------- oracle

OracleReport cmd_oracle(const OracleOptions& options) {
  const Scenario sc = load_scenario(options.scenario);
  const int k = options.frames;
  if (k < 1) throw ValidationError("--frames: must be positive");
  if (k > kMaxOracleFrames)
    throw PreconditionError(
        "exhaustive oracle refused: k=" + std::to_string(k) + " frames means " +
        num(std::pow(3.0, k)) + " assignments per chunk; the limit is k=" +
        std::to_string(kMaxOracleFrames));
  const int m = options.streams.value_or(
      static_cast<int>(std::min(sc.num_streams(), kMaxOracleStreams)));
  if (m < 1 || static_cast<std::size_t>(m) > sc.num_streams())
    throw ValidationError("--streams: must be in [1, " +
                          std::to_string(sc.num_streams()) + "]");
  if (static_cast<std::size_t>(m) > kMaxOracleStreams)
    throw PreconditionError("allocation oracle refused: " + std::to_string(m) +
                            " streams; the limit is " +
                            std::to_string(kMaxOracleStreams));
  const int xi = options.levels.value_or(sc.oracle_levels);
  if (xi < m || xi > kMaxOracleLevels)
    throw PreconditionError("allocation oracle refused: levels must be in [" +
                            std::to_string(m) + ", " +
                            std::to_string(kMaxOracleLevels) + "]");

  // Same frame rate as the scenario, shorter chunks.
  WorldConfig wc = sc.world;
  const double fps = sc.world.frames_per_chunk / sc.world.chunk_seconds;
  wc.frames_per_chunk = k;
  wc.gen.frames_per_chunk = k;
  wc.chunk_seconds = k / fps;
  wc.seed = resolve_seed(options.seed, sc.seed);
  auto profiles = sc.profiles();
  profiles.resize(static_cast<std::size_t>(m));
  World world(wc, profiles, sc.trace);

  OracleReport rep;
  rep.frames = k;
  rep.streams = m;
  rep.levels = xi;
  const ThresholdGrid grid;
  const Allocation even = even_alloc(static_cast<std::size_t>(m),
                                     world.total_bandwidth());
  for (int c = 0; c < m; ++c) {
    const auto ctx = world.context(static_cast<std::size_t>(c), even);
    StreamOracleReport s;
    s.stream = c;
    auto t0 = Clock::now();
    const auto ex = exhaustive_assignment_oracle(ctx);
    s.exhaustive_ms = elapsed_ms(t0);
    s.exhaustive_evaluated = ex.evaluated;
    s.exhaustive_accuracy = ex.feasible ? ex.best_mean_accuracy : 0.0;
    for (FrameType t : ex.best.types)
      s.exhaustive_types += static_cast<char>('0' + static_cast<int>(t));
    t0 = Clock::now();
    const auto g = threshold_grid_oracle(ctx, grid, sc.weights);
    s.grid_ms = elapsed_ms(t0);
    s.grid_best = g.best;
    s.grid_accuracy = g.outcome.mean_accuracy;
    s.grid_reward = g.reward;
    s.grid_evaluated = g.evaluated;
    s.gap = s.exhaustive_accuracy > 0
                ? 1.0 - s.grid_accuracy / s.exhaustive_accuracy
                : 0.0;
    rep.per_stream.push_back(std::move(s));
  }

  auto t0 = Clock::now();
  const auto alloc = allocation_oracle(world, xi, grid, sc.weights);
  rep.allocation_ms = elapsed_ms(t0);
  rep.allocation_evaluated = alloc.evaluated;
  rep.allocation_shares = alloc.best.shares;
  rep.allocation_max_min_reward = alloc.max_min_reward;

  // Even split scored the same way the allocation oracle scores a point.
  double even_min = std::numeric_limits<double>::infinity();
  for (int c = 0; c < m; ++c) {
    const double cap = even.caps()[static_cast<std::size_t>(c)];
    const auto cfg = quality_level(settled_level(cap, wc.codec.up_margin),
                                   wc.anchor_quality_factor);
    const auto ctx = world.context(static_cast<std::size_t>(c), cap, cfg,
                                   even.shares[static_cast<std::size_t>(c)]);
    even_min = std::min(even_min,
                        threshold_grid_oracle(ctx, grid, sc.weights).reward);
  }
  rep.even_min_reward = even_min;

  rep.joint_search_size = std::pow(3.0, k) * std::pow(double(xi), m);
  rep.decomposed_search_size =
      static_cast<double>(grid.size()) + alloc.evaluated;
  return rep;
}

std::string oracle_report_json(const OracleReport& r) {
  nlohmann::ordered_json j;
  j["frames"] = r.frames;
  j["streams"] = r.streams;
  j["levels"] = r.levels;
  auto& per = j["per_stream"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_stream) {
    per.push_back({{"stream", s.stream},
                   {"exhaustive",
                    {{"evaluated", s.exhaustive_evaluated},
                     {"best_mean_accuracy", s.exhaustive_accuracy},
                     {"best_types", s.exhaustive_types},
                     {"wall_ms", s.exhaustive_ms}}},
                   {"threshold_grid",
                    {{"evaluated", s.grid_evaluated},
                     {"tr1", s.grid_best.tr1},
                     {"tr2", s.grid_best.tr2},
                     {"mean_accuracy", s.grid_accuracy},
                     {"reward", s.grid_reward},
                     {"wall_ms", s.grid_ms}}},
                   {"accuracy_gap", s.gap}});
  }
  j["allocation"] = {{"evaluated", r.allocation_evaluated},
                     {"best_shares", r.allocation_shares},
                     {"max_min_reward", r.allocation_max_min_reward},
                     {"even_min_reward", r.even_min_reward},
                     {"policy_gap", r.allocation_max_min_reward - r.even_min_reward},
                     {"wall_ms", r.allocation_ms}};
  j["search_size"] = {{"joint", r.joint_search_size},
                      {"decomposed", r.decomposed_search_size},
                      {"log10_ratio", std::log10(r.joint_search_size /
                                                 r.decomposed_search_size)}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- report

RunTable read_run_csv(std::istream& in, const std::string& source) {
  RunTable t;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
    throw ValidationError(source + ": missing '# schema=' header line");
  for (const auto& tok : split(line.substr(2), ' ')) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) t.meta[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  if (t.meta["schema"] != std::to_string(kCsvSchema))
    throw ValidationError(source + ": schema '" + t.meta["schema"] +
                          "' is not supported (expected " +
                          std::to_string(kCsvSchema) + ")");
  if (!std::getline(in, line))
    throw ValidationError(source + ": missing column header");
  const auto expected = split(kRunColumns, ',');
  const auto got = split(line, ',');
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (i >= got.size())
      throw ValidationError(source + ": missing column '" + expected[i] + "'");
    if (got[i] != expected[i])
      throw ValidationError(source + ": column " + std::to_string(i + 1) +
                            " is '" + got[i] + "', expected '" + expected[i] +
                            "'");
  }
  if (got.size() > expected.size())
    throw ValidationError(source + ": unexpected column '" +
                          got[expected.size()] + "'");

  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != expected.size())
      throw ValidationError(source + ":" + std::to_string(lineno) + ": " +
                            std::to_string(f.size()) + " fields, expected " +
                            std::to_string(expected.size()));
    auto dbl = [&](std::size_t i) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(f[i], &pos);
        if (pos == f[i].size()) return v;
      } catch (const std::exception&) {
      }
      throw ValidationError(source + ":" + std::to_string(lineno) +
                            ": column '" + expected[i] + "' is not a number");
    };
    auto integer = [&](std::size_t i) {
      const double v = dbl(i);
      if (v != std::floor(v))
        throw ValidationError(source + ":" + std::to_string(lineno) +
                              ": column '" + expected[i] +
                              "' is not an integer");
      return static_cast<int>(v);
    };
    t.chunk.push_back(integer(0));
    t.stream.push_back(integer(1));
    t.alloc_share.push_back(dbl(2));
    t.n_anchor.push_back(integer(5));
    t.n_transfer.push_back(integer(6));
    t.n_reuse.push_back(integer(7));
    t.mean_acc.push_back(dbl(8));
    t.trans_s.push_back(dbl(9));
    t.violated.push_back(integer(13));
    if (t.stream.back() < 0)
      throw ValidationError(source + ":" + std::to_string(lineno) +
                            ": column 'stream' is negative");
  }
  return t;
}

std::vector<ReportRow> build_report(const std::vector<RunTable>& runs) {
  std::vector<std::string> order;
  for (const auto& r : runs) {
    const std::string a = r.meta.count("allocator") ? r.meta.at("allocator")
                                                    : std::string("unknown");
    if (std::find(order.begin(), order.end(), a) == order.end())
      order.push_back(a);
  }
  std::vector<ReportRow> rows;
  for (const auto& name : order) {
    ReportRow row;
    row.allocator = name;
    std::vector<RewardRecord> history;
    double used = 0.0, chunks = 0.0, violations = 0.0;
    double anchors = 0.0, frames = 0.0;
    int stream_base = 0;
    for (const auto& r : runs) {
      const auto it = r.meta.find("allocator");
      if ((it == r.meta.end() ? std::string("unknown") : it->second) != name)
        continue;
      ++row.runs;
      double chunk_s = 1.0;
      if (const auto cs = r.meta.find("chunk_seconds"); cs != r.meta.end())
        chunk_s = std::stod(cs->second);
      std::map<int, double> per_chunk;
      int max_stream = 0;
      for (std::size_t i = 0; i < r.chunk.size(); ++i) {
        RewardRecord h;
        // Streams of different runs are kept apart.
        h.stream_id = stream_base + r.stream[i];
        h.chunk_index = r.chunk[i];
        h.mean_accuracy = r.mean_acc[i];
        history.push_back(h);
        per_chunk[r.chunk[i]] +=
            r.alloc_share[i] * std::min(r.trans_s[i], chunk_s) / chunk_s;
        violations += r.violated[i];
        anchors += r.n_anchor[i];
        frames += r.n_anchor[i] + r.n_transfer[i] + r.n_reuse[i];
        max_stream = std::max(max_stream, r.stream[i]);
      }
      for (const auto& [_, u] : per_chunk) used += u;
      chunks += static_cast<double>(per_chunk.size());
      stream_base += max_stream + 1;
    }
    row.records = static_cast<std::int64_t>(history.size());
    if (!history.empty()) {
      const auto m = fairness_metrics(history);
      row.mean_acc = m.mean_accuracy;
      row.min_acc = m.min_accuracy;
      row.p50 = m.p50;
      row.p75 = m.p75;
      row.spread = m.spread;
      row.utilization = chunks > 0 ? used / chunks : 0.0;
      row.violation_rate = violations / static_cast<double>(history.size());
      row.anchor_fraction = frames > 0 ? anchors / frames : 0.0;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  out << "# schema=" << kCsvSchema << '\n'
      << "allocator,runs,records,mean_acc,min_acc,p50,p75,spread,utilization,"
         "violation_rate,anchor_fraction\n";
  for (const auto& r : rows)
    out << r.allocator << ',' << r.runs << ',' << r.records << ','
        << num(r.mean_acc) << ',' << num(r.min_acc) << ',' << num(r.p50) << ','
        << num(r.p75) << ',' << num(r.spread) << ',' << num(r.utilization)
        << ',' << num(r.violation_rate) << ',' << num(r.anchor_fraction)
        << '\n';
}

std::vector<ReportRow> cmd_report(const std::vector<fs::path>& csvs,
                                  std::ostream& out) {
  if (csvs.empty()) throw ValidationError("report: at least one run CSV needed");
  std::vector<RunTable> runs;
  for (const auto& p : csvs) {
    std::ifstream in(p);
    if (!in) throw ValidationError("report: cannot open " + p.string());
    runs.push_back(read_run_csv(in, p.string()));
  }
  auto rows = build_report(runs);
  write_report_csv(out, rows);
  return rows;
}

// ------------------------------------------------------------ entrypoint

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const PreconditionError*>(&e) ||
      dynamic_cast<const ParseError*>(&e))
    return kExitValidation;
  return kExitRuntime;
}

int run_main(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Bandwidth allocation and hybrid-codec simulator"};
  app.require_subcommand(1);

  RunOptions run;
  std::optional<std::uint64_t> run_seed;
  auto* run_cmd = app.add_subcommand("run", "Roll a scenario and write CSVs");
  run_cmd->add_option("--scenario", run.scenario, "Scenario JSON")->required();
  run_cmd->add_option("--seed", run_seed, "Simulation seed");
  run_cmd->add_option("--allocator", run.allocator,
                      "even, heuristic, learned or oracle");
  run_cmd->add_option("--classifier", run.classifier, "learned or grid_oracle");
  run_cmd->add_option("--checkpoint", run.checkpoint, "Agent checkpoint dir");
  run_cmd->add_option("--chunks", run.chunks, "Override the horizon");
  run_cmd->add_option("--out", run.out, "Output directory");
  run_cmd->add_option("--replicates", run.replicates,
                      "Replicate seeds seed..seed+n-1");
  run_cmd->add_option("--jobs", run.jobs, "Parallel replicates");

  TrainOptions train;
  std::optional<std::uint64_t> train_seed;
  auto* train_cmd = app.add_subcommand("train", "Train agents on a scenario");
  train_cmd->add_option("--scenario", train.scenario, "Scenario JSON")
      ->required();
  train_cmd->add_option("--epochs", train.epochs, "Training epochs");
  train_cmd->add_option("--seed", train_seed, "Training seed");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to continue");
  train_cmd->add_option("--out", train.out, "Output directory");
  int train_jobs = 1;
  train_cmd->add_option("--jobs", train_jobs, "Accepted; training is serial");

  OracleOptions oracle;
  std::optional<std::uint64_t> oracle_seed;
  std::optional<fs::path> oracle_out;
  auto* oracle_cmd = app.add_subcommand("oracle", "Brute-force reference optima");
  oracle_cmd->add_option("--scenario", oracle.scenario, "Scenario JSON")
      ->required();
  oracle_cmd->add_option("--seed", oracle_seed, "Simulation seed");
  oracle_cmd->add_option("--frames", oracle.frames, "Frames per chunk (k)");
  oracle_cmd->add_option("--streams", oracle.streams, "Streams used (|C|)");
  oracle_cmd->add_option("--levels", oracle.levels, "Share levels (xi)");
  oracle_cmd->add_option("--out", oracle_out, "Also write the report here");

  std::vector<fs::path> report_inputs;
  std::optional<fs::path> report_out;
  auto* report_cmd = app.add_subcommand("report", "Merge run CSVs by allocator");
  report_cmd->add_option("csvs", report_inputs, "Run CSV files")->required();
  report_cmd->add_option("--out", report_out, "Write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    if (*run_cmd) {
      run.seed = run_seed;
      for (const auto& r : cmd_run(run))
        out << r.csv.string() << ": min_acc=" << num(r.fairness.min_accuracy)
            << " mean_acc=" << num(r.fairness.mean_accuracy)
            << " anchor_fraction=" << num(r.anchor_fraction) << '\n';
    } else if (*train_cmd) {
      train.seed = train_seed;
      const auto s = cmd_train(train);
      out << "trained " << s.result.epochs_completed << " epochs (total "
          << s.epochs_trained << "), checkpoint " << s.checkpoint.string()
          << ", policy export " << s.policy.string()
          << ", log " << s.log.string() << '\n';
    } else if (*oracle_cmd) {
      oracle.seed = oracle_seed;
      const std::string text = oracle_report_json(cmd_oracle(oracle));
      out << text;
      if (oracle_out) open_out(*oracle_out) << text;
    } else if (*report_cmd) {
      if (report_out) {
        std::ostringstream table;
        cmd_report(report_inputs, table);
        open_out(*report_out) << table.str();
        out << table.str();
      } else {
        cmd_report(report_inputs, out);
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}

}  // namespace biswift::cli
