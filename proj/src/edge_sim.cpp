#include "biswift/edge_sim.hpp"

#include <algorithm>
#include <cmath>

#include "biswift/error.hpp"

namespace biswift {

double queue_delay(const EdgeQueues& q, int n1, int n2,
                   const ModelParams& p) {
  if (n2 > 0)
    return q.q1_len * p.t_infer_s + q.q2_len * (p.t_transfer_s + p.t_infer_s);
  if (n1 > 0) return q.q1_len * p.t_infer_s;
  return 0.0;
}

double EdgeServer::enqueue(int n1, int n2) {
  if (n1 < 0 || n2 < 0)
    throw PreconditionError("EdgeServer::enqueue: negative arrivals");
  const double delay = queue_delay(queues_, n1, n2, params_);
  queues_.q1_len += n1;
  queues_.q2_len += n2;
  return delay;
}

ServiceLog EdgeServer::serve(double budget_s) {
  if (!(budget_s > 0.0))
    throw PreconditionError("EdgeServer::serve: budget must be > 0");
  // Small slack so that budgets which are exact multiples of the service time
  // are not lost to rounding.
  constexpr double kSlack = 1e-9;
  ServiceLog log;
  double remaining = budget_s;
  const double t1 = params_.t_infer_s;
  const double t2 = params_.t_transfer_s + params_.t_infer_s;

  const int fit1 = static_cast<int>(std::floor(remaining / t1 + kSlack));
  log.served1 = std::min(queues_.q1_len, std::max(fit1, 0));
  queues_.q1_len -= log.served1;
  remaining -= log.served1 * t1;

  if (queues_.q1_len == 0 && remaining > 0.0) {
    const int fit2 = static_cast<int>(std::floor(remaining / t2 + kSlack));
    log.served2 = std::min(queues_.q2_len, std::max(fit2, 0));
    queues_.q2_len -= log.served2;
  }
  log.q1_left_when_q2_served = log.served2 > 0 ? queues_.q1_len : 0;
  return log;
}

std::pair<EdgeQueues, double> step_queues(EdgeQueues queues,
                                          std::pair<int, int> arrivals,
                                          double service_budget_s,
                                          const ModelParams& params) {
  EdgeServer server(params);
  server.set_queues(queues);
  const double delay = server.enqueue(arrivals.first, arrivals.second);
  server.serve(service_budget_s);
  return {server.queues(), delay};
}

std::vector<double> evaluate_frames(const Chunk& chunk,
                                    const Assignment& assignment, double base,
                                    int anchor_quality_factor,
                                    ReferenceState& refs,
                                    const ModelParams& params) {
  if (assignment.size() != chunk.frames.size())
    throw PreconditionError("evaluate_frames: assignment does not match chunk");
  std::vector<double> acc(chunk.frames.size());
  std::optional<int> dist = refs.frames_since_anchor;
  double residual = refs.residual_since_inference;
  for (std::size_t f = 0; f < chunk.frames.size(); ++f) {
    const FrameType type = assignment.types[f];
    if (dist) ++*dist;
    residual += chunk.frames[f].raw_residual;
    if (type == FrameType::kAnchor) dist = 0;
    if (type != FrameType::kReuse) residual = 0.0;
    ReferenceContext ctx{dist, residual, refs.last_inferred_accuracy};
    acc[f] = frame_accuracy(type, base, anchor_quality_factor, ctx, params);
    if (type != FrameType::kReuse) refs.last_inferred_accuracy = acc[f];
  }
  refs.frames_since_anchor = dist;
  refs.residual_since_inference = residual;
  return acc;
}

ChunkOutcome evaluate_assignment(const StreamEvalContext& ctx,
                                 const Assignment& assignment,
                                 std::optional<double> queue_delay_s) {
  const ModelParams& p = *ctx.model;
  const EncodedChunk enc = encode_chunk(*ctx.chunk, ctx.config, assignment,
                                        ctx.chunk_seconds, p);
  const auto n = assignment.counts();
  const double delay =
      queue_delay_s.value_or(queue_delay(ctx.queues, n[0], n[1], p));

  ChunkOutcome out;
  out.chunk_index = ctx.chunk->chunk_index;
  out.stream = ctx.profile->stream_id;
  out.config = ctx.config;
  out.counts = n;
  out.share = ctx.share;
  out.cap_kbps = ctx.cap_kbps;
  out.sent_bits = enc.total_bits();
  out.mean_residual = ctx.chunk->mean_residual();
  out.object_count = ctx.chunk->object_count;
  out.object_size = ctx.chunk->object_size;
  out.latency =
      compute_latency(n[0], n[1], n[2], static_cast<int>(assignment.size()),
                      enc.total_bits(), ctx.cap_kbps, delay, p);

  ReferenceState refs = ctx.refs;
  out.frame_accuracy =
      evaluate_frames(*ctx.chunk, assignment,
                      base_accuracy(ctx.config, *ctx.profile, p),
                      ctx.config.anchor_quality_factor, refs, p);
  double sum = 0.0;
  for (double a : out.frame_accuracy) sum += a;
  out.mean_accuracy = sum / static_cast<double>(out.frame_accuracy.size());
  out.deadline_violated = out.latency.total_s > ctx.tau_s;
  return out;
}

ChunkOutcome evaluate_thresholds(const StreamEvalContext& ctx, Thresholds th) {
  ClassifierState state = ctx.classifier;
  const Assignment assignment =
      classify_frames(*ctx.chunk, th, state, *ctx.codec);
  ChunkOutcome out = evaluate_assignment(ctx, assignment);
  out.thresholds = th;
  return out;
}

World::World(WorldConfig config, std::vector<StreamProfile> profiles,
             BandwidthTrace trace)
    : config_(std::move(config)),
      profiles_(std::move(profiles)),
      trace_(std::move(trace)),
      server_(config_.model),
      states_(profiles_.size()) {
  if (profiles_.empty()) throw PreconditionError("World: no streams");
  if (config_.frames_per_chunk <= 0 || !(config_.chunk_seconds > 0.0) ||
      !(config_.tau_s > 0.0) || !(config_.gpu_budget_s > 0.0))
    throw ValidationError("World: invalid timing configuration");
  for (const auto& p : profiles_) validate_profile(p);
  validate_params(config_.model);
  config_.gen.frames_per_chunk = config_.frames_per_chunk;
  generate_upcoming();
}

void World::generate_upcoming() {
  upcoming_.clear();
  upcoming_.reserve(profiles_.size());
  for (const auto& p : profiles_)
    upcoming_.push_back(gen_chunk(p, chunk_index_, config_.seed, config_.gen));
}

double World::total_bandwidth() const {
  return biswift::total_bandwidth(trace_, now_s());
}

QualityConfig World::next_config(std::size_t c, double cap_kbps) const {
  const auto& s = states_.at(c);
  return select_quality_config(cap_kbps, s.prev_used_kbps, s.level,
                               config_.codec.up_margin,
                               config_.anchor_quality_factor);
}

StreamEvalContext World::context(std::size_t c, double cap_kbps,
                                 const QualityConfig& config,
                                 double share) const {
  StreamEvalContext ctx;
  ctx.profile = &profiles_.at(c);
  ctx.chunk = &upcoming_.at(c);
  ctx.model = &config_.model;
  ctx.codec = &config_.codec;
  ctx.config = config;
  ctx.cap_kbps = cap_kbps;
  ctx.share = share;
  ctx.chunk_seconds = config_.chunk_seconds;
  ctx.tau_s = config_.tau_s;
  ctx.queues = server_.queues();
  ctx.classifier = states_[c].classifier;
  ctx.refs = states_[c].refs;
  return ctx;
}

StreamEvalContext World::context(std::size_t c,
                                 const Allocation& allocation) const {
  const double cap = allocation.cap(c);
  return context(c, cap, next_config(c, cap), allocation.shares.at(c));
}

StepResult World::step(const Allocation& allocation,
                       const ThresholdChooser& chooser) {
  const std::size_t n = profiles_.size();
  if (allocation.shares.size() != n)
    throw PreconditionError("World::step: one share per stream required");
  const double bw = total_bandwidth();
  if (allocation.total_bw_kbps != bw || allocation.caps_sum() > bw)
    throw PreconditionError(
        "World::step: allocation must split the current total bandwidth");

  StepResult result;
  result.chunk_index = chunk_index_;
  result.total_bw_kbps = bw;
  result.allocation = allocation;

  // Streams join the edge queue in an order that rotates every chunk, so no
  // stream always queues first. Each stream decides against the queue it
  // actually joins.
  std::vector<StreamEvalContext> contexts(n);
  std::vector<Assignment> assignments(n);
  std::vector<Thresholds> chosen(n);
  std::vector<double> delays(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t c = (k + static_cast<std::size_t>(chunk_index_)) % n;
    contexts[c] = context(c, allocation);
    chosen[c] = chooser(c, contexts[c]);
    assignments[c] = classify_frames(upcoming_[c], chosen[c],
                                     states_[c].classifier, config_.codec);
    const auto counts = assignments[c].counts();
    delays[c] = server_.enqueue(counts[0], counts[1]);
  }

  result.outcomes.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    ChunkOutcome out = evaluate_assignment(contexts[c], assignments[c],
                                           delays[c]);
    out.thresholds = chosen[c];
    out.stream = static_cast<int>(c);
    // Commit decoder references along the same path evaluate_assignment took.
    evaluate_frames(upcoming_[c], assignments[c],
                    base_accuracy(contexts[c].config, profiles_[c],
                                  config_.model),
                    contexts[c].config.anchor_quality_factor, states_[c].refs,
                    config_.model);
    states_[c].level = contexts[c].config.level;
    // Everything sent, anchors included, counts as used bandwidth.
    states_[c].prev_used_kbps =
        out.sent_bits / 1000.0 / config_.chunk_seconds;
    result.outcomes.push_back(std::move(out));
  }

  result.service = server_.serve(config_.gpu_budget_s * config_.chunk_seconds);
  result.queues_after = server_.queues();
  ++chunk_index_;
  generate_upcoming();
  return result;
}

StepResult run_chunk_step(World& world, const Allocation& allocation,
                          std::span<const Thresholds> thresholds) {
  if (thresholds.size() != world.num_streams())
    throw PreconditionError("run_chunk_step: one threshold pair per stream");
  return world.step(allocation,
                    [&](std::size_t c, const StreamEvalContext&) {
                      return thresholds[c];
                    });
}

}  // namespace biswift
