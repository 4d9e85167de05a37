#ifndef BISWIFT_CLI_HPP_
#define BISWIFT_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biswift/orchestrator.hpp"
#include "biswift/scenario.hpp"

namespace biswift::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitRuntime = 2,
  kExitDivergence = 3,
};

inline constexpr int kCsvSchema = 1;
inline constexpr const char* kRunColumns =
    "chunk,stream,alloc_share,bitrate_kbps,resolution,n_anchor,n_transfer,"
    "n_reuse,mean_acc,trans_s,queue_s,comp_s,total_s,violated,reward";

/// Seed precedence: explicit flag, then BISWIFT_SIM_SEED, then the scenario.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag,
                           std::uint64_t scenario_seed);

/// Agents sized for the scenario, loaded from `checkpoint` when given.
Agents scenario_agents(const Scenario& scenario,
                       const std::optional<std::filesystem::path>& checkpoint,
                       std::uint64_t init_seed);

// ------------------------------------------------------------------- run

struct RunOptions {
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> allocator;
  std::optional<std::string> classifier;  // learned or grid_oracle
  std::optional<std::filesystem::path> checkpoint;
  std::optional<int> chunks;
  std::filesystem::path out = "out";
  int replicates = 1;
  int jobs = 1;
};

struct RunSummary {
  std::string scenario;
  std::string allocator;
  std::string classifier;
  std::uint64_t seed = 0;
  int chunks = 0;
  FairnessMetrics fairness;
  std::vector<double> stream_mean_accuracy;
  double utilization = 0.0;
  double anchor_fraction = 0.0;
  double transfer_fraction = 0.0;
  double reuse_fraction = 0.0;
  double trans_share = 0.0;
  double queue_share = 0.0;
  double comp_share = 0.0;
  double violation_rate = 0.0;
  double mean_reward = 0.0;
  std::filesystem::path csv;
  std::filesystem::path summary;
};

void write_run_csv(std::ostream& out, const std::vector<SessionStep>& steps,
                   const std::string& allocator, const std::string& classifier,
                   std::uint64_t seed, double chunk_seconds);

RunSummary summarize_run(const std::vector<SessionStep>& steps,
                         double chunk_seconds);

/// One session per replicate seed (seed, seed + 1, ...). Replicates run on
/// up to `jobs` threads; outputs do not depend on `jobs`.
std::vector<RunSummary> cmd_run(const RunOptions& options);

// ----------------------------------------------------------------- train

struct TrainOptions {
  std::filesystem::path scenario;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> resume;
  std::filesystem::path out = "out";
};

struct TrainSummary {
  TrainResult result;
  int epochs_trained = 0;  // including any resumed epochs
  std::filesystem::path checkpoint;
  std::filesystem::path policy;
  std::filesystem::path log;
};

/// Writes `<out>/checkpoint` (latest plus one directory per epoch), the
/// compact `<out>/policy` export and `<out>/train_log.csv`.
TrainSummary cmd_train(const TrainOptions& options);

// ---------------------------------------------------------------- oracle

struct OracleOptions {
  std::filesystem::path scenario;
  std::optional<std::uint64_t> seed;
  int frames = 8;
  std::optional<int> streams;  // default: min(scenario streams, 3)
  std::optional<int> levels;   // default: scenario oracle_levels
};

struct StreamOracleReport {
  int stream = 0;
  double exhaustive_accuracy = 0.0;
  std::string exhaustive_types;  // e.g. "12333233"
  std::int64_t exhaustive_evaluated = 0;
  double exhaustive_ms = 0.0;
  Thresholds grid_best;
  double grid_accuracy = 0.0;
  double grid_reward = 0.0;
  int grid_evaluated = 0;
  double grid_ms = 0.0;
  double gap = 0.0;  // 1 - grid / exhaustive accuracy
};

struct OracleReport {
  int frames = 0;
  int streams = 0;
  int levels = 0;
  std::vector<StreamOracleReport> per_stream;
  int allocation_evaluated = 0;
  std::vector<double> allocation_shares;
  double allocation_max_min_reward = 0.0;
  double even_min_reward = 0.0;
  double allocation_ms = 0.0;
  double joint_search_size = 0.0;       // 3^k * xi^N
  double decomposed_search_size = 0.0;  // |low actions| + |high actions|
};

/// Throws PreconditionError when the instance exceeds the oracle guards.
OracleReport cmd_oracle(const OracleOptions& options);
std::string oracle_report_json(const OracleReport& report);

// ---------------------------------------------------------------- report

struct RunTable {
  std::map<std::string, std::string> meta;  // from the schema comment line
  std::vector<int> chunk;
  std::vector<int> stream;
  std::vector<double> alloc_share;
  std::vector<double> mean_acc;
  std::vector<double> trans_s;
  std::vector<int> violated;
  std::vector<int> n_anchor, n_transfer, n_reuse;
};

/// Throws ValidationError naming the offending column on a schema mismatch.
RunTable read_run_csv(std::istream& in, const std::string& source);

struct ReportRow {
  std::string allocator;
  int runs = 0;
  std::int64_t records = 0;
  double mean_acc = 0.0;
  double min_acc = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
  double spread = 0.0;
  double utilization = 0.0;
  double violation_rate = 0.0;
  double anchor_fraction = 0.0;
};

std::vector<ReportRow> build_report(const std::vector<RunTable>& runs);
void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows);
std::vector<ReportRow> cmd_report(const std::vector<std::filesystem::path>& csvs,
                                  std::ostream& out);

// ------------------------------------------------------------ entrypoint

/// Exit code reported for an exception escaping a command.
int exit_code_for(const std::exception& e);

/// Parses arguments and dispatches. Never throws; returns an ExitCode.
int run_main(int argc, const char* const* argv, std::ostream& out,
             std::ostream& err);

}  // namespace biswift::cli

#endif  // BISWIFT_CLI_HPP_
