#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

#include "biswift/error.hpp"
#include "biswift/scenario.hpp"

using namespace biswift;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = BISWIFT_SOURCE_DIR;

std::string error_of(const std::string& json) {
  try {
    parse_scenario(json, kRoot / "scenarios");
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

const std::string kMinimal =
    R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000})";

}  // namespace

TEST_CASE("shipped scenarios load") {
  for (const char* name : {"default.json", "single.json", "hetero3.json"}) {
    const Scenario sc = load_scenario(kRoot / "scenarios" / name);
    CHECK(sc.num_streams() >= 1);
    REQUIRE(sc.checkpoint.has_value());
    CHECK(fs::exists(*sc.checkpoint));
  }
  const Scenario def = load_scenario(kRoot / "scenarios/default.json");
  CHECK(def.num_streams() == 4);
  REQUIRE(def.trace_path.has_value());
  CHECK(fs::exists(*def.trace_path));
  const Scenario h3 = load_scenario(kRoot / "scenarios/hetero3.json");
  CHECK(h3.num_streams() == 3);
  CHECK(h3.streams[0].difficulty == Difficulty::kHard);
  CHECK(h3.trace.at(10.0) == 8000.0);
}

TEST_CASE("minimal scenario takes the documented defaults") {
  const Scenario sc = parse_scenario(kMinimal, ".");
  CHECK(sc.world.frames_per_chunk == 30);
  CHECK(sc.world.chunk_seconds == 1.0);
  CHECK(sc.weights.alpha1 == 0.5);
  CHECK(sc.weights.alpha2 == 0.5);
  CHECK(sc.weights.tau_s == 1.0);
  CHECK(sc.control_interval == 10);
  CHECK(sc.allocator == AllocatorKind::kEven);
  CHECK(sc.world.anchor_quality_factor == 60);
  CHECK(sc.agents.high.alpha == 0.2);
}

TEST_CASE("validation errors carry the field path") {
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}, {"difficulty": "medium"}],
                     "bandwidth_kbps": 8000})")
            .find("streams[1].difficulty") != std::string::npos);
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000,
                     "colour": 3})")
            .find("colour") != std::string::npos);
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000,
                     "reward": {"alpha1": -1}})")
            .find("reward.alpha1") != std::string::npos);
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000,
                     "quality": {"anchor_quality_factor": 0}})")
            .find("quality.anchor_quality_factor") != std::string::npos);
  CHECK(error_of(R"({"streams": [{"difficulty": "custom",
                     "params": {"mean_object_count": 3, "mean_object_size": 2,
                                "residual_intensity": 0.1, "scene_change_rate": 0}}],
                     "bandwidth_kbps": 8000})") != "");
  CHECK(error_of(R"({"streams": [], "bandwidth_kbps": 8000})").find("streams") !=
        std::string::npos);
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}]})") != "");
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000,
                     "trace": "../traces/constant_8mbps.txt"})") != "");
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}],
                     "trace": "no_such_trace.txt"})")
            .find("trace") != std::string::npos);
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000,
                     "fps": 25, "chunk_seconds": 0.3})")
            .find("fps") != std::string::npos);
  CHECK(error_of(R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000,
                     "allocator": "greedy"})")
            .find("allocator") != std::string::npos);
  CHECK(error_of("{not json").find("JSON") != std::string::npos);
  CHECK_THROWS_AS(load_scenario(kRoot / "scenarios/missing.json"), ValidationError);
}

TEST_CASE("relative paths resolve against the scenario file") {
  const Scenario sc = parse_scenario(
      R"({"streams": [{"difficulty": "hard"}], "trace": "../traces/constant_8mbps.txt",
          "checkpoint": "../checkpoints/single"})",
      kRoot / "scenarios");
  CHECK(sc.trace.at(42.0) == 8000.0);
  CHECK(fs::equivalent(*sc.checkpoint, kRoot / "checkpoints/single"));
}

TEST_CASE("classifier and model sections") {
  const Scenario sc = parse_scenario(
      R"({"streams": [{"difficulty": "easy"}], "bandwidth_kbps": 8000,
          "classifier": {"fixed": [0.8, 0.2]},
          "model": {"t_infer_s": 0.03}})",
      ".");
  CHECK(sc.classifier == ClassifierKind::kFixed);
  CHECK(sc.fixed == Thresholds{0.8, 0.2});
  CHECK(sc.world.model.t_infer_s == 0.03);
  CHECK(session_config(sc).fixed == Thresholds{0.8, 0.2});
}

TEST_CASE("worlds depend only on the seed") {
  const Scenario sc = load_scenario(kRoot / "scenarios/default.json");
  World a = make_world(sc, 5), b = make_world(sc, 5), c = make_world(sc, 6);
  CHECK(a.upcoming_chunk(2).frames[3].raw_residual ==
        b.upcoming_chunk(2).frames[3].raw_residual);
  CHECK(a.upcoming_chunk(2).frames[3].raw_residual !=
        c.upcoming_chunk(2).frames[3].raw_residual);
}

TEST_CASE("training defaults follow the learned components") {
  const Scenario h3 = load_scenario(kRoot / "scenarios/hetero3.json");
  const TrainConfig t = train_config(h3, 3, 1);
  CHECK(t.epochs == 3);
  CHECK(t.train_high);
  CHECK_FALSE(t.train_low);
  CHECK(t.fallback_allocator == AllocatorKind::kEven);
  CHECK(static_cast<bool>(t.validate));
  const Scenario single = load_scenario(kRoot / "scenarios/single.json");
  const TrainConfig s = train_config(single, 1, 1);
  CHECK(s.train_low);
  CHECK_FALSE(s.train_high);
}
