#include <catch2/catch_amalgamated.hpp>

#include "facemanip/facemanip.hpp"

using namespace facemanip;
using Catch::Approx;
namespace fs = std::filesystem;

TEST_CASE("run config defaults echo the training recipe", "[config]") {
  RunConfig cfg;
  REQUIRE(cfg.weights.lambda1 == 0.1);
  REQUIRE(cfg.weights.alpha1 == 0.01);
  REQUIRE(cfg.weights.alpha2 == 50.0);
  REQUIRE(cfg.weights.alpha3 == 0.02);
  REQUIRE(cfg.weights.margin_m == 7.0);
  REQUIRE(cfg.lr == Approx(2e-4));
  REQUIRE(cfg.resolution == 64);
  REQUIRE(cfg.max_steps == 20000);
  REQUIRE(cfg.checkpoint_interval == 500);
  REQUIRE(cfg.plateau_patience == 5);
  REQUIRE(cfg.boundary_source == "predicted");
  REQUIRE_NOTHROW(cfg.validate());
}

TEST_CASE("key=value files override defaults and reject junk", "[config]") {
  auto dir = fs::temp_directory_path() / "fm_cfg";
  fs::create_directories(dir);
  auto path = (dir / "run.cfg").string();
  {
    std::ofstream os(path);
    os << "# comment line\n";
    os << "resolution = 32\n";
    os << "m = 5.5   # inline comment\n";
    os << "alpha2=10\n";
    os << "boundary_source=ground_truth\n";
    os << "pose_range=-0.4:0.4,-0.2:0.2,-0.3:0.3\n";
  }
  RunConfig cfg = RunConfig::from_file(path);
  REQUIRE(cfg.resolution == 32);
  REQUIRE(cfg.weights.margin_m == 5.5);
  REQUIRE(cfg.weights.alpha2 == 10.0);
  REQUIRE(cfg.boundary_source == "ground_truth");
  REQUIRE(cfg.pose_range_override.has_value());
  REQUIRE((*cfg.pose_range_override)[0].first == Approx(-0.4));

  RunConfig bad;
  REQUIRE_THROWS_AS(bad.set("nonsense_key", "1"), ConfigError);
  REQUIRE_THROWS_AS(bad.set("resolution", "abc"), ConfigError);
  REQUIRE_THROWS_AS(RunConfig::from_file((dir / "missing.cfg").string()), ConfigError);

  auto broken = (dir / "broken.cfg").string();
  std::ofstream(broken) << "just a line without equals\n";
  REQUIRE_THROWS_AS(RunConfig::from_file(broken), ConfigError);

  RunConfig invalid;
  invalid.boundary_source = "sometimes";
  REQUIRE_THROWS_AS(invalid.validate(), ConfigError);
}

TEST_CASE("config hash tracks shape-relevant fields only", "[config]") {
  RunConfig a, b;
  REQUIRE(a.config_hash() == b.config_hash());
  b.max_steps = 1234;  // training length does not invalidate checkpoints
  REQUIRE(a.config_hash() == b.config_hash());
  b.resolution = 32;
  REQUIRE(a.config_hash() != b.config_hash());
  RunConfig c;
  c.d_id = 32;
  REQUIRE(a.config_hash() != c.config_hash());
}
