#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mch/io.hpp"
#include "mch/pipeline.hpp"
#include "mch/util.hpp"

using namespace mch;

namespace {

const char* kTinyConfig = R"(
# two-channel medium on a small grid
[medium]
kind = channels
kappa_low = 1
kappa_high = 1e4
channel_count = 1
channel_width = 1/8

[scales]
n_fine = 32
h_eps = 1/8
h_coarse = 1/4
k_layers = 2

[macro]
bc = dirichlet
load = constant
amplitude = 1

[tolerances]
solver = 1e-10

[output]
dir = OUTDIR
)";

std::string tiny_config_text(const std::string& out_dir) {
  std::string text = kTinyConfig;
  const auto pos = text.find("OUTDIR");
  text.replace(pos, 6, out_dir);
  return text;
}

std::string temp_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const std::string dir = (fs::temp_directory_path() / name).string();
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("fractions, sections and defaults") {
    const RunConfig cfg = parse_config_text(tiny_config_text("out"));
    CHECK(cfg.medium.kind == MediumKind::kChannels);
    CHECK(cfg.medium.kappa_high == 1e4);
    CHECK(cfg.n_fine == 32);
    CHECK(cfg.h_eps == doctest::Approx(0.125));
    CHECK(cfg.h_coarse == doctest::Approx(0.25));
    CHECK(cfg.k_layers == 2);
    CHECK(cfg.bc == MacroBc::kDirichlet);
    CHECK(cfg.tol == 1e-10);
    CHECK(cfg.threads == 1);
  }

  SUBCASE("hash is stable and round-trips through the resolved text") {
    const RunConfig cfg = parse_config_text(tiny_config_text("out"));
    const RunConfig again = parse_config_text(cfg.resolved_text());
    CHECK(cfg.config_hash() == again.config_hash());
  }

  SUBCASE("invalid scale relations are rejected") {
    std::string bad = tiny_config_text("out");
    const auto pos = bad.find("h_eps = 1/8");
    bad.replace(pos, 11, "h_eps = 1/6");
    CHECK_THROWS_AS(parse_config_text(bad), std::invalid_argument);
  }

  SUBCASE("default oversampling rule kicks in for k_layers = -1") {
    std::string text = tiny_config_text("out");
    const auto pos = text.find("k_layers = 2");
    text.replace(pos, 12, "k_layers = -1");
    const RunConfig cfg = parse_config_text(text);
    CHECK(cfg.resolved_k(1.0 / 8) == 3);
    CHECK(cfg.resolved_k(1.0 / 32) == 5);
  }
}

TEST_CASE("medium generation is reproducible through the pipeline") {
  const std::string dir = temp_dir("mch_generate");
  RunConfig cfg = parse_config_text(tiny_config_text(dir));
  const FineGrid grid(cfg.n_fine, 2);
  const Medium a = generate_medium(cfg.medium, grid);
  write_field_binary(dir + "/a.bin", a.kappa);
  const Medium b = generate_medium(cfg.medium, grid);
  write_field_binary(dir + "/b.bin", b.kappa);
  const std::string ca = read_text_file(dir + "/a.bin");
  const std::string cb = read_text_file(dir + "/b.bin");
  CHECK(ca == cb);  // byte-identical rerun
  CHECK(read_field_binary(dir + "/a.bin").content_hash() ==
        a.kappa.content_hash());
  std::filesystem::remove_all(dir);
}

TEST_CASE("tiny pipeline completes with a passing identity check") {
  const std::string dir = temp_dir("mch_pipeline");
  RunConfig cfg = parse_config_text(tiny_config_text(dir));
  const PipelineOutputs out = run_pipeline(cfg, true);
  CHECK(out.homog.identity_discrepancy <= 1e-11);
  CHECK(out.nlmc.rel_energy_error < 1.0);
  CHECK(out.homog.sol.residual <= 1e-10);
  CHECK(out.row.config_hash == hex64(cfg.config_hash()));
  for (const char* name :
       {"config.resolved.ini", "kappa.bin", "kappa.csv", "u_fine.bin",
        "u_nlmc.bin", "partition.csv", "alpha.csv", "beta.csv", "gamma.csv",
        "macro.csv", "reconstruction.bin", "report.csv"}) {
    CHECK(std::filesystem::exists(dir + "/" + name));
  }
  // The broken reconstruction round-trips through its binary format.
  FineGrid grid_back;
  const BrokenFunction recon =
      read_broken_binary(dir + "/reconstruction.bin", &grid_back);
  CHECK(grid_back.n() == cfg.n_fine);
  REQUIRE(recon.pieces.size() == out.homog.reconstruction.pieces.size());
  for (std::size_t i = 0; i < recon.pieces.size(); ++i) {
    CHECK((recon.pieces[i].fn.values -
           out.homog.reconstruction.pieces[i].fn.values)
              .norm() == 0.0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("zero load produces zero solutions and zero errors") {
  const std::string dir = temp_dir("mch_zero");
  RunConfig cfg = parse_config_text(tiny_config_text(dir));
  cfg.load.amplitude = 0.0;
  const PipelineOutputs out = run_pipeline(cfg, false);
  CHECK(out.fine.u.values.norm() == 0.0);
  CHECK(out.nlmc.u_glo.values.norm() <= 1e-12);
  CHECK(out.nlmc.energy_error <= 1e-12);
  CHECK(out.homog.l2_error <= 1e-12);
  std::filesystem::remove_all(dir);
}

TEST_CASE("cell-solution cache skips second-run solves") {
  const std::string dir = temp_dir("mch_cache");
  RunConfig cfg = parse_config_text(tiny_config_text(dir + "/out"));
  cfg.cache_dir = dir + "/cache";
  const PipelineOutputs first = run_pipeline(cfg, false);
  CHECK(first.stats.cache_hits == 0);
  CHECK(first.stats.solved == 16);
  const PipelineOutputs second = run_pipeline(cfg, false);
  CHECK(second.stats.cache_hits == 16);
  CHECK(second.stats.solved == 0);
  // Bitwise identical results through the cache.
  CHECK((second.homog.sol.u - first.homog.sol.u).norm() == 0.0);
  CHECK(second.nlmc.energy_error == first.nlmc.energy_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("studies emit rows and slope summaries") {
  const std::string dir = temp_dir("mch_study");
  RunConfig cfg = parse_config_text(tiny_config_text(dir));

  SUBCASE("h_eps sweep with a slope") {
    cfg.study.h_eps_sweep = {0.25, 0.125};
    cfg.k_layers = -1;  // default rule: wider patches for finer h_eps
    const StudyOutputs out = run_study(cfg);
    REQUIRE(out.rows.size() == 2);
    CHECK(out.rows[0].study == "nlmc_h_eps");
    CHECK(out.rows[1].energy_error < out.rows[0].energy_error);
    REQUIRE(out.summaries.size() == 1);
    CHECK(out.summaries[0].first == "slope_energy_vs_h_eps");
    CHECK(std::isfinite(out.summaries[0].second));
    CHECK(out.csv.find("slope_energy_vs_h_eps") != std::string::npos);
  }

  SUBCASE("single-point sweep marks the slope as not applicable") {
    cfg.study.h_eps_sweep = {0.125};
    const StudyOutputs out = run_study(cfg);
    REQUIRE(out.rows.size() == 1);
    REQUIRE(out.summaries.size() == 1);
    CHECK(std::isnan(out.summaries[0].second));
  }

  SUBCASE("contrast sweep reports the robustness ratio") {
    cfg.study.contrast_sweep = {1e2, 1e4};
    const StudyOutputs out = run_study(cfg);
    REQUIRE(out.rows.size() == 2);
    CHECK(out.rows[0].contrast == 1e2);
    CHECK(out.rows[1].contrast == 1e4);
    bool found = false;
    for (const auto& [name, value] : out.summaries) {
      if (name == "contrast_error_ratio") {
        found = true;
        CHECK(value >= 1.0);
      }
    }
    CHECK(found);
  }
}

TEST_CASE("verify passes on the tiny configuration") {
  const std::string dir = temp_dir("mch_verify");
  RunConfig cfg = parse_config_text(tiny_config_text(dir));
  const VerifyOutputs out = run_verify(cfg);
  for (const VerifyCheck& check : out.checks) {
    INFO(check.name, " = ", check.value, " vs ", check.tolerance);
    CHECK(check.pass);
  }
  CHECK(out.all_pass());
  std::filesystem::remove_all(dir);
}
