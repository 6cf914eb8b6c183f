#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mch/field.hpp"
#include "mch/io.hpp"
#include "mch/mesh.hpp"

using namespace mch;

namespace {

GeometrySpec channel_spec(double width, int count, double kappa_high) {
  GeometrySpec spec;
  spec.kind = MediumKind::kChannels;
  spec.kappa_low = 1.0;
  spec.kappa_high = kappa_high;
  spec.channel_count = count;
  spec.channel_width = width;
  return spec;
}

}  // namespace

TEST_CASE("constant medium is single continuum") {
  const FineGrid grid(8, 2);
  GeometrySpec spec;
  const Medium medium = generate_medium(spec, grid);
  for (int c = 0; c < grid.cell_count(); ++c) {
    CHECK(medium.kappa.value(c) == 1.0);
    CHECK(medium.continua.label(c) == 0);
  }
  CHECK_FALSE(medium.continua.two_continuum());
}

TEST_CASE("two channels of width 1/32 cover 1/16 of the domain") {
  const FineGrid grid(128, 2);
  const Medium medium = generate_medium(channel_spec(1.0 / 32, 2, 1e4), grid);
  int high = 0;
  for (int c = 0; c < grid.cell_count(); ++c) high += medium.continua.label(c);
  CHECK(high == grid.cell_count() / 16);
  CHECK(medium.continua.two_continuum());
  CHECK(contrast(medium.kappa) == 1e4);
}

TEST_CASE("periodic inclusions at half period cover a quarter") {
  const FineGrid grid(64, 2);
  GeometrySpec spec;
  spec.kind = MediumKind::kPeriodicInclusions;
  spec.kappa_high = 100.0;
  spec.period = 1.0 / 16;
  spec.inclusion_size = 1.0 / 32;
  const Medium medium = generate_medium(spec, grid);
  int high = 0;
  for (int c = 0; c < grid.cell_count(); ++c) high += medium.continua.label(c);
  CHECK(high == grid.cell_count() / 4);
}

TEST_CASE("contrast ratios") {
  const FineGrid grid(2, 2);
  CHECK(contrast(CoefficientField(grid, {1, 1, 1, 1})) == 1.0);
  CHECK(contrast(CoefficientField(grid, {1, 1e4, 1, 1})) == 1e4);
  CHECK(contrast(CoefficientField(grid, {0.5, 1, 1e6, 1})) == 2e6);
}

TEST_CASE("volume fractions per cell and continuum") {
  const FineGrid grid(32, 2);
  const double z[2] = {0.0, 0.0};
  ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);

  SUBCASE("constant medium leaves continuum 1 empty everywhere") {
    const Medium medium = generate_medium(GeometrySpec{}, grid);
    const VolumeFractions vf = volume_fractions(medium.continua, p);
    for (int id = 0; id < p.cell_count(); ++id) {
      CHECK(vf.measure[id][1] == 0.0);
      CHECK(vf.empty[id][1] == 1);
      CHECK(vf.measure[id][0] == doctest::Approx(p.cell(id).measure));
    }
  }

  SUBCASE("channel overlap equals the fine-cell count") {
    // One channel of width 1/4 centered at y = 1/2 fills cells in rows 1, 2.
    const Medium medium = generate_medium(channel_spec(0.25, 1, 1e3), grid);
    const VolumeFractions vf = volume_fractions(medium.continua, p);
    for (int id = 0; id < p.cell_count(); ++id) {
      const CoarseCell& cell = p.cell(id);
      const double want =
          (cell.seg[1] == 1 || cell.seg[1] == 2) ? cell.measure / 2.0 : 0.0;
      CHECK(vf.measure[id][1] == doctest::Approx(want).epsilon(1e-14));
      CHECK(vf.measure[id][0] + vf.measure[id][1] ==
            doctest::Approx(cell.measure).epsilon(1e-14));
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  const FineGrid grid(64, 2);
  GeometrySpec spec;
  spec.kind = MediumKind::kPeriodicInclusions;
  spec.kappa_high = 10.0;
  spec.period = 1.0 / 8;
  spec.inclusion_size = 1.0 / 32;
  spec.jitter_cells = 2;
  spec.seed = 42;
  const Medium a = generate_medium(spec, grid);
  const Medium b = generate_medium(spec, grid);
  CHECK(a.kappa.content_hash() == b.kappa.content_hash());
  spec.seed = 43;
  const Medium c = generate_medium(spec, grid);
  CHECK(a.kappa.content_hash() != c.kappa.content_hash());
}

TEST_CASE("unresolvable feature sizes are rejected") {
  const FineGrid grid(8, 2);
  CHECK_THROWS_AS(generate_medium(channel_spec(1.0 / 3, 1, 10.0), grid),
                  std::invalid_argument);
  GeometrySpec spec;
  spec.kind = MediumKind::kPeriodicInclusions;
  spec.kappa_high = 10.0;
  spec.period = 1.0 / 3;
  spec.inclusion_size = 1.0 / 6;
  CHECK_THROWS_AS(generate_medium(spec, grid), std::invalid_argument);
}

TEST_CASE("binary field round trip is exact") {
  const FineGrid grid(16, 2);
  const Medium medium = generate_medium(channel_spec(0.125, 2, 1e4), grid);
  const std::string path =
      (std::filesystem::temp_directory_path() / "mch_field_rt.bin").string();
  write_field_binary(path, medium.kappa);
  const CoefficientField back = read_field_binary(path);
  REQUIRE(back.grid().n() == 16);
  for (int c = 0; c < grid.cell_count(); ++c) {
    CHECK(back.value(c) == medium.kappa.value(c));
  }
  CHECK(back.content_hash() == medium.kappa.content_hash());
  const ContinuumMap labels = derive_continua(back);
  for (int c = 0; c < grid.cell_count(); ++c) {
    CHECK(labels.label(c) == medium.continua.label(c));
  }
  std::remove(path.c_str());
}
