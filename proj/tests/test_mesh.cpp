#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <vector>

#include "mch/mesh.hpp"

using namespace mch;

TEST_CASE("fine grid counts") {
  CHECK(FineGrid(8, 2).cell_count() == 64);
  CHECK(FineGrid(8, 2).node_count() == 81);
  CHECK(FineGrid(2, 2).cell_count() == 4);
  CHECK(FineGrid(2, 2).node_count() == 9);
  CHECK_THROWS_AS(FineGrid(1, 2), std::invalid_argument);
}

TEST_CASE("row-major indexing round trip on n=256") {
  const FineGrid grid(256, 2);
  CHECK(grid.cell_count() == 65536);
  for (int id = 0; id < grid.cell_count(); ++id) {
    const MultiIndex c = grid.cell_coords(id);
    CHECK(grid.cell_index(c) == id);
    // Corner nodes of cell (i,j) against the row-major formula.
    const int base = c[0] + c[1] * 257;
    MultiIndex n = c;
    CHECK(grid.node_index(n) == base);
    n[0] += 1;
    CHECK(grid.node_index(n) == base + 1);
    n[0] -= 1;
    n[1] += 1;
    CHECK(grid.node_index(n) == base + 257);
    n[0] += 1;
    CHECK(grid.node_index(n) == base + 258);
  }
}

namespace {

// Every fine cell in exactly one coarse cell, and cells fill the domain.
void check_tiling(const FineGrid& grid, const ShiftedPartition& p) {
  std::vector<int> owner(grid.cell_count(), -1);
  int total = 0;
  for (int id = 0; id < p.cell_count(); ++id) {
    for (int f : p.cell(id).fine_cells) {
      REQUIRE(owner[f] == -1);
      owner[f] = id;
      ++total;
    }
  }
  CHECK(total == grid.cell_count());
  for (int f = 0; f < grid.cell_count(); ++f) {
    CHECK(owner[f] == p.cell_of_fine(f));
  }
  double measure = 0;
  for (int id = 0; id < p.cell_count(); ++id) measure += p.cell(id).measure;
  CHECK(measure == doctest::Approx(1.0).epsilon(1e-14));
}

}  // namespace

TEST_CASE("aligned partition has no merging") {
  const FineGrid grid(16, 2);
  const double z[2] = {0.0, 0.0};
  const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  CHECK(p.cell_count() == 16);
  for (int id = 0; id < p.cell_count(); ++id) {
    CHECK_FALSE(p.cell(id).merged);
    CHECK(p.cell(id).fine_cells.size() == 16);
  }
  check_tiling(grid, p);
}

TEST_CASE("thin boundary slivers merge into their neighbors") {
  const FineGrid grid(16, 2);
  const double z[2] = {1.0 / 16, 1.0 / 16};
  const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  CHECK(p.cell_count() == 16);
  CHECK(p.segment_count(0) == 4);
  // Leading sliver of width 1 fine cell was absorbed by the first segment.
  CHECK(p.segment(0, 0).begin == 0);
  CHECK(p.segment(0, 0).end == 5);
  CHECK(p.segment(0, 0).merged);
  CHECK(p.segment(0, 3).end == 16);
  check_tiling(grid, p);
}

TEST_CASE("half-scale slivers stay separate cells") {
  const FineGrid grid(16, 2);
  const double z[2] = {1.0 / 8, 0.0};
  const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  CHECK(p.segment_count(0) == 5);  // two slivers of width scale/2 kept
  CHECK(p.segment_count(1) == 4);
  CHECK(p.cell_count() == 20);
  CHECK(p.segment(0, 0).extent() == 2);
  CHECK(p.segment(0, 4).extent() == 2);
  check_tiling(grid, p);
}

TEST_CASE("merging keeps the extent bound for every shift") {
  const FineGrid grid(16, 2);
  const int m = 4;
  for (int s = 0; s < m; ++s) {
    const double z[2] = {s / 16.0, 0.0};
    const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
    for (int axis = 0; axis < 2; ++axis) {
      for (int i = 0; i < p.segment_count(axis); ++i) {
        CHECK(4 * p.segment(axis, i).extent() >= m);
      }
    }
    check_tiling(grid, p);
  }
}

TEST_CASE("partition rejects non-commensurate inputs") {
  const FineGrid grid(16, 2);
  const double z0[2] = {0.0, 0.0};
  CHECK_THROWS_AS(ShiftedPartition::build(grid, 0.3, z0),
                  std::invalid_argument);
  const double z1[2] = {0.01, 0.0};
  CHECK_THROWS_AS(ShiftedPartition::build(grid, 0.25, z1),
                  std::invalid_argument);
  const double z2[2] = {0.25, 0.0};
  CHECK_THROWS_AS(ShiftedPartition::build(grid, 0.25, z2),
                  std::invalid_argument);
}

TEST_CASE("oversample with k=0 is the target cell") {
  const FineGrid grid(16, 2);
  const double z[2] = {0.0, 0.0};
  const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  const int cell = p.cell_id({1, 1, 0});
  const OversampledPatch patch = oversample(p, cell, 0);
  CHECK(patch.subcells == std::vector<int>{cell});
  CHECK(patch.cell_box.lo[0] == p.cell(cell).box.lo[0]);
  CHECK(patch.cell_box.hi[1] == p.cell(cell).box.hi[1]);
}

TEST_CASE("nested oversampling produces the expected block") {
  const FineGrid grid(32, 2);
  const double z[2] = {0.0, 0.0};
  const ShiftedPartition p_h = ShiftedPartition::build(grid, 0.25, z);
  const ShiftedPartition p_he = ShiftedPartition::build(grid, 1.0 / 16, z);
  const int cell = p_h.cell_id({1, 1, 0});  // interior: 4x4 subcells + 2 layers
  const OversampledPatch patch = oversample_nested(p_h, cell, p_he, 2);
  CHECK(patch.subcells.size() == 64);  // (4 + 2*2)^2
  CHECK(patch.seg_hi[0] - patch.seg_lo[0] + 1 == 8);
}

TEST_CASE("corner patch is clipped at the domain") {
  const FineGrid grid(16, 2);
  const double z[2] = {0.0, 0.0};
  const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  const OversampledPatch patch = oversample(p, p.cell_id({0, 0, 0}), 3);
  // 1 + 3 layers clipped to 4 segments per axis.
  CHECK(patch.subcells.size() == 16);
  int count = 0;
  for (int id = 0; id < p.cell_count(); ++id) {
    const CoarseCell& c = p.cell(id);
    if (c.seg[0] <= 3 && c.seg[1] <= 3) ++count;
  }
  CHECK(count == 16);
}

TEST_CASE("oversampled patches are nested in k") {
  const FineGrid grid(16, 2);
  const double z[2] = {1.0 / 16, 0.0};
  const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  for (int cell = 0; cell < p.cell_count(); ++cell) {
    for (int k = 0; k < 3; ++k) {
      const OversampledPatch a = oversample(p, cell, k);
      const OversampledPatch b = oversample(p, cell, k + 1);
      const std::set<int> bigger(b.subcells.begin(), b.subcells.end());
      for (int s : a.subcells) CHECK(bigger.count(s) == 1);
    }
  }
}

TEST_CASE("patch boundary mask marks exactly the box faces") {
  const FineGrid grid(16, 2);
  const double z[2] = {0.0, 0.0};
  const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  const OversampledPatch patch = oversample(p, p.cell_id({1, 1, 0}), 1);
  int boundary = 0;
  for (int l = 0; l < patch.node_count(); ++l) {
    const MultiIndex c = local_node_coords(patch.node_box, l);
    const bool on_face =
        c[0] == patch.node_box.lo[0] || c[0] == patch.node_box.hi[0] ||
        c[1] == patch.node_box.lo[1] || c[1] == patch.node_box.hi[1];
    CHECK(static_cast<bool>(patch.boundary[l]) == on_face);
    boundary += on_face ? 1 : 0;
  }
  CHECK(patch.free_count == patch.node_count() - boundary);
}
