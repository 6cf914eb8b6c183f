#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mch {

inline constexpr int kMaxDim = 3;

using MultiIndex = std::array<int, kMaxDim>;

// Half-open box of fine-grid cell indices, [lo, hi) per used axis.
struct CellBox {
  MultiIndex lo{};
  MultiIndex hi{};
  int dim = 2;
};

// Inclusive box of fine-grid node indices, [lo, hi] per used axis.
struct NodeBox {
  MultiIndex lo{};
  MultiIndex hi{};
  int dim = 2;
};

int box_cell_count(const CellBox& b);
int box_node_count(const NodeBox& b);
int local_cell_index(const CellBox& b, const MultiIndex& c);
int local_node_index(const NodeBox& b, const MultiIndex& c);
MultiIndex local_cell_coords(const CellBox& b, int local);
MultiIndex local_node_coords(const NodeBox& b, int local);
bool box_contains_cell(const CellBox& b, const MultiIndex& c);
bool box_contains_node(const NodeBox& b, const MultiIndex& c);
NodeBox nodes_of(const CellBox& b);
CellBox cells_of(const NodeBox& b);
CellBox intersect(const CellBox& a, const CellBox& b);
bool box_empty(const CellBox& b);
bool same_box(const NodeBox& a, const NodeBox& b);

// Uniform structured grid on [0,1]^d. Cells and nodes are indexed row-major
// with axis 0 fastest.
class FineGrid {
 public:
  FineGrid() = default;
  explicit FineGrid(int n_per_side, int dim = 2);

  int n() const { return n_; }
  int dim() const { return dim_; }
  double h() const { return h_; }
  int cells_along(int axis) const { return axis < dim_ ? n_ : 1; }
  int nodes_along(int axis) const { return axis < dim_ ? n_ + 1 : 1; }
  int cell_count() const;
  int node_count() const;
  int cell_index(const MultiIndex& c) const;
  MultiIndex cell_coords(int id) const;
  int node_index(const MultiIndex& c) const;
  MultiIndex node_coords(int id) const;
  CellBox full_cell_box() const;
  NodeBox full_node_box() const;
  std::array<double, kMaxDim> cell_center(int id) const;
  std::array<double, kMaxDim> node_position(int id) const;

 private:
  int n_ = 0;
  int dim_ = 2;
  double h_ = 0.0;
};

// One axis piece of a shifted rectangular partition, in fine-cell units.
struct AxisSegment {
  int begin = 0;
  int end = 0;  // half-open
  double nominal_center = 0.0;
  bool merged = false;  // absorbed a deficient sliver
  int extent() const { return end - begin; }
};

struct CoarseCell {
  int id = -1;
  MultiIndex seg{};  // per-axis segment index
  std::array<double, kMaxDim> nominal_center{};
  CellBox box;
  double measure = 0.0;
  std::vector<int> fine_cells;
  std::array<std::vector<int>, 2> continuum_cells;  // filled by attach_continua
  bool merged = false;
};

// Tensor-product partition of [0,1]^d at a mesh size commensurate with the
// fine grid, shifted by z in [0, scale)^d. Deficient boundary slivers are
// merged into their neighbor along the deficient axis.
class ShiftedPartition {
 public:
  static ShiftedPartition build(const FineGrid& grid, double scale,
                                std::span<const double> shift);

  const FineGrid& grid() const { return grid_; }
  double scale() const { return scale_; }
  const std::array<double, kMaxDim>& shift() const { return shift_; }
  int scale_cells() const { return scale_cells_; }

  int segment_count(int axis) const;
  const AxisSegment& segment(int axis, int i) const;
  int cell_count() const { return static_cast<int>(cells_.size()); }
  const CoarseCell& cell(int id) const { return cells_.at(id); }
  int cell_id(const MultiIndex& seg) const;
  int cell_of_fine(int fine_cell_id) const;
  int segment_of_fine(int axis, int fine_coord) const;

  void attach_continua(std::span<const std::uint8_t> labels);
  bool continua_attached() const { return attached_; }

  // Physical coordinates of the segment boundaries along an axis
  // (the coarse node lattice).
  std::vector<double> axis_boundaries(int axis) const;

  std::string signature() const;  // cache keys

 private:
  FineGrid grid_;
  double scale_ = 0.0;
  int scale_cells_ = 0;
  std::array<double, kMaxDim> shift_{};
  std::array<std::vector<AxisSegment>, kMaxDim> axes_;
  std::array<std::vector<int>, kMaxDim> seg_of_fine_;
  std::vector<CoarseCell> cells_;
  bool attached_ = false;
};

// Cells of a partition within k layers (Chebyshev distance on segment
// indices) of a target segment box, clipped to the domain.
struct OversampledPatch {
  int target_cell = -1;
  int k_layers = 0;
  int dim = 2;
  MultiIndex target_seg_lo{}, target_seg_hi{};  // inclusive
  MultiIndex seg_lo{}, seg_hi{};                // inclusive
  CellBox cell_box;
  NodeBox node_box;
  std::vector<int> subcells;           // member cell ids in the partition
  std::vector<std::uint8_t> boundary;  // per local node, on patch boundary
  int free_count = 0;

  int node_count() const { return box_node_count(node_box); }
  int local_node(const MultiIndex& global_node_coords) const {
    return local_node_index(node_box, global_node_coords);
  }
};

OversampledPatch oversample_box(const ShiftedPartition& p, MultiIndex seg_lo,
                                MultiIndex seg_hi, int k_layers);

// Patch around one cell of p.
OversampledPatch oversample(const ShiftedPartition& p, int cell_id,
                            int k_layers);

// Patch of p_sub cells around a cell of the coarser, nested partition
// p_coarse (same shift, scale an integer multiple of p_sub's).
OversampledPatch oversample_nested(const ShiftedPartition& p_coarse,
                                   int coarse_cell,
                                   const ShiftedPartition& p_sub, int k_layers);

// Segment-index box of a coarse cell within the nested finer partition.
void nested_seg_range(const ShiftedPartition& p_coarse, int coarse_cell,
                      const ShiftedPartition& p_sub, MultiIndex& seg_lo,
                      MultiIndex& seg_hi);

}  // namespace mch
