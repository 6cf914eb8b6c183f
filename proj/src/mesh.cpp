#include "mch/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace mch {

namespace {

int checked_round(double x, double tol, const char* what) {
  const double r = std::round(x);
  if (std::abs(x - r) > tol) {
    throw std::invalid_argument(std::string(what) +
                                " is not commensurate with the fine grid");
  }
  return static_cast<int>(r);
}

}  // namespace

int box_cell_count(const CellBox& b) {
  int c = 1;
  for (int a = 0; a < kMaxDim; ++a) c *= std::max(0, b.hi[a] - b.lo[a]);
  return c;
}

int box_node_count(const NodeBox& b) {
  int c = 1;
  for (int a = 0; a < kMaxDim; ++a) c *= std::max(0, b.hi[a] - b.lo[a] + 1);
  return c;
}

int local_cell_index(const CellBox& b, const MultiIndex& c) {
  int idx = 0;
  int stride = 1;
  for (int a = 0; a < kMaxDim; ++a) {
    idx += (c[a] - b.lo[a]) * stride;
    stride *= b.hi[a] - b.lo[a];
  }
  return idx;
}

int local_node_index(const NodeBox& b, const MultiIndex& c) {
  int idx = 0;
  int stride = 1;
  for (int a = 0; a < kMaxDim; ++a) {
    idx += (c[a] - b.lo[a]) * stride;
    stride *= b.hi[a] - b.lo[a] + 1;
  }
  return idx;
}

MultiIndex local_cell_coords(const CellBox& b, int local) {
  MultiIndex c{};
  for (int a = 0; a < kMaxDim; ++a) {
    const int w = b.hi[a] - b.lo[a];
    c[a] = b.lo[a] + local % w;
    local /= w;
  }
  return c;
}

MultiIndex local_node_coords(const NodeBox& b, int local) {
  MultiIndex c{};
  for (int a = 0; a < kMaxDim; ++a) {
    const int w = b.hi[a] - b.lo[a] + 1;
    c[a] = b.lo[a] + local % w;
    local /= w;
  }
  return c;
}

bool box_contains_cell(const CellBox& b, const MultiIndex& c) {
  for (int a = 0; a < kMaxDim; ++a) {
    if (c[a] < b.lo[a] || c[a] >= b.hi[a]) return false;
  }
  return true;
}

bool box_contains_node(const NodeBox& b, const MultiIndex& c) {
  for (int a = 0; a < kMaxDim; ++a) {
    if (c[a] < b.lo[a] || c[a] > b.hi[a]) return false;
  }
  return true;
}

NodeBox nodes_of(const CellBox& b) {
  NodeBox n;
  n.dim = b.dim;
  for (int a = 0; a < kMaxDim; ++a) {
    n.lo[a] = b.lo[a];
    n.hi[a] = (a < b.dim) ? b.hi[a] : 0;
  }
  return n;
}

CellBox cells_of(const NodeBox& b) {
  CellBox c;
  c.dim = b.dim;
  for (int a = 0; a < kMaxDim; ++a) {
    if (a < b.dim) {
      c.lo[a] = b.lo[a];
      c.hi[a] = b.hi[a];
    } else {
      c.lo[a] = 0;
      c.hi[a] = 1;
    }
  }
  return c;
}

CellBox intersect(const CellBox& a, const CellBox& b) {
  CellBox r;
  r.dim = a.dim;
  for (int ax = 0; ax < kMaxDim; ++ax) {
    r.lo[ax] = std::max(a.lo[ax], b.lo[ax]);
    r.hi[ax] = std::min(a.hi[ax], b.hi[ax]);
  }
  return r;
}

bool box_empty(const CellBox& b) {
  for (int a = 0; a < kMaxDim; ++a) {
    if (b.hi[a] <= b.lo[a]) return true;
  }
  return false;
}

bool same_box(const NodeBox& a, const NodeBox& b) {
  return a.lo == b.lo && a.hi == b.hi;
}

FineGrid::FineGrid(int n_per_side, int dim) : n_(n_per_side), dim_(dim) {
  if (n_per_side < 2) {
    throw std::invalid_argument("fine grid needs at least 2 cells per side");
  }
  if (dim < 1 || dim > kMaxDim) {
    throw std::invalid_argument("unsupported dimension");
  }
  double count = 1;
  for (int a = 0; a < dim; ++a) count *= n_per_side;
  if (count > double(1 << 30)) {
    throw std::invalid_argument("fine grid too large");
  }
  h_ = 1.0 / n_per_side;
}

int FineGrid::cell_count() const {
  int c = 1;
  for (int a = 0; a < dim_; ++a) c *= n_;
  return c;
}

int FineGrid::node_count() const {
  int c = 1;
  for (int a = 0; a < dim_; ++a) c *= n_ + 1;
  return c;
}

int FineGrid::cell_index(const MultiIndex& c) const {
  int idx = 0;
  int stride = 1;
  for (int a = 0; a < kMaxDim; ++a) {
    idx += c[a] * stride;
    stride *= cells_along(a);
  }
  return idx;
}

MultiIndex FineGrid::cell_coords(int id) const {
  MultiIndex c{};
  for (int a = 0; a < kMaxDim; ++a) {
    c[a] = id % cells_along(a);
    id /= cells_along(a);
  }
  return c;
}

int FineGrid::node_index(const MultiIndex& c) const {
  int idx = 0;
  int stride = 1;
  for (int a = 0; a < kMaxDim; ++a) {
    idx += c[a] * stride;
    stride *= nodes_along(a);
  }
  return idx;
}

MultiIndex FineGrid::node_coords(int id) const {
  MultiIndex c{};
  for (int a = 0; a < kMaxDim; ++a) {
    c[a] = id % nodes_along(a);
    id /= nodes_along(a);
  }
  return c;
}

CellBox FineGrid::full_cell_box() const {
  CellBox b;
  b.dim = dim_;
  for (int a = 0; a < kMaxDim; ++a) {
    b.lo[a] = 0;
    b.hi[a] = cells_along(a);
  }
  return b;
}

NodeBox FineGrid::full_node_box() const {
  NodeBox b;
  b.dim = dim_;
  for (int a = 0; a < kMaxDim; ++a) {
    b.lo[a] = 0;
    b.hi[a] = nodes_along(a) - 1;
  }
  return b;
}

std::array<double, kMaxDim> FineGrid::cell_center(int id) const {
  const MultiIndex c = cell_coords(id);
  std::array<double, kMaxDim> x{};
  for (int a = 0; a < dim_; ++a) x[a] = (c[a] + 0.5) * h_;
  return x;
}

std::array<double, kMaxDim> FineGrid::node_position(int id) const {
  const MultiIndex c = node_coords(id);
  std::array<double, kMaxDim> x{};
  for (int a = 0; a < dim_; ++a) x[a] = c[a] * h_;
  return x;
}

namespace {

// 1D segmentation with lattice edges at s + j*m (fine units). A boundary
// sliver whose nominal lattice center falls outside the closed domain, or
// whose extent is below m/4, merges with its neighbor along this axis.
std::vector<AxisSegment> segment_axis(int n, int m, int s, double h) {
  std::vector<AxisSegment> segs;
  std::vector<std::array<int, 2>> pieces;  // begin, lattice index j
  if (s > 0) pieces.push_back({0, -1});
  for (int b = s; b < n; b += m) {
    pieces.push_back({b, (b - s) / m});
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    AxisSegment seg;
    seg.begin = pieces[i][0];
    seg.end = (i + 1 < pieces.size()) ? pieces[i + 1][0] : n;
    seg.nominal_center = (s + pieces[i][1] * m + 0.5 * m) * h;
    segs.push_back(seg);
  }
  auto deficient = [&](const AxisSegment& seg) {
    const double c = seg.nominal_center;
    if (c < 0.0 || c > n * h) return true;
    return 4 * seg.extent() < m;
  };
  // Leading sliver merges forward, trailing sliver merges backward.
  if (segs.size() >= 2 && deficient(segs.front())) {
    segs[1].begin = segs[0].begin;
    segs[1].merged = true;
    segs.erase(segs.begin());
  }
  if (segs.size() >= 2 && deficient(segs.back())) {
    segs[segs.size() - 2].end = segs.back().end;
    segs[segs.size() - 2].merged = true;
    segs.pop_back();
  }
  return segs;
}

}  // namespace

ShiftedPartition ShiftedPartition::build(const FineGrid& grid, double scale,
                                         std::span<const double> shift) {
  ShiftedPartition p;
  p.grid_ = grid;
  p.scale_ = scale;
  const double h = grid.h();
  const int m = checked_round(scale / h, 1e-9, "partition scale");
  if (m < 1 || m > grid.n()) {
    throw std::invalid_argument("partition scale out of range");
  }
  p.scale_cells_ = m;

  MultiIndex s{};
  for (int a = 0; a < grid.dim(); ++a) {
    double za = a < static_cast<int>(shift.size()) ? shift[a] : 0.0;
    s[a] = checked_round(za / h, 1e-9, "partition shift");
    if (s[a] < 0 || s[a] >= m) {
      throw std::invalid_argument("partition shift must lie in [0, scale)");
    }
    p.shift_[a] = s[a] * h;
  }

  for (int a = 0; a < kMaxDim; ++a) {
    if (a < grid.dim()) {
      p.axes_[a] = segment_axis(grid.n(), m, s[a], h);
    } else {
      AxisSegment unit;
      unit.begin = 0;
      unit.end = 1;
      unit.nominal_center = 0.0;
      p.axes_[a] = {unit};
    }
    p.seg_of_fine_[a].assign(grid.cells_along(a), 0);
    for (std::size_t i = 0; i < p.axes_[a].size(); ++i) {
      for (int c = p.axes_[a][i].begin; c < p.axes_[a][i].end; ++c) {
        p.seg_of_fine_[a][c] = static_cast<int>(i);
      }
    }
  }

  int total = 1;
  for (int a = 0; a < kMaxDim; ++a) total *= static_cast<int>(p.axes_[a].size());
  p.cells_.resize(total);
  for (int id = 0; id < total; ++id) {
    CoarseCell& cell = p.cells_[id];
    cell.id = id;
    int rest = id;
    cell.box.dim = grid.dim();
    for (int a = 0; a < kMaxDim; ++a) {
      const int count = static_cast<int>(p.axes_[a].size());
      cell.seg[a] = rest % count;
      rest /= count;
      const AxisSegment& seg = p.axes_[a][cell.seg[a]];
      cell.box.lo[a] = seg.begin;
      cell.box.hi[a] = seg.end;
      cell.nominal_center[a] = (a < grid.dim()) ? seg.nominal_center : 0.0;
      cell.merged = cell.merged || seg.merged;
    }
    cell.measure = box_cell_count(cell.box) * std::pow(h, grid.dim());
    cell.fine_cells.reserve(box_cell_count(cell.box));
    const int local_count = box_cell_count(cell.box);
    for (int l = 0; l < local_count; ++l) {
      cell.fine_cells.push_back(
          grid.cell_index(local_cell_coords(cell.box, l)));
    }
  }
  return p;
}

int ShiftedPartition::segment_count(int axis) const {
  return static_cast<int>(axes_[axis].size());
}

const AxisSegment& ShiftedPartition::segment(int axis, int i) const {
  return axes_[axis].at(i);
}

int ShiftedPartition::cell_id(const MultiIndex& seg) const {
  int idx = 0;
  int stride = 1;
  for (int a = 0; a < kMaxDim; ++a) {
    idx += seg[a] * stride;
    stride *= static_cast<int>(axes_[a].size());
  }
  return idx;
}

int ShiftedPartition::cell_of_fine(int fine_cell_id) const {
  const MultiIndex c = grid_.cell_coords(fine_cell_id);
  MultiIndex seg{};
  for (int a = 0; a < kMaxDim; ++a) {
    seg[a] = (a < grid_.dim()) ? seg_of_fine_[a][c[a]] : 0;
  }
  return cell_id(seg);
}

int ShiftedPartition::segment_of_fine(int axis, int fine_coord) const {
  return seg_of_fine_[axis].at(fine_coord);
}

void ShiftedPartition::attach_continua(std::span<const std::uint8_t> labels) {
  if (static_cast<int>(labels.size()) != grid_.cell_count()) {
    throw std::invalid_argument("continuum labels do not match the fine grid");
  }
  for (CoarseCell& cell : cells_) {
    cell.continuum_cells[0].clear();
    cell.continuum_cells[1].clear();
    for (int f : cell.fine_cells) {
      cell.continuum_cells[labels[f] ? 1 : 0].push_back(f);
    }
  }
  attached_ = true;
}

std::vector<double> ShiftedPartition::axis_boundaries(int axis) const {
  std::vector<double> b;
  b.push_back(axes_[axis].front().begin * grid_.h());
  for (const AxisSegment& s : axes_[axis]) b.push_back(s.end * grid_.h());
  return b;
}

std::string ShiftedPartition::signature() const {
  std::ostringstream os;
  os << "d" << grid_.dim() << "n" << grid_.n() << "m" << scale_cells_ << "z";
  for (int a = 0; a < grid_.dim(); ++a) {
    os << (a ? "," : "") << static_cast<int>(std::round(shift_[a] / grid_.h()));
  }
  return os.str();
}

OversampledPatch oversample_box(const ShiftedPartition& p, MultiIndex seg_lo,
                                MultiIndex seg_hi, int k_layers) {
  if (k_layers < 0) throw std::invalid_argument("k_layers must be >= 0");
  const FineGrid& grid = p.grid();
  OversampledPatch patch;
  patch.k_layers = k_layers;
  patch.dim = grid.dim();
  patch.target_seg_lo = seg_lo;
  patch.target_seg_hi = seg_hi;
  patch.cell_box.dim = grid.dim();
  for (int a = 0; a < kMaxDim; ++a) {
    if (a < grid.dim()) {
      patch.seg_lo[a] = std::max(0, seg_lo[a] - k_layers);
      patch.seg_hi[a] = std::min(p.segment_count(a) - 1, seg_hi[a] + k_layers);
      patch.cell_box.lo[a] = p.segment(a, patch.seg_lo[a]).begin;
      patch.cell_box.hi[a] = p.segment(a, patch.seg_hi[a]).end;
    } else {
      patch.seg_lo[a] = patch.seg_hi[a] = 0;
      patch.cell_box.lo[a] = 0;
      patch.cell_box.hi[a] = 1;
    }
  }
  patch.node_box = nodes_of(patch.cell_box);

  MultiIndex seg{};
  std::function<void(int)> rec = [&](int axis) {
    if (axis < 0) {
      patch.subcells.push_back(p.cell_id(seg));
      return;
    }
    for (int i = patch.seg_lo[axis]; i <= patch.seg_hi[axis]; ++i) {
      seg[axis] = i;
      rec(axis - 1);
    }
  };
  rec(kMaxDim - 1);
  std::sort(patch.subcells.begin(), patch.subcells.end());

  const int nn = box_node_count(patch.node_box);
  patch.boundary.assign(nn, 0);
  for (int l = 0; l < nn; ++l) {
    const MultiIndex c = local_node_coords(patch.node_box, l);
    for (int a = 0; a < grid.dim(); ++a) {
      if (c[a] == patch.node_box.lo[a] || c[a] == patch.node_box.hi[a]) {
        patch.boundary[l] = 1;
        break;
      }
    }
  }
  patch.free_count = 0;
  for (int l = 0; l < nn; ++l) patch.free_count += patch.boundary[l] ? 0 : 1;
  return patch;
}

OversampledPatch oversample(const ShiftedPartition& p, int cell_id,
                            int k_layers) {
  const CoarseCell& cell = p.cell(cell_id);
  OversampledPatch patch = oversample_box(p, cell.seg, cell.seg, k_layers);
  patch.target_cell = cell_id;
  return patch;
}

void nested_seg_range(const ShiftedPartition& p_coarse, int coarse_cell,
                      const ShiftedPartition& p_sub, MultiIndex& seg_lo,
                      MultiIndex& seg_hi) {
  const CoarseCell& cell = p_coarse.cell(coarse_cell);
  for (int a = 0; a < kMaxDim; ++a) {
    if (a < p_sub.grid().dim()) {
      seg_lo[a] = p_sub.segment_of_fine(a, cell.box.lo[a]);
      seg_hi[a] = p_sub.segment_of_fine(a, cell.box.hi[a] - 1);
      // Nestedness: the coarse cell must be a union of sub-partition cells.
      if (p_sub.segment(a, seg_lo[a]).begin != cell.box.lo[a] ||
          p_sub.segment(a, seg_hi[a]).end != cell.box.hi[a]) {
        throw std::invalid_argument("partitions are not nested");
      }
    } else {
      seg_lo[a] = seg_hi[a] = 0;
    }
  }
}

OversampledPatch oversample_nested(const ShiftedPartition& p_coarse,
                                   int coarse_cell,
                                   const ShiftedPartition& p_sub,
                                   int k_layers) {
  MultiIndex lo{}, hi{};
  nested_seg_range(p_coarse, coarse_cell, p_sub, lo, hi);
  OversampledPatch patch = oversample_box(p_sub, lo, hi, k_layers);
  patch.target_cell = coarse_cell;
  return patch;
}

}  // namespace mch
