#include "mch/downscale.hpp"

#include <cmath>
#include <stdexcept>

namespace mch {

MacroAverages project_continuum_averages(const FineFunction& u,
                                         const ShiftedPartition& p) {
  if (!p.continua_attached()) {
    throw std::invalid_argument("partition has no continuum decomposition");
  }
  const FineGrid& grid = p.grid();
  const int nc = 1 << grid.dim();
  const double cell_measure = std::pow(grid.h(), grid.dim());
  MacroAverages avgs;
  avgs.value.assign(p.cell_count(), {0.0, 0.0});
  avgs.defined.assign(p.cell_count(), {0, 0});
  for (int id = 0; id < p.cell_count(); ++id) {
    const CoarseCell& cc = p.cell(id);
    for (int cont = 0; cont < 2; ++cont) {
      const auto& members = cc.continuum_cells[cont];
      if (members.empty()) continue;
      double integral = 0.0;
      for (int f : members) {
        const MultiIndex c = grid.cell_coords(f);
        double sum = 0.0;
        for (int k = 0; k < nc; ++k) {
          MultiIndex node = c;
          for (int a = 0; a < kMaxDim; ++a) node[a] += (k >> a) & 1;
          sum += fn_value(u, node);
        }
        integral += sum / nc * cell_measure;
      }
      avgs.value[id][cont] = integral / (members.size() * cell_measure);
      avgs.defined[id][cont] = 1;
    }
  }
  return avgs;
}

FineFunction downscale_nlmc(const MacroAverages& avgs,
                            const LocalizedBasisSet& basis,
                            const AuxiliaryBasis& aux) {
  const ShiftedPartition& p = aux.partition();
  const FineGrid& grid = p.grid();
  FineFunction out = zero_function(grid.full_node_box());
  if (static_cast<int>(avgs.value.size()) != p.cell_count()) {
    throw std::invalid_argument("averages do not match the partition");
  }
  for (int cell = 0; cell < p.cell_count(); ++cell) {
    for (int cont = 0; cont < 2; ++cont) {
      if (!avgs.defined[cell][cont]) continue;
      const int id = aux.entry_id(cell, cont);
      if (id < 0 || basis.members[id].fn.values.size() == 0) {
        throw std::runtime_error("missing basis member for subcell " +
                                 std::to_string(cell) + " continuum " +
                                 std::to_string(cont));
      }
      const FineFunction& phi = basis.members[id].fn;
      const double c = avgs.value[cell][cont];
      if (c == 0.0) continue;
      const int nn = box_node_count(phi.box);
      for (int l = 0; l < nn; ++l) {
        const MultiIndex node = local_node_coords(phi.box, l);
        out.values[local_node_index(out.box, node)] += c * phi.values[l];
      }
    }
  }
  return out;
}

BrokenFunction downscale_linear(std::span<const CellMacroData> data,
                                const std::map<int, CellSolutionSet>& cells,
                                const ShiftedPartition& p_coarse) {
  if (static_cast<int>(data.size()) != p_coarse.cell_count()) {
    throw std::invalid_argument("macro data does not match the partition");
  }
  const FineGrid& grid = p_coarse.grid();
  BrokenFunction out;
  out.pieces.reserve(p_coarse.cell_count());
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    const auto it = cells.find(id);
    if (it == cells.end()) {
      throw std::runtime_error("missing cell solutions for coarse cell " +
                               std::to_string(id));
    }
    const CellSolutionSet& set = it->second;
    BrokenPiece piece;
    piece.cell = id;
    piece.fn = zero_function(nodes_of(p_coarse.cell(id).box));
    const int nn = box_node_count(piece.fn.box);
    for (int cont = 0; cont < 2; ++cont) {
      if (!set.present[cont]) continue;
      const double u = data[id].value[cont];
      for (int l = 0; l < nn; ++l) {
        const MultiIndex node = local_node_coords(piece.fn.box, l);
        double v = u * fn_value(set.eta[cont], node);
        for (int a = 0; a < grid.dim(); ++a) {
          v += data[id].grad[cont][a] * fn_value(set.eta_lin[cont][a], node);
        }
        piece.fn.values[l] += v;
      }
    }
    out.pieces.push_back(std::move(piece));
  }
  return out;
}

int CoarseLattice::node_count() const {
  int c = 1;
  for (int a = 0; a < kMaxDim; ++a) c *= nodes_along[a];
  return c;
}

int CoarseLattice::node_index(const MultiIndex& c) const {
  int idx = 0;
  int stride = 1;
  for (int a = 0; a < kMaxDim; ++a) {
    idx += c[a] * stride;
    stride *= nodes_along[a];
  }
  return idx;
}

MultiIndex CoarseLattice::node_coords(int id) const {
  MultiIndex c{};
  for (int a = 0; a < kMaxDim; ++a) {
    c[a] = id % nodes_along[a];
    id /= nodes_along[a];
  }
  return c;
}

std::array<double, kMaxDim> CoarseLattice::node_position(
    const MultiIndex& c) const {
  std::array<double, kMaxDim> x{};
  for (int a = 0; a < dim; ++a) x[a] = bounds[a][c[a]];
  return x;
}

bool CoarseLattice::on_boundary(const MultiIndex& c) const {
  for (int a = 0; a < dim; ++a) {
    if (c[a] == 0 || c[a] == nodes_along[a] - 1) return true;
  }
  return false;
}

CoarseLattice coarse_lattice(const ShiftedPartition& p) {
  CoarseLattice lat;
  lat.dim = p.grid().dim();
  for (int a = 0; a < kMaxDim; ++a) {
    if (a < lat.dim) {
      lat.bounds[a] = p.axis_boundaries(a);
      lat.nodes_along[a] = static_cast<int>(lat.bounds[a].size());
    } else {
      lat.bounds[a] = {0.0};
      lat.nodes_along[a] = 1;
    }
  }
  return lat;
}

MacroField::MacroField(const ShiftedPartition& p, Eigen::VectorXd u0,
                       Eigen::VectorXd u1)
    : p_(&p), lattice_(coarse_lattice(p)) {
  u_[0] = std::move(u0);
  u_[1] = std::move(u1);
  for (int i = 0; i < 2; ++i) {
    if (static_cast<int>(u_[i].size()) != lattice_.node_count()) {
      throw std::invalid_argument("macro field nodal size mismatch");
    }
  }
}

CellMacroData MacroField::eval(int cell) const {
  const CoarseCell& cc = p_->cell(cell);
  const int dim = p_->grid().dim();
  const int nc = 1 << dim;
  CellMacroData out;
  std::array<double, kMaxDim> width{};
  for (int a = 0; a < dim; ++a) {
    width[a] = lattice_.bounds[a][cc.seg[a] + 1] - lattice_.bounds[a][cc.seg[a]];
  }
  for (int cont = 0; cont < 2; ++cont) {
    double value = 0.0;
    std::array<double, kMaxDim> grad{};
    for (int k = 0; k < nc; ++k) {
      MultiIndex node{};
      for (int a = 0; a < kMaxDim; ++a) {
        node[a] = (a < dim) ? cc.seg[a] + ((k >> a) & 1) : 0;
      }
      const double v = u_[cont][lattice_.node_index(node)];
      value += v / nc;
      for (int a = 0; a < dim; ++a) {
        const double sign = ((k >> a) & 1) ? 1.0 : -1.0;
        // d/dx_a of the bilinear shape at the cell center
        grad[a] += sign * v / (width[a] * (nc / 2));
      }
    }
    out.value[cont] = value;
    out.grad[cont] = grad;
  }
  return out;
}

double MacroField::interpolate_at(int continuum,
                                  const std::array<double, kMaxDim>& x) const {
  const int dim = p_->grid().dim();
  MultiIndex seg{};
  std::array<double, kMaxDim> t{};
  for (int a = 0; a < dim; ++a) {
    const std::vector<double>& b = lattice_.bounds[a];
    int s = 0;
    while (s + 2 < static_cast<int>(b.size()) && x[a] >= b[s + 1]) ++s;
    seg[a] = s;
    t[a] = (x[a] - b[s]) / (b[s + 1] - b[s]);
  }
  const int nc = 1 << dim;
  double v = 0.0;
  for (int k = 0; k < nc; ++k) {
    MultiIndex node{};
    double w = 1.0;
    for (int a = 0; a < kMaxDim; ++a) {
      if (a < dim) {
        const int bit = (k >> a) & 1;
        node[a] = seg[a] + bit;
        w *= bit ? t[a] : 1.0 - t[a];
      } else {
        node[a] = 0;
      }
    }
    v += w * u_[continuum][lattice_.node_index(node)];
  }
  return v;
}

std::vector<CellMacroData> MacroField::sample(
    MacroEvalMode mode, const ShiftedPartition* p_sub) const {
  std::vector<CellMacroData> data(p_->cell_count());
  for (int cell = 0; cell < p_->cell_count(); ++cell) {
    data[cell] = eval(cell);
  }
  if (mode == MacroEvalMode::kCellAverage) {
    if (!p_sub) {
      throw std::invalid_argument(
          "cell-average sampling needs the sub-partition");
    }
    // Replace the center value by the average of the interpolant over the
    // sub-partition cell holding the center. For bilinear data on a centered
    // box the two coincide; merged boundary cells differ.
    const FineGrid& grid = p_->grid();
    for (int cell = 0; cell < p_->cell_count(); ++cell) {
      const CoarseCell& cc = p_->cell(cell);
      MultiIndex fine{};
      for (int a = 0; a < grid.dim(); ++a) {
        int c = static_cast<int>(cc.nominal_center[a] / grid.h());
        fine[a] = std::min(std::max(c, 0), grid.n() - 1);
      }
      const CoarseCell& sub = p_sub->cell(p_sub->cell_of_fine(
          grid.cell_index(fine)));
      for (int cont = 0; cont < 2; ++cont) {
        // Average the bilinear interpolant over the subcell box: sample the
        // interpolant at subcell fine-node corners and use exact Q1 sums.
        double integral = 0.0;
        const int ncorner = 1 << grid.dim();
        for (int f : sub.fine_cells) {
          const MultiIndex c = grid.cell_coords(f);
          double s = 0.0;
          for (int k = 0; k < ncorner; ++k) {
            MultiIndex node = c;
            for (int a = 0; a < kMaxDim; ++a) node[a] += (k >> a) & 1;
            std::array<double, kMaxDim> x{};
            for (int a = 0; a < grid.dim(); ++a) x[a] = node[a] * grid.h();
            s += interpolate_at(cont, x);
          }
          integral += s / ncorner * std::pow(grid.h(), grid.dim());
        }
        data[cell].value[cont] = integral / sub.measure;
      }
    }
  }
  return data;
}

double broken_l2_error(const BrokenFunction& w, const FineFunction& u,
                       const FineGrid& grid) {
  double total = 0.0;
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  for (const BrokenPiece& piece : w.pieces) {
    const CellBox cells = cells_of(piece.fn.box);
    const int ncell = box_cell_count(cells);
    const int nc = em.corners;
    for (int l = 0; l < ncell; ++l) {
      const MultiIndex cell = local_cell_coords(cells, l);
      double dv[1 << kMaxDim];
      for (int k = 0; k < nc; ++k) {
        MultiIndex node = cell;
        for (int a = 0; a < kMaxDim; ++a) node[a] += (k >> a) & 1;
        dv[k] = fn_value(piece.fn, node) - fn_value(u, node);
      }
      double acc = 0.0;
      for (int r = 0; r < nc; ++r) {
        double s = 0.0;
        for (int c = 0; c < nc; ++c) s += em.mass(r, c) * dv[c];
        acc += dv[r] * s;
      }
      total += acc;
    }
  }
  return std::sqrt(std::max(0.0, total));
}

namespace {

double piece_energy(const BrokenPiece& piece, const FineFunction* minus,
                    const CoefficientField& field) {
  const FineGrid& grid = field.grid();
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  const CellBox cells = cells_of(piece.fn.box);
  const int ncell = box_cell_count(cells);
  const int nc = em.corners;
  double total = 0.0;
  for (int l = 0; l < ncell; ++l) {
    const MultiIndex cell = local_cell_coords(cells, l);
    double dv[1 << kMaxDim];
    for (int k = 0; k < nc; ++k) {
      MultiIndex node = cell;
      for (int a = 0; a < kMaxDim; ++a) node[a] += (k >> a) & 1;
      dv[k] = fn_value(piece.fn, node) - (minus ? fn_value(*minus, node) : 0.0);
    }
    double acc = 0.0;
    for (int r = 0; r < nc; ++r) {
      double s = 0.0;
      for (int c = 0; c < nc; ++c) s += em.stiffness(r, c) * dv[c];
      acc += dv[r] * s;
    }
    total += field.value(grid.cell_index(cell)) * acc;
  }
  return total;
}

}  // namespace

double broken_energy_norm(const BrokenFunction& w,
                          const CoefficientField& field) {
  double total = 0.0;
  for (const BrokenPiece& piece : w.pieces) {
    total += piece_energy(piece, nullptr, field);
  }
  return std::sqrt(std::max(0.0, total));
}

double broken_energy_error(const BrokenFunction& w, const FineFunction& u,
                           const CoefficientField& field) {
  double total = 0.0;
  for (const BrokenPiece& piece : w.pieces) {
    total += piece_energy(piece, &u, field);
  }
  return std::sqrt(std::max(0.0, total));
}

}  // namespace mch
