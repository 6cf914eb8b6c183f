#include "mch/macro.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mch {

namespace {

constexpr int kMaxCorners = 1 << kMaxDim;

struct CellFields {
  std::vector<const FineFunction*> fns;
  std::vector<std::pair<int, int>> ids;  // (continuum, axis or -1)
};

CellFields collect_fields(const CellSolutionSet& set, int dim) {
  CellFields cf;
  for (int cont = 0; cont < 2; ++cont) {
    if (!set.present[cont]) continue;
    cf.fns.push_back(&set.eta[cont]);
    cf.ids.emplace_back(cont, -1);
  }
  for (int cont = 0; cont < 2; ++cont) {
    if (!set.present[cont]) continue;
    for (int a = 0; a < dim; ++a) {
      cf.fns.push_back(&set.eta_lin[cont][a]);
      cf.ids.emplace_back(cont, a);
    }
  }
  return cf;
}

// Energy Gram of the fields over a cell region.
Eigen::MatrixXd field_gram(const CoefficientField& field,
                           const CellFields& cf, const CellBox& region) {
  const FineGrid& grid = field.grid();
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  const int nf = static_cast<int>(cf.fns.size());
  const int nc = em.corners;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nf, nf);
  const int ncell = box_cell_count(region);
  std::vector<double> corner(nf * nc);
  std::vector<double> kv(nf * nc);
  for (int l = 0; l < ncell; ++l) {
    const MultiIndex cell = local_cell_coords(region, l);
    const double kappa = field.value(grid.cell_index(cell));
    for (int f = 0; f < nf; ++f) {
      for (int c = 0; c < nc; ++c) {
        MultiIndex node = cell;
        for (int a = 0; a < kMaxDim; ++a) node[a] += (c >> a) & 1;
        corner[f * nc + c] = fn_value(*cf.fns[f], node);
      }
    }
    for (int f = 0; f < nf; ++f) {
      for (int r = 0; r < nc; ++r) {
        double s = 0.0;
        for (int c = 0; c < nc; ++c) {
          s += em.stiffness(r, c) * corner[f * nc + c];
        }
        kv[f * nc + r] = s;
      }
    }
    for (int f = 0; f < nf; ++f) {
      for (int g = f; g < nf; ++g) {
        double s = 0.0;
        for (int r = 0; r < nc; ++r) {
          s += corner[f * nc + r] * kv[g * nc + r];
        }
        G(f, g) += kappa * s;
      }
    }
  }
  for (int f = 0; f < nf; ++f) {
    for (int g = 0; g < f; ++g) G(f, g) = G(g, f);
  }
  return G;
}

TensorBlock block_from_gram(const CellFields& cf, const Eigen::MatrixXd& G,
                            const std::array<bool, 2>& present) {
  TensorBlock block;
  block.present = present;
  block.gram = G;
  block.gram_fields = cf.ids;
  const int nf = static_cast<int>(cf.ids.size());
  for (int f = 0; f < nf; ++f) {
    for (int g = 0; g < nf; ++g) {
      const auto [ci, ai] = cf.ids[f];
      const auto [cj, aj] = cf.ids[g];
      const double v = G(f, g);
      if (ai < 0 && aj < 0) {
        block.gamma[ci][cj] = v;
      } else if (ai >= 0 && aj < 0) {
        block.beta[ci][cj][ai] = v;
      } else if (ai >= 0 && aj >= 0) {
        block.alpha[ci][cj][ai][aj] = v;
      }
    }
  }
  return block;
}

}  // namespace

EffectiveTensors assemble_effective_tensors(
    const CoefficientField& field, const ShiftedPartition& p_coarse,
    const std::map<int, CellSolutionSet>& cells) {
  EffectiveTensors out;
  out.h_coarse = p_coarse.scale();
  out.dim = p_coarse.grid().dim();
  out.provenance = TensorProvenance::kFullCell;
  out.cells.resize(p_coarse.cell_count());
  const double hd = std::pow(out.h_coarse, out.dim);
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    const auto it = cells.find(id);
    if (it == cells.end()) {
      throw std::runtime_error("missing cell solutions for coarse cell " +
                               std::to_string(id));
    }
    const CellFields cf = collect_fields(it->second, out.dim);
    const Eigen::MatrixXd G =
        field_gram(field, cf, p_coarse.cell(id).box) / hd;
    out.cells[id] = block_from_gram(cf, G, it->second.present);
  }
  return out;
}

EffectiveTensors assemble_effective_tensors_rve(
    const CoefficientField& field, const ShiftedPartition& p_coarse,
    const ShiftedPartition& p_sub, const std::map<int, CellSolutionSet>& cells,
    const std::map<int, CellBox>& windows) {
  EffectiveTensors out;
  out.h_coarse = p_coarse.scale();
  out.dim = p_coarse.grid().dim();
  out.provenance = TensorProvenance::kRve;
  out.cells.resize(p_coarse.cell_count());
  const FineGrid& grid = p_coarse.grid();
  const double hd = std::pow(out.h_coarse, out.dim);
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    const auto it = cells.find(id);
    if (it == cells.end()) {
      throw std::runtime_error("missing cell solutions for coarse cell " +
                               std::to_string(id));
    }
    const auto wit = windows.find(id);
    if (wit == windows.end()) {
      throw std::runtime_error("missing RVE window for coarse cell " +
                               std::to_string(id));
    }
    const CellBox& w = wit->second;
    const CellBox& kbox = p_coarse.cell(id).box;
    for (int a = 0; a < grid.dim(); ++a) {
      if (w.lo[a] < kbox.lo[a] || w.hi[a] > kbox.hi[a]) {
        throw std::invalid_argument("RVE window must lie inside its cell");
      }
      // Window edges must be sub-partition segment boundaries.
      const int slo = p_sub.segment_of_fine(a, w.lo[a]);
      const int shi = p_sub.segment_of_fine(a, w.hi[a] - 1);
      if (p_sub.segment(a, slo).begin != w.lo[a] ||
          p_sub.segment(a, shi).end != w.hi[a]) {
        throw std::invalid_argument("RVE window is not subcell-aligned");
      }
    }
    const double measure_k = p_coarse.cell(id).measure;
    const double measure_w =
        box_cell_count(w) * std::pow(grid.h(), grid.dim());
    const CellFields cf = collect_fields(it->second, out.dim);
    const Eigen::MatrixXd G =
        field_gram(field, cf, w) * (measure_k / (hd * measure_w));
    out.cells[id] = block_from_gram(cf, G, it->second.present);
  }
  return out;
}

TensorStructureReport check_tensor_structure(const EffectiveTensors& tensors) {
  TensorStructureReport report;
  report.min_gram_eigenvalue = 0.0;
  for (const TensorBlock& block : tensors.cells) {
    if (block.gram.size() == 0) continue;
    double scale = 0.0;
    const int nf = static_cast<int>(block.gram.rows());
    for (int f = 0; f < nf; ++f) {
      for (int g = 0; g < nf; ++g) {
        scale = std::max(scale, std::abs(block.gram(f, g)));
      }
    }
    if (scale == 0.0) continue;
    for (int f = 0; f < nf; ++f) {
      for (int g = 0; g < nf; ++g) {
        report.max_symmetry_violation =
            std::max(report.max_symmetry_violation,
                     std::abs(block.gram(f, g) - block.gram(g, f)) / scale);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block.gram);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (lmax > 0.0) {
      report.min_gram_eigenvalue = std::min(
          report.min_gram_eigenvalue, es.eigenvalues().minCoeff() / lmax);
    }
  }
  return report;
}

LoadMoments compute_load_moments(const FineFunction& f,
                                 const ShiftedPartition& p_coarse,
                                 const std::map<int, CellSolutionSet>& cells) {
  const FineGrid& grid = p_coarse.grid();
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  const int nc = em.corners;
  LoadMoments moments;
  moments.constant.assign(p_coarse.cell_count(), {0.0, 0.0});
  moments.linear.assign(p_coarse.cell_count(), {});
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    const auto it = cells.find(id);
    if (it == cells.end()) {
      throw std::runtime_error("missing cell solutions for coarse cell " +
                               std::to_string(id));
    }
    const CellSolutionSet& set = it->second;
    const CellBox& box = p_coarse.cell(id).box;
    const int ncell = box_cell_count(box);
    for (int l = 0; l < ncell; ++l) {
      const MultiIndex cell = local_cell_coords(box, l);
      double fv[kMaxCorners];
      double mf[kMaxCorners];
      for (int c = 0; c < nc; ++c) {
        MultiIndex node = cell;
        for (int a = 0; a < kMaxDim; ++a) node[a] += (c >> a) & 1;
        fv[c] = fn_value(f, node);
      }
      for (int r = 0; r < nc; ++r) {
        double s = 0.0;
        for (int c = 0; c < nc; ++c) s += em.mass(r, c) * fv[c];
        mf[r] = s;
      }
      for (int cont = 0; cont < 2; ++cont) {
        if (!set.present[cont]) continue;
        double acc = 0.0;
        std::array<double, kMaxDim> acc_lin{};
        for (int r = 0; r < nc; ++r) {
          MultiIndex node = cell;
          for (int a = 0; a < kMaxDim; ++a) node[a] += (r >> a) & 1;
          acc += mf[r] * fn_value(set.eta[cont], node);
          for (int a = 0; a < grid.dim(); ++a) {
            acc_lin[a] += mf[r] * fn_value(set.eta_lin[cont][a], node);
          }
        }
        moments.constant[id][cont] += acc;
        for (int a = 0; a < grid.dim(); ++a) {
          moments.linear[id][cont][a] += acc_lin[a];
        }
      }
    }
  }
  return moments;
}

MacroSystem assemble_macro_system(const EffectiveTensors& tensors,
                                  const LoadMoments& moments,
                                  const ShiftedPartition& p_coarse,
                                  MacroBc bc) {
  const int dim = p_coarse.grid().dim();
  MacroSystem sys;
  sys.lattice = coarse_lattice(p_coarse);
  sys.bc = bc;
  const int nodes = sys.lattice.node_count();
  const int dofs = 2 * nodes;
  sys.matrix = Eigen::MatrixXd::Zero(dofs, dofs);
  sys.rhs = Eigen::VectorXd::Zero(dofs);
  std::vector<std::uint8_t> active(dofs, 0);

  const int nc = 1 << dim;
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    const CoarseCell& cc = p_coarse.cell(id);
    const TensorBlock& block = tensors.cells[id];
    const double weight = cc.measure;
    std::array<double, kMaxDim> width{};
    for (int a = 0; a < dim; ++a) {
      width[a] = sys.lattice.bounds[a][cc.seg[a] + 1] -
                 sys.lattice.bounds[a][cc.seg[a]];
    }
    // Q1 shape values and gradients at the cell center.
    std::array<int, kMaxCorners> node_ids{};
    std::array<std::array<double, kMaxDim>, kMaxCorners> g{};
    const double val = 1.0 / nc;
    for (int c = 0; c < nc; ++c) {
      MultiIndex node{};
      for (int a = 0; a < kMaxDim; ++a) {
        node[a] = (a < dim) ? cc.seg[a] + ((c >> a) & 1) : 0;
      }
      node_ids[c] = sys.lattice.node_index(node);
      for (int a = 0; a < dim; ++a) {
        const double sign = ((c >> a) & 1) ? 1.0 : -1.0;
        g[c][a] = sign / (width[a] * (nc / 2));
      }
    }
    for (int i = 0; i < 2; ++i) {
      if (!block.present[i]) continue;
      for (int b = 0; b < nc; ++b) active[2 * node_ids[b] + i] = 1;
    }
    for (int j = 0; j < 2; ++j) {      // test continuum
      for (int i = 0; i < 2; ++i) {    // trial continuum
        if (!block.present[i] || !block.present[j]) continue;
        for (int a = 0; a < nc; ++a) {     // test corner
          for (int b = 0; b < nc; ++b) {   // trial corner
            double entry = block.gamma[i][j] * val * val;
            for (int k = 0; k < dim; ++k) {
              entry += block.beta[i][j][k] * g[b][k] * val;
              entry += block.beta[j][i][k] * g[a][k] * val;
              for (int l = 0; l < dim; ++l) {
                entry += block.alpha[i][j][k][l] * g[b][k] * g[a][l];
              }
            }
            sys.matrix(2 * node_ids[a] + j, 2 * node_ids[b] + i) +=
                weight * entry;
          }
        }
      }
      if (!block.present[j]) continue;
      for (int a = 0; a < nc; ++a) {
        double r = moments.constant[id][j] * val;
        for (int k = 0; k < dim; ++k) {
          r += moments.linear[id][j][k] * g[a][k];
        }
        sys.rhs[2 * node_ids[a] + j] += r;
      }
    }
  }

  sys.pinned.assign(dofs, 0);
  for (int n = 0; n < nodes; ++n) {
    const MultiIndex c = sys.lattice.node_coords(n);
    for (int i = 0; i < 2; ++i) {
      const int dof = 2 * n + i;
      if (!active[dof]) sys.pinned[dof] = 1;
      if (bc == MacroBc::kDirichlet && sys.lattice.on_boundary(c)) {
        sys.pinned[dof] = 1;
      }
    }
  }
  for (int dof = 0; dof < dofs; ++dof) {
    if (!sys.pinned[dof]) continue;
    sys.matrix.row(dof).setZero();
    sys.matrix.col(dof).setZero();
    sys.matrix(dof, dof) = 1.0;
    sys.rhs[dof] = 0.0;
  }
  return sys;
}

MacroSolution solve_macro(const MacroSystem& system) {
  MacroSolution sol;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(system.matrix);
  qr.setThreshold(1e-13);
  sol.rank = static_cast<int>(qr.rank());
  sol.maybe_singular = sol.rank < system.dof_count();
  sol.u = qr.solve(system.rhs);
  // One refinement pass.
  sol.u += qr.solve(system.rhs - system.matrix * sol.u);
  const double scale = std::max(system.rhs.norm(), 1e-300);
  sol.residual = (system.matrix * sol.u - system.rhs).norm() / scale;
  const Eigen::VectorXd rdiag =
      qr.matrixR().diagonal().cwiseAbs();
  sol.sigma_min_estimate = rdiag.minCoeff();
  return sol;
}

Eigen::VectorXd MacroSolution::nodal(int continuum,
                                     const CoarseLattice& lattice) const {
  Eigen::VectorXd v(lattice.node_count());
  for (int n = 0; n < lattice.node_count(); ++n) v[n] = u[2 * n + continuum];
  return v;
}

MacroField macro_field(const MacroSolution& sol, const ShiftedPartition& p) {
  const CoarseLattice lattice = coarse_lattice(p);
  return MacroField(p, sol.nodal(0, lattice), sol.nodal(1, lattice));
}

double tensor_form(const TensorBlock& block, int dim, const CellMacroData& u,
                   const CellMacroData& v) {
  double s = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (!block.present[i] || !block.present[j]) continue;
      s += block.gamma[i][j] * u.value[i] * v.value[j];
      for (int k = 0; k < dim; ++k) {
        s += block.beta[i][j][k] * u.grad[i][k] * v.value[j];
        s += block.beta[j][i][k] * v.grad[j][k] * u.value[i];
        for (int l = 0; l < dim; ++l) {
          s += block.alpha[i][j][k][l] * u.grad[i][k] * v.grad[j][l];
        }
      }
    }
  }
  return s;
}

double verify_averaging_identity(const CoefficientField& field,
                                 const ShiftedPartition& p_coarse,
                                 const std::map<int, CellSolutionSet>& cells,
                                 const EffectiveTensors& tensors,
                                 std::span<const CellMacroData> u_data,
                                 std::span<const CellMacroData> v_data) {
  const int dim = p_coarse.grid().dim();
  const double hd = std::pow(p_coarse.scale(), dim);
  const BrokenFunction wu = downscale_linear(u_data, cells, p_coarse);
  const BrokenFunction wv = downscale_linear(v_data, cells, p_coarse);
  std::vector<double> lhs(p_coarse.cell_count());
  std::vector<double> rhs(p_coarse.cell_count());
  double scale = 0.0;
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    lhs[id] = hd * tensor_form(tensors.cells[id], dim, u_data[id], v_data[id]);
    rhs[id] = energy_product(field, wu.pieces[id].fn, wv.pieces[id].fn,
                             p_coarse.cell(id).box);
    scale = std::max({scale, std::abs(lhs[id]), std::abs(rhs[id])});
  }
  if (scale == 0.0) return 0.0;
  double disc = 0.0;
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    disc = std::max(disc, std::abs(lhs[id] - rhs[id]) / scale);
  }
  return disc;
}

}  // namespace mch
