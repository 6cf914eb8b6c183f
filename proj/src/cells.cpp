#include "mch/cells.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "mch/cache.hpp"
#include "mch/util.hpp"

namespace mch {

int default_k_layers(double h_eps) {
  const int k = static_cast<int>(std::ceil(std::log2(1.0 / h_eps) - 1e-12));
  return std::max(2, k);
}

AuxiliaryBasis AuxiliaryBasis::build(const ShiftedPartition& p,
                                     const ContinuumMap& map) {
  const FineGrid& grid = p.grid();
  if (grid.n() != map.grid().n() || grid.dim() != map.grid().dim()) {
    throw std::invalid_argument("auxiliary basis: grid mismatch");
  }
  AuxiliaryBasis aux;
  aux.partition_ = &p;
  aux.index_.assign(p.cell_count(), {-1, -1});

  const double cell_measure = std::pow(grid.h(), grid.dim());
  const double corner_weight = cell_measure / (1 << grid.dim());
  const int nc = 1 << grid.dim();

  for (int cell = 0; cell < p.cell_count(); ++cell) {
    const CoarseCell& cc = p.cell(cell);
    for (int cont = 0; cont < 2; ++cont) {
      std::map<int, double> row;  // ordered: deterministic row layout
      int count = 0;
      for (int f : cc.fine_cells) {
        if (map.label(f) != cont) continue;
        ++count;
        const MultiIndex c = grid.cell_coords(f);
        for (int k = 0; k < nc; ++k) {
          MultiIndex node = c;
          for (int a = 0; a < kMaxDim; ++a) node[a] += (k >> a) & 1;
          row[grid.node_index(node)] += corner_weight;
        }
      }
      if (count == 0) continue;
      AuxEntry entry;
      entry.cell = cell;
      entry.continuum = cont;
      entry.measure = count * cell_measure;
      entry.center = cc.nominal_center;
      entry.nodes.reserve(row.size());
      entry.weights.reserve(row.size());
      for (const auto& [node, w] : row) {
        entry.nodes.push_back(node);
        entry.weights.push_back(w);
      }
      aux.index_[cell][cont] = static_cast<int>(aux.entries_.size());
      aux.entries_.push_back(std::move(entry));
      aux.nonempty_[cont] = true;
    }
  }
  return aux;
}

PatchConstraints patch_constraints(const AuxiliaryBasis& aux,
                                   const OversampledPatch& patch) {
  const FineGrid& grid = aux.partition().grid();
  PatchConstraints pc;
  for (int subcell : patch.subcells) {
    for (int cont = 0; cont < 2; ++cont) {
      const int id = aux.entry_id(subcell, cont);
      if (id < 0) continue;
      const AuxEntry& e = aux.entry(id);
      std::vector<std::pair<int, double>> row;
      row.reserve(e.nodes.size());
      for (std::size_t i = 0; i < e.nodes.size(); ++i) {
        const MultiIndex c = grid.node_coords(e.nodes[i]);
        row.emplace_back(patch.local_node(c), e.weights[i]);
      }
      pc.cset.rows.push_back(std::move(row));
      pc.cset.labels.push_back("subcell " + std::to_string(subcell) +
                               " continuum " + std::to_string(cont));
      pc.entry_ids.push_back(id);
    }
  }
  pc.cset.targets = Eigen::VectorXd::Zero(pc.cset.size());
  return pc;
}

CellProblemWorkspace::CellProblemWorkspace(const CoefficientField& field,
                                           const AuxiliaryBasis& aux,
                                           OversampledPatch patch,
                                           SolveOptions opts,
                                           ConstrainedMethod method)
    : aux_(&aux), patch_(std::move(patch)) {
  constraints_ = patch_constraints(aux, patch_);
  if (constraints_.cset.size() == 0) {
    throw std::runtime_error("patch carries no auxiliary constraints");
  }
  CellBox support = patch_.cell_box;
  const SparseOperator A = assemble_stiffness(field, support);
  solver_ = std::make_unique<ConstrainedSolver>(
      A, patch_.boundary, constraints_.cset, opts, method);
}

bool CellProblemWorkspace::continuum_present(int continuum) const {
  for (int id : constraints_.entry_ids) {
    if (aux_->entry(id).continuum == continuum) return true;
  }
  return false;
}

FineFunction CellProblemWorkspace::run(const Eigen::VectorXd& targets) {
  ConstrainedSolution sol = solver_->solve(targets);
  max_constraint_residual_ =
      std::max(max_constraint_residual_, sol.constraint_residual);
  last_stationarity_ = sol.stationarity_residual;
  FineFunction fn;
  fn.box = patch_.node_box;
  fn.values = std::move(sol.u_full);
  return fn;
}

FineFunction CellProblemWorkspace::solve_constant(int continuum) {
  if (!continuum_present(continuum)) {
    throw std::runtime_error("no continuum-" + std::to_string(continuum) +
                             " subcell in the patch");
  }
  Eigen::VectorXd targets(constraints_.cset.size());
  for (int r = 0; r < constraints_.cset.size(); ++r) {
    const AuxEntry& e = aux_->entry(constraints_.entry_ids[r]);
    targets[r] = e.continuum == continuum ? e.measure : 0.0;
  }
  return run(targets);
}

FineFunction CellProblemWorkspace::solve_linear(
    int continuum, int axis, const std::array<double, kMaxDim>& x_ref) {
  if (!continuum_present(continuum)) {
    throw std::runtime_error("no continuum-" + std::to_string(continuum) +
                             " subcell in the patch");
  }
  Eigen::VectorXd targets(constraints_.cset.size());
  for (int r = 0; r < constraints_.cset.size(); ++r) {
    const AuxEntry& e = aux_->entry(constraints_.entry_ids[r]);
    targets[r] = e.continuum == continuum
                     ? (e.center[axis] - x_ref[axis]) * e.measure
                     : 0.0;
  }
  return run(targets);
}

FineFunction CellProblemWorkspace::solve_indicator(int subcell,
                                                   int continuum) {
  int row = -1;
  Eigen::VectorXd targets =
      Eigen::VectorXd::Zero(constraints_.cset.size());
  for (int r = 0; r < constraints_.cset.size(); ++r) {
    const AuxEntry& e = aux_->entry(constraints_.entry_ids[r]);
    if (e.cell == subcell && e.continuum == continuum) {
      targets[r] = e.measure;
      row = r;
    }
  }
  if (row < 0) {
    throw std::runtime_error("target subcell " + std::to_string(subcell) +
                             " continuum " + std::to_string(continuum) +
                             " is empty or outside the patch");
  }
  return run(targets);
}

namespace {

CellSolutionSet solve_on_patch(const CoefficientField& field,
                               const AuxiliaryBasis& aux,
                               const ShiftedPartition& p_coarse,
                               int coarse_cell, OversampledPatch patch,
                               SolveOptions opts) {
  CellSolutionSet set;
  set.cell_id = coarse_cell;
  set.patch = patch;
  CellProblemWorkspace ws(field, aux, std::move(patch), opts);
  const auto x_ref = p_coarse.cell(coarse_cell).nominal_center;
  const int dim = p_coarse.grid().dim();
  for (int cont = 0; cont < 2; ++cont) {
    if (!ws.continuum_present(cont)) continue;
    set.present[cont] = true;
    set.eta[cont] = ws.solve_constant(cont);
    for (int a = 0; a < dim; ++a) {
      set.eta_lin[cont][a] = ws.solve_linear(cont, a, x_ref);
    }
  }
  set.max_constraint_residual = ws.max_constraint_residual();
  if (!set.present[0] && !set.present[1]) {
    throw std::runtime_error("cell problems: empty patch constraints");
  }
  return set;
}

}  // namespace

CellSolutionSet solve_cell_problems(const CoefficientField& field,
                                    const AuxiliaryBasis& aux,
                                    const ShiftedPartition& p_coarse,
                                    int coarse_cell,
                                    const ShiftedPartition& p_sub, int k_layers,
                                    SolveOptions opts) {
  OversampledPatch patch =
      oversample_nested(p_coarse, coarse_cell, p_sub, k_layers);
  return solve_on_patch(field, aux, p_coarse, coarse_cell, std::move(patch),
                        opts);
}

CellSolutionSet solve_cell_problems_window(
    const CoefficientField& field, const AuxiliaryBasis& aux,
    const ShiftedPartition& p_coarse, int coarse_cell,
    const ShiftedPartition& p_sub, MultiIndex window_seg_lo,
    MultiIndex window_seg_hi, int k_layers, SolveOptions opts) {
  OversampledPatch patch =
      oversample_box(p_sub, window_seg_lo, window_seg_hi, k_layers);
  patch.target_cell = coarse_cell;
  return solve_on_patch(field, aux, p_coarse, coarse_cell, std::move(patch),
                        opts);
}

FineFunction solve_localized_basis_function(const CoefficientField& field,
                                            const AuxiliaryBasis& aux,
                                            int entry_id, int k_layers,
                                            SolveOptions opts) {
  const AuxEntry& e = aux.entry(entry_id);
  OversampledPatch patch = oversample(aux.partition(), e.cell, k_layers);
  CellProblemWorkspace ws(field, aux, std::move(patch), opts);
  return ws.solve_indicator(e.cell, e.continuum);
}

LocalizedBasisSet solve_localized_basis(const CoefficientField& field,
                                        const AuxiliaryBasis& aux, int k_layers,
                                        SolveOptions opts, int threads,
                                        CellCache* cache) {
  const ShiftedPartition& p = aux.partition();
  LocalizedBasisSet set;
  set.members.resize(aux.entry_count());

  // Entries of the same target cell share the patch and its factorization.
  std::vector<int> cells;
  for (int i = 0; i < aux.entry_count(); ++i) {
    if (cells.empty() || cells.back() != aux.entry(i).cell) {
      cells.push_back(aux.entry(i).cell);
    }
  }
  std::vector<double> residuals(cells.size(), 0.0);

  parallel_for(static_cast<int>(cells.size()), threads, [&](int ci) {
    const int cell = cells[ci];
    std::vector<int> todo;
    for (int cont = 0; cont < 2; ++cont) {
      const int id = aux.entry_id(cell, cont);
      if (id >= 0) todo.push_back(id);
    }
    OversampledPatch patch = oversample(p, cell, k_layers);
    std::optional<CellProblemWorkspace> ws;
    for (int id : todo) {
      LocalizedBasisFunction& member = set.members[id];
      member.entry_id = id;
      if (cache) {
        auto hit = cache->load_basis(id, k_layers, patch.node_box);
        if (hit) {
          member.patch = patch;
          member.fn = std::move(*hit);
          continue;
        }
      }
      if (!ws) ws.emplace(field, aux, patch, opts);
      member.patch = patch;
      member.fn = ws->solve_indicator(aux.entry(id).cell,
                                      aux.entry(id).continuum);
      if (cache) cache->store_basis(id, k_layers, member.fn);
    }
    if (ws) residuals[ci] = ws->max_constraint_residual();
  });

  for (double r : residuals) {
    set.max_constraint_residual = std::max(set.max_constraint_residual, r);
  }
  return set;
}

std::vector<double> decay_profile(const CoefficientField& field,
                                  const FineFunction& fn,
                                  const OversampledPatch& patch,
                                  const ShiftedPartition& p_sub) {
  std::vector<double> rings;
  for (int subcell : patch.subcells) {
    const CoarseCell& cc = p_sub.cell(subcell);
    int dist = 0;
    for (int a = 0; a < p_sub.grid().dim(); ++a) {
      const int below = patch.target_seg_lo[a] - cc.seg[a];
      const int above = cc.seg[a] - patch.target_seg_hi[a];
      dist = std::max({dist, below, above});
    }
    if (dist >= static_cast<int>(rings.size())) rings.resize(dist + 1, 0.0);
    rings[dist] += energy_product(field, fn, fn, cc.box);
  }
  return rings;
}

}  // namespace mch
