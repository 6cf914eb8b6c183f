#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mch/fem.hpp"
#include "mch/field.hpp"
#include "mch/mesh.hpp"

namespace mch {

// One auxiliary constraint functional: the L2 pairing against the indicator
// of a (subcell, continuum) region, stored as a sparse row over global nodes.
struct AuxEntry {
  int cell = -1;
  int continuum = 0;
  double measure = 0.0;
  std::array<double, kMaxDim> center{};  // nominal center of the subcell
  std::vector<int> nodes;                // global node ids
  std::vector<double> weights;
};

class AuxiliaryBasis {
 public:
  static AuxiliaryBasis build(const ShiftedPartition& p,
                              const ContinuumMap& map);

  const ShiftedPartition& partition() const { return *partition_; }
  int entry_count() const { return static_cast<int>(entries_.size()); }
  const AuxEntry& entry(int i) const { return entries_[i]; }
  // -1 when the (cell, continuum) intersection is empty.
  int entry_id(int cell, int continuum) const {
    return index_[cell][continuum];
  }
  bool continuum_nonempty(int continuum) const {
    return nonempty_[continuum];
  }

 private:
  const ShiftedPartition* partition_ = nullptr;
  std::vector<AuxEntry> entries_;
  std::vector<std::array<int, 2>> index_;
  std::array<bool, 2> nonempty_{false, false};
};

// Constraint rows of all auxiliary entries whose subcell lies in the patch,
// mapped to patch-local node ids. Entry order defines the row order.
struct PatchConstraints {
  ConstraintSet cset;
  std::vector<int> entry_ids;
};

PatchConstraints patch_constraints(const AuxiliaryBasis& aux,
                                   const OversampledPatch& patch);

// Shares one factorized constrained solver across all cell problems posed on
// the same oversampled patch.
class CellProblemWorkspace {
 public:
  CellProblemWorkspace(const CoefficientField& field,
                       const AuxiliaryBasis& aux, OversampledPatch patch,
                       SolveOptions opts = {},
                       ConstrainedMethod method = ConstrainedMethod::kAuto);

  const OversampledPatch& patch() const { return patch_; }
  const std::vector<int>& entry_ids() const { return constraints_.entry_ids; }
  bool continuum_present(int continuum) const;

  // Subcell averages delta_{ki} on continuum i, zero patch-boundary values.
  FineFunction solve_constant(int continuum);
  // Subcell averages delta_{ki} (x_j - x_ref) along the given axis.
  FineFunction solve_linear(int continuum, int axis,
                            const std::array<double, kMaxDim>& x_ref);
  // Unit average on one (subcell, continuum), zero on all others.
  FineFunction solve_indicator(int subcell, int continuum);

  double max_constraint_residual() const { return max_constraint_residual_; }
  double last_stationarity_residual() const { return last_stationarity_; }

 private:
  FineFunction run(const Eigen::VectorXd& targets);

  const AuxiliaryBasis* aux_;
  OversampledPatch patch_;
  PatchConstraints constraints_;
  std::unique_ptr<ConstrainedSolver> solver_;
  double max_constraint_residual_ = 0.0;
  double last_stationarity_ = 0.0;
};

// Constant- and linear-representing solutions of one coarse cell, on its
// oversampled patch.
struct CellSolutionSet {
  int cell_id = -1;
  OversampledPatch patch;
  std::array<bool, 2> present{false, false};
  std::array<FineFunction, 2> eta;
  std::array<std::array<FineFunction, kMaxDim>, 2> eta_lin;
  double max_constraint_residual = 0.0;
};

// Solves the cell problems of one cell of p_coarse over the nested p_sub
// subcells, oversampled by k layers.
CellSolutionSet solve_cell_problems(const CoefficientField& field,
                                    const AuxiliaryBasis& aux,
                                    const ShiftedPartition& p_coarse,
                                    int coarse_cell,
                                    const ShiftedPartition& p_sub, int k_layers,
                                    SolveOptions opts = {});

// Same cell problems posed on an oversampled window inside the cell; the
// linear targets keep the coarse cell's nominal center as reference.
CellSolutionSet solve_cell_problems_window(const CoefficientField& field,
                                           const AuxiliaryBasis& aux,
                                           const ShiftedPartition& p_coarse,
                                           int coarse_cell,
                                           const ShiftedPartition& p_sub,
                                           MultiIndex window_seg_lo,
                                           MultiIndex window_seg_hi,
                                           int k_layers,
                                           SolveOptions opts = {});

struct LocalizedBasisFunction {
  int entry_id = -1;
  OversampledPatch patch;
  FineFunction fn;
};

// Localized constrained-minimization basis, one function per auxiliary entry.
struct LocalizedBasisSet {
  std::vector<LocalizedBasisFunction> members;  // aligned with aux entries
  double max_constraint_residual = 0.0;
};

class CellCache;  // cache.hpp

LocalizedBasisSet solve_localized_basis(const CoefficientField& field,
                                        const AuxiliaryBasis& aux, int k_layers,
                                        SolveOptions opts = {}, int threads = 1,
                                        CellCache* cache = nullptr);

FineFunction solve_localized_basis_function(const CoefficientField& field,
                                            const AuxiliaryBasis& aux,
                                            int entry_id, int k_layers,
                                            SolveOptions opts = {});

// Energy of fn in each Chebyshev ring of subcells around the patch target;
// ring energies sum to the patch energy.
std::vector<double> decay_profile(const CoefficientField& field,
                                  const FineFunction& fn,
                                  const OversampledPatch& patch,
                                  const ShiftedPartition& p_sub);

// Default oversampling width, k = max(2, ceil(log2(1/h_eps))).
int default_k_layers(double h_eps);

}  // namespace mch
