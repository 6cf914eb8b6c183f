#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mch/downscale.hpp"
#include "mch/fem.hpp"
#include "mch/field.hpp"
#include "mch/mesh.hpp"

namespace mch {

enum class TensorProvenance { kFullCell, kRve };

// Effective coefficients of one coarse cell, read off the energy Gram matrix
// of its constant- and linear-representing solutions.
struct TensorBlock {
  std::array<bool, 2> present{false, false};
  // alpha[i][j][k][l], beta[i][j][k] pairs grad eta_i^(k) with eta_j,
  // gamma[i][j].
  double alpha[2][2][kMaxDim][kMaxDim]{};
  double beta[2][2][kMaxDim]{};
  double gamma[2][2]{};
  // Gram of the stacked fields [eta_0, eta_1, eta_0^(0).., eta_1^(0)..],
  // restricted to present continua, normalized by H^d.
  Eigen::MatrixXd gram;
  std::vector<std::pair<int, int>> gram_fields;  // (continuum, axis or -1)
};

struct EffectiveTensors {
  std::vector<TensorBlock> cells;
  double h_coarse = 0.0;
  int dim = 2;
  TensorProvenance provenance = TensorProvenance::kFullCell;
};

EffectiveTensors assemble_effective_tensors(
    const CoefficientField& field, const ShiftedPartition& p_coarse,
    const std::map<int, CellSolutionSet>& cells);

// Tensors from window integrals scaled by |K| / (H^d |w|); the window must be
// a union of sub-partition cells inside K.
EffectiveTensors assemble_effective_tensors_rve(
    const CoefficientField& field, const ShiftedPartition& p_coarse,
    const ShiftedPartition& p_sub, const std::map<int, CellSolutionSet>& cells,
    const std::map<int, CellBox>& windows);

struct TensorStructureReport {
  double max_symmetry_violation = 0.0;  // relative
  double min_gram_eigenvalue = 0.0;     // scaled by the largest
  bool pass(double sym_tol = 1e-12, double psd_tol = 1e-10) const {
    return max_symmetry_violation <= sym_tol &&
           min_gram_eigenvalue >= -psd_tol;
  }
};

TensorStructureReport check_tensor_structure(const EffectiveTensors& tensors);

struct LoadMoments {
  // Aligned with coarse cells: integrals of f against eta and eta^(k).
  std::vector<std::array<double, 2>> constant;
  std::vector<std::array<std::array<double, kMaxDim>, 2>> linear;
};

LoadMoments compute_load_moments(const FineFunction& f,
                                 const ShiftedPartition& p_coarse,
                                 const std::map<int, CellSolutionSet>& cells);

enum class MacroBc { kNatural, kDirichlet };

struct MacroSystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs;
  CoarseLattice lattice;
  MacroBc bc = MacroBc::kDirichlet;
  std::vector<std::uint8_t> pinned;  // per dof (2 per lattice node)
  int dof_count() const { return static_cast<int>(rhs.size()); }
};

MacroSystem assemble_macro_system(const EffectiveTensors& tensors,
                                  const LoadMoments& moments,
                                  const ShiftedPartition& p_coarse,
                                  MacroBc bc);

struct MacroSolution {
  Eigen::VectorXd u;  // interleaved (node, continuum)
  double residual = 0.0;
  double sigma_min_estimate = 0.0;
  int rank = 0;
  bool maybe_singular = false;

  Eigen::VectorXd nodal(int continuum, const CoarseLattice& lattice) const;
};

MacroSolution solve_macro(const MacroSystem& system);

MacroField macro_field(const MacroSolution& sol, const ShiftedPartition& p);

// Both sides of the averaging identity at fixed shift: per-cell tensor
// quadratic form weighted by H^d against the broken bilinear form of the
// downscaled data. Returns the largest per-cell discrepancy relative to the
// largest cell value.
double verify_averaging_identity(const CoefficientField& field,
                                 const ShiftedPartition& p_coarse,
                                 const std::map<int, CellSolutionSet>& cells,
                                 const EffectiveTensors& tensors,
                                 std::span<const CellMacroData> u_data,
                                 std::span<const CellMacroData> v_data);

// Tensor quadratic form of one cell at given macro data.
double tensor_form(const TensorBlock& block, int dim, const CellMacroData& u,
                   const CellMacroData& v);

}  // namespace mch
