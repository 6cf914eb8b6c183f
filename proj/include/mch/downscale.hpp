#pragma once

#include <array>
#include <map>
#include <span>
#include <vector>

#include "mch/cells.hpp"
#include "mch/fem.hpp"
#include "mch/mesh.hpp"

namespace mch {

// Per-(subcell, continuum) averages; aligned with the partition's cells.
struct MacroAverages {
  std::vector<std::array<double, 2>> value;
  std::vector<std::array<std::uint8_t, 2>> defined;
};

// L2 projection onto the auxiliary space: continuum-wise subcell averages.
MacroAverages project_continuum_averages(const FineFunction& u,
                                         const ShiftedPartition& p);

// Sum of localized basis functions weighted by the averages.
FineFunction downscale_nlmc(const MacroAverages& avgs,
                            const LocalizedBasisSet& basis,
                            const AuxiliaryBasis& aux);

// Macro data sampled on one coarse cell: values and gradients per continuum.
struct CellMacroData {
  std::array<double, 2> value{};
  std::array<std::array<double, kMaxDim>, 2> grad{};
};

// Per-cell combination of constant- and linear-representing solutions,
// restricted to the cell; discontinuous across coarse-cell faces.
BrokenFunction downscale_linear(std::span<const CellMacroData> data,
                                const std::map<int, CellSolutionSet>& cells,
                                const ShiftedPartition& p_coarse);

// Nodal lattice spanned by the segment boundaries of a partition.
struct CoarseLattice {
  std::array<std::vector<double>, kMaxDim> bounds;
  std::array<int, kMaxDim> nodes_along{};
  int dim = 2;

  int node_count() const;
  int node_index(const MultiIndex& c) const;
  MultiIndex node_coords(int id) const;
  std::array<double, kMaxDim> node_position(const MultiIndex& c) const;
  bool on_boundary(const MultiIndex& c) const;
};

CoarseLattice coarse_lattice(const ShiftedPartition& p);

enum class MacroEvalMode { kCenterValue, kCellAverage };

// Two continuum fields given by nodal data on the coarse lattice, evaluated
// at cell centers through bilinear interpolation. kCellAverage replaces the
// center value by the average over the sub-partition cell at the center.
class MacroField {
 public:
  MacroField(const ShiftedPartition& p, Eigen::VectorXd u0, Eigen::VectorXd u1);

  const ShiftedPartition& partition() const { return *p_; }
  const Eigen::VectorXd& nodal(int continuum) const { return u_[continuum]; }

  CellMacroData eval(int cell) const;
  double interpolate_at(int continuum,
                        const std::array<double, kMaxDim>& x) const;
  std::vector<CellMacroData> sample(
      MacroEvalMode mode = MacroEvalMode::kCenterValue,
      const ShiftedPartition* p_sub = nullptr) const;

 private:
  const ShiftedPartition* p_;
  CoarseLattice lattice_;
  std::array<Eigen::VectorXd, 2> u_;
};

double broken_l2_error(const BrokenFunction& w, const FineFunction& u,
                       const FineGrid& grid);
double broken_energy_norm(const BrokenFunction& w,
                          const CoefficientField& field);
// || w - u ||_a with w broken and u conforming, summed per piece.
double broken_energy_error(const BrokenFunction& w, const FineFunction& u,
                           const CoefficientField& field);

}  // namespace mch
