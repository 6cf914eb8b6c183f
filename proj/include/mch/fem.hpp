#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mch/field.hpp"
#include "mch/mesh.hpp"

namespace mch {

// Nodal Q1 function on a box of fine-grid nodes. Values outside the box are
// treated as zero (patch functions vanish on their boundary).
struct FineFunction {
  NodeBox box;
  Eigen::VectorXd values;
};

FineFunction zero_function(const NodeBox& box);

inline double fn_value(const FineFunction& u, const MultiIndex& node) {
  return box_contains_node(u.box, node) ? u.values[local_node_index(u.box, node)]
                                        : 0.0;
}

// One H^1 piece per coarse cell; discontinuous across coarse-cell faces.
struct BrokenPiece {
  int cell = -1;
  FineFunction fn;
};

struct BrokenFunction {
  std::vector<BrokenPiece> pieces;
};

// Symmetric sparse operator in compressed row form over the nodes of a box.
struct SparseOperator {
  Eigen::SparseMatrix<double, Eigen::RowMajor> mat;
  NodeBox box;
  const FineGrid* grid = nullptr;
};

// Q1 element matrices on a cube of side h, built from 1D tensor factors;
// corner ordering is row-major with axis 0 fastest.
struct ElementMatrices {
  Eigen::MatrixXd stiffness;  // unit kappa
  Eigen::MatrixXd mass;
  int corners = 0;
  double h = 0.0;
  int dim = 0;
};

ElementMatrices element_matrices(int dim, double h);

SparseOperator assemble_stiffness(const CoefficientField& field,
                                  const CellBox& support);
SparseOperator assemble_stiffness(const CoefficientField& field);

// Consistent load vector over all grid nodes: (f, v) for nodal f.
Eigen::VectorXd assemble_load(const FineGrid& grid, const FineFunction& f);

// Energy pairing over a cell region: sum_e kappa_e grad u . grad v.
double energy_product(const CoefficientField& field, const FineFunction& u,
                      const FineFunction& v, const CellBox& region);
double l2_product(const FineGrid& grid, const FineFunction& u,
                  const FineFunction& v, const CellBox& region);

struct Norms {
  double energy = 0.0;
  double l2 = 0.0;
};

Norms norms(const FineFunction& u, const CoefficientField& field,
            const CellBox& region);
Norms norms(const FineFunction& u, const CoefficientField& field);

// Broken bilinear form: pieces are paired per coarse cell and the conforming
// overloads integrate over the support intersection.
double apply_bilinear(const CoefficientField& field, const FineFunction& u,
                      const FineFunction& v);
double apply_bilinear(const CoefficientField& field, const BrokenFunction& u,
                      const BrokenFunction& v);

// --- solvers ---------------------------------------------------------------

enum class SpdMethod { kAuto, kCholesky, kPcg, kDense };

struct SolveOptions {
  SpdMethod method = SpdMethod::kAuto;
  double tol = 1e-10;
  int max_iterations = 0;  // 0 picks a cap from the system size
  int dense_threshold = 600;
};

class DofMap {
 public:
  DofMap() = default;
  explicit DofMap(std::span<const std::uint8_t> fixed);
  int full_size() const { return static_cast<int>(free_of_full_.size()); }
  int free_size() const { return static_cast<int>(full_of_free_.size()); }
  int free_index(int full) const { return free_of_full_[full]; }
  int full_index(int free) const { return full_of_free_[free]; }
  Eigen::VectorXd restricted(const Eigen::VectorXd& full) const;
  Eigen::VectorXd prolonged(const Eigen::VectorXd& reduced) const;

 private:
  std::vector<int> free_of_full_;
  std::vector<int> full_of_free_;
};

struct SpdReport {
  SpdMethod method = SpdMethod::kCholesky;
  int iterations = 0;
  double rel_residual = 0.0;
};

// SPD solve on the free dofs of a sparse operator. Factorizations are reused
// across repeated solves with the same matrix.
class SpdSolver {
 public:
  SpdSolver(const SparseOperator& A, std::span<const std::uint8_t> fixed,
            SolveOptions opts = {});
  ~SpdSolver();
  SpdSolver(SpdSolver&&) noexcept;
  SpdSolver& operator=(SpdSolver&&) noexcept;

  const DofMap& dofs() const { return map_; }
  const Eigen::SparseMatrix<double>& reduced_matrix() const { return A_; }
  Eigen::VectorXd solve_reduced(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve_reduced_multi(const Eigen::MatrixXd& B) const;
  Eigen::VectorXd solve_full(const Eigen::VectorXd& b_full) const;
  const SpdReport& last_report() const { return report_; }

 private:
  Eigen::VectorXd pcg(const Eigen::VectorXd& b) const;

  DofMap map_;
  Eigen::SparseMatrix<double> A_;
  Eigen::VectorXd inv_diag_;
  SpdMethod method_ = SpdMethod::kCholesky;
  double tol_ = 1e-10;
  int max_iterations_ = 0;
  struct Factor;
  std::unique_ptr<Factor> factor_;
  mutable SpdReport report_;
};

FineFunction solve_spd(const SparseOperator& A,
                       std::span<const std::uint8_t> fixed,
                       const Eigen::VectorXd& b_full, SolveOptions opts = {});

// Equality constraints: sparse L2-pairing rows over the local nodes of an
// operator's box, with scalar targets.
struct ConstraintSet {
  std::vector<std::vector<std::pair<int, double>>> rows;
  Eigen::VectorXd targets;
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(rows.size()); }
};

struct ConstrainedSolution {
  Eigen::VectorXd u_full;  // over box nodes, zeros on fixed dofs
  Eigen::VectorXd multipliers;
  double constraint_residual = 0.0;     // ||C u - g||_2
  double stationarity_residual = 0.0;   // ||A u + C^T lambda - b||_2 on free dofs
  SpdReport inner;
};

enum class ConstrainedMethod { kAuto, kSchur, kDenseKkt };

// Minimizes 1/2 u^T A u - b^T u subject to C u = g, by a Schur complement on
// the multipliers (S = C A^-1 C^T) or a dense KKT factorization for small
// systems. The factorization is shared across solves with different targets.
class ConstrainedSolver {
 public:
  ConstrainedSolver(const SparseOperator& A,
                    std::span<const std::uint8_t> fixed, ConstraintSet cset,
                    SolveOptions opts = {},
                    ConstrainedMethod method = ConstrainedMethod::kAuto);

  int constraint_count() const { return cset_.size(); }
  ConstrainedMethod method() const { return method_; }
  const ConstraintSet& constraints() const { return cset_; }

  ConstrainedSolution solve(const Eigen::VectorXd& targets,
                            const Eigen::VectorXd* b_full = nullptr) const;
  ConstrainedSolution solve() const { return solve(cset_.targets, nullptr); }

 private:
  void verify_row_independence() const;
  void check_rank_and_throw() const;

  NodeBox box_;
  DofMap map_;
  ConstraintSet cset_;
  SolveOptions opts_;
  ConstrainedMethod method_ = ConstrainedMethod::kSchur;
  Eigen::SparseMatrix<double> C_;  // reduced, m x n_free
  // Schur path
  std::unique_ptr<SpdSolver> spd_;
  Eigen::MatrixXd Y_;  // A^-1 C^T
  Eigen::LDLT<Eigen::MatrixXd> S_ldlt_;
  Eigen::MatrixXd S_;
  // Dense KKT path
  Eigen::PartialPivLU<Eigen::MatrixXd> kkt_lu_;
  Eigen::MatrixXd kkt_;
};

ConstrainedSolution solve_constrained(
    const SparseOperator& A, std::span<const std::uint8_t> fixed,
    const ConstraintSet& cset, SolveOptions opts = {},
    ConstrainedMethod method = ConstrainedMethod::kAuto);

// Dirichlet mask over the whole grid boundary.
std::vector<std::uint8_t> domain_boundary_mask(const FineGrid& grid);

// Fine-scale reference solve with zero Dirichlet boundary values.
FineFunction solve_fine_reference(const CoefficientField& field,
                                  const FineFunction& f_nodal,
                                  SolveOptions opts = {});

// Nodal interpolation of a closed-form right-hand side.
template <typename F>
FineFunction interpolate_nodal(const FineGrid& grid, F&& f) {
  FineFunction fn;
  fn.box = grid.full_node_box();
  fn.values.resize(grid.node_count());
  for (int i = 0; i < grid.node_count(); ++i) {
    fn.values[i] = f(grid.node_position(i));
  }
  return fn;
}

}  // namespace mch
