#include "mch/fem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mch {

namespace {

constexpr int kMaxCorners = 1 << kMaxDim;

int corner_count(int dim) { return 1 << dim; }

// Corner node coordinates of a fine cell.
inline MultiIndex corner_node(const MultiIndex& cell, int corner) {
  MultiIndex n = cell;
  for (int a = 0; a < kMaxDim; ++a) n[a] += (corner >> a) & 1;
  return n;
}

std::string residual_message(const char* what, double residual, double tol,
                             int iterations) {
  std::ostringstream os;
  os << what << ": residual " << residual << " exceeds tolerance " << tol
     << " after " << iterations << " iterations";
  return os.str();
}

Eigen::SparseMatrix<double> reduce_sparse(
    const Eigen::SparseMatrix<double, Eigen::RowMajor>& mat,
    const DofMap& map) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mat.nonZeros());
  for (int r = 0; r < mat.outerSize(); ++r) {
    const int fr = map.free_index(r);
    if (fr < 0) continue;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(mat,
                                                                        r);
         it; ++it) {
      const int fc = map.free_index(static_cast<int>(it.col()));
      if (fc >= 0) trips.emplace_back(fr, fc, it.value());
    }
  }
  Eigen::SparseMatrix<double> out(map.free_size(), map.free_size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace

FineFunction zero_function(const NodeBox& box) {
  FineFunction f;
  f.box = box;
  f.values = Eigen::VectorXd::Zero(box_node_count(box));
  return f;
}

ElementMatrices element_matrices(int dim, double h) {
  Eigen::Matrix2d k1, m1;
  k1 << 1.0 / h, -1.0 / h, -1.0 / h, 1.0 / h;
  m1 << h / 3.0, h / 6.0, h / 6.0, h / 3.0;
  const int nc = corner_count(dim);
  ElementMatrices em;
  em.dim = dim;
  em.h = h;
  em.corners = nc;
  em.stiffness = Eigen::MatrixXd::Zero(nc, nc);
  em.mass = Eigen::MatrixXd::Zero(nc, nc);
  for (int r = 0; r < nc; ++r) {
    for (int c = 0; c < nc; ++c) {
      double mass = 1.0;
      for (int a = 0; a < dim; ++a) mass *= m1((r >> a) & 1, (c >> a) & 1);
      em.mass(r, c) = mass;
      for (int grad_axis = 0; grad_axis < dim; ++grad_axis) {
        double term = 1.0;
        for (int a = 0; a < dim; ++a) {
          const Eigen::Matrix2d& f = (a == grad_axis) ? k1 : m1;
          term *= f((r >> a) & 1, (c >> a) & 1);
        }
        em.stiffness(r, c) += term;
      }
    }
  }
  return em;
}

SparseOperator assemble_stiffness(const CoefficientField& field,
                                  const CellBox& support) {
  if (box_empty(support)) {
    throw std::invalid_argument("assemble_stiffness: empty support");
  }
  const FineGrid& grid = field.grid();
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  SparseOperator op;
  op.box = nodes_of(support);
  op.grid = &grid;
  const int nn = box_node_count(op.box);
  const int ncell = box_cell_count(support);
  const int nc = em.corners;

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(ncell) * nc * nc);
  for (int l = 0; l < ncell; ++l) {
    const MultiIndex cell = local_cell_coords(support, l);
    const double k = field.value(grid.cell_index(cell));
    int ids[kMaxCorners];
    for (int c = 0; c < nc; ++c) {
      ids[c] = local_node_index(op.box, corner_node(cell, c));
    }
    for (int r = 0; r < nc; ++r) {
      for (int c = 0; c < nc; ++c) {
        trips.emplace_back(ids[r], ids[c], k * em.stiffness(r, c));
      }
    }
  }
  op.mat.resize(nn, nn);
  op.mat.setFromTriplets(trips.begin(), trips.end());
  return op;
}

SparseOperator assemble_stiffness(const CoefficientField& field) {
  return assemble_stiffness(field, field.grid().full_cell_box());
}

Eigen::VectorXd assemble_load(const FineGrid& grid, const FineFunction& f) {
  if (!same_box(f.box, grid.full_node_box())) {
    throw std::invalid_argument("assemble_load expects a whole-grid function");
  }
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(grid.node_count());
  const CellBox cells = grid.full_cell_box();
  const int ncell = box_cell_count(cells);
  const int nc = em.corners;
  for (int l = 0; l < ncell; ++l) {
    const MultiIndex cell = local_cell_coords(cells, l);
    int ids[kMaxCorners];
    double fv[kMaxCorners];
    for (int c = 0; c < nc; ++c) {
      ids[c] = local_node_index(f.box, corner_node(cell, c));
      fv[c] = f.values[ids[c]];
    }
    for (int r = 0; r < nc; ++r) {
      double s = 0.0;
      for (int c = 0; c < nc; ++c) s += em.mass(r, c) * fv[c];
      b[ids[r]] += s;
    }
  }
  return b;
}

namespace {

double pair_over_region(const FineGrid& grid, const Eigen::MatrixXd& element,
                        std::span<const double> kappa, const FineFunction& u,
                        const FineFunction& v, const CellBox& region) {
  if (box_empty(region)) return 0.0;
  const int nc = corner_count(grid.dim());
  const int ncell = box_cell_count(region);
  double total = 0.0;
  for (int l = 0; l < ncell; ++l) {
    const MultiIndex cell = local_cell_coords(region, l);
    double uv[kMaxCorners], vv[kMaxCorners];
    for (int c = 0; c < nc; ++c) {
      const MultiIndex node = corner_node(cell, c);
      uv[c] = fn_value(u, node);
      vv[c] = fn_value(v, node);
    }
    double acc = 0.0;
    for (int r = 0; r < nc; ++r) {
      double s = 0.0;
      for (int c = 0; c < nc; ++c) s += element(r, c) * vv[c];
      acc += uv[r] * s;
    }
    const double w = kappa.empty() ? 1.0 : kappa[grid.cell_index(cell)];
    total += w * acc;
  }
  return total;
}

}  // namespace

double energy_product(const CoefficientField& field, const FineFunction& u,
                      const FineFunction& v, const CellBox& region) {
  const FineGrid& grid = field.grid();
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  return pair_over_region(grid, em.stiffness, field.values(), u, v, region);
}

double l2_product(const FineGrid& grid, const FineFunction& u,
                  const FineFunction& v, const CellBox& region) {
  const ElementMatrices em = element_matrices(grid.dim(), grid.h());
  return pair_over_region(grid, em.mass, {}, u, v, region);
}

Norms norms(const FineFunction& u, const CoefficientField& field,
            const CellBox& region) {
  Norms n;
  n.energy = std::sqrt(std::max(0.0, energy_product(field, u, u, region)));
  n.l2 = std::sqrt(std::max(0.0, l2_product(field.grid(), u, u, region)));
  return n;
}

Norms norms(const FineFunction& u, const CoefficientField& field) {
  return norms(u, field, field.grid().full_cell_box());
}

namespace {

CellBox spanned_cells(const FineGrid& grid, const NodeBox& nodes) {
  CellBox b;
  b.dim = grid.dim();
  for (int a = 0; a < kMaxDim; ++a) {
    if (a < grid.dim()) {
      b.lo[a] = std::max(0, nodes.lo[a]);
      b.hi[a] = std::min(grid.cells_along(a), nodes.hi[a]);
    } else {
      b.lo[a] = 0;
      b.hi[a] = 1;
    }
  }
  return b;
}

}  // namespace

double apply_bilinear(const CoefficientField& field, const FineFunction& u,
                      const FineFunction& v) {
  const FineGrid& grid = field.grid();
  if (u.box.dim != grid.dim() || v.box.dim != grid.dim()) {
    throw std::invalid_argument("apply_bilinear: incompatible grids");
  }
  const CellBox region =
      intersect(spanned_cells(grid, u.box), spanned_cells(grid, v.box));
  if (box_empty(region)) return 0.0;
  return energy_product(field, u, v, region);
}

double apply_bilinear(const CoefficientField& field, const BrokenFunction& u,
                      const BrokenFunction& v) {
  double total = 0.0;
  for (const BrokenPiece& pu : u.pieces) {
    for (const BrokenPiece& pv : v.pieces) {
      if (pu.cell != pv.cell) continue;
      total += energy_product(field, pu.fn, pv.fn,
                              spanned_cells(field.grid(), pu.fn.box));
    }
  }
  return total;
}

// --- DofMap -----------------------------------------------------------------

DofMap::DofMap(std::span<const std::uint8_t> fixed) {
  free_of_full_.assign(fixed.size(), -1);
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!fixed[i]) {
      free_of_full_[i] = static_cast<int>(full_of_free_.size());
      full_of_free_.push_back(static_cast<int>(i));
    }
  }
}

Eigen::VectorXd DofMap::restricted(const Eigen::VectorXd& full) const {
  Eigen::VectorXd r(free_size());
  for (int i = 0; i < free_size(); ++i) r[i] = full[full_of_free_[i]];
  return r;
}

Eigen::VectorXd DofMap::prolonged(const Eigen::VectorXd& reduced) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(full_size());
  for (int i = 0; i < free_size(); ++i) f[full_of_free_[i]] = reduced[i];
  return f;
}

// --- SpdSolver ---------------------------------------------------------------

struct SpdSolver::Factor {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;
  Eigen::LDLT<Eigen::MatrixXd> dense;
  bool is_dense = false;
};

SpdSolver::~SpdSolver() = default;
SpdSolver::SpdSolver(SpdSolver&&) noexcept = default;
SpdSolver& SpdSolver::operator=(SpdSolver&&) noexcept = default;

SpdSolver::SpdSolver(const SparseOperator& A,
                     std::span<const std::uint8_t> fixed, SolveOptions opts)
    : map_(fixed), tol_(opts.tol), max_iterations_(opts.max_iterations) {
  if (static_cast<int>(fixed.size()) != A.mat.rows()) {
    throw std::invalid_argument("fixed-dof mask does not match the operator");
  }
  const int nf = map_.free_size();
  if (nf == 0) throw std::invalid_argument("no free dofs to solve for");
  A_ = reduce_sparse(A.mat, map_);

  method_ = opts.method;
  if (method_ == SpdMethod::kAuto) {
    method_ = nf <= opts.dense_threshold ? SpdMethod::kDense
                                         : SpdMethod::kCholesky;
  }
  if (max_iterations_ <= 0) max_iterations_ = std::max(1000, 40 * nf);

  factor_ = std::make_unique<Factor>();
  if (method_ == SpdMethod::kCholesky) {
    factor_->chol.compute(A_);
    if (factor_->chol.info() != Eigen::Success) {
      throw std::runtime_error("sparse Cholesky factorization failed");
    }
  } else if (method_ == SpdMethod::kDense) {
    factor_->is_dense = true;
    factor_->dense.compute(Eigen::MatrixXd(A_));
    if (factor_->dense.info() != Eigen::Success) {
      throw std::runtime_error("dense factorization failed");
    }
  } else {
    inv_diag_ = A_.diagonal().cwiseInverse();
    if (!inv_diag_.allFinite()) {
      throw std::runtime_error("zero diagonal entry; Jacobi PCG unavailable");
    }
  }
}

Eigen::VectorXd SpdSolver::pcg(const Eigen::VectorXd& b) const {
  const double bnorm = b.norm();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  report_ = {SpdMethod::kPcg, 0, 0.0};
  if (bnorm == 0.0) return x;
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = inv_diag_.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  for (int it = 0; it < max_iterations_; ++it) {
    const Eigen::VectorXd Ap = A_ * p;
    const double alpha = rz / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    report_.iterations = it + 1;
    report_.rel_residual = r.norm() / bnorm;
    if (report_.rel_residual <= tol_) return x;
    const Eigen::VectorXd z_new = inv_diag_.cwiseProduct(r);
    const double rz_new = r.dot(z_new);
    p = z_new + (rz_new / rz) * p;
    rz = rz_new;
  }
  throw std::runtime_error(residual_message(
      "PCG did not converge", report_.rel_residual, tol_, report_.iterations));
}

Eigen::VectorXd SpdSolver::solve_reduced(const Eigen::VectorXd& b) const {
  if (method_ == SpdMethod::kPcg) return pcg(b);
  const double bnorm = b.norm();
  report_ = {method_, 0, 0.0};
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(b.size());
  auto apply = [&](const Eigen::VectorXd& rhs) {
    return factor_->is_dense ? Eigen::VectorXd(factor_->dense.solve(rhs))
                             : Eigen::VectorXd(factor_->chol.solve(rhs));
  };
  Eigen::VectorXd x = apply(b);
  // Iterative refinement keeps direct-solve residuals at tolerance even for
  // strongly graded coefficients.
  for (int pass = 0; pass < 3; ++pass) {
    const Eigen::VectorXd r = b - A_ * x;
    report_.rel_residual = r.norm() / bnorm;
    if (report_.rel_residual <= tol_) return x;
    x += apply(r);
  }
  const Eigen::VectorXd r = b - A_ * x;
  report_.rel_residual = r.norm() / bnorm;
  if (report_.rel_residual <= tol_) return x;
  throw std::runtime_error(
      residual_message("direct solve", report_.rel_residual, tol_, 0));
}

Eigen::MatrixXd SpdSolver::solve_reduced_multi(const Eigen::MatrixXd& B) const {
  Eigen::MatrixXd X(B.rows(), B.cols());
  for (int c = 0; c < B.cols(); ++c) X.col(c) = solve_reduced(B.col(c));
  return X;
}

Eigen::VectorXd SpdSolver::solve_full(const Eigen::VectorXd& b_full) const {
  return map_.prolonged(solve_reduced(map_.restricted(b_full)));
}

FineFunction solve_spd(const SparseOperator& A,
                       std::span<const std::uint8_t> fixed,
                       const Eigen::VectorXd& b_full, SolveOptions opts) {
  SpdSolver solver(A, fixed, opts);
  FineFunction u;
  u.box = A.box;
  u.values = solver.solve_full(b_full);
  return u;
}

// --- ConstrainedSolver --------------------------------------------------------

ConstrainedSolver::ConstrainedSolver(const SparseOperator& A,
                                     std::span<const std::uint8_t> fixed,
                                     ConstraintSet cset, SolveOptions opts,
                                     ConstrainedMethod method)
    : box_(A.box), map_(fixed), cset_(std::move(cset)), opts_(opts) {
  const int m = cset_.size();
  if (m == 0) throw std::invalid_argument("constraint set is empty");
  if (static_cast<int>(cset_.targets.size()) != m) {
    throw std::invalid_argument("constraint targets do not match rows");
  }
  const int nf = map_.free_size();

  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < m; ++r) {
    bool nonzero = false;
    for (const auto& [local, w] : cset_.rows[r]) {
      const int fc = map_.free_index(local);
      if (fc >= 0 && w != 0.0) {
        trips.emplace_back(r, fc, w);
        nonzero = true;
      }
    }
    if (!nonzero) {
      const std::string label =
          r < static_cast<int>(cset_.labels.size()) ? cset_.labels[r] : "";
      throw std::runtime_error("constraint row " + std::to_string(r) + " (" +
                               label + ") has no free support");
    }
  }
  C_.resize(m, nf);
  C_.setFromTriplets(trips.begin(), trips.end());
  verify_row_independence();

  method_ = method;
  if (method_ == ConstrainedMethod::kAuto) {
    method_ = (nf + m) <= opts.dense_threshold ? ConstrainedMethod::kDenseKkt
                                               : ConstrainedMethod::kSchur;
  }

  if (method_ == ConstrainedMethod::kSchur) {
    spd_ = std::make_unique<SpdSolver>(A, fixed, opts);
    Eigen::MatrixXd CT = Eigen::MatrixXd(C_.transpose());
    Y_ = spd_->solve_reduced_multi(CT);
    const Eigen::MatrixXd sym =
        0.5 * (C_ * Y_ + Eigen::MatrixXd((C_ * Y_).transpose()));
    S_ = sym;
    S_ldlt_.compute(S_);
    const auto& d = S_ldlt_.vectorD();
    if (S_ldlt_.info() != Eigen::Success ||
        d.minCoeff() <= 1e-13 * d.maxCoeff()) {
      check_rank_and_throw();
    }
  } else {
    // A is SPD on the free dofs and C has full row rank, so the KKT block
    // matrix is invertible.
    kkt_.setZero(nf + m, nf + m);
    kkt_.topLeftCorner(nf, nf) = Eigen::MatrixXd(reduce_sparse(A.mat, map_));
    kkt_.topRightCorner(nf, m) = Eigen::MatrixXd(C_.transpose());
    kkt_.bottomLeftCorner(m, nf) = Eigen::MatrixXd(C_);
    kkt_lu_.compute(kkt_);
  }
}

void ConstrainedSolver::verify_row_independence() const {
  const int m = C_.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd(C_ * C_.transpose());
  const Eigen::VectorXd scale = G.diagonal().cwiseSqrt().cwiseInverse();
  G = scale.asDiagonal() * G * scale.asDiagonal();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success ||
      ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, double(m))) {
    check_rank_and_throw();
  }
}

void ConstrainedSolver::check_rank_and_throw() const {
  // Identify a dependent row through the kernel of C C^T.
  const Eigen::MatrixXd G = Eigen::MatrixXd(C_ * C_.transpose());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
  lu.setThreshold(1e-12);
  int row = -1;
  if (lu.dimensionOfKernel() > 0) {
    const Eigen::VectorXd k = lu.kernel().col(0);
    k.cwiseAbs().maxCoeff(&row);
  }
  std::string label;
  if (row >= 0 && row < static_cast<int>(cset_.labels.size())) {
    label = " (" + cset_.labels[row] + ")";
  }
  throw std::runtime_error(
      "constraint set is rank deficient; dependent row " +
      (row >= 0 ? std::to_string(row) + label : std::string("unidentified")));
}

ConstrainedSolution ConstrainedSolver::solve(
    const Eigen::VectorXd& targets, const Eigen::VectorXd* b_full) const {
  const int m = cset_.size();
  const int nf = map_.free_size();
  if (static_cast<int>(targets.size()) != m) {
    throw std::invalid_argument("target vector size mismatch");
  }
  Eigen::VectorXd b_red = Eigen::VectorXd::Zero(nf);
  if (b_full) b_red = map_.restricted(*b_full);

  ConstrainedSolution sol;
  Eigen::VectorXd u_red(nf), lambda(m);

  if (method_ == ConstrainedMethod::kSchur) {
    Eigen::VectorXd ainv_b = Eigen::VectorXd::Zero(nf);
    if (b_full) ainv_b = spd_->solve_reduced(b_red);
    lambda = S_ldlt_.solve(C_ * ainv_b - targets);
    u_red = ainv_b - Y_ * lambda;
    // One KKT refinement pass tightens both residuals.
    const Eigen::VectorXd ru =
        b_red - spd_->reduced_matrix() * u_red - C_.transpose() * lambda;
    const Eigen::VectorXd rg = targets - C_ * u_red;
    const Eigen::VectorXd ainv_ru = spd_->solve_reduced(ru);
    const Eigen::VectorXd dl = S_ldlt_.solve(C_ * ainv_ru - rg);
    lambda += dl;
    u_red += ainv_ru - Y_ * dl;
    sol.inner = spd_->last_report();
    sol.stationarity_residual =
        (b_red - spd_->reduced_matrix() * u_red - C_.transpose() * lambda)
            .norm();
  } else {
    Eigen::VectorXd rhs(nf + m);
    rhs.head(nf) = b_red;
    rhs.tail(m) = targets;
    Eigen::VectorXd x = kkt_lu_.solve(rhs);
    x += kkt_lu_.solve(rhs - kkt_ * x);
    u_red = x.head(nf);
    lambda = x.tail(m);
    sol.inner = {SpdMethod::kDense, 0, 0.0};
    sol.stationarity_residual = (rhs - kkt_ * x).head(nf).norm();
  }

  sol.constraint_residual = (C_ * u_red - targets).norm();
  sol.u_full = map_.prolonged(u_red);
  sol.multipliers = lambda;

  const double scale = std::max(1.0, targets.norm());
  if (sol.constraint_residual > opts_.tol * scale * 100) {
    throw std::runtime_error(residual_message("constrained solve",
                                              sol.constraint_residual,
                                              opts_.tol * scale, 0));
  }
  return sol;
}

ConstrainedSolution solve_constrained(const SparseOperator& A,
                                      std::span<const std::uint8_t> fixed,
                                      const ConstraintSet& cset,
                                      SolveOptions opts,
                                      ConstrainedMethod method) {
  ConstrainedSolver solver(A, fixed, cset, opts, method);
  return solver.solve();
}

std::vector<std::uint8_t> domain_boundary_mask(const FineGrid& grid) {
  std::vector<std::uint8_t> mask(grid.node_count(), 0);
  for (int i = 0; i < grid.node_count(); ++i) {
    const MultiIndex c = grid.node_coords(i);
    for (int a = 0; a < grid.dim(); ++a) {
      if (c[a] == 0 || c[a] == grid.n()) {
        mask[i] = 1;
        break;
      }
    }
  }
  return mask;
}

FineFunction solve_fine_reference(const CoefficientField& field,
                                  const FineFunction& f_nodal,
                                  SolveOptions opts) {
  const FineGrid& grid = field.grid();
  const SparseOperator A = assemble_stiffness(field);
  const std::vector<std::uint8_t> fixed = domain_boundary_mask(grid);
  const Eigen::VectorXd b = assemble_load(grid, f_nodal);
  return solve_spd(A, fixed, b, opts);
}

}  // namespace mch
