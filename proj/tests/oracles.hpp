// Test-only dense oracles, written independently of the library assembly and
// solver paths: direct dense assembly from hand-integrated Q1 element
// matrices, and KKT systems factored with full-pivot LU.
#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <vector>

#include "mch/fem.hpp"
#include "mch/mesh.hpp"

namespace oracle {

// Hand-integrated Q1 element matrices on a square of side h, corner order
// (0,0), (1,0), (0,1), (1,1).
inline Eigen::Matrix4d element_stiffness() {
  Eigen::Matrix4d K;
  K << 4, -1, -1, -2,  //
      -1, 4, -2, -1,   //
      -1, -2, 4, -1,   //
      -2, -1, -1, 4;
  return K / 6.0;
}

inline Eigen::Matrix4d element_mass(double h) {
  Eigen::Matrix4d M;
  M << 4, 2, 2, 1,  //
      2, 4, 1, 2,   //
      2, 1, 4, 2,   //
      1, 2, 2, 4;
  return M * (h * h / 36.0);
}

// Dense stiffness over the nodes of a cell box, kappa given per fine cell.
inline Eigen::MatrixXd dense_stiffness(const mch::FineGrid& grid,
                                       const std::function<double(int)>& kappa,
                                       const mch::CellBox& box) {
  const mch::NodeBox nodes = mch::nodes_of(box);
  const int nn = mch::box_node_count(nodes);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nn, nn);
  const Eigen::Matrix4d Ke = element_stiffness();
  const int ncell = mch::box_cell_count(box);
  for (int l = 0; l < ncell; ++l) {
    const mch::MultiIndex cell = mch::local_cell_coords(box, l);
    const double k = kappa(grid.cell_index(cell));
    int ids[4];
    for (int c = 0; c < 4; ++c) {
      mch::MultiIndex node = cell;
      node[0] += c & 1;
      node[1] += (c >> 1) & 1;
      ids[c] = mch::local_node_index(nodes, node);
    }
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) A(ids[r], ids[c]) += k * Ke(r, c);
    }
  }
  return A;
}

inline Eigen::MatrixXd dense_mass(const mch::FineGrid& grid,
                                  const mch::CellBox& box) {
  const mch::NodeBox nodes = mch::nodes_of(box);
  const int nn = mch::box_node_count(nodes);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nn, nn);
  const Eigen::Matrix4d Me = element_mass(grid.h());
  const int ncell = mch::box_cell_count(box);
  for (int l = 0; l < ncell; ++l) {
    const mch::MultiIndex cell = mch::local_cell_coords(box, l);
    int ids[4];
    for (int c = 0; c < 4; ++c) {
      mch::MultiIndex node = cell;
      node[0] += c & 1;
      node[1] += (c >> 1) & 1;
      ids[c] = mch::local_node_index(nodes, node);
    }
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) M(ids[r], ids[c]) += Me(r, c);
    }
  }
  return M;
}

// Eliminates fixed dofs, solves the dense system by full-pivot LU.
inline Eigen::VectorXd dense_spd_solve(const Eigen::MatrixXd& A,
                                       const std::vector<std::uint8_t>& fixed,
                                       const Eigen::VectorXd& b) {
  std::vector<int> free;
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!fixed[i]) free.push_back(static_cast<int>(i));
  }
  const int nf = static_cast<int>(free.size());
  Eigen::MatrixXd Af(nf, nf);
  Eigen::VectorXd bf(nf);
  for (int r = 0; r < nf; ++r) {
    bf[r] = b[free[r]];
    for (int c = 0; c < nf; ++c) Af(r, c) = A(free[r], free[c]);
  }
  const Eigen::VectorXd xf = Eigen::FullPivLU<Eigen::MatrixXd>(Af).solve(bf);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(A.rows());
  for (int r = 0; r < nf; ++r) x[free[r]] = xf[r];
  return x;
}

struct KktSolution {
  Eigen::VectorXd u;
  Eigen::VectorXd lambda;
};

// Dense KKT factorization oracle for min 1/2 u^T A u - b^T u, C u = g.
inline KktSolution dense_kkt_solve(
    const Eigen::MatrixXd& A, const std::vector<std::uint8_t>& fixed,
    const std::vector<std::vector<std::pair<int, double>>>& rows,
    const Eigen::VectorXd& g, const Eigen::VectorXd& b) {
  std::vector<int> free;
  std::vector<int> free_of_full(fixed.size(), -1);
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (!fixed[i]) {
      free_of_full[i] = static_cast<int>(free.size());
      free.push_back(static_cast<int>(i));
    }
  }
  const int nf = static_cast<int>(free.size());
  const int m = static_cast<int>(rows.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + m, nf + m);
  Eigen::VectorXd rhs(nf + m);
  for (int r = 0; r < nf; ++r) {
    rhs[r] = b[free[r]];
    for (int c = 0; c < nf; ++c) kkt(r, c) = A(free[r], free[c]);
  }
  for (int r = 0; r < m; ++r) {
    rhs[nf + r] = g[r];
    for (const auto& [local, w] : rows[r]) {
      const int fc = free_of_full[local];
      if (fc < 0) continue;
      kkt(nf + r, fc) += w;
      kkt(fc, nf + r) += w;
    }
  }
  const Eigen::VectorXd x = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
  KktSolution sol;
  sol.u = Eigen::VectorXd::Zero(A.rows());
  for (int r = 0; r < nf; ++r) sol.u[free[r]] = x[r];
  sol.lambda = x.tail(m);
  return sol;
}

}  // namespace oracle
