#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mch/cells.hpp"
#include "mch/fem.hpp"
#include "mch/field.hpp"
#include "oracles.hpp"

using namespace mch;

namespace {

CoefficientField constant_field(const FineGrid& grid, double kappa = 1.0) {
  return CoefficientField(grid,
                          std::vector<double>(grid.cell_count(), kappa));
}

FineFunction random_function(const NodeBox& box, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  FineFunction f = zero_function(box);
  for (int i = 0; i < f.values.size(); ++i) f.values[i] = dist(rng);
  return f;
}

}  // namespace

TEST_CASE("single element stiffness matches hand integration") {
  const ElementMatrices em = element_matrices(2, 0.37);
  const Eigen::Matrix4d K = oracle::element_stiffness();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(em.stiffness(r, c) == doctest::Approx(K(r, c)).epsilon(1e-14));
    }
  }
  CHECK(em.stiffness(0, 0) == doctest::Approx(2.0 / 3));
  CHECK(em.stiffness(0, 3) == doctest::Approx(-1.0 / 3));
  const Eigen::Matrix4d M = oracle::element_mass(0.37);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(em.mass(r, c) == doctest::Approx(M(r, c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("stiffness scales linearly in kappa") {
  const FineGrid grid(4, 2);
  const double c = 3.75;
  const SparseOperator a1 = assemble_stiffness(constant_field(grid, 1.0));
  const SparseOperator ac = assemble_stiffness(constant_field(grid, c));
  for (int r = 0; r < a1.mat.outerSize(); ++r) {
    Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator i1(a1.mat, r);
    Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator ic(ac.mat, r);
    for (; i1; ++i1, ++ic) {
      CHECK(ic.value() == c * i1.value());
    }
  }
}

TEST_CASE("sparse assembly equals the dense oracle entrywise") {
  const FineGrid grid(4, 2);
  const CoefficientField field = constant_field(grid);
  const SparseOperator A = assemble_stiffness(field);
  const Eigen::MatrixXd dense = oracle::dense_stiffness(
      grid, [&](int c) { return field.value(c); }, grid.full_cell_box());
  const Eigen::MatrixXd diff = Eigen::MatrixXd(A.mat) - dense;
  CHECK(diff.cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("bilinear form") {
  const FineGrid grid(8, 2);
  std::vector<double> kappa(grid.cell_count());
  for (int c = 0; c < grid.cell_count(); ++c) kappa[c] = 1.0 + (c % 5);
  const CoefficientField field(grid, kappa);

  SUBCASE("vanishes on constants") {
    FineFunction u = zero_function(grid.full_node_box());
    u.values.setConstant(3.25);
    CHECK(std::abs(apply_bilinear(field, u, u)) <= 1e-12);
  }

  SUBCASE("is symmetric and matches the dense matrix oracle") {
    const FineFunction u = random_function(grid.full_node_box(), 1);
    const FineFunction v = random_function(grid.full_node_box(), 2);
    const double auv = apply_bilinear(field, u, v);
    const double avu = apply_bilinear(field, v, u);
    CHECK(auv == doctest::Approx(avu).epsilon(1e-14));
    const Eigen::MatrixXd dense = oracle::dense_stiffness(
        grid, [&](int c) { return field.value(c); }, grid.full_cell_box());
    CHECK(auv ==
          doctest::Approx(u.values.dot(dense * v.values)).epsilon(1e-13));
  }
}

TEST_CASE("norms") {
  const FineGrid grid(8, 2);
  std::vector<double> kappa(grid.cell_count());
  for (int c = 0; c < grid.cell_count(); ++c) kappa[c] = 0.5 + (c % 3);
  const CoefficientField field(grid, kappa);
  const FineFunction u = random_function(grid.full_node_box(), 3);

  SUBCASE("constant has zero energy") {
    FineFunction c = zero_function(grid.full_node_box());
    c.values.setConstant(-2.0);
    // The energy is a square root, so roundoff enters at sqrt(eps) scale.
    CHECK(norms(c, field).energy <= 1e-6);
  }

  SUBCASE("energy is additive over any partition") {
    const double z[2] = {1.0 / 8, 0.0};
    const ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
    double sum = 0;
    for (int id = 0; id < p.cell_count(); ++id) {
      sum += energy_product(field, u, u, p.cell(id).box);
    }
    const double total = energy_product(field, u, u, grid.full_cell_box());
    CHECK(sum == doctest::Approx(total).epsilon(1e-13));
  }

  SUBCASE("energy matches the dense quadratic form") {
    const Eigen::MatrixXd dense = oracle::dense_stiffness(
        grid, [&](int c) { return field.value(c); }, grid.full_cell_box());
    const double quad = u.values.dot(dense * u.values);
    CHECK(norms(u, field).energy ==
          doctest::Approx(std::sqrt(quad)).epsilon(1e-13));
  }
}

TEST_CASE("spd solves") {
  const FineGrid grid(8, 2);
  const CoefficientField field = constant_field(grid);
  const SparseOperator A = assemble_stiffness(field);
  const std::vector<std::uint8_t> fixed = domain_boundary_mask(grid);

  SUBCASE("zero rhs gives zero") {
    const Eigen::VectorXd b = Eigen::VectorXd::Zero(grid.node_count());
    for (SpdMethod m :
         {SpdMethod::kCholesky, SpdMethod::kPcg, SpdMethod::kDense}) {
      const FineFunction x = solve_spd(A, fixed, b, SolveOptions{m});
      CHECK(x.values.norm() == 0.0);
    }
  }

  SUBCASE("diagonal system inverts the diagonal") {
    SparseOperator D;
    D.box = grid.full_node_box();
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < grid.node_count(); ++i) {
      trips.emplace_back(i, i, 2.0 + (i % 7));
    }
    D.mat.resize(grid.node_count(), grid.node_count());
    D.mat.setFromTriplets(trips.begin(), trips.end());
    const std::vector<std::uint8_t> none(grid.node_count(), 0);
    const FineFunction b = random_function(grid.full_node_box(), 4);
    const FineFunction x = solve_spd(D, none, b.values,
                                     SolveOptions{SpdMethod::kPcg});
    for (int i = 0; i < grid.node_count(); ++i) {
      CHECK(x.values[i] ==
            doctest::Approx(b.values[i] / (2.0 + (i % 7))).epsilon(1e-10));
    }
  }

  SUBCASE("random rhs matches the dense factorization oracle") {
    const FineFunction b = random_function(grid.full_node_box(), 5);
    const Eigen::MatrixXd dense = oracle::dense_stiffness(
        grid, [&](int c) { return field.value(c); }, grid.full_cell_box());
    std::vector<std::uint8_t> fixed_vec(fixed.begin(), fixed.end());
    const Eigen::VectorXd want =
        oracle::dense_spd_solve(dense, fixed_vec, b.values);
    const double scale = want.norm();
    for (SpdMethod m :
         {SpdMethod::kCholesky, SpdMethod::kPcg, SpdMethod::kDense}) {
      const FineFunction x = solve_spd(A, fixed, b.values, SolveOptions{m});
      CHECK((x.values - want).norm() / scale <= 1e-8);
    }
  }

  SUBCASE("iteration cap reports the residual") {
    const FineFunction b = random_function(grid.full_node_box(), 6);
    SolveOptions opts;
    opts.method = SpdMethod::kPcg;
    opts.max_iterations = 1;
    CHECK_THROWS_WITH_AS(solve_spd(A, fixed, b.values, opts),
                         doctest::Contains("residual"), std::runtime_error);
  }
}

TEST_CASE("constrained solves") {
  const FineGrid grid(6, 2);
  const int nn = grid.node_count();
  SparseOperator I;
  I.box = grid.full_node_box();
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < nn; ++i) trips.emplace_back(i, i, 1.0);
  I.mat.resize(nn, nn);
  I.mat.setFromTriplets(trips.begin(), trips.end());
  const std::vector<std::uint8_t> none(nn, 0);

  SUBCASE("identity energy with a mean constraint gives a constant") {
    ConstraintSet cset;
    cset.rows.push_back({});
    for (int i = 0; i < nn; ++i) cset.rows[0].emplace_back(i, 1.0);
    cset.targets = Eigen::VectorXd::Constant(1, 7.2);
    const ConstrainedSolution sol = solve_constrained(I, none, cset);
    for (int i = 0; i < nn; ++i) {
      CHECK(sol.u_full[i] == doctest::Approx(7.2 / nn).epsilon(1e-12));
    }
  }

  SUBCASE("a feasible unconstrained optimum is reproduced exactly") {
    const FineFunction w = random_function(grid.full_node_box(), 7);
    ConstraintSet cset;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dist(0.1, 1.0);
    cset.targets.resize(3);
    for (int r = 0; r < 3; ++r) {
      std::vector<std::pair<int, double>> row;
      for (int i = r; i < nn; i += 3) row.emplace_back(i, dist(rng));
      cset.rows.push_back(row);
      double g = 0;
      for (const auto& [i, wgt] : row) g += wgt * w.values[i];
      cset.targets[r] = g;
    }
    const Eigen::VectorXd b = w.values;  // A = I, so b = A w
    ConstrainedSolver solver(I, none, cset, SolveOptions{});
    const ConstrainedSolution sol = solver.solve(cset.targets, &b);
    CHECK((sol.u_full - w.values).norm() <= 1e-10 * w.values.norm());
  }
}

TEST_CASE("patch constrained solve matches the dense KKT oracle") {
  const FineGrid grid(12, 2);
  GeometrySpec spec;
  spec.kind = MediumKind::kChannels;
  spec.kappa_high = 1e4;
  spec.channel_count = 1;
  spec.channel_width = 1.0 / 6;
  const Medium medium = generate_medium(spec, grid);
  const double z[2] = {0.0, 0.0};
  ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  p.attach_continua(medium.continua.labels());
  const AuxiliaryBasis aux = AuxiliaryBasis::build(p, medium.continua);
  const OversampledPatch patch = oversample(p, p.cell_id({1, 1, 0}), 1);
  REQUIRE(patch.subcells.size() == 9);

  const SparseOperator A = assemble_stiffness(medium.kappa, patch.cell_box);
  PatchConstraints pc = patch_constraints(aux, patch);
  for (int r = 0; r < pc.cset.size(); ++r) {
    pc.cset.targets[r] =
        aux.entry(pc.entry_ids[r]).continuum == 0
            ? aux.entry(pc.entry_ids[r]).measure
            : 0.0;
  }

  const Eigen::MatrixXd dense = oracle::dense_stiffness(
      grid, [&](int c) { return medium.kappa.value(c); }, patch.cell_box);
  std::vector<std::uint8_t> fixed(patch.boundary.begin(),
                                  patch.boundary.end());
  const Eigen::VectorXd b = Eigen::VectorXd::Zero(dense.rows());
  const oracle::KktSolution want =
      oracle::dense_kkt_solve(dense, fixed, pc.cset.rows, pc.cset.targets, b);

  const double scale =
      std::sqrt(want.u.dot(dense * want.u)) + 1e-300;
  for (auto method : {ConstrainedMethod::kSchur, ConstrainedMethod::kDenseKkt}) {
    for (auto inner : {SpdMethod::kCholesky, SpdMethod::kPcg}) {
      const ConstrainedSolution sol = solve_constrained(
          A, patch.boundary, pc.cset, SolveOptions{inner}, method);
      const Eigen::VectorXd d = sol.u_full - want.u;
      CHECK(std::sqrt(d.dot(dense * d)) / scale <= 1e-8);
      CHECK(sol.constraint_residual <= 1e-9);
      CHECK(sol.stationarity_residual <= 1e-7 * scale + 1e-9);
    }
  }
}

TEST_CASE("constrained minimality against feasible perturbations") {
  const FineGrid grid(8, 2);
  const CoefficientField field = constant_field(grid, 2.0);
  const double z[2] = {0.0, 0.0};
  ShiftedPartition p = ShiftedPartition::build(grid, 0.25, z);
  const Medium medium = generate_medium(GeometrySpec{}, grid);
  p.attach_continua(medium.continua.labels());
  const AuxiliaryBasis aux = AuxiliaryBasis::build(p, medium.continua);
  const OversampledPatch patch = oversample(p, p.cell_id({1, 1, 0}), 1);
  const SparseOperator A = assemble_stiffness(field, patch.cell_box);
  PatchConstraints pc = patch_constraints(aux, patch);
  for (int r = 0; r < pc.cset.size(); ++r) {
    pc.cset.targets[r] = aux.entry(pc.entry_ids[r]).measure;
  }
  const ConstrainedSolution sol =
      solve_constrained(A, patch.boundary, pc.cset);
  const double e0 = sol.u_full.dot(A.mat * sol.u_full);

  // Perturb inside the constraint kernel: rows annihilate the perturbation.
  const Eigen::MatrixXd dense = oracle::dense_stiffness(
      grid, [&](int c) { return field.value(c); }, patch.cell_box);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(pc.cset.size(), dense.rows());
  for (int r = 0; r < pc.cset.size(); ++r) {
    for (const auto& [i, w] : pc.cset.rows[r]) C(r, i) = w;
  }
  for (int i = 0; i < patch.node_count(); ++i) {
    if (patch.boundary[i]) C.conservativeResize(C.rows() + 1, Eigen::NoChange);
    if (patch.boundary[i]) {
      C.row(C.rows() - 1).setZero();
      C(C.rows() - 1, i) = 1.0;
    }
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(C);
  const Eigen::MatrixXd kernel = lu.kernel();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd t(kernel.cols());
    for (int i = 0; i < t.size(); ++i) t[i] = dist(rng);
    const Eigen::VectorXd v = sol.u_full + kernel * t;
    const double ev = v.dot(A.mat * v);
    CHECK(ev >= e0 - 1e-10 * std::max(1.0, e0));
  }
}

TEST_CASE("duplicate constraint rows are reported by index") {
  const FineGrid grid(4, 2);
  const CoefficientField field = constant_field(grid);
  const SparseOperator A = assemble_stiffness(field);
  const std::vector<std::uint8_t> fixed = domain_boundary_mask(grid);
  ConstraintSet cset;
  std::vector<std::pair<int, double>> row;
  for (int i = 0; i < grid.node_count(); ++i) {
    if (!fixed[i]) row.emplace_back(i, 1.0);
  }
  cset.rows.push_back(row);
  cset.rows.push_back(row);
  cset.targets = Eigen::VectorXd::Ones(2);
  cset.labels = {"first", "second"};
  CHECK_THROWS_WITH_AS(solve_constrained(A, fixed, cset),
                       doctest::Contains("rank deficient"),
                       std::runtime_error);
}

TEST_CASE("fine reference solve") {
  SUBCASE("zero load gives the zero solution") {
    const FineGrid grid(16, 2);
    const CoefficientField field = constant_field(grid);
    FineFunction f = zero_function(grid.full_node_box());
    const FineFunction u = solve_fine_reference(field, f);
    CHECK(u.values.norm() == 0.0);
  }

  SUBCASE("manufactured solution converges at second order") {
    const double pi = 3.14159265358979323846;
    double errors[2];
    int idx = 0;
    for (int n : {32, 64}) {
      const FineGrid grid(n, 2);
      const CoefficientField field = constant_field(grid);
      const FineFunction f = interpolate_nodal(
          grid, [&](const std::array<double, kMaxDim>& x) {
            return 2 * pi * pi * std::sin(pi * x[0]) * std::sin(pi * x[1]);
          });
      const FineFunction u = solve_fine_reference(field, f);
      double err = 0;
      for (int i = 0; i < grid.node_count(); ++i) {
        const auto x = grid.node_position(i);
        err = std::max(err, std::abs(u.values[i] - std::sin(pi * x[0]) *
                                                       std::sin(pi * x[1])));
      }
      errors[idx++] = err;
    }
    const double slope = std::log2(errors[0] / errors[1]);
    CHECK(slope > 1.8);
    CHECK(slope < 2.2);
  }

  SUBCASE("flux continuity across a layer interface") {
    // kappa = 1 below y = 1/2 and 10 above; the one-sided discrete fluxes at
    // the interface must agree to discretization order, so the gradient-jump
    // ratio approaches kappa_low / kappa_high.
    double deviation[2];
    int idx = 0;
    for (int n : {32, 64}) {
      const FineGrid grid(n, 2);
      std::vector<double> kappa(grid.cell_count(), 1.0);
      for (int c = 0; c < grid.cell_count(); ++c) {
        if (grid.cell_coords(c)[1] >= n / 2) kappa[c] = 10.0;
      }
      const CoefficientField field(grid, kappa);
      const FineFunction f = interpolate_nodal(
          grid, [](const std::array<double, kMaxDim>&) { return 1.0; });
      const FineFunction u = solve_fine_reference(field, f);
      const int i = n / 2;  // center column
      const int j = n / 2;  // interface row
      auto value = [&](int xi, int yi) {
        return u.values[grid.node_index({xi, yi, 0})];
      };
      const double below = value(i, j) - value(i, j - 1);
      const double above = value(i, j + 1) - value(i, j);
      const double ratio = above / below;  // want kappa- / kappa+ = 0.1
      deviation[idx++] = std::abs(ratio - 0.1);
    }
    CHECK(deviation[1] < deviation[0]);
    CHECK(deviation[1] < 0.03);
  }
}
