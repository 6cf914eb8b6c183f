#include "mch/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "mch/io.hpp"
#include "mch/util.hpp"

namespace mch {

namespace {

double seconds_since(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

ShiftedPartition build_partition(const Medium& medium, double scale,
                                 std::span<const double> shift) {
  ShiftedPartition p =
      ShiftedPartition::build(medium.kappa.grid(), scale, shift);
  p.attach_continua(medium.continua.labels());
  return p;
}

}  // namespace

FineProblem solve_fine_problem(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  FineProblem out;
  out.grid = FineGrid(cfg.n_fine, 2);
  out.medium = generate_medium(cfg.medium, out.grid);
  out.f = load_function(cfg.load, out.grid);
  out.u = solve_fine_reference(out.medium.kappa, out.f,
                               SolveOptions{SpdMethod::kAuto, cfg.tol});
  out.u_norms = norms(out.u, out.medium.kappa);
  out.seconds = seconds_since(start);
  return out;
}

std::map<int, CellSolutionSet> solve_all_cell_problems(
    const CoefficientField& field, const AuxiliaryBasis& aux,
    const ShiftedPartition& p_coarse, const ShiftedPartition& p_sub, int k,
    double tol, int threads, CellCache* cache, CellSolveStats* stats) {
  std::vector<CellSolutionSet> slots(p_coarse.cell_count());
  std::vector<std::uint8_t> from_cache(p_coarse.cell_count(), 0);
  parallel_for(p_coarse.cell_count(), threads, [&](int cell) {
    if (cache) {
      auto hit = cache->load_cell_set(p_coarse, p_sub, cell, k);
      if (hit) {
        slots[cell] = std::move(*hit);
        from_cache[cell] = 1;
        return;
      }
    }
    slots[cell] = solve_cell_problems(field, aux, p_coarse, cell, p_sub, k,
                                      SolveOptions{SpdMethod::kAuto, tol});
    if (cache) cache->store_cell_set(p_coarse, slots[cell], k);
  });
  std::map<int, CellSolutionSet> out;
  for (int cell = 0; cell < p_coarse.cell_count(); ++cell) {
    if (stats) {
      ++(from_cache[cell] ? stats->cache_hits : stats->solved);
    }
    out.emplace(cell, std::move(slots[cell]));
  }
  return out;
}

NlmcOutputs run_nlmc(const Medium& medium, const FineFunction& f,
                     const FineFunction& u_fine, double h_eps, int k,
                     std::span<const double> shift, double tol, int threads,
                     CellCache* cache) {
  const auto start = std::chrono::steady_clock::now();
  NlmcOutputs out;
  out.h_eps = h_eps;
  out.k = k;

  const ShiftedPartition p = build_partition(medium, h_eps, shift);
  const AuxiliaryBasis aux = AuxiliaryBasis::build(p, medium.continua);
  const LocalizedBasisSet basis = solve_localized_basis(
      medium.kappa, aux, k, SolveOptions{SpdMethod::kAuto, tol}, threads,
      cache);
  out.basis_count = aux.entry_count();
  out.max_constraint_residual = basis.max_constraint_residual;

  const MacroAverages avgs = project_continuum_averages(u_fine, p);
  out.u_glo = downscale_nlmc(avgs, basis, aux);

  FineFunction diff = out.u_glo;
  diff.values -= u_fine.values;
  const Norms dn = norms(diff, medium.kappa);
  const Norms un = norms(u_fine, medium.kappa);
  out.energy_error = dn.energy;
  out.rel_energy_error = un.energy > 0 ? dn.energy / un.energy : dn.energy;
  out.l2_error = dn.l2;

  double worst = 0.0;
  for (int e = 0; e < aux.entry_count(); ++e) {
    const AuxEntry& entry = aux.entry(e);
    double pairing = 0.0;
    for (std::size_t i = 0; i < entry.nodes.size(); ++i) {
      pairing += entry.weights[i] * diff.values[entry.nodes[i]];
    }
    worst = std::max(worst, std::abs(pairing));
  }
  out.mean_preservation_rel = un.l2 > 0 ? worst / un.l2 : worst;
  out.seconds = seconds_since(start);
  return out;
}

HomogOutputs run_homog(const Medium& medium, const FineFunction& f,
                       const FineFunction& u_fine, double h, double h_eps,
                       int k, std::span<const double> shift, MacroBc bc,
                       double tol, int threads, CellCache* cache) {
  const auto start = std::chrono::steady_clock::now();
  const FineGrid& grid = medium.kappa.grid();
  HomogOutputs out;
  out.h = h;
  out.h_eps = h_eps;
  out.k = k;

  const ShiftedPartition p_coarse = build_partition(medium, h, shift);
  const ShiftedPartition p_sub = build_partition(medium, h_eps, shift);
  const AuxiliaryBasis aux = AuxiliaryBasis::build(p_sub, medium.continua);
  out.cells = solve_all_cell_problems(medium.kappa, aux, p_coarse, p_sub, k,
                                      tol, threads, cache, &out.stats);

  out.tensors = assemble_effective_tensors(medium.kappa, p_coarse, out.cells);
  out.moments = compute_load_moments(f, p_coarse, out.cells);
  const MacroSystem system =
      assemble_macro_system(out.tensors, out.moments, p_coarse, bc);
  out.sol = solve_macro(system);

  const MacroField mf = macro_field(out.sol, p_coarse);
  const std::vector<CellMacroData> data = mf.sample();
  out.reconstruction = downscale_linear(data, out.cells, p_coarse);
  out.l2_error = broken_l2_error(out.reconstruction, u_fine, grid);
  const Norms un = norms(u_fine, medium.kappa);
  out.rel_l2_error = un.l2 > 0 ? out.l2_error / un.l2 : out.l2_error;
  out.identity_discrepancy = identity_discrepancy_random(
      medium.kappa, p_coarse, out.cells, out.tensors, 0x5eed);
  out.seconds = seconds_since(start);
  return out;
}

double identity_discrepancy_random(const CoefficientField& field,
                                   const ShiftedPartition& p_coarse,
                                   const std::map<int, CellSolutionSet>& cells,
                                   const EffectiveTensors& tensors,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const int dim = p_coarse.grid().dim();
  std::vector<CellMacroData> u(p_coarse.cell_count());
  std::vector<CellMacroData> v(p_coarse.cell_count());
  for (int c = 0; c < p_coarse.cell_count(); ++c) {
    for (int cont = 0; cont < 2; ++cont) {
      u[c].value[cont] = dist(rng);
      v[c].value[cont] = dist(rng);
      for (int a = 0; a < dim; ++a) {
        u[c].grad[cont][a] = dist(rng);
        v[c].grad[cont][a] = dist(rng);
      }
    }
  }
  return verify_averaging_identity(field, p_coarse, cells, tensors, u, v);
}

std::map<int, CellBox> rve_windows(const ShiftedPartition& p_coarse,
                                   const ShiftedPartition& p_sub,
                                   double window) {
  const FineGrid& grid = p_coarse.grid();
  const double ratio = window / p_sub.scale();
  const int w_cells = static_cast<int>(std::round(ratio));
  if (std::abs(ratio - w_cells) > 1e-9 || w_cells < 1) {
    throw std::invalid_argument(
        "RVE window must be a multiple of the sub-partition scale");
  }
  std::map<int, CellBox> windows;
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    const CoarseCell& cc = p_coarse.cell(id);
    MultiIndex seg_lo{}, seg_hi{};
    nested_seg_range(p_coarse, id, p_sub, seg_lo, seg_hi);
    // Sub-cells nearest the nominal center, clipped to the cell.
    MultiIndex lo{}, hi{};
    for (int a = 0; a < grid.dim(); ++a) {
      MultiIndex fine{};
      int c = static_cast<int>(cc.nominal_center[a] / grid.h());
      c = std::min(std::max(c, cc.box.lo[a]), cc.box.hi[a] - 1);
      const int center_seg = p_sub.segment_of_fine(a, c);
      int s = center_seg - (w_cells - 1) / 2;
      s = std::min(std::max(s, seg_lo[a]), seg_hi[a] - w_cells + 1);
      if (s < seg_lo[a]) {
        throw std::invalid_argument("RVE window does not fit in the cell");
      }
      lo[a] = s;
      hi[a] = s + w_cells - 1;
    }
    CellBox box;
    box.dim = grid.dim();
    for (int a = 0; a < kMaxDim; ++a) {
      if (a < grid.dim()) {
        box.lo[a] = p_sub.segment(a, lo[a]).begin;
        box.hi[a] = p_sub.segment(a, hi[a]).end;
      } else {
        box.lo[a] = 0;
        box.hi[a] = 1;
      }
    }
    windows.emplace(id, box);
  }
  return windows;
}

std::string report_csv(std::span<const ReportRow> rows,
                       const std::vector<std::pair<std::string, double>>&
                           summaries) {
  std::ostringstream os;
  os << "study,config,h_eps,h,k,contrast,energy_error,rel_energy_error,"
        "l2_error,rel_l2_error,identity_discrepancy,mean_preservation,"
        "seconds\n";
  for (const ReportRow& r : rows) {
    os << r.study << "," << r.config_hash << "," << format_g17(r.h_eps) << ","
       << format_g17(r.h) << "," << r.k << "," << format_g17(r.contrast) << ","
       << format_g17(r.energy_error) << "," << format_g17(r.rel_energy_error)
       << "," << format_g17(r.l2_error) << "," << format_g17(r.rel_l2_error)
       << "," << format_g17(r.identity_discrepancy) << ","
       << format_g17(r.mean_preservation) << "," << format_g17(r.seconds)
       << "\n";
  }
  for (const auto& [name, value] : summaries) {
    os << "# " << name << " = " << format_g17(value) << "\n";
  }
  return os.str();
}

std::optional<double> loglog_slope(std::span<const double> x,
                                   std::span<const double> y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  }
  const std::size_t n = lx.size();
  if (n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx == 0) return std::nullopt;
  return sxy / sxx;
}

StudyOutputs run_study(const RunConfig& cfg) {
  StudyOutputs out;
  const std::string hash = hex64(cfg.config_hash());

  if (!cfg.study.h_eps_sweep.empty()) {
    const FineProblem fine = solve_fine_problem(cfg);
    std::vector<double> xs, ys;
    for (double h_eps : cfg.study.h_eps_sweep) {
      ReportRow row;
      row.study = "nlmc_h_eps";
      row.config_hash = hash;
      row.contrast = contrast(fine.medium.kappa);
      row.h = cfg.h_coarse;
      row.h_eps = h_eps;
      row.k = cfg.resolved_k(h_eps);
      try {
        const NlmcOutputs nlmc =
            run_nlmc(fine.medium, fine.f, fine.u, h_eps, row.k, cfg.shift,
                     cfg.tol, cfg.threads, nullptr);
        row.energy_error = nlmc.energy_error;
        row.rel_energy_error = nlmc.rel_energy_error;
        row.l2_error = nlmc.l2_error;
        row.mean_preservation = nlmc.mean_preservation_rel;
        row.seconds = nlmc.seconds;
        xs.push_back(h_eps);
        ys.push_back(nlmc.energy_error);
      } catch (const std::exception& e) {
        row.study = "nlmc_h_eps_failed:" + std::string(e.what()).substr(0, 40);
      }
      out.rows.push_back(row);
    }
    const auto slope = loglog_slope(xs, ys);
    out.summaries.emplace_back("slope_energy_vs_h_eps",
                               slope ? *slope : std::nan(""));
  }

  if (!cfg.study.contrast_sweep.empty()) {
    std::vector<double> errors;
    for (double zeta : cfg.study.contrast_sweep) {
      RunConfig point = cfg;
      point.medium.kappa_high = point.medium.kappa_low * zeta;
      ReportRow row;
      row.study = "contrast";
      row.config_hash = hash;
      row.contrast = zeta;
      row.h = cfg.h_coarse;
      row.h_eps = cfg.h_eps;
      row.k = cfg.resolved_k(cfg.h_eps);
      try {
        const FineProblem fine = solve_fine_problem(point);
        const NlmcOutputs nlmc =
            run_nlmc(fine.medium, fine.f, fine.u, cfg.h_eps, row.k, cfg.shift,
                     cfg.tol, cfg.threads, nullptr);
        row.energy_error = nlmc.energy_error;
        row.rel_energy_error = nlmc.rel_energy_error;
        row.l2_error = nlmc.l2_error;
        row.mean_preservation = nlmc.mean_preservation_rel;
        row.seconds = nlmc.seconds + fine.seconds;
        errors.push_back(nlmc.rel_energy_error);
      } catch (const std::exception& e) {
        row.study = "contrast_failed:" + std::string(e.what()).substr(0, 40);
      }
      out.rows.push_back(row);
    }
    if (!errors.empty()) {
      const double lo = *std::min_element(errors.begin(), errors.end());
      const double hi = *std::max_element(errors.begin(), errors.end());
      out.summaries.emplace_back("contrast_error_ratio",
                                 lo > 0 ? hi / lo : std::nan(""));
    }
  }

  if (!cfg.study.refine_sweep.empty()) {
    const FineProblem fine = solve_fine_problem(cfg);
    for (const auto& [h, h_eps] : cfg.study.refine_sweep) {
      ReportRow row;
      row.study = "homog_refine";
      row.config_hash = hash;
      row.contrast = contrast(fine.medium.kappa);
      row.h = h;
      row.h_eps = h_eps;
      row.k = cfg.resolved_k(h_eps);
      try {
        const HomogOutputs homog =
            run_homog(fine.medium, fine.f, fine.u, h, h_eps, row.k, cfg.shift,
                      cfg.bc, cfg.tol, cfg.threads, nullptr);
        row.l2_error = homog.l2_error;
        row.rel_l2_error = homog.rel_l2_error;
        row.identity_discrepancy = homog.identity_discrepancy;
        row.seconds = homog.seconds;
      } catch (const std::exception& e) {
        row.study = "homog_refine_failed:" + std::string(e.what()).substr(0, 40);
      }
      out.rows.push_back(row);
    }
  }

  out.csv = report_csv(out.rows, out.summaries);
  return out;
}

namespace {

VerifyCheck make_check(const std::string& name, double value, double tol,
                       bool larger_is_better = false) {
  VerifyCheck c;
  c.name = name;
  c.value = value;
  c.tolerance = tol;
  c.larger_is_better = larger_is_better;
  c.pass = larger_is_better ? value >= tol : value <= tol;
  return c;
}

}  // namespace

VerifyOutputs run_verify(const RunConfig& cfg) {
  VerifyOutputs out;
  const FineProblem fine = solve_fine_problem(cfg);
  const int k = cfg.resolved_k(cfg.h_eps);

  // Homogenization pipeline identities.
  const HomogOutputs homog =
      run_homog(fine.medium, fine.f, fine.u, cfg.h_coarse, cfg.h_eps, k,
                cfg.shift, cfg.bc, cfg.tol, cfg.threads, nullptr);
  const TensorStructureReport structure = check_tensor_structure(homog.tensors);
  out.checks.push_back(make_check("tensor_symmetry",
                                  structure.max_symmetry_violation, 1e-12));
  out.checks.push_back(make_check("tensor_psd_min_eigenvalue",
                                  structure.min_gram_eigenvalue, -1e-10,
                                  /*larger_is_better=*/true));
  out.checks.push_back(
      make_check("averaging_identity", homog.identity_discrepancy, 1e-11));
  out.checks.push_back(
      make_check("macro_residual", homog.sol.residual, 1e-10));

  // Mean preservation of the localized-basis reconstruction.
  const NlmcOutputs nlmc = run_nlmc(fine.medium, fine.f, fine.u, cfg.h_eps, k,
                                    cfg.shift, cfg.tol, cfg.threads, nullptr);
  out.checks.push_back(
      make_check("mean_preservation", nlmc.mean_preservation_rel, 1e-7));

  // Solver oracles on a small patch: Schur against dense KKT, and the SPD
  // paths against each other.
  const ShiftedPartition p_sub =
      build_partition(fine.medium, cfg.h_eps, cfg.shift);
  const AuxiliaryBasis aux = AuxiliaryBasis::build(p_sub, fine.medium.continua);
  int oracle_k = 0;
  const int m_sub = p_sub.scale_cells();
  while (oracle_k < 2 &&
         std::pow((2 * (oracle_k + 1) + 1) * m_sub + 1, 2) <= 600) {
    ++oracle_k;
  }
  const int target = p_sub.cell_id(
      {p_sub.segment_count(0) / 2, p_sub.segment_count(1) / 2, 0});
  OversampledPatch patch = oversample(p_sub, target, oracle_k);
  const SparseOperator A = assemble_stiffness(fine.medium.kappa,
                                              patch.cell_box);
  PatchConstraints pc = patch_constraints(aux, patch);
  for (int r = 0; r < pc.cset.size(); ++r) {
    pc.cset.targets[r] = aux.entry(pc.entry_ids[r]).measure;
  }
  const ConstrainedSolution schur =
      solve_constrained(A, patch.boundary, pc.cset,
                        SolveOptions{SpdMethod::kPcg, cfg.tol},
                        ConstrainedMethod::kSchur);
  const ConstrainedSolution dense =
      solve_constrained(A, patch.boundary, pc.cset,
                        SolveOptions{SpdMethod::kDense, cfg.tol},
                        ConstrainedMethod::kDenseKkt);
  const Eigen::VectorXd du = schur.u_full - dense.u_full;
  const double denom = std::sqrt(
      std::max(dense.u_full.dot(Eigen::VectorXd(A.mat * dense.u_full)),
               1e-300));
  const double ediff =
      std::sqrt(std::max(0.0, du.dot(Eigen::VectorXd(A.mat * du))));
  out.checks.push_back(
      make_check("constrained_solver_oracle", ediff / denom, 1e-8));

  std::mt19937_64 rng(7);
  Eigen::VectorXd b(A.mat.rows());
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int i = 0; i < b.size(); ++i) b[i] = dist(rng);
  const FineFunction x_iter = solve_spd(
      A, patch.boundary, b, SolveOptions{SpdMethod::kPcg, cfg.tol});
  const FineFunction x_dense = solve_spd(
      A, patch.boundary, b, SolveOptions{SpdMethod::kDense, cfg.tol});
  const double xscale = std::max(x_dense.values.norm(), 1e-300);
  out.checks.push_back(make_check(
      "spd_solver_oracle", (x_iter.values - x_dense.values).norm() / xscale,
      1e-8));

  return out;
}

VerifyOutputs verify_tensor_files(const std::string& alpha_path,
                                  const std::string& beta_path,
                                  const std::string& gamma_path, int dim,
                                  double h_coarse) {
  VerifyOutputs out;
  const EffectiveTensors tensors =
      read_tensors_csv(alpha_path, beta_path, gamma_path, dim, h_coarse);
  const TensorStructureReport structure = check_tensor_structure(tensors);
  out.checks.push_back(make_check("tensor_symmetry",
                                  structure.max_symmetry_violation, 1e-12));
  out.checks.push_back(make_check("tensor_psd_min_eigenvalue",
                                  structure.min_gram_eigenvalue, -1e-10,
                                  /*larger_is_better=*/true));
  return out;
}

PipelineOutputs run_pipeline(const RunConfig& cfg, bool write_outputs) {
  PipelineOutputs out;
  const std::string hash = hex64(cfg.config_hash());
  namespace fs = std::filesystem;
  if (write_outputs) {
    fs::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir + "/config.resolved.ini", cfg.resolved_text());
  }

  out.fine = solve_fine_problem(cfg);
  std::optional<CellCache> cache;
  if (!cfg.cache_dir.empty()) {
    const ShiftedPartition p_sub =
        build_partition(out.fine.medium, cfg.h_eps, cfg.shift);
    cache.emplace(cfg.cache_dir, out.fine.medium.kappa, p_sub);
  }
  CellCache* cache_ptr = cache ? &*cache : nullptr;

  const int k = cfg.resolved_k(cfg.h_eps);
  out.nlmc = run_nlmc(out.fine.medium, out.fine.f, out.fine.u, cfg.h_eps, k,
                      cfg.shift, cfg.tol, cfg.threads, cache_ptr);
  out.homog = run_homog(out.fine.medium, out.fine.f, out.fine.u, cfg.h_coarse,
                        cfg.h_eps, k, cfg.shift, cfg.bc, cfg.tol, cfg.threads,
                        cache_ptr);
  out.stats = out.homog.stats;

  out.row.study = "pipeline";
  out.row.config_hash = hash;
  out.row.h_eps = cfg.h_eps;
  out.row.h = cfg.h_coarse;
  out.row.k = k;
  out.row.contrast = contrast(out.fine.medium.kappa);
  out.row.energy_error = out.nlmc.energy_error;
  out.row.rel_energy_error = out.nlmc.rel_energy_error;
  out.row.l2_error = out.homog.l2_error;
  out.row.rel_l2_error = out.homog.rel_l2_error;
  out.row.identity_discrepancy = out.homog.identity_discrepancy;
  out.row.mean_preservation = out.nlmc.mean_preservation_rel;
  out.row.seconds = out.fine.seconds + out.nlmc.seconds + out.homog.seconds;

  if (write_outputs) {
    const std::string dir = cfg.out_dir;
    write_field_binary(dir + "/kappa.bin", out.fine.medium.kappa);
    if (cfg.n_fine <= 128) {
      write_field_csv(dir + "/kappa.csv", out.fine.medium.kappa,
                      out.fine.medium.continua);
    }
    write_nodal_binary(dir + "/u_fine.bin", out.fine.grid, out.fine.u);
    write_nodal_binary(dir + "/u_nlmc.bin", out.fine.grid, out.nlmc.u_glo);
    const ShiftedPartition p_coarse =
        build_partition(out.fine.medium, cfg.h_coarse, cfg.shift);
    write_partition_csv(dir + "/partition.csv", p_coarse);
    write_tensors_csv(dir + "/alpha.csv", dir + "/beta.csv", dir + "/gamma.csv",
                      out.homog.tensors, p_coarse);
    write_macro_csv(dir + "/macro.csv", out.homog.sol,
                    coarse_lattice(p_coarse));
    write_broken_binary(dir + "/reconstruction.bin", out.fine.grid,
                        out.homog.reconstruction);
    write_text_file(dir + "/report.csv", report_csv({&out.row, 1}, {}));
  }
  return out;
}

}  // namespace mch
