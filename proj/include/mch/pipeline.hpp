#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mch/cache.hpp"
#include "mch/cells.hpp"
#include "mch/config.hpp"
#include "mch/downscale.hpp"
#include "mch/fem.hpp"
#include "mch/field.hpp"
#include "mch/macro.hpp"
#include "mch/mesh.hpp"

namespace mch {

struct FineProblem {
  FineGrid grid;
  Medium medium;
  FineFunction f;
  FineFunction u;
  Norms u_norms;
  double seconds = 0.0;
};

FineProblem solve_fine_problem(const RunConfig& cfg);

struct CellSolveStats {
  int cache_hits = 0;
  int solved = 0;
};

std::map<int, CellSolutionSet> solve_all_cell_problems(
    const CoefficientField& field, const AuxiliaryBasis& aux,
    const ShiftedPartition& p_coarse, const ShiftedPartition& p_sub, int k,
    double tol, int threads, CellCache* cache, CellSolveStats* stats);

struct NlmcOutputs {
  double h_eps = 0.0;
  int k = 0;
  int basis_count = 0;
  double energy_error = 0.0;
  double rel_energy_error = 0.0;
  double l2_error = 0.0;
  double mean_preservation_rel = 0.0;
  double max_constraint_residual = 0.0;
  double seconds = 0.0;
  FineFunction u_glo;
};

NlmcOutputs run_nlmc(const Medium& medium, const FineFunction& f,
                     const FineFunction& u_fine, double h_eps, int k,
                     std::span<const double> shift, double tol, int threads,
                     CellCache* cache);

struct HomogOutputs {
  double h = 0.0;
  double h_eps = 0.0;
  int k = 0;
  EffectiveTensors tensors;
  LoadMoments moments;
  MacroSolution sol;
  BrokenFunction reconstruction;
  double l2_error = 0.0;
  double rel_l2_error = 0.0;
  double identity_discrepancy = 0.0;
  double seconds = 0.0;
  CellSolveStats stats;
  std::map<int, CellSolutionSet> cells;
};

HomogOutputs run_homog(const Medium& medium, const FineFunction& f,
                       const FineFunction& u_fine, double h, double h_eps,
                       int k, std::span<const double> shift, MacroBc bc,
                       double tol, int threads, CellCache* cache);

double identity_discrepancy_random(const CoefficientField& field,
                                   const ShiftedPartition& p_coarse,
                                   const std::map<int, CellSolutionSet>& cells,
                                   const EffectiveTensors& tensors,
                                   std::uint64_t seed);

// RVE windows: a block of about window/h_eps sub-partition cells nearest each
// coarse-cell center, clipped to the cell.
std::map<int, CellBox> rve_windows(const ShiftedPartition& p_coarse,
                                   const ShiftedPartition& p_sub,
                                   double window);

struct ReportRow {
  std::string study;
  std::string config_hash;
  double h_eps = 0.0;
  double h = 0.0;
  int k = 0;
  double contrast = 1.0;
  double energy_error = -1.0;
  double rel_energy_error = -1.0;
  double l2_error = -1.0;
  double rel_l2_error = -1.0;
  double identity_discrepancy = -1.0;
  double mean_preservation = -1.0;
  double seconds = 0.0;
};

std::string report_csv(std::span<const ReportRow> rows,
                       const std::vector<std::pair<std::string, double>>&
                           summaries);

// Least-squares slope of log(y) against log(x); nullopt for fewer than two
// usable points.
std::optional<double> loglog_slope(std::span<const double> x,
                                   std::span<const double> y);

struct StudyOutputs {
  std::vector<ReportRow> rows;
  std::vector<std::pair<std::string, double>> summaries;
  std::string csv;
};

StudyOutputs run_study(const RunConfig& cfg);

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool larger_is_better = false;
  bool pass = false;
};

struct VerifyOutputs {
  std::vector<VerifyCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
};

VerifyOutputs run_verify(const RunConfig& cfg);

// Symmetry/PSD checks of a tensor file triple.
VerifyOutputs verify_tensor_files(const std::string& alpha_path,
                                  const std::string& beta_path,
                                  const std::string& gamma_path, int dim,
                                  double h_coarse);

struct PipelineOutputs {
  FineProblem fine;
  NlmcOutputs nlmc;
  HomogOutputs homog;
  ReportRow row;
  CellSolveStats stats;
};

PipelineOutputs run_pipeline(const RunConfig& cfg, bool write_outputs = true);

}  // namespace mch
