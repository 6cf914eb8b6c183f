#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mch/io.hpp"
#include "mch/pipeline.hpp"
#include "mch/util.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string cache_dir;
  int threads = 0;
  double tol = 0.0;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "run configuration file")
      ->required();
  cmd->add_option("--out", args->out_dir, "output directory");
  cmd->add_option("--cache", args->cache_dir, "cell-solution cache directory");
  cmd->add_option("--threads", args->threads, "worker threads");
  cmd->add_option("--tol", args->tol, "solver tolerance override");
}

mch::RunConfig resolve(const CommonArgs& args) {
  mch::RunConfig cfg = mch::load_config_file(args.config_path);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.cache_dir.empty()) cfg.cache_dir = args.cache_dir;
  if (const char* env = std::getenv("MCH_CACHE_DIR"); env && *env) {
    cfg.cache_dir = env;
  }
  if (args.threads > 0) cfg.threads = args.threads;
  if (args.tol > 0) cfg.tol = args.tol;
  mch::validate_config(cfg);
  return cfg;
}

void write_resolved(const mch::RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  mch::write_text_file(cfg.out_dir + "/config.resolved.ini",
                       cfg.resolved_text());
}

int cmd_generate(const mch::RunConfig& cfg) {
  const mch::FineGrid grid(cfg.n_fine, 2);
  const mch::Medium medium = mch::generate_medium(cfg.medium, grid);
  write_resolved(cfg);
  mch::write_field_binary(cfg.out_dir + "/kappa.bin", medium.kappa);
  if (cfg.n_fine <= 128) {
    mch::write_field_csv(cfg.out_dir + "/kappa.csv", medium.kappa,
                         medium.continua);
  }
  const std::uint64_t hash = medium.kappa.content_hash();
  mch::write_text_file(cfg.out_dir + "/kappa.manifest.txt",
                       "hash " + mch::hex64(hash) + "\n");
  std::cout << "medium written to " << cfg.out_dir << " (hash "
            << mch::hex64(hash) << ", contrast "
            << mch::contrast(medium.kappa) << ")\n";
  return 0;
}

int cmd_fine_solve(const mch::RunConfig& cfg) {
  const mch::FineProblem fine = mch::solve_fine_problem(cfg);
  write_resolved(cfg);
  mch::write_nodal_binary(cfg.out_dir + "/u_fine.bin", fine.grid, fine.u);
  std::cout << "fine solve done: energy " << fine.u_norms.energy << ", l2 "
            << fine.u_norms.l2 << ", " << fine.seconds << " s\n";
  return 0;
}

int cmd_basis(const mch::RunConfig& cfg) {
  const mch::FineGrid grid(cfg.n_fine, 2);
  const mch::Medium medium = mch::generate_medium(cfg.medium, grid);
  mch::ShiftedPartition p =
      mch::ShiftedPartition::build(grid, cfg.h_eps, cfg.shift);
  p.attach_continua(medium.continua.labels());
  const mch::AuxiliaryBasis aux = mch::AuxiliaryBasis::build(p, medium.continua);
  const int k = cfg.resolved_k(cfg.h_eps);
  std::optional<mch::CellCache> cache;
  if (!cfg.cache_dir.empty()) cache.emplace(cfg.cache_dir, medium.kappa, p);
  const mch::LocalizedBasisSet basis = mch::solve_localized_basis(
      medium.kappa, aux, k, mch::SolveOptions{mch::SpdMethod::kAuto, cfg.tol},
      cfg.threads, cache ? &*cache : nullptr);
  write_resolved(cfg);
  std::cout << "localized basis: " << aux.entry_count() << " functions, k="
            << k << ", max constraint residual "
            << basis.max_constraint_residual;
  if (cache) {
    std::cout << ", cache hits " << cache->hits() << ", misses "
              << cache->misses();
  }
  std::cout << "\n";
  return 0;
}

int cmd_tensors(const mch::RunConfig& cfg) {
  const mch::FineProblem fine = mch::solve_fine_problem(cfg);
  const int k = cfg.resolved_k(cfg.h_eps);
  const mch::HomogOutputs homog = mch::run_homog(
      fine.medium, fine.f, fine.u, cfg.h_coarse, cfg.h_eps, k, cfg.shift,
      cfg.bc, cfg.tol, cfg.threads, nullptr);
  write_resolved(cfg);
  mch::ShiftedPartition p_coarse =
      mch::ShiftedPartition::build(fine.grid, cfg.h_coarse, cfg.shift);
  p_coarse.attach_continua(fine.medium.continua.labels());
  mch::write_tensors_csv(cfg.out_dir + "/alpha.csv", cfg.out_dir + "/beta.csv",
                         cfg.out_dir + "/gamma.csv", homog.tensors, p_coarse);
  const mch::TensorStructureReport report =
      mch::check_tensor_structure(homog.tensors);
  std::cout << "tensors written: symmetry violation "
            << report.max_symmetry_violation << ", min eigenvalue ratio "
            << report.min_gram_eigenvalue << "\n";
  return 0;
}

int cmd_macro(const mch::RunConfig& cfg) {
  const mch::FineProblem fine = mch::solve_fine_problem(cfg);
  const int k = cfg.resolved_k(cfg.h_eps);
  const mch::HomogOutputs homog = mch::run_homog(
      fine.medium, fine.f, fine.u, cfg.h_coarse, cfg.h_eps, k, cfg.shift,
      cfg.bc, cfg.tol, cfg.threads, nullptr);
  write_resolved(cfg);
  mch::ShiftedPartition p_coarse =
      mch::ShiftedPartition::build(fine.grid, cfg.h_coarse, cfg.shift);
  p_coarse.attach_continua(fine.medium.continua.labels());
  mch::write_macro_csv(cfg.out_dir + "/macro.csv", homog.sol,
                       mch::coarse_lattice(p_coarse));
  mch::write_broken_binary(cfg.out_dir + "/reconstruction.bin", fine.grid,
                           homog.reconstruction);
  std::cout << "macro solve: residual " << homog.sol.residual
            << ", reconstruction l2 error " << homog.l2_error << " (rel "
            << homog.rel_l2_error << ")";
  if (homog.sol.maybe_singular) {
    std::cout << " [system rank " << homog.sol.rank << ", sigma_min est "
              << homog.sol.sigma_min_estimate << "]";
  }
  std::cout << "\n";
  return 0;
}

int cmd_pipeline(const mch::RunConfig& cfg) {
  const mch::PipelineOutputs out = mch::run_pipeline(cfg, true);
  std::cout << "pipeline done: nlmc rel energy error "
            << out.nlmc.rel_energy_error << ", macro rel l2 error "
            << out.homog.rel_l2_error << ", identity "
            << out.homog.identity_discrepancy << ", cache hits "
            << out.stats.cache_hits << "/"
            << (out.stats.cache_hits + out.stats.solved) << "\n";
  std::cout << "report: " << cfg.out_dir << "/report.csv\n";
  return 0;
}

int cmd_study(const mch::RunConfig& cfg) {
  const mch::StudyOutputs out = mch::run_study(cfg);
  write_resolved(cfg);
  mch::write_text_file(cfg.out_dir + "/study.csv", out.csv);
  std::cout << out.csv;
  std::cout << "study report: " << cfg.out_dir << "/study.csv\n";
  return 0;
}

int cmd_verify(const mch::RunConfig& cfg, const std::string& tensors_prefix) {
  mch::VerifyOutputs out;
  if (!tensors_prefix.empty()) {
    out = mch::verify_tensor_files(tensors_prefix + "/alpha.csv",
                                   tensors_prefix + "/beta.csv",
                                   tensors_prefix + "/gamma.csv", 2,
                                   cfg.h_coarse);
  } else {
    out = mch::run_verify(cfg);
  }
  for (const auto& check : out.checks) {
    std::cout << (check.pass ? "[PASS] " : "[FAIL] ") << check.name << " = "
              << check.value << " (" << (check.larger_is_better ? ">=" : "<=")
              << " " << check.tolerance << ")\n";
  }
  return out.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "multicontinuum homogenization toolkit: cell problems, effective "
      "tensors, coupled macro solves and verification"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string tensors_prefix;

  CLI::App* generate = app.add_subcommand("generate", "write medium files");
  CLI::App* fine = app.add_subcommand("fine-solve", "fine reference solve");
  CLI::App* basis = app.add_subcommand("basis", "localized basis functions");
  CLI::App* tensors = app.add_subcommand("tensors", "effective tensors");
  CLI::App* macro = app.add_subcommand("macro", "coupled macro solve");
  CLI::App* pipeline = app.add_subcommand("pipeline", "full run with reports");
  CLI::App* study = app.add_subcommand("study", "parameter sweeps");
  CLI::App* verify = app.add_subcommand("verify", "identity and oracle checks");
  for (CLI::App* cmd :
       {generate, fine, basis, tensors, macro, pipeline, study, verify}) {
    add_common(cmd, &args);
  }
  verify->add_option("--tensors", tensors_prefix,
                     "check an existing tensor CSV directory instead");

  CLI11_PARSE(app, argc, argv);

  try {
    const mch::RunConfig cfg = resolve(args);
    if (generate->parsed()) return cmd_generate(cfg);
    if (fine->parsed()) return cmd_fine_solve(cfg);
    if (basis->parsed()) return cmd_basis(cfg);
    if (tensors->parsed()) return cmd_tensors(cfg);
    if (macro->parsed()) return cmd_macro(cfg);
    if (pipeline->parsed()) return cmd_pipeline(cfg);
    if (study->parsed()) return cmd_study(cfg);
    if (verify->parsed()) return cmd_verify(cfg, tensors_prefix);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
