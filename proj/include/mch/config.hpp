#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mch/field.hpp"
#include "mch/macro.hpp"

namespace mch {

struct LoadSpec {
  enum class Kind { kConstant, kSineBubble } kind = Kind::kConstant;
  double amplitude = 1.0;
};

// Nodal interpolation of the configured right-hand side.
FineFunction load_function(const LoadSpec& spec, const FineGrid& grid);

struct RveSpec {
  bool enabled = false;
  double window = 0.0;  // side length of the window, one per coarse cell
};

struct StudySpec {
  std::vector<double> h_eps_sweep;
  std::vector<double> contrast_sweep;
  std::vector<std::pair<double, double>> refine_sweep;  // (h, h_eps)
};

struct RunConfig {
  GeometrySpec medium;
  int n_fine = 64;
  double h_eps = 0.125;
  double h_coarse = 0.25;
  int k_layers = -1;  // -1 = default rule
  std::vector<double> shift;
  MacroBc bc = MacroBc::kDirichlet;
  LoadSpec load;
  RveSpec rve;
  StudySpec study;
  double tol = 1e-10;
  int threads = 1;
  std::string out_dir = "out";
  std::string cache_dir;

  int resolved_k(double h_eps_value) const;
  std::string resolved_text() const;
  std::uint64_t config_hash() const;
};

// INI-style sections with key = value lines and '#' comments.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config_file(const std::string& path);
void validate_config(const RunConfig& config);

}  // namespace mch
