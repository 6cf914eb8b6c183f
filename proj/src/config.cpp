#include "mch/config.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mch/cells.hpp"
#include "mch/io.hpp"
#include "mch/util.hpp"

namespace mch {

FineFunction load_function(const LoadSpec& spec, const FineGrid& grid) {
  switch (spec.kind) {
    case LoadSpec::Kind::kConstant:
      return interpolate_nodal(grid, [&](const std::array<double, kMaxDim>&) {
        return spec.amplitude;
      });
    case LoadSpec::Kind::kSineBubble:
      return interpolate_nodal(grid, [&](const std::array<double, kMaxDim>& x) {
        const double pi = 3.14159265358979323846;
        return spec.amplitude * 2.0 * pi * pi * std::sin(pi * x[0]) *
               std::sin(pi * x[1]);
      });
  }
  throw std::logic_error("unreachable");
}

int RunConfig::resolved_k(double h_eps_value) const {
  if (k_layers >= 0) return k_layers;
  return default_k_layers(h_eps_value);
}

namespace {

using Sections = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Sections parse_sections(const std::string& text) {
  Sections sections;
  std::string current = "";
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      }
      current = trim(line.substr(1, line.size() - 2));
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    }
    sections[current][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return sections;
}

class SectionReader {
 public:
  SectionReader(const Sections& s, std::string name)
      : sections_(s), name_(std::move(name)) {}

  bool has(const std::string& key) const {
    const auto it = sections_.find(name_);
    return it != sections_.end() && it->second.count(key) > 0;
  }
  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = sections_.find(name_);
    if (it == sections_.end()) return fallback;
    const auto kit = it->second.find(key);
    return kit == it->second.end() ? fallback : kit->second;
  }
  double num(const std::string& key, double fallback) const {
    return has(key) ? parse_number(str(key, "")) : fallback;
  }
  int integer(const std::string& key, int fallback) const {
    return has(key) ? static_cast<int>(std::llround(parse_number(str(key, ""))))
                    : fallback;
  }
  std::vector<double> num_list(const std::string& key) const {
    std::vector<double> out;
    std::istringstream ss(str(key, ""));
    std::string tok;
    while (ss >> tok) out.push_back(parse_number(tok));
    return out;
  }

 private:
  const Sections& sections_;
  std::string name_;
};

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  const Sections sections = parse_sections(text);
  RunConfig cfg;

  const SectionReader medium(sections, "medium");
  cfg.medium.kind = medium_kind_from_string(medium.str("kind", "constant"));
  cfg.medium.kappa_low = medium.num("kappa_low", 1.0);
  cfg.medium.kappa_high = medium.num("kappa_high", cfg.medium.kappa_low);
  cfg.medium.period = medium.num("period", 0.0);
  cfg.medium.inclusion_size = medium.num("inclusion_size", 0.0);
  cfg.medium.channel_count = medium.integer("channel_count", 0);
  cfg.medium.channel_width = medium.num("channel_width", 0.0);
  cfg.medium.seed =
      static_cast<std::uint64_t>(medium.integer("seed", 0));
  cfg.medium.jitter_cells = medium.integer("jitter", 0);

  const SectionReader scales(sections, "scales");
  cfg.n_fine = scales.integer("n_fine", 64);
  cfg.h_eps = scales.num("h_eps", 0.125);
  cfg.h_coarse = scales.num("h_coarse", 0.25);
  cfg.k_layers = scales.integer("k_layers", -1);

  const SectionReader shifts(sections, "shifts");
  cfg.shift = shifts.num_list("z");

  const SectionReader macro(sections, "macro");
  const std::string bc = macro.str("bc", "dirichlet");
  if (bc == "dirichlet") {
    cfg.bc = MacroBc::kDirichlet;
  } else if (bc == "natural") {
    cfg.bc = MacroBc::kNatural;
  } else {
    throw std::invalid_argument("unknown macro bc: " + bc);
  }
  const std::string load = macro.str("load", "constant");
  if (load == "constant") {
    cfg.load.kind = LoadSpec::Kind::kConstant;
  } else if (load == "sine-bubble") {
    cfg.load.kind = LoadSpec::Kind::kSineBubble;
  } else {
    throw std::invalid_argument("unknown load kind: " + load);
  }
  cfg.load.amplitude = macro.num("amplitude", 1.0);

  const SectionReader rve(sections, "rve");
  cfg.rve.window = rve.num("window", 0.0);
  cfg.rve.enabled = cfg.rve.window > 0.0;

  const SectionReader study(sections, "study");
  cfg.study.h_eps_sweep = study.num_list("h_eps");
  cfg.study.contrast_sweep = study.num_list("contrast");
  const std::vector<double> refine = study.num_list("refine");
  if (refine.size() % 2 != 0) {
    throw std::invalid_argument("study refine list must hold (h, h_eps) pairs");
  }
  for (std::size_t i = 0; i + 1 < refine.size(); i += 2) {
    cfg.study.refine_sweep.emplace_back(refine[i], refine[i + 1]);
  }

  const SectionReader tolerances(sections, "tolerances");
  cfg.tol = tolerances.num("solver", 1e-10);

  const SectionReader output(sections, "output");
  cfg.out_dir = output.str("dir", "out");
  cfg.cache_dir = output.str("cache", "");
  cfg.threads = output.integer("threads", 1);

  validate_config(cfg);
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

void validate_config(const RunConfig& cfg) {
  if (cfg.n_fine < 2) throw std::invalid_argument("n_fine must be >= 2");
  if (!(cfg.tol > 0)) throw std::invalid_argument("tolerance must be positive");
  const double h = 1.0 / cfg.n_fine;
  auto commensurate = [&](double v, const char* what) {
    const double m = v / h;
    if (std::abs(m - std::round(m)) > 1e-9 || m < 1) {
      throw std::invalid_argument(std::string(what) +
                                  " must be a multiple of 1/n_fine");
    }
  };
  commensurate(cfg.h_eps, "h_eps");
  commensurate(cfg.h_coarse, "h_coarse");
  const double ratio = cfg.h_coarse / cfg.h_eps;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1 - 1e-12) {
    throw std::invalid_argument("h_eps must divide h_coarse");
  }
  const double inv = 1.0 / cfg.h_coarse;
  if (std::abs(inv - std::round(inv)) > 1e-9) {
    throw std::invalid_argument("h_coarse must divide 1");
  }
  for (double z : cfg.shift) {
    if (z < 0 || z >= cfg.h_eps + 1e-15) {
      throw std::invalid_argument("shift must lie in [0, h_eps)");
    }
  }
  if (cfg.rve.enabled) commensurate(cfg.rve.window, "rve window");
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  os << "[medium]\n";
  os << "kind = " << to_string(medium.kind) << "\n";
  os << "kappa_low = " << format_g17(medium.kappa_low) << "\n";
  os << "kappa_high = " << format_g17(medium.kappa_high) << "\n";
  if (medium.period > 0) os << "period = " << format_g17(medium.period) << "\n";
  if (medium.inclusion_size > 0) {
    os << "inclusion_size = " << format_g17(medium.inclusion_size) << "\n";
  }
  if (medium.channel_count > 0) {
    os << "channel_count = " << medium.channel_count << "\n";
    os << "channel_width = " << format_g17(medium.channel_width) << "\n";
  }
  os << "seed = " << medium.seed << "\n";
  if (medium.jitter_cells > 0) os << "jitter = " << medium.jitter_cells << "\n";
  os << "\n[scales]\n";
  os << "n_fine = " << n_fine << "\n";
  os << "h_eps = " << format_g17(h_eps) << "\n";
  os << "h_coarse = " << format_g17(h_coarse) << "\n";
  os << "k_layers = " << k_layers << "\n";
  os << "\n[shifts]\nz =";
  for (double z : shift) os << " " << format_g17(z);
  if (shift.empty()) os << " 0";
  os << "\n";
  os << "\n[macro]\n";
  os << "bc = " << (bc == MacroBc::kDirichlet ? "dirichlet" : "natural")
     << "\n";
  os << "load = "
     << (load.kind == LoadSpec::Kind::kConstant ? "constant" : "sine-bubble")
     << "\n";
  os << "amplitude = " << format_g17(load.amplitude) << "\n";
  if (rve.enabled) {
    os << "\n[rve]\nwindow = " << format_g17(rve.window) << "\n";
  }
  if (!study.h_eps_sweep.empty() || !study.contrast_sweep.empty() ||
      !study.refine_sweep.empty()) {
    os << "\n[study]\n";
    if (!study.h_eps_sweep.empty()) {
      os << "h_eps =";
      for (double v : study.h_eps_sweep) os << " " << format_g17(v);
      os << "\n";
    }
    if (!study.contrast_sweep.empty()) {
      os << "contrast =";
      for (double v : study.contrast_sweep) os << " " << format_g17(v);
      os << "\n";
    }
    if (!study.refine_sweep.empty()) {
      os << "refine =";
      for (const auto& [a, b] : study.refine_sweep) {
        os << " " << format_g17(a) << " " << format_g17(b);
      }
      os << "\n";
    }
  }
  os << "\n[tolerances]\nsolver = " << format_g17(tol) << "\n";
  os << "\n[output]\n";
  os << "dir = " << out_dir << "\n";
  if (!cache_dir.empty()) os << "cache = " << cache_dir << "\n";
  os << "threads = " << threads << "\n";
  return os.str();
}

std::uint64_t RunConfig::config_hash() const { return fnv1a(resolved_text()); }

}  // namespace mch
