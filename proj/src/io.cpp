#include "mch/io.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mch/util.hpp"

namespace mch {

namespace {

constexpr std::uint32_t kMagic = 0x4d434846;  // "MCHF"

struct Header {
  std::uint32_t magic = kMagic;
  std::uint32_t kind = 0;
  std::uint32_t dim = 0;
  std::uint32_t n = 0;
};

void write_exact(std::ofstream& os, const void* data, std::size_t len) {
  os.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
  if (!os) throw std::runtime_error("write failed");
}

void read_exact(std::ifstream& is, void* data, std::size_t len) {
  is.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
  if (is.gcount() != static_cast<std::streamsize>(len)) {
    throw std::runtime_error("unexpected end of file");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return is;
}

Header read_header(std::ifstream& is, std::uint32_t expect_kind,
                   const std::string& path) {
  Header h;
  read_exact(is, &h, sizeof(h));
  if (h.magic != kMagic) throw std::runtime_error("bad magic in " + path);
  if (h.kind != expect_kind) {
    throw std::runtime_error("unexpected payload kind in " + path);
  }
  return h;
}

}  // namespace

void write_field_binary(const std::string& path, const CoefficientField& f) {
  std::ofstream os = open_out(path);
  Header h;
  h.kind = 0;
  h.dim = static_cast<std::uint32_t>(f.grid().dim());
  h.n = static_cast<std::uint32_t>(f.grid().n());
  write_exact(os, &h, sizeof(h));
  write_exact(os, f.values().data(), f.values().size() * sizeof(double));
}

CoefficientField read_field_binary(const std::string& path) {
  std::ifstream is = open_in(path);
  const Header h = read_header(is, 0, path);
  const FineGrid grid(static_cast<int>(h.n), static_cast<int>(h.dim));
  std::vector<double> values(grid.cell_count());
  read_exact(is, values.data(), values.size() * sizeof(double));
  return CoefficientField(grid, std::move(values));
}

void write_nodal_binary(const std::string& path, const FineGrid& grid,
                        const FineFunction& u) {
  if (!same_box(u.box, grid.full_node_box())) {
    throw std::invalid_argument("nodal export expects a whole-grid function");
  }
  std::ofstream os = open_out(path);
  Header h;
  h.kind = 1;
  h.dim = static_cast<std::uint32_t>(grid.dim());
  h.n = static_cast<std::uint32_t>(grid.n());
  write_exact(os, &h, sizeof(h));
  write_exact(os, u.values.data(), u.values.size() * sizeof(double));
}

FineFunction read_nodal_binary(const std::string& path, FineGrid* grid_out) {
  std::ifstream is = open_in(path);
  const Header h = read_header(is, 1, path);
  const FineGrid grid(static_cast<int>(h.n), static_cast<int>(h.dim));
  FineFunction u = zero_function(grid.full_node_box());
  read_exact(is, u.values.data(), u.values.size() * sizeof(double));
  if (grid_out) *grid_out = grid;
  return u;
}

void write_broken_binary(const std::string& path, const FineGrid& grid,
                         const BrokenFunction& w) {
  std::ofstream os = open_out(path);
  Header h;
  h.kind = 2;
  h.dim = static_cast<std::uint32_t>(grid.dim());
  h.n = static_cast<std::uint32_t>(grid.n());
  write_exact(os, &h, sizeof(h));
  const std::uint32_t count = static_cast<std::uint32_t>(w.pieces.size());
  write_exact(os, &count, sizeof(count));
  nlohmann::json manifest;
  manifest["pieces"] = nlohmann::json::array();
  for (const BrokenPiece& piece : w.pieces) {
    std::int32_t meta[1 + 2 * kMaxDim];
    meta[0] = piece.cell;
    for (int a = 0; a < kMaxDim; ++a) {
      meta[1 + a] = piece.fn.box.lo[a];
      meta[1 + kMaxDim + a] = piece.fn.box.hi[a];
    }
    write_exact(os, meta, sizeof(meta));
    write_exact(os, piece.fn.values.data(),
                piece.fn.values.size() * sizeof(double));
    manifest["pieces"].push_back(
        {{"cell", piece.cell},
         {"nodes", box_node_count(piece.fn.box)},
         {"lo", {piece.fn.box.lo[0], piece.fn.box.lo[1], piece.fn.box.lo[2]}},
         {"hi", {piece.fn.box.hi[0], piece.fn.box.hi[1], piece.fn.box.hi[2]}}});
  }
  write_text_file(path + ".manifest.json", manifest.dump(2));
}

BrokenFunction read_broken_binary(const std::string& path,
                                  FineGrid* grid_out) {
  std::ifstream is = open_in(path);
  const Header h = read_header(is, 2, path);
  const FineGrid grid(static_cast<int>(h.n), static_cast<int>(h.dim));
  if (grid_out) *grid_out = grid;
  std::uint32_t count = 0;
  read_exact(is, &count, sizeof(count));
  BrokenFunction w;
  w.pieces.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::int32_t meta[1 + 2 * kMaxDim];
    read_exact(is, meta, sizeof(meta));
    BrokenPiece& piece = w.pieces[i];
    piece.cell = meta[0];
    piece.fn.box.dim = grid.dim();
    for (int a = 0; a < kMaxDim; ++a) {
      piece.fn.box.lo[a] = meta[1 + a];
      piece.fn.box.hi[a] = meta[1 + kMaxDim + a];
    }
    piece.fn.values.resize(box_node_count(piece.fn.box));
    read_exact(is, piece.fn.values.data(),
               piece.fn.values.size() * sizeof(double));
  }
  return w;
}

void write_field_csv(const std::string& path, const CoefficientField& f,
                     const ContinuumMap& map) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "cell,kappa,label\n";
  for (int c = 0; c < f.grid().cell_count(); ++c) {
    os << c << "," << format_g17(f.value(c)) << ","
       << static_cast<int>(map.label(c)) << "\n";
  }
}

void write_partition_csv(const std::string& path, const ShiftedPartition& p) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "cell,cx,cy,lo_x,lo_y,hi_x,hi_y,fine_cells,continuum0,continuum1\n";
  const double h = p.grid().h();
  for (int id = 0; id < p.cell_count(); ++id) {
    const CoarseCell& c = p.cell(id);
    os << id << "," << format_g17(c.nominal_center[0]) << ","
       << format_g17(c.nominal_center[1]) << "," << format_g17(c.box.lo[0] * h)
       << "," << format_g17(c.box.lo[1] * h) << ","
       << format_g17(c.box.hi[0] * h) << "," << format_g17(c.box.hi[1] * h)
       << "," << c.fine_cells.size() << "," << c.continuum_cells[0].size()
       << "," << c.continuum_cells[1].size() << "\n";
  }
}

void write_tensors_csv(const std::string& alpha_path,
                       const std::string& beta_path,
                       const std::string& gamma_path,
                       const EffectiveTensors& tensors,
                       const ShiftedPartition& p_coarse) {
  const int dim = tensors.dim;
  std::ofstream oa(alpha_path, std::ios::trunc);
  std::ofstream ob(beta_path, std::ios::trunc);
  std::ofstream og(gamma_path, std::ios::trunc);
  if (!oa || !ob || !og) throw std::runtime_error("cannot open tensor csv");
  oa << "cell,cx,cy,i,j,k,l,value\n";
  ob << "cell,cx,cy,i,j,k,value\n";
  og << "cell,cx,cy,i,j,value\n";
  for (int id = 0; id < p_coarse.cell_count(); ++id) {
    const TensorBlock& t = tensors.cells[id];
    const auto& x = p_coarse.cell(id).nominal_center;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        if (!t.present[i] || !t.present[j]) continue;
        og << id << "," << format_g17(x[0]) << "," << format_g17(x[1]) << ","
           << i << "," << j << "," << format_g17(t.gamma[i][j]) << "\n";
        for (int k = 0; k < dim; ++k) {
          ob << id << "," << format_g17(x[0]) << "," << format_g17(x[1]) << ","
             << i << "," << j << "," << k << "," << format_g17(t.beta[i][j][k])
             << "\n";
          for (int l = 0; l < dim; ++l) {
            oa << id << "," << format_g17(x[0]) << "," << format_g17(x[1])
               << "," << i << "," << j << "," << k << "," << l << ","
               << format_g17(t.alpha[i][j][k][l]) << "\n";
          }
        }
      }
    }
  }
}

namespace {

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (first) {  // header
      first = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    rows.push_back(std::move(cols));
  }
  return rows;
}

}  // namespace

EffectiveTensors read_tensors_csv(const std::string& alpha_path,
                                  const std::string& beta_path,
                                  const std::string& gamma_path, int dim,
                                  double h_coarse) {
  EffectiveTensors tensors;
  tensors.dim = dim;
  tensors.h_coarse = h_coarse;
  auto block_of = [&](int cell) -> TensorBlock& {
    if (cell >= static_cast<int>(tensors.cells.size())) {
      tensors.cells.resize(cell + 1);
    }
    return tensors.cells[cell];
  };
  for (const auto& row : read_csv_rows(gamma_path)) {
    TensorBlock& t = block_of(std::stoi(row[0]));
    const int i = std::stoi(row[3]), j = std::stoi(row[4]);
    t.gamma[i][j] = std::stod(row[5]);
    t.present[i] = t.present[j] = true;
  }
  for (const auto& row : read_csv_rows(beta_path)) {
    TensorBlock& t = block_of(std::stoi(row[0]));
    t.beta[std::stoi(row[3])][std::stoi(row[4])][std::stoi(row[5])] =
        std::stod(row[6]);
  }
  for (const auto& row : read_csv_rows(alpha_path)) {
    TensorBlock& t = block_of(std::stoi(row[0]));
    t.alpha[std::stoi(row[3])][std::stoi(row[4])][std::stoi(row[5])]
           [std::stoi(row[6])] = std::stod(row[7]);
  }
  // Rebuild the stacked quadratic form in the assembly field order.
  for (TensorBlock& t : tensors.cells) {
    std::vector<std::pair<int, int>> ids;
    for (int cont = 0; cont < 2; ++cont) {
      if (t.present[cont]) ids.emplace_back(cont, -1);
    }
    for (int cont = 0; cont < 2; ++cont) {
      if (!t.present[cont]) continue;
      for (int a = 0; a < dim; ++a) ids.emplace_back(cont, a);
    }
    const int nf = static_cast<int>(ids.size());
    t.gram.setZero(nf, nf);
    for (int f = 0; f < nf; ++f) {
      for (int g = 0; g < nf; ++g) {
        const auto [ci, ai] = ids[f];
        const auto [cj, aj] = ids[g];
        if (ai < 0 && aj < 0) {
          t.gram(f, g) = t.gamma[ci][cj];
        } else if (ai >= 0 && aj < 0) {
          t.gram(f, g) = t.beta[ci][cj][ai];
        } else if (ai < 0 && aj >= 0) {
          t.gram(f, g) = t.beta[cj][ci][aj];
        } else {
          t.gram(f, g) = t.alpha[ci][cj][ai][aj];
        }
      }
    }
    t.gram_fields = ids;
  }
  return tensors;
}

void write_macro_csv(const std::string& path, const MacroSolution& sol,
                     const CoarseLattice& lattice) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "node,x,y,u0,u1\n";
  for (int n = 0; n < lattice.node_count(); ++n) {
    const auto x = lattice.node_position(lattice.node_coords(n));
    os << n << "," << format_g17(x[0]) << "," << format_g17(x[1]) << ","
       << format_g17(sol.u[2 * n]) << "," << format_g17(sol.u[2 * n + 1])
       << "\n";
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace mch
