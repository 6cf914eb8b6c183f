#include "mch/cache.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "mch/util.hpp"

namespace mch {

namespace {

constexpr std::uint32_t kCacheMagic = 0x4d434843;  // "MCHC"

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  }
  return s;
}

}  // namespace

CellCache::CellCache(std::string dir, const CoefficientField& field,
                     const ShiftedPartition& p_sub)
    : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
  key_prefix_ =
      hex64(field.content_hash()) + "_" + sanitize(p_sub.signature()) + "_";
}

std::optional<FineFunction> CellCache::load_payload(
    const std::string& key, const NodeBox& expected_box) {
  const std::string path = dir_ + "/" + key + ".bin";
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    ++misses_;
    return std::nullopt;
  }
  std::uint32_t magic = 0;
  std::int32_t meta[1 + 2 * kMaxDim];
  is.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  is.read(reinterpret_cast<char*>(meta), sizeof(meta));
  if (!is || magic != kCacheMagic) {
    ++misses_;
    return std::nullopt;
  }
  NodeBox box;
  box.dim = meta[0];
  for (int a = 0; a < kMaxDim; ++a) {
    box.lo[a] = meta[1 + a];
    box.hi[a] = meta[1 + kMaxDim + a];
  }
  if (!same_box(box, expected_box)) {
    ++misses_;
    return std::nullopt;
  }
  FineFunction fn;
  fn.box = box;
  fn.values.resize(box_node_count(box));
  is.read(reinterpret_cast<char*>(fn.values.data()),
          static_cast<std::streamsize>(fn.values.size() * sizeof(double)));
  if (!is) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return fn;
}

void CellCache::store_payload(const std::string& key, const FineFunction& fn) {
  std::lock_guard<std::mutex> lock(mutex_);
  const std::string path = dir_ + "/" + key + ".bin";
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) return;  // cache is best-effort
  os.write(reinterpret_cast<const char*>(&kCacheMagic), sizeof(kCacheMagic));
  std::int32_t meta[1 + 2 * kMaxDim];
  meta[0] = fn.box.dim;
  for (int a = 0; a < kMaxDim; ++a) {
    meta[1 + a] = fn.box.lo[a];
    meta[1 + kMaxDim + a] = fn.box.hi[a];
  }
  os.write(reinterpret_cast<const char*>(meta), sizeof(meta));
  os.write(reinterpret_cast<const char*>(fn.values.data()),
           static_cast<std::streamsize>(fn.values.size() * sizeof(double)));
}

std::optional<FineFunction> CellCache::load_basis(int entry_id, int k,
                                                  const NodeBox& expected_box) {
  return load_payload(
      key_prefix_ + "phi_" + std::to_string(entry_id) + "_k" +
          std::to_string(k),
      expected_box);
}

void CellCache::store_basis(int entry_id, int k, const FineFunction& fn) {
  store_payload(
      key_prefix_ + "phi_" + std::to_string(entry_id) + "_k" +
          std::to_string(k),
      fn);
}

std::optional<CellSolutionSet> CellCache::load_cell_set(
    const ShiftedPartition& p_coarse, const ShiftedPartition& p_sub, int cell,
    int k) {
  const std::string base = key_prefix_ + sanitize(p_coarse.signature()) +
                           "_cell" + std::to_string(cell) + "_k" +
                           std::to_string(k) + "_";
  std::ifstream marker(dir_ + "/" + base + "done.txt");
  int p0 = 0, p1 = 0;
  if (!(marker >> p0 >> p1)) {
    ++misses_;
    return std::nullopt;
  }
  CellSolutionSet set;
  set.cell_id = cell;
  set.patch = oversample_nested(p_coarse, cell, p_sub, k);
  set.present = {p0 != 0, p1 != 0};
  for (int cont = 0; cont < 2; ++cont) {
    if (!set.present[cont]) continue;
    auto eta = load_payload(base + "eta" + std::to_string(cont),
                            set.patch.node_box);
    if (!eta) return std::nullopt;
    set.eta[cont] = std::move(*eta);
    for (int a = 0; a < set.patch.dim; ++a) {
      auto lin = load_payload(
          base + "eta" + std::to_string(cont) + "d" + std::to_string(a),
          set.patch.node_box);
      if (!lin) return std::nullopt;
      set.eta_lin[cont][a] = std::move(*lin);
    }
  }
  return set;
}

void CellCache::store_cell_set(const ShiftedPartition& p_coarse,
                               const CellSolutionSet& set, int k) {
  const std::string base = key_prefix_ + sanitize(p_coarse.signature()) +
                           "_cell" + std::to_string(set.cell_id) + "_k" +
                           std::to_string(k) + "_";
  for (int cont = 0; cont < 2; ++cont) {
    if (!set.present[cont]) continue;
    store_payload(base + "eta" + std::to_string(cont), set.eta[cont]);
    for (int a = 0; a < set.patch.dim; ++a) {
      store_payload(base + "eta" + std::to_string(cont) + "d" +
                        std::to_string(a),
                    set.eta_lin[cont][a]);
    }
  }
  // The marker goes last so partial writes read as misses.
  std::lock_guard<std::mutex> lock(mutex_);
  std::ofstream marker(dir_ + "/" + base + "done.txt", std::ios::trunc);
  marker << (set.present[0] ? 1 : 0) << " " << (set.present[1] ? 1 : 0)
         << "\n";
}

void CellCache::flush() {}

}  // namespace mch
