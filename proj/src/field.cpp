#include "mch/field.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "mch/util.hpp"

namespace mch {

std::string to_string(MediumKind k) {
  switch (k) {
    case MediumKind::kConstant:
      return "constant";
    case MediumKind::kPeriodicInclusions:
      return "periodic-inclusions";
    case MediumKind::kChannels:
      return "channels";
    case MediumKind::kChannelsWithInclusions:
      return "channels-with-inclusions";
  }
  return "constant";
}

MediumKind medium_kind_from_string(const std::string& s) {
  if (s == "constant") return MediumKind::kConstant;
  if (s == "periodic-inclusions") return MediumKind::kPeriodicInclusions;
  if (s == "channels") return MediumKind::kChannels;
  if (s == "channels-with-inclusions")
    return MediumKind::kChannelsWithInclusions;
  throw std::invalid_argument("unknown medium kind: " + s);
}

CoefficientField::CoefficientField(const FineGrid& grid,
                                   std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != grid.cell_count()) {
    throw std::invalid_argument("coefficient field size mismatch");
  }
  kmin_ = kmax_ = values_.front();
  for (double v : values_) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("coefficient values must be positive");
    }
    kmin_ = std::min(kmin_, v);
    kmax_ = std::max(kmax_, v);
  }
}

std::uint64_t CoefficientField::content_hash() const {
  std::uint64_t h = fnv1a(values_.data(), values_.size() * sizeof(double));
  const int meta[2] = {grid_.dim(), grid_.n()};
  return fnv1a(meta, sizeof(meta), h);
}

ContinuumMap::ContinuumMap(const FineGrid& grid,
                           std::vector<std::uint8_t> labels)
    : grid_(grid), labels_(std::move(labels)) {
  if (static_cast<int>(labels_.size()) != grid.cell_count()) {
    throw std::invalid_argument("continuum map size mismatch");
  }
  bool has0 = false, has1 = false;
  for (std::uint8_t l : labels_) {
    if (l > 1) throw std::invalid_argument("continuum labels must be 0 or 1");
    (l ? has1 : has0) = true;
  }
  two_ = has0 && has1;
}

namespace {

int feature_cells(double physical, const FineGrid& grid, const char* what) {
  const double exact = physical / grid.h();
  const double r = std::round(exact);
  if (std::abs(exact - r) > 1e-9 || r < 1) {
    throw std::invalid_argument(std::string(what) +
                                " must be a positive multiple of h_fine");
  }
  return static_cast<int>(r);
}

void paint_channels(const GeometrySpec& spec, const FineGrid& grid,
                    std::vector<std::uint8_t>& high) {
  if (spec.channel_count < 1) {
    throw std::invalid_argument("channel medium needs channel_count >= 1");
  }
  const int w = feature_cells(spec.channel_width, grid, "channel width");
  const int n = grid.n();
  for (int c = 0; c < spec.channel_count; ++c) {
    const double center = (c + 0.5) / spec.channel_count;
    const double lo_exact = center * n - 0.5 * w;
    const double lo_r = std::round(lo_exact);
    if (std::abs(lo_exact - lo_r) > 1e-9) {
      throw std::invalid_argument(
          "channel placement does not align with the fine grid");
    }
    const int lo = static_cast<int>(lo_r);
    if (lo < 0 || lo + w > n) {
      throw std::invalid_argument("channel does not fit in the domain");
    }
    // Horizontal slab: rows [lo, lo+w) along axis 1, full extent elsewhere.
    CellBox box = grid.full_cell_box();
    box.lo[1] = lo;
    box.hi[1] = lo + w;
    const int count = box_cell_count(box);
    for (int l = 0; l < count; ++l) {
      high[grid.cell_index(local_cell_coords(box, l))] = 1;
    }
  }
}

void paint_inclusions(const GeometrySpec& spec, const FineGrid& grid,
                      std::vector<std::uint8_t>& high) {
  const int p = feature_cells(spec.period, grid, "period");
  const int q = feature_cells(spec.inclusion_size, grid, "inclusion size");
  if (q > p) throw std::invalid_argument("inclusion larger than its period");
  if (grid.n() % p != 0) {
    throw std::invalid_argument("period must divide the domain");
  }
  if ((p - q) % 2 != 0 && spec.jitter_cells == 0) {
    throw std::invalid_argument(
        "inclusion cannot be centered in its period on this grid");
  }
  const int reps = grid.n() / p;
  std::mt19937_64 rng(spec.seed);
  const int slack = p - q;
  MultiIndex rep{};
  int total_reps = 1;
  for (int a = 0; a < grid.dim(); ++a) total_reps *= reps;
  for (int r = 0; r < total_reps; ++r) {
    int rest = r;
    for (int a = 0; a < grid.dim(); ++a) {
      rep[a] = rest % reps;
      rest /= reps;
    }
    MultiIndex off{};
    for (int a = 0; a < grid.dim(); ++a) off[a] = slack / 2;
    if (spec.jitter_cells > 0) {
      for (int a = 0; a < grid.dim(); ++a) {
        const int amp = std::min(spec.jitter_cells, slack / 2);
        std::uniform_int_distribution<int> d(-amp, amp);
        off[a] = slack / 2 + d(rng);
        off[a] = std::clamp(off[a], 0, slack);
      }
    }
    CellBox box;
    box.dim = grid.dim();
    for (int a = 0; a < kMaxDim; ++a) {
      if (a < grid.dim()) {
        box.lo[a] = rep[a] * p + off[a];
        box.hi[a] = box.lo[a] + q;
      } else {
        box.lo[a] = 0;
        box.hi[a] = 1;
      }
    }
    const int count = box_cell_count(box);
    for (int l = 0; l < count; ++l) {
      high[grid.cell_index(local_cell_coords(box, l))] = 1;
    }
  }
}

}  // namespace

Medium generate_medium(const GeometrySpec& spec, const FineGrid& grid) {
  if (!(spec.kappa_low > 0.0) || !(spec.kappa_high >= spec.kappa_low)) {
    throw std::invalid_argument("need 0 < kappa_low <= kappa_high");
  }
  std::vector<std::uint8_t> high(grid.cell_count(), 0);
  switch (spec.kind) {
    case MediumKind::kConstant:
      break;
    case MediumKind::kChannels:
      paint_channels(spec, grid, high);
      break;
    case MediumKind::kPeriodicInclusions:
      paint_inclusions(spec, grid, high);
      break;
    case MediumKind::kChannelsWithInclusions:
      paint_channels(spec, grid, high);
      paint_inclusions(spec, grid, high);
      break;
  }
  std::vector<double> kappa(grid.cell_count(), spec.kappa_low);
  for (int c = 0; c < grid.cell_count(); ++c) {
    if (high[c]) kappa[c] = spec.kappa_high;
  }
  Medium medium;
  medium.kappa = CoefficientField(grid, std::move(kappa));
  medium.continua = derive_continua(medium.kappa);
  return medium;
}

ContinuumMap derive_continua(const CoefficientField& field) {
  const FineGrid& grid = field.grid();
  std::vector<std::uint8_t> labels(grid.cell_count(), 0);
  if (field.kappa_max() > field.kappa_min()) {
    const double thresh =
        std::sqrt(field.kappa_min()) * std::sqrt(field.kappa_max());
    for (int c = 0; c < grid.cell_count(); ++c) {
      labels[c] = field.value(c) > thresh ? 1 : 0;
    }
  }
  return ContinuumMap(grid, std::move(labels));
}

double contrast(const CoefficientField& field) {
  return field.kappa_max() / field.kappa_min();
}

VolumeFractions volume_fractions(const ContinuumMap& map,
                                 const ShiftedPartition& p) {
  if (map.grid().n() != p.grid().n() || map.grid().dim() != p.grid().dim()) {
    throw std::invalid_argument("continuum map and partition grids differ");
  }
  const double cell_measure = std::pow(p.grid().h(), p.grid().dim());
  VolumeFractions vf;
  vf.measure.assign(p.cell_count(), {0.0, 0.0});
  vf.empty.assign(p.cell_count(), {1, 1});
  for (int id = 0; id < p.cell_count(); ++id) {
    std::array<int, 2> count{0, 0};
    for (int f : p.cell(id).fine_cells) count[map.label(f)]++;
    for (int i = 0; i < 2; ++i) {
      vf.measure[id][i] = count[i] * cell_measure;
      vf.empty[id][i] = count[i] == 0 ? 1 : 0;
    }
  }
  return vf;
}

}  // namespace mch
