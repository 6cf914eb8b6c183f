#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mch/mesh.hpp"

namespace mch {

enum class MediumKind {
  kConstant,
  kPeriodicInclusions,
  kChannels,
  kChannelsWithInclusions,
};

std::string to_string(MediumKind k);
MediumKind medium_kind_from_string(const std::string& s);

struct GeometrySpec {
  MediumKind kind = MediumKind::kConstant;
  double kappa_low = 1.0;
  double kappa_high = 1.0;
  double period = 0.0;          // inclusion lattice period
  double inclusion_size = 0.0;  // inclusion side length
  int channel_count = 0;
  double channel_width = 0.0;
  std::uint64_t seed = 0;
  int jitter_cells = 0;  // max inclusion offset from period center, fine cells
};

// Piecewise-constant permeability, one value per fine cell.
class CoefficientField {
 public:
  CoefficientField() = default;
  CoefficientField(const FineGrid& grid, std::vector<double> values);

  const FineGrid& grid() const { return grid_; }
  double value(int cell) const { return values_[cell]; }
  std::span<const double> values() const { return values_; }
  double kappa_min() const { return kmin_; }
  double kappa_max() const { return kmax_; }
  std::uint64_t content_hash() const;

 private:
  FineGrid grid_;
  std::vector<double> values_;
  double kmin_ = 0.0, kmax_ = 0.0;
};

// Per-fine-cell continuum label; 1 marks the high-permeability region.
class ContinuumMap {
 public:
  ContinuumMap() = default;
  ContinuumMap(const FineGrid& grid, std::vector<std::uint8_t> labels);

  const FineGrid& grid() const { return grid_; }
  std::uint8_t label(int cell) const { return labels_[cell]; }
  std::span<const std::uint8_t> labels() const { return labels_; }
  bool two_continuum() const { return two_; }

 private:
  FineGrid grid_;
  std::vector<std::uint8_t> labels_;
  bool two_ = false;
};

struct Medium {
  CoefficientField kappa;
  ContinuumMap continua;
};

Medium generate_medium(const GeometrySpec& spec, const FineGrid& grid);

// Thresholds kappa at the geometric mean of its extremes, so imported fields
// get the same decomposition as generated ones.
ContinuumMap derive_continua(const CoefficientField& field);

double contrast(const CoefficientField& field);

struct VolumeFractions {
  // Aligned with partition cells.
  std::vector<std::array<double, 2>> measure;
  std::vector<std::array<std::uint8_t, 2>> empty;
};

VolumeFractions volume_fractions(const ContinuumMap& map,
                                 const ShiftedPartition& p);

}  // namespace mch
