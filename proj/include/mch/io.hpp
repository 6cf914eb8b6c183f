#pragma once

#include <map>
#include <string>
#include <vector>

#include "mch/downscale.hpp"
#include "mch/fem.hpp"
#include "mch/field.hpp"
#include "mch/macro.hpp"
#include "mch/mesh.hpp"

namespace mch {

// Binary layout: magic u32, kind u32 (0 cell data, 1 nodal data), d u32,
// n_per_side u32, then row-major float64 payload.
void write_field_binary(const std::string& path, const CoefficientField& f);
CoefficientField read_field_binary(const std::string& path);

void write_nodal_binary(const std::string& path, const FineGrid& grid,
                        const FineFunction& u);
FineFunction read_nodal_binary(const std::string& path, FineGrid* grid_out);

// Nodal payloads per coarse-cell piece plus a JSON manifest alongside.
void write_broken_binary(const std::string& path, const FineGrid& grid,
                         const BrokenFunction& w);
BrokenFunction read_broken_binary(const std::string& path,
                                  FineGrid* grid_out);

void write_field_csv(const std::string& path, const CoefficientField& f,
                     const ContinuumMap& map);

void write_partition_csv(const std::string& path, const ShiftedPartition& p);

// alpha/beta/gamma files with per-entry rows.
void write_tensors_csv(const std::string& alpha_path,
                       const std::string& beta_path,
                       const std::string& gamma_path,
                       const EffectiveTensors& tensors,
                       const ShiftedPartition& p_coarse);

// Rebuilds blocks (including the Gram quadratic form) from the CSV files.
EffectiveTensors read_tensors_csv(const std::string& alpha_path,
                                  const std::string& beta_path,
                                  const std::string& gamma_path, int dim,
                                  double h_coarse);

void write_macro_csv(const std::string& path, const MacroSolution& sol,
                     const CoarseLattice& lattice);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace mch
