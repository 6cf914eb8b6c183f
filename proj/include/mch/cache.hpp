#pragma once

#include <mutex>
#include <optional>
#include <string>

#include "mch/cells.hpp"
#include "mch/fem.hpp"
#include "mch/field.hpp"
#include "mch/mesh.hpp"

namespace mch {

// On-disk store of cell-problem solutions, keyed by medium hash, partition
// signature, cell id and oversampling width. A JSON manifest lists payloads;
// recomputation is always the fallback.
class CellCache {
 public:
  CellCache(std::string dir, const CoefficientField& field,
            const ShiftedPartition& p_sub);

  std::optional<FineFunction> load_basis(int entry_id, int k,
                                         const NodeBox& expected_box);
  void store_basis(int entry_id, int k, const FineFunction& fn);

  std::optional<CellSolutionSet> load_cell_set(const ShiftedPartition& p_coarse,
                                               const ShiftedPartition& p_sub,
                                               int cell, int k);
  void store_cell_set(const ShiftedPartition& p_coarse,
                      const CellSolutionSet& set, int k);

  int hits() const { return hits_; }
  int misses() const { return misses_; }
  void flush();

 private:
  std::optional<FineFunction> load_payload(const std::string& key,
                                           const NodeBox& expected_box);
  void store_payload(const std::string& key, const FineFunction& fn);
  std::string key_prefix_;
  std::string dir_;
  std::mutex mutex_;
  int hits_ = 0;
  int misses_ = 0;
};

}  // namespace mch
