#pragma once

// Dataset construction and serialization: composition-triple partitioning
// into paired/unpaired splits, per-record rendering, training-split
// normalization statistics, JSONL records, binary motion payloads and a
// human-readable manifest.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mogen/synthworld/grammar.hpp"
#include "mogen/synthworld/motion.hpp"
#include "mogen/synthworld/primitives.hpp"

namespace mogen::world {

// A composition triple (a, b, connector); singletons are not triples and
// live only in the paired splits.
struct Triple {
  Primitive a;
  Primitive b;
  Connector conn;
  bool operator==(const Triple&) const = default;
};

std::vector<Triple> all_composition_triples();

struct DataConfig {
  int paired_train_records = 2000;
  int paired_test_records = 300;
  int unpaired_train_records = 800;
  int unpaired_test_records = 200;
  // Split of the composition-triple pool; leftovers go to paired_train.
  int paired_test_triples = 24;
  int unpaired_train_triples = 45;
  int unpaired_test_triples = 35;
  double duration_jitter = 0.25;
  std::uint64_t seed = 1234;

  void validate() const;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stdev;  // degenerate dims pinned to 1
};

struct DatasetSplit {
  std::string name;
  std::vector<PromptRecord> records;
  // Parallel to records for paired splits; empty for unpaired splits.
  std::vector<MotionSequence> motions;
};

struct Dataset {
  DataConfig config;
  Skeleton skeleton;
  DatasetSplit paired_train, paired_test, unpaired_train, unpaired_test;
  NormalizationStats stats;  // from paired_train only
};

Dataset build_datasets(const DataConfig& cfg);

NormalizationStats compute_stats(const std::vector<MotionSequence>& motions);
MotionSequence normalize(const MotionSequence& m, const NormalizationStats& s);
MotionSequence denormalize(const MotionSequence& m, const NormalizationStats& s);

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// Flat binary motion payload with a shape header.
void save_motion(const std::string& path, const MotionSequence& m);
MotionSequence load_motion(const std::string& path);

const char* connector_name(Connector c);
Connector connector_from_name(const std::string& name);

}  // namespace mogen::world
