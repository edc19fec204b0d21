#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>

#include "safeload/core.hpp"

namespace safeload::correction {

/// Cosine similarity; 0.0 when either vector has zero norm.
double cosine(const FeatureVector& a, const FeatureVector& b);

/// Exact per-cluster nearest-neighbor store over past false negatives.
/// Lookups scan every stored vector; a match needs similarity at or above
/// the threshold, ties resolving to the earliest insertion.
class CorrectionIndex {
 public:
  struct Entry {
    FeatureVector features;
    std::int64_t inserted_ms = 0;
  };

  struct Match {
    double similarity = 0.0;
    std::int64_t inserted_ms = 0;
  };

  explicit CorrectionIndex(double similarity_threshold = 0.9999,
                           std::optional<std::size_t> capacity = {});

  /// Records a confirmed false negative. At capacity the oldest entry of
  /// the same cluster is evicted first.
  void insert_fn(const std::string& cluster_id, const FeatureVector& features,
                 std::int64_t timestamp_ms);

  std::optional<Match> lookup(const std::string& cluster_id,
                              const FeatureVector& features) const;

  std::size_t size(const std::string& cluster_id) const;
  const std::map<std::string, std::deque<Entry>>& entries() const {
    return entries_;
  }
  double similarity_threshold() const { return threshold_; }
  std::optional<std::size_t> capacity() const { return capacity_; }

 private:
  double threshold_;
  std::optional<std::size_t> capacity_;
  std::map<std::string, std::deque<Entry>> entries_;
};

}  // namespace safeload::correction
