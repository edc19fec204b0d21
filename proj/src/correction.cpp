#include "safeload/correction.hpp"

#include <cmath>

namespace safeload::correction {

double cosine(const FeatureVector& a, const FeatureVector& b) {
  if (a.size() != b.size()) {
    throw DimensionError("cosine over mismatched dimensions");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

CorrectionIndex::CorrectionIndex(double similarity_threshold,
                                 std::optional<std::size_t> capacity)
    : threshold_(similarity_threshold), capacity_(capacity) {
  if (!(threshold_ > 0.0) || threshold_ > 1.0) {
    throw ConfigError("similarity threshold must be in (0, 1]");
  }
  if (capacity_ && *capacity_ == 0) {
    throw ConfigError("index capacity must be positive");
  }
}

void CorrectionIndex::insert_fn(const std::string& cluster_id,
                                const FeatureVector& features,
                                std::int64_t timestamp_ms) {
  auto& bucket = entries_[cluster_id];
  if (capacity_ && bucket.size() == *capacity_) bucket.pop_front();
  bucket.push_back({features, timestamp_ms});
}

std::optional<CorrectionIndex::Match> CorrectionIndex::lookup(
    const std::string& cluster_id, const FeatureVector& features) const {
  const auto it = entries_.find(cluster_id);
  if (it == entries_.end()) return std::nullopt;
  std::optional<Match> best;
  for (const Entry& e : it->second) {
    const double sim = cosine(features, e.features);
    if (sim < threshold_) continue;
    // Strictly-greater keeps the earliest insertion on ties.
    if (!best || sim > best->similarity) {
      best = Match{sim, e.inserted_ms};
    }
  }
  return best;
}

std::size_t CorrectionIndex::size(const std::string& cluster_id) const {
  const auto it = entries_.find(cluster_id);
  return it == entries_.end() ? 0 : it->second.size();
}

}  // namespace safeload::correction
