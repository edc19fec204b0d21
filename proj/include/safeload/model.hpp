#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "safeload/core.hpp"

namespace safeload::model {

struct TrainConfig {
  int rounds = 500;
  double learning_rate = 0.05;
  int max_depth = 5;
  double min_child_weight = 1.0;
  // Weight applied to positive samples; empty selects n_neg / n_pos
  // clamped to [1, 1000].
  std::optional<double> positive_class_weight;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double weight = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double value(const FeatureVector& v) const;
};

struct TreeEnsemble {
  std::size_t dimension = 0;
  double base_score = 0.0;  // log-odds prior
  std::vector<Tree> trees;
};

struct TrainDiagnostics {
  // Mean weighted logistic loss after each round; element 0 is the loss
  // at the base score.
  std::vector<double> loss_per_round;
  double positive_class_weight = 1.0;
};

/// MO-failure probability in [0, 1].
double score(const TreeEnsemble& ensemble, const FeatureVector& features);

/// Second-order boosting on weighted binary logistic loss with exact
/// greedy splits. Deterministic: equal-gain splits break toward the lower
/// feature index, then the lower threshold.
TreeEnsemble train(std::span<const QueryRecord> records,
                   const TrainConfig& config,
                   TrainDiagnostics* diagnostics = nullptr);

struct GradientSample {
  const FeatureVector* features = nullptr;
  double g = 0.0;
  double h = 0.0;
};

struct SplitChoice {
  bool found = false;
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Exact greedy search over all (feature, midpoint) splits. Exposed so the
/// choice can be replayed against brute force.
SplitChoice find_best_split(std::span<const GradientSample> samples,
                            double min_child_weight, double lambda);

constexpr double kSplitLambda = 1.0;

struct HybridRouter {
  TreeEnsemble global;
  std::map<std::string, TreeEnsemble> locals;
  std::size_t local_threshold = 100;
  // Clusters over the threshold whose local training degenerated to a
  // single class; they use the global model.
  std::vector<std::string> fallback_clusters;
};

/// Global model over all records plus a local model for every cluster with
/// more than local_threshold positive records.
HybridRouter train_hybrid(std::span<const QueryRecord> records,
                          const TrainConfig& config,
                          std::size_t local_threshold = 100);

double route_score(const HybridRouter& router, const std::string& cluster_id,
                   const FeatureVector& features);

std::string ensemble_to_text(const TreeEnsemble& ensemble);
TreeEnsemble ensemble_from_text(const std::string& text);

}  // namespace safeload::model
