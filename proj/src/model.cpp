#include "safeload/model.hpp"

#include <algorithm>
#include <cmath>

#include "safeload/text.hpp"

namespace safeload::model {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double clamp_probability(double p) {
  return std::min(1.0 - 1e-15, std::max(1e-15, p));
}

}  // namespace

void TrainConfig::validate() const {
  if (rounds < 0) throw ConfigError("rounds must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
  if (!(min_child_weight >= 0.0)) {
    throw ConfigError("min_child_weight must be >= 0");
  }
  if (positive_class_weight && !(*positive_class_weight > 0.0)) {
    throw ConfigError("positive_class_weight must be > 0");
  }
}

double Tree::value(const FeatureVector& v) const {
  std::int32_t at = 0;
  while (!nodes[at].is_leaf()) {
    const TreeNode& n = nodes[at];
    at = v[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left
                                                              : n.right;
  }
  return nodes[at].weight;
}

double score(const TreeEnsemble& ensemble, const FeatureVector& features) {
  if (features.size() != ensemble.dimension) {
    throw DimensionError("feature vector does not match model dimension");
  }
  double margin = ensemble.base_score;
  for (const Tree& t : ensemble.trees) margin += t.value(features);
  return sigmoid(margin);
}

SplitChoice find_best_split(std::span<const GradientSample> samples,
                            double min_child_weight, double lambda) {
  SplitChoice best;
  if (samples.size() < 2) return best;

  double g_total = 0.0, h_total = 0.0;
  for (const auto& s : samples) {
    g_total += s.g;
    h_total += s.h;
  }
  const double parent = g_total * g_total / (h_total + lambda);
  const std::size_t dim = samples[0].features->size();

  std::vector<std::size_t> order(samples.size());
  for (std::size_t f = 0; f < dim; ++f) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return (*samples[a].features)[f] <
                              (*samples[b].features)[f];
                     });

    double g_left = 0.0, h_left = 0.0;
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const auto& s = samples[order[i]];
      g_left += s.g;
      h_left += s.h;
      const double v = (*s.features)[f];
      const double next = (*samples[order[i + 1]].features)[f];
      if (v == next) continue;  // split only between distinct values
      const double h_right = h_total - h_left;
      if (h_left < min_child_weight || h_right < min_child_weight) continue;
      const double g_right = g_total - g_left;
      const double gain = g_left * g_left / (h_left + lambda) +
                          g_right * g_right / (h_right + lambda) - parent;
      if (gain <= 0.0) continue;
      const double threshold = v + (next - v) / 2.0;
      // Equal gains keep the lower feature, then the lower threshold;
      // scanning features and thresholds in ascending order makes a
      // strictly-greater test sufficient.
      if (!best.found || gain > best.gain) {
        best.found = true;
        best.feature = static_cast<std::int32_t>(f);
        best.threshold = threshold;
        best.gain = gain;
      }
    }
  }
  return best;
}

namespace {

// Presorted feature columns shared by every round of one training run.
struct ColumnBlock {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> values;       // per feature, record order
  std::vector<std::vector<std::int32_t>> order;  // per feature, value-sorted

  explicit ColumnBlock(std::span<const QueryRecord> records) {
    n = records.size();
    dim = records[0].features.size();
    values.assign(dim, {});
    order.assign(dim, {});
    for (std::size_t f = 0; f < dim; ++f) {
      auto& col = values[f];
      col.resize(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = records[i].features[f];
      auto& idx = order[f];
      idx.resize(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::int32_t>(i);
      std::stable_sort(idx.begin(), idx.end(),
                       [&](std::int32_t a, std::int32_t b) {
                         return col[a] < col[b];
                       });
    }
  }
};

struct NodeSplit {
  bool found = false;
  std::int32_t feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

// One boosted tree via level-wise exact greedy search over the presorted
// columns. Equal-gain ties resolve to the lower feature index, then the
// lower threshold, by scan order.
Tree build_tree(const ColumnBlock& block, const std::vector<double>& g,
                const std::vector<double>& h, const TrainConfig& config,
                double lambda) {
  Tree tree;
  tree.nodes.emplace_back();

  std::vector<std::int32_t> position(block.n, 0);
  std::vector<std::int32_t> frontier = {0};
  std::vector<double> node_g(1, 0.0), node_h(1, 0.0);
  for (std::size_t i = 0; i < block.n; ++i) {
    node_g[0] += g[i];
    node_h[0] += h[i];
  }

  auto finalize_leaf = [&](std::int32_t id) {
    tree.nodes[id].weight =
        -node_g[id] / (node_h[id] + lambda) * config.learning_rate;
  };

  for (int depth = 0; depth < config.max_depth && !frontier.empty(); ++depth) {
    std::vector<NodeSplit> best(tree.nodes.size());
    std::vector<std::int8_t> active(tree.nodes.size(), 0);
    for (std::int32_t id : frontier) active[id] = 1;

    struct ScanState {
      double g_left = 0.0;
      double h_left = 0.0;
      double prev = 0.0;
      bool have_prev = false;
    };
    std::vector<ScanState> state(tree.nodes.size());

    for (std::size_t f = 0; f < block.dim; ++f) {
      for (std::int32_t id : frontier) state[id] = ScanState{};
      const auto& col = block.values[f];
      for (const std::int32_t i : block.order[f]) {
        const std::int32_t id = position[i];
        if (id < 0 || !active[id]) continue;
        ScanState& st = state[id];
        const double v = col[i];
        if (st.have_prev && v != st.prev) {
          const double h_right = node_h[id] - st.h_left;
          if (st.h_left >= config.min_child_weight &&
              h_right >= config.min_child_weight) {
            const double g_right = node_g[id] - st.g_left;
            const double parent =
                node_g[id] * node_g[id] / (node_h[id] + lambda);
            const double gain =
                st.g_left * st.g_left / (st.h_left + lambda) +
                g_right * g_right / (h_right + lambda) - parent;
            if (gain > 0.0 && (!best[id].found || gain > best[id].gain)) {
              best[id].found = true;
              best[id].feature = static_cast<std::int32_t>(f);
              best[id].threshold = st.prev + (v - st.prev) / 2.0;
              best[id].gain = gain;
            }
          }
        }
        st.g_left += g[i];
        st.h_left += h[i];
        st.prev = v;
        st.have_prev = true;
      }
    }

    std::vector<std::int32_t> next_frontier;
    for (std::int32_t id : frontier) {
      if (!best[id].found) {
        finalize_leaf(id);
        continue;
      }
      const std::int32_t left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      tree.nodes[id].feature = best[id].feature;
      tree.nodes[id].threshold = best[id].threshold;
      tree.nodes[id].left = left;
      tree.nodes[id].right = left + 1;
      node_g.resize(tree.nodes.size(), 0.0);
      node_h.resize(tree.nodes.size(), 0.0);
      next_frontier.push_back(left);
      next_frontier.push_back(left + 1);
    }

    for (std::size_t i = 0; i < block.n; ++i) {
      const std::int32_t id = position[i];
      if (id < 0 || tree.nodes[id].is_leaf()) {
        if (id >= 0 && tree.nodes[id].is_leaf()) position[i] = -1;
        continue;
      }
      const TreeNode& n = tree.nodes[id];
      const std::int32_t child =
          block.values[static_cast<std::size_t>(n.feature)][i] < n.threshold
              ? n.left
              : n.right;
      position[i] = child;
      node_g[child] += g[i];
      node_h[child] += h[i];
    }
    frontier = std::move(next_frontier);
  }

  // Depth limit reached: everything still open becomes a leaf.
  for (std::int32_t id : frontier) finalize_leaf(id);
  return tree;
}

}  // namespace

TreeEnsemble train(std::span<const QueryRecord> records,
                   const TrainConfig& config, TrainDiagnostics* diagnostics) {
  config.validate();
  if (records.empty()) throw SingleClass("training set is empty");
  const std::size_t dim = records[0].features.size();
  std::size_t n_pos = 0, n_neg = 0;
  for (const auto& r : records) {
    if (r.features.size() != dim) {
      throw DimensionError("inconsistent feature dimensions in training set");
    }
    (r.label == Label::MO ? n_pos : n_neg) += 1;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw SingleClass("training set contains a single class");
  }

  double pos_weight;
  if (config.positive_class_weight) {
    pos_weight = *config.positive_class_weight;
  } else {
    pos_weight = static_cast<double>(n_neg) / static_cast<double>(n_pos);
    pos_weight = std::min(1000.0, std::max(1.0, pos_weight));
  }

  TreeEnsemble ensemble;
  ensemble.dimension = dim;
  ensemble.base_score = 0.0;

  const std::size_t n = records.size();
  const ColumnBlock block(records);
  std::vector<double> margin(n, ensemble.base_score);
  std::vector<double> weight(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool mo = records[i].label == Label::MO;
    weight[i] = mo ? pos_weight : 1.0;
    y[i] = mo ? 1.0 : 0.0;
  }
  double weight_total = 0.0;
  for (double w : weight) weight_total += w;

  auto mean_loss = [&]() {
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = clamp_probability(sigmoid(margin[i]));
      loss -=
          weight[i] * (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
    }
    return loss / weight_total;
  };

  if (diagnostics) {
    diagnostics->positive_class_weight = pos_weight;
    diagnostics->loss_per_round.clear();
    diagnostics->loss_per_round.push_back(mean_loss());
  }

  std::vector<double> g(n), h(n);
  for (int round = 0; round < config.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      g[i] = weight[i] * (p - y[i]);
      h[i] = weight[i] * p * (1.0 - p);
    }
    Tree tree = build_tree(block, g, h, config, kSplitLambda);
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += tree.value(records[i].features);
    }
    ensemble.trees.push_back(std::move(tree));
    if (diagnostics) diagnostics->loss_per_round.push_back(mean_loss());
  }
  return ensemble;
}

HybridRouter train_hybrid(std::span<const QueryRecord> records,
                          const TrainConfig& config,
                          std::size_t local_threshold) {
  HybridRouter router;
  router.local_threshold = local_threshold;
  router.global = train(records, config);

  std::map<std::string, std::size_t> positives;
  for (const auto& r : records) {
    if (r.label == Label::MO) ++positives[r.cluster_id];
  }
  for (const auto& [cluster, count] : positives) {
    if (count <= local_threshold) continue;
    std::vector<QueryRecord> subset;
    for (const auto& r : records) {
      if (r.cluster_id == cluster) subset.push_back(r);
    }
    try {
      router.locals.emplace(cluster, train(subset, config));
    } catch (const SingleClass&) {
      router.fallback_clusters.push_back(cluster);
    }
  }
  return router;
}

double route_score(const HybridRouter& router, const std::string& cluster_id,
                   const FeatureVector& features) {
  const auto it = router.locals.find(cluster_id);
  if (it != router.locals.end()) return score(it->second, features);
  return score(router.global, features);
}

std::string ensemble_to_text(const TreeEnsemble& ensemble) {
  std::string out = "safeload.model.v1\n";
  out +=
      "dimension " + format_i64(static_cast<std::int64_t>(ensemble.dimension));
  out += "\nbase_score " + format_double(ensemble.base_score);
  out +=
      "\ntrees " + format_i64(static_cast<std::int64_t>(ensemble.trees.size()));
  out += '\n';
  for (const Tree& t : ensemble.trees) {
    out += "tree " + format_i64(static_cast<std::int64_t>(t.nodes.size()));
    out += '\n';
    // Preorder; a split line is followed by its left subtree, then right.
    struct Walk {
      const Tree& tree;
      std::string& out;
      void visit(std::int32_t id) {
        const TreeNode& n = tree.nodes[id];
        if (n.is_leaf()) {
          out += "leaf " + format_double(n.weight) + '\n';
          return;
        }
        out += "split " + format_i64(n.feature) + ' ' +
               format_double(n.threshold) + '\n';
        visit(n.left);
        visit(n.right);
      }
    };
    Walk{t, out}.visit(0);
  }
  return out;
}

namespace {

struct ModelReader {
  std::vector<std::string_view> lines;
  std::size_t at = 0;

  std::string_view next(const char* what) {
    if (at >= lines.size()) {
      throw CorruptArtifact(std::string("model text truncated, expected ") +
                            what);
    }
    return lines[at++];
  }

  std::int32_t read_subtree(Tree& tree) {
    const auto line = next("node");
    const auto fields = split(line, ' ');
    const std::int32_t id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (fields[0] == "leaf" && fields.size() == 2) {
      double w = 0;
      if (!try_parse_double(fields[1], w)) {
        throw CorruptArtifact("bad leaf weight in model text");
      }
      tree.nodes[id].weight = w;
      return id;
    }
    if (fields[0] == "split" && fields.size() == 3) {
      std::int64_t f = 0;
      double t = 0;
      if (!try_parse_i64(fields[1], f) || f < 0 ||
          !try_parse_double(fields[2], t)) {
        throw CorruptArtifact("bad split in model text");
      }
      const std::int32_t l = read_subtree(tree);
      const std::int32_t r = read_subtree(tree);
      tree.nodes[id].feature = static_cast<std::int32_t>(f);
      tree.nodes[id].threshold = t;
      tree.nodes[id].left = l;
      tree.nodes[id].right = r;
      return id;
    }
    throw CorruptArtifact("unrecognized model node line");
  }
};

}  // namespace

TreeEnsemble ensemble_from_text(const std::string& text) {
  ModelReader reader;
  for (auto line : split(text, '\n')) {
    if (!line.empty()) reader.lines.push_back(line);
  }
  if (reader.lines.empty() || reader.lines[0] != "safeload.model.v1") {
    throw CorruptArtifact("missing model format header");
  }
  reader.at = 1;

  auto field = [&](const char* key) -> std::string_view {
    const auto line = reader.next(key);
    const auto fields = split(line, ' ');
    if (fields.size() != 2 || fields[0] != key) {
      throw CorruptArtifact(std::string("expected model field ") + key);
    }
    return fields[1];
  };

  TreeEnsemble ensemble;
  std::int64_t dim = 0, count = 0;
  if (!try_parse_i64(field("dimension"), dim) || dim <= 0) {
    throw CorruptArtifact("bad model dimension");
  }
  ensemble.dimension = static_cast<std::size_t>(dim);
  if (!try_parse_double(field("base_score"), ensemble.base_score)) {
    throw CorruptArtifact("bad model base score");
  }
  if (!try_parse_i64(field("trees"), count) || count < 0) {
    throw CorruptArtifact("bad model tree count");
  }
  for (std::int64_t i = 0; i < count; ++i) {
    const auto head = split(reader.next("tree header"), ' ');
    std::int64_t nodes = 0;
    if (head.size() != 2 || head[0] != "tree" ||
        !try_parse_i64(head[1], nodes) || nodes <= 0) {
      throw CorruptArtifact("bad tree header in model text");
    }
    Tree tree;
    reader.read_subtree(tree);
    if (static_cast<std::int64_t>(tree.nodes.size()) != nodes) {
      throw CorruptArtifact("tree node count does not match header");
    }
    for (const TreeNode& n : tree.nodes) {
      if (!n.is_leaf() && n.feature >= dim) {
        throw CorruptArtifact("model split references feature out of range");
      }
    }
    ensemble.trees.push_back(std::move(tree));
  }
  if (reader.at != reader.lines.size()) {
    throw CorruptArtifact("trailing content in model text");
  }
  return ensemble;
}

}  // namespace safeload::model
