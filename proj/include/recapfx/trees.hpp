#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace recapfx::trees {

/// Borrowed row-major matrix.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatrixView() = default;
  MatrixView(std::span<const double> d, std::size_t r, std::size_t c);
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return data.subspan(r * cols, cols); }
};

/// Split nodes route `x[feature] <= threshold` to the left child.
struct Node {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  /// Newton weight -G/(H+lambda); the output when the node is a leaf.
  double weight = 0.0;
  /// Split gain (split nodes only).
  double gain = 0.0;
  /// Hessian sum H of the rows that reached the node during fitting.
  double cover = 0.0;
  std::size_t samples = 0;

  bool is_leaf() const { return feature < 0; }
};

/// Flat node array, root at index 0.
struct Tree {
  std::vector<Node> nodes;

  double predict(std::span<const double> row) const;
  std::size_t leaf_count() const;
  std::size_t depth() const;
};

enum class Growth { level_wise, leaf_wise };
enum class Splitter { exact, histogram };

/// Gradient-based one-side sampling: keep the `top` fraction of rows by |g|,
/// sample an `other` fraction of the rest and amplify it by (1-top)/other.
struct Goss {
  double top = 0.2;
  double other = 0.1;
};

struct TreeParams {
  double lambda = 1.0;
  double gamma = 0.0;
  /// 0 = unlimited.
  std::size_t max_depth = 6;
  /// 0 = unlimited.
  std::size_t max_leaves = 0;
  Growth growth = Growth::level_wise;
  Splitter splitter = Splitter::exact;
  std::size_t bins = 256;
  std::size_t min_samples_leaf = 1;
  double min_child_weight = 0.0;
  /// Features drawn at random per node; 0 = all.
  std::size_t features_per_split = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BoostParams {
  std::size_t n_trees = 100;
  double learning_rate = 0.3;
  TreeParams tree;
  std::optional<Goss> goss;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 0;
  /// Features per split; 0 means max(1, F/3).
  std::size_t features_per_split = 0;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

/// g_i = 2(yhat_i - y_i), h_i = 2.
struct Gradients {
  std::vector<double> g;
  std::vector<double> h;
};
Gradients gradients_squared_loss(std::span<const double> y, std::span<const double> y_hat);

/// -G/(H+lambda). Throws ParameterError when H+lambda <= 0.
double leaf_weight(double G, double H, double lambda);

/// Reduction of the regularised objective from splitting one leaf in two.
double split_gain(double GL, double HL, double GR, double HR, double lambda, double gamma);

/// Greedy tree on explicit gradients, every row weighted once.
Tree fit_tree(MatrixView X, std::span<const double> g, std::span<const double> h,
              const TreeParams& params);

struct BoostedModel {
  double base_score = 0.0;
  double learning_rate = 1.0;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;
  /// Squared-loss objective plus tree penalties after each round; entry 0 is
  /// the base score alone.
  std::vector<double> objective_history;
  double lambda = 0.0;
  double gamma = 0.0;
};

BoostedModel newton_boost_fit(MatrixView X, std::span<const double> y, const BoostParams& params,
                              std::vector<std::string> feature_names = {});

struct ForestModel {
  std::vector<Tree> trees;
  std::vector<std::uint64_t> tree_seeds;
  std::size_t features_per_split = 0;
  std::vector<std::string> feature_names;
};

ForestModel fit_random_forest(MatrixView X, std::span<const double> y, const ForestParams& params,
                              std::vector<std::string> feature_names = {});

std::vector<double> predict(const BoostedModel& model, MatrixView X);
std::vector<double> predict(const ForestModel& model, MatrixView X);

enum class ImportanceKind { gain, total_gain, split_count, impurity_decrease };
std::string to_string(ImportanceKind kind);

struct ImportanceVector {
  ImportanceKind kind = ImportanceKind::gain;
  std::vector<std::string> feature_names;
  std::vector<double> scores;
};

/// Boosted models support gain, total_gain and split_count; forests support
/// impurity_decrease and split_count. Other pairings throw ParameterError.
ImportanceVector importance(const BoostedModel& model, ImportanceKind kind);
ImportanceVector importance(const ForestModel& model, ImportanceKind kind);

/// `feature,score` lines with a header.
std::string importance_csv(const ImportanceVector& v);

nlohmann::json to_json(const Tree& tree);
nlohmann::json to_json(const BoostedModel& model);
nlohmann::json to_json(const ForestModel& model);
BoostedModel boosted_from_json(const nlohmann::json& doc);
ForestModel forest_from_json(const nlohmann::json& doc);

}  // namespace recapfx::trees
