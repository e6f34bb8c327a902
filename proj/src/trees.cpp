#include "recapfx/trees.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "recapfx/error.hpp"
#include "recapfx/parallel.hpp"
#include "recapfx/random.hpp"

namespace recapfx::trees {
namespace {

constexpr int kModelFormatVersion = 1;

/// Threshold strictly between a < b that keeps a on the left.
double midpoint(double a, double b) {
  const double m = a + (b - a) / 2.0;
  return (m >= b) ? a : m;
}

/// Column-major copy plus either presorted orders (exact) or equal-frequency
/// bins (histogram). Built once per model and shared by every tree.
struct Prepared {
  MatrixView X;
  std::vector<std::vector<double>> col;
  std::vector<std::vector<std::uint32_t>> order;
  std::vector<std::vector<std::uint16_t>> bin;
  std::vector<std::vector<double>> bin_lo, bin_hi;
};

Prepared prepare(MatrixView X, Splitter splitter, std::size_t bins) {
  Prepared p;
  p.X = X;
  p.col.assign(X.cols, std::vector<double>(X.rows));
  for (std::size_t r = 0; r < X.rows; ++r)
    for (std::size_t f = 0; f < X.cols; ++f) p.col[f][r] = X(r, f);

  std::vector<std::uint32_t> idx(X.rows);
  for (std::size_t f = 0; f < X.cols; ++f) {
    std::iota(idx.begin(), idx.end(), 0u);
    const auto& c = p.col[f];
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return c[a] < c[b]; });
    if (splitter == Splitter::exact) {
      p.order.push_back(idx);
      continue;
    }
    // Equal-frequency bins over unique values; a unique value never spans two bins.
    std::vector<double> edges_lo, edges_hi;
    std::vector<std::uint16_t> assignment(X.rows);
    std::size_t unique = 0;
    for (std::size_t k = 0; k < X.rows; ++k)
      if (k == 0 || c[idx[k]] != c[idx[k - 1]]) ++unique;
    const bool one_per_value = unique <= bins;
    const double per_bin = static_cast<double>(X.rows) / static_cast<double>(bins);
    std::size_t i = 0, taken = 0;
    while (i < X.rows) {
      const double v = c[idx[i]];
      std::size_t j = i;
      while (j < X.rows && c[idx[j]] == v) ++j;
      const bool open_new = edges_hi.empty() || one_per_value ||
                            (edges_lo.size() < bins &&
                             static_cast<double>(taken) >= per_bin * static_cast<double>(edges_lo.size()));
      if (open_new) {
        edges_lo.push_back(v);
        edges_hi.push_back(v);
      } else {
        edges_hi.back() = v;
      }
      for (std::size_t k = i; k < j; ++k) assignment[idx[k]] = static_cast<std::uint16_t>(edges_lo.size() - 1);
      taken += j - i;
      i = j;
    }
    p.bin.push_back(std::move(assignment));
    p.bin_lo.push_back(std::move(edges_lo));
    p.bin_hi.push_back(std::move(edges_hi));
  }
  return p;
}

/// Per-row gradient statistics; count 0 excludes a row from the tree.
struct Sample {
  std::vector<double> g;
  std::vector<double> h;
  std::vector<std::uint32_t> count;
};

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct Pending {
  int node = 0;
  std::size_t depth = 0;
  std::vector<std::vector<std::uint32_t>> sorted;  // exact: per-feature ordered rows
  std::vector<std::uint32_t> rows;                 // histogram: member rows
  double G = 0.0, H = 0.0;
  std::size_t C = 0;
  SplitChoice best;
};

class Builder {
 public:
  Builder(const Prepared& data, const Sample& sample, const TreeParams& params, Rng& rng)
      : data_(data), s_(sample), p_(params), rng_(rng) {}

  Tree build() {
    Pending root;
    root.depth = 0;
    const std::size_t N = data_.X.rows;
    if (p_.splitter == Splitter::exact) {
      root.sorted.resize(data_.X.cols);
      for (std::size_t f = 0; f < data_.X.cols; ++f) {
        auto& out = root.sorted[f];
        out.reserve(N);
        for (auto r : data_.order[f])
          if (s_.count[r] > 0) out.push_back(r);
      }
    }
    for (std::uint32_t r = 0; r < N; ++r) {
      if (s_.count[r] == 0) continue;
      if (p_.splitter == Splitter::histogram) root.rows.push_back(r);
      root.G += s_.g[r];
      root.H += s_.h[r];
      root.C += s_.count[r];
    }
    if (root.C == 0) throw DataError("cannot fit a tree on zero rows");
    tree_.nodes.push_back(make_leaf(root));
    root.best = find_split(root);

    std::size_t leaves = 1;
    std::vector<Pending> frontier;
    frontier.push_back(std::move(root));
    const bool leaf_wise = p_.growth == Growth::leaf_wise;
    while (!frontier.empty()) {
      std::size_t pick = 0;
      if (leaf_wise) {
        for (std::size_t i = 1; i < frontier.size(); ++i) {
          const auto& a = frontier[i].best;
          const auto& b = frontier[pick].best;
          if (a.found && (!b.found || a.gain > b.gain)) pick = i;
        }
      }
      Pending node = std::move(frontier[pick]);
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
      if (!node.best.found || (p_.max_leaves > 0 && leaves >= p_.max_leaves)) {
        if (leaf_wise) break;  // best remaining candidate cannot split
        continue;
      }
      auto [left, right] = split(std::move(node));
      ++leaves;
      frontier.push_back(std::move(left));
      frontier.push_back(std::move(right));
    }
    return std::move(tree_);
  }

 private:
  Node make_leaf(const Pending& n) const {
    Node node;
    node.weight = leaf_weight(n.G, n.H, p_.lambda);
    node.cover = n.H;
    node.samples = n.C;
    return node;
  }

  std::vector<std::size_t> candidate_features() {
    const std::size_t F = data_.X.cols;
    std::vector<std::size_t> feats(F);
    std::iota(feats.begin(), feats.end(), std::size_t{0});
    if (p_.features_per_split == 0 || p_.features_per_split >= F) return feats;
    for (std::size_t i = 0; i < p_.features_per_split; ++i) {
      const auto j = i + rng_.below(F - i);
      std::swap(feats[i], feats[j]);
    }
    feats.resize(p_.features_per_split);
    std::sort(feats.begin(), feats.end());
    return feats;
  }

  bool admissible(double HL, std::size_t CL, const Pending& n) const {
    const double HR = n.H - HL;
    const std::size_t CR = n.C - CL;
    return CL >= p_.min_samples_leaf && CR >= p_.min_samples_leaf && HL >= p_.min_child_weight &&
           HR >= p_.min_child_weight;
  }

  void consider(SplitChoice& best, std::size_t f, double threshold, double GL, double HL,
                const Pending& n) const {
    const double gain = split_gain(GL, HL, n.G - GL, n.H - HL, p_.lambda, p_.gamma);
    // Strict comparison keeps the lowest feature, then lowest threshold, on ties.
    if (gain > 0.0 && (!best.found || gain > best.gain)) {
      best.found = true;
      best.feature = static_cast<int>(f);
      best.threshold = threshold;
      best.gain = gain;
    }
  }

  SplitChoice find_split(Pending& n) {
    SplitChoice best;
    if (p_.max_depth > 0 && n.depth >= p_.max_depth) return best;
    if (n.C < 2 * p_.min_samples_leaf) return best;
    const auto feats = candidate_features();
    if (p_.splitter == Splitter::exact) {
      for (std::size_t f : feats) {
        const auto& list = n.sorted[f];
        const auto& x = data_.col[f];
        double GL = 0.0, HL = 0.0;
        std::size_t CL = 0;
        for (std::size_t i = 0; i + 1 < list.size(); ++i) {
          const auto r = list[i];
          GL += s_.g[r];
          HL += s_.h[r];
          CL += s_.count[r];
          const double v = x[r], next = x[list[i + 1]];
          if (v == next || !admissible(HL, CL, n)) continue;
          consider(best, f, midpoint(v, next), GL, HL, n);
        }
      }
    } else {
      std::vector<double> hg, hh;
      std::vector<std::size_t> hc;
      for (std::size_t f : feats) {
        const std::size_t nb = data_.bin_lo[f].size();
        hg.assign(nb, 0.0);
        hh.assign(nb, 0.0);
        hc.assign(nb, 0);
        const auto& bins = data_.bin[f];
        for (auto r : n.rows) {
          const auto b = bins[r];
          hg[b] += s_.g[r];
          hh[b] += s_.h[r];
          hc[b] += s_.count[r];
        }
        double GL = 0.0, HL = 0.0;
        std::size_t CL = 0;
        std::ptrdiff_t prev = -1;
        for (std::size_t b = 0; b < nb; ++b) {
          if (hc[b] == 0) continue;
          if (prev >= 0 && admissible(HL, CL, n))
            consider(best, f, midpoint(data_.bin_hi[f][static_cast<std::size_t>(prev)], data_.bin_lo[f][b]),
                     GL, HL, n);
          GL += hg[b];
          HL += hh[b];
          CL += hc[b];
          prev = static_cast<std::ptrdiff_t>(b);
        }
      }
    }
    return best;
  }

  std::pair<Pending, Pending> split(Pending&& n) {
    const auto f = static_cast<std::size_t>(n.best.feature);
    const double thr = n.best.threshold;
    const auto& x = data_.col[f];
    Pending left, right;
    left.depth = right.depth = n.depth + 1;
    auto route = [&](std::uint32_t r) {
      Pending& side = x[r] <= thr ? left : right;
      side.G += s_.g[r];
      side.H += s_.h[r];
      side.C += s_.count[r];
    };
    if (p_.splitter == Splitter::exact) {
      for (auto r : n.sorted[0]) route(r);
      left.sorted.resize(n.sorted.size());
      right.sorted.resize(n.sorted.size());
      for (std::size_t k = 0; k < n.sorted.size(); ++k) {
        auto& src = n.sorted[k];
        for (auto r : src) (x[r] <= thr ? left : right).sorted[k].push_back(r);
        std::vector<std::uint32_t>().swap(src);
      }
    } else {
      for (auto r : n.rows) {
        route(r);
        (x[r] <= thr ? left : right).rows.push_back(r);
      }
    }
    left.node = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(make_leaf(left));
    right.node = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(make_leaf(right));
    Node& parent = tree_.nodes[static_cast<std::size_t>(n.node)];
    parent.feature = n.best.feature;
    parent.threshold = thr;
    parent.gain = n.best.gain;
    parent.left = left.node;
    parent.right = right.node;
    left.best = find_split(left);
    right.best = find_split(right);
    return {std::move(left), std::move(right)};
  }

  const Prepared& data_;
  const Sample& s_;
  const TreeParams& p_;
  Rng& rng_;
  Tree tree_;
};

void require_shape(MatrixView X, std::size_t n, const char* what) {
  if (X.rows == 0 || X.cols == 0) throw DataError(std::string(what) + ": empty input");
  if (n != X.rows)
    throw DataError(std::string(what) + ": " + std::to_string(n) + " targets for " +
                    std::to_string(X.rows) + " rows");
}

double tree_penalty(const Tree& t, double scale, double lambda, double gamma) {
  double s = 0.0;
  std::size_t leaves = 0;
  for (const auto& n : t.nodes)
    if (n.is_leaf()) {
      ++leaves;
      s += 0.5 * lambda * (scale * n.weight) * (scale * n.weight);
    }
  return s + gamma * static_cast<double>(leaves);
}

std::vector<std::string> default_names(std::vector<std::string> names, std::size_t cols) {
  if (names.empty())
    for (std::size_t f = 0; f < cols; ++f) names.push_back("f" + std::to_string(f));
  if (names.size() != cols) throw DataError("feature name count does not match column count");
  return names;
}

}  // namespace

MatrixView::MatrixView(std::span<const double> d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {
  if (d.size() != r * c) throw DataError("matrix view: data size does not match shape");
}

double Tree::predict(std::span<const double> row) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].weight;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.is_leaf(); }));
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

void TreeParams::validate() const {
  if (lambda < 0.0) throw ParameterError("lambda must be >= 0");
  if (gamma < 0.0) throw ParameterError("gamma must be >= 0");
  if (splitter == Splitter::histogram && (bins < 2 || bins > 65535))
    throw ParameterError("histogram bins must lie in [2, 65535]");
  if (min_samples_leaf == 0) throw ParameterError("min_samples_leaf must be >= 1");
}

void BoostParams::validate() const {
  tree.validate();
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ParameterError("learning rate must lie in (0, 1]");
  if (goss && !(goss->top > 0.0 && goss->other > 0.0 && goss->top + goss->other <= 1.0))
    throw ParameterError("GOSS fractions need 0 < a, b and a + b <= 1");
}

void ForestParams::validate() const {
  if (n_trees == 0) throw ParameterError("forest needs at least one tree");
  if (min_samples_leaf == 0) throw ParameterError("min_samples_leaf must be >= 1");
}

Gradients gradients_squared_loss(std::span<const double> y, std::span<const double> y_hat) {
  if (y.size() != y_hat.size()) throw DataError("gradient inputs differ in length");
  Gradients out{std::vector<double>(y.size()), std::vector<double>(y.size(), 2.0)};
  for (std::size_t i = 0; i < y.size(); ++i) out.g[i] = 2.0 * (y_hat[i] - y[i]);
  return out;
}

double leaf_weight(double G, double H, double lambda) {
  if (!(H + lambda > 0.0)) throw ParameterError("degenerate leaf: H + lambda must be > 0");
  return -G / (H + lambda);
}

double split_gain(double GL, double HL, double GR, double HR, double lambda, double gamma) {
  if (!(HL + lambda > 0.0) || !(HR + lambda > 0.0))
    throw ParameterError("degenerate split: child H + lambda must be > 0");
  const double G = GL + GR, H = HL + HR;
  return 0.5 * (GL * GL / (HL + lambda) + GR * GR / (HR + lambda) - G * G / (H + lambda)) - gamma;
}

Tree fit_tree(MatrixView X, std::span<const double> g, std::span<const double> h, const TreeParams& params) {
  params.validate();
  require_shape(X, g.size(), "fit_tree");
  if (h.size() != g.size()) throw DataError("fit_tree: g and h differ in length");
  const auto data = prepare(X, params.splitter, params.bins);
  Sample s{{g.begin(), g.end()}, {h.begin(), h.end()}, std::vector<std::uint32_t>(g.size(), 1)};
  Rng rng(derive_seed(params.seed, "tree"));
  return Builder(data, s, params, rng).build();
}

BoostedModel newton_boost_fit(MatrixView X, std::span<const double> y, const BoostParams& params,
                              std::vector<std::string> feature_names) {
  params.validate();
  require_shape(X, y.size(), "newton_boost_fit");
  const std::size_t N = X.rows;
  BoostedModel model;
  model.feature_names = default_names(std::move(feature_names), X.cols);
  model.learning_rate = params.learning_rate;
  model.lambda = params.tree.lambda;
  model.gamma = params.tree.gamma;
  model.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(N);

  const auto data = prepare(X, params.tree.splitter, params.tree.bins);
  std::vector<double> pred(N, model.base_score);
  auto loss = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += (y[i] - pred[i]) * (y[i] - pred[i]);
    return s;
  };
  double penalty = 0.0;
  model.objective_history.push_back(loss());

  Rng rng(derive_seed(params.seed, "newton_boost"));
  Sample s;
  s.count.assign(N, 1);
  std::vector<std::uint32_t> by_grad(N);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    auto grads = gradients_squared_loss(y, pred);
    s.g = std::move(grads.g);
    s.h = std::move(grads.h);
    if (params.goss) {
      const auto n_top = static_cast<std::size_t>(params.goss->top * static_cast<double>(N));
      const auto n_other = static_cast<std::size_t>(params.goss->other * static_cast<double>(N));
      const double amplify = (1.0 - params.goss->top) / params.goss->other;
      std::iota(by_grad.begin(), by_grad.end(), 0u);
      std::stable_sort(by_grad.begin(), by_grad.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return std::abs(s.g[a]) > std::abs(s.g[b]); });
      std::fill(s.count.begin(), s.count.end(), 0u);
      for (std::size_t i = 0; i < n_top; ++i) s.count[by_grad[i]] = 1;
      const std::size_t rest = N - n_top;
      for (std::size_t i = 0; i < std::min(n_other, rest); ++i) {
        const auto j = n_top + i + rng.below(rest - i);
        std::swap(by_grad[n_top + i], by_grad[j]);
        const auto r = by_grad[n_top + i];
        s.count[r] = 1;
        s.g[r] *= amplify;
        s.h[r] *= amplify;
      }
      if (n_top + std::min(n_other, rest) == 0) s.count[by_grad[0]] = 1;
    }
    TreeParams tp = params.tree;
    tp.seed = derive_seed(params.seed, t);
    Rng tree_rng(tp.seed);
    Tree tree = Builder(data, s, tp, tree_rng).build();
    for (std::size_t i = 0; i < N; ++i) pred[i] += params.learning_rate * tree.predict(X.row(i));
    penalty += tree_penalty(tree, params.learning_rate, tp.lambda, tp.gamma);
    model.objective_history.push_back(loss() + penalty);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

ForestModel fit_random_forest(MatrixView X, std::span<const double> y, const ForestParams& params,
                              std::vector<std::string> feature_names) {
  params.validate();
  require_shape(X, y.size(), "fit_random_forest");
  const std::size_t N = X.rows;
  ForestModel model;
  model.feature_names = default_names(std::move(feature_names), X.cols);
  model.features_per_split =
      params.features_per_split > 0 ? std::min(params.features_per_split, X.cols) : std::max<std::size_t>(1, X.cols / 3);
  const auto data = prepare(X, Splitter::exact, 0);

  TreeParams tp;
  tp.lambda = 0.0;
  tp.gamma = 0.0;
  tp.max_depth = params.max_depth;
  tp.min_samples_leaf = params.min_samples_leaf;
  tp.features_per_split = model.features_per_split;
  tp.splitter = Splitter::exact;
  tp.growth = Growth::level_wise;

  model.trees.resize(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) model.tree_seeds.push_back(derive_seed(params.seed, t));
  parallel_for(params.n_trees, params.threads, [&](std::size_t t) {
    Rng rng(model.tree_seeds[t]);
    Sample s;
    s.count.assign(N, params.bootstrap ? 0u : 1u);
    if (params.bootstrap)
      for (std::size_t i = 0; i < N; ++i) ++s.count[rng.below(N)];
    s.g.resize(N);
    s.h.resize(N);
    // Squared-error CART as a Newton tree: gain = SSE reduction, leaf = mean.
    for (std::size_t i = 0; i < N; ++i) {
      s.g[i] = -2.0 * y[i] * s.count[i];
      s.h[i] = 2.0 * s.count[i];
    }
    model.trees[t] = Builder(data, s, tp, rng).build();
  });
  return model;
}

std::vector<double> predict(const BoostedModel& model, MatrixView X) {
  if (!model.feature_names.empty() && X.cols != model.feature_names.size())
    throw DataError("predict: model expects " + std::to_string(model.feature_names.size()) + " features, got " +
                    std::to_string(X.cols));
  std::vector<double> out(X.rows, model.base_score);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto row = X.row(i);
    double s = 0.0;
    for (const auto& t : model.trees) s += t.predict(row);
    out[i] += model.learning_rate * s;
  }
  return out;
}

std::vector<double> predict(const ForestModel& model, MatrixView X) {
  if (!model.feature_names.empty() && X.cols != model.feature_names.size())
    throw DataError("predict: model expects " + std::to_string(model.feature_names.size()) + " features, got " +
                    std::to_string(X.cols));
  if (model.trees.empty()) throw DataError("predict: forest has no trees");
  std::vector<double> out(X.rows, 0.0);
  for (std::size_t i = 0; i < X.rows; ++i) {
    const auto row = X.row(i);
    double s = 0.0;
    for (const auto& t : model.trees) s += t.predict(row);
    out[i] = s / static_cast<double>(model.trees.size());
  }
  return out;
}

std::string to_string(ImportanceKind kind) {
  switch (kind) {
    case ImportanceKind::gain: return "gain";
    case ImportanceKind::total_gain: return "total_gain";
    case ImportanceKind::split_count: return "split_count";
    case ImportanceKind::impurity_decrease: return "impurity_decrease";
  }
  return "unknown";
}

namespace {

ImportanceVector tally(const std::vector<Tree>& trees, const std::vector<std::string>& names,
                       ImportanceKind kind) {
  ImportanceVector v{kind, names, std::vector<double>(names.size(), 0.0)};
  std::vector<double> gain(names.size(), 0.0);
  std::vector<double> count(names.size(), 0.0);
  for (const auto& t : trees)
    for (const auto& n : t.nodes)
      if (!n.is_leaf()) {
        gain[static_cast<std::size_t>(n.feature)] += n.gain;
        count[static_cast<std::size_t>(n.feature)] += 1.0;
      }
  switch (kind) {
    case ImportanceKind::gain:
      for (std::size_t f = 0; f < names.size(); ++f) v.scores[f] = count[f] > 0 ? gain[f] / count[f] : 0.0;
      break;
    case ImportanceKind::total_gain: v.scores = gain; break;
    case ImportanceKind::split_count: v.scores = count; break;
    case ImportanceKind::impurity_decrease: {
      const double total = std::accumulate(gain.begin(), gain.end(), 0.0);
      for (std::size_t f = 0; f < names.size(); ++f) v.scores[f] = total > 0 ? gain[f] / total : 0.0;
      break;
    }
  }
  return v;
}

}  // namespace

ImportanceVector importance(const BoostedModel& model, ImportanceKind kind) {
  if (kind == ImportanceKind::impurity_decrease)
    throw ParameterError("impurity_decrease importance applies to forests, not boosted models");
  return tally(model.trees, model.feature_names, kind);
}

ImportanceVector importance(const ForestModel& model, ImportanceKind kind) {
  if (kind == ImportanceKind::gain || kind == ImportanceKind::total_gain)
    throw ParameterError("gain importance applies to boosted models, not forests");
  return tally(model.trees, model.feature_names, kind);
}

std::string importance_csv(const ImportanceVector& v) {
  std::ostringstream out;
  out.precision(17);
  out << "feature,score\n";
  for (std::size_t f = 0; f < v.scores.size(); ++f) out << v.feature_names[f] << ',' << v.scores[f] << '\n';
  return out.str();
}

namespace {

nlohmann::json node_json(const Tree& t, std::size_t i) {
  const auto& n = t.nodes[i];
  if (n.is_leaf()) return {{"leaf", n.weight}, {"cover", n.cover}, {"samples", n.samples}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"gain", n.gain},
          {"weight", n.weight},
          {"cover", n.cover},
          {"samples", n.samples},
          {"left", node_json(t, static_cast<std::size_t>(n.left))},
          {"right", node_json(t, static_cast<std::size_t>(n.right))}};
}

int node_from_json(const nlohmann::json& j, Tree& t) {
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  Node n;
  n.cover = j.value("cover", 0.0);
  n.samples = j.value("samples", std::size_t{0});
  if (j.contains("leaf")) {
    n.weight = j.at("leaf").get<double>();
    t.nodes[static_cast<std::size_t>(id)] = n;
    return id;
  }
  n.feature = j.at("feature").get<int>();
  n.threshold = j.at("threshold").get<double>();
  n.gain = j.value("gain", 0.0);
  n.weight = j.value("weight", 0.0);
  n.left = node_from_json(j.at("left"), t);
  n.right = node_from_json(j.at("right"), t);
  t.nodes[static_cast<std::size_t>(id)] = n;
  return id;
}

Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  node_from_json(j, t);
  return t;
}

void check_version(const nlohmann::json& doc, const char* type) {
  if (doc.value("format_version", 0) != kModelFormatVersion || doc.value("type", "") != type)
    throw DataError(std::string("unsupported model document; expected ") + type + " v" +
                    std::to_string(kModelFormatVersion));
}

}  // namespace

nlohmann::json to_json(const Tree& tree) { return node_json(tree, 0); }

nlohmann::json to_json(const BoostedModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) trees.push_back(to_json(t));
  return {{"format_version", kModelFormatVersion},
          {"type", "boosted"},
          {"base_score", m.base_score},
          {"learning_rate", m.learning_rate},
          {"lambda", m.lambda},
          {"gamma", m.gamma},
          {"feature_names", m.feature_names},
          {"trees", trees}};
}

nlohmann::json to_json(const ForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) trees.push_back(to_json(t));
  return {{"format_version", kModelFormatVersion},
          {"type", "forest"},
          {"features_per_split", m.features_per_split},
          {"tree_seeds", m.tree_seeds},
          {"feature_names", m.feature_names},
          {"trees", trees}};
}

BoostedModel boosted_from_json(const nlohmann::json& doc) {
  check_version(doc, "boosted");
  BoostedModel m;
  m.base_score = doc.at("base_score").get<double>();
  m.learning_rate = doc.at("learning_rate").get<double>();
  m.lambda = doc.value("lambda", 0.0);
  m.gamma = doc.value("gamma", 0.0);
  m.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  for (const auto& t : doc.at("trees")) m.trees.push_back(tree_from_json(t));
  return m;
}

ForestModel forest_from_json(const nlohmann::json& doc) {
  check_version(doc, "forest");
  ForestModel m;
  m.features_per_split = doc.at("features_per_split").get<std::size_t>();
  m.tree_seeds = doc.at("tree_seeds").get<std::vector<std::uint64_t>>();
  m.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
  for (const auto& t : doc.at("trees")) m.trees.push_back(tree_from_json(t));
  return m;
}

}  // namespace recapfx::trees
