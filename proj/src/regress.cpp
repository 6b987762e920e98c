// SPDX-License-Identifier: Apache-2.0
#include "tof/regress.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tof {

const char* quantity_name(Quantity q) {
  switch (q) {
    case Quantity::depth: return "t";
    case Quantity::rho: return "rho";
    case Quantity::lambda: return "lambda";
    case Quantity::sigma: return "sigma";
    default: return "gamma";
  }
}

Quantity quantity_from_name(const std::string& name) {
  if (name == "t" || name == "depth") return Quantity::depth;
  if (name == "rho") return Quantity::rho;
  if (name == "lambda") return Quantity::lambda;
  if (name == "sigma") return Quantity::sigma;
  if (name == "gamma") return Quantity::gamma;
  throw std::invalid_argument("unknown quantity: " + name);
}

const char* leaf_kind_name(LeafKind k) {
  switch (k) {
    case LeafKind::constant: return "constant";
    case LeafKind::linear: return "linear";
    default: return "quadratic";
  }
}

LeafKind leaf_kind_from_name(const std::string& name) {
  if (name == "constant") return LeafKind::constant;
  if (name == "linear") return LeafKind::linear;
  if (name == "quadratic") return LeafKind::quadratic;
  throw std::invalid_argument("unknown leaf kind: " + name);
}

int leaf_coefficient_count(LeafKind kind, int n, bool pixel_extended) {
  int pix = pixel_extended ? 2 : 0;
  switch (kind) {
    case LeafKind::constant: return 1;
    case LeafKind::linear: return 1 + n + pix;
    default: return 1 + n + n * (n + 1) / 2 + pix;
  }
}

TrainingSet select_quantity(const LabeledBatch& batch, Quantity q) {
  TrainingSet out;
  out.features = batch.features;
  out.labels = batch.labels.col(static_cast<int>(q));
  out.pixel_extended = batch.pixel_extended;
  return out;
}

namespace {

void fill_labels(Eigen::MatrixXd& labels, Eigen::Index row, const Estimate& est) {
  labels(row, 0) = est.theta.t;
  labels(row, 1) = est.theta.rho;
  labels(row, 2) = est.theta.lambda;
  labels(row, 3) = est.sigma_t;
  labels(row, 4) = est.gamma;
}

bool finite_row(const Eigen::MatrixXd& m, Eigen::Index row) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (!std::isfinite(m(row, j))) return false;
  return true;
}

LabeledBatch compact_batch(Eigen::MatrixXd features, Eigen::MatrixXd labels,
                           const std::vector<char>& ok, bool pixel_extended) {
  LabeledBatch out;
  out.pixel_extended = pixel_extended;
  Eigen::Index kept = 0;
  for (char c : ok) kept += c ? 1 : 0;
  out.features.resize(kept, features.cols());
  out.labels.resize(kept, labels.cols());
  Eigen::Index at = 0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (!ok[static_cast<std::size_t>(i)]) continue;
    out.features.row(at) = features.row(i);
    out.labels.row(at) = labels.row(i);
    ++at;
  }
  out.failures = static_cast<int>(features.rows() - kept);
  return out;
}

}  // namespace

LabeledBatch generate_training_batch(const Inference& inference, int count, Rng& rng,
                                     const GenerateOptions& opts) {
  if (count < 1) throw std::invalid_argument("training sample count must be >= 1");
  const int n = inference.curves().channel_count();
  Eigen::MatrixXd features(count, n);
  Eigen::MatrixXd labels(count, 5);
  std::vector<char> ok(static_cast<std::size_t>(count), 0);
  std::uint64_t base = rng.next_u64();

  parallel_for(static_cast<std::size_t>(count), opts.workers, [&](std::size_t i) {
    Rng local = Rng(base).fork(i);
    ImagingConditions truth = inference.priors().sample(local, inference.options().kind);
    Eigen::VectorXd response =
        sample_response(inference.curves(), truth, inference.noise(), local);
    features.row(static_cast<Eigen::Index>(i)) = response;
    try {
      Estimate est = inference.run(opts.method, response, local);
      fill_labels(labels, static_cast<Eigen::Index>(i), est);
      ok[i] = finite_row(labels, static_cast<Eigen::Index>(i)) ? 1 : 0;
    } catch (const std::exception&) {
      ok[i] = 0;
    }
  });
  return compact_batch(std::move(features), std::move(labels), ok, false);
}

LabeledBatch generate_training_batch(const CurveFamily& family, const NoiseParams& noise,
                                     const PriorBox& priors, const InferenceOptions& iopts,
                                     int count, Rng& rng, const GenerateOptions& opts) {
  if (count < 1) throw std::invalid_argument("training sample count must be >= 1");
  const int n = family.left().channel_count();
  Eigen::MatrixXd features(count, n + 2);
  Eigen::MatrixXd labels(count, 5);
  std::vector<char> ok(static_cast<std::size_t>(count), 0);
  std::uint64_t base = rng.next_u64();

  parallel_for(static_cast<std::size_t>(count), opts.workers, [&](std::size_t i) {
    Rng local = Rng(base).fork(i);
    double x = local.uniform();
    double y = local.uniform();
    ResponseCurveSet curves = family.at(x);
    ImagingConditions truth = priors.sample(local, iopts.kind);
    Eigen::VectorXd response = sample_response(curves, truth, noise, local);
    features(static_cast<Eigen::Index>(i), n) = x;
    features(static_cast<Eigen::Index>(i), n + 1) = y;
    features.row(static_cast<Eigen::Index>(i)).head(n) = response;
    try {
      Inference inf(curves, noise, priors, iopts);
      Estimate est = inf.run(opts.method, response, local);
      fill_labels(labels, static_cast<Eigen::Index>(i), est);
      ok[i] = finite_row(labels, static_cast<Eigen::Index>(i)) ? 1 : 0;
    } catch (const std::exception&) {
      ok[i] = 0;
    }
  });
  return compact_batch(std::move(features), std::move(labels), ok, true);
}

// ---------------------------------------------------------------------------
// CART training
// ---------------------------------------------------------------------------

namespace {

// Leaf feature expansion. Responses get the quadratic terms; pixel
// coordinates (the trailing two features when extended) stay linear.
void expand_leaf_features(const Eigen::Ref<const Eigen::RowVectorXd>& x, int n_responses,
                          bool pixel_extended, LeafKind kind, Eigen::VectorXd& phi) {
  int p = leaf_coefficient_count(kind, n_responses, pixel_extended);
  phi.resize(p);
  phi[0] = 1.0;
  if (kind == LeafKind::constant) return;
  int at = 1;
  for (int i = 0; i < n_responses; ++i) phi[at++] = x[i];
  if (kind == LeafKind::quadratic) {
    for (int i = 0; i < n_responses; ++i)
      for (int j = i; j < n_responses; ++j) phi[at++] = x[i] * x[j];
  }
  if (pixel_extended) {
    phi[at++] = x[n_responses];
    phi[at++] = x[n_responses + 1];
  }
}

struct Builder {
  const TrainingSet& data;
  const TrainOptions& opts;
  int n_responses;
  LeafKind leaf_kind;
  int max_depth;
  std::vector<RegressionTree::Node> nodes;

  Eigen::VectorXd fit_leaf_coef(const std::vector<int>& idx, LeafKind kind) const {
    int p = leaf_coefficient_count(kind, n_responses, data.pixel_extended);
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(idx.size()), p);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(idx.size()));
    Eigen::VectorXd row;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      expand_leaf_features(data.features.row(idx[r]), n_responses, data.pixel_extended, kind, row);
      phi.row(static_cast<Eigen::Index>(r)) = row;
      rhs[static_cast<Eigen::Index>(r)] = data.labels[idx[r]];
    }
    return phi.colPivHouseholderQr().solve(rhs);
  }

  int make_leaf(const std::vector<int>& idx) {
    // degrade quadratic -> linear -> constant until the occupancy rule holds
    LeafKind kind = leaf_kind;
    while (kind != LeafKind::constant &&
           static_cast<int>(idx.size()) <
               opts.min_leaf_multiplier *
                   leaf_coefficient_count(kind, n_responses, data.pixel_extended)) {
      kind = kind == LeafKind::quadratic ? LeafKind::linear : LeafKind::constant;
    }
    RegressionTree::Node node;
    node.kind = kind;
    if (kind == LeafKind::constant) {
      double mean = 0.0;
      for (int i : idx) mean += data.labels[i];
      node.coef = Eigen::VectorXd::Constant(1, idx.empty() ? 0.0 : mean / idx.size());
    } else {
      node.coef = fit_leaf_coef(idx, kind);
    }
    nodes.push_back(std::move(node));
    return static_cast<int>(nodes.size()) - 1;
  }

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double cost = std::numeric_limits<double>::infinity();
  };

  // Exact variance-reduction search over sorted candidate thresholds of one
  // feature; candidates are midpoints between adjacent distinct values.
  void search_feature(const std::vector<int>& idx, int feature, Split& best) const {
    std::vector<std::pair<double, double>> vals;  // (feature value, label)
    vals.reserve(idx.size());
    for (int i : idx) vals.emplace_back(data.features(i, feature), data.labels[i]);
    std::sort(vals.begin(), vals.end());
    const auto m = vals.size();
    if (vals.front().first == vals.back().first) return;

    std::vector<double> sum(m + 1, 0.0), sum2(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      sum[i + 1] = sum[i] + vals[i].second;
      sum2[i + 1] = sum2[i] + vals[i].second * vals[i].second;
    }
    auto sse = [&](std::size_t lo, std::size_t hi) {  // [lo, hi)
      double cnt = static_cast<double>(hi - lo);
      double s = sum[hi] - sum[lo];
      return (sum2[hi] - sum2[lo]) - s * s / cnt;
    };

    const auto min_child = static_cast<std::size_t>(opts.min_node_size);
    auto consider = [&](std::size_t cut) {  // left gets [0, cut)
      if (cut < min_child || m - cut < min_child) return;
      double threshold = 0.5 * (vals[cut - 1].first + vals[cut].first);
      // midpoints that round onto a boundary value cannot separate the node
      if (!(vals[cut - 1].first < threshold) || !(threshold < vals[cut].first)) return;
      double cost = sse(0, cut) + sse(cut, m);
      if (cost < best.cost) best = {feature, threshold, cost};
    };

    if (static_cast<int>(m) <= opts.exact_threshold_limit) {
      for (std::size_t cut = 1; cut < m; ++cut) {
        if (vals[cut].first == vals[cut - 1].first) continue;
        consider(cut);
      }
    } else {
      int q = opts.quantile_candidates;
      std::size_t prev_cut = 0;
      for (int c = 1; c <= q; ++c) {
        auto cut = static_cast<std::size_t>(static_cast<double>(m) * c / (q + 1));
        if (cut == prev_cut || cut == 0 || cut >= m) continue;
        // move cut forward past ties so the threshold separates values
        while (cut < m && vals[cut].first == vals[cut - 1].first) ++cut;
        if (cut >= m) break;
        prev_cut = cut;
        consider(cut);
      }
    }
  }

  int build(std::vector<int>& idx, int depth) {
    bool can_split = depth < max_depth &&
                     static_cast<int>(idx.size()) >= 2 * opts.min_node_size;
    Split best;
    if (can_split) {
      int features = n_responses + (data.pixel_extended ? 2 : 0);
      for (int f = 0; f < features; ++f) search_feature(idx, f, best);
    }
    if (best.feature < 0) return make_leaf(idx);

    std::vector<int> left, right;
    left.reserve(idx.size());
    right.reserve(idx.size());
    for (int i : idx) {
      if (data.features(i, best.feature) <= best.threshold)
        left.push_back(i);
      else
        right.push_back(i);
    }
    if (left.empty() || right.empty()) return make_leaf(idx);
    idx.clear();
    idx.shrink_to_fit();

    RegressionTree::Node node;
    node.feature = best.feature;
    node.threshold = best.threshold;
    nodes.push_back(node);
    auto at = static_cast<int>(nodes.size()) - 1;
    int l = build(left, depth + 1);
    int r = build(right, depth + 1);
    nodes[static_cast<std::size_t>(at)].left = l;
    nodes[static_cast<std::size_t>(at)].right = r;
    return at;
  }
};

}  // namespace

RegressionTree::RegressionTree(std::vector<Node> nodes, int max_depth, int n_responses,
                               bool pixel_extended, LeafKind leaf_kind)
    : nodes_(std::move(nodes)),
      max_depth_(max_depth),
      n_responses_(n_responses),
      pixel_extended_(pixel_extended),
      leaf_kind_(leaf_kind) {
  if (nodes_.empty()) throw std::invalid_argument("tree needs at least one node");
}

double RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (x.size() != feature_count())
    throw std::invalid_argument("feature dimension mismatch in tree evaluation");
  const Node* node = &nodes_.front();
  while (node->feature >= 0)
    node = &nodes_[static_cast<std::size_t>(x[node->feature] <= node->threshold ? node->left
                                                                                : node->right)];
  if (node->kind == LeafKind::constant) return node->coef[0];
  Eigen::VectorXd phi;
  expand_leaf_features(x, n_responses_, pixel_extended_, node->kind, phi);
  return node->coef.dot(phi);
}

Eigen::VectorXd RegressionTree::predict_all(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

RegressionTree train_tree(const TrainingSet& data, int max_depth, LeafKind leaf_kind,
                          const TrainOptions& opts) {
  if (data.features.rows() == 0) throw std::invalid_argument("empty training set");
  if (data.features.rows() != data.labels.size())
    throw std::invalid_argument("feature/label row mismatch");
  if (max_depth < 0) throw std::invalid_argument("tree depth must be >= 0");
  for (Eigen::Index i = 0; i < data.labels.size(); ++i)
    if (!std::isfinite(data.labels[i])) throw std::invalid_argument("non-finite training label");

  int n_responses = static_cast<int>(data.features.cols()) - (data.pixel_extended ? 2 : 0);
  TrainOptions effective = opts;
  if (effective.min_node_size <= 0) {
    effective.min_node_size = std::max(
        8, effective.min_leaf_multiplier *
               leaf_coefficient_count(LeafKind::linear, n_responses, data.pixel_extended));
  }
  Builder builder{data, effective, n_responses, leaf_kind, max_depth, {}};
  std::vector<int> idx(static_cast<std::size_t>(data.features.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  builder.build(idx, 0);
  RegressionTree tree(std::move(builder.nodes), max_depth, n_responses, data.pixel_extended,
                      leaf_kind);
  return tree;
}

double Forest::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double acc = 0.0;
  for (const auto& t : trees) acc += t.predict(x);
  return acc / static_cast<double>(trees.size());
}

Forest train_forest(const TrainingSet& data, int tree_count, int max_depth, LeafKind leaf_kind,
                    Rng& rng, const TrainOptions& opts) {
  if (tree_count < 1) throw std::invalid_argument("forest needs at least one tree");
  Forest forest;
  const auto rows = data.features.rows();
  for (int t = 0; t < tree_count; ++t) {
    TrainingSet boot;
    boot.pixel_extended = data.pixel_extended;
    boot.features.resize(rows, data.features.cols());
    boot.labels.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      auto pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(rows)));
      boot.features.row(i) = data.features.row(pick);
      boot.labels[i] = data.labels[pick];
    }
    forest.trees.push_back(train_tree(boot, max_depth, leaf_kind, opts));
  }
  return forest;
}

ErrorReport tree_error_report(const RegressionTree& tree, const Eigen::VectorXd& oracle_labels,
                              const Eigen::MatrixXd& features, int bin_count) {
  if (features.rows() == 0) throw std::invalid_argument("empty test set");
  if (features.rows() != oracle_labels.size())
    throw std::invalid_argument("oracle/feature row mismatch");
  Eigen::VectorXd pred = tree.predict_all(features);
  std::vector<double> abs_err(static_cast<std::size_t>(pred.size()));
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    abs_err[static_cast<std::size_t>(i)] = std::abs(pred[i] - oracle_labels[i]);

  ErrorReport report;
  report.mean_abs_error =
      std::accumulate(abs_err.begin(), abs_err.end(), 0.0) / static_cast<double>(abs_err.size());
  report.overall = compute_quantiles(abs_err);
  double lo = oracle_labels.minCoeff();
  double hi = oracle_labels.maxCoeff();
  if (!(hi > lo)) {
    report.bins.push_back({lo, hi, static_cast<int>(abs_err.size()), report.overall});
    return report;
  }
  for (int b = 0; b < bin_count; ++b) {
    double blo = lo + (hi - lo) * b / bin_count;
    double bhi = lo + (hi - lo) * (b + 1) / bin_count;
    std::vector<double> errs;
    for (Eigen::Index i = 0; i < oracle_labels.size(); ++i) {
      double y = oracle_labels[i];
      bool in = b + 1 == bin_count ? (y >= blo && y <= bhi) : (y >= blo && y < bhi);
      if (in) errs.push_back(abs_err[static_cast<std::size_t>(i)]);
    }
    ErrorReport::Bin bin{blo, bhi, static_cast<int>(errs.size()), compute_quantiles(errs)};
    report.bins.push_back(bin);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void write_tree(std::ostream& os, const RegressionTree& tree) {
  os << "toftree 1\n";
  os << "version " << tree.meta.tool_version << "\n";
  os << "config_hash " << tree.meta.config_hash << "\n";
  os << "seed " << tree.meta.seed << "\n";
  os << "n " << tree.n_responses() << "\n";
  os << "pixel_extended " << (tree.pixel_extended() ? 1 : 0) << "\n";
  os << "leaf " << leaf_kind_name(tree.leaf_kind()) << "\n";
  os << "depth " << tree.max_depth() << "\n";
  os << "nodes " << tree.nodes().size() << "\n";
  for (const auto& node : tree.nodes()) {
    if (node.feature >= 0) {
      os << "split " << node.feature << " " << fmt_g17(node.threshold) << " " << node.left << " "
         << node.right << "\n";
    } else {
      os << "leaf " << leaf_kind_name(node.kind) << " " << node.coef.size();
      for (Eigen::Index i = 0; i < node.coef.size(); ++i) os << " " << fmt_g17(node.coef[i]);
      os << "\n";
    }
  }
  os << "end\n";
}

namespace {

std::vector<std::string> tree_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(std::string("tree file truncated: ") + what);
  auto tokens = split_ws(line);
  if (tokens.empty()) throw std::runtime_error(std::string("tree file: empty line at ") + what);
  return tokens;
}

std::vector<std::string> expect_key(std::istream& is, const std::string& key) {
  auto tokens = tree_line(is, key.c_str());
  if (tokens[0] != key) throw std::runtime_error("tree file: expected '" + key + "'");
  return tokens;
}

}  // namespace

RegressionTree read_tree(std::istream& is) {
  auto magic = expect_key(is, "toftree");
  if (magic.size() != 2 || magic[1] != "1") throw std::runtime_error("unsupported tree file");
  FileMeta meta;
  meta.tool_version = expect_key(is, "version").at(1);
  meta.config_hash = expect_key(is, "config_hash").at(1);
  meta.seed = expect_key(is, "seed").at(1);
  int n = std::stoi(expect_key(is, "n").at(1));
  bool pixel_extended = std::stoi(expect_key(is, "pixel_extended").at(1)) != 0;
  LeafKind leaf_kind = leaf_kind_from_name(expect_key(is, "leaf").at(1));
  int depth = std::stoi(expect_key(is, "depth").at(1));
  auto count = static_cast<std::size_t>(std::stoul(expect_key(is, "nodes").at(1)));

  std::vector<RegressionTree::Node> nodes;
  nodes.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    auto tokens = tree_line(is, "node");
    RegressionTree::Node node;
    if (tokens[0] == "split") {
      node.feature = std::stoi(tokens.at(1));
      node.threshold = std::stod(tokens.at(2));
      node.left = std::stoi(tokens.at(3));
      node.right = std::stoi(tokens.at(4));
    } else if (tokens[0] == "leaf") {
      node.kind = leaf_kind_from_name(tokens.at(1));
      auto m = static_cast<Eigen::Index>(std::stoul(tokens.at(2)));
      if (static_cast<Eigen::Index>(tokens.size()) != m + 3)
        throw std::runtime_error("tree file: coefficient count mismatch");
      node.coef.resize(m);
      for (Eigen::Index i = 0; i < m; ++i)
        node.coef[i] = std::stod(tokens.at(static_cast<std::size_t>(i + 3)));
    } else {
      throw std::runtime_error("tree file: unknown node tag " + tokens[0]);
    }
    nodes.push_back(std::move(node));
  }
  expect_key(is, "end");
  RegressionTree tree(std::move(nodes), depth, n, pixel_extended, leaf_kind);
  tree.meta = meta;
  return tree;
}

void save_tree(const std::string& path, const RegressionTree& tree) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_tree(os, tree);
}

RegressionTree load_tree(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open tree file: " + path);
  return read_tree(is);
}

}  // namespace tof
