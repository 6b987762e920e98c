// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "tof/inference.hpp"

namespace tof {

enum class Quantity { depth, rho, lambda, sigma, gamma };
const char* quantity_name(Quantity q);
Quantity quantity_from_name(const std::string& name);

// Labeled rows produced by slow inference on model samples: features are the
// observed responses (plus pixel coordinates when curve families are used),
// labels are the estimator outputs for all five regressed quantities.
struct LabeledBatch {
  Eigen::MatrixXd features;  // rows x (n [+2])
  Eigen::MatrixXd labels;    // rows x 5 (t, rho, lambda, sigma, gamma)
  bool pixel_extended = false;
  int failures = 0;
};

struct TrainingSet {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  bool pixel_extended = false;
};

TrainingSet select_quantity(const LabeledBatch& batch, Quantity q);

struct GenerateOptions {
  Method method = Method::mle;
  int workers = 1;
};

LabeledBatch generate_training_batch(const Inference& inference, int count, Rng& rng,
                                     const GenerateOptions& opts = {});

/// Pixel-extended variant: responses are drawn from (and labeled with) the
/// interpolated per-pixel curves; features gain (x, y) in [0, 1]^2.
LabeledBatch generate_training_batch(const CurveFamily& family, const NoiseParams& noise,
                                     const PriorBox& priors, const InferenceOptions& iopts,
                                     int count, Rng& rng, const GenerateOptions& opts = {});

enum class LeafKind { constant, linear, quadratic };
const char* leaf_kind_name(LeafKind k);
LeafKind leaf_kind_from_name(const std::string& name);

/// Length of the leaf feature expansion for n response channels.
int leaf_coefficient_count(LeafKind kind, int n_responses, bool pixel_extended);

struct TrainOptions {
  // smallest allowed child; <= 0 selects the linear-leaf occupancy bound
  int min_node_size = 0;
  int exact_threshold_limit = 4096;  // exact split search below this node size
  int quantile_candidates = 256;     // candidate thresholds above the limit
  int min_leaf_multiplier = 4;       // samples required per leaf coefficient
};

class RegressionTree {
 public:
  struct Node {
    int feature = -1;        // -1 marks a leaf
    double threshold = 0.0;  // route left when x[feature] <= threshold
    int left = -1;
    int right = -1;
    LeafKind kind = LeafKind::constant;
    Eigen::VectorXd coef;
  };

  RegressionTree() = default;
  RegressionTree(std::vector<Node> nodes, int max_depth, int n_responses, bool pixel_extended,
                 LeafKind leaf_kind);

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict_all(const Eigen::MatrixXd& x) const;

  int max_depth() const { return max_depth_; }
  int n_responses() const { return n_responses_; }
  int feature_count() const { return n_responses_ + (pixel_extended_ ? 2 : 0); }
  bool pixel_extended() const { return pixel_extended_; }
  LeafKind leaf_kind() const { return leaf_kind_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  FileMeta meta;

 private:
  std::vector<Node> nodes_;
  int max_depth_ = 0;
  int n_responses_ = 0;
  bool pixel_extended_ = false;
  LeafKind leaf_kind_ = LeafKind::quadratic;
};

RegressionTree train_tree(const TrainingSet& data, int max_depth, LeafKind leaf_kind,
                          const TrainOptions& opts = {});

/// Bagged averaging forest; single trees remain the default elsewhere.
struct Forest {
  std::vector<RegressionTree> trees;
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

Forest train_forest(const TrainingSet& data, int tree_count, int max_depth, LeafKind leaf_kind,
                    Rng& rng, const TrainOptions& opts = {});

struct ErrorReport {
  Quantiles overall;
  struct Bin {
    double lo, hi;
    int count;
    Quantiles q;
  };
  std::vector<Bin> bins;  // binned by the oracle label
  double mean_abs_error = 0.0;
};

ErrorReport tree_error_report(const RegressionTree& tree, const Eigen::VectorXd& oracle_labels,
                              const Eigen::MatrixXd& features, int bin_count = 5);

// Text format; write -> read preserves predictions bit-exactly.
void write_tree(std::ostream& os, const RegressionTree& tree);
RegressionTree read_tree(std::istream& is);
void save_tree(const std::string& path, const RegressionTree& tree);
RegressionTree load_tree(const std::string& path);

}  // namespace tof
