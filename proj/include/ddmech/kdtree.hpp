#pragma once

// Static kd-tree over points stored column-wise.  Candidate points reached
// by the search are scored with a caller-supplied exact distance, so the
// result is bit-for-bit what an exhaustive scan with that distance returns;
// the tree coordinates only drive pruning.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace ddmech {

class KdTree {
 public:
  struct Hit {
    std::size_t index = 0;
    double distance2 = std::numeric_limits<double>::infinity();
  };

  KdTree() = default;

  /// `points` is dim x n.  Coordinates must be such that the exact distance
  /// used at query time equals the squared Euclidean distance in this frame
  /// up to round-off.
  explicit KdTree(Eigen::MatrixXd points, std::size_t leaf_size = 8)
      : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    order_.resize(static_cast<std::size_t>(points_.cols()));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!order_.empty()) build(0, order_.size());
  }

  std::size_t size() const { return order_.size(); }
  int dim() const { return static_cast<int>(points_.rows()); }

  /// Nearest point to `q` (tree coordinates).  Ties go to the lowest index.
  /// `relative_slack` widens the pruning test to absorb round-off between
  /// the tree frame and the exact distance.
  template <typename ExactDistance>
  Hit nearest(const Eigen::VectorXd& q, ExactDistance&& exact, double relative_slack = 1e-9) const {
    Hit best;
    if (nodes_.empty()) return best;
    Eigen::VectorXd offsets = Eigen::VectorXd::Zero(dim());
    search(0, q, exact, relative_slack, 0.0, offsets, best);
    return best;
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;  // range in order_
    int split_dim = -1;              // -1 marks a leaf
    double split_value = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return id;

    int best_dim = 0;
    double best_spread = -1.0;
    for (int d = 0; d < dim(); ++d) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        const double v = points_(d, static_cast<Eigen::Index>(order_[i]));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = d;
      }
    }
    if (best_spread <= 0.0) return id;  // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    auto coord = [&](std::size_t i) { return points_(best_dim, static_cast<Eigen::Index>(i)); };
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return coord(a) < coord(b); });
    const double split = coord(order_[mid]);

    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].split_dim = best_dim;
    nodes_[id].split_value = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  // `lower` is the squared distance from q to the node's cell, built up from
  // the per-dimension `offsets` to the splitting planes crossed so far.
  template <typename ExactDistance>
  void search(std::size_t id, const Eigen::VectorXd& q, ExactDistance& exact, double slack,
              double lower, Eigen::VectorXd& offsets, Hit& best) const {
    const Node& node = nodes_[id];
    if (node.split_dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const double d = exact(idx);
        if (d < best.distance2 || (d == best.distance2 && idx < best.index)) best = {idx, d};
      }
      return;
    }
    const double diff = q(node.split_dim) - node.split_value;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, exact, slack, lower, offsets, best);
    const int d = node.split_dim;
    const double old = offsets(d);
    const double far_lower = lower - old * old + diff * diff;
    if (far_lower <= best.distance2 * (1.0 + slack) + std::numeric_limits<double>::min()) {
      offsets(d) = diff;
      search(far, q, exact, slack, far_lower, offsets, best);
      offsets(d) = old;
    }
  }

  Eigen::MatrixXd points_;
  std::size_t leaf_size_ = 8;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace ddmech
