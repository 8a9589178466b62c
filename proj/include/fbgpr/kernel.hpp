#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace fbgpr {

// Hyperparameters live in two coupled views: theta on the constrained
// positive scale and eta = log(theta) on the unconstrained scale used by the
// samplers.  Scale-type slots (amplitudes, noise) hold standard deviations;
// the kernels square them internally.
class ThetaVector {
 public:
  ThetaVector() = default;
  explicit ThetaVector(Eigen::VectorXd eta)
      : eta_(std::move(eta)), theta_(eta_.array().exp()) {}

  static ThetaVector from_theta(const Eigen::VectorXd& theta) {
    return ThetaVector(theta.array().log().matrix());
  }

  int size() const { return static_cast<int>(eta_.size()); }
  const Eigen::VectorXd& eta() const { return eta_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  double theta(int slot) const { return theta_[slot]; }
  double eta(int slot) const { return eta_[slot]; }

 private:
  Eigen::VectorXd eta_;
  Eigen::VectorXd theta_;
};

enum class LeafKind { SE, ARD, RQ, Per, Noise };

std::string leaf_kind_name(LeafKind kind);

// What a hyperparameter slot controls.  Amplitude and Noise slots are
// standard deviations; Lengthscale and Period share the input's units;
// Shape is the rational-quadratic mixture exponent.
enum class SlotRole { Amplitude, Lengthscale, Shape, Period, Noise };

// One base kernel instance inside a composite expression.  Slots are indices
// into the global hyperparameter vector; a leaf owns the contiguous range
// [first_slot, first_slot + n_slots).
struct KernelLeaf {
  LeafKind kind = LeafKind::SE;
  int first_slot = 0;
  int n_slots = 0;
  // Product factors after the first share the leading factor's amplitude,
  // so their own amplitude slot is dropped and the scale pinned to 1.
  bool fixed_amplitude = false;
  // Per with a pinned period has no period slot.
  bool has_period_slot = false;
  double fixed_period = 1.0;
  // Column of X this leaf looks at; -1 means all columns (isotropic).
  int active_dim = -1;
};

struct KernelOptions {
  bool share_product_amplitude = true;
  bool sample_periods = false;
  double period = 1.0;  // pinned period value when sample_periods is false
};

// Composite covariance expression: a binary tree of sums and elementwise
// products over base kernel leaves, plus the slot layout induced by a
// left-to-right walk of the leaves.
class KernelExpr {
 public:
  struct Node {
    enum class Kind { Leaf, Sum, Product };
    Kind kind = Kind::Leaf;
    int leaf = -1;   // index into leaves() when kind == Leaf
    int left = -1;   // child node indices otherwise
    int right = -1;
  };

  int slot_count() const { return static_cast<int>(slot_names_.size()); }
  const std::vector<std::string>& slot_names() const { return slot_names_; }
  int input_dim() const { return input_dim_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<KernelLeaf>& leaves() const { return leaves_; }
  int root() const { return root_; }

  const std::vector<SlotRole>& slot_roles() const { return slot_roles_; }

  // Leaf indices of Noise leaves that appear as top-level summands.  These
  // are pulled out of the covariance of the latent function and handled as
  // observation noise.
  std::vector<int> top_level_noise_leaves() const;

  std::string to_string() const;

  friend KernelExpr parse_kernel_expr(const std::string& text, int input_dim,
                                      const KernelOptions& options);

 private:
  std::vector<Node> nodes_;
  std::vector<KernelLeaf> leaves_;
  std::vector<std::string> slot_names_;
  std::vector<SlotRole> slot_roles_;
  int root_ = -1;
  int input_dim_ = 1;
};

// Grammar: expr := term ('+' term)*; term := factor ('*' factor)*;
// factor := ID | '(' expr ')'.  IDs: SE, ARD, RQ, Per, Noise, optionally
// suffixed with [d] to restrict a one-dimensional kernel to input column d.
// Throws std::invalid_argument on malformed input.
KernelExpr parse_kernel_expr(const std::string& text, int input_dim,
                             const KernelOptions& options = {});

// Evaluates a kernel expression over fixed inputs, caching the pairwise
// distance matrices so repeated evaluations at new hyperparameters only pay
// for elementwise math.  Symmetric evaluators (one input set) include Noise
// leaves on the diagonal; cross evaluators (two input sets) evaluate Noise
// to zero everywhere.
class KernelEvaluator {
 public:
  // Symmetric N x N evaluator over rows of X.
  KernelEvaluator(const KernelExpr& expr, const Eigen::MatrixXd& X);
  // Cross evaluator: rows of A against rows of B, giving |A| x |B| matrices.
  KernelEvaluator(const KernelExpr& expr, const Eigen::MatrixXd& A,
                  const Eigen::MatrixXd& B);

  // Leaves listed here evaluate to zero (used to strip top-level noise out
  // of the latent covariance).
  void exclude_leaves(const std::vector<int>& leaf_indices);

  Eigen::MatrixXd eval(const ThetaVector& theta) const;

  // Calls fn(slot, dK/deta_slot) for every slot of every included leaf, in
  // slot order within each leaf and leaf order left to right.
  void for_each_grad(
      const ThetaVector& theta,
      const std::function<void(int, const Eigen::MatrixXd&)>& fn) const;

  int rows() const { return n_rows_; }
  int cols() const { return n_cols_; }

 private:
  void build_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B);
  Eigen::MatrixXd leaf_matrix(int leaf_index, const ThetaVector& theta) const;
  Eigen::MatrixXd node_value(int node, const ThetaVector& theta,
                             std::vector<Eigen::MatrixXd>& memo) const;
  void grad_sweep(int node, const Eigen::MatrixXd& context,
                  const ThetaVector& theta,
                  const std::vector<Eigen::MatrixXd>& memo,
                  const std::function<void(int, const Eigen::MatrixXd&)>& fn) const;

  const KernelExpr expr_;
  bool symmetric_ = false;
  int n_rows_ = 0, n_cols_ = 0;
  std::vector<bool> excluded_;
  // sq_all_: squared euclidean distance over all columns.
  // sq_dim_[d]: squared distance along column d (built only if needed).
  // abs_[d or all]: |r| along the relevant axis, for Per.
  Eigen::MatrixXd sq_all_;
  std::vector<Eigen::MatrixXd> sq_dim_;
  Eigen::MatrixXd abs_all_;
  std::vector<Eigen::MatrixXd> abs_dim_;
};

// Convenience wrappers that build a throwaway evaluator.
Eigen::MatrixXd eval_kernel_matrix(const KernelExpr& expr,
                                   const ThetaVector& theta,
                                   const Eigen::MatrixXd& X);
Eigen::MatrixXd eval_cross_matrix(const KernelExpr& expr,
                                  const ThetaVector& theta,
                                  const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B);
std::vector<Eigen::MatrixXd> grad_kernel_matrix(const KernelExpr& expr,
                                                const ThetaVector& theta,
                                                const Eigen::MatrixXd& X);

// Diagonal of the symmetric kernel matrix over any n points.  Every base
// kernel here is stationary, so the diagonal does not depend on the inputs.
Eigen::VectorXd eval_kernel_diag(const KernelExpr& expr,
                                 const ThetaVector& theta, int n,
                                 const std::vector<int>& excluded_leaves = {});

}  // namespace fbgpr
