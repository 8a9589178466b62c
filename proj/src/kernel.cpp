#include "fbgpr/kernel.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace fbgpr {

std::string leaf_kind_name(LeafKind kind) {
  switch (kind) {
    case LeafKind::SE: return "SE";
    case LeafKind::ARD: return "ARD";
    case LeafKind::RQ: return "RQ";
    case LeafKind::Per: return "Per";
    case LeafKind::Noise: return "Noise";
  }
  return "?";
}

namespace {

struct Token {
  enum class Kind { Id, Plus, Star, LParen, RParen, End };
  Kind kind;
  std::string name;
  int dim = -1;  // [d] suffix on an Id, -1 if absent
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '+') {
      out.push_back({Token::Kind::Plus, "", -1});
      ++i;
    } else if (c == '*') {
      out.push_back({Token::Kind::Star, "", -1});
      ++i;
    } else if (c == '(') {
      out.push_back({Token::Kind::LParen, "", -1});
      ++i;
    } else if (c == ')') {
      out.push_back({Token::Kind::RParen, "", -1});
      ++i;
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      std::string name;
      while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
        name += text[i++];
      }
      int dim = -1;
      if (i < text.size() && text[i] == '[') {
        ++i;
        std::string digits;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
          digits += text[i++];
        }
        if (digits.empty() || i >= text.size() || text[i] != ']') {
          throw std::invalid_argument("kernel expression: malformed [dim] suffix");
        }
        ++i;
        dim = std::stoi(digits);
      }
      out.push_back({Token::Kind::Id, name, dim});
    } else {
      throw std::invalid_argument(std::string("kernel expression: unexpected character '") + c + "'");
    }
  }
  out.push_back({Token::Kind::End, "", -1});
  return out;
}

LeafKind leaf_kind_from_name(const std::string& name) {
  if (name == "SE") return LeafKind::SE;
  if (name == "ARD") return LeafKind::ARD;
  if (name == "RQ") return LeafKind::RQ;
  if (name == "Per") return LeafKind::Per;
  if (name == "Noise") return LeafKind::Noise;
  throw std::invalid_argument("kernel expression: unknown kernel '" + name + "'");
}

class Parser {
 public:
  Parser(std::vector<Token> tokens, int input_dim, const KernelOptions& options)
      : tokens_(std::move(tokens)), input_dim_(input_dim), options_(options) {}

  int parse(std::vector<KernelExpr::Node>& nodes, std::vector<KernelLeaf>& leaves) {
    nodes_ = &nodes;
    leaves_ = &leaves;
    const int root = expr();
    expect(Token::Kind::End, "trailing input after expression");
    return root;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  bool accept(Token::Kind kind) {
    if (tokens_[pos_].kind == kind) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(Token::Kind kind, const char* what) {
    if (!accept(kind)) throw std::invalid_argument(std::string("kernel expression: ") + what);
  }

  int make_node(KernelExpr::Node node) {
    nodes_->push_back(node);
    return static_cast<int>(nodes_->size()) - 1;
  }

  int expr() {
    int n = term();
    while (accept(Token::Kind::Plus)) {
      const int rhs = term();
      n = make_node({KernelExpr::Node::Kind::Sum, -1, n, rhs});
    }
    return n;
  }

  int term() {
    int n = factor();
    while (accept(Token::Kind::Star)) {
      const int rhs = factor();
      n = make_node({KernelExpr::Node::Kind::Product, -1, n, rhs});
    }
    return n;
  }

  int factor() {
    if (accept(Token::Kind::LParen)) {
      const int n = expr();
      expect(Token::Kind::RParen, "missing ')'");
      return n;
    }
    if (peek().kind != Token::Kind::Id) {
      throw std::invalid_argument("kernel expression: expected a kernel name");
    }
    const Token tok = tokens_[pos_++];
    KernelLeaf leaf;
    leaf.kind = leaf_kind_from_name(tok.name);
    leaf.active_dim = tok.dim;
    leaf.fixed_period = options_.period;
    if (tok.dim >= 0) {
      if (leaf.kind == LeafKind::ARD || leaf.kind == LeafKind::Noise) {
        throw std::invalid_argument("kernel expression: " + tok.name + " takes no [dim] suffix");
      }
      if (tok.dim >= input_dim_) {
        throw std::invalid_argument("kernel expression: input column " + std::to_string(tok.dim) +
                                    " out of range for " + std::to_string(input_dim_) + " columns");
      }
    }
    if (leaf.kind == LeafKind::Per && input_dim_ > 1 && tok.dim < 0) {
      throw std::invalid_argument(
          "kernel expression: Per over multi-column inputs needs an explicit column, e.g. Per[0]");
    }
    leaves_->push_back(leaf);
    const int leaf_index = static_cast<int>(leaves_->size()) - 1;
    return make_node({KernelExpr::Node::Kind::Leaf, leaf_index, -1, -1});
  }

  std::vector<Token> tokens_;
  size_t pos_ = 0;
  int input_dim_;
  KernelOptions options_;
  std::vector<KernelExpr::Node>* nodes_ = nullptr;
  std::vector<KernelLeaf>* leaves_ = nullptr;
};

// Marks every leaf reached through the right subtree of a Product as sharing
// the amplitude of the product's leading factor.
void mark_shared_amplitudes(const std::vector<KernelExpr::Node>& nodes,
                            std::vector<KernelLeaf>& leaves, int node, bool shared) {
  const auto& n = nodes[node];
  switch (n.kind) {
    case KernelExpr::Node::Kind::Leaf:
      if (shared) leaves[n.leaf].fixed_amplitude = true;
      break;
    case KernelExpr::Node::Kind::Sum:
      mark_shared_amplitudes(nodes, leaves, n.left, shared);
      mark_shared_amplitudes(nodes, leaves, n.right, shared);
      break;
    case KernelExpr::Node::Kind::Product:
      mark_shared_amplitudes(nodes, leaves, n.left, shared);
      mark_shared_amplitudes(nodes, leaves, n.right, true);
      break;
  }
}

}  // namespace

KernelExpr parse_kernel_expr(const std::string& text, int input_dim,
                             const KernelOptions& options) {
  if (input_dim < 1) throw std::invalid_argument("kernel expression: input_dim must be >= 1");
  KernelExpr expr;
  expr.input_dim_ = input_dim;
  Parser parser(tokenize(text), input_dim, options);
  expr.root_ = parser.parse(expr.nodes_, expr.leaves_);

  if (options.share_product_amplitude) {
    mark_shared_amplitudes(expr.nodes_, expr.leaves_, expr.root_, false);
  }

  // Slot layout: walk leaves left to right, amplitude first within a leaf.
  int slot = 0;
  auto add_slot = [&](const char* prefix, SlotRole role) {
    expr.slot_names_.push_back(std::string(prefix) + "_" + std::to_string(slot + 1));
    expr.slot_roles_.push_back(role);
    ++slot;
  };
  for (auto& leaf : expr.leaves_) {
    leaf.first_slot = slot;
    switch (leaf.kind) {
      case LeafKind::SE:
        if (!leaf.fixed_amplitude) add_slot("s", SlotRole::Amplitude);
        add_slot("ls", SlotRole::Lengthscale);
        break;
      case LeafKind::ARD:
        if (!leaf.fixed_amplitude) add_slot("s", SlotRole::Amplitude);
        for (int d = 0; d < input_dim; ++d) add_slot("ls", SlotRole::Lengthscale);
        break;
      case LeafKind::RQ:
        if (!leaf.fixed_amplitude) add_slot("s", SlotRole::Amplitude);
        add_slot("ls", SlotRole::Lengthscale);
        add_slot("alpha", SlotRole::Shape);
        break;
      case LeafKind::Per:
        if (!leaf.fixed_amplitude) add_slot("s", SlotRole::Amplitude);
        add_slot("ls", SlotRole::Lengthscale);
        leaf.has_period_slot = options.sample_periods;
        if (leaf.has_period_slot) add_slot("p", SlotRole::Period);
        break;
      case LeafKind::Noise:
        if (!leaf.fixed_amplitude) add_slot("n", SlotRole::Noise);
        break;
    }
    leaf.n_slots = slot - leaf.first_slot;
  }
  return expr;
}

std::vector<int> KernelExpr::top_level_noise_leaves() const {
  std::vector<int> out;
  std::vector<int> summands;
  std::function<void(int)> collect = [&](int node) {
    const auto& n = nodes_[node];
    if (n.kind == Node::Kind::Sum) {
      collect(n.left);
      collect(n.right);
    } else {
      summands.push_back(node);
    }
  };
  collect(root_);
  for (int node : summands) {
    const auto& n = nodes_[node];
    if (n.kind == Node::Kind::Leaf && leaves_[n.leaf].kind == LeafKind::Noise) {
      out.push_back(n.leaf);
    }
  }
  return out;
}

namespace {

std::string node_to_string(const KernelExpr& expr, int node, bool product_context) {
  const auto& n = expr.nodes()[node];
  switch (n.kind) {
    case KernelExpr::Node::Kind::Leaf: {
      const auto& leaf = expr.leaves()[n.leaf];
      std::string s = leaf_kind_name(leaf.kind);
      if (leaf.active_dim >= 0) s += "[" + std::to_string(leaf.active_dim) + "]";
      return s;
    }
    case KernelExpr::Node::Kind::Sum: {
      std::string s = node_to_string(expr, n.left, false) + " + " +
                      node_to_string(expr, n.right, false);
      return product_context ? "(" + s + ")" : s;
    }
    case KernelExpr::Node::Kind::Product:
      return node_to_string(expr, n.left, true) + "*" + node_to_string(expr, n.right, true);
  }
  return "";
}

}  // namespace

std::string KernelExpr::to_string() const {
  return node_to_string(*this, root_, false);
}

KernelEvaluator::KernelEvaluator(const KernelExpr& expr, const Eigen::MatrixXd& X)
    : expr_(expr), symmetric_(true) {
  if (X.cols() != expr.input_dim()) {
    throw std::invalid_argument("kernel evaluator: input has " + std::to_string(X.cols()) +
                                " columns, expression expects " + std::to_string(expr.input_dim()));
  }
  excluded_.assign(expr_.leaves().size(), false);
  build_distances(X, X);
}

KernelEvaluator::KernelEvaluator(const KernelExpr& expr, const Eigen::MatrixXd& A,
                                 const Eigen::MatrixXd& B)
    : expr_(expr), symmetric_(false) {
  if (A.cols() != expr.input_dim() || B.cols() != expr.input_dim()) {
    throw std::invalid_argument("kernel evaluator: cross input column mismatch");
  }
  excluded_.assign(expr_.leaves().size(), false);
  build_distances(A, B);
}

void KernelEvaluator::exclude_leaves(const std::vector<int>& leaf_indices) {
  for (int i : leaf_indices) excluded_.at(i) = true;
}

void KernelEvaluator::build_distances(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  n_rows_ = static_cast<int>(A.rows());
  n_cols_ = static_cast<int>(B.rows());
  const int dim = expr_.input_dim();

  bool need_all = false, need_abs_all = false;
  std::vector<bool> need_dim(dim, false), need_abs_dim(dim, false);
  for (const auto& leaf : expr_.leaves()) {
    switch (leaf.kind) {
      case LeafKind::SE:
      case LeafKind::RQ:
        if (leaf.active_dim < 0) need_all = true;
        else need_dim[leaf.active_dim] = true;
        break;
      case LeafKind::ARD:
        for (int d = 0; d < dim; ++d) need_dim[d] = true;
        break;
      case LeafKind::Per:
        if (leaf.active_dim < 0) need_abs_all = true;  // only reachable when dim == 1
        else need_abs_dim[leaf.active_dim] = true;
        break;
      case LeafKind::Noise:
        break;
    }
  }

  sq_dim_.resize(dim);
  abs_dim_.resize(dim);
  auto fill_dim = [&](int d) {
    Eigen::MatrixXd& M = sq_dim_[d];
    M.resize(n_rows_, n_cols_);
    for (int j = 0; j < n_cols_; ++j) {
      const double bj = B(j, d);
      for (int i = 0; i < n_rows_; ++i) {
        const double r = A(i, d) - bj;
        M(i, j) = r * r;
      }
    }
  };
  for (int d = 0; d < dim; ++d) {
    if (need_dim[d] || need_abs_dim[d]) fill_dim(d);
    if (need_abs_dim[d]) abs_dim_[d] = sq_dim_[d].cwiseMax(0.0).cwiseSqrt();
  }
  if (need_all || need_abs_all) {
    sq_all_.resize(n_rows_, n_cols_);
    for (int j = 0; j < n_cols_; ++j) {
      for (int i = 0; i < n_rows_; ++i) {
        sq_all_(i, j) = (A.row(i) - B.row(j)).squaredNorm();
      }
    }
    if (need_abs_all) abs_all_ = sq_all_.cwiseMax(0.0).cwiseSqrt();
  }
}

namespace {

inline double square(double v) { return v * v; }

}  // namespace

Eigen::MatrixXd KernelEvaluator::leaf_matrix(int leaf_index, const ThetaVector& theta) const {
  const KernelLeaf& leaf = expr_.leaves()[leaf_index];
  int cursor = leaf.first_slot;
  const double amp2 = leaf.fixed_amplitude ? 1.0 : square(theta.theta(cursor++));

  switch (leaf.kind) {
    case LeafKind::SE: {
      const double ls = theta.theta(cursor);
      const Eigen::MatrixXd& sq = leaf.active_dim < 0 ? sq_all_ : sq_dim_[leaf.active_dim];
      return amp2 * (-0.5 / square(ls) * sq.array()).exp().matrix();
    }
    case LeafKind::ARD: {
      const int dim = expr_.input_dim();
      Eigen::ArrayXXd w = Eigen::ArrayXXd::Zero(n_rows_, n_cols_);
      for (int d = 0; d < dim; ++d) {
        w += sq_dim_[d].array() / square(theta.theta(cursor + d));
      }
      return amp2 * (-0.5 * w).exp().matrix();
    }
    case LeafKind::RQ: {
      const double ls = theta.theta(cursor);
      const double alpha = theta.theta(cursor + 1);
      const Eigen::MatrixXd& sq = leaf.active_dim < 0 ? sq_all_ : sq_dim_[leaf.active_dim];
      // (1 + x)^(-alpha) as exp(-alpha*log1p(x)); x is tiny for large alpha.
      Eigen::ArrayXXd x = sq.array() / (2.0 * alpha * square(ls));
      return amp2 * (-alpha * x.log1p()).exp().matrix();
    }
    case LeafKind::Per: {
      const double ls = theta.theta(cursor);
      const double period = leaf.has_period_slot ? theta.theta(cursor + 1) : leaf.fixed_period;
      const Eigen::MatrixXd& r = leaf.active_dim < 0 ? abs_all_ : abs_dim_[leaf.active_dim];
      Eigen::ArrayXXd s = (M_PI / period * r.array()).sin();
      return amp2 * (-2.0 / square(ls) * s.square()).exp().matrix();
    }
    case LeafKind::Noise: {
      const double n2 = leaf.fixed_amplitude ? 1.0 : amp2;
      if (!symmetric_) return Eigen::MatrixXd::Zero(n_rows_, n_cols_);
      return n2 * Eigen::MatrixXd::Identity(n_rows_, n_cols_);
    }
  }
  throw std::logic_error("unreachable kernel kind");
}

Eigen::MatrixXd KernelEvaluator::node_value(int node, const ThetaVector& theta,
                                            std::vector<Eigen::MatrixXd>& memo) const {
  Eigen::MatrixXd& slot = memo[node];
  if (slot.size() != 0) return slot;
  const auto& n = expr_.nodes()[node];
  switch (n.kind) {
    case KernelExpr::Node::Kind::Leaf:
      slot = excluded_[n.leaf] ? Eigen::MatrixXd::Zero(n_rows_, n_cols_)
                               : leaf_matrix(n.leaf, theta);
      break;
    case KernelExpr::Node::Kind::Sum:
      slot = node_value(n.left, theta, memo) + node_value(n.right, theta, memo);
      break;
    case KernelExpr::Node::Kind::Product:
      slot = node_value(n.left, theta, memo).cwiseProduct(node_value(n.right, theta, memo));
      break;
  }
  return slot;
}

Eigen::MatrixXd KernelEvaluator::eval(const ThetaVector& theta) const {
  if (theta.size() != expr_.slot_count()) {
    throw std::invalid_argument("kernel eval: hyperparameter count mismatch");
  }
  std::vector<Eigen::MatrixXd> memo(expr_.nodes().size());
  return node_value(expr_.root(), theta, memo);
}

void KernelEvaluator::grad_sweep(
    int node, const Eigen::MatrixXd& context, const ThetaVector& theta,
    const std::vector<Eigen::MatrixXd>& memo,
    const std::function<void(int, const Eigen::MatrixXd&)>& fn) const {
  const auto& n = expr_.nodes()[node];
  switch (n.kind) {
    case KernelExpr::Node::Kind::Sum:
      grad_sweep(n.left, context, theta, memo, fn);
      grad_sweep(n.right, context, theta, memo, fn);
      return;
    case KernelExpr::Node::Kind::Product:
      grad_sweep(n.left, context.cwiseProduct(memo[n.right]), theta, memo, fn);
      grad_sweep(n.right, context.cwiseProduct(memo[n.left]), theta, memo, fn);
      return;
    case KernelExpr::Node::Kind::Leaf:
      break;
  }

  const KernelLeaf& leaf = expr_.leaves()[n.leaf];
  if (excluded_[n.leaf]) return;
  const Eigen::MatrixXd& K = memo[node];
  int cursor = leaf.first_slot;
  if (!leaf.fixed_amplitude) {
    // d/d eta_s of s^2 * k = 2 K; also covers the Noise scale slot.
    fn(cursor, 2.0 * context.cwiseProduct(K));
    ++cursor;
  }
  switch (leaf.kind) {
    case LeafKind::SE: {
      const double ls = theta.theta(cursor);
      const Eigen::MatrixXd& sq = leaf.active_dim < 0 ? sq_all_ : sq_dim_[leaf.active_dim];
      fn(cursor, context.cwiseProduct(K).cwiseProduct((sq / square(ls))));
      break;
    }
    case LeafKind::ARD: {
      const int dim = expr_.input_dim();
      const Eigen::MatrixXd CK = context.cwiseProduct(K);
      for (int d = 0; d < dim; ++d) {
        fn(cursor + d, CK.cwiseProduct(sq_dim_[d] / square(theta.theta(cursor + d))));
      }
      break;
    }
    case LeafKind::RQ: {
      const double ls = theta.theta(cursor);
      const double alpha = theta.theta(cursor + 1);
      const Eigen::MatrixXd& sq = leaf.active_dim < 0 ? sq_all_ : sq_dim_[leaf.active_dim];
      Eigen::ArrayXXd x = sq.array() / (2.0 * alpha * square(ls));
      Eigen::ArrayXXd binv = 1.0 / (1.0 + x);
      const Eigen::MatrixXd CK = context.cwiseProduct(K);
      fn(cursor, CK.cwiseProduct((sq.array() / square(ls) * binv).matrix()));
      fn(cursor + 1,
         CK.cwiseProduct((-alpha * x.log1p() + sq.array() / (2.0 * square(ls)) * binv).matrix()));
      break;
    }
    case LeafKind::Per: {
      const double ls = theta.theta(cursor);
      const double period = leaf.has_period_slot ? theta.theta(cursor + 1) : leaf.fixed_period;
      const Eigen::MatrixXd& r = leaf.active_dim < 0 ? abs_all_ : abs_dim_[leaf.active_dim];
      Eigen::ArrayXXd u = M_PI / period * r.array();
      const Eigen::MatrixXd CK = context.cwiseProduct(K);
      fn(cursor, CK.cwiseProduct((4.0 / square(ls) * u.sin().square()).matrix()));
      if (leaf.has_period_slot) {
        fn(cursor + 1,
           CK.cwiseProduct(
               (2.0 * M_PI / (square(ls) * period) * r.array() * (2.0 * u).sin()).matrix()));
      }
      break;
    }
    case LeafKind::Noise:
      break;  // scale slot already emitted above
  }
}

void KernelEvaluator::for_each_grad(
    const ThetaVector& theta,
    const std::function<void(int, const Eigen::MatrixXd&)>& fn) const {
  if (theta.size() != expr_.slot_count()) {
    throw std::invalid_argument("kernel grad: hyperparameter count mismatch");
  }
  std::vector<Eigen::MatrixXd> memo(expr_.nodes().size());
  node_value(expr_.root(), theta, memo);
  grad_sweep(expr_.root(), Eigen::MatrixXd::Ones(n_rows_, n_cols_), theta, memo, fn);
}

Eigen::MatrixXd eval_kernel_matrix(const KernelExpr& expr, const ThetaVector& theta,
                                   const Eigen::MatrixXd& X) {
  return KernelEvaluator(expr, X).eval(theta);
}

Eigen::MatrixXd eval_cross_matrix(const KernelExpr& expr, const ThetaVector& theta,
                                  const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  return KernelEvaluator(expr, A, B).eval(theta);
}

std::vector<Eigen::MatrixXd> grad_kernel_matrix(const KernelExpr& expr,
                                                const ThetaVector& theta,
                                                const Eigen::MatrixXd& X) {
  std::vector<Eigen::MatrixXd> grads(expr.slot_count());
  for (auto& g : grads) g = Eigen::MatrixXd::Zero(X.rows(), X.rows());
  KernelEvaluator ev(expr, X);
  ev.for_each_grad(theta, [&](int slot, const Eigen::MatrixXd& G) { grads[slot] += G; });
  return grads;
}

namespace {

Eigen::VectorXd diag_node_value(const KernelExpr& expr, int node, const ThetaVector& theta,
                                int n, const std::vector<bool>& excluded) {
  const auto& nd = expr.nodes()[node];
  switch (nd.kind) {
    case KernelExpr::Node::Kind::Sum:
      return diag_node_value(expr, nd.left, theta, n, excluded) +
             diag_node_value(expr, nd.right, theta, n, excluded);
    case KernelExpr::Node::Kind::Product:
      return diag_node_value(expr, nd.left, theta, n, excluded)
          .cwiseProduct(diag_node_value(expr, nd.right, theta, n, excluded));
    case KernelExpr::Node::Kind::Leaf:
      break;
  }
  const KernelLeaf& leaf = expr.leaves()[nd.leaf];
  if (excluded[nd.leaf]) return Eigen::VectorXd::Zero(n);
  // Zero distance: every stationary leaf reduces to its squared scale.
  const double amp2 = leaf.fixed_amplitude ? 1.0 : square(theta.theta(leaf.first_slot));
  return amp2 * Eigen::VectorXd::Ones(n);
}

}  // namespace

Eigen::VectorXd eval_kernel_diag(const KernelExpr& expr, const ThetaVector& theta, int n,
                                 const std::vector<int>& excluded_leaves) {
  std::vector<bool> excluded(expr.leaves().size(), false);
  for (int i : excluded_leaves) excluded.at(i) = true;
  return diag_node_value(expr, expr.root(), theta, n, excluded);
}

}  // namespace fbgpr
