#pragma once

// Eager reverse-mode differentiation over dense tensors.
//
// Every operation appends a node to a Graph and computes its value at once.
// `Graph::gradient` appends the backward pass as ordinary nodes, so a
// gradient is itself differentiable; the gradient penalty relies on this to
// differentiate through an input-gradient norm.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "baae/error.hpp"
#include "baae/tensor.hpp"

namespace baae::diff {

enum class OpKind : std::uint8_t {
  Leaf,
  Constant,
  Detach,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  AddRowVector,    // matrix + broadcast 1xC row
  MulColVector,    // matrix * broadcast Rx1 column
  Scale,
  AddScalar,
  Relu,
  ReluMask,        // 1 where x > 0, else 0; zero derivative
  Exp,
  Log,
  Reciprocal,
  SafeReciprocal,  // 1/x, with 0 mapped to 0
  Sqrt,
  Sigmoid,
  LogSigmoid,
  LogSoftmaxRows,
  SumAll,
  MeanAll,
  SumRows,          // RxC -> 1xC
  SumCols,          // RxC -> Rx1
  ExpandScalar,     // scalar -> shape of operand 1
  ExpandScalarMean, // scalar / n -> shape of operand 1 (n = its size)
  ExpandRows,       // 1xC -> rows of operand 1
  ExpandCols,       // Rx1 -> cols of operand 1
  ConcatCols,
  SliceCols,
  PadCols,          // operand 0 embedded at column offset into zeros shaped like operand 1
};

constexpr std::string_view op_name(OpKind op) noexcept {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Detach: return "detach";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddRowVector: return "add_row_vector";
    case OpKind::MulColVector: return "mul_col_vector";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Relu: return "relu";
    case OpKind::ReluMask: return "relu_mask";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Reciprocal: return "reciprocal";
    case OpKind::SafeReciprocal: return "safe_reciprocal";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::LogSigmoid: return "log_sigmoid";
    case OpKind::LogSoftmaxRows: return "log_softmax_rows";
    case OpKind::SumAll: return "sum";
    case OpKind::MeanAll: return "mean";
    case OpKind::SumRows: return "sum_rows";
    case OpKind::SumCols: return "sum_cols";
    case OpKind::ExpandScalar: return "expand_scalar";
    case OpKind::ExpandScalarMean: return "expand_scalar_mean";
    case OpKind::ExpandRows: return "expand_rows";
    case OpKind::ExpandCols: return "expand_cols";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::PadCols: return "pad_cols";
  }
  return "?";
}

/// Whether a nonzero derivative flows from an op to operand `index`.
constexpr bool propagates_to(OpKind op, int index) noexcept {
  switch (op) {
    case OpKind::Leaf:
    case OpKind::Constant:
    case OpKind::Detach:
    case OpKind::ReluMask:
      return false;
    case OpKind::ExpandScalar:
    case OpKind::ExpandScalarMean:
    case OpKind::ExpandRows:
    case OpKind::ExpandCols:
    case OpKind::PadCols:
      return index == 0;  // operand 1 only supplies a shape
    default:
      return true;
  }
}

struct Node {
  OpKind op = OpKind::Constant;
  std::array<std::size_t, 2> inputs{};
  int arity = 0;
  double scalar = 0.0;     // Scale factor, AddScalar offset
  std::size_t offset = 0;  // SliceCols / PadCols column offset
  std::size_t extent = 0;  // SliceCols width
  std::string name;        // Leaf name
  Tensor value;
};

namespace detail {

[[noreturn]] inline void shape_fail(std::size_t id, OpKind op, const Tensor& a, const Tensor* b,
                                    std::string_view why) {
  std::string msg = "node " + std::to_string(id) + " (" + std::string(op_name(op)) + "): " +
                    std::string(why) + "; operand shapes " + a.shape_string();
  if (b) msg += " and " + b->shape_string();
  throw ShapeError(msg);
}

inline void require_rank2(std::size_t id, OpKind op, const Tensor& a, const Tensor* b = nullptr) {
  if (a.rank() != 2 || (b && b->rank() != 2)) shape_fail(id, op, a, b, "rank-2 operands required");
}

template <class F>
Tensor map_values(const Tensor& a, F&& f) {
  Tensor out(a.shape());
  const auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <class F>
Tensor zip_values(const Tensor& a, const Tensor& b, F&& f) {
  Tensor out(a.shape());
  const auto x = a.values();
  const auto y = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

inline double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sigmoid(double x) noexcept {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

/// Value of a non-leaf node from its operand values. Shared by node
/// construction and replay so both paths compute identical bits.
inline Tensor evaluate(const Node& n, std::size_t id, const Tensor* in0, const Tensor* in1) {
  const Tensor& a = *in0;
  switch (n.op) {
    case OpKind::Leaf:
    case OpKind::Constant:
      return n.value;
    case OpKind::Detach:
      return a;
    case OpKind::MatMul: {
      const Tensor& b = *in1;
      require_rank2(id, n.op, a, &b);
      if (a.cols() != b.rows()) shape_fail(id, n.op, a, &b, "inner dimensions differ");
      Tensor out = Tensor::matrix(a.rows(), b.cols());
      out.as_matrix().noalias() = a.as_matrix() * b.as_matrix();
      return out;
    }
    case OpKind::Transpose: {
      require_rank2(id, n.op, a);
      Tensor out = Tensor::matrix(a.cols(), a.rows());
      out.as_matrix() = a.as_matrix().transpose();
      return out;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      const Tensor& b = *in1;
      if (a.shape() != b.shape()) shape_fail(id, n.op, a, &b, "shapes differ");
      if (n.op == OpKind::Add) return zip_values(a, b, [](double x, double y) { return x + y; });
      if (n.op == OpKind::Sub) return zip_values(a, b, [](double x, double y) { return x - y; });
      return zip_values(a, b, [](double x, double y) { return x * y; });
    }
    case OpKind::AddRowVector: {
      const Tensor& b = *in1;
      require_rank2(id, n.op, a, &b);
      if (b.rows() != 1 || b.cols() != a.cols()) shape_fail(id, n.op, a, &b, "expected 1xC row");
      Tensor out = a;
      out.as_matrix().rowwise() += b.as_matrix().row(0);
      return out;
    }
    case OpKind::MulColVector: {
      const Tensor& b = *in1;
      require_rank2(id, n.op, a, &b);
      if (b.cols() != 1 || b.rows() != a.rows()) shape_fail(id, n.op, a, &b, "expected Rx1 column");
      Tensor out = a;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const double s = b[r];
        for (double& v : out.row(r)) v *= s;
      }
      return out;
    }
    case OpKind::Scale: {
      const double c = n.scalar;
      return map_values(a, [c](double x) { return c * x; });
    }
    case OpKind::AddScalar: {
      const double c = n.scalar;
      return map_values(a, [c](double x) { return x + c; });
    }
    case OpKind::Relu:
      return map_values(a, [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::ReluMask:
      return map_values(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case OpKind::Exp:
      return map_values(a, [](double x) { return std::exp(x); });
    case OpKind::Log:
      for (double v : a.values()) {
        if (!(v > 0.0)) {
          throw DomainError("node " + std::to_string(id) + " (log): non-positive operand " +
                            std::to_string(v));
        }
      }
      return map_values(a, [](double x) { return std::log(x); });
    case OpKind::Reciprocal:
      return map_values(a, [](double x) { return 1.0 / x; });
    case OpKind::SafeReciprocal:
      return map_values(a, [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; });
    case OpKind::Sqrt:
      for (double v : a.values()) {
        if (v < 0.0) {
          throw DomainError("node " + std::to_string(id) + " (sqrt): negative operand " +
                            std::to_string(v));
        }
      }
      return map_values(a, [](double x) { return std::sqrt(x); });
    case OpKind::Sigmoid:
      return map_values(a, sigmoid);
    case OpKind::LogSigmoid:
      return map_values(a, log_sigmoid);
    case OpKind::LogSoftmaxRows: {
      require_rank2(id, n.op, a);
      Tensor out = a;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = out.row(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        for (double& v : row) v -= lse;
      }
      return out;
    }
    case OpKind::SumAll:
    case OpKind::MeanAll: {
      double s = 0.0;
      for (double v : a.values()) s += v;
      if (n.op == OpKind::MeanAll) s /= static_cast<double>(a.size());
      return Tensor::scalar(s);
    }
    case OpKind::SumRows: {
      require_rank2(id, n.op, a);
      Tensor out = Tensor::matrix(1, a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) out[c] += row[c];
      }
      return out;
    }
    case OpKind::SumCols: {
      require_rank2(id, n.op, a);
      Tensor out = Tensor::matrix(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v;
        out[r] = s;
      }
      return out;
    }
    case OpKind::ExpandScalar:
    case OpKind::ExpandScalarMean: {
      const Tensor& ref = *in1;
      if (a.size() != 1) shape_fail(id, n.op, a, &ref, "scalar operand required");
      double v = a[0];
      if (n.op == OpKind::ExpandScalarMean) v /= static_cast<double>(ref.size());
      return Tensor(ref.shape(), v);
    }
    case OpKind::ExpandRows: {
      const Tensor& ref = *in1;
      require_rank2(id, n.op, a, &ref);
      if (a.rows() != 1 || a.cols() != ref.cols()) shape_fail(id, n.op, a, &ref, "expected 1xC row");
      Tensor out = Tensor::matrix(ref.rows(), ref.cols());
      out.as_matrix().rowwise() = a.as_matrix().row(0);
      return out;
    }
    case OpKind::ExpandCols: {
      const Tensor& ref = *in1;
      require_rank2(id, n.op, a, &ref);
      if (a.cols() != 1 || a.rows() != ref.rows()) shape_fail(id, n.op, a, &ref, "expected Rx1 column");
      Tensor out = Tensor::matrix(ref.rows(), ref.cols());
      for (std::size_t r = 0; r < ref.rows(); ++r) {
        for (double& v : out.row(r)) v = a[r];
      }
      return out;
    }
    case OpKind::ConcatCols: {
      const Tensor& b = *in1;
      require_rank2(id, n.op, a, &b);
      if (a.rows() != b.rows()) shape_fail(id, n.op, a, &b, "row counts differ");
      Tensor out = Tensor::matrix(a.rows(), a.cols() + b.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        const auto ra = a.row(r);
        const auto rb = b.row(r);
        std::copy(ra.begin(), ra.end(), dst.begin());
        std::copy(rb.begin(), rb.end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
      }
      return out;
    }
    case OpKind::SliceCols: {
      require_rank2(id, n.op, a);
      if (n.offset + n.extent > a.cols()) shape_fail(id, n.op, a, nullptr, "slice out of range");
      Tensor out = Tensor::matrix(a.rows(), n.extent);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto src = a.row(r).subspan(n.offset, n.extent);
        std::copy(src.begin(), src.end(), out.row(r).begin());
      }
      return out;
    }
    case OpKind::PadCols: {
      const Tensor& ref = *in1;
      require_rank2(id, n.op, a, &ref);
      if (a.rows() != ref.rows() || n.offset + a.cols() > ref.cols())
        shape_fail(id, n.op, a, &ref, "padding out of range");
      Tensor out = Tensor::matrix(ref.rows(), ref.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto src = a.row(r);
        std::copy(src.begin(), src.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(n.offset));
      }
      return out;
    }
  }
  throw ContractError("unknown op");
}

}  // namespace detail

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const noexcept { return graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  inline const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

struct GradientOptions {
  /// Throw ContractError if some `wrt` node does not reach the output
  /// through differentiable operations.
  bool require_participation = false;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = delete;
  Graph& operator=(Graph&&) = delete;

  Var leaf(std::string name, Tensor value) {
    Node n;
    n.op = OpKind::Leaf;
    n.name = std::move(name);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Tensor value) {
    Node n;
    n.op = OpKind::Constant;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, nodes_.size() - 1);
  }

  Var constant(double v) { return constant(Tensor::scalar(v)); }

  /// Appends a computed node. Operand Vars must belong to this graph.
  Var apply(OpKind op, Var a, std::optional<Var> b = std::nullopt, double scalar = 0.0,
            std::size_t offset = 0, std::size_t extent = 0) {
    check_owner(a);
    if (b) check_owner(*b);
    Node n;
    n.op = op;
    n.inputs = {a.id_, b ? b->id_ : 0};
    n.arity = b ? 2 : 1;
    n.scalar = scalar;
    n.offset = offset;
    n.extent = extent;
    const std::size_t id = nodes_.size();
    n.value = detail::evaluate(n, id, &nodes_[a.id_].value, b ? &nodes_[b->id_].value : nullptr);
    nodes_.push_back(std::move(n));
    return Var(this, id);
  }

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse-mode derivatives of the scalar `output` with respect to each
  /// `wrt` node (any node, not only leaves). The backward pass is appended
  /// as differentiable nodes. A `wrt` node that does not influence `output`
  /// gets a zero tensor of its own shape.
  inline std::vector<Var> gradient(Var output, std::span<const Var> wrt,
                                   GradientOptions options = {});

  std::vector<Var> gradient(Var output, std::initializer_list<Var> wrt,
                            GradientOptions options = {}) {
    return gradient(output, std::span<const Var>(wrt.begin(), wrt.size()), options);
  }

  /// Replays the recorded graph with new leaf values and returns the
  /// requested outputs. Every leaf up to the highest requested node must be
  /// bound. The graph is not modified.
  std::map<std::string, Tensor> forward(const std::map<std::string, Tensor>& leaves,
                                        const std::map<std::string, Var>& outputs) const {
    std::size_t last = 0;
    for (const auto& [name, v] : outputs) {
      if (v.graph_ != this) throw ContractError("forward: output '" + name + "' from another graph");
      last = std::max(last, v.id_);
    }
    std::vector<Tensor> vals(outputs.empty() ? 0 : last + 1);
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.op == OpKind::Leaf) {
        auto it = leaves.find(n.name);
        if (it == leaves.end()) throw ContractError("forward: leaf '" + n.name + "' is not bound");
        vals[i] = it->second;
      } else if (n.op == OpKind::Constant) {
        vals[i] = n.value;
      } else {
        vals[i] = detail::evaluate(n, i, &vals[n.inputs[0]],
                                   n.arity == 2 ? &vals[n.inputs[1]] : nullptr);
      }
    }
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : outputs) out.emplace(name, vals[v.id_]);
    return out;
  }

 private:
  void check_owner(Var v) const {
    if (v.graph_ != this) throw ContractError("operand belongs to a different graph");
  }

  inline void backprop_node(std::size_t id, Var grad, std::vector<std::optional<Var>>& adj,
                            const std::vector<char>& on_path);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const {
  if (!graph_) throw ContractError("value() on an unbound Var");
  return graph_->value(*this);
}

// ---------------------------------------------------------------------------
// Operation builders

inline Var matmul(Var a, Var b) { return a.graph()->apply(OpKind::MatMul, a, b); }
inline Var transpose(Var a) { return a.graph()->apply(OpKind::Transpose, a); }
inline Var detach(Var a) { return a.graph()->apply(OpKind::Detach, a); }
inline Var operator+(Var a, Var b) { return a.graph()->apply(OpKind::Add, a, b); }
inline Var operator-(Var a, Var b) { return a.graph()->apply(OpKind::Sub, a, b); }
inline Var operator*(Var a, Var b) { return a.graph()->apply(OpKind::Mul, a, b); }
inline Var operator*(Var a, double c) { return a.graph()->apply(OpKind::Scale, a, std::nullopt, c); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator-(Var a) { return a * -1.0; }
inline Var operator+(Var a, double c) { return a.graph()->apply(OpKind::AddScalar, a, std::nullopt, c); }
inline Var operator-(Var a, double c) { return a + (-c); }
inline Var add_row_vector(Var m, Var row) { return m.graph()->apply(OpKind::AddRowVector, m, row); }
inline Var mul_col_vector(Var m, Var col) { return m.graph()->apply(OpKind::MulColVector, m, col); }
inline Var relu(Var a) { return a.graph()->apply(OpKind::Relu, a); }
inline Var relu_mask(Var a) { return a.graph()->apply(OpKind::ReluMask, a); }
inline Var exp(Var a) { return a.graph()->apply(OpKind::Exp, a); }
inline Var log(Var a) { return a.graph()->apply(OpKind::Log, a); }
inline Var reciprocal(Var a) { return a.graph()->apply(OpKind::Reciprocal, a); }
inline Var safe_reciprocal(Var a) { return a.graph()->apply(OpKind::SafeReciprocal, a); }
inline Var sqrt(Var a) { return a.graph()->apply(OpKind::Sqrt, a); }
inline Var sigmoid(Var a) { return a.graph()->apply(OpKind::Sigmoid, a); }
inline Var log_sigmoid(Var a) { return a.graph()->apply(OpKind::LogSigmoid, a); }
inline Var log_softmax_rows(Var a) { return a.graph()->apply(OpKind::LogSoftmaxRows, a); }
inline Var sum(Var a) { return a.graph()->apply(OpKind::SumAll, a); }
inline Var mean(Var a) { return a.graph()->apply(OpKind::MeanAll, a); }
inline Var sum_rows(Var a) { return a.graph()->apply(OpKind::SumRows, a); }
inline Var sum_cols(Var a) { return a.graph()->apply(OpKind::SumCols, a); }
inline Var expand_scalar(Var s, Var like) { return s.graph()->apply(OpKind::ExpandScalar, s, like); }
inline Var expand_scalar_mean(Var s, Var like) {
  return s.graph()->apply(OpKind::ExpandScalarMean, s, like);
}
inline Var expand_rows(Var row, Var like) { return row.graph()->apply(OpKind::ExpandRows, row, like); }
inline Var expand_cols(Var col, Var like) { return col.graph()->apply(OpKind::ExpandCols, col, like); }
inline Var concat_cols(Var a, Var b) { return a.graph()->apply(OpKind::ConcatCols, a, b); }
inline Var slice_cols(Var a, std::size_t offset, std::size_t width) {
  return a.graph()->apply(OpKind::SliceCols, a, std::nullopt, 0.0, offset, width);
}
inline Var pad_cols(Var a, Var like, std::size_t offset) {
  return a.graph()->apply(OpKind::PadCols, a, like, 0.0, offset);
}

// Composites.

inline Var square(Var a) { return a * a; }
inline Var softmax_rows(Var a) { return exp(log_softmax_rows(a)); }
inline Var sum_squares(Var a) { return sum(a * a); }
/// Per-row squared Euclidean norms, Rx1.
inline Var row_squared_norms(Var a) { return sum_cols(a * a); }

/// x + t (y - x) with one t per row (Rx1 column).
inline Var interpolate(Var x, Var y, Var t_per_row) { return x + mul_col_vector(y - x, t_per_row); }

/// x + t (y - x) for scalar t.
inline Var interpolate(Var x, Var y, double t) { return x + (y - x) * t; }

// ---------------------------------------------------------------------------
// Backward pass

inline void Graph::backprop_node(std::size_t id, Var g, std::vector<std::optional<Var>>& adj,
                                 const std::vector<char>& on_path) {
  // Copy what we need: appending nodes may reallocate nodes_.
  const OpKind op = nodes_[id].op;
  const std::size_t i0 = nodes_[id].inputs[0];
  const std::size_t i1 = nodes_[id].inputs[1];
  const double scalar = nodes_[id].scalar;
  const std::size_t offset = nodes_[id].offset;
  const Var y(this, id);
  const Var a(this, i0);
  const Var b(this, i1);

  auto accumulate = [&](std::size_t target, int index, auto&& make) {
    if (!propagates_to(op, index) || !on_path[target]) return;
    Var contrib = make();
    adj[target] = adj[target] ? *adj[target] + contrib : contrib;
  };

  switch (op) {
    case OpKind::Leaf:
    case OpKind::Constant:
    case OpKind::Detach:
    case OpKind::ReluMask:
      return;
    case OpKind::MatMul:
      accumulate(i0, 0, [&] { return matmul(g, transpose(b)); });
      accumulate(i1, 1, [&] { return matmul(transpose(a), g); });
      return;
    case OpKind::Transpose:
      accumulate(i0, 0, [&] { return transpose(g); });
      return;
    case OpKind::Add:
      accumulate(i0, 0, [&] { return g; });
      accumulate(i1, 1, [&] { return g; });
      return;
    case OpKind::Sub:
      accumulate(i0, 0, [&] { return g; });
      accumulate(i1, 1, [&] { return -g; });
      return;
    case OpKind::Mul:
      accumulate(i0, 0, [&] { return g * b; });
      accumulate(i1, 1, [&] { return g * a; });
      return;
    case OpKind::AddRowVector:
      accumulate(i0, 0, [&] { return g; });
      accumulate(i1, 1, [&] { return sum_rows(g); });
      return;
    case OpKind::MulColVector:
      accumulate(i0, 0, [&] { return mul_col_vector(g, b); });
      accumulate(i1, 1, [&] { return sum_cols(g * a); });
      return;
    case OpKind::Scale:
      accumulate(i0, 0, [&] { return g * scalar; });
      return;
    case OpKind::AddScalar:
      accumulate(i0, 0, [&] { return g; });
      return;
    case OpKind::Relu:
      accumulate(i0, 0, [&] { return g * relu_mask(a); });
      return;
    case OpKind::Exp:
      accumulate(i0, 0, [&] { return g * y; });
      return;
    case OpKind::Log:
      accumulate(i0, 0, [&] { return g * reciprocal(a); });
      return;
    case OpKind::Reciprocal:
    case OpKind::SafeReciprocal:
      accumulate(i0, 0, [&] { return -(g * (y * y)); });
      return;
    case OpKind::Sqrt:
      accumulate(i0, 0, [&] { return (g * safe_reciprocal(y)) * 0.5; });
      return;
    case OpKind::Sigmoid:
      accumulate(i0, 0, [&] { return g * (y * ((-y) + 1.0)); });
      return;
    case OpKind::LogSigmoid:
      accumulate(i0, 0, [&] { return g * sigmoid(-a); });
      return;
    case OpKind::LogSoftmaxRows:
      accumulate(i0, 0, [&] { return g - mul_col_vector(exp(y), sum_cols(g)); });
      return;
    case OpKind::SumAll:
      accumulate(i0, 0, [&] { return expand_scalar(g, a); });
      return;
    case OpKind::MeanAll:
      accumulate(i0, 0, [&] { return expand_scalar_mean(g, a); });
      return;
    case OpKind::SumRows:
      accumulate(i0, 0, [&] { return expand_rows(g, a); });
      return;
    case OpKind::SumCols:
      accumulate(i0, 0, [&] { return expand_cols(g, a); });
      return;
    case OpKind::ExpandScalar:
      accumulate(i0, 0, [&] { return sum(g); });
      return;
    case OpKind::ExpandScalarMean:
      accumulate(i0, 0, [&] { return mean(g); });
      return;
    case OpKind::ExpandRows:
      accumulate(i0, 0, [&] { return sum_rows(g); });
      return;
    case OpKind::ExpandCols:
      accumulate(i0, 0, [&] { return sum_cols(g); });
      return;
    case OpKind::ConcatCols: {
      const std::size_t ca = nodes_[i0].value.cols();
      const std::size_t cb = nodes_[i1].value.cols();
      accumulate(i0, 0, [&] { return slice_cols(g, 0, ca); });
      accumulate(i1, 1, [&] { return slice_cols(g, ca, cb); });
      return;
    }
    case OpKind::SliceCols:
      accumulate(i0, 0, [&] { return pad_cols(g, a, offset); });
      return;
    case OpKind::PadCols: {
      const std::size_t width = nodes_[i0].value.cols();
      accumulate(i0, 0, [&] { return slice_cols(g, offset, width); });
      return;
    }
  }
}

inline std::vector<Var> Graph::gradient(Var output, std::span<const Var> wrt,
                                        GradientOptions options) {
  check_owner(output);
  if (value(output).rank() != 0) {
    throw ContractError("gradient: output node " + std::to_string(output.id_) + " has shape " +
                        value(output).shape_string() + ", expected []");
  }
  const std::size_t last = output.id_;
  std::vector<char> depends(last + 1, 0);
  for (Var w : wrt) {
    check_owner(w);
    if (w.id_ <= last) depends[w.id_] = 1;
  }
  // Forward sweep: nodes that depend differentiably on some wrt node.
  for (std::size_t i = 0; i <= last; ++i) {
    if (depends[i]) continue;
    const Node& n = nodes_[i];
    for (int k = 0; k < n.arity; ++k) {
      if (propagates_to(n.op, k) && depends[n.inputs[k]]) depends[i] = 1;
    }
  }
  // Backward sweep: nodes the output depends on differentiably.
  std::vector<char> on_path(last + 1, 0);
  on_path[last] = depends[last];
  for (std::size_t i = last + 1; i-- > 0;) {
    if (!on_path[i]) continue;
    const Node& n = nodes_[i];
    for (int k = 0; k < n.arity; ++k) {
      const std::size_t in = n.inputs[k];
      if (propagates_to(n.op, k) && depends[in]) on_path[in] = 1;
    }
  }
  if (options.require_participation) {
    for (Var w : wrt) {
      if (w.id_ > last || !on_path[w.id_]) {
        throw ContractError("gradient: node " + std::to_string(w.id_) + " (" +
                            std::string(op_name(nodes_[w.id_].op)) +
                            ") does not reach the output through differentiable operations");
      }
    }
  }

  std::vector<std::optional<Var>> adj(last + 1);
  if (on_path[last]) adj[last] = constant(Tensor::scalar(1.0));
  for (std::size_t i = last + 1; i-- > 0;) {
    if (!on_path[i] || !adj[i]) continue;
    backprop_node(i, *adj[i], adj, on_path);
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id_ <= last && adj[w.id_]) {
      result.push_back(*adj[w.id_]);
    } else {
      result.push_back(constant(Tensor(nodes_[w.id_].value.shape())));
    }
  }
  return result;
}

}  // namespace baae::diff
