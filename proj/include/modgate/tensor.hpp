#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Results of operators on
// tensors that require gradients record their inputs and a backward rule;
// calling backward() on a scalar result accumulates dLoss/dLeaf into every
// reachable leaf that requires gradients and then releases the graph.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "modgate/errors.hpp"

namespace modgate {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Plain value-semantic array, used for data that never enters a graph
/// (clips, audio samples).
struct NdArray {
  Shape shape;
  std::vector<double> data;

  NdArray() = default;
  NdArray(Shape s, std::vector<double> d);
  explicit NdArray(Shape s);

  std::size_t size() const { return data.size(); }
  bool operator==(const NdArray&) const = default;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from(const NdArray& array, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  /// Writable access; only legal on leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  /// Reverse pass from a scalar. Throws GraphError on a non-scalar or an
  /// already consumed graph, NumericError on non-finite gradients.
  void backward() const;

  /// Copy of the values with no graph attached.
  Tensor detach() const;
  NdArray to_array() const;

  /// Same underlying node.
  bool same(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend struct TensorAccess;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Operators. Shapes follow ordinary array semantics; `axis` arguments index
// into the operand's shape.

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Elementwise sum of equal shapes, or `b` of shape [n] broadcast along the
/// last axis of `a` (bias add).
Tensor add(const Tensor& a, const Tensor& b);
/// Elementwise product of equal shapes.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// Multiplies row r (axis 0) by the constant factors[r].
Tensor scale_rows(const Tensor& a, std::span<const double> factors);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
std::vector<Tensor> split(const Tensor& a, std::size_t axis, std::span<const std::size_t> sizes);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);
/// Normalizes along `axis`; gamma/beta (length shape[axis]) are optional.
Tensor layer_norm(const Tensor& a, std::size_t axis, const Tensor& gamma = {},
                  const Tensor& beta = {}, double eps = 1e-5);
/// Mean over `axis`, which is removed from the shape.
Tensor mean(const Tensor& a, std::size_t axis);
/// Sum of all elements, shape [].
Tensor sum(const Tensor& a);
/// x[..., in] * W[in, out] + b[out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Selects rows along axis 0.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
/// Repeats the whole tensor `times` along axis 0.
Tensor tile_rows(const Tensor& a, std::size_t times);
Tensor reshape(const Tensor& a, Shape shape);

/// Compressed list of key rows for every query row of an attention call.
/// Query r attends to keys[offsets[r] .. offsets[r+1]); a query with no keys
/// yields a zero output row.
struct AttentionLayout {
  std::vector<std::size_t> offsets;
  std::vector<std::uint32_t> keys;

  std::size_t rows() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

/// Multi-head scaled dot-product attention restricted to the layout's key
/// lists. q, k, v: [R, D] with D divisible by `heads`.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const AttentionLayout& layout);

/// Mean over rows of -log softmax(logits)[label]. logits: [U] or [B, U].
Tensor ce_loss(const Tensor& logits, std::span<const std::size_t> labels);
/// Mean binary cross-entropy; pred is clamped into [eps, 1 - eps].
Tensor bce_loss(const Tensor& pred, std::span<const double> targets, double eps = 1e-7);

}  // namespace modgate
