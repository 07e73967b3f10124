#include "modgate/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace modgate {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into its inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

const NodePtr& node_of(const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("undefined tensor");
  return TensorAccess::node(t);
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite output in ") + op);
  }
}

// Outer/axis/inner decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit axis_split(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

// Builds the result node. Inputs and the backward rule are only kept when
// some input requires gradients.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> backward, const char* op) {
  check_finite(value, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rg = false;
  for (const auto& in : inputs) rg = rg || in->requires_grad;
  if (rg) {
    n->requires_grad = true;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return TensorAccess::wrap(std::move(n));
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NdArray::NdArray(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("array data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
}

NdArray::NdArray(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive: " + shape_str(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  check_finite(values, "tensor construction");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(const NdArray& array, bool requires_grad) {
  return from(array.shape, array.data, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto count = shape_size(shape);
  return from(std::move(shape), std::vector<double>(count, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_of(*this)->shape; }
std::size_t Tensor::size() const { return node_of(*this)->value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for " + shape_str(s));
  return s[axis];
}

std::span<const double> Tensor::data() const { return node_of(*this)->value; }

std::span<double> Tensor::mutable_data() {
  const auto& n = node_of(*this);
  if (!n->is_leaf()) throw GraphError("mutable_data on a non-leaf tensor");
  return n->value;
}

double Tensor::item() const {
  const auto& n = node_of(*this);
  if (n->value.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(n->shape));
  return n->value[0];
}

bool Tensor::requires_grad() const { return node_of(*this)->requires_grad; }
bool Tensor::is_leaf() const { return node_of(*this)->is_leaf(); }
bool Tensor::has_grad() const { return !node_of(*this)->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_of(*this)->grad; }
void Tensor::clear_grad() { node_of(*this)->grad.clear(); }

Tensor Tensor::detach() const {
  const auto& n = node_of(*this);
  return from(n->shape, n->value, false);
}

NdArray Tensor::to_array() const {
  const auto& n = node_of(*this);
  return NdArray(n->shape, n->value);
}

void Tensor::backward() const {
  const NodePtr& root = node_of(*this);
  if (root->consumed) throw GraphError("backward on an already consumed graph");
  if (root->value.size() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + shape_str(root->shape));
  }
  if (!root->requires_grad) throw GraphError("loss does not depend on any gradient-tracked tensor");

  // Iterative post-order DFS; `order` ends up with inputs before consumers.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) {
      n->grad.assign(n->value.size(), 0.0);
    } else if (n->grad.empty()) {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->is_leaf()) {
      check_finite(n->grad, "backward");
    } else {
      n->inputs.clear();
      n->backward = nullptr;
      n->grad.clear();
      n->grad.shrink_to_fit();
      n->consumed = true;
      // A released interior node behaves as a constant from now on.
      n->requires_grad = false;
    }
  }
  root->consumed = true;
}

// ---------------------------------------------------------------------------
// Operators

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = node_of(a);
  const auto& nb = node_of(b);
  if (na->shape.size() != 2 || nb->shape.size() != 2 || na->shape[1] != nb->shape[0]) {
    throw ShapeError("matmul: cannot contract " + shape_str(na->shape) + " with " +
                     shape_str(nb->shape));
  }
  const std::size_t m = na->shape[0], k = na->shape[1], n = nb->shape[1];
  std::vector<double> out(m * n, 0.0);
  const double* A = na->value.data();
  const double* B = nb->value.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result(
      {m, n}, std::move(out), {na, nb},
      [m, k, n](Node& self) {
        Node& A = *self.inputs[0];
        Node& B = *self.inputs[1];
        const double* dC = self.grad.data();
        if (A.requires_grad) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double* brow = B.value.data() + p * n;
              const double* drow = dC + i * n;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += drow[j] * brow[j];
              A.grad[i * k + p] += acc;
            }
          }
        }
        if (B.requires_grad) {
          for (std::size_t i = 0; i < m; ++i) {
            const double* drow = dC + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = A.value[i * k + p];
              if (aip == 0.0) continue;
              double* gb = B.grad.data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gb[j] += aip * drow[j];
            }
          }
        }
      },
      "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
  const auto& na = node_of(a);
  const auto& nb = node_of(b);
  if (na->shape == nb->shape) {
    std::vector<double> out(na->value.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->value[i] + nb->value[i];
    return make_result(
        na->shape, std::move(out), {na, nb},
        [](Node& self) {
          for (auto& in : self.inputs) {
            if (!in->requires_grad) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
          }
        },
        "add");
  }
  if (nb->shape.size() == 1 && !na->shape.empty() && na->shape.back() == nb->shape[0]) {
    const std::size_t cols = nb->shape[0];
    std::vector<double> out(na->value);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += nb->value[i % cols];
    return make_result(
        na->shape, std::move(out), {na, nb},
        [cols](Node& self) {
          Node& A = *self.inputs[0];
          Node& B = *self.inputs[1];
          if (A.requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
          }
          if (B.requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) B.grad[i % cols] += self.grad[i];
          }
        },
        "add");
  }
  throw ShapeError("add: incompatible shapes " + shape_str(na->shape) + " and " +
                   shape_str(nb->shape));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const auto& na = node_of(a);
  const auto& nb = node_of(b);
  if (na->shape != nb->shape) {
    throw ShapeError("mul: shape mismatch " + shape_str(na->shape) + " vs " + shape_str(nb->shape));
  }
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->value[i] * nb->value[i];
  return make_result(
      na->shape, std::move(out), {na, nb},
      [](Node& self) {
        Node& A = *self.inputs[0];
        Node& B = *self.inputs[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (A.requires_grad) A.grad[i] += self.grad[i] * B.value[i];
          if (B.requires_grad) B.grad[i] += self.grad[i] * A.value[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, double factor) {
  const auto& na = node_of(a);
  std::vector<double> out(na->value);
  for (auto& x : out) x *= factor;
  return make_result(
      na->shape, std::move(out), {na},
      [factor](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += factor * self.grad[i];
      },
      "scale");
}

Tensor scale_rows(const Tensor& a, std::span<const double> factors) {
  const auto& na = node_of(a);
  if (na->shape.empty() || na->shape[0] != factors.size()) {
    throw ShapeError("scale_rows: " + std::to_string(factors.size()) + " factors for shape " +
                     shape_str(na->shape));
  }
  const std::size_t width = na->value.size() / factors.size();
  std::vector<double> f(factors.begin(), factors.end());
  std::vector<double> out(na->value);
  for (std::size_t r = 0; r < f.size(); ++r) {
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] *= f[r];
  }
  return make_result(
      na->shape, std::move(out), {na},
      [f = std::move(f), width](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t r = 0; r < f.size(); ++r) {
          for (std::size_t j = 0; j < width; ++j) A.grad[r * width + j] += f[r] * self.grad[r * width + j];
        }
      },
      "scale_rows");
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<NodePtr> nodes;
  for (const auto& p : parts) nodes.push_back(node_of(p));
  Shape out_shape = nodes[0]->shape;
  auto first = axis_split(out_shape, axis, "concat");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& n : nodes) {
    if (n->shape.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < out_shape.size(); ++d) {
      if (d != axis && n->shape[d] != out_shape[d]) {
        throw ShapeError("concat: shape mismatch " + shape_str(n->shape) + " vs " +
                         shape_str(out_shape));
      }
    }
    widths.push_back(n->shape[axis] * first.inner);
    total += n->shape[axis];
  }
  out_shape[axis] = total;
  const std::size_t outer = first.outer;
  const std::size_t row = total * first.inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < nodes.size(); ++p) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(nodes[p]->value.data() + o * widths[p], widths[p], out.data() + o * row + offset);
    }
    offset += widths[p];
  }
  return make_result(
      out_shape, std::move(out), nodes,
      [widths, outer, row](Node& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < self.inputs.size(); ++p) {
          Node& in = *self.inputs[p];
          if (in.requires_grad) {
            for (std::size_t o = 0; o < outer; ++o) {
              for (std::size_t j = 0; j < widths[p]; ++j) {
                in.grad[o * widths[p] + j] += self.grad[o * row + off + j];
              }
            }
          }
          off += widths[p];
        }
      },
      "concat");
}

std::vector<Tensor> split(const Tensor& a, std::size_t axis, std::span<const std::size_t> sizes) {
  const auto& na = node_of(a);
  auto ax = axis_split(na->shape, axis, "split");
  std::size_t total = 0;
  for (auto s : sizes) {
    if (s == 0) throw ShapeError("split: zero-sized part");
    total += s;
  }
  if (total != ax.n) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) + ", axis has " +
                     std::to_string(ax.n));
  }
  const std::size_t row = ax.n * ax.inner;
  std::vector<Tensor> out;
  std::size_t start = 0;
  for (auto s : sizes) {
    Shape shp = na->shape;
    shp[axis] = s;
    const std::size_t width = s * ax.inner;
    const std::size_t off = start * ax.inner;
    std::vector<double> v(ax.outer * width);
    for (std::size_t o = 0; o < ax.outer; ++o) {
      std::copy_n(na->value.data() + o * row + off, width, v.data() + o * width);
    }
    out.push_back(make_result(
        std::move(shp), std::move(v), {na},
        [width, off, row, outer = ax.outer](Node& self) {
          Node& A = *self.inputs[0];
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t j = 0; j < width; ++j) A.grad[o * row + off + j] += self.grad[o * width + j];
          }
        },
        "split"));
    start += s;
  }
  return out;
}

Tensor relu(const Tensor& a) {
  const auto& na = node_of(a);
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = na->value[i] > 0.0 ? na->value[i] : 0.0;
  return make_result(
      na->shape, std::move(out), {na},
      [](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (A.value[i] > 0.0) A.grad[i] += self.grad[i];
        }
      },
      "relu");
}

Tensor sigmoid(const Tensor& a) {
  const auto& na = node_of(a);
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = na->value[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  std::vector<double> y = out;
  return make_result(
      na->shape, std::move(out), {na},
      [y = std::move(y)](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i] * y[i] * (1.0 - y[i]);
      },
      "sigmoid");
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto& na = node_of(a);
  auto ax = axis_split(na->shape, axis, "softmax");
  std::vector<double> out(na->value.size());
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      const std::size_t base = o * ax.n * ax.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < ax.n; ++j) mx = std::max(mx, na->value[base + j * ax.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < ax.n; ++j) {
        const double e = std::exp(na->value[base + j * ax.inner] - mx);
        out[base + j * ax.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < ax.n; ++j) out[base + j * ax.inner] /= z;
    }
  }
  std::vector<double> y = out;
  return make_result(
      na->shape, std::move(out), {na},
      [y = std::move(y), ax](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t o = 0; o < ax.outer; ++o) {
          for (std::size_t in = 0; in < ax.inner; ++in) {
            const std::size_t base = o * ax.n * ax.inner + in;
            double dot = 0.0;
            for (std::size_t j = 0; j < ax.n; ++j) {
              const std::size_t idx = base + j * ax.inner;
              dot += self.grad[idx] * y[idx];
            }
            for (std::size_t j = 0; j < ax.n; ++j) {
              const std::size_t idx = base + j * ax.inner;
              A.grad[idx] += y[idx] * (self.grad[idx] - dot);
            }
          }
        }
      },
      "softmax");
}

Tensor layer_norm(const Tensor& a, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const auto& na = node_of(a);
  auto ax = axis_split(na->shape, axis, "layer_norm");
  const bool affine = gamma.defined();
  if (affine != beta.defined()) throw ShapeError("layer_norm: gamma and beta must be given together");
  std::vector<NodePtr> inputs{na};
  if (affine) {
    const auto& ng = node_of(gamma);
    const auto& nbeta = node_of(beta);
    if (ng->value.size() != ax.n || nbeta->value.size() != ax.n) {
      throw ShapeError("layer_norm: affine parameters must have length " + std::to_string(ax.n));
    }
    inputs.push_back(ng);
    inputs.push_back(nbeta);
  }
  const std::size_t groups = ax.outer * ax.inner;
  std::vector<double> xhat(na->value.size());
  std::vector<double> inv_std(groups);
  std::vector<double> out(na->value.size());
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t in = 0; in < ax.inner; ++in) {
      const std::size_t base = o * ax.n * ax.inner + in;
      double mu = 0.0;
      for (std::size_t j = 0; j < ax.n; ++j) mu += na->value[base + j * ax.inner];
      mu /= static_cast<double>(ax.n);
      double var = 0.0;
      for (std::size_t j = 0; j < ax.n; ++j) {
        const double d = na->value[base + j * ax.inner] - mu;
        var += d * d;
      }
      var /= static_cast<double>(ax.n);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * ax.inner + in] = is;
      for (std::size_t j = 0; j < ax.n; ++j) {
        const std::size_t idx = base + j * ax.inner;
        xhat[idx] = (na->value[idx] - mu) * is;
        out[idx] = affine ? xhat[idx] * inputs[1]->value[j] + inputs[2]->value[j] : xhat[idx];
      }
    }
  }
  return make_result(
      na->shape, std::move(out), std::move(inputs),
      [xhat = std::move(xhat), inv_std = std::move(inv_std), ax, affine](Node& self) {
        Node& A = *self.inputs[0];
        Node* G = affine ? self.inputs[1].get() : nullptr;
        Node* Bt = affine ? self.inputs[2].get() : nullptr;
        const double n = static_cast<double>(ax.n);
        for (std::size_t o = 0; o < ax.outer; ++o) {
          for (std::size_t in = 0; in < ax.inner; ++in) {
            const std::size_t base = o * ax.n * ax.inner + in;
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < ax.n; ++j) {
              const std::size_t idx = base + j * ax.inner;
              const double dy = self.grad[idx];
              if (affine) {
                if (G->requires_grad) G->grad[j] += dy * xhat[idx];
                if (Bt->requires_grad) Bt->grad[j] += dy;
              }
              const double dxhat = affine ? dy * G->value[j] : dy;
              sum_d += dxhat;
              sum_dx += dxhat * xhat[idx];
            }
            if (!A.requires_grad) continue;
            const double is = inv_std[o * ax.inner + in];
            for (std::size_t j = 0; j < ax.n; ++j) {
              const std::size_t idx = base + j * ax.inner;
              const double dxhat = affine ? self.grad[idx] * G->value[j] : self.grad[idx];
              A.grad[idx] += is * (dxhat - sum_d / n - xhat[idx] * sum_dx / n);
            }
          }
        }
      },
      "layer_norm");
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const auto& na = node_of(a);
  auto ax = axis_split(na->shape, axis, "mean");
  Shape shp = na->shape;
  shp.erase(shp.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(ax.outer * ax.inner, 0.0);
  for (std::size_t o = 0; o < ax.outer; ++o) {
    for (std::size_t j = 0; j < ax.n; ++j) {
      for (std::size_t in = 0; in < ax.inner; ++in) {
        out[o * ax.inner + in] += na->value[(o * ax.n + j) * ax.inner + in];
      }
    }
  }
  for (auto& x : out) x /= static_cast<double>(ax.n);
  return make_result(
      std::move(shp), std::move(out), {na},
      [ax](Node& self) {
        Node& A = *self.inputs[0];
        const double f = 1.0 / static_cast<double>(ax.n);
        for (std::size_t o = 0; o < ax.outer; ++o) {
          for (std::size_t j = 0; j < ax.n; ++j) {
            for (std::size_t in = 0; in < ax.inner; ++in) {
              A.grad[(o * ax.n + j) * ax.inner + in] += f * self.grad[o * ax.inner + in];
            }
          }
        }
      },
      "mean");
}

Tensor sum(const Tensor& a) {
  const auto& na = node_of(a);
  double s = 0.0;
  for (double x : na->value) s += x;
  return make_result(
      {}, {s}, {na},
      [](Node& self) {
        Node& A = *self.inputs[0];
        for (auto& g : A.grad) g += self.grad[0];
      },
      "sum");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const auto& nx = node_of(x);
  const auto& nw = node_of(weight);
  if (nw->shape.size() != 2 || nx->shape.empty() || nx->shape.back() != nw->shape[0]) {
    throw ShapeError("linear: input " + shape_str(nx->shape) + " incompatible with weight " +
                     shape_str(nw->shape));
  }
  const std::size_t in = nw->shape[0];
  const std::size_t rows = nx->value.size() / in;
  Tensor flat = reshape(x, {rows, in});
  Tensor y = matmul(flat, weight);
  if (bias.defined()) y = add(y, bias);
  Shape out_shape = nx->shape;
  out_shape.back() = nw->shape[1];
  return reshape(y, std::move(out_shape));
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  const auto& na = node_of(a);
  if (na->shape.empty() || rows.empty()) throw ShapeError("gather_rows: empty selection");
  const std::size_t n = na->shape[0];
  const std::size_t width = na->value.size() / n;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(na->value.data() + idx[r] * width, width, out.data() + r * width);
  }
  Shape shp = na->shape;
  shp[0] = idx.size();
  return make_result(
      std::move(shp), std::move(out), {na},
      [idx = std::move(idx), width](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t r = 0; r < idx.size(); ++r) {
          for (std::size_t j = 0; j < width; ++j) A.grad[idx[r] * width + j] += self.grad[r * width + j];
        }
      },
      "gather_rows");
}

Tensor tile_rows(const Tensor& a, std::size_t times) {
  const auto& na = node_of(a);
  if (na->shape.empty() || times == 0) throw ShapeError("tile_rows: needs rank >= 1 and times > 0");
  const std::size_t block = na->value.size();
  std::vector<double> out(block * times);
  for (std::size_t t = 0; t < times; ++t) std::copy_n(na->value.data(), block, out.data() + t * block);
  Shape shp = na->shape;
  shp[0] *= times;
  return make_result(
      std::move(shp), std::move(out), {na},
      [block, times](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t t = 0; t < times; ++t) {
          for (std::size_t j = 0; j < block; ++j) A.grad[j] += self.grad[t * block + j];
        }
      },
      "tile_rows");
}

Tensor reshape(const Tensor& a, Shape shape) {
  const auto& na = node_of(a);
  if (shape_size(shape) != na->value.size()) {
    throw ShapeError("reshape: " + shape_str(na->shape) + " to " + shape_str(shape));
  }
  return make_result(
      std::move(shape), na->value, {na},
      [](Node& self) {
        Node& A = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) A.grad[i] += self.grad[i];
      },
      "reshape");
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                 const AttentionLayout& layout) {
  const auto& nq = node_of(q);
  const auto& nk = node_of(k);
  const auto& nv = node_of(v);
  if (nq->shape.size() != 2 || nq->shape != nk->shape || nq->shape != nv->shape) {
    throw ShapeError("attention: q/k/v must share a [rows, dim] shape");
  }
  const std::size_t rows = nq->shape[0];
  const std::size_t width = nq->shape[1];
  if (heads == 0 || width % heads != 0) throw ShapeError("attention: dim not divisible by heads");
  if (layout.rows() != rows) throw ShapeError("attention: layout row count mismatch");
  for (auto key : layout.keys) {
    if (key >= rows) throw ShapeError("attention: key index out of range");
  }
  const std::size_t dh = width / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs[h * nnz + e] for edge e of the CSR layout.
  const std::size_t nnz = layout.keys.size();
  std::vector<double> probs(heads * nnz);
  std::vector<double> out(rows * width, 0.0);
  const double* Q = nq->value.data();
  const double* K = nk->value.data();
  const double* V = nv->value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t b = layout.offsets[r], e = layout.offsets[r + 1];
    if (b == e) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      const double* qr = Q + r * width + h * dh;
      double* p = probs.data() + h * nnz;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = b; t < e; ++t) {
        const double* kr = K + layout.keys[t] * width + h * dh;
        double s = 0.0;
        for (std::size_t d = 0; d < dh; ++d) s += qr[d] * kr[d];
        p[t] = s * sc;
        mx = std::max(mx, p[t]);
      }
      double z = 0.0;
      for (std::size_t t = b; t < e; ++t) {
        p[t] = std::exp(p[t] - mx);
        z += p[t];
      }
      double* orow = out.data() + r * width + h * dh;
      for (std::size_t t = b; t < e; ++t) {
        p[t] /= z;
        const double* vr = V + layout.keys[t] * width + h * dh;
        for (std::size_t d = 0; d < dh; ++d) orow[d] += p[t] * vr[d];
      }
    }
  }
  return make_result(
      nq->shape, std::move(out), {nq, nk, nv},
      [probs = std::move(probs), layout, heads, dh, width, sc, nnz](Node& self) {
        Node& Qn = *self.inputs[0];
        Node& Kn = *self.inputs[1];
        Node& Vn = *self.inputs[2];
        const std::size_t rows = layout.rows();
        std::vector<double> dp;
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t b = layout.offsets[r], e = layout.offsets[r + 1];
          if (b == e) continue;
          dp.resize(e - b);
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs.data() + h * nnz;
            const double* go = self.grad.data() + r * width + h * dh;
            double dot = 0.0;
            for (std::size_t t = b; t < e; ++t) {
              const std::size_t key = layout.keys[t];
              const double* vr = Vn.value.data() + key * width + h * dh;
              double s = 0.0;
              for (std::size_t d = 0; d < dh; ++d) s += go[d] * vr[d];
              dp[t - b] = s;
              dot += p[t] * s;
              if (Vn.requires_grad) {
                double* gv = Vn.grad.data() + key * width + h * dh;
                for (std::size_t d = 0; d < dh; ++d) gv[d] += p[t] * go[d];
              }
            }
            const double* qr = Qn.value.data() + r * width + h * dh;
            double* gq = Qn.grad.empty() ? nullptr : Qn.grad.data() + r * width + h * dh;
            for (std::size_t t = b; t < e; ++t) {
              const double ds = p[t] * (dp[t - b] - dot) * sc;
              if (ds == 0.0) continue;
              const std::size_t key = layout.keys[t];
              if (Qn.requires_grad) {
                const double* kr = Kn.value.data() + key * width + h * dh;
                for (std::size_t d = 0; d < dh; ++d) gq[d] += ds * kr[d];
              }
              if (Kn.requires_grad) {
                double* gk = Kn.grad.data() + key * width + h * dh;
                for (std::size_t d = 0; d < dh; ++d) gk[d] += ds * qr[d];
              }
            }
          }
        }
      },
      "attention");
}

Tensor ce_loss(const Tensor& logits, std::span<const std::size_t> labels) {
  const auto& nl = node_of(logits);
  std::size_t batch = 0, classes = 0;
  if (nl->shape.size() == 1) {
    batch = 1;
    classes = nl->shape[0];
  } else if (nl->shape.size() == 2) {
    batch = nl->shape[0];
    classes = nl->shape[1];
  } else {
    throw ShapeError("ce_loss: logits must be [U] or [B,U], got " + shape_str(nl->shape));
  }
  if (classes < 2) throw ShapeError("ce_loss: need at least two classes");
  if (labels.size() != batch) throw ShapeError("ce_loss: label count does not match batch");
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  std::vector<double> probs(batch * classes);
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (lab[b] >= classes) throw std::out_of_range("ce_loss: label " + std::to_string(lab[b]) + " out of range");
    const double* row = nl->value.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    loss += lse - row[lab[b]];
    for (std::size_t j = 0; j < classes; ++j) probs[b * classes + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(batch);
  return make_result(
      {}, {loss}, {nl},
      [probs = std::move(probs), lab = std::move(lab), classes](Node& self) {
        Node& L = *self.inputs[0];
        const double g = self.grad[0] / static_cast<double>(lab.size());
        for (std::size_t b = 0; b < lab.size(); ++b) {
          for (std::size_t j = 0; j < classes; ++j) {
            const double onehot = j == lab[b] ? 1.0 : 0.0;
            L.grad[b * classes + j] += g * (probs[b * classes + j] - onehot);
          }
        }
      },
      "ce_loss");
}

Tensor bce_loss(const Tensor& pred, std::span<const double> targets, double eps) {
  const auto& np = node_of(pred);
  if (np->value.size() != targets.size()) throw ShapeError("bce_loss: target count mismatch");
  std::vector<double> t(targets.begin(), targets.end());
  for (double x : t) {
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("bce_loss: target outside [0,1]");
  }
  const std::size_t n = t.size();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(np->value[i], eps, 1.0 - eps);
    loss -= t[i] * std::log(p) + (1.0 - t[i]) * std::log(1.0 - p);
  }
  loss /= static_cast<double>(n);
  return make_result(
      {}, {loss}, {np},
      [t = std::move(t), eps](Node& self) {
        Node& P = *self.inputs[0];
        const double g = self.grad[0] / static_cast<double>(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
          const double raw = P.value[i];
          if (raw < eps || raw > 1.0 - eps) continue;  // clamped: flat
          P.grad[i] += g * (raw - t[i]) / (raw * (1.0 - raw));
        }
      },
      "bce_loss");
}

}  // namespace modgate
