#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace codi {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Handle to a node in a Graph. Cheap to copy; valid for the lifetime of
// the owning graph.
class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return graph_ != nullptr; }
  const Shape& shape() const;
  const std::vector<double>& values() const;
  bool requires_grad() const;
  int64_t numel() const;
  int rows() const;
  int cols() const;

  // Scalar value; throws unless numel() == 1.
  double item() const;

  // Gradient with respect to this tensor. Valid after Graph::backward;
  // zeros if the tensor did not participate in the differentiated loss.
  std::vector<double> grad() const;

  int32_t id() const { return id_; }
  Graph* graph() const { return graph_; }

 private:
  friend class Graph;
  Tensor(Graph* g, int32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int32_t id_ = -1;
};

// Append-only operation tape. Every node's inputs precede it, so reverse
// iteration over the tape is a topological order for backprop. A graph and
// its tensors belong to one logical thread for a forward/backward pass.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- node creation -------------------------------------------------

  Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false);
  Tensor constant(Shape shape, std::vector<double> values);
  Tensor zeros(Shape shape, bool requires_grad = false);
  Tensor full(Shape shape, double value, bool requires_grad = false);
  Tensor scalar(double value);

  // ---- operations ----------------------------------------------------

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  // (m x k) * (k x n) -> (m x n)
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  // exp-normalize along `axis`; rank-1 tensors use axis 0.
  Tensor softmax(const Tensor& a, int axis);
  // x * sigmoid(x)
  Tensor silu(const Tensor& a);
  // Row-wise RMS normalization of x [T x d] scaled by w [d].
  Tensor rmsnorm(const Tensor& x, const Tensor& w, double eps = 1e-6);
  // Gather rows of table [V x d]; backward scatter-adds duplicate ids.
  Tensor embedding(const Tensor& table, const std::vector<int>& ids);
  Tensor concat(const std::vector<Tensor>& parts, int axis);
  // Half-open range [begin, end) along `axis` of a rank-2 tensor.
  Tensor slice(const Tensor& a, int axis, int begin, int end);
  Tensor sum(const Tensor& a);
  // Mean over masked-in positions of -log softmax(logits)[target].
  // Masked-out positions contribute nothing to value or gradient.
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                       const std::vector<uint8_t>& mask);
  // Mean absolute difference over all elements.
  Tensor l1_mean(const Tensor& a, const Tensor& b);
  // Identity on values; backward propagates exactly zero upstream.
  Tensor stop_gradient(const Tensor& a);

  // ---- differentiation -----------------------------------------------

  // Reverse-mode accumulation from a scalar loss. A graph can be
  // differentiated once; a second call is an error.
  void backward(const Tensor& loss);
  bool backward_called() const { return backward_called_; }

  size_t size() const { return nodes_.size(); }

  const Shape& shape_of(int32_t id) const;
  const std::vector<double>& values_of(int32_t id) const;
  bool requires_grad_of(int32_t id) const;
  std::vector<double> grad_of(int32_t id) const;

 private:
  enum class Op : uint8_t {
    kLeaf,
    kAdd,
    kMul,
    kScale,
    kMatmul,
    kTranspose,
    kSoftmax,
    kSilu,
    kRmsNorm,
    kEmbedding,
    kConcat,
    kSlice,
    kSum,
    kCrossEntropy,
    kL1Mean,
    kStopGradient,
  };

  struct Node {
    Op op = Op::kLeaf;
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    int32_t a = -1;
    int32_t b = -1;
    std::vector<int32_t> extra;    // concat inputs beyond the first two
    std::vector<int32_t> indices;  // embedding ids / cross-entropy targets
    std::vector<uint8_t> mask;     // cross-entropy position mask
    std::vector<double> aux;       // cached forward intermediates
    double param = 0.0;            // scale factor / rmsnorm eps
    int axis = 0;
    int begin = 0;
  };

  Tensor push(Node node);
  Node& at(int32_t id);
  const Node& at(int32_t id) const;
  void ensure_grad(Node& n);
  void backward_node(int32_t id);

  std::vector<Node> nodes_;
  bool backward_called_ = false;
};

}  // namespace codi
