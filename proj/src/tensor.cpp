#include "codi/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace codi {

namespace {

[[noreturn]] void dim_error(const std::string& msg) { throw std::invalid_argument(msg); }

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---- Tensor ------------------------------------------------------------

const Shape& Tensor::shape() const { return graph_->shape_of(id_); }
const std::vector<double>& Tensor::values() const { return graph_->values_of(id_); }
bool Tensor::requires_grad() const { return graph_->requires_grad_of(id_); }
int64_t Tensor::numel() const { return shape_numel(shape()); }

int Tensor::rows() const {
  const Shape& s = shape();
  return s.empty() ? 0 : s[0];
}

int Tensor::cols() const {
  const Shape& s = shape();
  return s.size() < 2 ? 1 : s[1];
}

double Tensor::item() const {
  if (numel() != 1) {
    dim_error("item: tensor " + shape_str(shape()) + " is not scalar");
  }
  return values()[0];
}

std::vector<double> Tensor::grad() const { return graph_->grad_of(id_); }

// ---- Graph node plumbing -------------------------------------------------

Graph::Node& Graph::at(int32_t id) { return nodes_[static_cast<size_t>(id)]; }
const Graph::Node& Graph::at(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }

const Shape& Graph::shape_of(int32_t id) const { return at(id).shape; }
const std::vector<double>& Graph::values_of(int32_t id) const { return at(id).values; }
bool Graph::requires_grad_of(int32_t id) const { return at(id).requires_grad; }

std::vector<double> Graph::grad_of(int32_t id) const {
  if (!backward_called_) {
    throw std::logic_error("grad: backward has not been called on this graph");
  }
  const Node& n = at(id);
  if (n.grad.empty()) return std::vector<double>(n.values.size(), 0.0);
  return n.grad;
}

Tensor Graph::push(Node node) {
  if (backward_called_) {
    throw std::logic_error("graph: cannot add nodes after backward");
  }
  const int64_t expect = shape_numel(node.shape);
  if (expect != static_cast<int64_t>(node.values.size())) {
    dim_error("tensor: shape " + shape_str(node.shape) + " does not match value count " +
              std::to_string(node.values.size()));
  }
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int32_t>(nodes_.size() - 1));
}

void Graph::ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
}

Tensor Graph::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  for (int d : shape) {
    if (d < 0) dim_error("tensor: negative extent in shape " + shape_str(shape));
  }
  Node n;
  n.op = Op::kLeaf;
  n.shape = std::move(shape);
  n.values = std::move(values);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tensor Graph::constant(Shape shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Graph::zeros(Shape shape, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  return leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0), requires_grad);
}

Tensor Graph::full(Shape shape, double value, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  return leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), value), requires_grad);
}

Tensor Graph::scalar(double value) { return leaf({1}, {value}, false); }

// ---- elementwise ---------------------------------------------------------

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Node n;
  n.op = Op::kAdd;
  n.shape = a.shape();
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  const auto& av = a.values();
  const auto& bv = b.values();
  n.values.resize(av.size());
  for (size_t i = 0; i < av.size(); ++i) n.values[i] = av[i] + bv[i];
  return push(std::move(n));
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Node n;
  n.op = Op::kMul;
  n.shape = a.shape();
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  const auto& av = a.values();
  const auto& bv = b.values();
  n.values.resize(av.size());
  for (size_t i = 0; i < av.size(); ++i) n.values[i] = av[i] * bv[i];
  return push(std::move(n));
}

Tensor Graph::scale(const Tensor& a, double s) {
  Node n;
  n.op = Op::kScale;
  n.shape = a.shape();
  n.a = a.id();
  n.param = s;
  n.requires_grad = a.requires_grad();
  const auto& av = a.values();
  n.values.resize(av.size());
  for (size_t i = 0; i < av.size(); ++i) n.values[i] = av[i] * s;
  return push(std::move(n));
}

// ---- linear algebra -------------------------------------------------------

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    dim_error("matmul: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb));
  }
  const int m = sa[0], k = sa[1], ncols = sb[1];
  Node n;
  n.op = Op::kMatmul;
  n.shape = {m, ncols};
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  n.values.assign(static_cast<size_t>(m) * ncols, 0.0);
  gemm_acc(a.values().data(), b.values().data(), n.values.data(), m, k, ncols);
  return push(std::move(n));
}

Tensor Graph::transpose(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() != 2) dim_error("transpose: rank-2 tensor required, got " + shape_str(s));
  const int r = s[0], c = s[1];
  Node n;
  n.op = Op::kTranspose;
  n.shape = {c, r};
  n.a = a.id();
  n.requires_grad = a.requires_grad();
  n.values.resize(a.values().size());
  const auto& av = a.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      n.values[static_cast<size_t>(j) * r + i] = av[static_cast<size_t>(i) * c + j];
  return push(std::move(n));
}

// ---- nonlinearities --------------------------------------------------------

namespace {

// Iterates the slices a reduction axis defines: `count` slices of `len`
// elements spaced by `stride`, with consecutive slices offset by `jump`.
struct AxisView {
  int count, len, stride;
  std::vector<size_t> starts;
};

AxisView axis_view(const Shape& s, int axis) {
  AxisView v{};
  if (s.size() == 1) {
    if (axis != 0) dim_error("softmax: axis " + std::to_string(axis) + " invalid for rank-1");
    v.count = 1;
    v.len = s[0];
    v.stride = 1;
    v.starts = {0};
    return v;
  }
  if (s.size() != 2 || (axis != 0 && axis != 1)) {
    dim_error("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(s));
  }
  const int r = s[0], c = s[1];
  if (axis == 1) {
    v.count = r;
    v.len = c;
    v.stride = 1;
    for (int i = 0; i < r; ++i) v.starts.push_back(static_cast<size_t>(i) * c);
  } else {
    v.count = c;
    v.len = r;
    v.stride = c;
    for (int j = 0; j < c; ++j) v.starts.push_back(static_cast<size_t>(j));
  }
  return v;
}

}  // namespace

Tensor Graph::softmax(const Tensor& a, int axis) {
  const AxisView v = axis_view(a.shape(), axis);
  Node n;
  n.op = Op::kSoftmax;
  n.shape = a.shape();
  n.a = a.id();
  n.axis = axis;
  n.requires_grad = a.requires_grad();
  const auto& av = a.values();
  n.values.resize(av.size());
  for (int s = 0; s < v.count; ++s) {
    const size_t base = v.starts[static_cast<size_t>(s)];
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < v.len; ++i) mx = std::max(mx, av[base + static_cast<size_t>(i) * v.stride]);
    double denom = 0.0;
    for (int i = 0; i < v.len; ++i) {
      const size_t idx = base + static_cast<size_t>(i) * v.stride;
      n.values[idx] = std::exp(av[idx] - mx);
      denom += n.values[idx];
    }
    for (int i = 0; i < v.len; ++i) n.values[base + static_cast<size_t>(i) * v.stride] /= denom;
  }
  return push(std::move(n));
}

Tensor Graph::silu(const Tensor& a) {
  Node n;
  n.op = Op::kSilu;
  n.shape = a.shape();
  n.a = a.id();
  n.requires_grad = a.requires_grad();
  const auto& av = a.values();
  n.values.resize(av.size());
  n.aux.resize(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    const double s = sigmoid(av[i]);
    n.aux[i] = s;
    n.values[i] = av[i] * s;
  }
  return push(std::move(n));
}

Tensor Graph::rmsnorm(const Tensor& x, const Tensor& w, double eps) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 2) dim_error("rmsnorm: rank-2 input required, got " + shape_str(sx));
  const int rows = sx[0], d = sx[1];
  if (shape_numel(sw) != d) {
    dim_error("rmsnorm: weight " + shape_str(sw) + " does not match width " + std::to_string(d));
  }
  Node n;
  n.op = Op::kRmsNorm;
  n.shape = sx;
  n.a = x.id();
  n.b = w.id();
  n.param = eps;
  n.requires_grad = x.requires_grad() || w.requires_grad();
  const auto& xv = x.values();
  const auto& wv = w.values();
  n.values.resize(xv.size());
  n.aux.resize(static_cast<size_t>(rows));  // per-row 1/rms
  for (int i = 0; i < rows; ++i) {
    const size_t base = static_cast<size_t>(i) * d;
    double ms = 0.0;
    for (int j = 0; j < d; ++j) ms += xv[base + j] * xv[base + j];
    const double inv = 1.0 / std::sqrt(ms / d + eps);
    n.aux[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < d; ++j) n.values[base + j] = wv[static_cast<size_t>(j)] * xv[base + j] * inv;
  }
  return push(std::move(n));
}

// ---- gather / shape ---------------------------------------------------------

Tensor Graph::embedding(const Tensor& table, const std::vector<int>& ids) {
  const Shape& st = table.shape();
  if (st.size() != 2) dim_error("embedding: table must be rank-2, got " + shape_str(st));
  const int vocab = st[0], d = st[1];
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      dim_error("embedding: id " + std::to_string(id) + " out of range [0, " +
                std::to_string(vocab) + ")");
    }
  }
  Node n;
  n.op = Op::kEmbedding;
  n.shape = {static_cast<int>(ids.size()), d};
  n.a = table.id();
  n.indices.assign(ids.begin(), ids.end());
  n.requires_grad = table.requires_grad();
  const auto& tv = table.values();
  n.values.resize(ids.size() * static_cast<size_t>(d));
  for (size_t r = 0; r < ids.size(); ++r) {
    const size_t src = static_cast<size_t>(ids[r]) * d;
    std::copy(tv.begin() + src, tv.begin() + src + d, n.values.begin() + r * d);
  }
  return push(std::move(n));
}

Tensor Graph::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) dim_error("concat: no inputs");
  if (axis != 0 && axis != 1) dim_error("concat: axis must be 0 or 1");
  Shape out = parts[0].shape();
  if (out.size() != 2) dim_error("concat: rank-2 tensors required");
  for (size_t i = 1; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    if (s.size() != 2 || s[1 - axis] != out[1 - axis]) {
      dim_error("concat: shape " + shape_str(s) + " incompatible with " + shape_str(out));
    }
    out[axis] += s[axis];
  }
  Node n;
  n.op = Op::kConcat;
  n.shape = out;
  n.axis = axis;
  n.a = parts[0].id();
  if (parts.size() > 1) n.b = parts[1].id();
  for (size_t i = 2; i < parts.size(); ++i) n.extra.push_back(parts[i].id());
  for (const Tensor& t : parts) n.requires_grad = n.requires_grad || t.requires_grad();
  n.values.assign(static_cast<size_t>(shape_numel(out)), 0.0);
  const int cols = out[1];
  if (axis == 0) {
    size_t offset = 0;
    for (const Tensor& t : parts) {
      const auto& tv = t.values();
      std::copy(tv.begin(), tv.end(), n.values.begin() + offset);
      offset += tv.size();
    }
  } else {
    int col0 = 0;
    for (const Tensor& t : parts) {
      const int tc = t.shape()[1];
      const auto& tv = t.values();
      for (int r = 0; r < out[0]; ++r) {
        std::copy(tv.begin() + static_cast<size_t>(r) * tc,
                  tv.begin() + static_cast<size_t>(r + 1) * tc,
                  n.values.begin() + static_cast<size_t>(r) * cols + col0);
      }
      col0 += tc;
    }
  }
  return push(std::move(n));
}

Tensor Graph::slice(const Tensor& a, int axis, int begin, int end) {
  const Shape& s = a.shape();
  if (s.size() != 2) dim_error("slice: rank-2 tensor required, got " + shape_str(s));
  if (axis != 0 && axis != 1) dim_error("slice: axis must be 0 or 1");
  if (begin < 0 || end > s[axis] || begin >= end) {
    dim_error("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
              ") invalid for extent " + std::to_string(s[axis]));
  }
  Shape out = s;
  out[axis] = end - begin;
  Node n;
  n.op = Op::kSlice;
  n.shape = out;
  n.axis = axis;
  n.begin = begin;
  n.a = a.id();
  n.requires_grad = a.requires_grad();
  const auto& av = a.values();
  n.values.resize(static_cast<size_t>(shape_numel(out)));
  const int cols = s[1];
  if (axis == 0) {
    std::copy(av.begin() + static_cast<size_t>(begin) * cols,
              av.begin() + static_cast<size_t>(end) * cols, n.values.begin());
  } else {
    const int w = end - begin;
    for (int r = 0; r < s[0]; ++r) {
      std::copy(av.begin() + static_cast<size_t>(r) * cols + begin,
                av.begin() + static_cast<size_t>(r) * cols + end,
                n.values.begin() + static_cast<size_t>(r) * w);
    }
  }
  return push(std::move(n));
}

Tensor Graph::sum(const Tensor& a) {
  Node n;
  n.op = Op::kSum;
  n.shape = {1};
  n.a = a.id();
  n.requires_grad = a.requires_grad();
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  n.values = {acc};
  return push(std::move(n));
}

// ---- losses -----------------------------------------------------------------

Tensor Graph::cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<uint8_t>& mask) {
  const Shape& s = logits.shape();
  if (s.size() != 2) dim_error("cross_entropy: logits must be rank-2, got " + shape_str(s));
  const int t = s[0], vocab = s[1];
  if (targets.size() != static_cast<size_t>(t) || mask.size() != static_cast<size_t>(t)) {
    dim_error("cross_entropy: targets/mask length must equal " + std::to_string(t));
  }
  int active = 0;
  for (int i = 0; i < t; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    ++active;
    const int y = targets[static_cast<size_t>(i)];
    if (y < 0 || y >= vocab) {
      dim_error("cross_entropy: target " + std::to_string(y) + " out of range at position " +
                std::to_string(i));
    }
  }
  if (active == 0) throw std::invalid_argument("cross_entropy: all positions masked out");

  Node n;
  n.op = Op::kCrossEntropy;
  n.shape = {1};
  n.a = logits.id();
  n.indices.assign(targets.begin(), targets.end());
  n.mask = mask;
  n.requires_grad = logits.requires_grad();
  n.aux.assign(logits.values().size(), 0.0);  // probabilities at masked-in rows
  const auto& lv = logits.values();
  double loss = 0.0;
  for (int i = 0; i < t; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const size_t base = static_cast<size_t>(i) * vocab;
    double mx = lv[base];
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, lv[base + j]);
    double denom = 0.0;
    for (int j = 0; j < vocab; ++j) denom += std::exp(lv[base + j] - mx);
    const double lse = mx + std::log(denom);
    for (int j = 0; j < vocab; ++j) n.aux[base + j] = std::exp(lv[base + j] - lse);
    loss += lse - lv[base + static_cast<size_t>(targets[static_cast<size_t>(i)])];
  }
  n.values = {loss / active};
  n.param = active;
  return push(std::move(n));
}

Tensor Graph::l1_mean(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    dim_error("l1_mean: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Node n;
  n.op = Op::kL1Mean;
  n.shape = {1};
  n.a = a.id();
  n.b = b.id();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  const auto& av = a.values();
  const auto& bv = b.values();
  double acc = 0.0;
  for (size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  n.values = {acc / static_cast<double>(av.size())};
  return push(std::move(n));
}

Tensor Graph::stop_gradient(const Tensor& a) {
  Node n;
  n.op = Op::kStopGradient;
  n.shape = a.shape();
  n.a = a.id();
  n.requires_grad = false;
  n.values = a.values();
  return push(std::move(n));
}

// ---- backward -----------------------------------------------------------------

void Graph::backward(const Tensor& loss) {
  if (loss.graph() != this) throw std::logic_error("backward: loss from a different graph");
  if (backward_called_) {
    throw std::logic_error("backward: graph already differentiated; build a fresh graph");
  }
  if (loss.numel() != 1) {
    dim_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward: loss does not require grad");
  }
  backward_called_ = true;
  at(loss.id()).grad = {1.0};
  for (int32_t id = loss.id(); id >= 0; --id) {
    const Node& n = at(id);
    if (!n.requires_grad || n.grad.empty()) continue;
    backward_node(id);
  }
}

void Graph::backward_node(int32_t id) {
  Node& n = at(id);
  const std::vector<double>& g = n.grad;
  switch (n.op) {
    case Op::kLeaf:
    case Op::kStopGradient:
      break;
    case Op::kAdd: {
      for (int32_t in : {n.a, n.b}) {
        Node& p = at(in);
        if (!p.requires_grad) continue;
        ensure_grad(p);
        for (size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i];
      }
      break;
    }
    case Op::kMul: {
      Node& pa = at(n.a);
      Node& pb = at(n.b);
      if (pa.requires_grad) {
        ensure_grad(pa);
        for (size_t i = 0; i < g.size(); ++i) pa.grad[i] += g[i] * pb.values[i];
      }
      if (pb.requires_grad) {
        ensure_grad(pb);
        for (size_t i = 0; i < g.size(); ++i) pb.grad[i] += g[i] * pa.values[i];
      }
      break;
    }
    case Op::kScale: {
      Node& p = at(n.a);
      if (p.requires_grad) {
        ensure_grad(p);
        for (size_t i = 0; i < g.size(); ++i) p.grad[i] += g[i] * n.param;
      }
      break;
    }
    case Op::kMatmul: {
      Node& pa = at(n.a);
      Node& pb = at(n.b);
      const int m = pa.shape[0], k = pa.shape[1], cols = pb.shape[1];
      if (pa.requires_grad) {
        ensure_grad(pa);
        gemm_nt_acc(g.data(), pb.values.data(), pa.grad.data(), m, cols, k);
      }
      if (pb.requires_grad) {
        ensure_grad(pb);
        gemm_tn_acc(pa.values.data(), g.data(), pb.grad.data(), m, k, cols);
      }
      break;
    }
    case Op::kTranspose: {
      Node& p = at(n.a);
      if (p.requires_grad) {
        ensure_grad(p);
        const int r = n.shape[0], c = n.shape[1];
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            p.grad[static_cast<size_t>(j) * r + i] += g[static_cast<size_t>(i) * c + j];
      }
      break;
    }
    case Op::kSoftmax: {
      Node& p = at(n.a);
      if (!p.requires_grad) break;
      ensure_grad(p);
      const AxisView v = axis_view(n.shape, n.axis);
      for (int s = 0; s < v.count; ++s) {
        const size_t base = v.starts[static_cast<size_t>(s)];
        double dot = 0.0;
        for (int i = 0; i < v.len; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * v.stride;
          dot += g[idx] * n.values[idx];
        }
        for (int i = 0; i < v.len; ++i) {
          const size_t idx = base + static_cast<size_t>(i) * v.stride;
          p.grad[idx] += n.values[idx] * (g[idx] - dot);
        }
      }
      break;
    }
    case Op::kSilu: {
      Node& p = at(n.a);
      if (!p.requires_grad) break;
      ensure_grad(p);
      for (size_t i = 0; i < g.size(); ++i) {
        const double s = n.aux[i];
        p.grad[i] += g[i] * (s + p.values[i] * s * (1.0 - s));
      }
      break;
    }
    case Op::kRmsNorm: {
      Node& px = at(n.a);
      Node& pw = at(n.b);
      const int rows = n.shape[0], d = n.shape[1];
      if (pw.requires_grad) ensure_grad(pw);
      if (px.requires_grad) ensure_grad(px);
      for (int i = 0; i < rows; ++i) {
        const size_t base = static_cast<size_t>(i) * d;
        const double inv = n.aux[static_cast<size_t>(i)];
        if (pw.requires_grad) {
          for (int j = 0; j < d; ++j) pw.grad[static_cast<size_t>(j)] += g[base + j] * px.values[base + j] * inv;
        }
        if (px.requires_grad) {
          double dot = 0.0;
          for (int j = 0; j < d; ++j) dot += g[base + j] * pw.values[static_cast<size_t>(j)] * px.values[base + j];
          const double coeff = dot * inv * inv * inv / d;
          for (int j = 0; j < d; ++j) {
            px.grad[base + j] += g[base + j] * pw.values[static_cast<size_t>(j)] * inv - px.values[base + j] * coeff;
          }
        }
      }
      break;
    }
    case Op::kEmbedding: {
      Node& p = at(n.a);
      if (!p.requires_grad) break;
      ensure_grad(p);
      const int d = n.shape[1];
      for (size_t r = 0; r < n.indices.size(); ++r) {
        const size_t dst = static_cast<size_t>(n.indices[r]) * d;
        const size_t src = r * static_cast<size_t>(d);
        for (int j = 0; j < d; ++j) p.grad[dst + j] += g[src + j];
      }
      break;
    }
    case Op::kConcat: {
      std::vector<int32_t> inputs;
      inputs.push_back(n.a);
      if (n.b >= 0) inputs.push_back(n.b);
      for (int32_t e : n.extra) inputs.push_back(e);
      const int cols = n.shape[1];
      if (n.axis == 0) {
        size_t offset = 0;
        for (int32_t in : inputs) {
          Node& p = at(in);
          if (p.requires_grad) {
            ensure_grad(p);
            for (size_t i = 0; i < p.values.size(); ++i) p.grad[i] += g[offset + i];
          }
          offset += p.values.size();
        }
      } else {
        int col0 = 0;
        for (int32_t in : inputs) {
          Node& p = at(in);
          const int tc = p.shape[1];
          if (p.requires_grad) {
            ensure_grad(p);
            for (int r = 0; r < n.shape[0]; ++r)
              for (int j = 0; j < tc; ++j)
                p.grad[static_cast<size_t>(r) * tc + j] += g[static_cast<size_t>(r) * cols + col0 + j];
          }
          col0 += tc;
        }
      }
      break;
    }
    case Op::kSlice: {
      Node& p = at(n.a);
      if (!p.requires_grad) break;
      ensure_grad(p);
      const int cols = p.shape[1];
      if (n.axis == 0) {
        const size_t offset = static_cast<size_t>(n.begin) * cols;
        for (size_t i = 0; i < g.size(); ++i) p.grad[offset + i] += g[i];
      } else {
        const int w = n.shape[1];
        for (int r = 0; r < n.shape[0]; ++r)
          for (int j = 0; j < w; ++j)
            p.grad[static_cast<size_t>(r) * cols + n.begin + j] += g[static_cast<size_t>(r) * w + j];
      }
      break;
    }
    case Op::kSum: {
      Node& p = at(n.a);
      if (!p.requires_grad) break;
      ensure_grad(p);
      for (size_t i = 0; i < p.values.size(); ++i) p.grad[i] += g[0];
      break;
    }
    case Op::kCrossEntropy: {
      Node& p = at(n.a);
      if (!p.requires_grad) break;
      ensure_grad(p);
      const int t = p.shape[0], vocab = p.shape[1];
      const double scale = g[0] / n.param;
      for (int i = 0; i < t; ++i) {
        if (!n.mask[static_cast<size_t>(i)]) continue;
        const size_t base = static_cast<size_t>(i) * vocab;
        for (int j = 0; j < vocab; ++j) p.grad[base + j] += scale * n.aux[base + j];
        p.grad[base + static_cast<size_t>(n.indices[static_cast<size_t>(i)])] -= scale;
      }
      break;
    }
    case Op::kL1Mean: {
      Node& pa = at(n.a);
      Node& pb = at(n.b);
      const double inv = g[0] / static_cast<double>(pa.values.size());
      if (pa.requires_grad) ensure_grad(pa);
      if (pb.requires_grad) ensure_grad(pb);
      for (size_t i = 0; i < pa.values.size(); ++i) {
        const double diff = pa.values[i] - pb.values[i];
        // subgradient at zero is zero
        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        if (pa.requires_grad) pa.grad[i] += inv * s;
        if (pb.requires_grad) pb.grad[i] -= inv * s;
      }
      break;
    }
  }
}

}  // namespace codi
