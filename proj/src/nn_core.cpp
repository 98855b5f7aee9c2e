#include "cograsp/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cograsp/errors.hpp"

namespace cograsp::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape_in, double fill)
    : shape(std::move(shape_in)), values(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> values_in)
    : shape(std::move(shape_in)), values(std::move(values_in)) {
  if (values.size() != shape_size(shape)) {
    throw ShapeMismatch("tensor " + shape_string(shape) + " given " + std::to_string(values.size()) + " values");
  }
}

// ParameterStore

Parameter& ParameterStore::add(const std::string& name, Tensor init) {
  if (params_.contains(name)) throw ValidationError("parameter '" + name + "' already exists");
  Parameter p;
  p.grad = Tensor(init.shape);
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  const auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw ValidationError("unknown parameter '" + name + "'");
  return it->second;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad = Tensor(p.value.shape);
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

bool ParameterStore::same_values(const ParameterStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [name, p] : params_) {
    const auto it = other.params_.find(name);
    if (it == other.params_.end() || it->second.value != p.value) return false;
  }
  return true;
}

// Graph

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  if (const auto it = bound_.find(&p); it != bound_.end()) return {this, it->second};
  Node n;
  n.external = &p.value;
  n.sink = &p.grad;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  bound_[&p] = nodes_.size() - 1;
  return {this, nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external != nullptr ? *n.external : n.value;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.values.empty()) return Tensor(value(v).shape);
  return n.grad;
}

Var Graph::record(Tensor value, std::span<const Var> inputs, Backward fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph != this) throw ValidationError("op mixes values from different graphs");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor* Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.values.empty()) n.grad = Tensor(value(v).shape);
  return &n.grad;
}

void Graph::backward(Var loss) {
  if (value(loss).size() != 1) throw ShapeMismatch("backward needs a scalar, got " + shape_string(value(loss).shape));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Tensor(value(loss).shape, 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.values.empty()) continue;
    if (n.backward) n.backward(n.grad, n.external != nullptr ? *n.external : n.value);
    if (n.sink != nullptr) {
      if (n.sink->values.size() != n.grad.size()) *n.sink = Tensor(n.grad.shape);
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.sink->values[i] += n.grad[i];
    }
  }
}

// Ops

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeMismatch(std::string(op) + ": " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.shape.size() != 2) throw ShapeMismatch(std::string(op) + " needs a matrix, got " + shape_string(a.shape));
}

template <typename F, typename D>
Var elementwise(Var a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const Var ins[] = {a};
  return a.graph->record(std::move(out), ins, [a, dfdx](const Tensor& g, const Tensor& y) {
    Tensor* ga = a.graph->grad_buffer(a);
    if (ga == nullptr) return;
    const Tensor& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfdx(x[i], y[i]);
  });
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const Var ins[] = {a, b};
  return a.graph->record(std::move(out), ins, [a, b](const Tensor& g, const Tensor&) {
    for (Var v : {a, b}) {
      if (Tensor* gv = v.graph->grad_buffer(v))
        for (std::size_t i = 0; i < g.size(); ++i) (*gv)[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const Var ins[] = {a, b};
  return a.graph->record(std::move(out), ins, [a, b](const Tensor& g, const Tensor&) {
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    if (Tensor* gb = b.graph->grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const Var ins[] = {a, b};
  return a.graph->record(std::move(out), ins, [a, b](const Tensor& g, const Tensor&) {
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    if (Tensor* gb = b.graph->grad_buffer(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
  });
}

Var affine(Var a, double s, double t) {
  return elementwise(a, [s, t](double x) { return s * x + t; }, [s](double, double) { return s; });
}

Var sigmoid(Var a) {
  return elementwise(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return elementwise(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return elementwise(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return elementwise(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "matmul");
  require_matrix(y, "matmul");
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  if (y.rows() != k) throw ShapeMismatch("matmul: " + shape_string(x.shape) + " x " + shape_string(y.shape));
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x.at(i, p);
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) += xv * y.at(p, j);
    }
  const Var ins[] = {a, b};
  return a.graph->record(std::move(out), ins, [a, b, n, k, m](const Tensor& g, const Tensor&) {
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * y.at(p, j);
          ga->at(i, p) += s;
        }
    if (Tensor* gb = b.graph->grad_buffer(b))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x.at(i, p);
          for (std::size_t j = 0; j < m; ++j) gb->at(p, j) += xv * g[i * m + j];
        }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
  const Var ins[] = {a};
  return a.graph->record(std::move(out), ins, [a, r, c](const Tensor& g, const Tensor&) {
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga->at(i, j) += g[j * r + i];
  });
}

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  require_matrix(xv, "linear");
  require_matrix(wv, "linear");
  const std::size_t n = xv.rows(), in = xv.cols(), out_dim = wv.rows();
  if (wv.cols() != in || bv.size() != out_dim) {
    throw ShapeMismatch("linear: x " + shape_string(xv.shape) + ", W " + shape_string(wv.shape) + ", b " +
                        shape_string(bv.shape));
  }
  Tensor out({n, out_dim});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = bv[o];
      for (std::size_t c = 0; c < in; ++c) s += xv.at(i, c) * wv.at(o, c);
      out.at(i, o) = s;
    }
  const Var ins[] = {x, w, b};
  return x.graph->record(std::move(out), ins, [x, w, b, n, in, out_dim](const Tensor& g, const Tensor&) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    Tensor* gx = x.graph->grad_buffer(x);
    Tensor* gw = w.graph->grad_buffer(w);
    Tensor* gb = b.graph->grad_buffer(b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double go = g[i * out_dim + o];
        if (go == 0.0) continue;
        if (gb != nullptr) (*gb)[o] += go;
        if (gw != nullptr)
          for (std::size_t c = 0; c < in; ++c) gw->at(o, c) += go * xv.at(i, c);
        if (gx != nullptr)
          for (std::size_t c = 0; c < in; ++c) gx->at(i, c) += go * wv.at(o, c);
      }
  });
}

Var row(Var a, std::size_t r) {
  const std::size_t idx[] = {r};
  return gather_rows(a, idx);
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  require_matrix(x, "gather_rows");
  const std::size_t c = x.cols();
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw ShapeMismatch("gather_rows: row index out of range");
    std::copy_n(x.values.begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                out.values.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  const Var ins[] = {a};
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.graph->record(std::move(out), ins, [a, idx = std::move(idx), c](const Tensor& g, const Tensor&) {
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) (*ga)[idx[i] * c + j] += g[i * c + j];
  });
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("stack_rows: no inputs");
  const std::size_t c = parts[0].value().cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "stack_rows");
    if (p.value().cols() != c) throw ShapeMismatch("stack_rows: column counts differ");
    total += p.value().rows();
  }
  Tensor out({total, c});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values.begin(), p.value().values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.value().size();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  Graph* graph = parts[0].graph;
  return graph->record(std::move(out), ins, [ins](const Tensor& g, const Tensor&) {
    std::size_t offset = 0;
    for (const Var& p : ins) {
      const std::size_t n = p.value().size();
      if (Tensor* gp = p.graph->grad_buffer(p))
        for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[offset + i];
      offset += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  const std::size_t r = parts[0].value().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_matrix(p.value(), "concat_cols");
    if (p.value().rows() != r) throw ShapeMismatch("concat_cols: row counts differ");
    total += p.value().cols();
  }
  Tensor out({r, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out.at(i, offset + j) = v.at(i, j);
    offset += v.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].graph->record(std::move(out), ins, [ins, r, total](const Tensor& g, const Tensor&) {
    std::size_t offset = 0;
    for (const Var& p : ins) {
      const std::size_t c = p.value().cols();
      if (Tensor* gp = p.graph->grad_buffer(p))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gp->at(i, j) += g[i * total + offset + j];
      offset += c;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Tensor& x = a.value();
  require_matrix(x, "slice_cols");
  if (start + count > x.cols()) throw ShapeMismatch("slice_cols: range past the last column");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({r, count});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = x.at(i, start + j);
  const Var ins[] = {a};
  return a.graph->record(std::move(out), ins, [a, start, count, r, c](const Tensor& g, const Tensor&) {
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) (*ga)[i * c + start + j] += g[i * count + j];
  });
}

Var reverse_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "reverse_rows");
  std::vector<std::size_t> idx(x.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = idx.size() - 1 - i;
  return gather_rows(a, idx);
}

Var mean_rows(Var a) {
  const Tensor& x = a.value();
  require_matrix(x, "mean_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (r == 0) throw ShapeMismatch("mean_rows: no rows");
  Tensor out({1, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x.at(i, j);
  for (auto& v : out.values) v /= static_cast<double>(r);
  const Var ins[] = {a};
  return a.graph->record(std::move(out), ins, [a, r, c](const Tensor& g, const Tensor&) {
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga->at(i, j) += g[j] / static_cast<double>(r);
  });
}

Var repeat_rows(Var a, std::size_t n) {
  const Tensor& x = a.value();
  require_matrix(x, "repeat_rows");
  if (x.rows() != 1) throw ShapeMismatch("repeat_rows needs a single row");
  std::vector<std::size_t> idx(n, 0);
  return gather_rows(a, idx);
}

Var sum(Var a) {
  const Tensor& x = a.value();
  Tensor out({1, 1}, std::accumulate(x.values.begin(), x.values.end(), 0.0));
  const Var ins[] = {a};
  return a.graph->record(std::move(out), ins, [a](const Tensor& g, const Tensor&) {
    if (Tensor* ga = a.graph->grad_buffer(a))
      for (auto& v : ga->values) v += g[0];
  });
}

Var mean(Var a) { return affine(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t r = xv.rows(), f = xv.cols();
  if (f == 0 || gamma.value().size() != f || beta.value().size() != f) {
    throw ShapeMismatch("layer_norm: features " + std::to_string(f) + ", gamma " + shape_string(gamma.shape()));
  }
  Tensor normed({r, f});
  std::vector<double> inv_std(r);
  Tensor out({r, f});
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < f; ++j) mu += xv.at(i, j);
    mu /= static_cast<double>(f);
    double var = 0.0;
    for (std::size_t j = 0; j < f; ++j) var += (xv.at(i, j) - mu) * (xv.at(i, j) - mu);
    var /= static_cast<double>(f);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < f; ++j) {
      normed.at(i, j) = (xv.at(i, j) - mu) * inv_std[i];
      out.at(i, j) = gamma.value()[j] * normed.at(i, j) + beta.value()[j];
    }
  }
  const Var ins[] = {x, gamma, beta};
  return x.graph->record(std::move(out), ins,
                         [x, gamma, beta, normed = std::move(normed), inv_std = std::move(inv_std), r,
                          f](const Tensor& g, const Tensor&) {
                           Tensor* gx = x.graph->grad_buffer(x);
                           Tensor* gg = x.graph->grad_buffer(gamma);
                           Tensor* gb = x.graph->grad_buffer(beta);
                           const Tensor& gv = gamma.value();
                           std::vector<double> dn(f);
                           for (std::size_t i = 0; i < r; ++i) {
                             double mean_dn = 0.0, mean_dn_n = 0.0;
                             for (std::size_t j = 0; j < f; ++j) {
                               const double go = g[i * f + j];
                               if (gg != nullptr) (*gg)[j] += go * normed.at(i, j);
                               if (gb != nullptr) (*gb)[j] += go;
                               dn[j] = go * gv[j];
                               mean_dn += dn[j];
                               mean_dn_n += dn[j] * normed.at(i, j);
                             }
                             if (gx == nullptr) continue;
                             mean_dn /= static_cast<double>(f);
                             mean_dn_n /= static_cast<double>(f);
                             for (std::size_t j = 0; j < f; ++j) {
                               gx->at(i, j) += inv_std[i] * (dn[j] - mean_dn - normed.at(i, j) * mean_dn_n);
                             }
                           }
                         });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  require_matrix(xv, "l2_normalize_rows");
  const std::size_t r = xv.rows(), c = xv.cols();
  std::vector<double> norms(r);
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += xv.at(i, j) * xv.at(i, j);
    norms[i] = std::sqrt(s);
    if (!(norms[i] > 0.0)) throw DegenerateInput("cannot normalize an all-zero vector");
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = xv.at(i, j) / norms[i];
  }
  const Var ins[] = {x};
  return x.graph->record(std::move(out), ins, [x, norms = std::move(norms), r, c](const Tensor& g, const Tensor& y) {
    Tensor* gx = x.graph->grad_buffer(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < r; ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < c; ++j) d += y.at(i, j) * g[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx->at(i, j) += (g[i * c + j] - y.at(i, j) * d) / norms[i];
    }
  });
}

Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t padding) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.shape.size() != 3 || wv.shape.size() != 4 || wv.shape[1] != xv.shape[0] || wv.shape[2] != wv.shape[3] ||
      b.value().size() != wv.shape[0] || stride == 0) {
    throw ShapeMismatch("conv2d: x " + shape_string(xv.shape) + ", w " + shape_string(wv.shape));
  }
  const std::size_t ci = xv.shape[0], h = xv.shape[1], wd = xv.shape[2];
  const std::size_t co = wv.shape[0], k = wv.shape[2];
  if (h + 2 * padding < k || wd + 2 * padding < k) throw ShapeMismatch("conv2d: kernel larger than input");
  const std::size_t ho = (h + 2 * padding - k) / stride + 1;
  const std::size_t wo = (wd + 2 * padding - k) / stride + 1;
  // Visits every (output, kernel tap) pair that lands inside the input.
  auto for_taps = [=](auto&& fn) {
    for (std::size_t o = 0; o < co; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox)
          for (std::size_t c = 0; c < ci; ++c)
            for (std::size_t ky = 0; ky < k; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(padding);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(padding);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                const std::size_t out_i = (o * ho + oy) * wo + ox;
                const std::size_t in_i = (c * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix);
                const std::size_t w_i = ((o * ci + c) * k + ky) * k + kx;
                fn(out_i, in_i, w_i);
              }
            }
  };
  Tensor out({co, ho, wo});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t i = 0; i < ho * wo; ++i) out[o * ho * wo + i] = b.value()[o];
  for_taps([&](std::size_t oi, std::size_t ii, std::size_t wi) { out[oi] += xv[ii] * wv[wi]; });
  const Var ins[] = {x, w, b};
  return x.graph->record(std::move(out), ins, [x, w, b, for_taps, co, ho, wo](const Tensor& g, const Tensor&) {
    Tensor* gx = x.graph->grad_buffer(x);
    Tensor* gw = x.graph->grad_buffer(w);
    Tensor* gb = x.graph->grad_buffer(b);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    if (gb != nullptr)
      for (std::size_t o = 0; o < co; ++o)
        for (std::size_t i = 0; i < ho * wo; ++i) (*gb)[o] += g[o * ho * wo + i];
    if (gx == nullptr && gw == nullptr) return;
    for_taps([&](std::size_t oi, std::size_t ii, std::size_t wi) {
      if (gx != nullptr) (*gx)[ii] += g[oi] * wv[wi];
      if (gw != nullptr) (*gw)[wi] += g[oi] * xv[ii];
    });
  });
}

Var global_avg_pool(Var x) {
  const Tensor& xv = x.value();
  if (xv.shape.size() != 3) throw ShapeMismatch("global_avg_pool needs [c, h, w]");
  const std::size_t c = xv.shape[0], hw = xv.shape[1] * xv.shape[2];
  Tensor out({1, c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += xv[ch * hw + i];
    out[ch] = s / static_cast<double>(hw);
  }
  const Var ins[] = {x};
  return x.graph->record(std::move(out), ins, [x, c, hw](const Tensor& g, const Tensor&) {
    if (Tensor* gx = x.graph->grad_buffer(x))
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < hw; ++i) (*gx)[ch * hw + i] += g[ch] / static_cast<double>(hw);
  });
}

// Layers

namespace {

Tensor uniform_tensor(std::vector<std::size_t> shape, double limit, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

Tensor glorot_uniform(std::size_t out, std::size_t in, Rng& rng) {
  return uniform_tensor({out, in}, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
}

LinearLayer LinearLayer::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                                Rng& rng) {
  LinearLayer l{name + ".weight", name + ".bias", in, out};
  store.add(l.weight, glorot_uniform(out, in, rng));
  store.add(l.bias, Tensor({out}));
  return l;
}

Var LinearLayer::operator()(Graph& g, ParameterStore& store, Var x) const {
  return linear(x, g.param(store.at(weight)), g.param(store.at(bias)));
}

LayerNormLayer LayerNormLayer::create(ParameterStore& store, const std::string& name, std::size_t features) {
  LayerNormLayer l{name + ".gamma", name + ".beta"};
  store.add(l.gamma, Tensor({features}, 1.0));
  store.add(l.beta, Tensor({features}));
  return l;
}

Var LayerNormLayer::operator()(Graph& g, ParameterStore& store, Var x) const {
  return layer_norm(x, g.param(store.at(gamma)), g.param(store.at(beta)));
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, std::vector<std::size_t> widths, Rng& rng) {
  if (widths.size() < 2) throw ValidationError("an MLP needs input and output widths");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const std::string layer = name + "." + std::to_string(i);
    m.linears.push_back(LinearLayer::create(store, layer, widths[i], widths[i + 1], rng));
    if (i + 2 < widths.size()) m.norms.push_back(LayerNormLayer::create(store, layer + ".norm", widths[i + 1]));
  }
  return m;
}

Var Mlp::operator()(Graph& g, ParameterStore& store, Var x) const {
  for (std::size_t i = 0; i < linears.size(); ++i) {
    x = linears[i](g, store, x);
    if (i < norms.size()) x = relu(norms[i](g, store, x));
  }
  return x;
}

GruLayer GruLayer::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                          Rng& rng) {
  GruLayer l{name + ".w_ih", name + ".w_hh", name + ".b_ih", name + ".b_hh", in, hidden};
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  store.add(l.w_ih, uniform_tensor({3 * hidden, in}, limit, rng));
  store.add(l.w_hh, uniform_tensor({3 * hidden, hidden}, limit, rng));
  store.add(l.b_ih, uniform_tensor({3 * hidden}, limit, rng));
  store.add(l.b_hh, uniform_tensor({3 * hidden}, limit, rng));
  return l;
}

Var GruLayer::operator()(Graph& g, ParameterStore& store, Var seq) const {
  const std::size_t steps = seq.value().rows();
  const std::size_t h_dim = hidden;
  // Input projections for all steps at once; gate blocks are r, z, n.
  const Var gi = linear(seq, g.param(store.at(w_ih)), g.param(store.at(b_ih)));
  const Var whh = g.param(store.at(w_hh));
  const Var bhh = g.param(store.at(b_hh));
  Var h = g.constant(Tensor({1, h_dim}));
  std::vector<Var> outputs;
  outputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const Var x = row(gi, t);
    const Var gh = linear(h, whh, bhh);
    const Var r = sigmoid(add(slice_cols(x, 0, h_dim), slice_cols(gh, 0, h_dim)));
    const Var z = sigmoid(add(slice_cols(x, h_dim, h_dim), slice_cols(gh, h_dim, h_dim)));
    const Var n = tanh(add(slice_cols(x, 2 * h_dim, h_dim), mul(r, slice_cols(gh, 2 * h_dim, h_dim))));
    h = add(mul(affine(z, -1.0, 1.0), n), mul(z, h));
    outputs.push_back(h);
  }
  return stack_rows(outputs);
}

BiGruLayer BiGruLayer::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                              Rng& rng) {
  return {GruLayer::create(store, name + ".fwd", in, hidden, rng), GruLayer::create(store, name + ".bwd", in, hidden, rng)};
}

Var BiGruLayer::operator()(Graph& g, ParameterStore& store, Var seq) const {
  if (seq.value().shape.size() != 2 || seq.value().rows() == 0) throw ValidationError("bigru needs a nonempty sequence");
  const Var fwd = forward(g, store, seq);
  const Var bwd = reverse_rows(backward(g, store, reverse_rows(seq)));
  const Var parts[] = {fwd, bwd};
  return concat_cols(parts);
}

ConvEncoder ConvEncoder::create(ParameterStore& store, const std::string& name, std::vector<std::size_t> channels,
                                Rng& rng) {
  if (channels.size() < 2) throw ValidationError("conv encoder needs at least one layer");
  ConvEncoder e;
  e.channels = channels;
  for (std::size_t i = 0; i + 1 < channels.size(); ++i) {
    const std::string layer = name + "." + std::to_string(i);
    const double fan = 9.0 * static_cast<double>(channels[i] + channels[i + 1]);
    e.weights.push_back(layer + ".weight");
    e.biases.push_back(layer + ".bias");
    store.add(e.weights.back(), uniform_tensor({channels[i + 1], channels[i], 3, 3}, std::sqrt(6.0 / fan), rng));
    store.add(e.biases.back(), Tensor({channels[i + 1]}));
  }
  return e;
}

Var ConvEncoder::operator()(Graph& g, ParameterStore& store, Var image) const {
  Var x = image;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    x = relu(conv2d(x, g.param(store.at(weights[i])), g.param(store.at(biases[i])), 2, 1));
  }
  return global_avg_pool(x);
}

// Optimization

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
  if (!(schedule_factor > 0.0 && schedule_factor < 1.0)) throw ValidationError("schedule_factor must be in (0, 1)");
  if (schedule_patience < 1) throw ValidationError("schedule_patience must be >= 1");
}

void adamw_step(ParameterStore& store, const OptimizerConfig& cfg, double learning_rate) {
  ++store.steps_;
  const double t = static_cast<double>(store.steps_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [_, p] : store.params_) {
    const std::size_t n = p.value.size();
    if (p.first_moment.size() != n) p.first_moment = Tensor(p.value.shape);
    if (p.second_moment.size() != n) p.second_moment = Tensor(p.value.shape);
    const bool has_grad = p.grad.size() == n;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = has_grad ? p.grad[i] : 0.0;
      double& m = p.first_moment[i];
      double& v = p.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      p.value[i] *= 1.0 - learning_rate * cfg.weight_decay;
      p.value[i] -= learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon);
    }
  }
}

PlateauScheduler::PlateauScheduler(double initial_rate, double factor, std::size_t patience)
    : rate_(initial_rate), factor_(factor), patience_(patience), best_(0.0) {
  if (!(factor > 0.0 && factor < 1.0)) throw ValidationError("schedule factor must be in (0, 1)");
  if (patience < 1) throw ValidationError("schedule patience must be >= 1");
}

double PlateauScheduler::step(double loss) {
  if (!seen_ || loss < best_) {
    best_ = loss;
    seen_ = true;
    bad_epochs_ = 0;
    return rate_;
  }
  if (++bad_epochs_ >= patience_) {
    rate_ *= factor_;
    ++reductions_;
    bad_epochs_ = 0;
  }
  return rate_;
}

double plateau_learning_rate(std::span<const double> losses, const OptimizerConfig& cfg) {
  PlateauScheduler s(cfg.learning_rate, cfg.schedule_factor, cfg.schedule_patience);
  for (double l : losses) s.step(l);
  return s.rate();
}

GradientCheckResult check_gradients(ParameterStore& store, const std::function<Var(Graph&)>& loss, double step,
                                    std::size_t max_entries_per_param, std::uint64_t seed, double floor) {
  store.zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  auto evaluate = [&] {
    Graph g;
    return loss(g).value()[0];
  };
  GradientCheckResult res;
  Rng rng(seed);
  for (auto& [name, p] : store) {
    std::vector<std::size_t> entries(p.value.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (max_entries_per_param > 0) entries = rng.sample_without_replacement(std::move(entries), max_entries_per_param);
    for (std::size_t i : entries) {
      const double orig = p.value[i];
      p.value[i] = orig + step;
      const double up = evaluate();
      p.value[i] = orig - step;
      const double down = evaluate();
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++res.entries;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

nlohmann::json weights_to_json(const ParameterStore& store) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : store) params[name] = {{"shape", p.value.shape}, {"values", p.value.values}};
  return {{"format", "cograsp-weights"}, {"version", kWeightsFormatVersion}, {"parameters", params}};
}

void weights_from_json(ParameterStore& store, const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "cograsp-weights") throw CorruptFile("not a weights document");
  if (!j.contains("version") || !j["version"].is_number_integer()) throw CorruptFile("weights have no version");
  if (j["version"].get<int>() != kWeightsFormatVersion) {
    throw FormatVersionMismatch("weights version " + j["version"].dump() + " is not supported");
  }
  try {
    const auto& params = j.at("parameters");
    if (params.size() != store.size()) {
      throw ShapeMismatch("weights hold " + std::to_string(params.size()) + " tensors, model has " +
                          std::to_string(store.size()));
    }
    for (auto& [name, p] : store) {
      if (!params.contains(name)) throw ShapeMismatch("weights lack parameter '" + name + "'");
      const auto& entry = params.at(name);
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape != p.value.shape) {
        throw ShapeMismatch("parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(p.value.shape));
      }
      p.value = Tensor(std::move(shape), entry.at("values").get<std::vector<double>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptFile(std::string("malformed weights: ") + e.what());
  }
}

}  // namespace cograsp::nn
