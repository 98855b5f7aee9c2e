#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cograsp/random.hpp"

// Small reverse-mode differentiation engine. Values live on a tape (Graph);
// every op records a closure that pushes its output gradient to its inputs.
// Row-major 2-D tensors are [rows, cols]; convolutions use [channels, h, w].
namespace cograsp::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  /// Throws ShapeMismatch when values.size() != product of shape.
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  std::size_t size() const { return values.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool operator==(const Tensor&) const = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

/// Named trainable tensors, ordered by name so iteration is deterministic.
struct OptimizerConfig;

class ParameterStore {
 public:
  /// Throws ValidationError if `name` already exists.
  Parameter& add(const std::string& name, Tensor init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  void zero_grad();
  std::size_t parameter_count() const;
  std::size_t step_count() const { return steps_; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  /// Values only; optimizer state is not compared.
  bool same_values(const ParameterStore& other) const;

 private:
  friend void adamw_step(ParameterStore&, const OptimizerConfig&, double);
  std::map<std::string, Parameter> params_;
  std::size_t steps_ = 0;
};

class Graph;

/// Handle to a tape entry.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const std::vector<std::size_t>& shape() const { return value().shape; }
};

class Graph {
 public:
  /// Receives the output's gradient and value; adds into input gradients.
  using Backward = std::function<void(const Tensor& out_grad, const Tensor& out_value)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  /// Binds a parameter; gradients accumulate into p.grad on backward().
  /// Binding the same parameter twice returns the same handle.
  Var param(Parameter& p);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() target; zeros if v did not contribute.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// `loss` must hold a single element.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  Var record(Tensor value, std::span<const Var> inputs, Backward fn);
  /// Gradient buffer of v, allocated on first use; nullptr if v needs none.
  Tensor* grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

// Elementwise, same shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// s * a + t.
Var affine(Var a, double s, double t = 0.0);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
/// log(1 + e^a), computed stably.
Var softplus(Var a);

/// [n, k] x [k, m].
Var matmul(Var a, Var b);
Var transpose(Var a);
/// x [n, in] W^T + b with W [out, in], b [out].
Var linear(Var x, Var w, Var b);

Var row(Var a, std::size_t r);
Var gather_rows(Var a, std::span<const std::size_t> rows);
/// Vertical stack of matrices with equal column counts.
Var stack_rows(std::span<const Var> parts);
/// Horizontal concatenation of matrices with equal row counts.
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var reverse_rows(Var a);
Var mean_rows(Var a);
/// [1, f] repeated to [n, f].
Var repeat_rows(Var a, std::size_t n);
/// [1, 1].
Var sum(Var a);
Var mean(Var a);

/// Per-row standardization then gamma * x + beta; gamma, beta [f].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
/// Each row scaled to unit length; throws DegenerateInput on a zero row.
Var l2_normalize_rows(Var x);

/// x [c, h, w], w [o, c, k, k], b [o] -> [o, h', w'] with zero padding.
Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t padding);
/// [c, h, w] -> [1, c].
Var global_avg_pool(Var x);

// Layers. Each owns parameter names inside a ParameterStore.

/// Glorot-uniform matrix [out, in].
Tensor glorot_uniform(std::size_t out, std::size_t in, Rng& rng);

struct LinearLayer {
  std::string weight, bias;
  std::size_t in = 0, out = 0;

  static LinearLayer create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(Graph& g, ParameterStore& store, Var x) const;
};

struct LayerNormLayer {
  std::string gamma, beta;

  static LayerNormLayer create(ParameterStore& store, const std::string& name, std::size_t features);
  Var operator()(Graph& g, ParameterStore& store, Var x) const;
};

/// Hidden layers are linear -> layer norm -> ReLU; the last layer is linear.
struct Mlp {
  std::vector<LinearLayer> linears;
  std::vector<LayerNormLayer> norms;

  static Mlp create(ParameterStore& store, const std::string& name, std::vector<std::size_t> widths, Rng& rng);
  Var operator()(Graph& g, ParameterStore& store, Var x) const;
  std::size_t out() const { return linears.back().out; }
};

/// Update gate z, reset gate r, candidate n:
///   h' = (1 - z) * n + z * h,  n = tanh(W_in x + b_in + r * (W_hn h + b_hn)).
struct GruLayer {
  std::string w_ih, w_hh, b_ih, b_hh;
  std::size_t in = 0, hidden = 0;

  static GruLayer create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, Rng& rng);
  /// [t, in] -> [t, hidden], starting from a zero state.
  Var operator()(Graph& g, ParameterStore& store, Var seq) const;
};

/// Forward and reversed-sequence GRUs, outputs concatenated per step.
struct BiGruLayer {
  GruLayer forward, backward;

  static BiGruLayer create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                           Rng& rng);
  /// [t, in] -> [t, 2 hidden]; throws ValidationError on an empty sequence.
  Var operator()(Graph& g, ParameterStore& store, Var seq) const;
  std::size_t out() const { return 2 * forward.hidden; }
};

/// Strided 3x3 convolutions with ReLU, then global average pooling.
struct ConvEncoder {
  std::vector<std::string> weights, biases;
  std::vector<std::size_t> channels;  // input channel count first

  static ConvEncoder create(ParameterStore& store, const std::string& name, std::vector<std::size_t> channels,
                            Rng& rng);
  /// [c, h, w] -> [1, channels.back()].
  Var operator()(Graph& g, ParameterStore& store, Var image) const;
  std::size_t out() const { return channels.back(); }
};

struct OptimizerConfig {
  double learning_rate = 2.61e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double schedule_factor = 0.3741;
  std::size_t schedule_patience = 3;

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// Decoupled weight decay: w <- w (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
void adamw_step(ParameterStore& store, const OptimizerConfig& cfg, double learning_rate);

/// Multiplies the rate by `factor` once the monitored loss has gone
/// `patience` consecutive epochs without a strict improvement, then starts
/// counting again.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_rate, double factor, std::size_t patience);
  /// Records one epoch's loss; returns the rate for the next epoch.
  double step(double loss);
  double rate() const { return rate_; }
  std::size_t reductions() const { return reductions_; }

 private:
  double rate_;
  double factor_;
  std::size_t patience_;
  double best_;
  std::size_t bad_epochs_ = 0;
  std::size_t reductions_ = 0;
  bool seen_ = false;
};

/// Rate after replaying `losses` through a PlateauScheduler.
double plateau_learning_rate(std::span<const double> losses, const OptimizerConfig& cfg);

struct GradientCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  std::size_t entries = 0;
};

/// Central differences against backward() for every parameter in `store`.
/// The relative error is |a - n| / max(|a|, |n|, floor). At most
/// `max_entries_per_param` seeded entries per tensor (0 = all).
GradientCheckResult check_gradients(ParameterStore& store, const std::function<Var(Graph&)>& loss, double step = 1e-5,
                                    std::size_t max_entries_per_param = 0, std::uint64_t seed = 0,
                                    double floor = 1e-7);

inline constexpr int kWeightsFormatVersion = 1;

/// {"format": "cograsp-weights", "version": 1,
///  "parameters": {name: {"shape": [...], "values": [...]}}}
/// Doubles are written with round-trip precision.
nlohmann::json weights_to_json(const ParameterStore& store);
/// Overwrites values of existing parameters. Missing or extra names and
/// differing shapes throw ShapeMismatch; a bad header throws
/// FormatVersionMismatch or CorruptFile.
void weights_from_json(ParameterStore& store, const nlohmann::json& j);

}  // namespace cograsp::nn
