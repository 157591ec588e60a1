// Minimal deterministic neural numerics: a reverse-mode computation graph over
// dense double-precision matrices, the recurrent/attention building blocks
// used by every model in the library, Adam, and a finite-difference gradient
// checker.
//
// The graph is eager: every op computes its value at construction time.
// Parameters live outside the graph in a ParameterSet; parameter nodes read
// the parameter value in place and backward() accumulates straight into the
// parameter's gradient.

#ifndef EVCHAIN_NN_HPP_
#define EVCHAIN_NN_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evchain::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Counter-based generator: draw k is a pure function of (seed, k).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  // Independent stream derived from this generator's seed.
  Rng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Owns named trainable tensors. Parameter addresses are stable for the
// lifetime of the set, so modules may hold raw pointers into it.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  // Adds a zero-initialized parameter. Names must be unique.
  Parameter& add(std::string name, Eigen::Index rows, Eigen::Index cols);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t entry_count() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  // Uniform in [-scale, scale] for every entry, in insertion order.
  void init_uniform(Rng& rng, double scale);
  void zero_grad();

  // Name -> value copy, for comparing model states.
  std::vector<std::pair<std::string, Matrix>> snapshot() const;
  bool equals(const ParameterSet& other) const;

  nlohmann::json to_json() const;
  // Loads values by name; every stored tensor must exist with the same shape.
  void load_json(const nlohmann::json& j);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct Expr {
  int id = -1;
};

// Reverse-mode computation graph. Not thread-safe; build one per thread.
class Graph {
 public:
  Graph() = default;

  Expr input(Matrix value);
  Expr scalar(double value);
  Expr param(Parameter& p);
  // Column `column` of an embedding table stored as dim x vocab.
  Expr lookup(Parameter& table, Eigen::Index column);

  // W * x + b, with b broadcast across the columns of x.
  Expr affine(Expr w, Expr x, Expr b);
  Expr matmul(Expr a, Expr b);
  Expr transpose(Expr a);
  Expr add(Expr a, Expr b);
  Expr sub(Expr a, Expr b);
  Expr cmul(Expr a, Expr b);
  Expr scale(Expr a, double factor);
  Expr sigmoid(Expr a);
  Expr tanh(Expr a);
  Expr concat(std::span<const Expr> parts);
  Expr concat_cols(std::span<const Expr> parts);
  Expr rows(Expr a, Eigen::Index start, Eigen::Index count);
  Expr sum(std::span<const Expr> parts);
  Expr mean(std::span<const Expr> parts);
  Expr dot(Expr a, Expr b);
  Expr sum_elements(Expr a);
  // Softmax over all entries; shape preserved.
  Expr softmax(Expr a);

  // One fused LSTM step. hc is the stacked previous [h; c] (2H x 1); w is
  // 4H x (I + H) with gate blocks ordered input, forget, output, candidate.
  // Returns the stacked [h'; c'].
  Expr lstm(Expr x, Expr hc, Expr w, Expr b);

  // Cosine similarity of target against each neighbor, as an n x 1 column.
  // Norms are clamped at 1e-12.
  Expr cosines(Expr target, std::span<const Expr> neighbors);
  // phi_k = sum_j exp(-(c_j - mu_k)^2 / (2 sigma_k^2)) over an n x 1 column.
  Expr gaussian_kernels(Expr cosine_column, std::span<const double> means,
                        std::span<const double> widths);

  // Numerically stable -[y log s(z) + (1 - y) log(1 - s(z))] for a 1x1 logit.
  Expr sigmoid_bce(Expr logit, double target);
  // -log softmax(logits)[target] for a column of logits.
  Expr softmax_cross_entropy(Expr logits, Eigen::Index target);

  const Matrix& value(Expr e) const;
  double scalar_value(Expr e) const { return value(e)(0, 0); }

  // Backpropagates from a 1x1 node, accumulating into parameter gradients.
  void backward(Expr loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kInput, kParam, kLookup, kAffine, kMatMul, kTranspose, kAdd, kSub, kCMul,
    kScale, kSigmoid, kTanh, kConcat, kConcatCols, kRows, kSum, kMean, kDot,
    kSumElements, kSoftmax, kLstm, kCosines, kGaussianKernels, kSigmoidBce,
    kSoftmaxCe,
  };

  struct Node {
    Op op = Op::kInput;
    int a = -1, b = -1, c = -1, d = -1;
    std::vector<int> args;
    Matrix value;
    Matrix grad;
    Matrix aux;
    Parameter* param = nullptr;
    Eigen::Index index = 0;
    Eigen::Index count = 0;
    double number = 0.0;
    bool requires_grad = false;
  };

  Expr push(Node node);
  const Matrix& val(int id) const;
  Matrix& grad(int id);
  bool needs(int id) const { return nodes_[id].requires_grad; }
  void backprop(int id);

  std::vector<Node> nodes_;
};

// Bidirectional LSTM encoder. Outputs concatenate forward and backward states.
struct RecurrentEncoder {
  int input_dim = 0;
  int hidden_dim = 0;
  Parameter* fw_w = nullptr;
  Parameter* fw_b = nullptr;
  Parameter* bw_w = nullptr;
  Parameter* bw_b = nullptr;

  static RecurrentEncoder create(ParameterSet& params, const std::string& prefix,
                                 int input_dim, int hidden_dim);
  // Sets every forget-gate bias to `value`.
  void set_forget_bias(double value);
  int output_dim() const { return 2 * hidden_dim; }

  std::vector<Expr> encode(Graph& g, std::span<const Expr> inputs) const;
};

// Runs the encoder on plain vectors.
std::vector<Vector> encode_sequence(const RecurrentEncoder& encoder,
                                    std::span<const Vector> inputs);

// Soft attention: score_i = v . tanh(W h_i + b), alpha = softmax(score).
struct AttentionPool {
  int input_dim = 0;
  int attention_dim = 0;
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  Parameter* v = nullptr;  // 1 x attention_dim

  static AttentionPool create(ParameterSet& params, const std::string& prefix,
                              int input_dim, int attention_dim);

  // Weighted sum of states. If `weights` is non-null it receives the 1 x n
  // attention weights.
  Expr pool(Graph& g, std::span<const Expr> states, Expr* weights = nullptr) const;
};

Vector attend(const AttentionPool& pool, std::span<const Vector> states);
Vector attention_weights(const AttentionPool& pool, std::span<const Vector> states);

// tanh hidden layer followed by a linear output layer.
struct FeedForward {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;

  static FeedForward create(ParameterSet& params, const std::string& prefix,
                            int input_dim, int hidden_dim, int output_dim);
  Expr apply(Graph& g, Expr x) const;
};

inline constexpr double kProbabilityFloor = 1e-7;

double sigmoid(double z);
// Probabilities are clamped to [1e-7, 1 - 1e-7] before taking logs.
double binary_cross_entropy(double p, int y);
double cross_entropy(const Vector& distribution, Eigen::Index y);
Vector softmax(const Vector& logits);

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 5.0;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adam with bias correction. Gradients are zeroed after each step.
class Adam {
 public:
  Adam(ParameterSet& params, AdamConfig config);

  // Throws NonFiniteGradient naming the offending tensor and entry.
  void step();
  long steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  ParameterSet* params_;
  AdamConfig config_;
  std::vector<Matrix> first_moment_;
  std::vector<Matrix> second_moment_;
  long step_ = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_entry = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Compares backward() against central differences for every parameter entry.
// Relative error is |a - n| / max(1e-8, |a| + |n|). Leaves gradients zeroed.
GradCheckResult grad_check(const std::function<Expr(Graph&)>& loss,
                           ParameterSet& params, double epsilon = 1e-4);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace evchain::nn

#endif  // EVCHAIN_NN_HPP_
