#include "evchain/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace evchain::nn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kNormFloor = 1e-12;

}  // namespace

// ---------------------------------------------------------------------------
// Rng

std::uint64_t Rng::next() {
  std::uint64_t z = splitmix64(seed_ ^ splitmix64(counter_));
  ++counter_;
  return z;
}

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  // Rejection sampling keeps draws exactly uniform.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return static_cast<std::size_t>(x % n);
}

Rng Rng::fork(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ * 0x2545f4914f6cdd1dULL + splitmix64(stream + 1)));
}

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, Eigen::Index rows,
                             Eigen::Index cols) {
  if (contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = Matrix::Zero(rows, cols);
  p->grad = Matrix::Zero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::get(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Parameter& ParameterSet::get(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(),
                     [&](const auto& p) { return p->name == name; });
}

std::size_t ParameterSet::entry_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterSet::init_uniform(Rng& rng, double scale) {
  for (auto& p : params_) {
    for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
      for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
        p->value(i, j) = rng.uniform(-scale, scale);
      }
    }
  }
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::vector<std::pair<std::string, Matrix>> ParameterSet::snapshot() const {
  std::vector<std::pair<std::string, Matrix>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p->name, p->value);
  return out;
}

bool ParameterSet::equals(const ParameterSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const Parameter& a = *params_[i];
    const Parameter& b = other[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() ||
        a.value.cols() != b.value.cols() || a.value != b.value) {
      return false;
    }
  }
  return true;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) data.push_back(m(i, j));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::runtime_error("matrix data size does not match its shape");
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = data[k++].get<double>();
  }
  return m;
}

nlohmann::json ParameterSet::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : params_) {
    nlohmann::json t = matrix_to_json(p->value);
    t["name"] = p->name;
    out.push_back(std::move(t));
  }
  return out;
}

void ParameterSet::load_json(const nlohmann::json& j) {
  for (const auto& t : j) {
    const std::string name = t.at("name").get<std::string>();
    Parameter& p = get(name);
    Matrix m = matrix_from_json(t);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw std::runtime_error("shape mismatch loading parameter " + name);
    }
    p.value = std::move(m);
    p.grad.setZero();
  }
}

// ---------------------------------------------------------------------------
// Graph construction

Expr Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Expr{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Graph::val(int id) const {
  const Node& n = nodes_[id];
  return n.op == Op::kParam ? n.param->value : n.value;
}

Matrix& Graph::grad(int id) {
  Node& n = nodes_[id];
  return n.op == Op::kParam ? n.param->grad : n.grad;
}

const Matrix& Graph::value(Expr e) const { return val(e.id); }

Expr Graph::input(Matrix value) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

Expr Graph::scalar(double value) { return input(Matrix::Constant(1, 1, value)); }

Expr Graph::param(Parameter& p) {
  Node n;
  n.op = Op::kParam;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Expr Graph::lookup(Parameter& table, Eigen::Index column) {
  if (column < 0 || column >= table.value.cols()) {
    throw std::out_of_range("embedding lookup out of range in " + table.name);
  }
  Node n;
  n.op = Op::kLookup;
  n.param = &table;
  n.index = column;
  n.value = table.value.col(column);
  n.requires_grad = true;
  return push(std::move(n));
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs "
       << b.rows() << "x" << b.cols();
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

Expr Graph::affine(Expr w, Expr x, Expr b) {
  const Matrix& W = val(w.id);
  const Matrix& X = val(x.id);
  const Matrix& B = val(b.id);
  if (W.cols() != X.rows() || B.rows() != W.rows() || B.cols() != 1) {
    throw std::invalid_argument("affine: dimension mismatch");
  }
  Node n;
  n.op = Op::kAffine;
  n.a = w.id;
  n.b = x.id;
  n.c = b.id;
  n.value = W * X;
  n.value.colwise() += B.col(0);
  n.requires_grad = needs(w.id) || needs(x.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::matmul(Expr a, Expr b) {
  if (val(a.id).cols() != val(b.id).rows()) {
    throw std::invalid_argument("matmul: dimension mismatch");
  }
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = val(a.id) * val(b.id);
  n.requires_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::transpose(Expr a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a.id;
  n.value = val(a.id).transpose();
  n.requires_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::add(Expr a, Expr b) {
  require_same_shape(val(a.id), val(b.id), "add");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.value = val(a.id) + val(b.id);
  n.requires_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::sub(Expr a, Expr b) {
  require_same_shape(val(a.id), val(b.id), "sub");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.value = val(a.id) - val(b.id);
  n.requires_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::cmul(Expr a, Expr b) {
  require_same_shape(val(a.id), val(b.id), "cmul");
  Node n;
  n.op = Op::kCMul;
  n.a = a.id;
  n.b = b.id;
  n.value = val(a.id).cwiseProduct(val(b.id));
  n.requires_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::scale(Expr a, double factor) {
  Node n;
  n.op = Op::kScale;
  n.a = a.id;
  n.number = factor;
  n.value = val(a.id) * factor;
  n.requires_grad = needs(a.id);
  return push(std::move(n));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Expr Graph::sigmoid(Expr a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  n.value = val(a.id).unaryExpr([](double z) { return nn::sigmoid(z); });
  n.requires_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::tanh(Expr a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.value = val(a.id).array().tanh().matrix();
  n.requires_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::concat(std::span<const Expr> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = val(parts[0].id).cols();
  Node n;
  n.op = Op::kConcat;
  for (Expr e : parts) {
    if (val(e.id).cols() != cols) throw std::invalid_argument("concat: column mismatch");
    rows += val(e.id).rows();
    n.args.push_back(e.id);
    n.requires_grad = n.requires_grad || needs(e.id);
  }
  n.value.resize(rows, cols);
  Eigen::Index r = 0;
  for (Expr e : parts) {
    const Matrix& v = val(e.id);
    n.value.middleRows(r, v.rows()) = v;
    r += v.rows();
  }
  return push(std::move(n));
}

Expr Graph::concat_cols(std::span<const Expr> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = val(parts[0].id).rows();
  Eigen::Index cols = 0;
  Node n;
  n.op = Op::kConcatCols;
  for (Expr e : parts) {
    if (val(e.id).rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += val(e.id).cols();
    n.args.push_back(e.id);
    n.requires_grad = n.requires_grad || needs(e.id);
  }
  n.value.resize(rows, cols);
  Eigen::Index c = 0;
  for (Expr e : parts) {
    const Matrix& v = val(e.id);
    n.value.middleCols(c, v.cols()) = v;
    c += v.cols();
  }
  return push(std::move(n));
}

Expr Graph::rows(Expr a, Eigen::Index start, Eigen::Index count) {
  const Matrix& v = val(a.id);
  if (start < 0 || count < 0 || start + count > v.rows()) {
    throw std::out_of_range("rows: slice out of range");
  }
  Node n;
  n.op = Op::kRows;
  n.a = a.id;
  n.index = start;
  n.count = count;
  n.value = v.middleRows(start, count);
  n.requires_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::sum(std::span<const Expr> parts) {
  if (parts.empty()) throw std::invalid_argument("sum: no inputs");
  Node n;
  n.op = Op::kSum;
  n.value = val(parts[0].id);
  n.args.push_back(parts[0].id);
  n.requires_grad = needs(parts[0].id);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_same_shape(n.value, val(parts[i].id), "sum");
    n.value += val(parts[i].id);
    n.args.push_back(parts[i].id);
    n.requires_grad = n.requires_grad || needs(parts[i].id);
  }
  return push(std::move(n));
}

Expr Graph::mean(std::span<const Expr> parts) {
  Expr s = sum(parts);
  Node& n = nodes_[s.id];
  n.op = Op::kMean;
  n.value /= static_cast<double>(parts.size());
  return s;
}

Expr Graph::dot(Expr a, Expr b) {
  require_same_shape(val(a.id), val(b.id), "dot");
  Node n;
  n.op = Op::kDot;
  n.a = a.id;
  n.b = b.id;
  n.value = Matrix::Constant(1, 1, val(a.id).cwiseProduct(val(b.id)).sum());
  n.requires_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::sum_elements(Expr a) {
  Node n;
  n.op = Op::kSumElements;
  n.a = a.id;
  n.value = Matrix::Constant(1, 1, val(a.id).sum());
  n.requires_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::softmax(Expr a) {
  const Matrix& z = val(a.id);
  if (z.size() == 0) throw std::invalid_argument("softmax: empty input");
  Node n;
  n.op = Op::kSoftmax;
  n.a = a.id;
  n.value = (z.array() - z.maxCoeff()).exp().matrix();
  n.value /= n.value.sum();
  n.requires_grad = needs(a.id);
  return push(std::move(n));
}

Expr Graph::lstm(Expr x, Expr hc, Expr w, Expr b) {
  const Matrix& X = val(x.id);
  const Matrix& HC = val(hc.id);
  const Matrix& W = val(w.id);
  const Matrix& B = val(b.id);
  const Eigen::Index H = HC.rows() / 2;
  if (X.cols() != 1 || HC.cols() != 1 || W.rows() != 4 * H ||
      W.cols() != X.rows() + H || B.rows() != 4 * H) {
    throw std::invalid_argument("lstm: dimension mismatch");
  }
  Vector z = W.leftCols(X.rows()) * X.col(0) + W.rightCols(H) * HC.col(0).head(H) +
             B.col(0);
  Node n;
  n.op = Op::kLstm;
  n.a = x.id;
  n.b = hc.id;
  n.c = w.id;
  n.d = b.id;
  // aux holds [i; f; o; g; tanh(c')].
  n.aux.resize(5 * H, 1);
  for (Eigen::Index k = 0; k < 3 * H; ++k) n.aux(k, 0) = nn::sigmoid(z(k));
  for (Eigen::Index k = 3 * H; k < 4 * H; ++k) n.aux(k, 0) = std::tanh(z(k));
  n.value.resize(2 * H, 1);
  for (Eigen::Index k = 0; k < H; ++k) {
    const double c_new =
        n.aux(H + k, 0) * HC(H + k, 0) + n.aux(k, 0) * n.aux(3 * H + k, 0);
    const double tc = std::tanh(c_new);
    n.aux(4 * H + k, 0) = tc;
    n.value(H + k, 0) = c_new;
    n.value(k, 0) = n.aux(2 * H + k, 0) * tc;
  }
  n.requires_grad = needs(x.id) || needs(hc.id) || needs(w.id) || needs(b.id);
  return push(std::move(n));
}

Expr Graph::cosines(Expr target, std::span<const Expr> neighbors) {
  const Matrix& t = val(target.id);
  Node n;
  n.op = Op::kCosines;
  n.a = target.id;
  n.requires_grad = needs(target.id);
  n.value.resize(static_cast<Eigen::Index>(neighbors.size()), 1);
  const double tn = std::max(t.norm(), kNormFloor);
  for (std::size_t j = 0; j < neighbors.size(); ++j) {
    const Matrix& v = val(neighbors[j].id);
    require_same_shape(t, v, "cosines");
    const double vn = std::max(v.norm(), kNormFloor);
    n.value(static_cast<Eigen::Index>(j), 0) = t.cwiseProduct(v).sum() / (tn * vn);
    n.args.push_back(neighbors[j].id);
    n.requires_grad = n.requires_grad || needs(neighbors[j].id);
  }
  return push(std::move(n));
}

Expr Graph::gaussian_kernels(Expr cosine_column, std::span<const double> means,
                             std::span<const double> widths) {
  if (means.size() != widths.size()) {
    throw std::invalid_argument("gaussian_kernels: means/widths size mismatch");
  }
  const Matrix& c = val(cosine_column.id);
  const auto K = static_cast<Eigen::Index>(means.size());
  Node n;
  n.op = Op::kGaussianKernels;
  n.a = cosine_column.id;
  n.aux.resize(K, 2);
  for (Eigen::Index k = 0; k < K; ++k) {
    n.aux(k, 0) = means[static_cast<std::size_t>(k)];
    n.aux(k, 1) = widths[static_cast<std::size_t>(k)];
  }
  n.value = Matrix::Zero(K, 1);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double mu = n.aux(k, 0);
    const double s2 = 2.0 * n.aux(k, 1) * n.aux(k, 1);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = c(j, 0) - mu;
      acc += std::exp(-d * d / s2);
    }
    n.value(k, 0) = acc;
  }
  n.requires_grad = needs(cosine_column.id);
  return push(std::move(n));
}

Expr Graph::sigmoid_bce(Expr logit, double target) {
  const double z = val(logit.id)(0, 0);
  Node n;
  n.op = Op::kSigmoidBce;
  n.a = logit.id;
  n.number = target;
  const double loss = std::max(z, 0.0) - target * z + std::log1p(std::exp(-std::abs(z)));
  n.value = Matrix::Constant(1, 1, loss);
  n.requires_grad = needs(logit.id);
  return push(std::move(n));
}

Expr Graph::softmax_cross_entropy(Expr logits, Eigen::Index target) {
  const Matrix& z = val(logits.id);
  if (z.cols() != 1 || target < 0 || target >= z.rows()) {
    throw std::out_of_range("softmax_cross_entropy: bad target");
  }
  Node n;
  n.op = Op::kSoftmaxCe;
  n.a = logits.id;
  n.index = target;
  const double m = z.maxCoeff();
  n.aux = (z.array() - m).exp().matrix();
  const double total = n.aux.sum();
  n.aux /= total;
  n.value = Matrix::Constant(1, 1, m + std::log(total) - z(target, 0));
  n.requires_grad = needs(logits.id);
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Backward

void Graph::backward(Expr loss) {
  if (loss.id < 0 || val(loss.id).size() != 1) {
    throw std::invalid_argument("backward: loss must be a 1x1 node");
  }
  for (int i = 0; i <= loss.id; ++i) {
    Node& n = nodes_[i];
    if (n.op != Op::kParam && n.requires_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].requires_grad && nodes_[i].op != Op::kParam) backprop(i);
  }
}

void Graph::backprop(int id) {
  Node& n = nodes_[id];
  const Matrix& g = n.grad;
  switch (n.op) {
    case Op::kInput:
    case Op::kParam:
      break;
    case Op::kLookup:
      n.param->grad.col(n.index) += g.col(0);
      break;
    case Op::kAffine: {
      if (needs(n.a)) grad(n.a).noalias() += g * val(n.b).transpose();
      if (needs(n.b)) grad(n.b).noalias() += val(n.a).transpose() * g;
      if (needs(n.c)) grad(n.c).col(0) += g.rowwise().sum();
      break;
    }
    case Op::kMatMul:
      if (needs(n.a)) grad(n.a).noalias() += g * val(n.b).transpose();
      if (needs(n.b)) grad(n.b).noalias() += val(n.a).transpose() * g;
      break;
    case Op::kTranspose:
      if (needs(n.a)) grad(n.a) += g.transpose();
      break;
    case Op::kAdd:
      if (needs(n.a)) grad(n.a) += g;
      if (needs(n.b)) grad(n.b) += g;
      break;
    case Op::kSub:
      if (needs(n.a)) grad(n.a) += g;
      if (needs(n.b)) grad(n.b) -= g;
      break;
    case Op::kCMul:
      if (needs(n.a)) grad(n.a) += g.cwiseProduct(val(n.b));
      if (needs(n.b)) grad(n.b) += g.cwiseProduct(val(n.a));
      break;
    case Op::kScale:
      if (needs(n.a)) grad(n.a) += g * n.number;
      break;
    case Op::kSigmoid:
      if (needs(n.a)) {
        grad(n.a).array() +=
            g.array() * n.value.array() * (1.0 - n.value.array());
      }
      break;
    case Op::kTanh:
      if (needs(n.a)) {
        grad(n.a).array() += g.array() * (1.0 - n.value.array().square());
      }
      break;
    case Op::kConcat: {
      Eigen::Index r = 0;
      for (int arg : n.args) {
        const Eigen::Index len = val(arg).rows();
        if (needs(arg)) grad(arg) += g.middleRows(r, len);
        r += len;
      }
      break;
    }
    case Op::kConcatCols: {
      Eigen::Index c = 0;
      for (int arg : n.args) {
        const Eigen::Index len = val(arg).cols();
        if (needs(arg)) grad(arg) += g.middleCols(c, len);
        c += len;
      }
      break;
    }
    case Op::kRows:
      if (needs(n.a)) grad(n.a).middleRows(n.index, n.count) += g;
      break;
    case Op::kSum:
      for (int arg : n.args) {
        if (needs(arg)) grad(arg) += g;
      }
      break;
    case Op::kMean: {
      const double w = 1.0 / static_cast<double>(n.args.size());
      for (int arg : n.args) {
        if (needs(arg)) grad(arg) += g * w;
      }
      break;
    }
    case Op::kDot:
      if (needs(n.a)) grad(n.a) += g(0, 0) * val(n.b);
      if (needs(n.b)) grad(n.b) += g(0, 0) * val(n.a);
      break;
    case Op::kSumElements:
      if (needs(n.a)) grad(n.a).array() += g(0, 0);
      break;
    case Op::kSoftmax:
      if (needs(n.a)) {
        const double gy = g.cwiseProduct(n.value).sum();
        grad(n.a).array() += n.value.array() * (g.array() - gy);
      }
      break;
    case Op::kLstm: {
      const Eigen::Index H = n.value.rows() / 2;
      const Matrix& X = val(n.a);
      const Matrix& HC = val(n.b);
      const Matrix& W = val(n.c);
      const auto gi = n.aux.col(0).segment(0, H);
      const auto gf = n.aux.col(0).segment(H, H);
      const auto go = n.aux.col(0).segment(2 * H, H);
      const auto gg = n.aux.col(0).segment(3 * H, H);
      const auto tc = n.aux.col(0).segment(4 * H, H);
      const auto dh = g.col(0).head(H);
      Vector dc = g.col(0).tail(H).array() +
                  dh.array() * go.array() * (1.0 - tc.array().square());
      Vector dz(4 * H);
      dz.segment(0, H) = dc.array() * gg.array() * gi.array() * (1.0 - gi.array());
      dz.segment(H, H) = dc.array() * HC.col(0).tail(H).array() * gf.array() *
                         (1.0 - gf.array());
      dz.segment(2 * H, H) =
          dh.array() * tc.array() * go.array() * (1.0 - go.array());
      dz.segment(3 * H, H) = dc.array() * gi.array() * (1.0 - gg.array().square());
      const Eigen::Index I = X.rows();
      if (needs(n.c)) {
        Matrix& dW = grad(n.c);
        dW.leftCols(I).noalias() += dz * X.col(0).transpose();
        dW.rightCols(H).noalias() += dz * HC.col(0).head(H).transpose();
      }
      if (needs(n.d)) grad(n.d).col(0) += dz;
      if (needs(n.a)) grad(n.a).col(0).noalias() += W.leftCols(I).transpose() * dz;
      if (needs(n.b)) {
        Matrix& dHC = grad(n.b);
        dHC.col(0).head(H).noalias() += W.rightCols(H).transpose() * dz;
        dHC.col(0).tail(H).array() += dc.array() * gf.array();
      }
      break;
    }
    case Op::kCosines: {
      const Matrix& t = val(n.a);
      const double tn = std::max(t.norm(), kNormFloor);
      for (std::size_t j = 0; j < n.args.size(); ++j) {
        const double gj = g(static_cast<Eigen::Index>(j), 0);
        if (gj == 0.0) continue;
        const int arg = n.args[j];
        const Matrix& v = val(arg);
        const double vn = std::max(v.norm(), kNormFloor);
        const double c = n.value(static_cast<Eigen::Index>(j), 0);
        if (needs(n.a)) grad(n.a) += gj * (v / (tn * vn) - c * t / (tn * tn));
        if (needs(arg)) grad(arg) += gj * (t / (tn * vn) - c * v / (vn * vn));
      }
      break;
    }
    case Op::kGaussianKernels: {
      if (!needs(n.a)) break;
      const Matrix& c = val(n.a);
      Matrix& dc = grad(n.a);
      for (Eigen::Index k = 0; k < n.aux.rows(); ++k) {
        const double mu = n.aux(k, 0);
        const double s2 = n.aux(k, 1) * n.aux(k, 1);
        for (Eigen::Index j = 0; j < c.rows(); ++j) {
          const double d = c(j, 0) - mu;
          dc(j, 0) += g(k, 0) * std::exp(-d * d / (2.0 * s2)) * (-d / s2);
        }
      }
      break;
    }
    case Op::kSigmoidBce:
      if (needs(n.a)) {
        grad(n.a)(0, 0) += g(0, 0) * (nn::sigmoid(val(n.a)(0, 0)) - n.number);
      }
      break;
    case Op::kSoftmaxCe:
      if (needs(n.a)) {
        Matrix& dz = grad(n.a);
        dz += g(0, 0) * n.aux;
        dz(n.index, 0) -= g(0, 0);
      }
      break;
  }
}

// ---------------------------------------------------------------------------
// Modules

RecurrentEncoder RecurrentEncoder::create(ParameterSet& params,
                                          const std::string& prefix,
                                          int input_dim, int hidden_dim) {
  if (input_dim <= 0 || hidden_dim <= 0) {
    throw std::invalid_argument("RecurrentEncoder: dimensions must be positive");
  }
  RecurrentEncoder enc;
  enc.input_dim = input_dim;
  enc.hidden_dim = hidden_dim;
  enc.fw_w = &params.add(prefix + ".fw.w", 4 * hidden_dim, input_dim + hidden_dim);
  enc.fw_b = &params.add(prefix + ".fw.b", 4 * hidden_dim, 1);
  enc.bw_w = &params.add(prefix + ".bw.w", 4 * hidden_dim, input_dim + hidden_dim);
  enc.bw_b = &params.add(prefix + ".bw.b", 4 * hidden_dim, 1);
  return enc;
}

void RecurrentEncoder::set_forget_bias(double value) {
  for (Parameter* b : {fw_b, bw_b}) {
    b->value.middleRows(hidden_dim, hidden_dim).setConstant(value);
  }
}

std::vector<Expr> RecurrentEncoder::encode(Graph& g,
                                           std::span<const Expr> inputs) const {
  if (inputs.empty()) throw std::invalid_argument("encode: empty sequence");
  for (Expr e : inputs) {
    if (g.value(e).rows() != input_dim || g.value(e).cols() != 1) {
      throw std::invalid_argument("encode: input dimension mismatch");
    }
  }
  const std::size_t n = inputs.size();
  std::vector<Expr> fwd(n), bwd(n);
  const Expr zero = g.input(Matrix::Zero(2 * hidden_dim, 1));
  Expr fw = g.param(*fw_w), fb = g.param(*fw_b);
  Expr bw = g.param(*bw_w), bb = g.param(*bw_b);
  Expr state = zero;
  for (std::size_t t = 0; t < n; ++t) {
    state = g.lstm(inputs[t], state, fw, fb);
    fwd[t] = g.rows(state, 0, hidden_dim);
  }
  state = zero;
  for (std::size_t t = n; t-- > 0;) {
    state = g.lstm(inputs[t], state, bw, bb);
    bwd[t] = g.rows(state, 0, hidden_dim);
  }
  std::vector<Expr> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Expr pair[2] = {fwd[t], bwd[t]};
    out[t] = g.concat(pair);
  }
  return out;
}

std::vector<Vector> encode_sequence(const RecurrentEncoder& encoder,
                                    std::span<const Vector> inputs) {
  Graph g;
  std::vector<Expr> xs;
  xs.reserve(inputs.size());
  for (const Vector& v : inputs) xs.push_back(g.input(v));
  std::vector<Vector> out;
  for (Expr e : encoder.encode(g, xs)) out.emplace_back(g.value(e).col(0));
  return out;
}

AttentionPool AttentionPool::create(ParameterSet& params, const std::string& prefix,
                                    int input_dim, int attention_dim) {
  AttentionPool pool;
  pool.input_dim = input_dim;
  pool.attention_dim = attention_dim;
  pool.w = &params.add(prefix + ".w", attention_dim, input_dim);
  pool.b = &params.add(prefix + ".b", attention_dim, 1);
  pool.v = &params.add(prefix + ".v", 1, attention_dim);
  return pool;
}

Expr AttentionPool::pool(Graph& g, std::span<const Expr> states, Expr* weights) const {
  if (states.empty()) throw std::invalid_argument("attend: empty input");
  const Expr H = g.concat_cols(states);
  const Expr proj = g.tanh(g.affine(g.param(*w), H, g.param(*b)));
  const Expr scores = g.matmul(g.param(*v), proj);  // 1 x n
  const Expr alpha = g.softmax(scores);
  if (weights != nullptr) *weights = alpha;
  return g.matmul(H, g.transpose(alpha));
}

Vector attend(const AttentionPool& pool, std::span<const Vector> states) {
  Graph g;
  std::vector<Expr> xs;
  for (const Vector& v : states) xs.push_back(g.input(v));
  return g.value(pool.pool(g, xs)).col(0);
}

Vector attention_weights(const AttentionPool& pool, std::span<const Vector> states) {
  Graph g;
  std::vector<Expr> xs;
  for (const Vector& v : states) xs.push_back(g.input(v));
  Expr alpha;
  pool.pool(g, xs, &alpha);
  return g.value(alpha).row(0).transpose();
}

FeedForward FeedForward::create(ParameterSet& params, const std::string& prefix,
                                int input_dim, int hidden_dim, int output_dim) {
  FeedForward ff;
  ff.w1 = &params.add(prefix + ".w1", hidden_dim, input_dim);
  ff.b1 = &params.add(prefix + ".b1", hidden_dim, 1);
  ff.w2 = &params.add(prefix + ".w2", output_dim, hidden_dim);
  ff.b2 = &params.add(prefix + ".b2", output_dim, 1);
  return ff;
}

Expr FeedForward::apply(Graph& g, Expr x) const {
  const Expr h = g.tanh(g.affine(g.param(*w1), x, g.param(*b1)));
  return g.affine(g.param(*w2), h, g.param(*b2));
}

// ---------------------------------------------------------------------------
// Losses

namespace {
double clamp_probability(double p) {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}
}  // namespace

double binary_cross_entropy(double p, int y) {
  const double q = clamp_probability(p);
  return y != 0 ? -std::log(q) : -std::log(1.0 - q);
}

double cross_entropy(const Vector& distribution, Eigen::Index y) {
  if (y < 0 || y >= distribution.size()) {
    throw std::out_of_range("cross_entropy: class index out of range");
  }
  return -std::log(std::max(distribution(y), kProbabilityFloor));
}

Vector softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(ParameterSet& params, AdamConfig config)
    : params_(&params), config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    first_moment_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
    second_moment_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
  }
}

void Adam::step() {
  ParameterSet& ps = *params_;
  double norm2 = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Matrix& gr = ps[i].grad;
    for (Eigen::Index k = 0; k < gr.size(); ++k) {
      if (!std::isfinite(gr.data()[k])) {
        std::ostringstream os;
        os << "non-finite gradient in " << ps[i].name << " entry " << k
           << " at step " << step_ + 1 << " (value " << gr.data()[k] << ")";
        throw NonFiniteGradient(os.str());
      }
    }
    norm2 += gr.squaredNorm();
  }
  double factor = 1.0;
  if (config_.clip_norm > 0 && norm2 > config_.clip_norm * config_.clip_norm) {
    factor = config_.clip_norm / std::sqrt(norm2);
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Parameter& p = ps[i];
    Matrix& m = first_moment_[i];
    Matrix& v = second_moment_[i];
    m = config_.beta1 * m + (1.0 - config_.beta1) * factor * p.grad;
    v = config_.beta2 * v + (1.0 - config_.beta2) * (factor * p.grad).cwiseAbs2();
    p.value.array() -= config_.learning_rate * (m.array() / bc1) /
                       ((v.array() / bc2).sqrt() + config_.epsilon);
    p.grad.setZero();
  }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(const std::function<Expr(Graph&)>& loss,
                           ParameterSet& params, double epsilon) {
  params.zero_grad();
  {
    Graph g;
    g.backward(loss(g));
  }
  std::vector<Matrix> analytic;
  for (std::size_t i = 0; i < params.size(); ++i) analytic.push_back(params[i].grad);
  params.zero_grad();

  auto evaluate = [&] {
    Graph g;
    return g.scalar_value(loss(g));
  };

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      double& theta = p.value.data()[k];
      const double saved = theta;
      theta = saved + epsilon;
      const double up = evaluate();
      theta = saved - epsilon;
      const double down = evaluate();
      theta = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[i].data()[k];
      const double rel =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++result.entries_checked;
      if (rel > result.max_relative_error || result.worst_entry < 0) {
        result.max_relative_error = std::max(rel, result.max_relative_error);
        result.worst_parameter = p.name;
        result.worst_entry = k;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace evchain::nn
