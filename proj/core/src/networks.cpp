#include "nnland/networks.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nnland/errors.hpp"

namespace nnland {

namespace {

// M^T M, symmetrized so that the result is exactly symmetric.
Matrix gram(const Matrix& m) {
  const Matrix p = m.transpose() * m;
  return 0.5 * (p + p.transpose());
}

}  // namespace

const char* to_string(Architecture arch) noexcept {
  switch (arch) {
    case Architecture::Linear:
      return "linear";
    case Architecture::Residual:
      return "residual";
    case Architecture::Nonlinear:
      return "nonlinear";
  }
  return "unknown";
}

Activation::Activation(double slope) : slope_(slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw PreconditionError("Activation: parametric ReLU slope must lie in (0, 1)");
  }
}

Matrix Activation::apply(const Matrix& m) const {
  return m.unaryExpr([this](double x) { return (*this)(x); });
}

Matrix Activation::apply_inverse(const Matrix& m) const {
  return m.unaryExpr([this](double y) { return inverse(y); });
}

Matrix Activation::apply_derivative(const Matrix& m) const {
  return m.unaryExpr([this](double x) { return derivative(x); });
}

namespace {

void require_square_block(const Matrix& m, Index d, const char* what) {
  if (m.rows() != d || m.cols() != d) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(d) + "x" +
                         std::to_string(d) + " block, got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

void require_data_dim(Index d, const DataPair& data, const char* what) {
  if (data.d() != d) {
    throw DimensionError(std::string(what) + ": net dimension " + std::to_string(d) +
                         " does not match data dimension " + std::to_string(data.d()));
  }
}

/// layers[hi-1] * ... * layers[lo]; identity of size d for an empty range.
Matrix chain(const std::vector<Matrix>& layers, Index lo, Index hi, Index d) {
  Matrix out = Matrix::Identity(d, d);
  for (Index i = lo; i < hi; ++i) out = layers[static_cast<size_t>(i)] * out;
  return out;
}

GradientBlocks pack(const std::vector<Matrix>& blocks) {
  GradientBlocks out;
  out.block_count = static_cast<Index>(blocks.size());
  out.block_size = blocks.empty() ? 0 : blocks.front().size();
  out.values.resize(out.block_count * out.block_size);
  for (Index i = 0; i < out.block_count; ++i) {
    out.values.segment(i * out.block_size, out.block_size) = vec_cols(blocks[static_cast<size_t>(i)]);
  }
  out.total_norm = out.values.norm();
  return out;
}

void require_minimizer(double loss, const DataPair& data, const char* what) {
  if (!data.square()) {
    throw PreconditionError(std::string(what) + ": Hessian factorization needs m = d");
  }
  if (!(loss < kStationarityTolerance)) {
    throw PreconditionError(std::string(what) + ": point is not a zero-loss global minimizer (loss " +
                            std::to_string(loss) + ")");
  }
}

void check_linear(const LinearNet& net, const DataPair& data, const char* what) {
  if (net.layers.empty()) throw DimensionError(std::string(what) + ": net has no layers");
  const Index d = net.dim();
  for (const Matrix& w : net.layers) require_square_block(w, d, what);
  require_data_dim(d, data, what);
}

void check_residual(const ResidualNet& net, const DataPair& data, const char* what) {
  require_data_dim(net.dim(), data, what);
}

void check_nonlinear(const NonlinearNet& net, const DataPair& data, const char* what) {
  const Index d = net.w1.rows();
  require_square_block(net.w1, d, what);
  require_square_block(net.w2, d, what);
  require_data_dim(d, data, what);
}

}  // namespace

Matrix LinearNet::end_to_end() const { return chain(layers, 0, depth(), dim()); }

ResidualNet::ResidualNet(Index units, Index depth, std::vector<Matrix> blocks)
    : units_(units), depth_(depth), blocks_(std::move(blocks)) {
  if (units_ < 1 || depth_ < 1) throw DimensionError("ResidualNet: need l >= 1 and r >= 1");
  if (static_cast<Index>(blocks_.size()) != units_ * depth_) {
    throw DimensionError("ResidualNet: expected l*r blocks");
  }
  const Index d = blocks_.front().rows();
  if (d <= 0) throw DimensionError("ResidualNet: empty block");
  for (const Matrix& a : blocks_) require_square_block(a, d, "ResidualNet");
}

Matrix ResidualNet::block_product(Index k, Index lo, Index hi) const {
  Matrix out = Matrix::Identity(dim(), dim());
  for (Index q = lo; q < hi; ++q) out = block(k, q) * out;
  return out;
}

Matrix ResidualNet::unit_map(Index k) const {
  return Matrix::Identity(dim(), dim()) + block_product(k, 0, depth_);
}

std::vector<Matrix> ResidualNet::unit_maps() const {
  std::vector<Matrix> out;
  out.reserve(static_cast<size_t>(units_));
  for (Index k = 0; k < units_; ++k) out.push_back(unit_map(k));
  return out;
}

Matrix ResidualNet::end_to_end() const {
  return chain(unit_maps(), 0, units_, dim());
}

// ---------------------------------------------------------------- linear

Evaluation linear_eval(const LinearNet& net, const DataPair& data) {
  check_linear(net, data, "linear_eval");
  Evaluation out;
  out.error = net.end_to_end() * data.x() - data.y();
  out.loss = 0.5 * out.error.squaredNorm();
  return out;
}

GradientBlocks linear_grad(const LinearNet& net, const DataPair& data) {
  const Evaluation eval = linear_eval(net, data);
  const Index l = net.depth();
  const Index d = net.dim();
  std::vector<Matrix> blocks;
  blocks.reserve(static_cast<size_t>(l));
  // grad_k = (W_l..W_{k+1})^T e (W_{k-1}..W_1 X)^T, the matrix form of G_k^T vec(e).
  for (Index k = 0; k < l; ++k) {
    const Matrix below = chain(net.layers, 0, k, d) * data.x();
    const Matrix above = chain(net.layers, k + 1, l, d);
    blocks.push_back(above.transpose() * eval.error * below.transpose());
  }
  return pack(blocks);
}

Matrix build_G_block(const LinearNet& net, const DataPair& data, Index k) {
  check_linear(net, data, "build_G");
  const Index d = net.dim();
  const Matrix below = chain(net.layers, 0, k, d) * data.x();
  const Matrix above = chain(net.layers, k + 1, net.depth(), d);
  return kron(below.transpose(), above);
}

Matrix build_G(const LinearNet& net, const DataPair& data) {
  check_linear(net, data, "build_G");
  const Index d = net.dim();
  const Index rows = d * data.m();
  const Index cols = net.depth() * d * d;
  check_size(rows, cols, "build_G");
  Matrix g(rows, cols);
  for (Index k = 0; k < net.depth(); ++k) g.middleCols(k * d * d, d * d) = build_G_block(net, data, k);
  return g;
}

Matrix linear_hessian_at_min(const LinearNet& net_star, const DataPair& data) {
  require_minimizer(linear_eval(net_star, data).loss, data, "linear_hessian_at_min");
  const Matrix g = build_G(net_star, data);
  return gram(g);
}

// -------------------------------------------------------------- residual

Evaluation residual_eval(const ResidualNet& net, const DataPair& data) {
  check_residual(net, data, "residual_eval");
  Evaluation out;
  out.error = net.end_to_end() * data.x() - data.y();
  out.loss = 0.5 * out.error.squaredNorm();
  return out;
}

GradientBlocks residual_grad(const ResidualNet& net, const DataPair& data) {
  const Evaluation eval = residual_eval(net, data);
  const Index d = net.dim();
  const std::vector<Matrix> units = net.unit_maps();
  std::vector<Matrix> blocks;
  blocks.reserve(net.blocks().size());
  for (Index k = 0; k < net.units(); ++k) {
    const Matrix below = chain(units, 0, k, d) * data.x();
    const Matrix above = chain(units, k + 1, net.units(), d);
    for (Index q = 0; q < net.depth(); ++q) {
      const Matrix left = above * net.block_product(k, q + 1, net.depth());
      const Matrix right = net.block_product(k, 0, q) * below;
      blocks.push_back(left.transpose() * eval.error * right.transpose());
    }
  }
  return pack(blocks);
}

Matrix build_Q_block(const ResidualNet& net, const DataPair& data, Index k, Index q) {
  check_residual(net, data, "build_Q");
  const Index d = net.dim();
  const std::vector<Matrix> units = net.unit_maps();
  const Matrix below = chain(units, 0, k, d) * data.x();
  const Matrix above = chain(units, k + 1, net.units(), d);
  const Matrix outer = kron(below.transpose(), above);
  const Matrix inner = kron(net.block_product(k, 0, q).transpose(),
                            net.block_product(k, q + 1, net.depth()));
  return outer * inner;
}

Matrix build_Q(const ResidualNet& net, const DataPair& data) {
  check_residual(net, data, "build_Q");
  const Index d = net.dim();
  const Index rows = d * data.m();
  const Index cols = net.units() * net.depth() * d * d;
  check_size(rows, cols, "build_Q");
  Matrix q_all(rows, cols);
  Index col = 0;
  for (Index k = 0; k < net.units(); ++k) {
    for (Index q = 0; q < net.depth(); ++q, col += d * d) {
      q_all.middleCols(col, d * d) = build_Q_block(net, data, k, q);
    }
  }
  return q_all;
}

Matrix residual_hessian_at_min(const ResidualNet& net_star, const DataPair& data) {
  require_minimizer(residual_eval(net_star, data).loss, data, "residual_hessian_at_min");
  const Matrix q = build_Q(net_star, data);
  return gram(q);
}

// ------------------------------------------------------------- nonlinear

Evaluation nonlinear_eval(const NonlinearNet& net, const DataPair& data) {
  check_nonlinear(net, data, "nonlinear_eval");
  Evaluation out;
  out.error = net.w2 * net.activation.apply(net.w1 * data.x()) - data.y();
  out.loss = 0.5 * out.error.squaredNorm();
  return out;
}

GradientBlocks nonlinear_grad(const NonlinearNet& net, const DataPair& data) {
  const Evaluation eval = nonlinear_eval(net, data);
  const Matrix pre = net.w1 * data.x();
  const Matrix hidden = net.activation.apply(pre);
  const Matrix back = hadamard(net.activation.apply_derivative(pre), net.w2.transpose() * eval.error);
  return pack({back * data.x().transpose(), eval.error * hidden.transpose()});
}

Matrix build_H(const NonlinearNet& net, const DataPair& data) {
  check_nonlinear(net, data, "build_H");
  const Index d = net.w1.rows();
  const Index m = data.m();
  check_size(d * m, 2 * d * d, "build_H");
  const Matrix pre = net.w1 * data.x();
  const Matrix id_d = Matrix::Identity(d, d);
  const Matrix id_m = Matrix::Identity(m, m);
  const Vector slopes = vec_cols(net.activation.apply_derivative(pre));
  const Matrix first = kron(id_m, net.w2) * slopes.asDiagonal() * kron(data.x().transpose(), id_d);
  const Matrix second = kron(net.activation.apply(pre).transpose(), id_d);
  Matrix h(d * m, 2 * d * d);
  h << first, second;
  return h;
}

double kink_margin(const NonlinearNet& net, const DataPair& data) {
  check_nonlinear(net, data, "kink_margin");
  return (net.w1 * data.x()).cwiseAbs().minCoeff();
}

Matrix nonlinear_hessian_at_min(const NonlinearNet& net_star, const DataPair& data) {
  require_minimizer(nonlinear_eval(net_star, data).loss, data, "nonlinear_hessian_at_min");
  if (kink_margin(net_star, data) < kKinkTolerance) {
    throw PreconditionError(
        "nonlinear_hessian_at_min: a preactivation sits on the activation kink; the loss is not "
        "twice differentiable there");
  }
  const Matrix h = build_H(net_star, data);
  return gram(h);
}

// --------------------------------------------------------------- generic

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;
}  // namespace

Architecture architecture_of(const Net& net) noexcept {
  return std::visit(overloaded{[](const LinearNet&) { return Architecture::Linear; },
                               [](const ResidualNet&) { return Architecture::Residual; },
                               [](const NonlinearNet&) { return Architecture::Nonlinear; }},
                    net);
}

std::vector<Matrix> parameter_blocks(const Net& net) {
  return std::visit(overloaded{[](const LinearNet& n) { return n.layers; },
                               [](const ResidualNet& n) { return n.blocks(); },
                               [](const NonlinearNet& n) { return std::vector<Matrix>{n.w1, n.w2}; }},
                    net);
}

Index block_count(const Net& net) { return static_cast<Index>(parameter_blocks(net).size()); }

Index net_dim(const Net& net) {
  return std::visit(overloaded{[](const LinearNet& n) { return n.dim(); },
                               [](const ResidualNet& n) { return n.dim(); },
                               [](const NonlinearNet& n) { return n.w1.rows(); }},
                    net);
}

Index parameter_count(const Net& net) {
  const Index d = net_dim(net);
  return block_count(net) * d * d;
}

Evaluation evaluate(const Net& net, const DataPair& data) {
  return std::visit(overloaded{[&](const LinearNet& n) { return linear_eval(n, data); },
                               [&](const ResidualNet& n) { return residual_eval(n, data); },
                               [&](const NonlinearNet& n) { return nonlinear_eval(n, data); }},
                    net);
}

GradientBlocks gradient(const Net& net, const DataPair& data) {
  return std::visit(overloaded{[&](const LinearNet& n) { return linear_grad(n, data); },
                               [&](const ResidualNet& n) { return residual_grad(n, data); },
                               [&](const NonlinearNet& n) { return nonlinear_grad(n, data); }},
                    net);
}

Matrix factor_matrix(const Net& net, const DataPair& data) {
  return std::visit(overloaded{[&](const LinearNet& n) { return build_G(n, data); },
                               [&](const ResidualNet& n) { return build_Q(n, data); },
                               [&](const NonlinearNet& n) { return build_H(n, data); }},
                    net);
}

Matrix hessian_at_min(const Net& net, const DataPair& data) {
  return std::visit(
      overloaded{[&](const LinearNet& n) { return linear_hessian_at_min(n, data); },
                 [&](const ResidualNet& n) { return residual_hessian_at_min(n, data); },
                 [&](const NonlinearNet& n) { return nonlinear_hessian_at_min(n, data); }},
      net);
}

Vector flatten(const Net& net) { return pack(parameter_blocks(net)).values; }

Net with_blocks(const Net& shape, const std::vector<Matrix>& blocks) {
  if (static_cast<Index>(blocks.size()) != block_count(shape)) {
    throw DimensionError("with_blocks: block count does not match the net shape");
  }
  return std::visit(
      overloaded{[&](const LinearNet&) -> Net { return LinearNet{blocks}; },
                 [&](const ResidualNet& n) -> Net { return ResidualNet(n.units(), n.depth(), blocks); },
                 [&](const NonlinearNet& n) -> Net {
                   return NonlinearNet{blocks[0], blocks[1], n.activation};
                 }},
      shape);
}

Net with_parameters(const Net& shape, const Vector& flat) {
  const Index d = net_dim(shape);
  const Index count = block_count(shape);
  if (flat.size() != count * d * d) {
    throw DimensionError("with_parameters: flat vector length does not match the net shape");
  }
  std::vector<Matrix> blocks;
  blocks.reserve(static_cast<size_t>(count));
  for (Index i = 0; i < count; ++i) blocks.push_back(unvec(flat.segment(i * d * d, d * d), d, d));
  return with_blocks(shape, blocks);
}

}  // namespace nnland
