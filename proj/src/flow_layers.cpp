#include <algorithm>
#include <cmath>
#include <numeric>

#include "flow_internal.hpp"

namespace flowcal {

ActNorm ActNorm::identity(Index dim) {
  return {Vector::Ones(dim), Vector::Zero(dim), true};
}

Permutation Permutation::from(std::vector<Index> perm) {
  Permutation p;
  p.inverse.assign(perm.size(), -1);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    const Index j = perm[i];
    if (j < 0 || j >= static_cast<Index>(perm.size()) || p.inverse[j] != -1)
      throw DomainError("not a permutation");
    p.inverse[j] = static_cast<Index>(i);
  }
  p.perm = std::move(perm);
  return p;
}

Permutation Permutation::random(Index dim, Rng& rng) {
  std::vector<Index> perm(dim);
  std::iota(perm.begin(), perm.end(), Index{0});
  rng.shuffle(std::span(perm));
  return from(std::move(perm));
}

namespace {

Matrix scaled_gaussian(Rng& rng, Index rows, Index cols, Index fan_in) {
  if (cols == 0) return Matrix(rows, 0);
  return gaussian_sample(rng, rows, cols) / std::sqrt(static_cast<double>(fan_in));
}

constexpr Index kKernel = 3;

}  // namespace

CouplingNet CouplingNet::make(CouplingKind kind, Index in_dim, Index out_dim, Index width,
                              Rng& rng) {
  // in_dim may be 0 (a 1-D flow): g is then a learned constant shift.
  if (in_dim < 0 || out_dim < 1 || width < 1)
    throw DomainError("coupling net needs in_dim >= 0, out_dim >= 1, width >= 1");
  CouplingNet net;
  net.kind = kind;
  net.in_dim = in_dim;
  net.out_dim = out_dim;
  net.width = width;
  net.b1 = Vector::Zero(width);
  net.b2 = Vector::Zero(width);
  net.b3 = Vector::Zero(out_dim);
  switch (kind) {
    case CouplingKind::dense:
      net.w1 = scaled_gaussian(rng, width, in_dim, std::max<Index>(in_dim, 1));
      net.w2 = scaled_gaussian(rng, width, width, width);
      net.w3 = Matrix::Zero(out_dim, width);
      break;
    case CouplingKind::conv1d:
      net.w1 = scaled_gaussian(rng, width, kKernel, kKernel);
      net.w2 = scaled_gaussian(rng, width, kKernel * width, kKernel * width);
      net.w3 = Matrix::Zero(out_dim, in_dim * width);
      break;
    default:
      throw DomainError("unknown coupling kind");
  }
  return net;
}

Matrix CouplingNet::operator()(const Matrix& x) const {
  return detail::net_forward(*this, x, nullptr);
}

Vector CouplingNet::operator()(const Vector& x) const {
  return detail::net_forward(*this, Matrix(x.transpose()), nullptr).row(0).transpose();
}

Index CouplingNet::parameter_count() const {
  return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

namespace detail {

NetGradient::NetGradient(const CouplingNet& net)
    : w1(Matrix::Zero(net.w1.rows(), net.w1.cols())),
      w2(Matrix::Zero(net.w2.rows(), net.w2.cols())),
      w3(Matrix::Zero(net.w3.rows(), net.w3.cols())),
      b1(Vector::Zero(net.b1.size())),
      b2(Vector::Zero(net.b2.size())),
      b3(Vector::Zero(net.b3.size())) {}

namespace {

Matrix dense_forward(const CouplingNet& net, const Matrix& x, NetCache* cache) {
  Matrix h1 = ((x * net.w1.transpose()).rowwise() + net.b1.transpose()).array().tanh().matrix();
  Matrix t2 = ((h1 * net.w2.transpose()).rowwise() + net.b2.transpose()).array().tanh().matrix();
  Matrix h2 = h1 + t2;
  Matrix g = (h2 * net.w3.transpose()).rowwise() + net.b3.transpose();
  if (cache) *cache = {std::move(h1), std::move(t2), std::move(h2)};
  return g;
}

Matrix dense_backward(const CouplingNet& net, const Matrix& x, const NetCache& c, const Matrix& dg,
                      NetGradient& grad) {
  grad.w3 += dg.transpose() * c.h2;
  grad.b3 += dg.colwise().sum().transpose();
  const Matrix dh2 = dg * net.w3;
  const Matrix da2 = (dh2.array() * (1.0 - c.t2.array().square())).matrix();
  grad.w2 += da2.transpose() * c.h1;
  grad.b2 += da2.colwise().sum().transpose();
  const Matrix dh1 = dh2 + da2 * net.w2;
  const Matrix da1 = (dh1.array() * (1.0 - c.h1.array().square())).matrix();
  grad.w1 += da1.transpose() * x;
  grad.b1 += da1.colwise().sum().transpose();
  return da1 * net.w1;
}

// Conv rows are handled one sample at a time; `len` positions, `ch` channels.
Matrix conv_forward(const CouplingNet& net, const Matrix& x, NetCache* cache) {
  const Index n = x.rows(), len = net.in_dim, ch = net.width;
  Matrix h1(n, len * ch), t2(n, len * ch), h2(n, len * ch);
  for (Index s = 0; s < n; ++s) {
    for (Index p = 0; p < len; ++p)
      for (Index c = 0; c < ch; ++c) {
        double a = net.b1(c);
        for (Index k = 0; k < kKernel; ++k) {
          const Index q = p + k - 1;
          if (q >= 0 && q < len) a += net.w1(c, k) * x(s, q);
        }
        h1(s, p * ch + c) = std::tanh(a);
      }
    for (Index p = 0; p < len; ++p)
      for (Index co = 0; co < ch; ++co) {
        double a = net.b2(co);
        for (Index k = 0; k < kKernel; ++k) {
          const Index q = p + k - 1;
          if (q < 0 || q >= len) continue;
          for (Index ci = 0; ci < ch; ++ci) a += net.w2(co, k * ch + ci) * h1(s, q * ch + ci);
        }
        const double t = std::tanh(a);
        t2(s, p * ch + co) = t;
        h2(s, p * ch + co) = h1(s, p * ch + co) + t;
      }
  }
  Matrix g = (h2 * net.w3.transpose()).rowwise() + net.b3.transpose();
  if (cache) *cache = {std::move(h1), std::move(t2), std::move(h2)};
  return g;
}

Matrix conv_backward(const CouplingNet& net, const Matrix& x, const NetCache& c, const Matrix& dg,
                     NetGradient& grad) {
  const Index n = x.rows(), len = net.in_dim, ch = net.width;
  grad.w3 += dg.transpose() * c.h2;
  grad.b3 += dg.colwise().sum().transpose();
  const Matrix dh2 = dg * net.w3;
  const Matrix da2 = (dh2.array() * (1.0 - c.t2.array().square())).matrix();
  Matrix dx = Matrix::Zero(n, len);
  Vector dh1(len * ch);
  for (Index s = 0; s < n; ++s) {
    dh1 = dh2.row(s).transpose();
    for (Index p = 0; p < len; ++p)
      for (Index co = 0; co < ch; ++co) {
        const double d = da2(s, p * ch + co);
        grad.b2(co) += d;
        for (Index k = 0; k < kKernel; ++k) {
          const Index q = p + k - 1;
          if (q < 0 || q >= len) continue;
          for (Index ci = 0; ci < ch; ++ci) {
            grad.w2(co, k * ch + ci) += d * c.h1(s, q * ch + ci);
            dh1(q * ch + ci) += d * net.w2(co, k * ch + ci);
          }
        }
      }
    for (Index p = 0; p < len; ++p)
      for (Index ch_i = 0; ch_i < ch; ++ch_i) {
        const double h = c.h1(s, p * ch + ch_i);
        const double d = dh1(p * ch + ch_i) * (1.0 - h * h);
        grad.b1(ch_i) += d;
        for (Index k = 0; k < kKernel; ++k) {
          const Index q = p + k - 1;
          if (q < 0 || q >= len) continue;
          grad.w1(ch_i, k) += d * x(s, q);
          dx(s, q) += d * net.w1(ch_i, k);
        }
      }
  }
  return dx;
}

}  // namespace

Matrix net_forward(const CouplingNet& net, const Matrix& x, NetCache* cache) {
  if (x.cols() != net.in_dim)
    throw DomainError("coupling net expects " + std::to_string(net.in_dim) + " inputs, got " +
                      std::to_string(x.cols()));
  return net.kind == CouplingKind::dense ? dense_forward(net, x, cache)
                                         : conv_forward(net, x, cache);
}

Matrix net_backward(const CouplingNet& net, const Matrix& x, const NetCache& cache,
                    const Matrix& dg, NetGradient& grad) {
  return net.kind == CouplingKind::dense ? dense_backward(net, x, cache, dg, grad)
                                         : conv_backward(net, x, cache, dg, grad);
}

Matrix permute_rows(const Matrix& x, const Permutation& p, Direction dir) {
  const auto& index = dir == Direction::forward ? p.perm : p.inverse;
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.cols(); ++i) y.col(i) = x.col(index[i]);
  return y;
}

}  // namespace detail

Vector coupling_forward(const Vector& x, const AdditiveCoupling& layer) {
  if (x.size() != layer.split + layer.net.out_dim) throw DomainError("coupling: dimension mismatch");
  return coupling_forward(x, layer.split, layer.net);
}

Vector coupling_inverse(const Vector& y, const AdditiveCoupling& layer) {
  if (y.size() != layer.split + layer.net.out_dim) throw DomainError("coupling: dimension mismatch");
  return coupling_inverse(y, layer.split, layer.net);
}

std::pair<Vector, double> actnorm_apply(const Vector& x, const ActNorm& layer, Direction dir) {
  if (!layer.initialized) throw DomainError("uninitialized actnorm layer");
  if (x.size() != layer.scale.size()) throw DomainError("actnorm: dimension mismatch");
  if ((layer.scale.array() == 0.0).any()) throw DomainError("actnorm: zero scale");
  const double logdet = layer.scale.array().abs().log().sum();
  if (dir == Direction::forward)
    return {(layer.scale.array() * x.array() + layer.bias.array()).matrix(), logdet};
  return {((x - layer.bias).array() / layer.scale.array()).matrix(), -logdet};
}

void actnorm_init(const Matrix& batch, ActNorm& layer) {
  if (batch.rows() < 2) throw DomainError("actnorm init needs at least two rows");
  const Vector mean = batch.colwise().mean().transpose();
  const Vector var =
      (batch.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
  for (Index i = 0; i < var.size(); ++i)
    if (!(var(i) > 0.0))
      throw DomainError("degenerate dimension " + std::to_string(i) + " (zero variance)");
  layer.scale = var.array().sqrt().inverse().matrix();
  layer.bias = -(mean.array() * layer.scale.array()).matrix();
  layer.initialized = true;
}

Vector permute(const Vector& x, const Permutation& p, Direction dir) {
  if (x.size() != static_cast<Index>(p.perm.size()))
    throw DomainError("permutation: dimension mismatch");
  const auto& index = dir == Direction::forward ? p.perm : p.inverse;
  Vector y(x.size());
  for (Index i = 0; i < x.size(); ++i) y(i) = x(index[i]);
  return y;
}

}  // namespace flowcal
