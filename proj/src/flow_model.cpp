#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

#include "flow_internal.hpp"

namespace flowcal {

using detail::NetCache;
using detail::NetGradient;
using detail::permute_rows;

bool FlowModel::initialized() const {
  for (const auto& b : blocks)
    if (!b.actnorm.initialized) return false;
  return true;
}

FlowModel make_flow(Index dim, const FlowConfig& config, std::uint64_t seed) {
  if (dim < 1) throw DomainError("flow needs dimension >= 1");
  if (config.levels < 1 || config.depth < 1 || config.width < 1)
    throw DomainError("flow levels, depth and width must be >= 1");
  FlowModel model;
  model.dim = dim;
  model.config = config;
  model.seed = seed;
  Rng rng(seed);
  const Index split = dim / 2;
  for (Index k = 0; k < config.blocks(); ++k) {
    FlowBlock block;
    block.actnorm = {Vector::Ones(dim), Vector::Zero(dim), false};
    block.permutation = Permutation::random(dim, rng);
    block.coupling.split = split;
    block.coupling.net = CouplingNet::make(config.coupling, split, dim - split, config.width, rng);
    model.blocks.push_back(std::move(block));
  }
  return model;
}

namespace {

void require_ready(const FlowModel& model, Index cols) {
  if (cols != model.dim)
    throw DomainError("dimension mismatch: model is " + std::to_string(model.dim) +
                      "-dimensional, input has " + std::to_string(cols) + " columns");
  for (std::size_t k = 0; k < model.blocks.size(); ++k)
    if (!model.blocks[k].actnorm.initialized)
      throw DomainError("uninitialized actnorm in block " + std::to_string(k));
}

double actnorm_logdet(const ActNorm& a) { return a.scale.array().abs().log().sum(); }

void check_finite(const Matrix& x, std::size_t block) {
  if (!x.allFinite())
    throw NumericError("non-finite value produced by flow block " + std::to_string(block));
}

// Per-block intermediates of a batched encode, for backprop.
struct BlockTrace {
  Matrix input;     // actnorm input
  Matrix permuted;  // coupling input
  NetCache cache;
};

Matrix encode_block(const FlowBlock& b, const Matrix& x, BlockTrace* trace) {
  Matrix a = (x.array().rowwise() * b.actnorm.scale.transpose().array()).matrix();
  a.rowwise() += b.actnorm.bias.transpose();
  Matrix p = permute_rows(a, b.permutation, Direction::forward);
  const Index d = b.coupling.split;
  Matrix y = p;
  y.rightCols(p.cols() - d) +=
      detail::net_forward(b.coupling.net, p.leftCols(d), trace ? &trace->cache : nullptr);
  if (trace) {
    trace->input = x;
    trace->permuted = std::move(p);
  }
  return y;
}

Matrix decode_block(const FlowBlock& b, const Matrix& y) {
  const Index d = b.coupling.split;
  Matrix p = y;
  p.rightCols(y.cols() - d) -= detail::net_forward(b.coupling.net, y.leftCols(d), nullptr);
  Matrix a = permute_rows(p, b.permutation, Direction::inverse);
  a.rowwise() -= b.actnorm.bias.transpose();
  return (a.array().rowwise() / b.actnorm.scale.transpose().array()).matrix();
}

double gaussian_nll(const Matrix& z, double logdet) {
  const double d = static_cast<double>(z.cols());
  return 0.5 * z.rowwise().squaredNorm().mean() + 0.5 * d * std::log(2.0 * std::numbers::pi) -
         logdet;
}

}  // namespace

BatchEncoding encode(const Matrix& batch, const FlowModel& model) {
  require_ready(model, batch.cols());
  BatchEncoding out{batch, 0.0};
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    out.latent = encode_block(model.blocks[k], out.latent, nullptr);
    out.logdet += actnorm_logdet(model.blocks[k].actnorm);
    check_finite(out.latent, k);
  }
  return out;
}

Matrix decode(const Matrix& latent, const FlowModel& model) {
  require_ready(model, latent.cols());
  Matrix x = latent;
  for (std::size_t k = model.blocks.size(); k-- > 0;) {
    x = decode_block(model.blocks[k], x);
    check_finite(x, k);
  }
  return x;
}

FlowResult flow_inverse(const Vector& u, const FlowModel& model) {
  auto enc = encode(Matrix(u.transpose()), model);
  return {enc.latent.row(0).transpose(), enc.logdet};
}

FlowResult flow_forward(const Vector& z, const FlowModel& model) {
  Matrix u = decode(Matrix(z.transpose()), model);
  double logdet = 0.0;
  for (const auto& b : model.blocks) logdet -= actnorm_logdet(b.actnorm);
  return {u.row(0).transpose(), logdet};
}

void initialize_actnorms(FlowModel& model, const Matrix& data) {
  if (data.cols() != model.dim) throw DomainError("initialize_actnorms: dimension mismatch");
  Matrix x = data;
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    try {
      actnorm_init(x, model.blocks[k].actnorm);
    } catch (const DomainError& e) {
      throw DomainError("block " + std::to_string(k) + ": " + e.what());
    }
    x = encode_block(model.blocks[k], x, nullptr);
  }
}

double nll(const Matrix& batch, const FlowModel& model) {
  if (batch.rows() < 1) throw DomainError("nll: empty batch");
  const auto enc = encode(batch, model);
  return gaussian_nll(enc.latent, enc.logdet);
}

NllGradient grad_nll(const Matrix& batch, const FlowModel& model) {
  require_ready(model, batch.cols());
  if (batch.rows() < 1) throw DomainError("grad_nll: empty batch");
  std::vector<BlockTrace> traces(model.blocks.size());
  Matrix z = batch;
  double logdet = 0.0;
  for (std::size_t k = 0; k < model.blocks.size(); ++k) {
    z = encode_block(model.blocks[k], z, &traces[k]);
    logdet += actnorm_logdet(model.blocks[k].actnorm);
    check_finite(z, k);
  }

  NllGradient out;
  out.nll = gaussian_nll(z, logdet);
  out.gradient.resize(parameter_count(model));

  // Parameter offsets per block, so blocks can be filled back to front.
  std::vector<Index> offsets(model.blocks.size() + 1, 0);
  for (std::size_t k = 0; k < model.blocks.size(); ++k)
    offsets[k + 1] = offsets[k] + 2 * model.dim + model.blocks[k].coupling.net.parameter_count();

  Matrix dy = z / static_cast<double>(batch.rows());
  for (std::size_t k = model.blocks.size(); k-- > 0;) {
    const auto& b = model.blocks[k];
    const auto& tr = traces[k];
    const Index d = b.coupling.split;

    NetGradient ng(b.coupling.net);
    Matrix dp = dy;
    dp.leftCols(d) += detail::net_backward(b.coupling.net, tr.permuted.leftCols(d), tr.cache,
                                           dy.rightCols(model.dim - d), ng);
    const Matrix da = permute_rows(dp, b.permutation, Direction::inverse);

    const Vector dscale = (da.array() * tr.input.array()).colwise().sum().transpose().matrix() -
                          b.actnorm.scale.cwiseInverse();
    const Vector dbias = da.colwise().sum().transpose();

    Index at = offsets[k];
    auto put = [&](const auto& m) {
      out.gradient.segment(at, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
      at += m.size();
    };
    put(dscale);
    put(dbias);
    put(ng.w1);
    put(ng.b1);
    put(ng.w2);
    put(ng.b2);
    put(ng.w3);
    put(ng.b3);

    dy = (da.array().rowwise() * b.actnorm.scale.transpose().array()).matrix();
  }
  return out;
}

Index parameter_count(const FlowModel& model) {
  Index n = 0;
  for (const auto& b : model.blocks) n += 2 * model.dim + b.coupling.net.parameter_count();
  return n;
}

namespace {

template <typename Model, typename Visitor>
void visit_parameters(Model& model, Visitor&& visit) {
  for (auto& b : model.blocks) {
    auto& net = b.coupling.net;
    visit(b.actnorm.scale);
    visit(b.actnorm.bias);
    visit(net.w1);
    visit(net.b1);
    visit(net.w2);
    visit(net.b2);
    visit(net.w3);
    visit(net.b3);
  }
}

}  // namespace

Vector pack_parameters(const FlowModel& model) {
  Vector out(parameter_count(model));
  Index at = 0;
  visit_parameters(model, [&](const auto& m) {
    out.segment(at, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    at += m.size();
  });
  return out;
}

void unpack_parameters(FlowModel& model, const Vector& params) {
  if (params.size() != parameter_count(model))
    throw DomainError("unpack_parameters: expected " + std::to_string(parameter_count(model)) +
                      " values, got " + std::to_string(params.size()));
  Index at = 0;
  visit_parameters(model, [&](auto& m) {
    Eigen::Map<Vector>(m.data(), m.size()) = params.segment(at, m.size());
    at += m.size();
  });
}

EmbeddingMatrix transform(const EmbeddingMatrix& e, const FlowModel& model, unsigned threads) {
  require_ready(model, e.cols());
  EmbeddingMatrix out{Matrix(e.rows(), e.cols()), e.source_tag + "+flow"};
  // Fixed chunk size keeps results bit-identical for any thread count.
  constexpr Index kChunk = 256;
  const Index n = e.rows();
  const Index chunks = (n + kChunk - 1) / kChunk;
  const Index workers = std::clamp<Index>(threads, 1, std::max<Index>(chunks, 1));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  auto run = [&](Index w) {
    try {
      for (Index c = w; c < chunks; c += workers) {
        const Index begin = c * kChunk;
        const Index count = std::min(kChunk, n - begin);
        out.matrix.middleRows(begin, count) = encode(e.matrix.middleRows(begin, count), model).latent;
      }
    } catch (...) {
      errors[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (Index w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return out;
}

}  // namespace flowcal
