#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowcal/flow.hpp"

namespace flowcal {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DomainError("learning rate must be > 0");
  if (!(epochs >= 0.0) || !std::isfinite(epochs)) throw DomainError("epochs must be >= 0");
  if (batch_size < 1) throw DomainError("batch size must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw DomainError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw DomainError("Adam epsilon must be > 0");
  if (!(clip_norm > 0.0)) throw DomainError("clip norm must be > 0");
}

namespace {

// Shuffling draws from a stream distinct from the one that built the model.
constexpr std::uint64_t kShuffleStream = 0x53485546464c4531ULL;

class Adam {
 public:
  Adam(Index n, const TrainConfig& cfg)
      : cfg_(cfg), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  void step(Vector& params, const Vector& grad) {
    ++t_;
    m_ = cfg_.adam_beta1 * m_ + (1.0 - cfg_.adam_beta1) * grad;
    v_ = cfg_.adam_beta2 * v_ + (1.0 - cfg_.adam_beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    params.array() -= cfg_.learning_rate * (m_.array() / c1) /
                      ((v_.array() / c2).sqrt() + cfg_.adam_eps);
  }

 private:
  const TrainConfig& cfg_;
  Vector m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace

TrainResult train_flow(const Matrix& data, const FlowConfig& flow_config,
                       const TrainConfig& train_config, const StepCallback& on_step) {
  train_config.validate();
  if (data.rows() < 2) throw DomainError("training needs at least two rows");
  if (!data.allFinite()) throw DomainError("training data is not finite");

  TrainResult result;
  result.model = make_flow(data.cols(), flow_config, train_config.seed);
  FlowModel& model = result.model;
  initialize_actnorms(model, data);
  result.initial_nll = nll(data, model);

  const Index n = data.rows();
  const Index batch = std::min(train_config.batch_size, n);
  const Index steps_per_epoch = (n + batch - 1) / batch;
  const auto total_steps = static_cast<Index>(
      std::ceil(train_config.epochs * static_cast<double>(steps_per_epoch) - 1e-9));

  Rng rng(train_config.seed ^ kShuffleStream);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Index cursor = n;

  Vector params = pack_parameters(model);
  Adam adam(params.size(), train_config);
  Matrix rows;
  for (Index step = 0; step < total_steps; ++step) {
    if (cursor >= n) {
      rng.shuffle(std::span(order));
      cursor = 0;
    }
    const Index count = std::min(batch, n - cursor);
    rows.resize(count, data.cols());
    for (Index i = 0; i < count; ++i) rows.row(i) = data.row(order[cursor + i]);
    cursor += count;

    NllGradient g;
    try {
      g = grad_nll(rows, model);
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(g.nll) || !g.gradient.allFinite())
      throw NumericError("non-finite loss at training step " + std::to_string(step));
    result.step_nll.push_back(g.nll);
    if (on_step) on_step(step, g.nll);

    const double norm = g.gradient.norm();
    if (norm > train_config.clip_norm) g.gradient *= train_config.clip_norm / norm;
    adam.step(params, g.gradient);
    unpack_parameters(model, params);
  }
  result.final_nll = nll(data, model);
  return result;
}

}  // namespace flowcal
