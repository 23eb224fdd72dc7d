#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's implementation of the quantity it checks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "flowcal/flowcal.hpp"

namespace oracle {

using flowcal::Index;
using flowcal::Matrix;
using flowcal::Vector;

// Rank via counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) less += 1;
      if (w == v[i]) equal += 1;
    }
    r[i] = 1 + less + (equal - 1) / 2;
  }
  return r;
}

inline double brute_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return brute_pearson(brute_ranks(x), brute_ranks(y));
}

// O(n^2) pair count.
inline double brute_auc(const std::vector<double>& s, const std::vector<int>& labels) {
  double wins = 0, total = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (labels[i] == 1 && labels[j] == 0) {
        total += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / total;
}

// Full-table Wagner-Fischer over code units; tests only feed it ASCII or
// pre-decoded strings.
inline std::size_t brute_edit(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) t[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) t[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = std::min({t[i - 1][j] + 1, t[i][j - 1] + 1,
                          t[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return t[a.size()][b.size()];
}

inline std::u32string widen(const std::string& s) { return std::u32string(s.begin(), s.end()); }

// Brute-force per-row k-NN mean. Neighbors ordered by (criterion, index).
inline std::vector<double> brute_knn(const Matrix& e, Index k, bool report_dot, bool select_dot) {
  std::vector<double> out;
  for (Index i = 0; i < e.rows(); ++i) {
    std::vector<std::tuple<double, Index, double, double>> all;
    for (Index j = 0; j < e.rows(); ++j) {
      if (j == i) continue;
      double sq = 0, dot = 0;
      for (Index c = 0; c < e.cols(); ++c) {
        const double diff = e(i, c) - e(j, c);
        sq += diff * diff;
        dot += e(i, c) * e(j, c);
      }
      all.emplace_back(select_dot ? -dot : sq, j, std::sqrt(sq), dot);
    }
    std::sort(all.begin(), all.end());
    double sum = 0;
    for (Index t = 0; t < k; ++t) sum += report_dot ? std::get<3>(all[t]) : std::get<2>(all[t]);
    out.push_back(sum / static_cast<double>(k));
  }
  return out;
}

// -mean log N(u; mu, diag(sigma^2)) with population statistics of `x`.
inline double standardized_gaussian_nll(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  double total = 0;
  for (Index c = 0; c < x.cols(); ++c) {
    double mu = 0;
    for (Index r = 0; r < x.rows(); ++r) mu += x(r, c);
    mu /= n;
    double var = 0;
    for (Index r = 0; r < x.rows(); ++r) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= n;
    for (Index r = 0; r < x.rows(); ++r) {
      const double z = (x(r, c) - mu) / std::sqrt(var);
      total += 0.5 * z * z + 0.5 * std::log(2 * std::numbers::pi) + 0.5 * std::log(var);
    }
  }
  return total / n;
}

// Central-difference Jacobian of u -> f^-1(u) at `u`.
inline Matrix numeric_jacobian(const flowcal::FlowModel& model, const Vector& u, double h = 1e-5) {
  const Index d = u.size();
  Matrix j(d, d);
  for (Index c = 0; c < d; ++c) {
    Vector up = u, dn = u;
    up(c) += h;
    dn(c) -= h;
    j.col(c) = (flowcal::flow_inverse(up, model).value - flowcal::flow_inverse(dn, model).value) /
               (2 * h);
  }
  return j;
}

// Central finite differences of the mean NLL w.r.t. every packed parameter.
inline Vector numeric_gradient(flowcal::FlowModel model, const Matrix& batch, double h = 1e-5) {
  const Vector base = flowcal::pack_parameters(model);
  Vector g(base.size());
  for (Index i = 0; i < base.size(); ++i) {
    Vector p = base;
    p(i) = base(i) + h;
    flowcal::unpack_parameters(model, p);
    const double up = flowcal::nll(batch, model);
    p(i) = base(i) - h;
    flowcal::unpack_parameters(model, p);
    const double dn = flowcal::nll(batch, model);
    g(i) = (up - dn) / (2 * h);
  }
  return g;
}

// Overwrite every parameter with small random values (keeping actnorm
// scales away from zero) so that no gradient vanishes by construction.
inline void randomize(flowcal::FlowModel& model, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (auto& b : model.blocks) {
    for (Index i = 0; i < model.dim; ++i) {
      b.actnorm.scale(i) = 1.0 + normal(gen);
      if (std::abs(b.actnorm.scale(i)) < 0.2) b.actnorm.scale(i) = 0.5;
      b.actnorm.bias(i) = normal(gen);
    }
    b.actnorm.initialized = true;
    auto& net = b.coupling.net;
    for (auto* m : {&net.w1, &net.w2, &net.w3})
      for (Index i = 0; i < m->size(); ++i) m->data()[i] = normal(gen);
    for (auto* v : {&net.b1, &net.b2, &net.b3})
      for (Index i = 0; i < v->size(); ++i) (*v)(i) = normal(gen);
  }
}

inline flowcal::FlowModel identity_initialized(flowcal::FlowModel model) {
  std::vector<Index> id(static_cast<std::size_t>(model.dim));
  std::iota(id.begin(), id.end(), Index{0});
  for (auto& b : model.blocks) {
    b.actnorm = flowcal::ActNorm::identity(model.dim);
    b.permutation = flowcal::Permutation::from(id);
  }
  return model;
}

inline Matrix random_matrix(std::uint64_t seed, Index rows, Index cols, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(gen);
  return m;
}

// Per-test scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
