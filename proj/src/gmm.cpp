#include "lesionseg/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace lesionseg {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Per-component cached terms for density evaluation.
struct ComponentCache {
  VectorXd mean;
  MatrixXd inv_cov;
  double log_norm = 0.0;  // -0.5 * (dim * ln(2*pi) + ln det)
  double log_weight = -std::numeric_limits<double>::infinity();
};

MatrixXd floored_covariance(const MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  VectorXd ev = es.eigenvalues().cwiseMax(kCovarianceFloor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

std::vector<ComponentCache> build_cache(const GaussianMixture& m) {
  std::vector<ComponentCache> cache(m.components);
  for (int k = 0; k < m.components; ++k) {
    auto& c = cache[k];
    c.mean = Eigen::Map<const VectorXd>(m.mean(k), m.dim);
    MatrixXd cov = Eigen::Map<const MatrixXd>(m.cov(k), m.dim, m.dim);
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      cov = floored_covariance(cov);
      llt.compute(cov);
    }
    double log_det = 0.0;
    for (int i = 0; i < m.dim; ++i)
      log_det += 2.0 * std::log(llt.matrixL()(i, i));
    c.inv_cov = llt.solve(MatrixXd::Identity(m.dim, m.dim));
    c.log_norm = -0.5 * (m.dim * std::log(2.0 * std::numbers::pi) + log_det);
    c.log_weight = m.weights[k] > 0.0
                       ? std::log(m.weights[k])
                       : -std::numeric_limits<double>::infinity();
  }
  return cache;
}

double log_component_density(const ComponentCache& c, const double* x,
                             int dim) {
  VectorXd d = Eigen::Map<const VectorXd>(x, dim) - c.mean;
  return c.log_norm - 0.5 * d.dot(c.inv_cov * d);
}

double log_sum_exp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// One EM pass: E-step responsibilities, M-step update. Returns the
// log-likelihood of the samples under the *input* model.
double em_step(GaussianMixture& m, const std::vector<double>& samples) {
  const int dim = m.dim;
  const std::size_t n = samples.size() / dim;
  const auto cache = build_cache(m);

  std::vector<double> resp(n * m.components);
  std::vector<double> logp(m.components);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = &samples[i * dim];
    for (int k = 0; k < m.components; ++k)
      logp[k] = cache[k].log_weight + log_component_density(cache[k], x, dim);
    const double lse = log_sum_exp(logp);
    ll += lse;
    for (int k = 0; k < m.components; ++k)
      resp[i * m.components + k] =
          std::isfinite(logp[k]) ? std::exp(logp[k] - lse) : 0.0;
  }

  for (int k = 0; k < m.components; ++k) {
    double nk = 0.0;
    VectorXd mu = VectorXd::Zero(dim);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resp[i * m.components + k];
      nk += r;
      mu += r * Eigen::Map<const VectorXd>(&samples[i * dim], dim);
    }
    m.weights[k] = nk / static_cast<double>(n);
    if (nk <= 0.0) continue;  // dead component keeps its parameters
    mu /= nk;
    MatrixXd cov = MatrixXd::Zero(dim, dim);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = resp[i * m.components + k];
      if (r == 0.0) continue;
      VectorXd d = Eigen::Map<const VectorXd>(&samples[i * dim], dim) - mu;
      cov += r * (d * d.transpose());
    }
    cov /= nk;
    cov = floored_covariance(cov);
    for (int i = 0; i < dim; ++i) m.means[static_cast<std::size_t>(k) * dim + i] = mu(i);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        m.covariances[(static_cast<std::size_t>(k) * dim + i) * dim + j] =
            cov(i, j);
  }
  return ll;
}

GaussianMixture run_em(GaussianMixture m, const std::vector<double>& samples,
                       int max_iter) {
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const double ll = em_step(m, samples);
    if (std::isfinite(prev_ll) &&
        std::abs(ll - prev_ll) < 1e-6 * (std::abs(prev_ll) + 1.0))
      break;
    prev_ll = ll;
  }
  return m;
}

// k-means++ seeding followed by a few Lloyd iterations; returns hard cluster
// assignments.
std::vector<int> kmeans_init(const std::vector<double>& samples, int dim,
                             int k, std::mt19937_64& rng) {
  const std::size_t n = samples.size() / dim;
  std::vector<std::size_t> centers;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  centers.push_back(first(rng));

  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  const auto sqdist = [&](std::size_t a, const double* c) {
    double s = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = samples[a * dim + j] - c[j];
      s += d * d;
    }
    return s;
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sqdist(i, &samples[centers.back() * dim]));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
  }

  std::vector<double> mu(static_cast<std::size_t>(k) * dim);
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < dim; ++j) mu[static_cast<std::size_t>(c) * dim + j] = samples[centers[c] * dim + j];

  std::vector<int> assign(n, 0);
  for (int pass = 0; pass < 10; ++pass) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = sqdist(i, &mu[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sqdist(i, &mu[static_cast<std::size_t>(c) * dim]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    if (!changed && pass > 0) break;
    std::vector<double> sum(static_cast<std::size_t>(k) * dim, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++cnt[assign[i]];
      for (int j = 0; j < dim; ++j)
        sum[static_cast<std::size_t>(assign[i]) * dim + j] += samples[i * dim + j];
    }
    for (int c = 0; c < k; ++c)
      if (cnt[c] > 0)
        for (int j = 0; j < dim; ++j)
          mu[static_cast<std::size_t>(c) * dim + j] =
              sum[static_cast<std::size_t>(c) * dim + j] / cnt[c];
  }
  return assign;
}

}  // namespace

GaussianMixture fit_gmm(const std::vector<double>& samples, int dim, int k,
                        int max_iter, std::uint64_t seed) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("gmm dim must be 1..3");
  if (k < 1) throw std::invalid_argument("gmm needs at least one component");
  if (samples.empty() || samples.size() % dim != 0)
    throw std::invalid_argument("sample array does not match dim");
  const std::size_t n = samples.size() / dim;
  if (static_cast<std::size_t>(k) > n) {
    std::cerr << "fit_gmm: reducing components from " << k << " to " << n
              << " (sample count)\n";
    k = static_cast<int>(n);
  }

  std::mt19937_64 rng(seed);
  const auto assign = kmeans_init(samples, dim, k, rng);

  GaussianMixture m;
  m.components = k;
  m.dim = dim;
  m.weights.assign(k, 0.0);
  m.means.assign(static_cast<std::size_t>(k) * dim, 0.0);
  m.covariances.assign(static_cast<std::size_t>(k) * dim * dim, 0.0);

  std::vector<std::size_t> cnt(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++cnt[assign[i]];
    for (int j = 0; j < dim; ++j)
      m.means[static_cast<std::size_t>(assign[i]) * dim + j] +=
          samples[i * dim + j];
  }
  for (int c = 0; c < k; ++c) {
    m.weights[c] = static_cast<double>(cnt[c]) / static_cast<double>(n);
    if (cnt[c] > 0)
      for (int j = 0; j < dim; ++j)
        m.means[static_cast<std::size_t>(c) * dim + j] /= cnt[c];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int c = assign[i];
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b)
        m.covariances[(static_cast<std::size_t>(c) * dim + a) * dim + b] +=
            (samples[i * dim + a] - m.means[static_cast<std::size_t>(c) * dim + a]) *
            (samples[i * dim + b] - m.means[static_cast<std::size_t>(c) * dim + b]);
  }
  for (int c = 0; c < k; ++c) {
    MatrixXd cov = MatrixXd::Identity(dim, dim) * kCovarianceFloor;
    if (cnt[c] > 0) {
      cov = Eigen::Map<MatrixXd>(
                &m.covariances[static_cast<std::size_t>(c) * dim * dim], dim,
                dim) /
            static_cast<double>(cnt[c]);
      cov = floored_covariance(cov);
    }
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b)
        m.covariances[(static_cast<std::size_t>(c) * dim + a) * dim + b] =
            cov(a, b);
  }

  return run_em(std::move(m), samples, max_iter);
}

GaussianMixture refit_gmm(const GaussianMixture& model,
                          const std::vector<double>& samples, int max_iter) {
  if (samples.empty() || samples.size() % model.dim != 0)
    throw std::invalid_argument("sample array does not match model dim");
  return run_em(model, samples, max_iter);
}

double neg_log_density(const GaussianMixture& m, const double* x) {
  const auto cache = build_cache(m);
  std::vector<double> logp(m.components);
  for (int k = 0; k < m.components; ++k)
    logp[k] = cache[k].log_weight + log_component_density(cache[k], x, m.dim);
  return -log_sum_exp(logp);
}

std::vector<int> assign_components(const GaussianMixture& m,
                                   const std::vector<double>& samples) {
  if (samples.size() % m.dim != 0)
    throw std::invalid_argument("sample array does not match model dim");
  const std::size_t n = samples.size() / m.dim;
  const auto cache = build_cache(m);
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = &samples[i * m.dim];
    int best = 0;
    double best_lp = cache[0].log_weight +
                     log_component_density(cache[0], x, m.dim);
    for (int k = 1; k < m.components; ++k) {
      const double lp =
          cache[k].log_weight + log_component_density(cache[k], x, m.dim);
      if (lp > best_lp) {
        best_lp = lp;
        best = k;
      }
    }
    out[i] = best;
  }
  return out;
}

double gmm_log_likelihood(const GaussianMixture& m,
                          const std::vector<double>& samples) {
  const std::size_t n = samples.size() / m.dim;
  const auto cache = build_cache(m);
  std::vector<double> logp(m.components);
  double ll = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < m.components; ++k)
      logp[k] = cache[k].log_weight +
                log_component_density(cache[k], &samples[i * m.dim], m.dim);
    ll += log_sum_exp(logp);
  }
  return ll;
}

}  // namespace lesionseg
