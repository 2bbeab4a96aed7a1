#pragma once

#include <cstdint>
#include <vector>

namespace lesionseg {

inline constexpr double kCovarianceFloor = 1e-6;

// Full-covariance Gaussian mixture over feature vectors of dimension <= 3.
// Covariances are kept symmetric positive definite by flooring eigenvalues
// at kCovarianceFloor.
struct GaussianMixture {
  int components = 0;
  int dim = 0;
  std::vector<double> weights;      // k, on the simplex
  std::vector<double> means;        // k * dim
  std::vector<double> covariances;  // k * dim * dim, row-major

  const double* mean(int k) const { return &means[static_cast<std::size_t>(k) * dim]; }
  const double* cov(int k) const {
    return &covariances[static_cast<std::size_t>(k) * dim * dim];
  }
};

// EM fit from a k-means++ initialization. `samples` is row-major n x dim.
// Stops at max_iter or when the relative log-likelihood change drops below
// 1e-6. Requesting more components than samples reduces k with a warning.
GaussianMixture fit_gmm(const std::vector<double>& samples, int dim, int k,
                        int max_iter, std::uint64_t seed);

// Continue EM from an existing model on a (possibly different) sample set.
// Warm starting keeps the likelihood of the new set non-decreasing relative
// to the input model, which the GrabCut energy argument relies on.
GaussianMixture refit_gmm(const GaussianMixture& model,
                          const std::vector<double>& samples, int max_iter);

// -log sum_k w_k N(x; mu_k, Sigma_k); finite for all finite x.
double neg_log_density(const GaussianMixture& m, const double* x);

// Argmax posterior responsibility per sample; ties break to the lowest index.
std::vector<int> assign_components(const GaussianMixture& m,
                                   const std::vector<double>& samples);

// Total log-likelihood of the sample set under the mixture.
double gmm_log_likelihood(const GaussianMixture& m,
                          const std::vector<double>& samples);

}  // namespace lesionseg
