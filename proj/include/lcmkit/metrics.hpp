#pragma once

#include <vector>

#include "lcmkit/data.hpp"

namespace lcmkit {

// Squared 2-Wasserstein (Frechet) distance between Gaussians:
// |m1-m2|^2 + tr(c1 + c2 - 2 (c2^1/2 c1 c2^1/2)^1/2).
// Covariances are row-major d x d and must be symmetric PSD.
double gaussian_w2(const std::vector<double>& mean1, const std::vector<double>& cov1,
                   const std::vector<double>& mean2, const std::vector<double>& cov2);

// gaussian_w2 on the empirical means/covariances of two sample sets, each a
// list of equally sized vectors (>= 2 samples per side).
double empirical_frechet(const std::vector<std::vector<double>>& a,
                         const std::vector<std::vector<double>>& b);

// Mean Euclidean distance from each sample to the template of the class it
// was conditioned on; lower is better.
double per_class_fidelity(const std::vector<std::vector<double>>& samples,
                          const std::vector<int>& labels, const ToyDataset& dataset);

// Flatten a (n, L, D) tensor into n vectors of length L*D.
std::vector<std::vector<double>> to_rows(const Tensor& batch);

}  // namespace lcmkit
