#pragma once

namespace sae {

// Beta-binomial with mean p and intra-cluster correlation d:
// a = p (1 - d) / d, b = (1 - p)(1 - d) / d. Requires 0 <= y <= n,
// 0 < p < 1 and 0 < d < 1; throws std::domain_error otherwise.
double betabinomial_logpmf(long y, long n, double p, double d);

double binomial_logpmf(long y, long n, double p);

double log_binomial_coefficient(long n, long y);

// Log-likelihood of one cluster as a function of the logit-scale predictor
// eta, with its first and second derivatives in eta. The binomial
// coefficient is excluded from `value`.
struct ClusterLogLik {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

ClusterLogLik betabinomial_eta(long y, long n, double eta, double d);

ClusterLogLik binomial_eta(long y, long n, double eta);

}  // namespace sae
