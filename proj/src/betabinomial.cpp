#include "sae/betabinomial.hpp"

#include "sae/common.hpp"

#include <cmath>
#include <stdexcept>

namespace sae {

namespace {

void check_counts(long y, long n) {
    if (n < 0 || y < 0 || y > n) {
        throw std::domain_error("betabinomial: require 0 <= y <= n");
    }
}

}  // namespace

double log_binomial_coefficient(long n, long y) {
    check_counts(y, n);
    const double nn = static_cast<double>(n);
    const double yy = static_cast<double>(y);
    return std::lgamma(nn + 1.0) - std::lgamma(yy + 1.0) - std::lgamma(nn - yy + 1.0);
}

double binomial_logpmf(long y, long n, double p) {
    check_counts(y, n);
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("binomial: p must lie in (0, 1)");
    }
    return log_binomial_coefficient(n, y) + static_cast<double>(y) * std::log(p) +
           static_cast<double>(n - y) * std::log1p(-p);
}

// Ratio of gamma functions written as finite products, which stays accurate
// when a, b and a + b are huge (d close to 0).
double betabinomial_logpmf(long y, long n, double p, double d) {
    check_counts(y, n);
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("betabinomial: p must lie in (0, 1)");
    }
    if (!(d > 0.0 && d < 1.0)) {
        throw std::domain_error("betabinomial: d must lie in (0, 1)");
    }
    const double tau = (1.0 - d) / d;
    const double a = p * tau;
    const double b = (1.0 - p) * tau;
    double s = 0.0;
    for (long k = 0; k < y; ++k) {
        s += std::log((a + k) / (tau + k));
    }
    for (long k = 0; k < n - y; ++k) {
        s += std::log((b + k) / (tau + y + k));
    }
    return log_binomial_coefficient(n, y) + s;
}

ClusterLogLik betabinomial_eta(long y, long n, double eta, double d) {
    check_counts(y, n);
    if (!(d > 0.0 && d < 1.0)) {
        throw std::domain_error("betabinomial: d must lie in (0, 1)");
    }
    const double p = expit_open(eta);
    const double q = p * (1.0 - p);
    const double tau = (1.0 - d) / d;
    const double a = p * tau;
    const double b = (1.0 - p) * tau;
    ClusterLogLik out;
    double s1a = 0.0, s2a = 0.0, s1b = 0.0, s2b = 0.0;
    for (long k = 0; k < y; ++k) {
        out.value += std::log((a + k) / (tau + k));
        const double r = 1.0 / (a + k);
        s1a += r;
        s2a += r * r;
    }
    for (long k = 0; k < n - y; ++k) {
        out.value += std::log((b + k) / (tau + y + k));
        const double r = 1.0 / (b + k);
        s1b += r;
        s2b += r * r;
    }
    const double dp = tau * (s1a - s1b);
    const double dpp = -tau * tau * (s2a + s2b);
    out.d1 = dp * q;
    out.d2 = dpp * q * q + dp * q * (1.0 - 2.0 * p);
    return out;
}

ClusterLogLik binomial_eta(long y, long n, double eta) {
    check_counts(y, n);
    const double p = expit(eta);
    const double yy = static_cast<double>(y);
    const double nn = static_cast<double>(n);
    ClusterLogLik out;
    // y log p + (n - y) log(1 - p) with log p = -softplus(-eta).
    const double sp_neg = eta < 0 ? -eta + std::log1p(std::exp(eta)) : std::log1p(std::exp(-eta));
    const double sp_pos = sp_neg + eta;
    out.value = -yy * sp_neg - (nn - yy) * sp_pos;
    out.d1 = yy - nn * p;
    out.d2 = -nn * p * (1.0 - p);
    return out;
}

}  // namespace sae
