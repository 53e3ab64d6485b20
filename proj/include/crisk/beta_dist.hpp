#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "crisk/errors.hpp"
#include "crisk/rng.hpp"

namespace crisk {

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace detail {

// Continued fraction for the regularized incomplete beta, modified Lentz scheme.
inline double incbeta_cf(double x, double a, double b) {
    const double tiny = 1e-300;
    const double eps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 400; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < eps) return h;
    }
    throw numeric_error("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

inline double beta_pdf(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw input_error("beta_pdf: shape parameters must be positive");
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(a, b));
}

// Regularized incomplete beta I_x(a,b).
inline double beta_cdf(double x, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw input_error("beta_cdf: shape parameters must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw input_error("beta_cdf: x must lie in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    if (a == 1.0 && b == 1.0) return x;
    if (a == 0.5 && b == 0.5) return 2.0 / M_PI * std::asin(std::sqrt(x));
    const double front =
        std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::incbeta_cf(x, a, b) / a;
    return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(b, a)) *
                     detail::incbeta_cf(1.0 - x, b, a) / b;
}

// Inverse of beta_cdf, bracketed Newton; round trips to within 1e-8 or better.
inline double beta_inverse_cdf(double u, double a, double b) {
    if (!(a > 0.0) || !(b > 0.0))
        throw input_error("beta_inverse_cdf: shape parameters must be positive");
    if (!(u >= 0.0 && u <= 1.0)) throw input_error("beta_inverse_cdf: u must lie in [0,1]");
    if (u == 0.0) return 0.0;
    if (u == 1.0) return 1.0;
    if (a == 1.0 && b == 1.0) return u;
    if (a == 0.5 && b == 0.5) {
        const double s = std::sin(0.5 * M_PI * u);
        return s * s;
    }
    if (a == 2.0 && b == 2.0) {
        // CDF is the cubic 3x^2 - 2x^3; closed-form inverse.
        return 0.5 - std::sin(std::asin(1.0 - 2.0 * u) / 3.0);
    }

    double lo = 0.0, hi = 1.0;
    double x = a / (a + b);
    for (int it = 0; it < 300; ++it) {
        const double f = beta_cdf(x, a, b) - u;
        if (f > 0.0)
            hi = x;
        else
            lo = x;
        // stop at a one-ulp bracket; steep tails quantize the CDF per ulp
        if (std::fabs(f) < 1e-14 || std::nextafter(lo, hi) >= hi) break;
        const double dens = beta_pdf(x, a, b);
        double next = dens > 0.0 ? x - f / dens : x;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    return x;
}

namespace detail {

// Marsaglia-Tsang squeeze method; shape < 1 handled by the boost relation
// Gamma(a) = Gamma(a+1) * U^(1/a).
inline double gamma_sample(double shape, RngStream& rng) {
    if (shape < 1.0) {
        const double u = rng.next_uniform();
        return gamma_sample(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double z, v;
        do {
            z = rng.next_normal();
            v = 1.0 + c * z;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = rng.next_uniform();
        if (u < 1.0 - 0.0331 * z * z * z * z) return d * v;
        if (std::log(u) < 0.5 * z * z + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace detail

// Beta(mu, nu) draw via the two-gamma ratio; strictly inside (0,1).
inline double beta_sample(double mu, double nu, RngStream& rng) {
    if (!(mu > 0.0) || !(nu > 0.0))
        throw input_error("beta_sample: shape parameters must be positive");
    const double x = detail::gamma_sample(mu, rng);
    const double y = detail::gamma_sample(nu, rng);
    double r = x / (x + y);
    const double eps = std::numeric_limits<double>::min();
    if (r < eps) r = eps;
    if (r > 1.0 - 1e-16) r = 1.0 - 1e-16;
    return r;
}

// Maximum-likelihood fit of mu for a Beta(mu, mu(1-m)/m) family with the mean
// pinned at m. Observations are clamped away from {0,1}; the search runs over
// log mu in [-8, 8] by golden sections.
inline double fit_beta_mu_mle(std::span<const double> observations, double m) {
    if (!(m > 0.0 && m < 1.0)) throw input_error("fit_beta_mu_mle: mean must lie in (0,1)");
    std::vector<double> x;
    x.reserve(observations.size());
    for (double v : observations) {
        if (std::isnan(v)) continue;
        x.push_back(std::clamp(v, 1e-4, 1.0 - 1e-4));
    }
    if (x.size() < 5)
        throw input_error("fit_beta_mu_mle: need at least 5 observations");
    const bool degenerate =
        std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
    if (degenerate) throw input_error("fit_beta_mu_mle: all observations equal");

    double sum_log_x = 0.0, sum_log_1mx = 0.0;
    for (double v : x) {
        sum_log_x += std::log(v);
        sum_log_1mx += std::log1p(-v);
    }
    const double n = static_cast<double>(x.size());
    const double ratio = (1.0 - m) / m;
    const auto loglik = [&](double log_mu) {
        const double mu = std::exp(log_mu);
        const double nu = mu * ratio;
        return (mu - 1.0) * sum_log_x + (nu - 1.0) * sum_log_1mx - n * log_beta(mu, nu);
    };

    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = -8.0, hi = 8.0;
    double c = hi - gr * (hi - lo);
    double d = lo + gr * (hi - lo);
    double fc = loglik(c), fd = loglik(d);
    while (hi - lo > 1e-8) {
        if (fc > fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = loglik(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = loglik(d);
        }
    }
    return std::exp(0.5 * (lo + hi));
}

}  // namespace crisk
