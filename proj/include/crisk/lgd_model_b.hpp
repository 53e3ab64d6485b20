#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crisk/beta_dist.hpp"
#include "crisk/errors.hpp"
#include "crisk/matrix.hpp"
#include "crisk/normal.hpp"
#include "crisk/portfolio.hpp"

namespace crisk {

inline constexpr double kLambdaMax = 1.0 / 12.0;  // Cauchy-Schwarz bound on the coupling
inline constexpr double kLambdaLo = 1.0 / 84.0;   // lambda_max / 7
inline constexpr double kLambdaHi = 1.0 / 18.0;   // 2 * lambda_max / 3, where xi = 2

// Collateralized loans get the concave shape on a tight support; unsecured
// ones the convex shape on the widest symmetric support.
inline std::pair<double, double> shape_params(double lbar, bool collateralized) {
    if (!(lbar > 0.0 && lbar < 1.0))
        throw input_error("shape_params: expected lgd must lie in (0,1)");
    const double reach = std::min(lbar, 1.0 - lbar);
    if (collateralized) return {2.0, 0.2 * reach};
    return {0.5, reach};
}

struct ModelBParams {
    double lbar = 0.5;
    bool collateralized = false;
    double shape = 0.5;   // symmetric beta parameter, mu = nu
    double delta = 0.5;   // support half-width
    double lambda = kLambdaLo;  // clamped coupling covariance
    double xi = 0.0;      // perturbation width implied by lambda
};

// CDF of the symmetric transformed-beta severity on [lbar-delta, lbar+delta].
inline double lgd_marginal_cdf(double y, const ModelBParams& params) {
    if (params.delta == 0.0) return y < params.lbar ? 0.0 : 1.0;
    const double t = (y - params.lbar + params.delta) / (2.0 * params.delta);
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return beta_cdf(t, params.shape, params.shape);
}

inline double lgd_marginal_inverse(double u, const ModelBParams& params) {
    if (!(u >= 0.0 && u <= 1.0))
        throw input_error("lgd_marginal_inverse: u must lie in [0,1]");
    if (params.delta == 0.0) return params.lbar;
    return params.lbar - params.delta +
           2.0 * params.delta * beta_inverse_cdf(u, params.shape, params.shape);
}

// The plain beta parametrization used by earlier severity models, kept as a
// selectable reference marginal; the mean is lbar for every kappa.
inline std::pair<double, double> prior_beta_mode(double lbar, double kappa) {
    if (!(lbar > 0.0 && lbar < 1.0))
        throw input_error("prior_beta_mode: expected lgd must lie in (0,1)");
    if (!(kappa > 1.0)) throw input_error("prior_beta_mode: kappa must exceed 1");
    return {(kappa - 1.0) * lbar, (kappa - 1.0) * (1.0 - lbar)};
}

// CDF of the standardized return conditional on default: Phi(x)/p below the
// default barrier and 1 above it.
inline double truncated_gaussian_cdf(double x, double p) {
    if (!(p > 0.0 && p < 1.0))
        throw input_error("truncated_gaussian_cdf: p must lie in (0,1)");
    return std::min(std_normal_cdf(x) / p, 1.0);
}

// CDF of H = U * (1 + xi*(V - 1/2)) for independent standard uniforms U, V.
// Support is [1 - xi/2, 1 + xi/2]; the value at 0 is the two-sided limit
// 1/2 - 1/xi. xi = 2 is admitted as the closure point of the coupling window.
inline double f_h(double y, double xi) {
    if (!(xi >= 2.0)) throw input_error("f_h: xi must be at least 2");
    const double lo = 1.0 - 0.5 * xi;
    const double hi = 1.0 + 0.5 * xi;
    if (y <= lo) return 0.0;
    if (y >= hi) return 1.0;
    if (y == 0.0) return 0.5 - 1.0 / xi;
    if (y < 0.0)
        return 0.5 - 1.0 / xi + y / xi + (y / xi) * (std::log(0.5 * xi - 1.0) - std::log(-y));
    return 0.5 - 1.0 / xi + y / xi + (y / xi) * (std::log(1.0 + 0.5 * xi) - std::log(y));
}

// Exact coupling of the construction: Cov(F_H(H), U) = 1/(9 xi), obtained by
// integrating F_H over the unit square. Inverting gives xi = 1/(9 lambda).
// (The quadrature and simulation suites verify this identity directly.)
inline double coupling_from_xi(double xi) {
    if (!(xi >= 2.0)) throw input_error("coupling_from_xi: xi must be at least 2");
    return 1.0 / (9.0 * xi);
}

inline double xi_coupling_inverse(double lambda) {
    if (!(lambda > 0.0)) throw input_error("xi_coupling_inverse: lambda must be positive");
    return 1.0 / (9.0 * lambda);
}

struct XiResult {
    double xi = 0.0;
    double lambda = 0.0;  // after clamping to [lambda_max/7, 2*lambda_max/3]
};

// Maps a raw covariance estimate to the usable coupling window and the
// implied perturbation width. Estimates beyond the Cauchy-Schwarz bound by
// more than a hair are input errors.
inline XiResult xi_from_lambda(double lambda_estimate) {
    if (!std::isfinite(lambda_estimate))
        throw input_error("xi_from_lambda: estimate must be finite");
    if (lambda_estimate < -kLambdaMax - 1e-9 || lambda_estimate > kLambdaMax + 1e-9)
        throw input_error("xi_from_lambda: estimate outside [-1/12, 1/12]");
    XiResult out;
    out.lambda = std::clamp(lambda_estimate, kLambdaLo, kLambdaHi);
    out.xi = out.lambda == kLambdaHi ? 2.0 : xi_coupling_inverse(out.lambda);
    return out;
}

inline ModelBParams make_model_b_params(double lbar, bool collateralized,
                                        double lambda_estimate) {
    ModelBParams params;
    params.lbar = lbar;
    params.collateralized = collateralized;
    std::tie(params.shape, params.delta) = shape_params(lbar, collateralized);
    const XiResult xr = xi_from_lambda(lambda_estimate);
    params.lambda = xr.lambda;
    params.xi = xr.xi;
    return params;
}

// One severity record of an observed default, used for lambda estimation.
struct DefaultRecord {
    double g = 0.0;    // standardized return at default
    double pd = 0.0;   // default probability in force at the time
    double lgd = 0.0;  // realized severity
    CellIndex cell;
};

struct LambdaEstimates {
    std::map<CellIndex, double> lambda;  // raw estimates, clamping happens later
    double global_lambda = 0.0;
    std::vector<std::string> warnings;
};

// Per-cell covariance between the default-severity percentile U and the
// severity percentile W. Cells with too few records fall back to the pooled
// estimate across every record.
inline LambdaEstimates estimate_lambda(const std::vector<DefaultRecord>& records,
                                       const std::map<CellIndex, ModelBParams>& params_by_cell,
                                       std::size_t min_records = 10) {
    if (records.size() < 2) throw input_error("estimate_lambda: need at least 2 records");
    std::map<CellIndex, std::pair<std::vector<double>, std::vector<double>>> per_cell;
    std::vector<double> all_u, all_w;
    for (const auto& rec : records) {
        const auto it = params_by_cell.find(rec.cell);
        if (it == params_by_cell.end())
            throw input_error("estimate_lambda: no marginal parameters for cell " +
                              to_string(rec.cell));
        const double u = truncated_gaussian_cdf(rec.g, rec.pd);
        const double w = lgd_marginal_cdf(rec.lgd, it->second);
        per_cell[rec.cell].first.push_back(u);
        per_cell[rec.cell].second.push_back(w);
        all_u.push_back(u);
        all_w.push_back(w);
    }
    LambdaEstimates out;
    out.global_lambda = sample_cov(all_u, all_w);
    for (const auto& [cell, uw] : per_cell) {
        if (uw.first.size() >= min_records) {
            out.lambda[cell] = sample_cov(uw.first, uw.second);
        } else {
            out.lambda[cell] = out.global_lambda;
            out.warnings.push_back("cell " + to_string(cell) + ": only " +
                                   std::to_string(uw.first.size()) +
                                   " default records, using the pooled estimate");
        }
    }
    return out;
}

// Severity draw for a defaulted firm: percentile of the conditional return,
// perturbed by an independent uniform, mapped through F_H and back through
// the marginal inverse. The marginal is exact because F_H(H) is uniform.
inline double sample_lgd_b(double g, double p, const ModelBParams& params, RngStream& rng) {
    if (!(p > 0.0 && p < 1.0)) throw input_error("sample_lgd_b: p must lie in (0,1)");
    const double u = std_normal_cdf(g) / p;
    if (!(u < 1.0))
        throw input_error("sample_lgd_b: called with a return above the default barrier");
    const double v = rng.next_uniform();
    const double h = u * (1.0 + params.xi * (v - 0.5));
    return lgd_marginal_inverse(f_h(h, params.xi), params);
}

}  // namespace crisk
