#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "crisk/beta_dist.hpp"
#include "crisk/errors.hpp"
#include "crisk/matrix.hpp"
#include "crisk/portfolio.hpp"

namespace crisk {

// Loss-severity observations grouped per industry-region cell and time bucket.
struct LgdHistory {
    std::vector<double> times;
    std::map<CellIndex, std::vector<std::vector<double>>> observations;  // [cell][time]
};

struct ModelACalibration {
    std::vector<CellIndex> cells;
    std::map<CellIndex, std::size_t> cell_pos;
    std::vector<double> times;
    std::map<CellIndex, std::vector<double>> mu_series;  // NaN marks a skipped bucket
    std::map<CellIndex, std::vector<double>> z_series;   // log of mu_series
    std::map<CellIndex, double> m;                       // per-cell mean severity
    Matrix theta;  // cov(Z, Z) over `cells`
    Matrix psi;    // psi(i,j) = cov(Z_i, beta_j) over `cells`
    std::vector<std::string> warnings;

    bool has_covariances() const { return theta.rows() == cells.size() && !cells.empty(); }
};

inline double z_from_mu(double mu) {
    if (!(mu > 0.0)) throw input_error("z_from_mu: mu must be positive");
    return std::log(mu);
}

// Step one and two of the calibration: per (cell, time) bucket, fit the beta
// shape by maximum likelihood with the cell mean pinned, then log-transform.
// Thin buckets are skipped with a warning and leave a NaN in the series.
inline ModelACalibration calibrate_cell_mu(const LgdHistory& history, std::size_t min_obs = 5) {
    ModelACalibration calib;
    calib.times = history.times;
    for (const auto& [cell, buckets] : history.observations) {
        if (buckets.size() != history.times.size())
            throw input_error("calibrate_cell_mu: ragged history for cell " + to_string(cell));
        std::vector<double> pooled;
        for (const auto& bucket : buckets) pooled.insert(pooled.end(), bucket.begin(), bucket.end());
        if (pooled.empty()) {
            calib.warnings.push_back("cell " + to_string(cell) + ": no observations, skipped");
            continue;
        }
        const double m = std::clamp(sample_mean(pooled), 1e-4, 1.0 - 1e-4);

        std::vector<double> mu(history.times.size(), std::nan(""));
        std::vector<double> z(history.times.size(), std::nan(""));
        std::size_t fitted = 0;
        for (std::size_t t = 0; t < buckets.size(); ++t) {
            if (buckets[t].size() < min_obs) {
                calib.warnings.push_back("cell " + to_string(cell) + " time " +
                                         format_double(history.times[t]) +
                                         ": bucket below " + std::to_string(min_obs) +
                                         " observations, skipped");
                continue;
            }
            try {
                mu[t] = fit_beta_mu_mle(buckets[t], m);
                z[t] = z_from_mu(mu[t]);
                ++fitted;
            } catch (const input_error& e) {
                calib.warnings.push_back("cell " + to_string(cell) + " time " +
                                         format_double(history.times[t]) + ": " + e.what());
            }
        }
        if (fitted == 0) {
            calib.warnings.push_back("cell " + to_string(cell) + ": no usable buckets, skipped");
            continue;
        }
        calib.cell_pos[cell] = calib.cells.size();
        calib.cells.push_back(cell);
        calib.m[cell] = m;
        calib.mu_series[cell] = std::move(mu);
        calib.z_series[cell] = std::move(z);
    }
    return calib;
}

// Step three: sample covariances of Z against itself and against the
// systematic cell series, pairwise-deleted over shared history.
inline std::pair<Matrix, Matrix> estimate_joint_covariance(
    const std::vector<CellIndex>& cells,
    const std::map<CellIndex, std::vector<double>>& z_series,
    const std::map<CellIndex, std::vector<double>>& beta_series,
    std::size_t min_overlap = 12) {
    const std::size_t n = cells.size();
    const auto overlap = [](const std::vector<double>& a, const std::vector<double>& b) {
        std::size_t k = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!std::isnan(a[i]) && !std::isnan(b[i])) ++k;
        return k;
    };
    Matrix theta(n, n), psi(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& zi = z_series.at(cells[i]);
        for (std::size_t j = i; j < n; ++j) {
            const auto& zj = z_series.at(cells[j]);
            if (overlap(zi, zj) < min_overlap)
                throw input_error("estimate_joint_covariance: insufficient overlap between Z" +
                                  to_string(cells[i]) + " and Z" + to_string(cells[j]));
            theta(i, j) = theta(j, i) = sample_cov(zi, zj);
        }
        for (std::size_t j = 0; j < n; ++j) {
            const auto& bj = beta_series.at(cells[j]);
            if (overlap(zi, bj) < min_overlap)
                throw input_error("estimate_joint_covariance: insufficient overlap between Z" +
                                  to_string(cells[i]) + " and beta" + to_string(cells[j]));
            psi(i, j) = sample_cov(zi, bj);
        }
    }
    return {theta, psi};
}

// Lower-triangular factor of the stacked [beta, Z] covariance. Built blockwise
// so that the beta block is exactly the default-model factor: any PSD repair
// is confined to the Z-conditional Schur complement, which keeps default draws
// identical across LGD modes under a shared stream.
struct JointFactor {
    Matrix l;
    std::size_t n_beta = 0;
    std::size_t n_z = 0;
};

inline JointFactor build_joint_factor(const Matrix& beta_cov, const Matrix& psi,
                                      const Matrix& theta) {
    const std::size_t nb = beta_cov.rows();
    const std::size_t nz = theta.rows();
    if (psi.rows() != nz || psi.cols() != nb)
        throw input_error("build_joint_factor: psi block dimension mismatch");
    const Matrix l11 = cholesky_psd(beta_cov);

    // L21 solves L21 * L11^T = psi, one forward substitution per row.
    Matrix l21(nz, nb);
    for (std::size_t r = 0; r < nz; ++r) {
        for (std::size_t j = 0; j < nb; ++j) {
            double s = psi(r, j);
            for (std::size_t k = 0; k < j; ++k) s -= l21(r, k) * l11(j, k);
            l21(r, j) = s / l11(j, j);
        }
    }
    Matrix schur(nz, nz);
    for (std::size_t i = 0; i < nz; ++i)
        for (std::size_t j = 0; j < nz; ++j) {
            double s = theta(i, j);
            for (std::size_t k = 0; k < nb; ++k) s -= l21(i, k) * l21(j, k);
            schur(i, j) = s;
        }
    for (std::size_t i = 0; i < nz; ++i)
        for (std::size_t j = i + 1; j < nz; ++j) {
            const double m = 0.5 * (schur(i, j) + schur(j, i));
            schur(i, j) = schur(j, i) = m;
        }
    const Matrix l22 = nz > 0 ? cholesky_psd(schur) : Matrix(0, 0);

    JointFactor joint;
    joint.n_beta = nb;
    joint.n_z = nz;
    joint.l = Matrix(nb + nz, nb + nz);
    for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t j = 0; j <= i; ++j) joint.l(i, j) = l11(i, j);
    for (std::size_t i = 0; i < nz; ++i) {
        for (std::size_t j = 0; j < nb; ++j) joint.l(nb + i, j) = l21(i, j);
        for (std::size_t j = 0; j <= i; ++j) joint.l(nb + i, nb + j) = l22(i, j);
    }
    return joint;
}

inline std::pair<std::vector<double>, std::vector<double>> simulate_z_with_beta(
    const JointFactor& joint, RngStream& rng) {
    const auto draw = sample_correlated_gaussians(joint.l, rng);
    std::vector<double> beta(draw.begin(), draw.begin() + joint.n_beta);
    std::vector<double> z(draw.begin() + joint.n_beta, draw.end());
    return {std::move(beta), std::move(z)};
}

// mu = e^z keeps the shape positive; nu then pins the mean at m for every z.
inline std::pair<double, double> lgd_params_from_z(double z, double m) {
    if (!(m > 0.0 && m < 1.0))
        throw input_error("lgd_params_from_z: expected lgd must lie in (0,1)");
    const double mu = std::exp(z);
    return {mu, mu * (1.0 - m) / m};
}

inline double sample_lgd_a(double z, double m, RngStream& rng) {
    const auto [mu, nu] = lgd_params_from_z(z, m);
    return beta_sample(mu, nu, rng);
}

}  // namespace crisk
