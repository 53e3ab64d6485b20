#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crisk/errors.hpp"
#include "crisk/matrix.hpp"
#include "crisk/normal.hpp"
#include "crisk/portfolio.hpp"

namespace crisk {

struct FirmParams {
    CellIndex cell;
    double tau = 0.0;  // firm-specific volatility, must stay positive
    std::optional<double> drift;       // next-period drift, diagnostics only
    std::optional<double> log_equity;  // current log equity, diagnostics only
};

// Cell-level factor structure of standardized equity returns: per-cell
// loading b on the region factor, per-region residual scale chi, region
// factor correlations rho, per-cell total systematic volatility sigma.
struct FactorModel {
    std::vector<CellIndex> cells;
    std::map<CellIndex, std::size_t> cell_pos;
    std::vector<double> sigma;
    std::vector<double> b;
    std::map<int, double> chi;
    std::vector<int> regions;
    std::map<int, std::size_t> region_pos;
    Matrix rho;  // unit diagonal, repaired PSD before use
    std::map<int, FirmParams> firms;

    void add_cell(const CellIndex& cell, double sigma_value, double b_value) {
        if (cell_pos.count(cell)) throw input_error("factor model: duplicate cell " + to_string(cell));
        if (!(sigma_value > 0.0))
            throw input_error("factor model: sigma must be positive for cell " + to_string(cell));
        cell_pos[cell] = cells.size();
        cells.push_back(cell);
        sigma.push_back(sigma_value);
        b.push_back(b_value);
    }

    void set_regions(std::vector<int> region_ids, Matrix rho_matrix, std::map<int, double> chi_values) {
        if (rho_matrix.rows() != region_ids.size() || rho_matrix.cols() != region_ids.size())
            throw input_error("factor model: rho dimension mismatch");
        regions = std::move(region_ids);
        region_pos.clear();
        for (std::size_t i = 0; i < regions.size(); ++i) region_pos[regions[i]] = i;
        rho = repair_psd(rho_matrix);
        chi = std::move(chi_values);
        for (const auto& [r, value] : chi)
            if (value < 0.0) throw input_error("factor model: chi must be nonnegative");
    }

    std::size_t cell_at(const CellIndex& cell) const {
        const auto it = cell_pos.find(cell);
        if (it == cell_pos.end())
            throw input_error("factor model: unknown cell " + to_string(cell));
        return it->second;
    }

    double rho_between(int region1, int region2) const {
        const auto i = region_pos.find(region1);
        const auto j = region_pos.find(region2);
        if (i == region_pos.end() || j == region_pos.end())
            throw input_error("factor model: unknown region");
        return rho(i->second, j->second);
    }

    double chi_of(int region) const {
        const auto it = chi.find(region);
        if (it == chi.end()) throw input_error("factor model: unknown region");
        return it->second;
    }

    const FirmParams& firm(int firm_id) const {
        const auto it = firms.find(firm_id);
        if (it == firms.end())
            throw input_error("factor model: unknown firm " + std::to_string(firm_id));
        return it->second;
    }

    // Registers portfolio firms that calibration did not cover; tau falls back
    // to the firm's cell sigma when no explicit value is known.
    void bind_portfolio(const Portfolio& portfolio,
                        const std::map<int, double>& firm_tau = {}) {
        for (const auto& inst : portfolio.instruments) {
            const std::size_t c = cell_at(inst.cell);
            auto it = firms.find(inst.firm);
            if (it == firms.end()) {
                FirmParams fp;
                fp.cell = inst.cell;
                const auto tau_it = firm_tau.find(inst.firm);
                fp.tau = tau_it != firm_tau.end() ? tau_it->second : sigma[c];
                if (!(fp.tau > 0.0))
                    throw input_error("factor model: tau must be positive for firm " +
                                      std::to_string(inst.firm));
                firms.emplace(inst.firm, fp);
            } else if (it->second.cell != inst.cell) {
                throw input_error("factor model: firm " + std::to_string(inst.firm) +
                                  " bound to a different cell than the portfolio says");
            }
        }
    }
};

// Covariance of the systematic components of two cells:
// rho(r1,r2) * b1 * b2 + chi(r1) * chi(r2) * [i1==i2] * [r1==r2].
inline double beta_cell_covariance(const FactorModel& model, const CellIndex& cell1,
                                   const CellIndex& cell2) {
    const std::size_t c1 = model.cell_at(cell1);
    const std::size_t c2 = model.cell_at(cell2);
    double cov = model.rho_between(cell1.region, cell2.region) * model.b[c1] * model.b[c2];
    if (cell1.industry == cell2.industry && cell1.region == cell2.region)
        cov += model.chi_of(cell1.region) * model.chi_of(cell2.region);
    return cov;
}

// Correlation of the standardized returns of two firms; 1 on the diagonal.
inline double g_correlation(const FactorModel& model, int firm1, int firm2) {
    if (firm1 == firm2) return 1.0;
    const FirmParams& f1 = model.firm(firm1);
    const FirmParams& f2 = model.firm(firm2);
    const double v1 = model.sigma[model.cell_at(f1.cell)] * model.sigma[model.cell_at(f1.cell)] +
                      f1.tau * f1.tau;
    const double v2 = model.sigma[model.cell_at(f2.cell)] * model.sigma[model.cell_at(f2.cell)] +
                      f2.tau * f2.tau;
    if (v1 == 0.0 || v2 == 0.0)
        throw input_error("g_correlation: zero variance denominator");
    return beta_cell_covariance(model, f1.cell, f2.cell) / std::sqrt(v1 * v2);
}

inline std::vector<int> portfolio_firms(const Portfolio& portfolio) {
    std::vector<int> firms;
    for (const auto& inst : portfolio.instruments) firms.push_back(inst.firm);
    std::sort(firms.begin(), firms.end());
    firms.erase(std::unique(firms.begin(), firms.end()), firms.end());
    return firms;
}

// Firm-by-firm correlation matrix of standardized returns. Callers factor it
// through cholesky_psd, which performs the PSD repair.
inline Matrix build_g_correlation_matrix(const FactorModel& model, const Portfolio& portfolio) {
    const std::vector<int> firms = portfolio_firms(portfolio);
    Matrix g(firms.size(), firms.size());
    for (std::size_t i = 0; i < firms.size(); ++i) {
        g(i, i) = 1.0;
        for (std::size_t j = i + 1; j < firms.size(); ++j)
            g(i, j) = g(j, i) = g_correlation(model, firms[i], firms[j]);
    }
    return g;
}

// Threshold c = Phi^-1(pd); pd is clamped away from 0 and 1 first.
inline double default_threshold(double pd) {
    if (!(pd > 0.0 && pd < 1.0)) throw input_error("default_threshold: pd must lie in (0,1)");
    return std_normal_quantile(std::clamp(pd, 1e-6, 1.0 - 1e-6));
}

// Diagnostic one-period conditional default probability from the barrier rule.
inline double conditional_pd(const FactorModel& model, int firm_id) {
    const FirmParams& fp = model.firm(firm_id);
    if (!fp.drift || !fp.log_equity)
        throw input_error("conditional_pd: firm " + std::to_string(firm_id) +
                          " has no drift/equity data");
    const double s = model.sigma[model.cell_at(fp.cell)];
    const double var = s * s + fp.tau * fp.tau;
    if (var == 0.0) throw input_error("conditional_pd: zero variance");
    const double g = (-*fp.log_equity - *fp.drift + 0.5 * var) / std::sqrt(var);
    return std_normal_cdf(g);
}

struct DefaultScenario {
    std::vector<double> g;
    std::vector<int> indicators;
};

inline DefaultScenario simulate_defaults(const Matrix& corr_factor,
                                         std::span<const double> thresholds, RngStream& rng) {
    if (corr_factor.rows() != thresholds.size())
        throw input_error("simulate_defaults: dimension mismatch");
    DefaultScenario scenario;
    scenario.g = sample_correlated_gaussians(corr_factor, rng);
    scenario.indicators.resize(thresholds.size());
    for (std::size_t f = 0; f < thresholds.size(); ++f)
        scenario.indicators[f] = scenario.g[f] < thresholds[f] ? 1 : 0;
    return scenario;
}

// Per-cell factor history with a shared time axis; NaN marks a missing bucket.
struct CellSeries {
    std::vector<double> times;
    std::map<CellIndex, std::vector<double>> values;
};

struct BetaDecomposition {
    std::map<CellIndex, double> b;
    std::map<int, double> chi;
    std::vector<int> regions;
    std::map<int, std::vector<double>> gamma;  // aligned with `times`, NaN when missing
    std::vector<double> times;
    Matrix rho;
};

// Splits the systematic cell series into region factors (first principal
// component per region, unit sample variance), cell loadings, and a pooled
// within-region residual scale.
inline BetaDecomposition decompose_beta_series(const CellSeries& history,
                                               std::size_t min_history = 12) {
    if (history.times.size() < min_history)
        throw input_error("decompose_beta_series: need at least " +
                          std::to_string(min_history) + " time points");
    std::map<int, std::vector<CellIndex>> by_region;
    for (const auto& [cell, series] : history.values) {
        if (series.size() != history.times.size())
            throw input_error("decompose_beta_series: ragged series for cell " + to_string(cell));
        by_region[cell.region].push_back(cell);
    }

    BetaDecomposition out;
    out.times = history.times;
    const std::size_t total_t = history.times.size();
    for (auto& [region, cells] : by_region) {
        std::sort(cells.begin(), cells.end());
        std::vector<std::size_t> valid_t;
        for (std::size_t t = 0; t < total_t; ++t) {
            bool all = true;
            for (const auto& cell : cells)
                if (std::isnan(history.values.at(cell)[t])) {
                    all = false;
                    break;
                }
            if (all) valid_t.push_back(t);
        }
        const std::size_t n = valid_t.size();
        if (n < min_history)
            throw input_error("decompose_beta_series: region " + std::to_string(region) +
                              " has fewer than " + std::to_string(min_history) +
                              " complete time points");

        const std::size_t k = cells.size();
        double data_scale = 1.0;
        std::vector<std::vector<double>> centered(k, std::vector<double>(n));
        for (std::size_t i = 0; i < k; ++i) {
            const auto& raw = history.values.at(cells[i]);
            double mean = 0.0;
            for (std::size_t t : valid_t) mean += raw[t];
            mean /= static_cast<double>(n);
            data_scale = std::max(data_scale, std::fabs(mean));
            for (std::size_t j = 0; j < n; ++j) centered[i][j] = raw[valid_t[j]] - mean;
        }

        // leading principal component of the within-region covariance
        std::vector<double> weight(k, 0.0);
        if (k == 1) {
            weight[0] = 1.0;
        } else {
            Matrix cov(k, k);
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = i; j < k; ++j) {
                    double s = 0.0;
                    for (std::size_t t = 0; t < n; ++t) s += centered[i][t] * centered[j][t];
                    cov(i, j) = cov(j, i) = s / static_cast<double>(n - 1);
                }
            const SymmetricEigen eig = symmetric_eigen(cov);
            std::size_t lead = 0;
            for (std::size_t i = 1; i < k; ++i)
                if (eig.values[i] > eig.values[lead]) lead = i;
            for (std::size_t i = 0; i < k; ++i) weight[i] = eig.vectors(i, lead);
        }

        std::vector<double> score(n, 0.0);
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t i = 0; i < k; ++i) score[t] += weight[i] * centered[i][t];
        double score_var = 0.0;
        for (double s : score) score_var += s * s;
        score_var /= static_cast<double>(n - 1);
        if (std::sqrt(score_var) <= 1e-12 * data_scale)
            throw input_error("decompose_beta_series: zero-variance factor in region " +
                              std::to_string(region));
        const double score_sd = std::sqrt(score_var);
        for (double& s : score) s /= score_sd;

        std::vector<double> loadings(k);
        double loading_sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) s += centered[i][t] * score[t];
            loadings[i] = s / static_cast<double>(n - 1);
            loading_sum += loadings[i];
        }
        if (loading_sum < 0.0) {  // orient the factor so loadings average positive
            for (double& s : score) s = -s;
            for (double& l : loadings) l = -l;
        }

        double residual_ss = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t t = 0; t < n; ++t) {
                const double e = centered[i][t] - loadings[i] * score[t];
                residual_ss += e * e;
            }
        const double residual_dof = static_cast<double>(k) * static_cast<double>(n - 2);
        const double chi = residual_dof > 0.0 ? std::sqrt(residual_ss / residual_dof) : 0.0;

        out.regions.push_back(region);
        out.chi[region] = chi;
        for (std::size_t i = 0; i < k; ++i) out.b[cells[i]] = loadings[i];
        std::vector<double> gamma_full(total_t, std::nan(""));
        for (std::size_t j = 0; j < n; ++j) gamma_full[valid_t[j]] = score[j];
        out.gamma[region] = std::move(gamma_full);
    }

    const std::size_t nr = out.regions.size();
    out.rho = Matrix(nr, nr);
    for (std::size_t i = 0; i < nr; ++i) {
        out.rho(i, i) = 1.0;
        for (std::size_t j = i + 1; j < nr; ++j) {
            const auto& gi = out.gamma[out.regions[i]];
            const auto& gj = out.gamma[out.regions[j]];
            const double cov = sample_cov(gi, gj);
            const double vi = sample_cov(gi, gi);
            const double vj = sample_cov(gj, gj);
            out.rho(i, j) = out.rho(j, i) = cov / std::sqrt(vi * vj);
        }
    }
    return out;
}

// Assembles a factor model from the decomposition, with sigma taken as the
// decomposition-implied cell volatility sqrt(b^2 + chi^2) so that standardized
// returns come out unit variance.
inline FactorModel model_from_decomposition(const BetaDecomposition& decomp) {
    FactorModel model;
    for (const auto& [cell, loading] : decomp.b) {
        const double chi = decomp.chi.at(cell.region);
        model.add_cell(cell, std::sqrt(loading * loading + chi * chi), loading);
    }
    model.set_regions(decomp.regions, decomp.rho, decomp.chi);
    return model;
}

}  // namespace crisk
