#pragma once

// Synthetic portfolios and calibrations shared by the engine tests and the
// acceptance suite.

#include <cmath>
#include <string>
#include <vector>

#include "crisk/factor_model.hpp"
#include "crisk/lgd_model_a.hpp"
#include "crisk/lgd_model_b.hpp"
#include "crisk/portfolio.hpp"
#include "crisk/rng.hpp"
#include "crisk/sim_engine.hpp"

namespace fixtures {

struct SyntheticSetup {
    crisk::Portfolio portfolio;
    crisk::FactorModel model;
    crisk::ModelACalibration calib_a;
    crisk::ModelBBundle bundle_b;
};

// One firm per instrument, cells spread over a 9-industry x 5-region grid,
// severity factors moderately anticorrelated with the systematic returns.
inline SyntheticSetup make_synthetic(int n_instruments, std::uint64_t seed = 2024) {
    SyntheticSetup s;
    crisk::RngStream rng(seed, 0);

    const int industries = 9, regions = 5;
    std::vector<int> region_ids;
    for (int r = 1; r <= regions; ++r) region_ids.push_back(r);
    crisk::Matrix rho(regions, regions);
    for (int i = 0; i < regions; ++i)
        for (int j = 0; j < regions; ++j) rho(i, j) = std::pow(0.4, std::abs(i - j));
    std::map<int, double> chi;
    for (int r = 1; r <= regions; ++r) chi[r] = 0.02 + 0.015 * r;
    for (int i = 1; i <= industries; ++i)
        for (int r = 1; r <= regions; ++r) {
            const double b = 0.10 + 0.02 * ((i + r) % 8);
            const double sigma = std::sqrt(b * b + chi[r] * chi[r]);
            s.model.add_cell({i, r}, sigma, b);
        }
    s.model.set_regions(region_ids, rho, chi);

    for (int k = 0; k < n_instruments; ++k) {
        crisk::Instrument inst;
        inst.id = "inst" + std::to_string(k);
        inst.firm = k + 1;
        inst.cell = {1 + k % industries, 1 + (k / industries) % regions};
        inst.rating = 1 + k % 39;
        inst.pd = 0.001 * std::pow(100.0, rng.next_uniform());  // 0.001 .. 0.1
        inst.expected_lgd = 0.2 + 0.6 * rng.next_uniform();
        inst.collateralized = k % 2 == 0;
        inst.exposure = 10.0 + 990.0 * rng.next_uniform();
        s.portfolio.instruments.push_back(inst);
        s.portfolio.cell_registry.insert(inst.cell);
    }
    s.model.bind_portfolio(s.portfolio);

    // severity-factor covariances: theta from an AR profile over cells,
    // psi proportional to the cell covariance (negative: bad returns, high loss)
    const std::size_t n_cells = s.model.cells.size();
    std::vector<crisk::CellIndex> cells = s.model.cells;
    std::sort(cells.begin(), cells.end());
    crisk::Matrix beta_cov(n_cells, n_cells), theta(n_cells, n_cells), psi(n_cells, n_cells);
    for (std::size_t i = 0; i < n_cells; ++i)
        for (std::size_t j = 0; j < n_cells; ++j) {
            beta_cov(i, j) = crisk::beta_cell_covariance(s.model, cells[i], cells[j]);
            theta(i, j) = 0.09 * std::pow(0.3, std::abs(static_cast<int>(i) - static_cast<int>(j)));
            psi(i, j) = -0.3 * beta_cov(i, j);
        }
    s.calib_a.cells = cells;
    for (std::size_t i = 0; i < n_cells; ++i) s.calib_a.cell_pos[cells[i]] = i;
    s.calib_a.theta = theta;
    s.calib_a.psi = psi;
    for (const auto& cell : cells) s.calib_a.m[cell] = 0.45;

    for (std::size_t i = 0; i < n_cells; ++i) {
        const double lam = crisk::kLambdaLo +
                           (crisk::kLambdaHi - crisk::kLambdaLo) * (i % 5) / 4.0;
        s.bundle_b.cells[cells[i]] = crisk::xi_from_lambda(lam);
    }
    s.bundle_b.global = crisk::xi_from_lambda(1.0 / 30.0);
    return s;
}

// Minimal one-cell world for targeted engine checks.
inline SyntheticSetup make_single(double pd, double expected_lgd, double exposure,
                                  bool collateralized = false) {
    SyntheticSetup s;
    const double b = 0.2, chi = 0.1;
    s.model.add_cell({1, 1}, std::sqrt(b * b + chi * chi), b);
    s.model.set_regions({1}, crisk::Matrix::identity(1), {{1, chi}});

    crisk::Instrument inst;
    inst.id = "only";
    inst.firm = 1;
    inst.cell = {1, 1};
    inst.rating = 5;
    inst.pd = pd;
    inst.expected_lgd = expected_lgd;
    inst.collateralized = collateralized;
    inst.exposure = exposure;
    s.portfolio.instruments.push_back(inst);
    s.portfolio.cell_registry.insert(inst.cell);
    s.model.bind_portfolio(s.portfolio);

    s.calib_a.cells = {inst.cell};
    s.calib_a.cell_pos[inst.cell] = 0;
    s.calib_a.theta = crisk::Matrix(1, 1);
    s.calib_a.theta(0, 0) = 0.25;
    s.calib_a.psi = crisk::Matrix(1, 1);
    s.calib_a.psi(0, 0) = -0.02;
    s.calib_a.m[inst.cell] = expected_lgd;
    s.bundle_b.cells[inst.cell] = crisk::xi_from_lambda(1.0 / 24.0);
    return s;
}

inline double analytic_expected_loss(const crisk::Portfolio& p) {
    double el = 0.0;
    for (const auto& inst : p.instruments) {
        if (p.defaulted_rating(inst)) continue;
        el += inst.pd * inst.expected_lgd * inst.exposure;
    }
    return el;
}

}  // namespace fixtures
