// Generates a small synthetic input set (portfolio, factor history, severity
// history, default records, curves, manifest) with known ground truth, so the
// full calibrate/simulate/compare pipeline can run end to end out of the box.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crisk/beta_dist.hpp"
#include "crisk/csv.hpp"
#include "crisk/lgd_model_b.hpp"
#include "crisk/matrix.hpp"
#include "crisk/normal.hpp"
#include "crisk/rng.hpp"

namespace {

namespace fs = std::filesystem;
using Row = std::vector<std::string>;
const char* d(double v, std::string& buf) { return (buf = crisk::format_double(v)).c_str(); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generate a synthetic input set for the simulation pipeline"};
    std::string out_dir;
    int instruments = 48;
    int months = 48;
    int records = 400;
    std::uint64_t seed = 20240501;
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--instruments", instruments, "portfolio size");
    app.add_option("--months", months, "history length");
    app.add_option("--records", records, "number of default records");
    app.add_option("--seed", seed, "generator seed");
    CLI11_PARSE(app, argc, argv);

    fs::create_directories(out_dir);
    const auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
    std::string buf;

    const int industries = 4, regions = 3;
    crisk::RngStream rng(seed, 0);

    // region factor correlations and cell loadings
    crisk::Matrix rho(regions, regions);
    for (int i = 0; i < regions; ++i)
        for (int j = 0; j < regions; ++j) rho(i, j) = std::pow(0.5, std::abs(i - j));
    const crisk::Matrix rho_factor = crisk::cholesky_psd(rho);
    const double chi[regions] = {0.04, 0.06, 0.05};
    std::map<crisk::CellIndex, double> b, m_cell, z_base;
    for (int i = 1; i <= industries; ++i)
        for (int r = 1; r <= regions; ++r) {
            b[{i, r}] = 0.12 + 0.02 * ((i * r) % 8);
            m_cell[{i, r}] = 0.35 + 0.03 * ((i + 2 * r) % 10);
            z_base[{i, r}] = 0.2 + 0.1 * ((i + r) % 4);
        }

    // factor history and severity history from the planted structure
    std::vector<Row> factor_rows, lgd_rows;
    for (int t = 1; t <= months; ++t) {
        std::vector<double> gamma = crisk::sample_correlated_gaussians(rho_factor, rng);
        for (int i = 1; i <= industries; ++i)
            for (int r = 1; r <= regions; ++r) {
                const crisk::CellIndex cell{i, r};
                const double beta =
                    b[cell] * gamma[r - 1] + chi[r - 1] * rng.next_normal();
                factor_rows.push_back({std::to_string(t), std::to_string(i), std::to_string(r),
                                       d(beta, buf)});
                const double z = z_base[cell] - 0.4 * gamma[r - 1] + 0.2 * rng.next_normal();
                const double mu = std::exp(z);
                const double nu = mu * (1.0 - m_cell[cell]) / m_cell[cell];
                for (int k = 0; k < 8; ++k) {
                    const double lgd = crisk::beta_sample(mu, nu, rng);
                    lgd_rows.push_back({std::to_string(t), std::to_string(i), std::to_string(r),
                                        d(lgd, buf)});
                }
            }
    }
    crisk::write_csv(path("factor_history.csv"), {"time", "industry", "region", "beta"},
                     factor_rows);
    crisk::write_csv(path("lgd_history.csv"), {"time", "industry", "region", "lgd"}, lgd_rows);

    // default records with a planted severity coupling
    const double xi_true = crisk::xi_from_lambda(1.0 / 24.0).xi;
    std::vector<Row> record_rows;
    for (int k = 0; k < records; ++k) {
        const crisk::CellIndex cell{1 + k % industries, 1 + (k / industries) % regions};
        const double pd = 0.01 + 0.07 * rng.next_uniform();
        const double u = rng.next_uniform();
        const double g = crisk::std_normal_quantile(u * pd);
        const double v = rng.next_uniform();
        const double w = crisk::f_h(u * (1.0 + xi_true * (v - 0.5)), xi_true);
        crisk::ModelBParams params;
        params.lbar = m_cell[cell];
        std::tie(params.shape, params.delta) = crisk::shape_params(params.lbar, false);
        const double lgd = crisk::lgd_marginal_inverse(w, params);
        record_rows.push_back({std::to_string(1 + k % months), std::to_string(cell.industry),
                               std::to_string(cell.region), d(g, buf), d(pd, buf),
                               d(lgd, buf)});
    }
    crisk::write_csv(path("default_records.csv"), {"time", "industry", "region", "g", "pd", "lgd"},
                     record_rows);

    // portfolio: one firm per instrument; two instruments price off cashflows
    std::vector<Row> portfolio_rows, cashflow_rows, firm_rows;
    for (int k = 0; k < instruments; ++k) {
        const crisk::CellIndex cell{1 + k % industries, 1 + (k / industries) % regions};
        const int firm = k + 1;
        const int rating = 1 + (k * 7) % 39;
        const double pd = 0.005 + 0.075 * rng.next_uniform();
        const double lgd = 0.25 + 0.5 * rng.next_uniform();
        const bool collateral = k % 2 == 0;
        const bool from_cashflows = k < 2;
        std::string exposure;
        if (from_cashflows) {
            for (int s = 1; s <= 3; ++s)
                cashflow_rows.push_back({"inst" + std::to_string(k), std::to_string(s),
                                         d(40.0 + 10.0 * s, buf), "0"});
            cashflow_rows.push_back({"inst" + std::to_string(k), "1", d(25.0, buf), "1"});
        } else {
            exposure = crisk::format_double(50.0 + 450.0 * rng.next_uniform());
        }
        portfolio_rows.push_back({"inst" + std::to_string(k), std::to_string(firm),
                                  std::to_string(cell.industry), std::to_string(cell.region),
                                  std::to_string(rating), d(pd, buf), d(lgd, buf),
                                  collateral ? "1" : "0", exposure});
        firm_rows.push_back({std::to_string(firm), d(0.1 + 0.2 * rng.next_uniform(), buf)});
    }
    crisk::write_csv(path("portfolio.csv"),
                     {"id", "firm", "industry", "region", "rating", "pd", "expected_lgd",
                      "collateralized", "exposure"},
                     portfolio_rows);
    crisk::write_csv(path("cashflows.csv"), {"id", "time", "amount", "recovery_flag"},
                     cashflow_rows);
    crisk::write_csv(path("firm_params.csv"), {"firm", "tau"}, firm_rows);

    // discount curves for every rating in use plus the government curve
    std::vector<Row> curve_rows;
    for (int rating = 1; rating <= 39; ++rating) {
        const double spread = 0.01 + 0.002 * rating;
        for (int tenor = 1; tenor <= 3; ++tenor)
            curve_rows.push_back({std::to_string(rating), std::to_string(tenor),
                                  d(std::exp(-(0.02 + spread) * tenor), buf)});
    }
    for (int tenor = 1; tenor <= 3; ++tenor)
        curve_rows.push_back({"Gov", std::to_string(tenor), d(std::exp(-0.02 * tenor), buf)});
    crisk::write_csv(path("curves.csv"), {"label", "tenor", "discount_factor"}, curve_rows);

    const std::string manifest = std::string("{\n") +
        "  \"portfolio\": \"portfolio.csv\",\n"
        "  \"curves\": \"curves.csv\",\n"
        "  \"cashflows\": \"cashflows.csv\",\n"
        "  \"factor_history\": \"factor_history.csv\",\n"
        "  \"lgd_history\": \"lgd_history.csv\",\n"
        "  \"default_records\": \"default_records.csv\",\n"
        "  \"firm_params\": \"firm_params.csv\",\n"
        "  \"bundles_dir\": \"bundles\",\n"
        "  \"out_dir\": \"out\",\n"
        "  \"config\": {\n"
        "    \"scenarios\": 20000,\n"
        "    \"horizon_periods\": 1,\n"
        "    \"lgd_mode\": \"deterministic\",\n"
        "    \"master_seed\": 42,\n"
        "    \"batch_size\": 4096,\n"
        "    \"quantile_levels\": [0.90, 0.95, 0.99, 0.9995, 0.9998],\n"
        "    \"threads\": 1,\n"
        "    \"rating_classes\": 40,\n"
        "    \"industries\": " + std::to_string(industries) + ",\n"
        "    \"regions\": " + std::to_string(regions) + "\n"
        "  }\n"
        "}\n";
    std::ofstream manifest_out(path("manifest.json"));
    manifest_out << manifest;

    std::printf("sample data written to %s\n", out_dir.c_str());
    return 0;
}
