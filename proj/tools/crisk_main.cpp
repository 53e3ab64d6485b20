// crisk: batch front end for portfolio credit-loss simulation.
// Subcommands: calibrate, simulate, compare, histogram.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crisk/csv.hpp"
#include "crisk/errors.hpp"
#include "crisk/factor_model.hpp"
#include "crisk/json_io.hpp"
#include "crisk/lgd_model_a.hpp"
#include "crisk/lgd_model_b.hpp"
#include "crisk/portfolio.hpp"
#include "crisk/sim_engine.hpp"
#include "crisk/valuation.hpp"

namespace {

namespace fs = std::filesystem;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<long> scenarios;
    std::optional<std::string> mode;
    std::optional<int> threads;
    std::optional<std::string> out;
    std::vector<double> levels;
    std::string losses_out;
};

crisk::RunManifest manifest_with_overrides(const std::string& path, const Overrides& ov) {
    crisk::RunManifest m = crisk::load_manifest(path);
    if (ov.seed) m.config.master_seed = *ov.seed;
    if (ov.scenarios) m.config.scenarios = *ov.scenarios;
    if (ov.mode) m.config.lgd_mode = crisk::parse_lgd_mode(*ov.mode);
    if (ov.threads) m.config.threads = *ov.threads;
    if (ov.out) m.out_dir = *ov.out;
    if (!ov.levels.empty()) m.config.quantile_levels = ov.levels;
    m.config.validate();
    return m;
}

crisk::CellSeries load_factor_history(const std::string& path) {
    const crisk::CsvTable table = crisk::read_csv(path);
    const int c_time = table.require_column("time");
    const int c_industry = table.require_column("industry");
    const int c_region = table.require_column("region");
    const int c_beta = table.require_column("beta");

    std::map<double, std::size_t> time_pos;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        time_pos.emplace(crisk::parse_double(table.rows[r][c_time], table.row_label(r)), 0);
    crisk::CellSeries series;
    for (auto& [t, pos] : time_pos) {
        pos = series.times.size();
        series.times.push_back(t);
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = table.row_label(r);
        const crisk::CellIndex cell{
            static_cast<int>(crisk::parse_long(table.rows[r][c_industry], where)),
            static_cast<int>(crisk::parse_long(table.rows[r][c_region], where))};
        auto& values = series.values[cell];
        if (values.empty()) values.assign(series.times.size(), std::nan(""));
        const std::size_t pos = time_pos.at(crisk::parse_double(table.rows[r][c_time], where));
        if (!std::isnan(values[pos]))
            throw crisk::input_error(where + ": duplicate factor observation for cell " +
                                     crisk::to_string(cell));
        values[pos] = crisk::parse_double(table.rows[r][c_beta], where);
    }
    return series;
}

crisk::LgdHistory load_lgd_history(const std::string& path) {
    const crisk::CsvTable table = crisk::read_csv(path);
    const int c_time = table.require_column("time");
    const int c_industry = table.require_column("industry");
    const int c_region = table.require_column("region");
    const int c_lgd = table.require_column("lgd");

    std::map<double, std::size_t> time_pos;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
        time_pos.emplace(crisk::parse_double(table.rows[r][c_time], table.row_label(r)), 0);
    crisk::LgdHistory history;
    for (auto& [t, pos] : time_pos) {
        pos = history.times.size();
        history.times.push_back(t);
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = table.row_label(r);
        const crisk::CellIndex cell{
            static_cast<int>(crisk::parse_long(table.rows[r][c_industry], where)),
            static_cast<int>(crisk::parse_long(table.rows[r][c_region], where))};
        const double lgd = crisk::parse_double(table.rows[r][c_lgd], where);
        if (!(lgd > 0.0 && lgd < 1.0))
            throw crisk::input_error(where + ": lgd must lie strictly in (0,1)");
        auto& buckets = history.observations[cell];
        if (buckets.empty()) buckets.resize(history.times.size());
        buckets[time_pos.at(crisk::parse_double(table.rows[r][c_time], where))].push_back(lgd);
    }
    return history;
}

std::vector<crisk::DefaultRecord> load_default_records(const std::string& path) {
    const crisk::CsvTable table = crisk::read_csv(path);
    const int c_industry = table.require_column("industry");
    const int c_region = table.require_column("region");
    const int c_g = table.require_column("g");
    const int c_pd = table.require_column("pd");
    const int c_lgd = table.require_column("lgd");
    std::vector<crisk::DefaultRecord> records;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = table.row_label(r);
        crisk::DefaultRecord rec;
        rec.cell = {static_cast<int>(crisk::parse_long(table.rows[r][c_industry], where)),
                    static_cast<int>(crisk::parse_long(table.rows[r][c_region], where))};
        rec.g = crisk::parse_double(table.rows[r][c_g], where);
        rec.pd = crisk::parse_double(table.rows[r][c_pd], where);
        rec.lgd = crisk::parse_double(table.rows[r][c_lgd], where);
        if (!(rec.pd > 0.0 && rec.pd < 1.0))
            throw crisk::input_error(where + ": pd must lie strictly in (0,1)");
        records.push_back(rec);
    }
    return records;
}

std::map<int, double> load_firm_params(const std::string& path) {
    const crisk::CsvTable table = crisk::read_csv(path);
    const int c_firm = table.require_column("firm");
    const int c_tau = table.require_column("tau");
    std::map<int, double> taus;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = table.row_label(r);
        const int firm = static_cast<int>(crisk::parse_long(table.rows[r][c_firm], where));
        const double tau = crisk::parse_double(table.rows[r][c_tau], where);
        if (!(tau > 0.0)) throw crisk::input_error(where + ": tau must be positive");
        if (!taus.emplace(firm, tau).second)
            throw crisk::input_error(where + ": duplicate firm " + std::to_string(firm));
    }
    return taus;
}

crisk::Portfolio load_portfolio_with_exposures(const crisk::RunManifest& m,
                                               std::vector<std::string>* warnings) {
    if (m.portfolio.empty()) throw crisk::input_error("manifest: no portfolio file");
    crisk::Portfolio portfolio = crisk::load_portfolio_file(m.portfolio, m.bounds);
    if (!m.cashflows.empty()) {
        if (m.curves.empty())
            throw crisk::input_error("manifest: cashflows given without discount curves");
        const auto cashflows = crisk::load_cashflows(crisk::read_csv(m.cashflows));
        const auto curves = crisk::load_curves(crisk::read_csv(m.curves), warnings);
        crisk::resolve_exposures(portfolio, cashflows, curves);
    }
    return portfolio;
}

void write_breakdowns(const std::string& dir, const crisk::Portfolio& portfolio) {
    const std::pair<crisk::BreakdownDimension, std::string> dims[] = {
        {crisk::BreakdownDimension::rating, "rating"},
        {crisk::BreakdownDimension::industry, "industry"},
        {crisk::BreakdownDimension::region, "region"},
    };
    for (const auto& [dim, name] : dims) {
        const auto buckets = crisk::potential_loss_breakdown(portfolio, dim);
        std::vector<std::vector<std::string>> rows;
        for (const auto& [key, value] : buckets)
            rows.push_back({std::to_string(key), crisk::format_double(value)});
        crisk::write_csv((fs::path(dir) / ("ptl_by_" + name + ".csv")).string(),
                         {name, "expected_ptl"}, rows);
    }
}

void write_losses_le(const std::string& path, const std::vector<double>& losses) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw crisk::input_error("cannot write file: " + path);
    for (double v : losses) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

struct Bundles {
    crisk::FactorModel model;
    std::optional<crisk::ModelACalibration> model_a;
    std::optional<crisk::ModelBBundle> model_b;
};

Bundles load_bundles(const crisk::RunManifest& m, crisk::LgdMode mode, bool need_all) {
    Bundles bundles;
    const fs::path dir(m.bundles_dir);
    bundles.model =
        crisk::factor_model_from_json(crisk::read_json_file((dir / "factor_model.json").string()));
    if (need_all || mode == crisk::LgdMode::model_a)
        bundles.model_a =
            crisk::model_a_from_json(crisk::read_json_file((dir / "model_a.json").string()));
    if (need_all || mode == crisk::LgdMode::model_b)
        bundles.model_b =
            crisk::model_b_from_json(crisk::read_json_file((dir / "model_b.json").string()));
    return bundles;
}

void print_statistics(const crisk::LossStatistics& stats, const std::string& currency) {
    std::printf("mode=%s scenarios=%ld seed=%llu currency=%s\n", stats.mode.c_str(),
                stats.scenario_count, static_cast<unsigned long long>(stats.seed),
                currency.c_str());
    std::printf("  EL = %.6g\n", stats.el);
    for (const auto& [level, value] : stats.quantiles)
        std::printf("  Q_%s = %.6g\n", crisk::level_label(level).c_str(), value);
    for (const auto& [level, value] : stats.etls)
        std::printf("  ETL_%s = %.6g\n", crisk::level_label(level).c_str(), value);
}

int cmd_calibrate(const std::string& manifest_path, const Overrides& ov) {
    crisk::RunManifest m = crisk::load_manifest(manifest_path);
    if (ov.out) m.bundles_dir = *ov.out;
    if (m.factor_history.empty())
        throw crisk::input_error("calibrate: manifest has no factor_history");
    fs::create_directories(m.bundles_dir);

    std::vector<std::string> warnings;
    crisk::Portfolio portfolio = load_portfolio_with_exposures(m, &warnings);

    const crisk::CellSeries history = load_factor_history(m.factor_history);
    const crisk::BetaDecomposition decomp = crisk::decompose_beta_series(history);
    crisk::FactorModel model = crisk::model_from_decomposition(decomp);
    std::map<int, double> firm_taus;
    if (!m.firm_params.empty()) firm_taus = load_firm_params(m.firm_params);
    model.bind_portfolio(portfolio, firm_taus);

    crisk::json factor_doc = crisk::factor_model_to_json(model);
    factor_doc["inputs"] = crisk::provenance(
        m.firm_params.empty()
            ? std::vector<std::string>{m.portfolio, m.factor_history}
            : std::vector<std::string>{m.portfolio, m.factor_history, m.firm_params});
    crisk::write_json_file((fs::path(m.bundles_dir) / "factor_model.json").string(), factor_doc);

    if (!m.lgd_history.empty()) {
        crisk::ModelACalibration calib = crisk::calibrate_cell_mu(load_lgd_history(m.lgd_history));
        // align the systematic series onto the severity time axis per cell
        std::map<double, std::size_t> factor_time;
        for (std::size_t i = 0; i < history.times.size(); ++i) factor_time[history.times[i]] = i;
        std::map<crisk::CellIndex, std::vector<double>> beta_on_lgd_times;
        for (const auto& cell : calib.cells) {
            std::vector<double> aligned(calib.times.size(), std::nan(""));
            const auto series = history.values.find(cell);
            if (series != history.values.end())
                for (std::size_t t = 0; t < calib.times.size(); ++t) {
                    const auto pos = factor_time.find(calib.times[t]);
                    if (pos != factor_time.end()) aligned[t] = series->second[pos->second];
                }
            beta_on_lgd_times[cell] = std::move(aligned);
        }
        std::tie(calib.theta, calib.psi) =
            crisk::estimate_joint_covariance(calib.cells, calib.z_series, beta_on_lgd_times);
        crisk::json doc = crisk::model_a_to_json(calib, true);
        doc["inputs"] = crisk::provenance({m.lgd_history, m.factor_history});
        crisk::write_json_file((fs::path(m.bundles_dir) / "model_a.json").string(), doc);
        warnings.insert(warnings.end(), calib.warnings.begin(), calib.warnings.end());
    } else {
        const crisk::json doc = {{"kind", "model_a"},
                                 {"complete", false},
                                 {"reason", "no lgd_history in the manifest"}};
        crisk::write_json_file((fs::path(m.bundles_dir) / "model_a.json").string(), doc);
        warnings.push_back("model A bundle marked incomplete: no lgd_history");
    }

    if (!m.default_records.empty()) {
        const auto records = load_default_records(m.default_records);
        std::map<crisk::CellIndex, std::vector<double>> lgds_by_cell;
        for (const auto& rec : records) lgds_by_cell[rec.cell].push_back(rec.lgd);
        std::map<crisk::CellIndex, crisk::ModelBParams> params_by_cell;
        for (const auto& [cell, lgds] : lgds_by_cell) {
            const double lbar = std::clamp(crisk::sample_mean(lgds), 1e-4, 1.0 - 1e-4);
            crisk::ModelBParams params;
            params.lbar = lbar;
            params.collateralized = false;
            std::tie(params.shape, params.delta) = crisk::shape_params(lbar, false);
            params_by_cell[cell] = params;
        }
        const crisk::LambdaEstimates estimates = crisk::estimate_lambda(records, params_by_cell);
        crisk::ModelBBundle bundle;
        for (const auto& [cell, raw] : estimates.lambda)
            bundle.cells[cell] = crisk::xi_from_lambda(raw);
        bundle.global = crisk::xi_from_lambda(estimates.global_lambda);
        crisk::json doc = crisk::model_b_to_json(bundle, estimates.lambda, true);
        doc["inputs"] = crisk::provenance({m.default_records});
        crisk::write_json_file((fs::path(m.bundles_dir) / "model_b.json").string(), doc);
        warnings.insert(warnings.end(), estimates.warnings.begin(), estimates.warnings.end());
    } else {
        const crisk::json doc = {{"kind", "model_b"},
                                 {"complete", false},
                                 {"reason", "no default_records in the manifest"}};
        crisk::write_json_file((fs::path(m.bundles_dir) / "model_b.json").string(), doc);
        warnings.push_back("model B bundle marked incomplete: no default_records");
    }

    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("calibration bundles written to %s\n", m.bundles_dir.c_str());
    return 0;
}

int cmd_simulate(const std::string& manifest_path, const Overrides& ov) {
    const crisk::RunManifest m = manifest_with_overrides(manifest_path, ov);
    fs::create_directories(m.out_dir);
    std::vector<std::string> warnings;
    crisk::Portfolio portfolio = load_portfolio_with_exposures(m, &warnings);
    Bundles bundles = load_bundles(m, m.config.lgd_mode, false);
    bundles.model.bind_portfolio(portfolio);

    const crisk::SimulationResult result = crisk::run_simulation(
        portfolio, bundles.model, bundles.model_a ? &*bundles.model_a : nullptr,
        bundles.model_b ? &*bundles.model_b : nullptr, m.config);
    crisk::LossStatistics stats = crisk::loss_statistics(result.losses, m.config.quantile_levels);
    stats.seed = m.config.master_seed;
    stats.mode = crisk::to_string(m.config.lgd_mode);

    crisk::write_json_file((fs::path(m.out_dir) / "results.json").string(),
                           crisk::results_to_json(stats, result, portfolio.currency));
    write_breakdowns(m.out_dir, portfolio);
    if (!ov.losses_out.empty()) write_losses_le(ov.losses_out, result.losses);

    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    for (const auto& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    print_statistics(stats, portfolio.currency);
    return 0;
}

int cmd_compare(const std::string& manifest_path, const Overrides& ov) {
    const crisk::RunManifest m = manifest_with_overrides(manifest_path, ov);
    fs::create_directories(m.out_dir);
    std::vector<std::string> warnings;
    crisk::Portfolio portfolio = load_portfolio_with_exposures(m, &warnings);
    Bundles bundles = load_bundles(m, m.config.lgd_mode, true);
    bundles.model.bind_portfolio(portfolio);

    const auto rows = crisk::compare_models(portfolio, bundles.model, &*bundles.model_a,
                                            &*bundles.model_b, m.config);

    std::vector<std::string> header = {"Model", "EL"};
    for (double level : m.config.quantile_levels) header.push_back("Q_" + crisk::level_label(level));
    for (double level : m.config.quantile_levels)
        header.push_back("ETL_" + crisk::level_label(level));
    std::vector<std::vector<std::string>> lines;
    for (const auto& row : rows) {
        std::vector<std::string> line = {row.label, crisk::format_double(row.statistics.el)};
        for (double level : m.config.quantile_levels)
            line.push_back(crisk::format_double(row.statistics.quantiles.at(level)));
        for (double level : m.config.quantile_levels)
            line.push_back(crisk::format_double(row.statistics.etls.at(level)));
        lines.push_back(std::move(line));
    }
    crisk::write_csv((fs::path(m.out_dir) / "compare.csv").string(), header, lines);
    for (const auto& row : rows)
        crisk::write_json_file(
            (fs::path(m.out_dir) / ("results_" + crisk::to_string(row.mode) + ".json")).string(),
            crisk::results_to_json(row.statistics, row.result, portfolio.currency));

    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    for (const auto& row : rows) print_statistics(row.statistics, portfolio.currency);
    return 0;
}

int cmd_histogram(const std::string& manifest_path, const Overrides& ov) {
    crisk::RunManifest m = crisk::load_manifest(manifest_path);
    if (ov.out) m.out_dir = *ov.out;
    fs::create_directories(m.out_dir);
    std::vector<std::string> warnings;
    const crisk::Portfolio portfolio = load_portfolio_with_exposures(m, &warnings);
    write_breakdowns(m.out_dir, portfolio);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("expected potential-loss breakdowns written to %s\n", m.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"portfolio credit-loss simulation with correlated stochastic severities"};
    app.require_subcommand(1);

    std::string manifest_path;
    Overrides ov;

    const auto add_common = [&](CLI::App* cmd, bool run_flags) {
        cmd->add_option("--manifest", manifest_path, "run manifest (json)")->required();
        cmd->add_option("--out", ov.out, "output directory override");
        if (run_flags) {
            cmd->add_option("--seed", ov.seed, "master seed override");
            cmd->add_option("--scenarios", ov.scenarios, "scenario count override");
            cmd->add_option("--mode", ov.mode, "lgd mode override: deterministic|model_a|model_b");
            cmd->add_option("--threads", ov.threads, "worker thread count (results unchanged)");
            cmd->add_option("--levels", ov.levels, "quantile levels override")->delimiter(',');
        }
    };

    CLI::App* calibrate = app.add_subcommand("calibrate", "fit model bundles from history files");
    add_common(calibrate, false);
    CLI::App* simulate = app.add_subcommand("simulate", "run the loss simulation");
    add_common(simulate, true);
    simulate->add_option("--losses-out", ov.losses_out,
                         "dump the loss sample (little-endian doubles)");
    CLI::App* compare = app.add_subcommand("compare", "run all three severity modes");
    add_common(compare, true);
    CLI::App* histogram = app.add_subcommand("histogram", "expected potential-loss breakdowns");
    add_common(histogram, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (calibrate->parsed()) return cmd_calibrate(manifest_path, ov);
        if (simulate->parsed()) return cmd_simulate(manifest_path, ov);
        if (compare->parsed()) return cmd_compare(manifest_path, ov);
        if (histogram->parsed()) return cmd_histogram(manifest_path, ov);
    } catch (const crisk::input_error& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 2;
    } catch (const crisk::numeric_error& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
