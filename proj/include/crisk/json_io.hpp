#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crisk/errors.hpp"
#include "crisk/factor_model.hpp"
#include "crisk/lgd_model_a.hpp"
#include "crisk/lgd_model_b.hpp"
#include "crisk/sim_engine.hpp"

namespace crisk {

using json = nlohmann::json;

inline std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open file: " + path);
    std::uint64_t hash = 1469598103934665603ULL;
    char buffer[65536];
    while (in.read(buffer, sizeof buffer) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buffer[i]);
            hash *= 1099511628211ULL;
        }
    }
    return hash;
}

// Content-derived provenance for calibration bundles. No wall clock: byte
// identical inputs must give byte identical bundles.
inline json provenance(const std::vector<std::string>& inputs) {
    json out = json::array();
    for (const auto& path : inputs) {
        out.push_back({{"path", std::filesystem::path(path).filename().string()},
                       {"bytes", std::filesystem::file_size(path)},
                       {"fnv1a64", fnv1a64_file(path)}});
    }
    return out;
}

inline void write_json_file(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write file: " + path);
    out << doc.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw input_error(path + ": " + e.what());
    }
}

namespace detail {
inline json nan_to_null(double v) { return std::isnan(v) ? json() : json(v); }
inline double null_to_nan(const json& v) { return v.is_null() ? std::nan("") : v.get<double>(); }

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& rows) {
    const std::size_t n = rows.size();
    const std::size_t cols = n > 0 ? rows[0].size() : 0;
    Matrix m(n, cols);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != cols) throw input_error("matrix json: ragged rows");
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}
}  // namespace detail

inline json factor_model_to_json(const FactorModel& model) {
    json cells = json::array();
    for (std::size_t i = 0; i < model.cells.size(); ++i)
        cells.push_back({{"industry", model.cells[i].industry},
                         {"region", model.cells[i].region},
                         {"sigma", model.sigma[i]},
                         {"b", model.b[i]}});
    json chi = json::array();
    for (int r : model.regions) chi.push_back({{"region", r}, {"chi", model.chi.at(r)}});
    json firms = json::array();
    for (const auto& [id, fp] : model.firms) {
        json firm = {{"firm", id},
                     {"industry", fp.cell.industry},
                     {"region", fp.cell.region},
                     {"tau", fp.tau}};
        if (fp.drift) firm["drift"] = *fp.drift;
        if (fp.log_equity) firm["log_equity"] = *fp.log_equity;
        firms.push_back(std::move(firm));
    }
    return {{"kind", "factor_model"},
            {"cells", std::move(cells)},
            {"regions", model.regions},
            {"rho", detail::matrix_to_json(model.rho)},
            {"chi", std::move(chi)},
            {"firms", std::move(firms)}};
}

inline FactorModel factor_model_from_json(const json& doc) {
    if (doc.value("kind", "") != "factor_model")
        throw input_error("factor model json: wrong or missing kind");
    FactorModel model;
    for (const auto& cell : doc.at("cells"))
        model.add_cell({cell.at("industry").get<int>(), cell.at("region").get<int>()},
                       cell.at("sigma").get<double>(), cell.at("b").get<double>());
    std::map<int, double> chi;
    for (const auto& entry : doc.at("chi"))
        chi[entry.at("region").get<int>()] = entry.at("chi").get<double>();
    model.set_regions(doc.at("regions").get<std::vector<int>>(),
                      detail::matrix_from_json(doc.at("rho")), std::move(chi));
    for (const auto& firm : doc.value("firms", json::array())) {
        FirmParams fp;
        fp.cell = {firm.at("industry").get<int>(), firm.at("region").get<int>()};
        fp.tau = firm.at("tau").get<double>();
        if (firm.contains("drift")) fp.drift = firm.at("drift").get<double>();
        if (firm.contains("log_equity")) fp.log_equity = firm.at("log_equity").get<double>();
        model.firms[firm.at("firm").get<int>()] = fp;
    }
    return model;
}

inline json model_a_to_json(const ModelACalibration& calib, bool complete) {
    json doc = {{"kind", "model_a"}, {"complete", complete}};
    doc["times"] = calib.times;
    json cells = json::array();
    for (const auto& cell : calib.cells) {
        json mu = json::array(), z = json::array();
        for (double v : calib.mu_series.at(cell)) mu.push_back(detail::nan_to_null(v));
        for (double v : calib.z_series.at(cell)) z.push_back(detail::nan_to_null(v));
        cells.push_back({{"industry", cell.industry},
                         {"region", cell.region},
                         {"m", calib.m.at(cell)},
                         {"mu_series", std::move(mu)},
                         {"z_series", std::move(z)}});
    }
    doc["cells"] = std::move(cells);
    if (calib.has_covariances()) {
        doc["theta"] = detail::matrix_to_json(calib.theta);
        doc["psi"] = detail::matrix_to_json(calib.psi);
    }
    doc["warnings"] = calib.warnings;
    return doc;
}

inline ModelACalibration model_a_from_json(const json& doc) {
    if (doc.value("kind", "") != "model_a")
        throw input_error("model A json: wrong or missing kind");
    if (!doc.value("complete", false))
        throw input_error("model A bundle is marked incomplete; recalibrate with an LGD history");
    ModelACalibration calib;
    calib.times = doc.at("times").get<std::vector<double>>();
    for (const auto& cell_doc : doc.at("cells")) {
        const CellIndex cell{cell_doc.at("industry").get<int>(),
                             cell_doc.at("region").get<int>()};
        calib.cell_pos[cell] = calib.cells.size();
        calib.cells.push_back(cell);
        calib.m[cell] = cell_doc.at("m").get<double>();
        std::vector<double> mu, z;
        for (const auto& v : cell_doc.at("mu_series")) mu.push_back(detail::null_to_nan(v));
        for (const auto& v : cell_doc.at("z_series")) z.push_back(detail::null_to_nan(v));
        calib.mu_series[cell] = std::move(mu);
        calib.z_series[cell] = std::move(z);
    }
    calib.theta = detail::matrix_from_json(doc.at("theta"));
    calib.psi = detail::matrix_from_json(doc.at("psi"));
    calib.warnings = doc.value("warnings", std::vector<std::string>{});
    return calib;
}

inline json model_b_to_json(const ModelBBundle& bundle,
                            const std::map<CellIndex, double>& raw_lambda, bool complete) {
    json doc = {{"kind", "model_b"}, {"complete", complete}};
    json cells = json::array();
    for (const auto& [cell, coupling] : bundle.cells) {
        json entry = {{"industry", cell.industry},
                      {"region", cell.region},
                      {"lambda", coupling.lambda},
                      {"xi", coupling.xi}};
        const auto raw = raw_lambda.find(cell);
        if (raw != raw_lambda.end()) entry["lambda_raw"] = raw->second;
        cells.push_back(std::move(entry));
    }
    doc["cells"] = std::move(cells);
    if (bundle.global)
        doc["global"] = {{"lambda", bundle.global->lambda}, {"xi", bundle.global->xi}};
    return doc;
}

inline ModelBBundle model_b_from_json(const json& doc) {
    if (doc.value("kind", "") != "model_b")
        throw input_error("model B json: wrong or missing kind");
    if (!doc.value("complete", false))
        throw input_error("model B bundle is marked incomplete; recalibrate with default records");
    ModelBBundle bundle;
    for (const auto& entry : doc.at("cells")) {
        XiResult coupling;
        coupling.lambda = entry.at("lambda").get<double>();
        coupling.xi = entry.at("xi").get<double>();
        bundle.cells[{entry.at("industry").get<int>(), entry.at("region").get<int>()}] = coupling;
    }
    if (doc.contains("global")) {
        XiResult coupling;
        coupling.lambda = doc.at("global").at("lambda").get<double>();
        coupling.xi = doc.at("global").at("xi").get<double>();
        bundle.global = coupling;
    }
    return bundle;
}

// Level keys rendered as percent labels: 0.9995 -> "99.95".
inline std::string level_label(double level) { return format_double(level * 100.0); }

inline json results_to_json(const LossStatistics& stats, const SimulationResult& result,
                            const std::string& currency) {
    json quantiles, etls;
    for (const auto& [level, value] : stats.quantiles) quantiles[level_label(level)] = value;
    for (const auto& [level, value] : stats.etls) etls[level_label(level)] = value;
    return {{"el", stats.el},
            {"quantiles", std::move(quantiles)},
            {"etls", std::move(etls)},
            {"scenario_count", stats.scenario_count},
            {"seed", stats.seed},
            {"mode", stats.mode},
            {"currency", currency},
            {"total_exposure", result.total_exposure},
            {"total_exposure_positive", result.total_exposure_positive},
            {"warnings", result.warnings}};
}

// Manifest: one json document naming every input and the run configuration.
struct RunManifest {
    std::string portfolio;
    std::string curves;           // optional
    std::string cashflows;        // optional
    std::string factor_history;   // required by calibrate
    std::string lgd_history;      // optional: Model A marked incomplete without it
    std::string default_records;  // optional: Model B marked incomplete without it
    std::string firm_params;      // optional: firm,tau
    std::string bundles_dir = "bundles";
    std::string out_dir = "out";
    PortfolioBounds bounds;
    SimulationConfig config;
};

inline RunManifest load_manifest(const std::string& path) {
    const json doc = read_json_file(path);
    const auto base = std::filesystem::path(path).parent_path();
    const auto resolve = [&](const std::string& rel) {
        if (rel.empty()) return std::string();
        std::filesystem::path p(rel);
        return (p.is_absolute() ? p : base / p).string();
    };

    RunManifest m;
    m.portfolio = resolve(doc.value("portfolio", ""));
    m.curves = resolve(doc.value("curves", ""));
    m.cashflows = resolve(doc.value("cashflows", ""));
    m.factor_history = resolve(doc.value("factor_history", ""));
    m.lgd_history = resolve(doc.value("lgd_history", ""));
    m.default_records = resolve(doc.value("default_records", ""));
    m.firm_params = resolve(doc.value("firm_params", ""));
    m.bundles_dir = resolve(doc.value("bundles_dir", "bundles"));
    m.out_dir = resolve(doc.value("out_dir", "out"));

    for (const std::string& input : {m.portfolio, m.curves, m.cashflows, m.factor_history,
                                     m.lgd_history, m.default_records, m.firm_params})
        if (!input.empty() && !std::filesystem::exists(input))
            throw input_error("manifest: input does not exist: " + input);

    if (doc.contains("config")) {
        const json& c = doc.at("config");
        m.config.scenarios = c.value("scenarios", m.config.scenarios);
        m.config.horizon_periods = c.value("horizon_periods", m.config.horizon_periods);
        if (c.contains("lgd_mode")) m.config.lgd_mode = parse_lgd_mode(c.at("lgd_mode"));
        m.config.master_seed = c.value("master_seed", m.config.master_seed);
        m.config.batch_size = c.value("batch_size", m.config.batch_size);
        if (c.contains("quantile_levels"))
            m.config.quantile_levels = c.at("quantile_levels").get<std::vector<double>>();
        m.config.threads = c.value("threads", m.config.threads);
        m.bounds.rating_classes = c.value("rating_classes", m.bounds.rating_classes);
        m.bounds.industries = c.value("industries", m.bounds.industries);
        m.bounds.regions = c.value("regions", m.bounds.regions);
    }
    m.config.validate();
    return m;
}

}  // namespace crisk
