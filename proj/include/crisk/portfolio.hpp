#pragma once

#include <cmath>
#include <compare>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "crisk/csv.hpp"
#include "crisk/errors.hpp"

namespace crisk {

struct CellIndex {
    int industry = 0;
    int region = 0;
    auto operator<=>(const CellIndex&) const = default;
};

inline std::string to_string(const CellIndex& c) {
    return "(" + std::to_string(c.industry) + "," + std::to_string(c.region) + ")";
}

struct Instrument {
    std::string id;
    int firm = 0;
    CellIndex cell;
    int rating = 1;
    double pd = 0.0;            // one-period default probability, in (0,1)
    double expected_lgd = 0.0;  // conditional mean loss fraction, in (0,1)
    bool collateralized = false;
    double exposure = 0.0;  // NaN until resolved from cashflows
    std::string currency = "CHF";

    bool exposure_resolved() const { return !std::isnan(exposure); }
};

struct Portfolio {
    std::vector<Instrument> instruments;
    std::set<CellIndex> cell_registry;
    std::string currency = "CHF";
    int rating_classes = 40;  // top class is the default state

    bool defaulted_rating(const Instrument& inst) const {
        return inst.rating == rating_classes;
    }
};

struct PortfolioBounds {
    int industries = 0;  // 0 = unbounded
    int regions = 0;
    int rating_classes = 40;
};

// Validates and loads the portfolio table. Every violation reports the
// offending data row.
inline Portfolio load_portfolio(const CsvTable& table, const PortfolioBounds& bounds = {}) {
    if (table.rows.empty()) throw input_error(table.source + ": empty portfolio");
    const int c_id = table.require_column("id");
    const int c_firm = table.require_column("firm");
    const int c_industry = table.require_column("industry");
    const int c_region = table.require_column("region");
    const int c_rating = table.require_column("rating");
    const int c_pd = table.require_column("pd");
    const int c_lgd = table.require_column("expected_lgd");
    const int c_coll = table.require_column("collateralized");
    const int c_exp = table.require_column("exposure");
    const int c_ccy = table.column("currency");

    Portfolio p;
    p.rating_classes = bounds.rating_classes;
    std::set<std::string> seen_ids;
    std::map<int, CellIndex> firm_cell;
    std::map<int, double> firm_pd;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::string where = table.row_label(r);
        Instrument inst;
        inst.id = row[c_id];
        if (inst.id.empty()) throw input_error(where + ": empty id");
        if (!seen_ids.insert(inst.id).second)
            throw input_error(where + ": duplicate id '" + inst.id + "'");
        inst.firm = static_cast<int>(parse_long(row[c_firm], where));
        inst.cell.industry = static_cast<int>(parse_long(row[c_industry], where));
        inst.cell.region = static_cast<int>(parse_long(row[c_region], where));
        if (inst.cell.industry < 1 || (bounds.industries > 0 && inst.cell.industry > bounds.industries))
            throw input_error(where + ": industry out of range");
        if (inst.cell.region < 1 || (bounds.regions > 0 && inst.cell.region > bounds.regions))
            throw input_error(where + ": region out of range");
        inst.rating = static_cast<int>(parse_long(row[c_rating], where));
        if (inst.rating < 1 || inst.rating > bounds.rating_classes)
            throw input_error(where + ": rating out of range 1.." +
                              std::to_string(bounds.rating_classes));
        inst.pd = parse_double(row[c_pd], where);
        if (!(inst.pd > 0.0 && inst.pd < 1.0))
            throw input_error(where + ": pd must lie strictly in (0,1)");
        inst.expected_lgd = parse_double(row[c_lgd], where);
        if (!(inst.expected_lgd > 0.0 && inst.expected_lgd < 1.0))
            throw input_error(where + ": expected_lgd must lie strictly in (0,1)");
        inst.collateralized = parse_bool(row[c_coll], where);
        if (row[c_exp].empty()) {
            inst.exposure = std::nan("");  // resolved later from cashflows
        } else {
            inst.exposure = parse_double(row[c_exp], where);
            if (!std::isfinite(inst.exposure) || inst.exposure < 0.0)
                throw input_error(where + ": exposure must be finite and nonnegative");
        }
        if (c_ccy >= 0 && !row[c_ccy].empty()) inst.currency = row[c_ccy];

        // defaults are simulated per firm, so cell and pd must agree per firm
        auto [it, fresh] = firm_cell.emplace(inst.firm, inst.cell);
        if (!fresh && it->second != inst.cell)
            throw input_error(where + ": firm " + std::to_string(inst.firm) +
                              " appears in more than one industry-region cell");
        auto [pit, pd_fresh] = firm_pd.emplace(inst.firm, inst.pd);
        if (!pd_fresh && pit->second != inst.pd)
            throw input_error(where + ": firm " + std::to_string(inst.firm) +
                              " carries inconsistent default probabilities");

        p.cell_registry.insert(inst.cell);
        p.instruments.push_back(std::move(inst));
    }
    p.currency = p.instruments.front().currency;
    for (std::size_t r = 0; r < p.instruments.size(); ++r)
        if (p.instruments[r].currency != p.currency)
            throw input_error(table.row_label(r) +
                              ": multi-currency portfolios are not supported");
    return p;
}

inline Portfolio load_portfolio_file(const std::string& path, const PortfolioBounds& bounds = {}) {
    return load_portfolio(read_csv(path), bounds);
}

inline std::map<CellIndex, std::vector<std::string>> group_by_cell(const Portfolio& p) {
    std::map<CellIndex, std::vector<std::string>> groups;
    for (const auto& inst : p.instruments) groups[inst.cell].push_back(inst.id);
    return groups;
}

inline void save_portfolio(const std::string& path, const Portfolio& p) {
    std::vector<std::vector<std::string>> rows;
    rows.reserve(p.instruments.size());
    for (const auto& inst : p.instruments) {
        rows.push_back({inst.id, std::to_string(inst.firm), std::to_string(inst.cell.industry),
                        std::to_string(inst.cell.region), std::to_string(inst.rating),
                        format_double(inst.pd), format_double(inst.expected_lgd),
                        inst.collateralized ? "1" : "0",
                        inst.exposure_resolved() ? format_double(inst.exposure) : "",
                        inst.currency});
    }
    write_csv(path, {"id", "firm", "industry", "region", "rating", "pd", "expected_lgd",
                     "collateralized", "exposure", "currency"},
              rows);
}

}  // namespace crisk
