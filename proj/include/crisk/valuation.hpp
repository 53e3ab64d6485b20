#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crisk/csv.hpp"
#include "crisk/errors.hpp"
#include "crisk/portfolio.hpp"

namespace crisk {

struct Cashflow {
    double time = 0.0;
    double amount = 0.0;  // expected amount under the forward measure, an input
};

struct CashflowStream {
    std::vector<Cashflow> flows;  // times strictly increasing

    void validate() const {
        for (std::size_t i = 0; i < flows.size(); ++i) {
            if (flows[i].time < 0.0)
                throw input_error("cashflow stream: negative tenor");
            if (i > 0 && flows[i].time <= flows[i - 1].time)
                throw input_error("cashflow stream: tenors must be strictly increasing");
        }
    }
};

// Discount factors per tenor for one label (a rating class or "Gov").
struct DiscountCurve {
    std::string label;
    std::vector<std::pair<double, double>> factors;  // (tenor, discount), sorted

    double at(double tenor) const {
        for (const auto& [t, d] : factors)
            if (std::fabs(t - tenor) < 1e-9) return d;
        throw input_error("curve '" + label + "': no discount factor for tenor " +
                          format_double(tenor));
    }

    void add(double tenor, double discount) {
        factors.emplace_back(tenor, discount);
        std::sort(factors.begin(), factors.end());
    }
};

using CurveSet = std::map<std::string, DiscountCurve>;

// Curves CSV: label,tenor,discount_factor. Factors must lie in (0,1];
// an increasing pattern is legal but surprising, so it is only warned about.
inline CurveSet load_curves(const CsvTable& table, std::vector<std::string>* warnings = nullptr) {
    const int c_label = table.require_column("label");
    const int c_tenor = table.require_column("tenor");
    const int c_df = table.require_column("discount_factor");
    CurveSet curves;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = table.row_label(r);
        const std::string label = table.rows[r][c_label];
        const double tenor = parse_double(table.rows[r][c_tenor], where);
        const double df = parse_double(table.rows[r][c_df], where);
        if (!(df > 0.0 && df <= 1.0))
            throw input_error(where + ": discount factor must lie in (0,1]");
        if (tenor < 0.0) throw input_error(where + ": negative tenor");
        if (tenor == 0.0 && df != 1.0)
            throw input_error(where + ": discount factor at tenor 0 must be 1");
        auto& curve = curves[label];
        curve.label = label;
        curve.add(tenor, df);
    }
    for (auto& [label, curve] : curves) {
        for (std::size_t i = 1; i < curve.factors.size(); ++i) {
            if (curve.factors[i].second > curve.factors[i - 1].second + 1e-12 && warnings)
                warnings->push_back("curve '" + label + "': discount factors increase at tenor " +
                                    format_double(curve.factors[i].first));
        }
    }
    return curves;
}

inline double present_value(const CashflowStream& stream, const DiscountCurve& curve) {
    double pv = 0.0;
    for (const auto& cf : stream.flows) pv += curve.at(cf.time) * cf.amount;
    return pv;
}

// Exposure at market & credit risk: the present value of the full expected
// cashflow stream under the instrument's rating curve. May be negative for
// net-payer streams; that sign is kept.
inline double exposure(const CashflowStream& stream, const DiscountCurve& rating_curve) {
    return present_value(stream, rating_curve);
}

// 1 - PV(recovery; government curve) / PV(stream; rating curve).
inline double lgd_ratio(const CashflowStream& stream, const CashflowStream& recovery,
                        const DiscountCurve& rating_curve, const DiscountCurve& gov_curve) {
    const double pv = present_value(stream, rating_curve);
    if (pv == 0.0) throw input_error("lgd_ratio: exposure present value is zero");
    return 1.0 - present_value(recovery, gov_curve) / pv;
}

inline double potential_loss(double lgd, double exposure_value) {
    if (!(lgd >= 0.0 && lgd <= 1.0)) throw input_error("potential_loss: lgd must lie in [0,1]");
    return lgd * exposure_value;
}

inline double portfolio_value(std::span<const int> indicators, std::span<const double> lgds,
                              std::span<const double> exposures) {
    if (indicators.size() != lgds.size() || lgds.size() != exposures.size())
        throw input_error("portfolio_value: input lengths differ");
    double v = 0.0;
    for (std::size_t j = 0; j < indicators.size(); ++j)
        v += (1.0 - indicators[j] * lgds[j]) * exposures[j];
    return v;
}

inline double credit_loss(std::span<const int> indicators, std::span<const double> lgds,
                          std::span<const double> exposures) {
    if (indicators.size() != lgds.size() || lgds.size() != exposures.size())
        throw input_error("credit_loss: input lengths differ");
    double l = 0.0;
    for (std::size_t j = 0; j < indicators.size(); ++j)
        l += indicators[j] * lgds[j] * exposures[j];
    return l;
}

// Optional per-instrument cashflows: id,time,amount,recovery_flag.
struct InstrumentCashflows {
    CashflowStream contractual;
    CashflowStream recovery;
};

inline std::map<std::string, InstrumentCashflows> load_cashflows(const CsvTable& table) {
    const int c_id = table.require_column("id");
    const int c_time = table.require_column("time");
    const int c_amount = table.require_column("amount");
    const int c_rec = table.require_column("recovery_flag");
    std::map<std::string, InstrumentCashflows> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string where = table.row_label(r);
        const std::string id = table.rows[r][c_id];
        const double time = parse_double(table.rows[r][c_time], where);
        const double amount = parse_double(table.rows[r][c_amount], where);
        const bool recovery = parse_bool(table.rows[r][c_rec], where);
        auto& streams = out[id];
        (recovery ? streams.recovery : streams.contractual).flows.push_back({time, amount});
    }
    for (auto& [id, streams] : out) {
        auto sort_flows = [](CashflowStream& s) {
            std::sort(s.flows.begin(), s.flows.end(),
                      [](const Cashflow& a, const Cashflow& b) { return a.time < b.time; });
            s.validate();
        };
        sort_flows(streams.contractual);
        sort_flows(streams.recovery);
    }
    return out;
}

// Fills exposures left blank in the portfolio table from cashflow PVs under
// each instrument's rating curve. Cashflow-derived exposures may be negative.
inline void resolve_exposures(Portfolio& portfolio,
                              const std::map<std::string, InstrumentCashflows>& cashflows,
                              const CurveSet& curves) {
    for (auto& inst : portfolio.instruments) {
        if (inst.exposure_resolved()) continue;
        const auto it = cashflows.find(inst.id);
        if (it == cashflows.end())
            throw input_error("instrument '" + inst.id +
                              "': exposure blank and no cashflows supplied");
        const auto curve = curves.find(std::to_string(inst.rating));
        if (curve == curves.end())
            throw input_error("instrument '" + inst.id + "': no curve for rating " +
                              std::to_string(inst.rating));
        inst.exposure = exposure(it->second.contractual, curve->second);
    }
}

}  // namespace crisk
