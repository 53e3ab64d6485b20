#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "crisk/sim_engine.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using crisk::LgdMode;
using crisk::loss_statistics;
using crisk::LossStatistics;
using crisk::run_simulation;
using crisk::SimulationConfig;
using fixtures::make_single;
using fixtures::make_synthetic;

TEST_CASE("certain default with deterministic severity") {
    auto s = make_single(1.0 - 1e-15, 0.6, 100.0);
    SimulationConfig config;
    config.scenarios = 1000;
    config.master_seed = 7;
    const auto result = run_simulation(s.portfolio, s.model, nullptr, nullptr, config);
    for (double loss : result.losses) CHECK(loss == doctest::Approx(60.0));
    const double el = oracles::mean(result.losses);
    CHECK(el == doctest::Approx(60.0).epsilon(1e-6));
}

TEST_CASE("vanishing pd sends the expected loss to zero") {
    auto s = make_single(1e-12, 0.6, 100.0);  // clamps to 1e-6
    SimulationConfig config;
    config.scenarios = 10000;
    config.master_seed = 8;
    const auto result = run_simulation(s.portfolio, s.model, nullptr, nullptr, config);
    CHECK(oracles::mean(result.losses) <= 60.0 * 2.0 / 10000.0);
}

TEST_CASE("expected loss matches the analytic value in every mode") {
    auto s = make_synthetic(200, 11);
    const double analytic = fixtures::analytic_expected_loss(s.portfolio);
    for (LgdMode mode : {LgdMode::deterministic, LgdMode::model_a, LgdMode::model_b}) {
        SimulationConfig config;
        config.scenarios = 20000;
        config.master_seed = 9;
        config.lgd_mode = mode;
        const auto result = run_simulation(s.portfolio, s.model, &s.calib_a, &s.bundle_b, config);
        const double el = oracles::mean(result.losses);
        const double se = std::sqrt(oracles::variance(result.losses) /
                                    static_cast<double>(result.losses.size()));
        CHECK(std::fabs(el - analytic) < 3.0 * se);
    }
}

TEST_CASE("loss statistics conventions on 1..100") {
    std::vector<double> losses(100);
    std::iota(losses.begin(), losses.end(), 1.0);
    const std::vector<double> levels = {0.90};
    const LossStatistics stats = loss_statistics(losses, levels);
    CHECK(stats.el == doctest::Approx(50.5));
    CHECK(stats.quantiles.at(0.90) == 90.0);
    CHECK(stats.etls.at(0.90) == doctest::Approx(95.5));
}

TEST_CASE("loss statistics on a constant sample") {
    const std::vector<double> losses(77, 3.25);
    const std::vector<double> levels = {0.5, 0.9, 0.99};
    const LossStatistics stats = loss_statistics(losses, levels);
    CHECK(stats.el == doctest::Approx(3.25));
    for (double level : levels) {
        CHECK(stats.quantiles.at(level) == doctest::Approx(3.25));
        CHECK(stats.etls.at(level) == doctest::Approx(3.25));
    }
}

TEST_CASE("tail means dominate quantiles and quantiles are monotone") {
    crisk::RngStream rng(91, 0);
    const std::vector<double> levels = {0.5, 0.75, 0.9, 0.95, 0.99};
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.next_uniform() * 300);
        std::vector<double> losses(n);
        for (double& l : losses) l = 1000.0 * rng.next_uniform();
        const LossStatistics stats = loss_statistics(losses, levels);
        double prev_q = -1.0;
        for (double level : levels) {
            CHECK(stats.etls.at(level) >= stats.quantiles.at(level));
            CHECK(stats.quantiles.at(level) >= prev_q);
            CHECK(stats.el <= stats.etls.at(level));  // nonnegative losses, level >= 0.5
            prev_q = stats.quantiles.at(level);
        }
    }
    CHECK_THROWS_AS((void)loss_statistics(std::vector<double>{}, levels), crisk::input_error);
    const std::vector<double> bad_levels = {0.9, 0.5};
    const std::vector<double> some = {1.0, 2.0};
    CHECK_THROWS_AS((void)loss_statistics(some, bad_levels), crisk::input_error);
}

TEST_CASE("potential loss breakdown") {
    auto s = make_single(0.02, 0.5, 100.0);
    auto by_rating = crisk::potential_loss_breakdown(s.portfolio, crisk::BreakdownDimension::rating);
    REQUIRE(by_rating.size() == 1);
    CHECK(by_rating.begin()->second == doctest::Approx(0.02 * 0.5 * 100.0));

    auto many = make_synthetic(120, 12);
    const auto rating = crisk::potential_loss_breakdown(many.portfolio, crisk::BreakdownDimension::rating);
    const auto industry =
        crisk::potential_loss_breakdown(many.portfolio, crisk::BreakdownDimension::industry);
    const auto region = crisk::potential_loss_breakdown(many.portfolio, crisk::BreakdownDimension::region);
    const auto total = [](const std::map<int, double>& m) {
        double t = 0.0;
        for (const auto& [k, v] : m) t += v;
        return t;
    };
    CHECK(total(rating) == doctest::Approx(total(industry)).epsilon(1e-12));
    CHECK(total(industry) == doctest::Approx(total(region)).epsilon(1e-12));
    CHECK(total(rating) == doctest::Approx(fixtures::analytic_expected_loss(many.portfolio)));

    // instruments already in the default state do not contribute
    auto with_defaulted = make_single(0.02, 0.5, 100.0);
    crisk::Instrument dead = with_defaulted.portfolio.instruments[0];
    dead.id = "dead";
    dead.firm = 2;
    dead.rating = with_defaulted.portfolio.rating_classes;
    with_defaulted.portfolio.instruments.push_back(dead);
    const auto buckets =
        crisk::potential_loss_breakdown(with_defaulted.portfolio, crisk::BreakdownDimension::rating);
    CHECK(buckets.count(with_defaulted.portfolio.rating_classes) == 0);
}

TEST_CASE("two ratings split into two buckets that sum to the total") {
    auto s = make_single(0.02, 0.5, 100.0);
    crisk::Instrument second = s.portfolio.instruments[0];
    second.id = "other";
    second.firm = 2;
    second.rating = 9;
    second.exposure = 50.0;
    s.portfolio.instruments.push_back(second);
    const auto buckets = crisk::potential_loss_breakdown(s.portfolio, crisk::BreakdownDimension::rating);
    REQUIRE(buckets.size() == 2);
    CHECK(buckets.at(5) + buckets.at(9) ==
          doctest::Approx(fixtures::analytic_expected_loss(s.portfolio)));
}

TEST_CASE("mode comparison shares default draws and agrees on EL") {
    auto s = make_synthetic(100, 13);
    SimulationConfig config;
    config.scenarios = 30000;
    config.master_seed = 10;
    const auto rows = crisk::compare_models(s.portfolio, s.model, &s.calib_a, &s.bundle_b, config);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].label == "Deterministic LGD");
    CHECK(rows[1].label == "Model A");
    CHECK(rows[2].label == "Model B");
    for (std::size_t i = 1; i < 3; ++i)
        CHECK(rows[i].result.default_fingerprints == rows[0].result.default_fingerprints);
    const double el0 = rows[0].statistics.el;
    for (const auto& row : rows) {
        CHECK(std::fabs(row.statistics.el - el0) / el0 < 0.015);
        CHECK(row.statistics.scenario_count == config.scenarios);
    }
}

TEST_CASE("deterministic mode loss is a pure function of the indicators") {
    auto s = make_single(0.1, 0.37, 200.0);
    SimulationConfig config;
    config.scenarios = 5000;
    config.master_seed = 14;
    const auto result = run_simulation(s.portfolio, s.model, nullptr, nullptr, config);
    for (double loss : result.losses)
        CHECK((loss == 0.0 || loss == doctest::Approx(0.37 * 200.0)));
}

TEST_CASE("results are bitwise identical across thread counts and batch sizes") {
    auto s = make_synthetic(60, 15);
    SimulationConfig base;
    base.scenarios = 4000;
    base.master_seed = 16;
    base.lgd_mode = LgdMode::model_a;
    const auto reference = run_simulation(s.portfolio, s.model, &s.calib_a, &s.bundle_b, base);
    for (int threads : {1, 4, 8}) {
        for (long batch : {1L, 357L, 4096L}) {
            SimulationConfig config = base;
            config.threads = threads;
            config.batch_size = batch;
            const auto run = run_simulation(s.portfolio, s.model, &s.calib_a, &s.bundle_b, config);
            CHECK(run.losses == reference.losses);
            CHECK(run.default_fingerprints == reference.default_fingerprints);
        }
    }
}

TEST_CASE("stochastic severity adds variance over the deterministic mode") {
    auto s = make_single(0.3, 0.5, 100.0);
    SimulationConfig config;
    config.scenarios = 1000000;
    config.master_seed = 17;
    const auto det = run_simulation(s.portfolio, s.model, &s.calib_a, &s.bundle_b, config);
    config.lgd_mode = LgdMode::model_a;
    const auto model_a = run_simulation(s.portfolio, s.model, &s.calib_a, &s.bundle_b, config);
    config.lgd_mode = LgdMode::model_b;
    const auto model_b = run_simulation(s.portfolio, s.model, &s.calib_a, &s.bundle_b, config);
    const double var_det = oracles::variance(det.losses);
    CHECK(oracles::variance(model_a.losses) >= var_det);
    CHECK(oracles::variance(model_b.losses) >= var_det);
}

TEST_CASE("multi-period horizon with absorbing defaults") {
    const double pd = 0.2;
    auto s = make_single(pd, 0.5, 100.0);
    SimulationConfig config;
    config.scenarios = 100000;
    config.horizon_periods = 2;
    config.master_seed = 18;
    const auto result = run_simulation(s.portfolio, s.model, nullptr, nullptr, config);
    int defaulted = 0;
    for (double loss : result.losses) {
        CHECK((loss == 0.0 || loss == doctest::Approx(50.0)));  // never counted twice
        defaulted += loss > 0.0;
    }
    const double horizon_pd = 1.0 - (1.0 - pd) * (1.0 - pd);
    const double freq = static_cast<double>(defaulted) / config.scenarios;
    CHECK(std::fabs(freq - horizon_pd) <
          3.0 * oracles::binomial_se(horizon_pd, config.scenarios));
}

TEST_CASE("one firm may carry several instruments with different severities") {
    auto s = make_single(1.0 - 1e-15, 0.6, 100.0);
    crisk::Instrument second = s.portfolio.instruments[0];
    second.id = "second";
    second.expected_lgd = 0.2;
    second.exposure = 50.0;
    s.portfolio.instruments.push_back(second);  // same firm, same pd
    SimulationConfig config;
    config.scenarios = 2000;
    config.master_seed = 21;
    const auto result = run_simulation(s.portfolio, s.model, nullptr, nullptr, config);
    for (double loss : result.losses)
        CHECK(loss == doctest::Approx(0.6 * 100.0 + 0.2 * 50.0));
}

TEST_CASE("cells without severity history fall back to an independent factor") {
    auto s = make_single(0.05, 0.5, 100.0);
    // calibration covers some other cell entirely
    s.calib_a.cells = {{7, 1}};
    s.calib_a.cell_pos = {{{7, 1}, 0}};
    s.calib_a.m = {{{7, 1}, 0.5}};
    SimulationConfig config;
    config.scenarios = 20000;
    config.master_seed = 19;
    config.lgd_mode = LgdMode::model_a;
    const auto result = run_simulation(s.portfolio, s.model, &s.calib_a, &s.bundle_b, config);
    REQUIRE(!result.warnings.empty());
    CHECK(result.warnings.front().find("(1,1)") != std::string::npos);
    const double analytic = fixtures::analytic_expected_loss(s.portfolio);
    const double se = std::sqrt(oracles::variance(result.losses) /
                                static_cast<double>(result.losses.size()));
    CHECK(std::fabs(oracles::mean(result.losses) - analytic) < 3.0 * se);
}

TEST_CASE("missing calibration bundles are input errors") {
    auto s = make_single(0.05, 0.5, 100.0);
    SimulationConfig config;
    config.scenarios = 10;
    config.lgd_mode = LgdMode::model_a;
    CHECK_THROWS_AS((void)run_simulation(s.portfolio, s.model, nullptr, nullptr, config),
                    crisk::input_error);
    config.lgd_mode = LgdMode::model_b;
    CHECK_THROWS_AS((void)run_simulation(s.portfolio, s.model, &s.calib_a, nullptr, config),
                    crisk::input_error);
}

TEST_CASE("unresolved exposures and empty portfolios are rejected") {
    auto s = make_single(0.05, 0.5, 100.0);
    s.portfolio.instruments[0].exposure = std::nan("");
    SimulationConfig config;
    config.scenarios = 10;
    CHECK_THROWS_AS((void)run_simulation(s.portfolio, s.model, nullptr, nullptr, config),
                    crisk::input_error);

    auto defaulted_only = make_single(0.05, 0.5, 100.0);
    defaulted_only.portfolio.instruments[0].rating = defaulted_only.portfolio.rating_classes;
    CHECK_THROWS_AS(
        (void)run_simulation(defaulted_only.portfolio, defaulted_only.model, nullptr, nullptr, config),
        crisk::input_error);
}

TEST_CASE("config validation") {
    SimulationConfig config;
    config.scenarios = 0;
    CHECK_THROWS_AS(config.validate(), crisk::input_error);
    config.scenarios = 10;
    config.quantile_levels = {0.9, 0.8};
    CHECK_THROWS_AS(config.validate(), crisk::input_error);
    config.quantile_levels = {0.9, 1.0};
    CHECK_THROWS_AS(config.validate(), crisk::input_error);
}
