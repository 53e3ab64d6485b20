#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "crisk/errors.hpp"
#include "crisk/factor_model.hpp"
#include "crisk/lgd_model_a.hpp"
#include "crisk/lgd_model_b.hpp"
#include "crisk/matrix.hpp"
#include "crisk/portfolio.hpp"

namespace crisk {

enum class LgdMode { deterministic, model_a, model_b };

inline std::string to_string(LgdMode mode) {
    switch (mode) {
        case LgdMode::deterministic: return "deterministic";
        case LgdMode::model_a: return "model_a";
        case LgdMode::model_b: return "model_b";
    }
    throw input_error("unknown lgd mode");
}

inline LgdMode parse_lgd_mode(const std::string& name) {
    if (name == "deterministic") return LgdMode::deterministic;
    if (name == "model_a") return LgdMode::model_a;
    if (name == "model_b") return LgdMode::model_b;
    throw input_error("unknown lgd mode '" + name + "'");
}

struct SimulationConfig {
    long scenarios = 100000;
    int horizon_periods = 1;
    LgdMode lgd_mode = LgdMode::deterministic;
    std::uint64_t master_seed = 1;
    long batch_size = 4096;  // work-chunk size for the thread pool; never changes results
    std::vector<double> quantile_levels = {0.90, 0.95, 0.99, 0.9995, 0.9998};
    int threads = 1;  // 0 = hardware concurrency

    void validate() const {
        if (scenarios <= 0) throw input_error("config: scenarios must be positive");
        if (horizon_periods <= 0) throw input_error("config: horizon_periods must be positive");
        if (batch_size <= 0) throw input_error("config: batch_size must be positive");
        if (quantile_levels.empty()) throw input_error("config: no quantile levels");
        double prev = 0.0;
        for (double level : quantile_levels) {
            if (!(level > prev && level < 1.0))
                throw input_error("config: quantile levels must be strictly increasing in (0,1)");
            prev = level;
        }
    }
};

struct LossStatistics {
    double el = 0.0;
    std::map<double, double> quantiles;  // level -> loss
    std::map<double, double> etls;       // level -> mean loss above the quantile
    long scenario_count = 0;
    std::uint64_t seed = 0;
    std::string mode;
};

// Per-cell coupling parameters for Model B plus a pooled fallback.
struct ModelBBundle {
    std::map<CellIndex, XiResult> cells;
    std::optional<XiResult> global;

    XiResult coupling_for(const CellIndex& cell) const {
        const auto it = cells.find(cell);
        if (it != cells.end()) return it->second;
        if (global) return *global;
        throw input_error("model B bundle: no coupling for cell " + to_string(cell));
    }
};

struct SimulationResult {
    std::vector<double> losses;  // one credit loss per scenario
    std::vector<std::uint64_t> default_fingerprints;  // hash of defaulted firms per scenario
    double total_exposure = 0.0;
    double total_exposure_positive = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

// RNG purposes within one (scenario, period); systematic and idiosyncratic
// streams are mode-independent so every LGD mode sees the same defaults.
enum StreamPurpose : std::uint64_t {
    kStreamSystematic = 0,
    kStreamIdiosyncratic = 1,
    kStreamLgdFactor = 2,
    kStreamLgdDraw = 3,
};

inline std::uint64_t stream_index(std::uint64_t scenario, std::uint64_t period,
                                  std::uint64_t periods, StreamPurpose purpose) {
    return (scenario * periods + period) * 4 + purpose;
}

struct EngineInstrument {
    std::size_t firm_slot = 0;
    std::size_t cell_slot = 0;
    double exposure = 0.0;
    double m = 0.5;  // expected severity
    ModelBParams b_params;
};

struct EngineSetup {
    LgdMode mode = LgdMode::deterministic;
    std::vector<EngineInstrument> instruments;

    std::vector<double> firm_threshold;
    std::vector<double> firm_pd;  // clamped, equals Phi(threshold)
    std::vector<double> firm_tau;
    std::vector<double> firm_denom;  // sqrt(var beta + tau^2)
    std::vector<std::size_t> firm_cell_slot;

    std::vector<CellIndex> cells;
    Matrix beta_factor;  // cholesky factor of the cell covariance
    Matrix l21, l22;     // Model A blocks: Z = l21*z1 + l22*z2
};

inline EngineSetup build_engine_setup(const Portfolio& portfolio, const FactorModel& model,
                                      const ModelACalibration* calib_a,
                                      const ModelBBundle* bundle_b,
                                      const SimulationConfig& config,
                                      std::vector<std::string>& warnings) {
    EngineSetup setup;
    setup.mode = config.lgd_mode;

    std::vector<CellIndex> cells(portfolio.cell_registry.begin(), portfolio.cell_registry.end());
    setup.cells = cells;
    std::map<CellIndex, std::size_t> cell_slot;
    for (std::size_t i = 0; i < cells.size(); ++i) cell_slot[cells[i]] = i;

    const std::size_t n_cells = cells.size();
    Matrix beta_cov(n_cells, n_cells);
    for (std::size_t i = 0; i < n_cells; ++i)
        for (std::size_t j = i; j < n_cells; ++j)
            beta_cov(i, j) = beta_cov(j, i) = beta_cell_covariance(model, cells[i], cells[j]);
    setup.beta_factor = cholesky_psd(beta_cov);

    // actual simulated cell variances (identical to beta_cov unless repaired)
    std::vector<double> var_beta(n_cells, 0.0);
    for (std::size_t i = 0; i < n_cells; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            var_beta[i] += setup.beta_factor(i, j) * setup.beta_factor(i, j);
    for (std::size_t i = 0; i < n_cells; ++i) {
        const double sigma = model.sigma[model.cell_at(cells[i])];
        if (std::fabs(sigma * sigma - var_beta[i]) > 1e-6 * std::max(1.0, sigma * sigma))
            warnings.push_back("cell " + to_string(cells[i]) +
                               ": sigma disagrees with the factor-implied volatility; "
                               "standardization uses the factor-implied value");
    }

    if (config.lgd_mode == LgdMode::model_a) {
        if (!calib_a || !calib_a->has_covariances())
            throw input_error("run_simulation: model_a requested without a calibration bundle");
        Matrix theta(n_cells, n_cells), psi(n_cells, n_cells);
        double diag_sum = 0.0;
        std::size_t diag_count = 0;
        for (const auto& [cell, pos] : calib_a->cell_pos) {
            (void)cell;
            diag_sum += calib_a->theta(pos, pos);
            ++diag_count;
        }
        const double fallback_var = diag_count > 0 ? diag_sum / diag_count : 0.0;
        for (std::size_t i = 0; i < n_cells; ++i) {
            const auto ci = calib_a->cell_pos.find(cells[i]);
            if (ci == calib_a->cell_pos.end()) {
                theta(i, i) = fallback_var;
                warnings.push_back("cell " + to_string(cells[i]) +
                                   ": no severity-factor history, simulating an independent "
                                   "factor of typical variance");
                continue;
            }
            for (std::size_t j = 0; j < n_cells; ++j) {
                const auto cj = calib_a->cell_pos.find(cells[j]);
                if (cj == calib_a->cell_pos.end()) continue;
                theta(i, j) = calib_a->theta(ci->second, cj->second);
                psi(i, j) = calib_a->psi(ci->second, cj->second);
            }
        }
        const JointFactor joint = build_joint_factor(beta_cov, psi, theta);
        setup.l21 = Matrix(n_cells, n_cells);
        setup.l22 = Matrix(n_cells, n_cells);
        for (std::size_t i = 0; i < n_cells; ++i)
            for (std::size_t j = 0; j < n_cells; ++j) {
                setup.l21(i, j) = joint.l(n_cells + i, j);
                setup.l22(i, j) = joint.l(n_cells + i, n_cells + j);
            }
    }
    if (config.lgd_mode == LgdMode::model_b && !bundle_b)
        throw input_error("run_simulation: model_b requested without a coupling bundle");

    std::map<int, std::size_t> firm_slot;
    for (const auto& inst : portfolio.instruments) {
        if (portfolio.defaulted_rating(inst)) continue;  // already in default, no new event
        if (!inst.exposure_resolved())
            throw input_error("instrument '" + inst.id + "': exposure not resolved");
        auto [it, fresh] = firm_slot.emplace(inst.firm, setup.firm_threshold.size());
        const std::size_t slot = it->second;
        if (fresh) {
            const FirmParams& fp = model.firm(inst.firm);
            const std::size_t cslot = cell_slot.at(inst.cell);
            const double pd = std::clamp(inst.pd, 1e-6, 1.0 - 1e-6);
            setup.firm_threshold.push_back(std_normal_quantile(pd));
            setup.firm_pd.push_back(pd);
            setup.firm_tau.push_back(fp.tau);
            setup.firm_denom.push_back(std::sqrt(var_beta[cslot] + fp.tau * fp.tau));
            setup.firm_cell_slot.push_back(cslot);
        }
        EngineInstrument ei;
        ei.firm_slot = slot;
        ei.cell_slot = cell_slot.at(inst.cell);
        ei.exposure = inst.exposure;
        ei.m = inst.expected_lgd;
        if (config.lgd_mode == LgdMode::model_b) {
            const XiResult coupling = bundle_b->coupling_for(inst.cell);
            ei.b_params.lbar = inst.expected_lgd;
            ei.b_params.collateralized = inst.collateralized;
            std::tie(ei.b_params.shape, ei.b_params.delta) =
                shape_params(inst.expected_lgd, inst.collateralized);
            ei.b_params.lambda = coupling.lambda;
            ei.b_params.xi = coupling.xi;
        }
        setup.instruments.push_back(ei);
    }
    if (setup.instruments.empty())
        throw input_error("run_simulation: no simulatable instruments in the portfolio");
    return setup;
}

// Severity draw from the percentile form of the Model B construction.
inline double sample_lgd_b_from_u(double u, const ModelBParams& params, RngStream& rng) {
    const double v = rng.next_uniform();
    const double h = u * (1.0 + params.xi * (v - 0.5));
    return lgd_marginal_inverse(f_h(h, params.xi), params);
}

class ScenarioWorker {
public:
    ScenarioWorker(const EngineSetup& setup, const SimulationConfig& config)
        : setup_(setup),
          config_(config),
          n_cells_(setup.cells.size()),
          n_firms_(setup.firm_threshold.size()),
          z1_(n_cells_),
          z2_(n_cells_),
          beta_(n_cells_),
          zeta_(n_cells_),
          g_(n_firms_),
          alive_(n_firms_) {}

    // Returns the scenario loss and a fingerprint of the defaulted firm set.
    std::pair<double, std::uint64_t> run(std::uint64_t scenario) {
        const std::uint64_t periods = static_cast<std::uint64_t>(config_.horizon_periods);
        double loss = 0.0;
        std::uint64_t fingerprint = 1469598103934665603ULL;  // FNV-1a basis
        std::fill(alive_.begin(), alive_.end(), 1);
        for (std::uint64_t period = 0; period < periods; ++period) {
            RngStream sys(config_.master_seed,
                          stream_index(scenario, period, periods, kStreamSystematic));
            RngStream idio(config_.master_seed,
                           stream_index(scenario, period, periods, kStreamIdiosyncratic));
            RngStream lgd(config_.master_seed,
                          stream_index(scenario, period, periods, kStreamLgdDraw));

            for (std::size_t j = 0; j < n_cells_; ++j) z1_[j] = sys.next_normal();
            for (std::size_t i = 0; i < n_cells_; ++i) {
                const double* row = setup_.beta_factor.row(i);
                double s = 0.0;
                for (std::size_t j = 0; j <= i; ++j) s += row[j] * z1_[j];
                beta_[i] = s;
            }
            if (setup_.mode == LgdMode::model_a) {
                RngStream zfac(config_.master_seed,
                               stream_index(scenario, period, periods, kStreamLgdFactor));
                for (std::size_t j = 0; j < n_cells_; ++j) z2_[j] = zfac.next_normal();
                for (std::size_t i = 0; i < n_cells_; ++i) {
                    double s = 0.0;
                    const double* r21 = setup_.l21.row(i);
                    for (std::size_t j = 0; j < n_cells_; ++j) s += r21[j] * z1_[j];
                    const double* r22 = setup_.l22.row(i);
                    for (std::size_t j = 0; j <= i; ++j) s += r22[j] * z2_[j];
                    zeta_[i] = s;
                }
            }

            for (std::size_t f = 0; f < n_firms_; ++f) {
                if (!alive_[f]) continue;
                const double eps = setup_.firm_tau[f] * idio.next_normal();
                g_[f] = (beta_[setup_.firm_cell_slot[f]] + eps) / setup_.firm_denom[f];
            }

            bool any_default = false;
            for (std::size_t f = 0; f < n_firms_; ++f) {
                if (alive_[f] && g_[f] < setup_.firm_threshold[f]) {
                    any_default = true;
                    fingerprint ^= f + period * n_firms_ + 0x9e3779b97f4a7c15ULL;
                    fingerprint *= 1099511628211ULL;
                }
            }
            if (any_default) {
                for (const EngineInstrument& inst : setup_.instruments) {
                    const std::size_t f = inst.firm_slot;
                    if (!alive_[f] || g_[f] >= setup_.firm_threshold[f]) continue;
                    double severity = inst.m;
                    switch (setup_.mode) {
                        case LgdMode::deterministic:
                            break;
                        case LgdMode::model_a: {
                            const auto [mu, nu] =
                                lgd_params_from_z(zeta_[inst.cell_slot], inst.m);
                            severity = beta_sample(mu, nu, lgd);
                            break;
                        }
                        case LgdMode::model_b: {
                            const double u =
                                std::min(std_normal_cdf(g_[f]) / setup_.firm_pd[f],
                                         1.0 - 1e-16);
                            severity = sample_lgd_b_from_u(u, inst.b_params, lgd);
                            break;
                        }
                    }
                    loss += severity * inst.exposure;
                }
            }
            for (std::size_t f = 0; f < n_firms_; ++f)
                if (alive_[f] && g_[f] < setup_.firm_threshold[f]) alive_[f] = 0;
        }
        return {loss, fingerprint};
    }

private:
    const EngineSetup& setup_;
    const SimulationConfig& config_;
    std::size_t n_cells_;
    std::size_t n_firms_;
    std::vector<double> z1_, z2_, beta_, zeta_, g_;
    std::vector<int> alive_;
};

}  // namespace detail

// Simulates the per-scenario portfolio credit loss sum X * LGD * EXP. The
// loss sample is a pure function of (inputs, master_seed, scenario index), so
// thread count and batch size cannot change a single bit of it.
inline SimulationResult run_simulation(const Portfolio& portfolio, const FactorModel& model,
                                       const ModelACalibration* calib_a,
                                       const ModelBBundle* bundle_b,
                                       const SimulationConfig& config) {
    config.validate();
    SimulationResult result;
    const detail::EngineSetup setup =
        detail::build_engine_setup(portfolio, model, calib_a, bundle_b, config, result.warnings);

    for (const auto& inst : setup.instruments) {
        result.total_exposure += inst.exposure;
        result.total_exposure_positive += std::max(inst.exposure, 0.0);
    }

    const long n = config.scenarios;
    result.losses.resize(n);
    result.default_fingerprints.resize(n);

    int threads = config.threads > 0 ? config.threads
                                     : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    threads = static_cast<int>(std::min<long>(threads, n));

    std::atomic<long> next_start{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    const auto worker = [&]() {
        detail::ScenarioWorker scenario_worker(setup, config);
        try {
            for (;;) {
                const long start = next_start.fetch_add(config.batch_size);
                if (start >= n) break;
                const long stop = std::min(n, start + config.batch_size);
                for (long s = start; s < stop; ++s) {
                    const auto [loss, fingerprint] =
                        scenario_worker.run(static_cast<std::uint64_t>(s));
                    result.losses[s] = loss;
                    result.default_fingerprints[s] = fingerprint;
                }
            }
        } catch (...) {
            const std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    };

    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return result;
}

// Empirical loss statistics: EL is the sample mean, the level-a quantile is
// the ascending order statistic at index ceil(a*n), and the expected tail
// loss is the mean of the top floor((1-a)*n) losses (at least one).
inline LossStatistics loss_statistics(std::span<const double> losses,
                                      std::span<const double> levels) {
    if (losses.empty()) throw input_error("loss_statistics: empty loss sample");
    double prev = 0.0;
    for (double level : levels) {
        if (!(level > prev && level < 1.0))
            throw input_error("loss_statistics: levels must be strictly increasing in (0,1)");
        prev = level;
    }
    std::vector<double> sorted(losses.begin(), losses.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    LossStatistics stats;
    stats.scenario_count = static_cast<long>(n);
    long double sum = 0.0L;
    for (double l : sorted) sum += l;
    stats.el = static_cast<double>(sum / static_cast<long double>(n));

    for (double level : levels) {
        // tolerate representation error in level*n when it is an exact integer
        std::size_t rank = static_cast<std::size_t>(
            std::ceil(level * static_cast<double>(n) - 1e-6));
        rank = std::clamp<std::size_t>(rank, 1, n);
        stats.quantiles[level] = sorted[rank - 1];

        std::size_t top = static_cast<std::size_t>(
            std::floor((1.0 - level) * static_cast<double>(n) + 1e-6));
        top = std::clamp<std::size_t>(top, 1, n);
        long double tail = 0.0L;
        for (std::size_t i = n - top; i < n; ++i) tail += sorted[i];
        stats.etls[level] = static_cast<double>(tail / static_cast<long double>(top));
    }
    return stats;
}

enum class BreakdownDimension { rating, industry, region };

inline std::string to_string(BreakdownDimension dim) {
    switch (dim) {
        case BreakdownDimension::rating: return "rating";
        case BreakdownDimension::industry: return "industry";
        case BreakdownDimension::region: return "region";
    }
    throw input_error("unknown breakdown dimension");
}

// Expected potential loss pd * expected_lgd * exposure grouped by one key.
// The grand total is the same whichever dimension is chosen.
inline std::map<int, double> potential_loss_breakdown(const Portfolio& portfolio,
                                                      BreakdownDimension dimension) {
    std::map<int, double> buckets;
    for (const auto& inst : portfolio.instruments) {
        if (portfolio.defaulted_rating(inst)) continue;
        if (!inst.exposure_resolved())
            throw input_error("instrument '" + inst.id + "': exposure not resolved");
        int key = 0;
        switch (dimension) {
            case BreakdownDimension::rating: key = inst.rating; break;
            case BreakdownDimension::industry: key = inst.cell.industry; break;
            case BreakdownDimension::region: key = inst.cell.region; break;
        }
        buckets[key] += inst.pd * inst.expected_lgd * inst.exposure;
    }
    return buckets;
}

struct ModeComparison {
    std::string label;
    LgdMode mode = LgdMode::deterministic;
    LossStatistics statistics;
    SimulationResult result;
};

// Runs the three severity modes on shared default draws (the systematic and
// idiosyncratic streams do not depend on the mode) and reports one row each.
inline std::vector<ModeComparison> compare_models(const Portfolio& portfolio,
                                                  const FactorModel& model,
                                                  const ModelACalibration* calib_a,
                                                  const ModelBBundle* bundle_b,
                                                  const SimulationConfig& config) {
    if (!calib_a || !bundle_b)
        throw input_error("compare_models: all three calibrations must be available");
    std::vector<ModeComparison> rows;
    const std::vector<std::pair<std::string, LgdMode>> modes = {
        {"Deterministic LGD", LgdMode::deterministic},
        {"Model A", LgdMode::model_a},
        {"Model B", LgdMode::model_b},
    };
    for (const auto& [label, mode] : modes) {
        SimulationConfig mode_config = config;
        mode_config.lgd_mode = mode;
        ModeComparison row;
        row.label = label;
        row.mode = mode;
        row.result = run_simulation(portfolio, model, calib_a, bundle_b, mode_config);
        row.statistics = loss_statistics(row.result.losses, config.quantile_levels);
        row.statistics.seed = config.master_seed;
        row.statistics.mode = to_string(mode);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace crisk
