#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "crisk/csv.hpp"
#include "helpers.hpp"

// End-to-end checks against the installed binaries; paths injected by CMake.
#ifndef CRISK_CLI_PATH
#define CRISK_CLI_PATH "crisk"
#endif
#ifndef CRISK_SAMPLE_GEN_PATH
#define CRISK_SAMPLE_GEN_PATH "crisk_sample_data"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int run(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    return json::parse(in);
}

double breakdown_total(const fs::path& path) {
    const auto table = crisk::read_csv(path.string());
    double total = 0.0;
    for (const auto& row : table.rows) total += std::stod(row[1]);
    return total;
}

}  // namespace

TEST_CASE("command line pipeline") {
    helpers::TempDir tmp("cli");
    const fs::path dir = tmp.path();
    const std::string cli = CRISK_CLI_PATH;
    const std::string gen = CRISK_SAMPLE_GEN_PATH;
    const std::string data = (dir / "data").string();
    const std::string manifest = " --manifest " + data + "/manifest.json";
    const std::string quiet = " > /dev/null 2>&1";

    REQUIRE(run(gen + " --out " + data + " --instruments 40 --months 36 --records 300" + quiet) ==
            0);

    // calibrate: bundles exist and rerunning is byte-identical
    REQUIRE(run(cli + " calibrate" + manifest + quiet) == 0);
    const fs::path bundles = fs::path(data) / "bundles";
    REQUIRE(fs::exists(bundles / "factor_model.json"));
    REQUIRE(fs::exists(bundles / "model_a.json"));
    REQUIRE(fs::exists(bundles / "model_b.json"));
    CHECK(read_json(bundles / "model_a.json").at("complete").get<bool>());
    CHECK(read_json(bundles / "model_b.json").at("complete").get<bool>());
    const std::string factor_model_bytes = helpers::slurp((bundles / "factor_model.json").string());
    const std::string model_a_bytes = helpers::slurp((bundles / "model_a.json").string());
    REQUIRE(run(cli + " calibrate" + manifest + quiet) == 0);
    CHECK(helpers::slurp((bundles / "factor_model.json").string()) == factor_model_bytes);
    CHECK(helpers::slurp((bundles / "model_a.json").string()) == model_a_bytes);

    // simulate: identical bytes across reruns and thread counts
    const std::string out1 = (dir / "out1").string();
    const std::string losses = (dir / "losses.bin").string();
    REQUIRE(run(cli + " simulate" + manifest + " --out " + out1 + " --losses-out " + losses +
                quiet) == 0);
    REQUIRE(fs::exists(fs::path(out1) / "results.json"));
    const std::string results_bytes = helpers::slurp(out1 + "/results.json");
    const std::string out2 = (dir / "out2").string();
    REQUIRE(run(cli + " simulate" + manifest + " --out " + out2 + quiet) == 0);
    CHECK(helpers::slurp(out2 + "/results.json") == results_bytes);
    for (int threads : {4, 8}) {
        const std::string out_t = (dir / ("out_t" + std::to_string(threads))).string();
        REQUIRE(run(cli + " simulate" + manifest + " --out " + out_t + " --threads " +
                    std::to_string(threads) + quiet) == 0);
        CHECK(helpers::slurp(out_t + "/results.json") == results_bytes);
    }

    const json results = read_json(fs::path(out1) / "results.json");
    CHECK(results.at("mode") == "deterministic");
    CHECK(results.at("scenario_count") == 20000);
    CHECK(results.at("currency") == "CHF");
    CHECK(results.at("quantiles").contains("99.95"));
    CHECK(fs::file_size(losses) == 8u * 20000u);
    for (const char* name : {"ptl_by_rating.csv", "ptl_by_industry.csv", "ptl_by_region.csv"})
        CHECK(fs::exists(fs::path(out1) / name));

    // flag overrides show up in the output
    const std::string out3 = (dir / "out3").string();
    REQUIRE(run(cli + " simulate" + manifest + " --out " + out3 +
                " --scenarios 3000 --levels 0.8,0.975" + quiet) == 0);
    const json overridden = read_json(fs::path(out3) / "results.json");
    CHECK(overridden.at("scenario_count") == 3000);
    CHECK(overridden.at("quantiles").contains("80"));
    CHECK(overridden.at("quantiles").contains("97.5"));
    CHECK_FALSE(overridden.at("quantiles").contains("90"));

    // expected loss barely moves between deterministic and stochastic severities
    const std::string out_a = (dir / "out_a").string();
    REQUIRE(run(cli + " simulate" + manifest + " --out " + out_a + " --mode model_a" + quiet) == 0);
    const double el_det = results.at("el").get<double>();
    const double el_a = read_json(fs::path(out_a) / "results.json").at("el").get<double>();
    CHECK(std::fabs(el_a - el_det) / el_det < 0.01);

    // compare: Model,EL,Q_*,ETL_* with the fixed row order
    const std::string out_cmp = (dir / "cmp").string();
    REQUIRE(run(cli + " compare" + manifest + " --out " + out_cmp + " --scenarios 4000" + quiet) ==
            0);
    const auto table = crisk::read_csv(out_cmp + "/compare.csv");
    const std::vector<std::string> expected_header = {
        "Model", "EL", "Q_90", "Q_95", "Q_99", "Q_99.95", "Q_99.98",
        "ETL_90", "ETL_95", "ETL_99", "ETL_99.95", "ETL_99.98"};
    CHECK(table.header == expected_header);
    REQUIRE(table.rows.size() == 3);
    CHECK(table.rows[0][0] == "Deterministic LGD");
    CHECK(table.rows[1][0] == "Model A");
    CHECK(table.rows[2][0] == "Model B");
    for (const auto& row : table.rows)
        for (std::size_t c = 1; c < row.size(); ++c) {
            const double v = std::stod(row[c]);
            CHECK(std::isfinite(v));
            CHECK(v >= 0.0);
        }

    // histogram: per-dimension files with one shared grand total
    const std::string out_h = (dir / "hist").string();
    REQUIRE(run(cli + " histogram" + manifest + " --out " + out_h + quiet) == 0);
    const double by_rating = breakdown_total(fs::path(out_h) / "ptl_by_rating.csv");
    const double by_industry = breakdown_total(fs::path(out_h) / "ptl_by_industry.csv");
    const double by_region = breakdown_total(fs::path(out_h) / "ptl_by_region.csv");
    CHECK(by_rating == doctest::Approx(by_industry).epsilon(1e-9));
    CHECK(by_rating == doctest::Approx(by_region).epsilon(1e-9));

    // calibrating without a severity history leaves model A unusable but marked
    {
        json trimmed = read_json(fs::path(data) / "manifest.json");
        trimmed.erase("lgd_history");
        trimmed["bundles_dir"] = "bundles_partial";
        std::ofstream out(fs::path(data) / "manifest_partial.json");
        out << trimmed.dump(2);
    }
    REQUIRE(run(cli + " calibrate --manifest " + data + "/manifest_partial.json" + quiet) == 0);
    const json partial = read_json(fs::path(data) / "bundles_partial" / "model_a.json");
    CHECK_FALSE(partial.at("complete").get<bool>());
    CHECK(run(cli + " simulate --manifest " + data + "/manifest_partial.json --mode model_a" +
              quiet) == 2);
    CHECK(run(cli + " simulate --manifest " + data + "/manifest_partial.json --mode model_b" +
              quiet) == 0);

    // input errors exit with code 2 and name the offending row
    CHECK(run(cli + " simulate --manifest " + data + "/missing.json" + quiet) == 2);
    {
        std::ofstream bad(fs::path(data) / "portfolio.csv", std::ios::app);
        bad << "broken,99,1,1,5,2.5,0.5,0,100\n";
    }
    const std::string errfile = (dir / "err.txt").string();
    CHECK(run(cli + " simulate" + manifest + " > /dev/null 2> " + errfile) == 2);
    const std::string err = helpers::slurp(errfile);
    CHECK(err.find("portfolio.csv") != std::string::npos);
    CHECK(err.find("row") != std::string::npos);
}
