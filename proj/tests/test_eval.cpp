#include <doctest.h>

#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/eval.hpp"
#include "metagraphloc/log.hpp"
#include "test_util.hpp"

using namespace mgl;
using namespace mgl::eval;
using mgl::testing::random_matrix;

namespace {

Benchmark small_bench() {
    Benchmark b;
    b.aps = 10;
    b.floors = 1;
    b.samples = 120;
    b.width = 20;
    b.height = 15;
    b.seed = 5;
    return b;
}

ArmSpec small_arm(const std::string& name) {
    ArmSpec base;
    base.hidden = 8;
    base.k_neigh = 4;
    base.train.epochs = 2;
    base.train.optimizer.learning_rate = 0.002;
    return arm_from_name(name, base);
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("mde basics") {
    const Matrix truth{{1, 1}, {2, 5}};
    CHECK(mde(truth, truth) == 0.0);
    CHECK(mde(Matrix{{3, 4}}, Matrix{{0, 0}}) == 5.0);
    CHECK_THROWS_AS(mde(Matrix(2, 2), Matrix(3, 2)), DimensionError);
    CHECK_THROWS_AS(mde(Matrix(0, 2), Matrix(0, 2)), DomainError);
}

TEST_CASE("mde matches a direct recomputation") {
    Rng rng = make_rng(81, 0);
    const Matrix p = random_matrix(50, 2, rng, -20, 20), t = random_matrix(50, 2, rng, -20, 20);
    double s = 0.0;
    for (std::size_t r = 0; r < 50; ++r) s += std::sqrt((p(r, 0) - t(r, 0)) * (p(r, 0) - t(r, 0)) + (p(r, 1) - t(r, 1)) * (p(r, 1) - t(r, 1)));
    CHECK(std::abs(mde(p, t) - s / 50.0) < 1e-12);
}

TEST_CASE("cdf by direct count") {
    const std::vector<double> errors{1, 3}, grid{0, 2, 4};
    const auto table = cdf(errors, grid);
    REQUIRE(table.size() == 3);
    CHECK(table[0].fraction == 0.0);
    CHECK(table[1].fraction == 0.5);
    CHECK(table[2].fraction == 1.0);
    const std::vector<double> zeros(5, 0.0);
    for (const CdfPoint& p : cdf(zeros, grid)) CHECK(p.fraction == 1.0);
    const std::vector<double> none;
    CHECK_THROWS_AS(cdf(none, grid), DomainError);
}

TEST_CASE("cdf is monotone and saturates") {
    Rng rng = make_rng(82, 0);
    std::exponential_distribution<double> e(0.3);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> errors(37);
        for (double& v : errors) v = e(rng);
        const auto grid = cdf_grid(errors, 0.5);
        const auto table = cdf(errors, grid);
        for (std::size_t i = 1; i < table.size(); ++i) CHECK(table[i].fraction >= table[i - 1].fraction);
        CHECK(table.back().fraction == 1.0);
        CHECK(table.front().error == 0.0);
    }
}

TEST_CASE("report echoes its inputs") {
    const EvalReport r = make_report(Matrix{{3, 4}, {0, 1}}, Matrix{{0, 0}, {0, 0}}, 1.0, {{"arm", "dec"}}, 17);
    CHECK(r.errors == std::vector<double>{5.0, 1.0});
    CHECK(r.mde == 3.0);
    CHECK(r.seed == 17);
    CHECK(r.cdf.back().fraction == 1.0);
    std::stringstream buf;
    write_summary_csv(r, buf);
    const CsvTable t = read_csv(buf);
    CHECK(t.header == std::vector<std::string>{"key", "value"});
    bool saw_arm = false;
    for (const auto& row : t.rows) saw_arm |= row[0] == "arm" && row[1] == "dec";
    CHECK(saw_arm);
}

TEST_CASE("split is a seeded partition") {
    const auto data = benchmark_floor(small_bench(), 0);
    const auto [train, test] = split_dataset(data, 0.7, 3);
    CHECK(train.size() == 84);
    CHECK(test.size() == 36);
    CHECK(split_dataset(data, 0.7, 3).first == train);
    CHECK_FALSE(split_dataset(data, 0.7, 4).first == train);
}

TEST_CASE("benchmark floors differ and are reproducible") {
    Benchmark b = small_bench();
    b.floors = 2;
    CHECK(benchmark_floor(b, 0) == benchmark_floor(b, 0));
    CHECK_FALSE(benchmark_floor(b, 0) == benchmark_floor(b, 1));
    CHECK(benchmark_environment(b, 1).floor == 1);
}

TEST_CASE("single value sweep gives one row") {
    const auto [train, test] = split_dataset(benchmark_floor(small_bench(), 0), 0.7, 1);
    const std::vector<double> values{0.3};
    const auto rows = sweep(SweepDimension::threshold, values, small_arm("gcn-corr"), train, test);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].value == 0.3);
    CHECK(rows[0].result.ok);
    CHECK(best_mde(rows) == rows[0].result.report.mde);
    std::stringstream buf;
    write_sweep_csv(SweepDimension::threshold, rows, buf);
    const CsvTable t = read_csv(buf);
    CHECK(t.header == std::vector<std::string>{"dimension", "value", "mde", "parameters", "status", "message"});
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == "threshold");
}

TEST_CASE("a failing sweep cell does not stop the others") {
    const auto [train, test] = split_dataset(benchmark_floor(small_bench(), 0), 0.7, 1);
    const std::vector<double> values{3, 2.5, 5};
    log::set_muted(true);
    const auto rows = sweep(SweepDimension::k_neigh, values, small_arm("dec"), train, test, 2);
    log::set_muted(false);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].result.ok);
    CHECK_FALSE(rows[1].result.ok);
    CHECK_FALSE(rows[1].result.error.empty());
    CHECK(rows[2].result.ok);
    CHECK(std::isfinite(best_mde(rows)));
    CHECK(best_mde(std::span<const SweepRow>(rows.data() + 1, 1)) == std::numeric_limits<double>::infinity());
}

TEST_CASE("identical arms give bit-identical results") {
    const auto [train, test] = split_dataset(benchmark_floor(small_bench(), 0), 0.7, 1);
    const std::vector<ArmSpec> arms{small_arm("dec"), small_arm("dec")};
    const auto serial = compare(arms, train, test, 1);
    const auto parallel = compare(arms, train, test, 2);
    REQUIRE(serial.size() == 2);
    CHECK(serial[0].ok);
    CHECK(serial[0].report.mde == serial[1].report.mde);
    CHECK(serial[0].predictions == serial[1].predictions);
    CHECK(parallel[0].predictions == serial[0].predictions);
    CHECK(parallel[1].loss_history == serial[1].loss_history);
}

TEST_CASE("compare isolates a failing arm") {
    const auto [train, test] = split_dataset(benchmark_floor(small_bench(), 0), 0.7, 1);
    ArmSpec broken = small_arm("dec");
    broken.name = "broken";
    broken.train.batch = 0;
    const std::vector<ArmSpec> arms{small_arm("dnn"), broken};
    const auto results = compare(arms, train, test);
    CHECK(results[0].ok);
    CHECK_FALSE(results[1].ok);
    std::stringstream csv, md;
    write_compare_csv(results, csv);
    write_compare_markdown(results, md);
    const CsvTable t = read_csv(csv);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][0] == "broken");
    CHECK(t.rows[1][4] == "failed");
    CHECK(md.str().find("broken") != std::string::npos);
    const std::vector<ArmSpec> one{small_arm("dec")};
    CHECK_THROWS_AS(compare(one, train, test), ConfigError);
}

TEST_CASE("arm names") {
    const ArmSpec base;
    CHECK(arm_from_name("dec-rssi", base).use_imu == false);
    CHECK(arm_from_name("gcn-prob", base).graph == graph::GraphKind::prob);
    CHECK(arm_from_name("dnn", base).arch == model::Architecture::dnn);
    CHECK_THROWS_AS(arm_from_name("svm", base), ConfigError);
}

TEST_CASE("csv reader rejects ragged rows") {
    std::stringstream in("a,b\n1,2\n3\n");
    CHECK_THROWS_AS(read_csv(in), ParseError);
}

TEST_CASE("parallel_for rethrows the first failure after all work finishes") {
    std::atomic<int> done{0};
    CHECK_THROWS_AS(parallel_for(8, 3,
                                 [&](std::size_t i) {
                                     ++done;
                                     if (i == 4) throw DomainError("boom");
                                 }),
                    DomainError);
    CHECK(done.load() == 8);
}

}  // TEST_SUITE
