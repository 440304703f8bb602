#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "metagraphloc/dataset_io.hpp"
#include "metagraphloc/errors.hpp"
#include "metagraphloc/radio.hpp"

using namespace mgl;
using namespace mgl::radio;

namespace {

RadioEnvironment three_ap_room(double sigma) {
    RadioEnvironment env;
    env.width = 10.0;
    env.height = 10.0;
    env.channel.sigma = sigma;
    env.access_points = {{1.0, 1.0, 0.0}, {9.0, 2.0, 0.0}, {4.0, 9.0, 0.0}};
    env.detection_range = 100.0;
    return env;
}

Fingerprint noiseless_at(const RadioEnvironment& env, Point2 p) {
    Fingerprint fp;
    fp.position = {p.x, p.y, 0.0};
    for (const Point3& ap : env.access_points) {
        fp.rssi.push_back(mean_rssi(env.channel, distance(Point3{p.x, p.y, 0.0}, ap)));
        fp.mask.push_back(1);
    }
    return fp;
}

}  // namespace

TEST_SUITE("radio") {

TEST_CASE("path loss at ten metres") {
    ChannelParams ch;
    ch.pl0 = 40.0;
    ch.beta = 2.0;
    ch.d0 = 1.0;
    ch.p_tx = 20.0;
    const PathLoss pl = path_loss(ch, 10.0, 0.0);
    CHECK(pl.loss_db == doctest::Approx(60.0).epsilon(1e-15));
    CHECK_FALSE(pl.clamped);
    CHECK(received_power(ch, pl.loss_db) == doctest::Approx(-40.0).epsilon(1e-15));
}

TEST_CASE("path loss at the reference distance and with shadowing") {
    ChannelParams ch;
    ch.pl0 = 37.0;
    ch.beta = 3.0;
    CHECK(path_loss(ch, ch.d0, 0.0).loss_db == doctest::Approx(37.0));
    CHECK(path_loss(ch, 100.0, 2.5).loss_db == doctest::Approx(37.0 + 60.0 + 2.5));
}

TEST_CASE("non-positive distance is clamped and flagged") {
    ChannelParams ch;
    const PathLoss zero = path_loss(ch, 0.0, 0.0);
    CHECK(zero.clamped);
    CHECK(zero.loss_db == doctest::Approx(path_loss(ch, ch.d0 / 100.0, 0.0).loss_db));
    CHECK(path_loss(ch, -3.0, 0.0).clamped);
}

TEST_CASE("likelihood at the mean and one sigma away") {
    ChannelParams ch;
    ch.sigma = 3.0;
    const Point3 dev{0, 0, 0}, ap{5, 0, 0};
    const double mu = mean_rssi(ch, 5.0);
    const double peak = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * 3.0);
    CHECK(rssi_likelihood(ch, mu, dev, ap) == doctest::Approx(peak).epsilon(1e-14));
    CHECK(rssi_likelihood(ch, mu + 3.0, dev, ap) == doctest::Approx(std::exp(-0.5) * peak).epsilon(1e-14));
}

TEST_CASE("likelihood integrates to one") {
    ChannelParams ch;
    ch.sigma = 4.0;
    const Point3 dev{0, 0, 0}, ap{7, 2, 0};
    const double mu = mean_rssi(ch, distance(dev, ap));
    const double h = 0.01;
    double total = 0.0;
    for (double r = mu - 60.0; r <= mu + 60.0; r += h) total += rssi_likelihood(ch, r, dev, ap) * h;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("likelihood rejects zero sigma") {
    ChannelParams ch;
    ch.sigma = 0.0;
    CHECK_THROWS_AS(rssi_likelihood(ch, -50.0, {}, {1, 0, 0}), DomainError);
}

TEST_CASE("equidistant point hears identical APs identically") {
    ChannelParams ch;
    ch.sigma = 0.0;
    RadioEnvironment env;
    env.width = 10.0;
    env.height = 10.0;
    env.channel = ch;
    env.access_points = {{1.5, 5.0, 0.0}, {3.5, 5.0, 0.0}};
    GenerationOptions opt;
    opt.layout = Layout::grid;
    const FingerprintDataset d = generate_dataset(env, 100, opt, 1);
    std::size_t checked = 0;
    for (const Fingerprint& fp : d.samples)
        if (fp.position.x == 2.5) {
            CHECK(fp.rssi[0] == fp.rssi[1]);
            ++checked;
        }
    CHECK(checked > 0);
}

TEST_CASE("generation is a pure function of its seed") {
    ChannelParams ch;
    const RadioEnvironment env = make_environment(12, 30, 20, ch, 5, 2);
    const FingerprintDataset a = generate_dataset(env, 50, {}, 9);
    const FingerprintDataset b = generate_dataset(env, 50, {}, 9);
    CHECK(a == b);
    CHECK_FALSE(a == generate_dataset(env, 50, {}, 10));
}

TEST_CASE("environment deals APs round-robin over floors") {
    const RadioEnvironment env = make_environment(7, 30, 20, {}, 3, 3);
    for (std::size_t i = 0; i < env.ap_count(); ++i)
        CHECK(env.access_points[i].z == doctest::Approx(static_cast<double>(i % 3) * env.floor_height));
}

TEST_CASE("shadowing spread matches sigma") {
    ChannelParams ch;
    ch.sigma = 4.0;
    RadioEnvironment env = make_environment(20, 40, 30, ch, 21);
    env.detection_range = 1e9;
    env.rssi_floor = -1e9;
    GenerationOptions opt;
    opt.layout = Layout::grid;
    const FingerprintDataset d = generate_dataset(env, 500, opt, 4);
    double s = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (const Fingerprint& fp : d.samples)
        for (std::size_t m = 0; m < d.aps; ++m) {
            const double r = fp.rssi[m] - mean_rssi(ch, distance(fp.position, env.access_points[m]));
            s += r;
            ss += r * r;
            ++n;
        }
    REQUIRE(n == 10000);
    const double mean = s / static_cast<double>(n);
    const double sd = std::sqrt(ss / static_cast<double>(n) - mean * mean);
    CHECK(sd == doctest::Approx(4.0).epsilon(0.125));
}

TEST_CASE("undetected APs carry the placeholder and a zero mask") {
    ChannelParams ch;
    RadioEnvironment env = make_environment(10, 40, 30, ch, 2);
    env.detection_range = 8.0;
    const FingerprintDataset d = generate_dataset(env, 80, {}, 3);
    std::size_t missed = 0;
    for (const Fingerprint& fp : d.samples)
        for (std::size_t m = 0; m < d.aps; ++m)
            if (!fp.mask[m]) {
                CHECK(fp.rssi[m] == env.rssi_floor);
                ++missed;
            }
    CHECK(missed > 0);
    CHECK_NOTHROW(d.validate());
}

TEST_CASE("imu has nine channels with a constant vertical axis") {
    const RadioEnvironment env = make_environment(5, 40, 30, {}, 8);
    const FingerprintDataset d = generate_dataset(env, 200, {}, 8);
    REQUIRE(d.imu_dims == 9);
    double mean_vertical = 0.0;
    for (const Fingerprint& fp : d.samples) mean_vertical += fp.imu[2];
    CHECK(mean_vertical / 200.0 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("ml baseline recovers a noiseless grid point exactly") {
    const RadioEnvironment env = three_ap_room(1e-3);
    const Point2 truth{3.0, 4.5};
    const Point2 est = ml_baseline_locate(env, noiseless_at(env, truth), 0.5);
    CHECK(est.x == doctest::Approx(3.0));
    CHECK(est.y == doctest::Approx(4.5));
}

TEST_CASE("ml baseline matches an exhaustive grid oracle within one grid step") {
    const RadioEnvironment env = three_ap_room(0.0);
    const double step = 0.5;
    for (const Point2 truth : {Point2{2.13, 7.71}, Point2{8.4, 0.3}, Point2{5.55, 5.05}, Point2{0.2, 9.9}}) {
        const Fingerprint fp = noiseless_at(env, truth);
        // Brute force: smallest summed squared residual in dB, first hit in row-major scan order.
        Point2 oracle{};
        double best = 1e300;
        for (int iy = 0; iy <= 20; ++iy)
            for (int ix = 0; ix <= 20; ++ix) {
                const Point3 at{ix * step, iy * step, 0.0};
                double r2 = 0.0;
                for (std::size_t m = 0; m < 3; ++m) {
                    const double r = mean_rssi(env.channel, distance(at, env.access_points[m])) - fp.rssi[m];
                    r2 += r * r;
                }
                if (r2 < best) {
                    best = r2;
                    oracle = {at.x, at.y};
                }
            }
        const Point2 est = ml_baseline_locate(env, fp, step);
        CHECK(est.x == oracle.x);
        CHECK(est.y == oracle.y);
        CHECK(distance(est, truth) <= step);
    }
}

TEST_CASE("ml baseline with one AP lands on the matching ring") {
    RadioEnvironment env = three_ap_room(1.0);
    const Point2 truth{6.0, 6.5};
    Fingerprint fp = noiseless_at(env, truth);
    fp.mask = {0, 1, 0};
    const Point2 est = ml_baseline_locate(env, fp, 0.25);
    const double ring = distance(Point3{truth.x, truth.y, 0}, env.access_points[1]);
    CHECK(std::abs(distance(Point3{est.x, est.y, 0}, env.access_points[1]) - ring) < 0.25);
}

TEST_CASE("ml baseline needs a detected AP") {
    const RadioEnvironment env = three_ap_room(1.0);
    Fingerprint fp = noiseless_at(env, {1, 1});
    fp.mask = {0, 0, 0};
    CHECK_THROWS_AS(ml_baseline_locate(env, fp, 0.5), DomainError);
}

TEST_CASE("dataset text round trip") {
    RadioEnvironment env = make_environment(6, 20, 10, {}, 4);
    env.dropout = 0.2;
    const FingerprintDataset d = generate_dataset(env, 40, {}, 4);
    std::stringstream buf;
    write_dataset(d, buf);
    CHECK(read_dataset(buf) == d);
}

TEST_CASE("row arity error names the line") {
    std::stringstream in("#metagraphloc-v1,M=2,D=1,FLOOR=0\n"
                         "1,2,0,-50,-60,0.5\n"
                         "1,2,0,-50,-60,0.5,7,8\n");
    try {
        (void)read_dataset(in);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("large imported header sizes the dataset") {
    std::stringstream in;
    in << "#metagraphloc-v1,M=379,D=9,FLOOR=1\n1,2,4";
    for (int i = 0; i < 379; ++i) in << ",-110";
    for (int i = 0; i < 9; ++i) in << ",0.25";
    in << '\n';
    const FingerprintDataset d = read_dataset(in);
    CHECK(d.aps == 379);
    CHECK(d.imu_dims == 9);
    CHECK(d.size() == 1);
    CHECK(d.samples[0].mask[0] == 0);
}

}  // TEST_SUITE
