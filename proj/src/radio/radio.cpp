#include "metagraphloc/radio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/random.hpp"

namespace mgl::radio {

namespace {

constexpr std::uint64_t kPathStream = 0xfffffffffffff001ULL;
constexpr std::uint64_t kFieldStream = 0xfffffffffffff002ULL;

double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
    while (a < -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

std::vector<Point2> grid_positions(double width, double height, std::size_t n) {
    const double aspect = width / height;
    auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n) * aspect)));
    cols = std::max<std::size_t>(cols, 1);
    const std::size_t rows = (n + cols - 1) / cols;
    const double dx = width / static_cast<double>(cols);
    const double dy = height / static_cast<double>(rows);
    std::vector<Point2> out;
    out.reserve(n);
    for (std::size_t r = 0; r < rows && out.size() < n; ++r)
        for (std::size_t c = 0; c < cols && out.size() < n; ++c)
            out.push_back({(static_cast<double>(c) + 0.5) * dx, (static_cast<double>(r) + 0.5) * dy});
    return out;
}

// Random-waypoint walk with a fixed step length.
std::vector<Point2> trajectory_positions(double width, double height, std::size_t n,
                                         double step, std::uint64_t seed) {
    Rng rng = make_rng(seed, kPathStream);
    std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);
    std::vector<Point2> out;
    out.reserve(n);
    Point2 here{ux(rng), uy(rng)};
    Point2 target{ux(rng), uy(rng)};
    out.push_back(here);
    while (out.size() < n) {
        double remaining = distance(here, target);
        while (remaining < step) {
            target = {ux(rng), uy(rng)};
            remaining = distance(here, target);
        }
        const double t = step / remaining;
        here = {here.x + t * (target.x - here.x), here.y + t * (target.y - here.y)};
        out.push_back(here);
    }
    return out;
}

}  // namespace

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double distance(Point3 a, Point3 b) { return std::hypot(a.x - b.x, a.y - b.y, a.z - b.z); }

void ChannelParams::validate() const {
    if (!(d0 > 0.0)) throw DomainError("channel: d0 must be positive");
    if (!(sigma >= 0.0)) throw DomainError("channel: sigma must be non-negative");
    if (!(beta > 0.0)) throw DomainError("channel: beta must be positive");
}

PathLoss path_loss(const ChannelParams& channel, double distance_m, double shadowing_db) {
    PathLoss out;
    if (!(distance_m > 0.0)) {
        distance_m = channel.d0 / 100.0;
        out.clamped = true;
    }
    out.loss_db = channel.pl0 + 10.0 * channel.beta * std::log10(distance_m / channel.d0) +
                  shadowing_db;
    return out;
}

double received_power(const ChannelParams& channel, double loss_db) { return channel.p_tx - loss_db; }

double mean_rssi(const ChannelParams& channel, double distance_m) {
    return received_power(channel, path_loss(channel, distance_m, 0.0).loss_db);
}

void RadioEnvironment::validate() const {
    channel.validate();
    if (access_points.size() < 2) throw DomainError("environment needs at least 2 access points");
    if (!(detection_range > 0.0)) throw DomainError("detection_range must be positive");
    if (!(width > 0.0 && height > 0.0)) throw DomainError("floor extent must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must lie in [0, 1)");
    if (!(floor_height > 0.0)) throw DomainError("floor_height must be positive");
    for (const Point3& p : access_points) {
        if (p.x < 0.0 || p.x > width || p.y < 0.0 || p.y > height)
            throw DomainError("access point outside the floor extent");
    }
}

RadioEnvironment make_environment(std::size_t aps, double width, double height,
                                  const ChannelParams& channel, std::uint64_t seed, int floors) {
    if (floors < 1) throw DomainError("make_environment: need at least one floor");
    RadioEnvironment env;
    env.width = width;
    env.height = height;
    env.channel = channel;
    env.seed = seed;
    Rng rng = make_rng(seed, 0);
    std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);
    env.access_points.reserve(aps);
    for (std::size_t i = 0; i < aps; ++i) {
        const double x = ux(rng), y = uy(rng);
        env.access_points.push_back({x, y, static_cast<double>(i % static_cast<std::size_t>(floors)) * env.floor_height});
    }
    return env;
}

void FingerprintDataset::validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Fingerprint& fp = samples[i];
        if (fp.rssi.size() != aps || fp.mask.size() != aps || fp.imu.size() != imu_dims) {
            throw DimensionError("sample " + std::to_string(i) + " does not match M=" +
                                 std::to_string(aps) + ", D=" + std::to_string(imu_dims));
        }
        for (std::size_t m = 0; m < aps; ++m) {
            if ((fp.mask[m] == 0) != (fp.rssi[m] == rssi_floor)) {
                throw DimensionError("sample " + std::to_string(i) +
                                     ": mask disagrees with the RSSI placeholder at AP " +
                                     std::to_string(m));
            }
        }
    }
}

FingerprintDataset subset(const FingerprintDataset& data, const std::vector<std::size_t>& indices) {
    FingerprintDataset out = data;
    out.samples.clear();
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(data.samples.at(i));
    return out;
}

std::string to_string(Layout layout) { return layout == Layout::grid ? "grid" : "trajectory"; }

Layout parse_layout(const std::string& name) {
    if (name == "grid") return Layout::grid;
    if (name == "trajectory") return Layout::trajectory;
    throw ConfigError("unknown layout '" + name + "'");
}

std::vector<double> magnetic_field(const RadioEnvironment& env, Point2 at) {
    // Three slow plane waves per component (under one cycle across the floor),
    // fixed by the environment seed.
    Rng rng = make_rng(derive_seed(env.seed, static_cast<std::uint64_t>(env.floor)), kFieldStream);
    std::uniform_real_distribution<double> freq(0.2, 0.6), phase(0.0, 2.0 * std::numbers::pi);
    std::vector<double> field(3, 0.0);
    for (double& component : field) {
        for (int wave = 0; wave < 3; ++wave) {
            const double fx = freq(rng), fy = freq(rng), ph = phase(rng);
            component += std::sin(2.0 * std::numbers::pi * (fx * at.x / env.width + fy * at.y / env.height) + ph) /
                         std::sqrt(3.0);
        }
    }
    return field;
}

FingerprintDataset generate_dataset(const RadioEnvironment& env, std::size_t n_points,
                                    const GenerationOptions& options, std::uint64_t seed) {
    env.validate();
    if (n_points == 0) throw DomainError("generate_dataset: n_points must be >= 1");
    if (options.layout == Layout::trajectory && !(options.step_length > 0.0))
        throw DomainError("generate_dataset: step_length must be positive");

    const std::vector<Point2> positions =
        options.layout == Layout::grid
            ? grid_positions(env.width, env.height, n_points)
            : trajectory_positions(env.width, env.height, n_points, options.step_length, seed);

    FingerprintDataset out;
    out.aps = env.ap_count();
    out.imu_dims = options.imu.dims;
    out.floor = env.floor;
    out.width = env.width;
    out.height = env.height;
    out.rssi_floor = env.rssi_floor;
    out.samples.reserve(n_points);

    double prev_heading = 0.0;
    for (std::size_t i = 0; i < n_points; ++i) {
        Rng rng = make_rng(seed, i + 1);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);

        const Point2 here = positions[i];
        Fingerprint fp;
        fp.position = {here.x, here.y, static_cast<double>(env.floor) * env.floor_height};
        fp.rssi.resize(out.aps);
        fp.mask.resize(out.aps);
        for (std::size_t m = 0; m < out.aps; ++m) {
            const double d = distance(Point3{here.x, here.y, env.floor_z()}, env.access_points[m]);
            const double shadow = env.channel.sigma * gauss(rng);
            const bool dropped = unit(rng) < env.dropout;
            const double rssi = received_power(env.channel, path_loss(env.channel, d, shadow).loss_db);
            const bool detected = d <= env.detection_range && !dropped && rssi > env.rssi_floor;
            fp.rssi[m] = detected ? rssi : env.rssi_floor;
            fp.mask[m] = detected ? 1 : 0;
        }

        double dx = 0.0, dy = 0.0, heading = 0.0, turn = 0.0;
        if (options.layout == Layout::trajectory && i > 0) {
            dx = here.x - positions[i - 1].x;
            dy = here.y - positions[i - 1].y;
            heading = std::atan2(dy, dx);
            turn = i > 1 ? wrap_angle(heading - prev_heading) : 0.0;
        }
        prev_heading = heading;
        const std::vector<double> field = magnetic_field(env, here);
        const double base[9] = {dx,
                                dy,
                                1.0,
                                std::cos(heading),
                                std::sin(heading),
                                turn,
                                options.imu.field_strength * field[0],
                                options.imu.field_strength * field[1],
                                options.imu.field_strength * field[2]};
        fp.imu.resize(out.imu_dims);
        for (std::size_t k = 0; k < out.imu_dims; ++k) {
            const double clean = k < 9 ? base[k] : 0.0;
            fp.imu[k] = clean + options.imu.noise * gauss(rng);
        }
        out.samples.push_back(std::move(fp));
    }
    return out;
}

double rssi_likelihood(const ChannelParams& channel, double rssi, Point3 device, Point3 ap) {
    if (!(channel.sigma > 0.0)) throw DomainError("rssi_likelihood: sigma must be positive");
    const double residual = mean_rssi(channel, distance(device, ap)) - rssi;
    return std::exp(-residual * residual / (2.0 * channel.sigma * channel.sigma)) /
           (std::sqrt(2.0 * std::numbers::pi) * channel.sigma);
}

Point2 ml_baseline_locate(const RadioEnvironment& env, const Fingerprint& fingerprint,
                          double grid_step) {
    if (!(grid_step > 0.0)) throw DomainError("ml_baseline_locate: grid_step must be positive");
    if (fingerprint.rssi.size() != env.ap_count() || fingerprint.mask.size() != env.ap_count())
        throw DimensionError("ml_baseline_locate: fingerprint does not match the environment");
    std::vector<std::size_t> seen;
    for (std::size_t m = 0; m < env.ap_count(); ++m)
        if (fingerprint.mask[m]) seen.push_back(m);
    if (seen.empty()) throw DomainError("ml_baseline_locate: no access point detected");

    // The arg-max of the Gaussian log-likelihood does not depend on sigma, so a
    // noiseless channel falls back to unit variance.
    const double sigma = env.channel.sigma > 0.0 ? env.channel.sigma : 1.0;
    const double log_norm = -std::log(std::sqrt(2.0 * std::numbers::pi) * sigma);
    const auto nx = static_cast<std::size_t>(std::floor(env.width / grid_step + 1e-9));
    const auto ny = static_cast<std::size_t>(std::floor(env.height / grid_step + 1e-9));

    Point2 best{};
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t iy = 0; iy <= ny; ++iy) {
        for (std::size_t ix = 0; ix <= nx; ++ix) {
            const Point2 cand{static_cast<double>(ix) * grid_step, static_cast<double>(iy) * grid_step};
            const Point3 at{cand.x, cand.y, env.floor_z()};
            double score = 0.0;
            for (std::size_t m : seen) {
                const double r =
                    mean_rssi(env.channel, distance(at, env.access_points[m])) - fingerprint.rssi[m];
                score += log_norm - r * r / (2.0 * sigma * sigma);
            }
            if (score > best_score) {
                best_score = score;
                best = cand;
            }
        }
    }
    return best;
}

}  // namespace mgl::radio
