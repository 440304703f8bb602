#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mgl::radio {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Point3&, const Point3&) = default;
};

double distance(Point2 a, Point2 b);
double distance(Point3 a, Point3 b);

/// Log-distance path loss channel with log-normal shadowing.
struct ChannelParams {
    double p_tx = 20.0;   ///< transmit power, dBm
    double pl0 = 40.0;    ///< path loss at the reference distance, dB
    double beta = 3.0;    ///< path loss exponent
    double d0 = 1.0;      ///< reference distance, m
    double sigma = 3.0;   ///< shadowing standard deviation, dB

    void validate() const;
};

struct PathLoss {
    double loss_db = 0.0;
    /// Distance was <= 0 and was clamped to d0/100.
    bool clamped = false;
};

/// PL = PL0 + 10 beta log10(d / d0) + shadowing.
PathLoss path_loss(const ChannelParams& channel, double distance_m, double shadowing_db);

/// Received power P_tx - PL.
double received_power(const ChannelParams& channel, double loss_db);

/// Deterministic (shadowing-free) RSSI prediction at a given distance.
double mean_rssi(const ChannelParams& channel, double distance_m);

struct RadioEnvironment {
    std::vector<Point3> access_points;  ///< z = floor index * floor_height
    double width = 40.0;
    double height = 30.0;
    ChannelParams channel;
    double detection_range = 30.0;
    double rssi_floor = -110.0;  ///< placeholder written for undetected APs
    double dropout = 0.0;        ///< per-AP probability that a detectable AP is missed
    int floor = 0;               ///< floor that generate_dataset samples
    double floor_height = 4.0;
    std::uint64_t seed = 0;      ///< drives environment-fixed structure such as the magnetic field

    std::size_t ap_count() const noexcept { return access_points.size(); }
    double floor_z() const noexcept { return static_cast<double>(floor) * floor_height; }
    void validate() const;
};

/// Places `aps` access points uniformly at random inside the extent, dealt
/// round-robin over `floors` floors. Every floor hears every AP.
RadioEnvironment make_environment(std::size_t aps, double width, double height,
                                  const ChannelParams& channel, std::uint64_t seed, int floors = 1);

struct Fingerprint {
    Point3 position;
    std::vector<double> rssi;
    std::vector<double> imu;
    std::vector<std::uint8_t> mask;  ///< 1 where the AP was detected

    friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

struct FingerprintDataset {
    std::size_t aps = 0;
    std::size_t imu_dims = 0;
    int floor = 0;
    double width = 0.0;
    double height = 0.0;
    double rssi_floor = -110.0;
    std::vector<Fingerprint> samples;

    std::size_t size() const noexcept { return samples.size(); }
    /// Throws DimensionError on inconsistent vector lengths or a mask/placeholder mismatch.
    void validate() const;

    friend bool operator==(const FingerprintDataset&, const FingerprintDataset&) = default;
};

/// Returns a dataset holding the listed samples with the same metadata.
FingerprintDataset subset(const FingerprintDataset& data, const std::vector<std::size_t>& indices);

enum class Layout { grid, trajectory };

std::string to_string(Layout layout);
Layout parse_layout(const std::string& name);

/// Synthetic 9-channel IMU: accelerometer (step displacement x/y, vertical),
/// gyroscope (heading cos/sin, turn rate) and magnetometer (a smooth
/// environment-specific field over the floor). Each channel carries Gaussian noise.
struct ImuModel {
    std::size_t dims = 9;
    double noise = 0.05;
    double field_strength = 5.0;
};

/// Fixed magnetic anomaly field of the environment's current floor, three components.
std::vector<double> magnetic_field(const RadioEnvironment& env, Point2 at);

struct GenerationOptions {
    Layout layout = Layout::trajectory;
    double step_length = 1.0;  ///< trajectory step, m
    ImuModel imu;
};

/// Draws `n_points` labelled fingerprints. A pure function of its arguments.
FingerprintDataset generate_dataset(const RadioEnvironment& env, std::size_t n_points,
                                    const GenerationOptions& options, std::uint64_t seed);

/// Gaussian density of observing `rssi` at `device` from the AP at `ap`.
double rssi_likelihood(const ChannelParams& channel, double rssi, Point3 device, Point3 ap);

/// Grid search over the current floor for the position maximising the summed
/// log-likelihood over detected APs. Throws DomainError if no AP is detected.
Point2 ml_baseline_locate(const RadioEnvironment& env, const Fingerprint& fingerprint,
                          double grid_step);

}  // namespace mgl::radio
