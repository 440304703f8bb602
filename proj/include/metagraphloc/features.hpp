#pragma once

#include <cstddef>
#include <vector>

#include "metagraphloc/matrix.hpp"
#include "metagraphloc/radio.hpp"

namespace mgl::model {

/// Input scaling shared by training and inference.
///
/// RSSI is min-max scaled with the placeholder floor mapping to 0 and the
/// strongest training reading to 1 (clamped to [0, 1]). IMU channels are
/// centred per channel and share one scale, the root of the summed channel
/// variances, so a noise-only channel is not blown up to unit variance.
/// With `use_imu` false the IMU channels are dropped entirely.
struct NormalizationParams {
    double rssi_min = -110.0;
    double rssi_max = -30.0;
    std::vector<double> imu_mean;
    double imu_scale = 1.0;
    bool use_imu = true;

    std::size_t imu_dims() const noexcept { return use_imu ? imu_mean.size() : 0; }
    std::size_t node_channels() const noexcept { return 1 + imu_dims(); }

    friend bool operator==(const NormalizationParams&, const NormalizationParams&) = default;
};

NormalizationParams fit_normalization(const radio::FingerprintDataset& data, bool use_imu);

double normalize_rssi(const NormalizationParams& norm, double rssi);

/// M x (1 + d) node features: normalized RSSI, then the normalized IMU vector
/// repeated on every node.
Matrix build_node_features(const radio::Fingerprint& fp, const NormalizationParams& norm);

/// Flat [rssi || imu] vector, length M + d.
std::vector<double> build_flat_features(const radio::Fingerprint& fp, const NormalizationParams& norm);

/// Model-ready samples. Row r of `inputs` is sample r flattened as `nodes`
/// consecutive groups of `channels` values; `targets` holds (x, y) in metres.
struct SampleSet {
    Matrix inputs;
    Matrix targets;
    std::size_t nodes = 0;
    std::size_t channels = 1;

    std::size_t size() const noexcept { return inputs.rows(); }
    std::size_t width() const noexcept { return nodes * channels; }
    void validate() const;
};

/// Per-AP graph inputs (nodes = M, channels = 1 + d).
SampleSet encode_graph_inputs(const radio::FingerprintDataset& data, const NormalizationParams& norm);

/// Flat inputs for the DNN baseline and for PCA (nodes = M + d, channels = 1).
SampleSet encode_flat_inputs(const radio::FingerprintDataset& data, const NormalizationParams& norm);

SampleSet take_rows(const SampleSet& set, const std::vector<std::size_t>& rows);

}  // namespace mgl::model
