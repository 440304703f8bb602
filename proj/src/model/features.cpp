#include "metagraphloc/features.hpp"

#include <algorithm>
#include <cmath>

#include "metagraphloc/errors.hpp"

namespace mgl::model {

NormalizationParams fit_normalization(const radio::FingerprintDataset& data, bool use_imu) {
    if (data.samples.empty()) throw DomainError("fit_normalization: empty dataset");
    NormalizationParams norm;
    norm.rssi_min = data.rssi_floor;
    norm.rssi_max = data.rssi_floor;
    for (const auto& fp : data.samples)
        for (std::size_t m = 0; m < data.aps; ++m)
            if (fp.mask[m]) norm.rssi_max = std::max(norm.rssi_max, fp.rssi[m]);
    if (norm.rssi_max <= norm.rssi_min) norm.rssi_max = norm.rssi_min + 1.0;

    norm.use_imu = use_imu;
    const std::size_t d = data.imu_dims;
    norm.imu_mean.assign(d, 0.0);
    const double n = static_cast<double>(data.size());
    double total_var = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        double mu = 0.0;
        for (const auto& fp : data.samples) mu += fp.imu[k];
        mu /= n;
        double var = 0.0;
        for (const auto& fp : data.samples) var += (fp.imu[k] - mu) * (fp.imu[k] - mu);
        norm.imu_mean[k] = mu;
        total_var += var / n;
    }
    const double scale = std::sqrt(total_var);
    norm.imu_scale = scale > 1e-12 ? scale : 1.0;
    return norm;
}

double normalize_rssi(const NormalizationParams& norm, double rssi) {
    return std::clamp((rssi - norm.rssi_min) / (norm.rssi_max - norm.rssi_min), 0.0, 1.0);
}

namespace {

void check_dims(const radio::Fingerprint& fp, const NormalizationParams& norm) {
    if (norm.use_imu && fp.imu.size() != norm.imu_mean.size()) {
        throw DimensionError("fingerprint has " + std::to_string(fp.imu.size()) +
                             " IMU values, normalization expects " +
                             std::to_string(norm.imu_mean.size()));
    }
}

}  // namespace

Matrix build_node_features(const radio::Fingerprint& fp, const NormalizationParams& norm) {
    check_dims(fp, norm);
    const std::size_t m = fp.rssi.size(), f = norm.node_channels();
    Matrix x(m, f);
    for (std::size_t i = 0; i < m; ++i) {
        x(i, 0) = normalize_rssi(norm, fp.rssi[i]);
        for (std::size_t k = 0; k < norm.imu_dims(); ++k)
            x(i, 1 + k) = (fp.imu[k] - norm.imu_mean[k]) / norm.imu_scale;
    }
    return x;
}

std::vector<double> build_flat_features(const radio::Fingerprint& fp, const NormalizationParams& norm) {
    check_dims(fp, norm);
    std::vector<double> out;
    out.reserve(fp.rssi.size() + norm.imu_dims());
    for (double v : fp.rssi) out.push_back(normalize_rssi(norm, v));
    for (std::size_t k = 0; k < norm.imu_dims(); ++k)
        out.push_back((fp.imu[k] - norm.imu_mean[k]) / norm.imu_scale);
    return out;
}

void SampleSet::validate() const {
    if (inputs.cols() != width())
        throw DimensionError("sample set: inputs are " + inputs.shape_string() + " but nodes*channels=" +
                             std::to_string(width()));
    if (targets.rows() != inputs.rows() || targets.cols() != 2)
        throw DimensionError("sample set: targets must be " + std::to_string(inputs.rows()) + "x2");
}

namespace {

SampleSet allocate(const radio::FingerprintDataset& data, std::size_t nodes, std::size_t channels) {
    SampleSet set;
    set.nodes = nodes;
    set.channels = channels;
    set.inputs = Matrix(data.size(), nodes * channels);
    set.targets = Matrix(data.size(), 2);
    for (std::size_t r = 0; r < data.size(); ++r) {
        set.targets(r, 0) = data.samples[r].position.x;
        set.targets(r, 1) = data.samples[r].position.y;
    }
    return set;
}

}  // namespace

SampleSet encode_graph_inputs(const radio::FingerprintDataset& data, const NormalizationParams& norm) {
    SampleSet set = allocate(data, data.aps, norm.node_channels());
    for (std::size_t r = 0; r < data.size(); ++r) {
        const Matrix x = build_node_features(data.samples[r], norm);
        std::copy(x.values().begin(), x.values().end(), set.inputs.row(r).begin());
    }
    return set;
}

SampleSet encode_flat_inputs(const radio::FingerprintDataset& data, const NormalizationParams& norm) {
    SampleSet set = allocate(data, data.aps + norm.imu_dims(), 1);
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto v = build_flat_features(data.samples[r], norm);
        std::copy(v.begin(), v.end(), set.inputs.row(r).begin());
    }
    return set;
}

SampleSet take_rows(const SampleSet& set, const std::vector<std::size_t>& rows) {
    SampleSet out;
    out.nodes = set.nodes;
    out.channels = set.channels;
    out.inputs = Matrix(rows.size(), set.inputs.cols());
    out.targets = Matrix(rows.size(), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = set.inputs.row(rows[i]);
        std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
        out.targets(i, 0) = set.targets(rows[i], 0);
        out.targets(i, 1) = set.targets(rows[i], 1);
    }
    return out;
}

}  // namespace mgl::model
