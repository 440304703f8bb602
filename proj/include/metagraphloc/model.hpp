#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metagraphloc/autodiff.hpp"
#include "metagraphloc/features.hpp"
#include "metagraphloc/graph.hpp"
#include "metagraphloc/matrix.hpp"
#include "metagraphloc/optimizer.hpp"

namespace mgl::model {

enum class Architecture { gcn, dec, dnn };
enum class Aggregation { max, mean, add };
/// How EdgeConv combines a neighbour with the centre node:
/// difference: (h_j - h_i) Omega + h_i Phi
/// concat:     [h_j || h_i] Omega + h_i Phi, Omega stored as two F x C blocks
enum class EdgeForm { difference, concat };

std::string to_string(Architecture a);
std::string to_string(Aggregation a);
std::string to_string(EdgeForm f);
Architecture parse_architecture(const std::string& name);
Aggregation parse_aggregation(const std::string& name);
EdgeForm parse_edge_form(const std::string& name);

struct ModelSpec {
    Architecture arch = Architecture::dec;
    std::size_t nodes = 0;     ///< input nodes (APs, or virtual nodes after PCA)
    std::size_t channels = 1;  ///< input features per node
    std::vector<std::size_t> graph_widths{128, 128};
    std::vector<std::size_t> fc_widths{128};  ///< hidden FC widths; a linear 2-wide output follows
    std::size_t k_neigh = 15;
    Aggregation aggregation = Aggregation::max;
    EdgeForm edge_form = EdgeForm::difference;
    double leaky_slope = 0.01;

    std::size_t input_width() const noexcept { return nodes * channels; }
    std::size_t flattened_width() const noexcept;
    void validate() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

using ParamList = std::vector<Matrix>;

/// Maps metre coordinates to a centred, unit-scale frame for the loss.
struct TargetScaler {
    double cx = 0.0;
    double cy = 0.0;
    double scale = 1.0;

    Matrix normalize(const Matrix& targets) const;
    Matrix denormalize(const Matrix& outputs) const;

    friend bool operator==(const TargetScaler&, const TargetScaler&) = default;
};

TargetScaler fit_target_scaler(const Matrix& targets);

struct Model {
    ModelSpec spec;
    ParamList params;
    Matrix propagation;  ///< normalized adjacency, GCN only
    TargetScaler scaler;

    friend bool operator==(const Model&, const Model&) = default;
};

/// Glorot-uniform weights, zero biases. Layout: graph layers in order (GCN: W;
/// DEC difference: Omega, Phi; DEC concat: Omega_j, Omega_i, Phi), then (W, b)
/// per FC layer.
ParamList init_params(const ModelSpec& spec, std::uint64_t seed);
Model make_model(const ModelSpec& spec, std::uint64_t seed, Matrix propagation = {});
std::size_t parameter_count(const ParamList& params);
std::size_t graph_param_count(const ModelSpec& spec);

struct EdgeConvOptions {
    std::size_t k = 15;
    Aggregation aggregation = Aggregation::max;
    EdgeForm form = EdgeForm::difference;
    double slope = 0.01;
};

// Tape-level layers. `h` stacks B samples of `nodes` rows each.

ad::Var gcn_layer(const Matrix& propagation, ad::Var h, ad::Var weight);
/// Fused EdgeConv aggregation: row i of the result aggregates
/// LeakyReLU(neighbour_part[j] + centre_part[i]) over the k rows j listed for i
/// in `neighbour_rows` (i*k .. i*k+k-1). Max ties go to the first listed neighbour;
/// add and mean accumulate in ascending row order.
ad::Var edge_aggregate(ad::Var neighbour_part, ad::Var centre_part,
                       std::span<const std::size_t> neighbour_rows, std::size_t k,
                       Aggregation aggregation, double slope);
/// Neighbourhoods are rebuilt from the current values of `h`, per sample.
/// `weights` is {Omega, Phi} or {Omega_j, Omega_i, Phi} per EdgeConvOptions::form.
ad::Var edgeconv_layer(ad::Var h, std::size_t nodes, std::span<const ad::Var> weights,
                       const EdgeConvOptions& options);
/// `fc` alternates W, b. Hidden layers use ReLU, the last layer is linear.
ad::Var fc_layers(ad::Var flat, std::span<const ad::Var> fc);
/// Full network on a B x input_width batch; returns B x 2 in scaled target units.
ad::Var forward(const ModelSpec& spec, const Matrix& propagation, std::span<const ad::Var> params,
                ad::Var inputs);

// Single-sample value-level entry points.

/// H = ReLU(P H W) per layer for the given weight list.
Matrix gcn_forward(const Matrix& x, const graph::NormalizedAdjacency& adjacency,
                   const ParamList& weights);
/// `weights` holds 2 (difference) or 3 (concat) matrices per layer.
Matrix edgeconv_forward(const Matrix& x, const ParamList& weights, const EdgeConvOptions& options);
/// Concatenation h_i || h_j.
std::vector<double> edge_embedding(std::span<const double> h_i, std::span<const double> h_j);
/// Flattens `h` row-major and applies the FC layers (W, b pairs).
Matrix fc_head(const Matrix& h, const ParamList& fc);

/// Predictions in metres, n x 2.
Matrix predict(const Model& model, const SampleSet& data);

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch = 8;
    OptimizerSettings optimizer{};
    std::uint64_t seed = 42;
    bool normalize_targets = true;
};

struct TrainResult {
    Model model;
    std::vector<double> loss_history;  ///< mean batch loss per epoch
};

/// Mean squared error over `rows` (scaled target units); fills `grads` when non-null.
double batch_loss(const Model& model, const ParamList& params, const SampleSet& data,
                  std::span<const std::size_t> rows, ParamList* grads = nullptr);

/// Mini-batch training with a seeded shuffle per epoch. Throws DivergenceError on a
/// non-finite loss.
TrainResult train(Model model, const SampleSet& data, const TrainConfig& config);

/// Flat FC network with `hidden_layers` equal-width layers whose total parameter
/// count is as close as possible to `budget`.
ModelSpec matched_dnn_spec(std::size_t flat_inputs, std::size_t hidden_layers, std::size_t budget);

}  // namespace mgl::model
