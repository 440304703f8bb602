#include "metagraphloc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/random.hpp"

namespace mgl::model {

std::string to_string(Architecture a) {
    switch (a) {
        case Architecture::gcn: return "gcn";
        case Architecture::dec: return "dec";
        case Architecture::dnn: return "dnn";
    }
    return "?";
}

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::max: return "max";
        case Aggregation::mean: return "mean";
        case Aggregation::add: return "add";
    }
    return "?";
}

std::string to_string(EdgeForm f) { return f == EdgeForm::difference ? "difference" : "concat"; }

Architecture parse_architecture(const std::string& name) {
    if (name == "gcn") return Architecture::gcn;
    if (name == "dec") return Architecture::dec;
    if (name == "dnn") return Architecture::dnn;
    throw ConfigError("unknown architecture '" + name + "'");
}

Aggregation parse_aggregation(const std::string& name) {
    if (name == "max") return Aggregation::max;
    if (name == "mean") return Aggregation::mean;
    if (name == "add") return Aggregation::add;
    throw ConfigError("unknown aggregation '" + name + "'");
}

EdgeForm parse_edge_form(const std::string& name) {
    if (name == "difference") return EdgeForm::difference;
    if (name == "concat") return EdgeForm::concat;
    throw ConfigError("unknown edge form '" + name + "'");
}

std::size_t ModelSpec::flattened_width() const noexcept {
    if (arch == Architecture::dnn || graph_widths.empty()) return input_width();
    return nodes * graph_widths.back();
}

void ModelSpec::validate() const {
    if (nodes == 0 || channels == 0) throw ConfigError("model: input geometry must be non-empty");
    if (arch != Architecture::dnn && graph_widths.empty())
        throw ConfigError("model: graph architectures need at least one graph layer");
    if (arch == Architecture::dec && nodes < 2) throw ConfigError("model: EdgeConv needs >= 2 nodes");
    if (arch == Architecture::dec && k_neigh == 0) throw ConfigError("model: k_neigh must be >= 1");
    for (std::size_t w : graph_widths)
        if (w == 0) throw ConfigError("model: zero-width graph layer");
    for (std::size_t w : fc_widths)
        if (w == 0) throw ConfigError("model: zero-width FC layer");
}

Matrix TargetScaler::normalize(const Matrix& targets) const {
    Matrix out(targets.rows(), targets.cols());
    for (std::size_t r = 0; r < targets.rows(); ++r) {
        out(r, 0) = (targets(r, 0) - cx) / scale;
        out(r, 1) = (targets(r, 1) - cy) / scale;
    }
    return out;
}

Matrix TargetScaler::denormalize(const Matrix& outputs) const {
    Matrix out(outputs.rows(), outputs.cols());
    for (std::size_t r = 0; r < outputs.rows(); ++r) {
        out(r, 0) = outputs(r, 0) * scale + cx;
        out(r, 1) = outputs(r, 1) * scale + cy;
    }
    return out;
}

TargetScaler fit_target_scaler(const Matrix& targets) {
    TargetScaler s;
    const std::size_t n = targets.rows();
    if (n == 0) return s;
    for (std::size_t r = 0; r < n; ++r) {
        s.cx += targets(r, 0);
        s.cy += targets(r, 1);
    }
    s.cx /= static_cast<double>(n);
    s.cy /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        var += (targets(r, 0) - s.cx) * (targets(r, 0) - s.cx);
        var += (targets(r, 1) - s.cy) * (targets(r, 1) - s.cy);
    }
    const double sd = std::sqrt(var / (2.0 * static_cast<double>(n)));
    s.scale = sd > 1e-12 ? sd : 1.0;
    return s;
}

namespace {

std::size_t weights_per_graph_layer(const ModelSpec& spec) {
    switch (spec.arch) {
        case Architecture::gcn: return 1;
        case Architecture::dec: return spec.edge_form == EdgeForm::difference ? 2 : 3;
        case Architecture::dnn: return 0;
    }
    return 0;
}

std::size_t graph_layer_count(const ModelSpec& spec) {
    return spec.arch == Architecture::dnn ? 0 : spec.graph_widths.size();
}

Matrix glorot(std::size_t in, std::size_t out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(in, out);
    for (double& v : w.values()) v = u(rng);
    return w;
}

std::vector<ad::Var> as_parameters(ad::Tape& tape, const ParamList& params) {
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const Matrix& p : params) vars.push_back(tape.parameter(p));
    return vars;
}

}  // namespace

ParamList init_params(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = make_rng(seed, 0x1417);
    ParamList params;
    std::size_t in = spec.channels;
    for (std::size_t l = 0; l < graph_layer_count(spec); ++l) {
        const std::size_t out = spec.graph_widths[l];
        for (std::size_t w = 0; w < weights_per_graph_layer(spec); ++w) params.push_back(glorot(in, out, rng));
        in = out;
    }
    in = spec.flattened_width();
    for (std::size_t w : spec.fc_widths) {
        params.push_back(glorot(in, w, rng));
        params.emplace_back(1, w);
        in = w;
    }
    params.push_back(glorot(in, 2, rng));
    params.emplace_back(1, 2);
    return params;
}

Model make_model(const ModelSpec& spec, std::uint64_t seed, Matrix propagation) {
    if (spec.arch == Architecture::gcn &&
        (propagation.rows() != spec.nodes || propagation.cols() != spec.nodes)) {
        throw ConfigError("model: GCN needs a " + std::to_string(spec.nodes) + "x" +
                          std::to_string(spec.nodes) + " normalized adjacency");
    }
    return Model{spec, init_params(spec, seed), std::move(propagation), {}};
}

std::size_t parameter_count(const ParamList& params) {
    std::size_t n = 0;
    for (const Matrix& p : params) n += p.size();
    return n;
}

std::size_t graph_param_count(const ModelSpec& spec) {
    std::size_t n = 0, in = spec.channels;
    for (std::size_t l = 0; l < graph_layer_count(spec); ++l) {
        n += weights_per_graph_layer(spec) * in * spec.graph_widths[l];
        in = spec.graph_widths[l];
    }
    return n;
}

ad::Var edge_aggregate(ad::Var neighbour_part, ad::Var centre_part,
                       std::span<const std::size_t> neighbour_rows, std::size_t k,
                       Aggregation aggregation, double slope) {
    const Matrix& p = neighbour_part.value();
    const Matrix& r = centre_part.value();
    if (!p.same_shape(r)) throw DimensionError("edge_aggregate: operand shapes differ");
    if (k == 0 || neighbour_rows.size() != r.rows() * k)
        throw DimensionError("edge_aggregate: expected k neighbour rows per node");
    const std::size_t rows = r.rows(), cols = r.cols();
    for (std::size_t j : neighbour_rows)
        if (j >= rows) throw DimensionError("edge_aggregate: neighbour index out of range");
    // Sums run in index order so the result does not depend on how neighbours are listed.
    std::vector<std::size_t> listed(neighbour_rows.begin(), neighbour_rows.end());
    if (aggregation != Aggregation::max)
        for (std::size_t i = 0; i < rows; ++i) std::sort(listed.begin() + i * k, listed.begin() + (i + 1) * k);

    Matrix out(rows, cols);
    std::vector<std::uint32_t> argmax;
    if (aggregation == Aggregation::max) argmax.resize(rows * cols);
    const double norm = aggregation == Aggregation::mean ? 1.0 / static_cast<double>(k) : 1.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t* nb = listed.data() + i * k;
        auto dst = out.row(i);
        const auto centre = r.row(i);
        for (std::size_t c = 0; c < cols; ++c) {
            if (aggregation == Aggregation::max) {
                double best = 0.0;
                std::uint32_t best_t = 0;
                for (std::size_t t = 0; t < k; ++t) {
                    const double v = p(nb[t], c) + centre[c];
                    const double a = v >= 0.0 ? v : slope * v;
                    if (t == 0 || a > best) {
                        best = a;
                        best_t = static_cast<std::uint32_t>(t);
                    }
                }
                dst[c] = best;
                argmax[i * cols + c] = best_t;
            } else {
                double acc = 0.0;
                for (std::size_t t = 0; t < k; ++t) {
                    const double v = p(nb[t], c) + centre[c];
                    acc += v >= 0.0 ? v : slope * v;
                }
                dst[c] = acc * norm;
            }
        }
    }

    const std::size_t ip = neighbour_part.id(), ir = centre_part.id();
    return neighbour_part.tape().record(
        std::move(out), {ip, ir},
        [ip, ir, k, aggregation, slope, norm, argmax = std::move(argmax),
         nbrs = std::move(listed)](
            ad::Tape& tp, std::size_t self) {
            const Matrix& g = tp.adjoint(self);
            const Matrix& pv = tp.value(ip);
            const Matrix& rv = tp.value(ir);
            const std::size_t rows = g.rows(), cols = g.cols();
            Matrix dp(rows, cols), dr(rows, cols);
            for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t* nb = nbrs.data() + i * k;
                for (std::size_t c = 0; c < cols; ++c) {
                    const double gi = g(i, c);
                    if (aggregation == Aggregation::max) {
                        const std::size_t j = nb[argmax[i * cols + c]];
                        const double v = pv(j, c) + rv(i, c);
                        const double d = v >= 0.0 ? gi : slope * gi;
                        dp(j, c) += d;
                        dr(i, c) += d;
                        continue;
                    }
                    for (std::size_t t = 0; t < k; ++t) {
                        const double v = pv(nb[t], c) + rv(i, c);
                        const double d = (v >= 0.0 ? gi : slope * gi) * norm;
                        dp(nb[t], c) += d;
                        dr(i, c) += d;
                    }
                }
            }
            tp.accumulate(ip, dp);
            tp.accumulate(ir, dr);
        });
}

ad::Var gcn_layer(const Matrix& propagation, ad::Var h, ad::Var weight) {
    return ad::relu(ad::propagate_blocks(propagation, ad::matmul(h, weight)));
}

ad::Var edgeconv_layer(ad::Var h, std::size_t nodes, std::span<const ad::Var> weights,
                       const EdgeConvOptions& options) {
    const std::size_t expected = options.form == EdgeForm::difference ? 2 : 3;
    if (weights.size() != expected)
        throw DimensionError("edgeconv_layer: expected " + std::to_string(expected) + " weight matrices");
    if (nodes < 2) throw DomainError("edgeconv_layer: need at least 2 nodes");
    const Matrix& hv = h.value();
    if (hv.rows() % nodes != 0) throw DimensionError("edgeconv_layer: rows not a multiple of nodes");
    const std::size_t blocks = hv.rows() / nodes;

    // Neighbour sets come from the current feature values of each sample.
    std::size_t k = 0;
    std::vector<std::size_t> neighbour_rows;
    for (std::size_t b = 0; b < blocks; ++b) {
        Matrix block(nodes, hv.cols());
        for (std::size_t i = 0; i < nodes; ++i) {
            const auto src = hv.row(b * nodes + i);
            std::copy(src.begin(), src.end(), block.row(i).begin());
        }
        const graph::Neighborhoods nb = graph::knn_neighbors(block, options.k);
        k = nb.k;
        if (b == 0) neighbour_rows.reserve(blocks * nodes * k);
        for (std::size_t i = 0; i < nodes; ++i) {
            for (std::size_t j : nb.of(i)) neighbour_rows.push_back(b * nodes + j);
        }
    }

    ad::Var neighbour_part, centre_part;
    if (options.form == EdgeForm::difference) {
        neighbour_part = ad::matmul(h, weights[0]);
        centre_part = ad::sub(ad::matmul(h, weights[1]), neighbour_part);
    } else {
        neighbour_part = ad::matmul(h, weights[0]);
        centre_part = ad::add(ad::matmul(h, weights[1]), ad::matmul(h, weights[2]));
    }
    return edge_aggregate(neighbour_part, centre_part, neighbour_rows, k, options.aggregation,
                          options.slope);
}

ad::Var fc_layers(ad::Var flat, std::span<const ad::Var> fc) {
    if (fc.empty() || fc.size() % 2 != 0) throw DimensionError("fc_layers: expected (W, b) pairs");
    const std::size_t batch = flat.value().rows();
    ad::Var z = flat;
    for (std::size_t l = 0; l < fc.size(); l += 2) {
        z = ad::add(ad::matmul(z, fc[l]), ad::tile_rows(fc[l + 1], batch));
        if (l + 2 < fc.size()) z = ad::relu(z);
    }
    return z;
}

ad::Var forward(const ModelSpec& spec, const Matrix& propagation, std::span<const ad::Var> params,
                ad::Var inputs) {
    const Matrix& x = inputs.value();
    if (x.cols() != spec.input_width())
        throw DimensionError("forward: input width " + std::to_string(x.cols()) + " but model expects " +
                             std::to_string(spec.input_width()));
    const std::size_t batch = x.rows();
    const std::size_t per_layer = weights_per_graph_layer(spec);
    const std::size_t layers = graph_layer_count(spec);
    if (params.size() != layers * per_layer + 2 * (spec.fc_widths.size() + 1))
        throw DimensionError("forward: parameter list does not match the model spec");

    ad::Var flat = inputs;
    if (spec.arch != Architecture::dnn) {
        ad::Var h = ad::reshape(inputs, batch * spec.nodes, spec.channels);
        const EdgeConvOptions opts{spec.k_neigh, spec.aggregation, spec.edge_form, spec.leaky_slope};
        for (std::size_t l = 0; l < layers; ++l) {
            const auto w = params.subspan(l * per_layer, per_layer);
            h = spec.arch == Architecture::gcn ? gcn_layer(propagation, h, w[0])
                                               : edgeconv_layer(h, spec.nodes, w, opts);
        }
        flat = ad::reshape(h, batch, spec.nodes * spec.graph_widths.back());
    }
    return fc_layers(flat, params.subspan(layers * per_layer));
}

Matrix gcn_forward(const Matrix& x, const graph::NormalizedAdjacency& adjacency, const ParamList& weights) {
    if (adjacency.matrix.rows() != x.rows())
        throw DimensionError("gcn_forward: adjacency " + adjacency.matrix.shape_string() +
                             " does not match " + std::to_string(x.rows()) + " nodes");
    ad::Tape tape;
    ad::Var h = tape.constant(x);
    for (const Matrix& w : weights) h = gcn_layer(adjacency.matrix, h, tape.constant(w));
    return h.value();
}

Matrix edgeconv_forward(const Matrix& x, const ParamList& weights, const EdgeConvOptions& options) {
    const std::size_t per = options.form == EdgeForm::difference ? 2 : 3;
    if (weights.size() % per != 0) throw DimensionError("edgeconv_forward: incomplete weight list");
    ad::Tape tape;
    ad::Var h = tape.constant(x);
    for (std::size_t l = 0; l < weights.size(); l += per) {
        std::vector<ad::Var> w;
        for (std::size_t i = 0; i < per; ++i) w.push_back(tape.constant(weights[l + i]));
        h = edgeconv_layer(h, x.rows(), w, options);
    }
    return h.value();
}

std::vector<double> edge_embedding(std::span<const double> h_i, std::span<const double> h_j) {
    if (h_i.size() != h_j.size()) throw DimensionError("edge_embedding: width mismatch");
    std::vector<double> out(h_i.begin(), h_i.end());
    out.insert(out.end(), h_j.begin(), h_j.end());
    return out;
}

Matrix fc_head(const Matrix& h, const ParamList& fc) {
    ad::Tape tape;
    const std::vector<ad::Var> vars = [&] {
        std::vector<ad::Var> v;
        for (const Matrix& p : fc) v.push_back(tape.constant(p));
        return v;
    }();
    return fc_layers(tape.constant(h.reshaped(1, h.size())), vars).value();
}

namespace {

Matrix gather_inputs(const SampleSet& data, std::span<const std::size_t> rows) {
    Matrix x(rows.size(), data.inputs.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = data.inputs.row(rows[i]);
        std::copy(src.begin(), src.end(), x.row(i).begin());
    }
    return x;
}

Matrix gather_targets(const SampleSet& data, std::span<const std::size_t> rows) {
    Matrix y(rows.size(), 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y(i, 0) = data.targets(rows[i], 0);
        y(i, 1) = data.targets(rows[i], 1);
    }
    return y;
}

constexpr std::size_t kPredictChunk = 64;

}  // namespace

Matrix predict(const Model& model, const SampleSet& data) {
    Matrix out(data.size(), 2);
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < data.size(); start += kPredictChunk) {
        const std::size_t end = std::min(data.size(), start + kPredictChunk);
        rows.resize(end - start);
        std::iota(rows.begin(), rows.end(), start);
        ad::Tape tape;
        std::vector<ad::Var> params;
        for (const Matrix& p : model.params) params.push_back(tape.constant(p));
        const Matrix y = model.scaler.denormalize(
            forward(model.spec, model.propagation, params, tape.constant(gather_inputs(data, rows))).value());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out(start + i, 0) = y(i, 0);
            out(start + i, 1) = y(i, 1);
        }
    }
    return out;
}

double batch_loss(const Model& model, const ParamList& params, const SampleSet& data,
                  std::span<const std::size_t> rows, ParamList* grads) {
    ad::Tape tape;
    const std::vector<ad::Var> vars = as_parameters(tape, params);
    ad::Var pred = forward(model.spec, model.propagation, vars, tape.constant(gather_inputs(data, rows)));
    ad::Var loss = ad::mse(pred, tape.constant(model.scaler.normalize(gather_targets(data, rows))));
    if (grads) {
        tape.backward(loss);
        grads->clear();
        for (const ad::Var& v : vars) grads->push_back(tape.grad(v));
    }
    return loss.value()[0];
}

TrainResult train(Model model, const SampleSet& data, const TrainConfig& config) {
    data.validate();
    if (data.size() == 0) throw DomainError("train: empty dataset");
    if (config.batch == 0) throw ConfigError("train: batch size must be >= 1");
    if (data.width() != model.spec.input_width())
        throw DimensionError("train: data width " + std::to_string(data.width()) +
                             " does not match model input width " + std::to_string(model.spec.input_width()));
    if (config.normalize_targets) model.scaler = fit_target_scaler(data.targets);

    Optimizer optimizer(config.optimizer);
    TrainResult result;
    std::vector<std::size_t> order(data.size());
    ParamList grads;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng rng = make_rng(config.seed, 0x7a11 + epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch) {
            const std::size_t end = std::min(order.size(), start + config.batch);
            const std::span<const std::size_t> rows(order.data() + start, end - start);
            const double loss = batch_loss(model, model.params, data, rows, &grads);
            if (!std::isfinite(loss))
                throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch starting at " + std::to_string(start));
            total += loss * static_cast<double>(rows.size());
            optimizer.step(model.params, grads);
        }
        result.loss_history.push_back(total / static_cast<double>(data.size()));
    }
    result.model = std::move(model);
    return result;
}

ModelSpec matched_dnn_spec(std::size_t flat_inputs, std::size_t hidden_layers, std::size_t budget) {
    if (hidden_layers == 0) throw ConfigError("matched_dnn_spec: need at least one hidden layer");
    auto count = [&](std::size_t w) {
        return flat_inputs * w + w + (hidden_layers - 1) * (w * w + w) + 2 * w + 2;
    };
    std::size_t width = 1;
    while (count(width) < budget) ++width;
    if (width > 1) {
        const auto over = count(width) - budget;
        const auto under = budget - count(width - 1);
        if (under < over) --width;
    }
    ModelSpec spec;
    spec.arch = Architecture::dnn;
    spec.nodes = flat_inputs;
    spec.channels = 1;
    spec.graph_widths.clear();
    spec.fc_widths.assign(hidden_layers, width);
    return spec;
}

}  // namespace mgl::model
