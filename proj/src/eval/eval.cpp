#include "metagraphloc/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/features.hpp"
#include "metagraphloc/random.hpp"
#include "metagraphloc/text_format.hpp"

namespace mgl::eval {

namespace {

constexpr std::uint64_t kSplitStream = 0x7e57;
constexpr std::uint64_t kFloorDataStream = 200;

// Messages land in CSV cells.
std::string cell_text(std::string text) {
    for (char& c : text)
        if (c == ',' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
    return text;
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

std::vector<double> distance_errors(const Matrix& predictions, const Matrix& truths) {
    if (predictions.rows() != truths.rows() || predictions.cols() < 2 || truths.cols() < 2)
        throw DimensionError("distance_errors: " + std::to_string(predictions.rows()) + "x" +
                             std::to_string(predictions.cols()) + " predictions vs " +
                             std::to_string(truths.rows()) + "x" + std::to_string(truths.cols()) + " truths");
    if (predictions.rows() == 0) throw DomainError("distance_errors: no samples");
    std::vector<double> out(predictions.rows());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::hypot(predictions(i, 0) - truths(i, 0), predictions(i, 1) - truths(i, 1));
    return out;
}

double mde(const Matrix& predictions, const Matrix& truths) {
    const std::vector<double> e = distance_errors(predictions, truths);
    return std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
}

std::vector<CdfPoint> cdf(std::span<const double> errors, std::span<const double> grid) {
    if (errors.empty()) throw DomainError("cdf: no errors");
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<CdfPoint> out;
    out.reserve(grid.size());
    for (double g : grid) {
        const auto below = std::upper_bound(sorted.begin(), sorted.end(), g) - sorted.begin();
        out.push_back({g, static_cast<double>(below) / static_cast<double>(sorted.size())});
    }
    return out;
}

std::vector<double> cdf_grid(std::span<const double> errors, double step, double upper) {
    if (!(step > 0.0)) throw DomainError("cdf_grid: step must be positive");
    double top = upper;
    for (double e : errors) top = std::max(top, e);
    std::vector<double> grid;
    for (std::size_t i = 0;; ++i) {
        const double g = static_cast<double>(i) * step;
        grid.push_back(g);
        if (g >= top) break;
    }
    return grid;
}

EvalReport make_report(const Matrix& predictions, const Matrix& truths, double cdf_step,
                       std::vector<std::pair<std::string, std::string>> config, std::uint64_t seed) {
    EvalReport r;
    r.errors = distance_errors(predictions, truths);
    r.mde = std::accumulate(r.errors.begin(), r.errors.end(), 0.0) / static_cast<double>(r.errors.size());
    const std::vector<double> grid = cdf_grid(r.errors, cdf_step);
    r.cdf = cdf(r.errors, grid);
    r.config = std::move(config);
    r.seed = seed;
    return r;
}

void Benchmark::validate() const {
    if (aps == 0) throw ConfigError("benchmark: need at least one AP");
    if (floors < 1) throw ConfigError("benchmark: need at least one floor");
    if (samples < 2) throw ConfigError("benchmark: need at least two samples per floor");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("benchmark: train_fraction must lie in (0, 1)");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("benchmark: dropout must lie in [0, 1)");
}

radio::RadioEnvironment benchmark_environment(const Benchmark& bench, int floor) {
    bench.validate();
    if (floor < 0 || floor >= bench.floors)
        throw ConfigError("benchmark: floor " + std::to_string(floor) + " outside 0.." +
                          std::to_string(bench.floors - 1));
    radio::RadioEnvironment env =
        radio::make_environment(bench.aps, bench.width, bench.height, bench.channel, bench.seed, bench.floors);
    env.floor = floor;
    env.floor_height = bench.floor_height;
    env.detection_range = bench.detection_range;
    env.dropout = bench.dropout;
    for (std::size_t i = 0; i < env.access_points.size(); ++i)
        env.access_points[i].z = static_cast<double>(i % static_cast<std::size_t>(bench.floors)) * bench.floor_height;
    env.validate();
    return env;
}

radio::FingerprintDataset benchmark_floor(const Benchmark& bench, int floor) {
    const radio::RadioEnvironment env = benchmark_environment(bench, floor);
    return radio::generate_dataset(env, bench.samples, bench.generation,
                                   derive_seed(bench.seed, kFloorDataStream + static_cast<std::uint64_t>(floor)));
}

std::pair<radio::FingerprintDataset, radio::FingerprintDataset> split_dataset(
    const radio::FingerprintDataset& data, double train_fraction, std::uint64_t seed) {
    if (data.size() < 2) throw DomainError("split_dataset: need at least two samples");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split_dataset: train_fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_rng(seed, kSplitStream);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(data.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, data.size() - 1);
    std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {radio::subset(data, train), radio::subset(data, test)};
}

ArmSpec arm_from_name(const std::string& name, const ArmSpec& base) {
    ArmSpec arm = base;
    arm.name = name;
    if (name == "dec") {
        arm.arch = model::Architecture::dec;
        arm.use_imu = true;
    } else if (name == "dec-rssi") {
        arm.arch = model::Architecture::dec;
        arm.use_imu = false;
    } else if (name == "gcn-corr") {
        arm.arch = model::Architecture::gcn;
        arm.graph = graph::GraphKind::corr;
    } else if (name == "gcn-prob") {
        arm.arch = model::Architecture::gcn;
        arm.graph = graph::GraphKind::prob;
    } else if (name == "dnn") {
        arm.arch = model::Architecture::dnn;
    } else {
        throw ConfigError("unknown arm '" + name + "' (expected dec, dec-rssi, gcn-corr, gcn-prob or dnn)");
    }
    return arm;
}

namespace {

model::ModelSpec graph_spec(const ArmSpec& arm, model::Architecture arch, std::size_t nodes, std::size_t channels) {
    model::ModelSpec spec;
    spec.arch = arch;
    spec.nodes = nodes;
    spec.channels = channels;
    spec.graph_widths.assign(arm.layers, arm.hidden);
    spec.fc_widths.assign(arm.fc_layers, arm.hidden);
    spec.k_neigh = arm.k_neigh;
    spec.aggregation = arm.aggregation;
    spec.edge_form = arm.edge_form;
    spec.leaky_slope = arm.leaky_slope;
    return spec;
}

std::vector<std::pair<std::string, std::string>> echo(const ArmSpec& arm) {
    std::vector<std::pair<std::string, std::string>> c{
        {"arm", arm.name},
        {"arch", model::to_string(arm.arch)},
        {"use_imu", arm.use_imu ? "true" : "false"},
        {"hidden", std::to_string(arm.hidden)},
        {"epochs", std::to_string(arm.train.epochs)},
        {"batch", std::to_string(arm.train.batch)},
        {"lr", fmt(arm.train.optimizer.learning_rate)},
        {"init_seed", std::to_string(arm.init_seed)},
        {"train_seed", std::to_string(arm.train.seed)},
    };
    if (arm.arch == model::Architecture::gcn) {
        c.emplace_back("graph", graph::to_string(arm.graph));
        c.emplace_back("threshold", fmt(arm.threshold));
    }
    if (arm.arch == model::Architecture::dec) {
        c.emplace_back("k_neigh", std::to_string(arm.k_neigh));
        c.emplace_back("aggregation", model::to_string(arm.aggregation));
        c.emplace_back("edge_form", model::to_string(arm.edge_form));
    }
    return c;
}

}  // namespace

PreparedArm prepare_arm(const ArmSpec& arm, const radio::FingerprintDataset& train,
                        const radio::FingerprintDataset& test) {
    PreparedArm p;
    p.normalization = model::fit_normalization(train, arm.use_imu);
    Matrix propagation;
    model::ModelSpec spec;
    if (arm.arch == model::Architecture::dnn) {
        p.train = model::encode_flat_inputs(train, p.normalization);
        p.test = model::encode_flat_inputs(test, p.normalization);
        std::size_t budget = arm.dnn_budget;
        if (budget == 0) {
            const model::ModelSpec dec =
                graph_spec(arm, model::Architecture::dec, train.aps, p.normalization.node_channels());
            budget = model::parameter_count(model::init_params(dec, arm.init_seed));
        }
        spec = model::matched_dnn_spec(p.train.nodes, arm.dnn_layers, budget);
    } else {
        p.train = model::encode_graph_inputs(train, p.normalization);
        p.test = model::encode_graph_inputs(test, p.normalization);
        spec = graph_spec(arm, arm.arch, p.train.nodes, p.train.channels);
        if (arm.arch == model::Architecture::gcn) {
            const graph::GraphSpec g = arm.graph == graph::GraphKind::prob
                                           ? graph::joint_appearance_adjacency(train, arm.threshold)
                                           : graph::pearson_adjacency(train, arm.threshold);
            propagation = graph::normalize_adjacency(g).matrix;
        }
    }
    p.model = model::make_model(spec, arm.init_seed, std::move(propagation));
    return p;
}

ExperimentResult run_experiment(const ArmSpec& arm, const radio::FingerprintDataset& train,
                                const radio::FingerprintDataset& test) {
    ExperimentResult r;
    r.name = arm.name;
    try {
        PreparedArm p = prepare_arm(arm, train, test);
        r.parameters = model::parameter_count(p.model.params);
        model::TrainResult trained = model::train(std::move(p.model), p.train, arm.train);
        r.predictions = model::predict(trained.model, p.test);
        r.truths = p.test.targets;
        r.report = make_report(r.predictions, r.truths, arm.cdf_step, echo(arm), arm.train.seed);
        r.loss_history = std::move(trained.loss_history);
        r.model = std::move(trained.model);
        r.normalization = std::move(p.normalization);
        r.ok = true;
    } catch (const std::exception& e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t workers = std::min(jobs, n);
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::string to_string(SweepDimension d) { return d == SweepDimension::threshold ? "threshold" : "k_neigh"; }

SweepDimension parse_sweep_dimension(const std::string& name) {
    if (name == "threshold") return SweepDimension::threshold;
    if (name == "k_neigh") return SweepDimension::k_neigh;
    throw ConfigError("unknown sweep dimension '" + name + "' (expected threshold or k_neigh)");
}

std::vector<SweepRow> sweep(SweepDimension dimension, std::span<const double> values, const ArmSpec& base,
                            const radio::FingerprintDataset& train, const radio::FingerprintDataset& test,
                            std::size_t jobs) {
    if (values.empty()) throw ConfigError("sweep: no values");
    std::vector<SweepRow> rows(values.size());
    parallel_for(values.size(), jobs, [&](std::size_t i) {
        const double v = values[i];
        ArmSpec arm = base;
        arm.name = to_string(dimension) + "=" + fmt(v);
        rows[i].value = v;
        if (dimension == SweepDimension::threshold) {
            arm.arch = model::Architecture::gcn;
            arm.threshold = v;
        } else {
            arm.arch = model::Architecture::dec;
            if (!(v >= 1.0) || v != std::floor(v)) {
                rows[i].result.name = arm.name;
                rows[i].result.error = "k_neigh must be a positive integer, got " + fmt(v);
                return;
            }
            arm.k_neigh = static_cast<std::size_t>(v);
        }
        rows[i].result = run_experiment(arm, train, test);
    });
    return rows;
}

double best_mde(std::span<const SweepRow> rows) {
    double best = std::numeric_limits<double>::infinity();
    for (const SweepRow& r : rows)
        if (r.result.ok) best = std::min(best, r.result.report.mde);
    return best;
}

std::vector<ExperimentResult> compare(std::span<const ArmSpec> arms, const radio::FingerprintDataset& train,
                                      const radio::FingerprintDataset& test, std::size_t jobs) {
    if (arms.size() < 2) throw ConfigError("compare: need at least two arms");
    std::vector<ExperimentResult> out(arms.size());
    parallel_for(arms.size(), jobs, [&](std::size_t i) { out[i] = run_experiment(arms[i], train, test); });
    return out;
}

void write_errors_csv(const Matrix& predictions, const Matrix& truths, std::ostream& out) {
    const std::vector<double> e = distance_errors(predictions, truths);
    out << "sample,true_x,true_y,pred_x,pred_y,error\n";
    for (std::size_t i = 0; i < e.size(); ++i)
        out << i << ',' << fmt(truths(i, 0)) << ',' << fmt(truths(i, 1)) << ',' << fmt(predictions(i, 0)) << ','
            << fmt(predictions(i, 1)) << ',' << fmt(e[i]) << '\n';
}

void write_cdf_csv(std::span<const CdfPoint> table, std::ostream& out) {
    out << "error,fraction\n";
    for (const CdfPoint& p : table) out << fmt(p.error) << ',' << fmt(p.fraction) << '\n';
}

void write_loss_csv(std::span<const double> history, std::ostream& out) {
    out << "epoch,loss\n";
    for (std::size_t i = 0; i < history.size(); ++i) out << i + 1 << ',' << fmt(history[i]) << '\n';
}

void write_sweep_csv(SweepDimension dimension, std::span<const SweepRow> rows, std::ostream& out) {
    out << "dimension,value,mde,parameters,status,message\n";
    for (const SweepRow& r : rows) {
        out << to_string(dimension) << ',' << fmt(r.value) << ',';
        if (r.result.ok)
            out << fmt(r.result.report.mde) << ',' << r.result.parameters << ",ok,\n";
        else
            out << "nan," << r.result.parameters << ",failed," << cell_text(r.result.error) << '\n';
    }
}

void write_compare_csv(std::span<const ExperimentResult> results, std::ostream& out) {
    out << "arm,mde,parameters,final_loss,status,message\n";
    for (const ExperimentResult& r : results) {
        out << r.name << ',';
        if (r.ok)
            out << fmt(r.report.mde) << ',' << r.parameters << ','
                << (r.loss_history.empty() ? std::string("nan") : fmt(r.loss_history.back())) << ",ok,\n";
        else
            out << "nan," << r.parameters << ",nan,failed," << cell_text(r.error) << '\n';
    }
}

void write_summary_csv(const EvalReport& report, std::ostream& out) {
    out << "key,value\n";
    out << "mde," << fmt(report.mde) << '\n';
    out << "seed," << report.seed << '\n';
    out << "samples," << report.errors.size() << '\n';
    for (const auto& [k, v] : report.config) out << cell_text(k) << ',' << cell_text(v) << '\n';
}

void write_compare_markdown(std::span<const ExperimentResult> results, std::ostream& out) {
    out << "| arm | MDE (m) | parameters | median error (m) | status |\n";
    out << "|---|---|---|---|---|\n";
    for (const ExperimentResult& r : results) {
        out << "| " << r.name << " | ";
        if (r.ok) {
            std::vector<double> e = r.report.errors;
            std::sort(e.begin(), e.end());
            const std::size_t n = e.size();
            const double median = n % 2 ? e[n / 2] : 0.5 * (e[n / 2 - 1] + e[n / 2]);
            out << fmt(r.report.mde) << " | " << r.parameters << " | " << fmt(median) << " | ok |\n";
        } else {
            out << "- | " << r.parameters << " | - | failed: " << r.error << " |\n";
        }
    }
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        for (std::string_view c : split(line, ',')) cells.emplace_back(c);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw ParseError(line_no, "expected " + std::to_string(t.header.size()) + " cells, got " +
                                          std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw ParseError(line_no, "empty CSV");
    return t;
}

}  // namespace mgl::eval
