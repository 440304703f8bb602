#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "metagraphloc/graph.hpp"
#include "metagraphloc/matrix.hpp"
#include "metagraphloc/model.hpp"
#include "metagraphloc/radio.hpp"

namespace mgl::eval {

/// Per-sample Euclidean error over the first two columns. Throws DimensionError
/// on a shape mismatch and DomainError on empty input.
std::vector<double> distance_errors(const Matrix& predictions, const Matrix& truths);

/// Mean distance error in metres.
double mde(const Matrix& predictions, const Matrix& truths);

struct CdfPoint {
    double error = 0.0;
    double fraction = 0.0;

    friend bool operator==(const CdfPoint&, const CdfPoint&) = default;
};

/// Fraction of `errors` at or below each grid value. Throws DomainError on empty errors.
std::vector<CdfPoint> cdf(std::span<const double> errors, std::span<const double> grid);

/// 0, step, 2 step, ... up to the first value >= max(errors, upper).
std::vector<double> cdf_grid(std::span<const double> errors, double step, double upper = 0.0);

struct EvalReport {
    std::vector<double> errors;
    double mde = 0.0;
    std::vector<CdfPoint> cdf;
    std::vector<std::pair<std::string, std::string>> config;  ///< echo of the settings that produced it
    std::uint64_t seed = 0;
};

EvalReport make_report(const Matrix& predictions, const Matrix& truths, double cdf_step,
                       std::vector<std::pair<std::string, std::string>> config = {}, std::uint64_t seed = 0);

/// The standard synthetic benchmark: one building, one dataset per floor.
struct Benchmark {
    std::size_t aps = 30;
    int floors = 3;
    std::size_t samples = 800;  ///< per floor
    double width = 40.0;
    double height = 30.0;
    radio::ChannelParams channel{};
    double detection_range = 30.0;
    double dropout = 0.05;
    double floor_height = 4.0;
    radio::GenerationOptions generation{};
    double train_fraction = 0.7;
    std::uint64_t seed = 42;

    void validate() const;
};

radio::RadioEnvironment benchmark_environment(const Benchmark& bench, int floor);
radio::FingerprintDataset benchmark_floor(const Benchmark& bench, int floor);

/// Seeded train/test partition; `train_fraction` of the rows go to train.
std::pair<radio::FingerprintDataset, radio::FingerprintDataset> split_dataset(
    const radio::FingerprintDataset& data, double train_fraction, std::uint64_t seed);

/// One trainable configuration.
struct ArmSpec {
    std::string name = "dec";
    model::Architecture arch = model::Architecture::dec;
    graph::GraphKind graph = graph::GraphKind::corr;  ///< GCN adjacency source
    double threshold = 0.2;
    bool use_imu = true;
    std::size_t hidden = 128;
    std::size_t layers = 2;     ///< graph layers
    std::size_t fc_layers = 1;  ///< hidden FC layers of width `hidden`
    std::size_t k_neigh = 15;
    model::Aggregation aggregation = model::Aggregation::max;
    model::EdgeForm edge_form = model::EdgeForm::difference;
    double leaky_slope = 0.01;
    std::size_t dnn_layers = 2;
    /// Parameter budget of the DNN; 0 matches a DEC with this arm's graph settings.
    std::size_t dnn_budget = 0;
    model::TrainConfig train{};
    std::uint64_t init_seed = 1;
    double cdf_step = 0.5;
};

/// Names accepted by arm_from_name: dec, dec-rssi, gcn-corr, gcn-prob, dnn.
ArmSpec arm_from_name(const std::string& name, const ArmSpec& base);

/// Everything the arm needs besides data: input scaling, spec and GCN propagation.
struct PreparedArm {
    model::NormalizationParams normalization;
    model::Model model;  ///< untrained
    model::SampleSet train;
    model::SampleSet test;
};

PreparedArm prepare_arm(const ArmSpec& arm, const radio::FingerprintDataset& train,
                        const radio::FingerprintDataset& test);

struct ExperimentResult {
    std::string name;
    bool ok = false;
    std::string error;  ///< set when !ok
    EvalReport report;
    Matrix predictions;  ///< test predictions, metres
    Matrix truths;
    std::vector<double> loss_history;
    std::size_t parameters = 0;
    model::Model model;
    model::NormalizationParams normalization;
};

/// Trains on `train`, evaluates on `test`. Failures are captured, not thrown.
ExperimentResult run_experiment(const ArmSpec& arm, const radio::FingerprintDataset& train,
                                const radio::FingerprintDataset& test);

/// Calls fn(0..n-1) on up to `jobs` worker threads (0 or 1 runs inline). The
/// first exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

enum class SweepDimension { threshold, k_neigh };

std::string to_string(SweepDimension d);
SweepDimension parse_sweep_dimension(const std::string& name);

struct SweepRow {
    double value = 0.0;
    ExperimentResult result;
};

/// One model per value with identical data and seeds. A threshold sweep uses
/// `base` as the GCN arm; a k_neigh sweep uses it as the DEC arm.
std::vector<SweepRow> sweep(SweepDimension dimension, std::span<const double> values, const ArmSpec& base,
                            const radio::FingerprintDataset& train, const radio::FingerprintDataset& test,
                            std::size_t jobs = 1);

/// Lowest MDE over the successful rows; +inf when none succeeded.
double best_mde(std::span<const SweepRow> rows);

/// Trains every arm on the same data and seeds. Throws ConfigError for fewer than two arms.
std::vector<ExperimentResult> compare(std::span<const ArmSpec> arms, const radio::FingerprintDataset& train,
                                      const radio::FingerprintDataset& test, std::size_t jobs = 1);

// CSV columns:
//   errors:  sample,true_x,true_y,pred_x,pred_y,error
//   cdf:     error,fraction
//   loss:    epoch,loss
//   sweep:   dimension,value,mde,parameters,status,message
//   compare: arm,mde,parameters,final_loss,status,message
//   summary: key,value (mde, seed, samples, then the config echo)
void write_errors_csv(const Matrix& predictions, const Matrix& truths, std::ostream& out);
void write_cdf_csv(std::span<const CdfPoint> table, std::ostream& out);
void write_loss_csv(std::span<const double> history, std::ostream& out);
void write_sweep_csv(SweepDimension dimension, std::span<const SweepRow> rows, std::ostream& out);
void write_compare_csv(std::span<const ExperimentResult> results, std::ostream& out);
void write_summary_csv(const EvalReport& report, std::ostream& out);
void write_compare_markdown(std::span<const ExperimentResult> results, std::ostream& out);

/// Reader for the tables above (no quoting). Throws ParseError on ragged rows.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(std::istream& in);

}  // namespace mgl::eval
