#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "metagraphloc/eval.hpp"
#include "metagraphloc/graph.hpp"
#include "metagraphloc/meta.hpp"

namespace mgl::cli {

inline constexpr const char* kVersion = "0.1.0";

struct MetaSettings {
    meta::MetaConfig train{};
    meta::AdaptConfig adapt{};
    meta::ReferenceOptions reference{};  ///< lr follows adapt.lr
    std::size_t m = 120;                 ///< PCA latent dimension
    std::size_t hidden = 0;              ///< graph and FC width; 0 uses model.h
    double support_fraction = 0.7;
    std::vector<std::size_t> train_floors{0, 1};
    std::size_t test_floor = 2;
    std::vector<std::string> train_data;  ///< dataset files; empty generates the benchmark floors
    std::string test_data;
    std::string checkpoint;  ///< meta-test input
};

struct GraphSettings {
    graph::GraphKind kind = graph::GraphKind::corr;
    double threshold = 0.2;
    bool weighted = false;
    std::size_t k = 15;
    std::size_t sample = 0;  ///< fingerprint whose features seed a dynamic_knn export
};

/// Fully resolved settings of one run.
struct RunConfig {
    std::uint64_t seed = 42;
    eval::Benchmark bench{};  ///< bench.seed is replaced by `seed`
    std::size_t floor = 0;
    std::string train_path;  ///< empty: generate benchmark floor `floor`
    std::string test_path;   ///< empty: split the training source
    eval::ArmSpec arm{};
    MetaSettings meta{};
    eval::SweepDimension sweep_dimension = eval::SweepDimension::threshold;
    std::vector<double> sweep_values{0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<std::string> compare_arms{"dec", "dec-rssi", "gcn-corr", "gcn-prob", "dnn"};
    std::string eval_checkpoint;
    GraphSettings graph{};
};

/// A bad key or value. `line` is 0 for command-line overrides.
class ConfigKeyError : public std::runtime_error {
public:
    ConfigKeyError(std::string source, std::size_t line, std::string key, const std::string& what);

    const std::string& key() const noexcept { return key_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string key_;
    std::size_t line_;
};

/// Built-in defaults.
RunConfig default_config();

/// Applies one `key = value` assignment.
void set_value(RunConfig& config, const std::string& key, const std::string& value,
               const std::string& source = "--set", std::size_t line = 0);

/// Applies every assignment of a config file: `key = value` lines, `#` comments,
/// blank lines ignored. Later assignments win.
void apply_config(RunConfig& config, std::istream& in, const std::string& source);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// All keys in a fixed order.
std::vector<std::string> config_keys();
std::string get_value(const RunConfig& config, const std::string& key);

/// Every key with its resolved value, one `key = value` line each.
void write_config(const RunConfig& config, std::ostream& out);

/// Derived seeds; all stochastic stages of a run hang off `seed`.
std::uint64_t split_seed(const RunConfig& config);
std::uint64_t init_seed(const RunConfig& config);
std::uint64_t train_seed(const RunConfig& config);
/// Support/query split seed of the task built from `floor`.
std::uint64_t task_split_seed(const RunConfig& config, std::size_t floor);

/// Network over meta.m single-channel virtual nodes, widths from meta.hidden
/// (or model.h). Throws ConfigKeyError for GCN, which has no fixed adjacency here.
model::ModelSpec meta_spec(const RunConfig& config);

eval::Benchmark benchmark(const RunConfig& config);
/// The arm with seeds and the CDF step resolved.
eval::ArmSpec arm(const RunConfig& config);

}  // namespace mgl::cli
