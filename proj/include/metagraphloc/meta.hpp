#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metagraphloc/features.hpp"
#include "metagraphloc/model.hpp"
#include "metagraphloc/optimizer.hpp"
#include "metagraphloc/pca.hpp"
#include "metagraphloc/radio.hpp"
#include "metagraphloc/random.hpp"

namespace mgl::meta {

using model::ParamList;

enum class Split { support, query };
enum class Weighting { uniform, abundance };

std::string to_string(Weighting w);
std::string to_string(Split s);
Weighting parse_weighting(const std::string& name);
Split parse_split(const std::string& name);

/// Loss oracle for one task. `rows` indexes into the chosen split; an empty
/// span means the whole split.
class TaskObjective {
public:
    virtual ~TaskObjective() = default;
    virtual std::size_t size(Split split) const = 0;
    virtual double loss(const ParamList& params, Split split, std::span<const std::size_t> rows,
                        ParamList* grads) const = 0;
    /// Width of the model input this task feeds; 0 when not applicable.
    virtual std::size_t input_width() const { return 0; }
    /// Mean distance error in metres on a split, when the task can compute it.
    virtual std::optional<double> mde(const ParamList&, Split) const { return std::nullopt; }
};

/// Wraps a closure; used for surrogate losses in tests and tools.
class FunctionObjective final : public TaskObjective {
public:
    using Fn = std::function<double(const ParamList&, Split, ParamList*)>;
    FunctionObjective(Fn fn, std::size_t support_size = 1, std::size_t query_size = 1, std::size_t width = 0)
        : fn_(std::move(fn)), support_(support_size), query_(query_size), width_(width) {}

    std::size_t size(Split split) const override { return split == Split::support ? support_ : query_; }
    double loss(const ParamList& params, Split split, std::span<const std::size_t>,
                ParamList* grads) const override {
        return fn_(params, split, grads);
    }
    std::size_t input_width() const override { return width_; }

private:
    Fn fn_;
    std::size_t support_, query_, width_;
};

/// Floor-level localization task with model-ready support and query sets.
struct Task {
    std::string id;
    model::SampleSet support;
    model::SampleSet query;
    model::NormalizationParams normalization;
    std::optional<PcaProjection> projection;
};

/// MSE of a network (spec, propagation and target scaling taken from
/// `templ`) on a task's samples.
class ModelObjective final : public TaskObjective {
public:
    ModelObjective(const model::Model& templ, const Task& task) : templ_(&templ), task_(&task) {}

    std::size_t size(Split split) const override;
    double loss(const ParamList& params, Split split, std::span<const std::size_t> rows,
                ParamList* grads) const override;
    std::size_t input_width() const override { return task_->support.width(); }
    std::optional<double> mde(const ParamList& params, Split split) const override;

private:
    const model::SampleSet& set(Split split) const { return split == Split::support ? task_->support : task_->query; }
    const model::Model* templ_;
    const Task* task_;
};

struct MetaConfig {
    double inner_lr = 0.0005;  ///< mu
    double outer_lr = 0.001;   ///< eta
    std::size_t inner_steps = 5;
    std::size_t iterations = 1500;
    Weighting weighting = Weighting::uniform;
    Split outer_split = Split::query;
    OptimizerKind outer_optimizer = OptimizerKind::sgd;
    std::size_t batch = 8;  ///< rows per inner step and per outer gradient; 0 = whole split
    std::uint64_t seed = 42;

    void validate() const;
};

/// rho_k. Uniform gives 1/K; abundance gives |D_k^s| / sum |D^s|.
std::vector<double> task_weights(std::span<const std::size_t> support_sizes, Weighting weighting);

/// `steps` SGD steps on the support split starting from a copy of `theta`.
/// With a null `rng` (or batch 0) every step uses the whole support set.
ParamList inner_adapt(const ParamList& theta, const TaskObjective& task, double lr, std::size_t steps,
                      std::size_t batch = 0, Rng* rng = nullptr);

struct MetaTrainResult {
    ParamList params;
    std::vector<double> outer_loss;  ///< weighted task loss at the adapted parameters, per iteration
};

/// First-order MAML: the outer gradient of each task is taken at its adapted
/// parameters and applied to the shared initialization.
MetaTrainResult meta_train(const ParamList& init, std::span<const TaskObjective* const> tasks,
                           const MetaConfig& config);

struct AdaptConfig {
    double lr = 0.0005;
    double eps_acc = 1e-4;
    std::size_t max_steps = 100;  ///< J_max
};

struct AdaptRow {
    std::size_t step = 0;
    double support_loss = 0.0;
    double query_loss = 0.0;
    double residual = 0.0;  ///< Q(j); NaN without a reference loss
    double mde = 0.0;       ///< NaN when the task cannot compute it
};

struct AdaptResult {
    ParamList params;              ///< after max_steps steps
    std::optional<std::size_t> j;  ///< first step in the accuracy band
    std::vector<AdaptRow> curve;   ///< steps 0 .. max_steps
};

/// Full-batch gradient descent on the support set. The curve always runs to
/// `max_steps`; J is the first step whose residual falls below eps_acc.
AdaptResult meta_test_adapt(const ParamList& start, const TaskObjective& task, const AdaptConfig& config,
                            std::optional<double> reference_loss);

/// First j with curve[j].residual < eps, scanning the whole curve.
std::optional<std::size_t> first_accurate_step(std::span<const AdaptRow> curve, double eps);

struct ReferenceOptions {
    double lr = 0.0005;
    double tolerance = 1e-6;
    std::size_t window = 50;
    std::size_t max_steps = 2000;
};

/// Query loss at the stand-in for the task optimum: full-batch descent on
/// the support set from `start` until the support loss moves less than
/// `tolerance` over `window` steps, or `max_steps` is hit.
double reference_query_loss(const ParamList& start, const TaskObjective& task, const ReferenceOptions& options);

/// Memoizes reference_query_loss by task id.
class ReferenceCache {
public:
    double get(const std::string& task_id, const ParamList& start, const TaskObjective& task,
               const ReferenceOptions& options);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, double> values_;
};

/// A floor's raw data before alignment.
struct RawTask {
    std::string id;
    radio::FingerprintDataset support;
    radio::FingerprintDataset query;
};

/// Per task: normalization and PCA fitted on the support set over the flat
/// [rssi || imu] vector, then both splits projected to m latent values that
/// become m single-channel virtual nodes.
std::vector<Task> align_tasks(const std::vector<RawTask>& tasks, std::size_t m, bool use_imu = true);
Task align_task(const RawTask& task, std::size_t m, bool use_imu = true);

/// Target scaler fitted on the union of the tasks' support targets.
model::TargetScaler fit_support_scaler(std::span<const Task> tasks);

/// Seeded support/query split of one dataset; `support_fraction` of the rows
/// go to support (at least one row each).
RawTask split_task(std::string id, const radio::FingerprintDataset& data, double support_fraction,
                   std::uint64_t seed);

}  // namespace mgl::meta
