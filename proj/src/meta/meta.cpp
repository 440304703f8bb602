#include "metagraphloc/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/log.hpp"

namespace mgl::meta {

std::string to_string(Weighting w) { return w == Weighting::uniform ? "uniform" : "abundance"; }
std::string to_string(Split s) { return s == Split::support ? "support" : "query"; }

Weighting parse_weighting(const std::string& name) {
    if (name == "uniform") return Weighting::uniform;
    if (name == "abundance") return Weighting::abundance;
    throw ConfigError("unknown task weighting '" + name + "' (expected uniform or abundance)");
}

Split parse_split(const std::string& name) {
    if (name == "support") return Split::support;
    if (name == "query") return Split::query;
    throw ConfigError("unknown split '" + name + "' (expected support or query)");
}

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

/// `batch` distinct rows out of n, or all of them.
std::vector<std::size_t> sample_rows(std::size_t n, std::size_t batch, Rng* rng) {
    std::vector<std::size_t> rows = all_rows(n);
    if (!rng || batch == 0 || batch >= n) return rows;
    for (std::size_t i = 0; i < batch; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(rows[i], rows[pick(*rng)]);
    }
    rows.resize(batch);
    return rows;
}

void sgd_step(ParamList& params, const ParamList& grads, double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) axpy(params[i], -lr, grads[i]);
}

void require_finite(double loss, const std::string& where) {
    if (!std::isfinite(loss)) throw DivergenceError(where + ": non-finite loss");
}

}  // namespace

std::size_t ModelObjective::size(Split split) const { return set(split).size(); }

double ModelObjective::loss(const ParamList& params, Split split, std::span<const std::size_t> rows,
                            ParamList* grads) const {
    const model::SampleSet& data = set(split);
    if (rows.empty()) {
        const std::vector<std::size_t> every = all_rows(data.size());
        return model::batch_loss(*templ_, params, data, every, grads);
    }
    return model::batch_loss(*templ_, params, data, rows, grads);
}

std::optional<double> ModelObjective::mde(const ParamList& params, Split split) const {
    model::Model m = *templ_;
    m.params = params;
    const model::SampleSet& data = set(split);
    const Matrix pred = model::predict(m, data);
    double total = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r)
        total += std::hypot(pred(r, 0) - data.targets(r, 0), pred(r, 1) - data.targets(r, 1));
    return total / static_cast<double>(data.size());
}

void MetaConfig::validate() const {
    if (!(inner_lr > 0.0)) throw ConfigError("meta: inner_lr must be positive");
    if (!(outer_lr >= 0.0)) throw ConfigError("meta: outer_lr must be non-negative");
    if (inner_steps == 0) throw ConfigError("meta: inner_steps must be >= 1");
    if (iterations == 0) throw ConfigError("meta: iterations must be >= 1");
}

std::vector<double> task_weights(std::span<const std::size_t> support_sizes, Weighting weighting) {
    const std::size_t k = support_sizes.size();
    if (k == 0) return {};
    if (weighting == Weighting::uniform) return std::vector<double>(k, 1.0 / static_cast<double>(k));
    double total = 0.0;
    for (std::size_t s : support_sizes) {
        if (s == 0) throw DomainError("task_weights: empty support set");
        total += static_cast<double>(s);
    }
    std::vector<double> rho;
    rho.reserve(k);
    for (std::size_t s : support_sizes) rho.push_back(static_cast<double>(s) / total);
    return rho;
}

ParamList inner_adapt(const ParamList& theta, const TaskObjective& task, double lr, std::size_t steps,
                      std::size_t batch, Rng* rng) {
    if (steps == 0) throw ContractError("inner_adapt: steps must be >= 1");
    if (task.size(Split::support) == 0) throw DomainError("inner_adapt: empty support set");
    ParamList adapted = theta;
    ParamList grads;
    for (std::size_t step = 0; step < steps; ++step) {
        const std::vector<std::size_t> rows = sample_rows(task.size(Split::support), batch, rng);
        require_finite(task.loss(adapted, Split::support, rows, &grads), "inner_adapt");
        sgd_step(adapted, grads, lr);
    }
    return adapted;
}

MetaTrainResult meta_train(const ParamList& init, std::span<const TaskObjective* const> tasks,
                           const MetaConfig& config) {
    config.validate();
    if (tasks.empty()) throw ConfigError("meta_train: no tasks");
    const std::size_t width = tasks.front()->input_width();
    for (std::size_t k = 1; k < tasks.size(); ++k) {
        if (tasks[k]->input_width() != width)
            throw ConfigError("meta_train: task " + std::to_string(k) + " has input width " +
                              std::to_string(tasks[k]->input_width()) + ", task 0 has " + std::to_string(width) +
                              "; align tasks to a common dimension first");
    }
    std::vector<std::size_t> sizes;
    for (const TaskObjective* t : tasks) sizes.push_back(t->size(Split::support));
    const std::vector<double> rho = task_weights(sizes, config.weighting);

    MetaTrainResult result;
    result.params = init;
    Optimizer outer({.kind = config.outer_optimizer, .learning_rate = config.outer_lr});
    ParamList grads, total;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        total.clear();
        for (const Matrix& p : result.params) total.emplace_back(p.rows(), p.cols());
        double loss_sum = 0.0;
        for (std::size_t k = 0; k < tasks.size(); ++k) {
            Rng rng = make_rng(config.seed, (static_cast<std::uint64_t>(it) << 16) ^ k);
            const ParamList adapted =
                inner_adapt(result.params, *tasks[k], config.inner_lr, config.inner_steps, config.batch, &rng);
            const std::vector<std::size_t> rows = sample_rows(tasks[k]->size(config.outer_split), config.batch, &rng);
            const double loss = tasks[k]->loss(adapted, config.outer_split, rows, &grads);
            require_finite(loss, "meta_train iteration " + std::to_string(it));
            loss_sum += rho[k] * loss;
            for (std::size_t i = 0; i < total.size(); ++i) axpy(total[i], rho[k], grads[i]);
        }
        outer.step(result.params, total);
        result.outer_loss.push_back(loss_sum);
    }
    return result;
}

std::optional<std::size_t> first_accurate_step(std::span<const AdaptRow> curve, double eps) {
    for (const AdaptRow& row : curve)
        if (row.residual < eps) return row.step;
    return std::nullopt;
}

AdaptResult meta_test_adapt(const ParamList& start, const TaskObjective& task, const AdaptConfig& config,
                            std::optional<double> reference_loss) {
    if (task.size(Split::support) == 0) throw DomainError("meta_test_adapt: empty support set");
    if (!(config.lr >= 0.0)) throw ConfigError("meta_test_adapt: lr must be non-negative");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    AdaptResult result;
    result.params = start;
    ParamList grads;
    for (std::size_t j = 0;; ++j) {
        AdaptRow row;
        row.step = j;
        const bool last = j == config.max_steps;
        row.support_loss = task.loss(result.params, Split::support, {}, last ? nullptr : &grads);
        row.query_loss = task.loss(result.params, Split::query, {}, nullptr);
        require_finite(row.support_loss, "meta_test_adapt step " + std::to_string(j));
        if (reference_loss) {
            const double gap = row.query_loss - *reference_loss;
            row.residual = gap * gap;
        } else {
            row.residual = nan;
        }
        row.mde = task.mde(result.params, Split::query).value_or(nan);
        result.curve.push_back(row);
        if (!result.j && row.residual < config.eps_acc) result.j = j;
        if (last) break;
        sgd_step(result.params, grads, config.lr);
    }
    return result;
}

double reference_query_loss(const ParamList& start, const TaskObjective& task, const ReferenceOptions& options) {
    ParamList params = start;
    ParamList grads;
    std::vector<double> history;
    for (std::size_t step = 0; step < options.max_steps; ++step) {
        const double loss = task.loss(params, Split::support, {}, &grads);
        require_finite(loss, "reference_query_loss");
        history.push_back(loss);
        if (history.size() > options.window &&
            std::abs(history[history.size() - 1 - options.window] - loss) < options.tolerance)
            break;
        sgd_step(params, grads, options.lr);
    }
    return task.loss(params, Split::query, {}, nullptr);
}

double ReferenceCache::get(const std::string& task_id, const ParamList& start, const TaskObjective& task,
                           const ReferenceOptions& options) {
    {
        std::lock_guard lock(mutex_);
        if (auto it = values_.find(task_id); it != values_.end()) return it->second;
    }
    const double value = reference_query_loss(start, task, options);
    std::lock_guard lock(mutex_);
    return values_.emplace(task_id, value).first->second;
}

std::size_t ReferenceCache::size() const {
    std::lock_guard lock(mutex_);
    return values_.size();
}

namespace {

model::SampleSet project(const model::SampleSet& flat, const PcaProjection& p) {
    model::SampleSet out;
    out.nodes = p.output_dims();
    out.channels = 1;
    out.inputs = pca_apply(p, flat.inputs);
    out.targets = flat.targets;
    return out;
}

/// Flips latent axes so each correlates positively with whichever support
/// coordinate it tracks more strongly. Keeps axes comparable across tasks,
/// which an unsupervised sign rule cannot guarantee.
void orient_to_targets(PcaProjection& p, const Matrix& latent, const Matrix& targets) {
    const std::size_t n = latent.rows();
    double mx = 0.0, my = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        mx += targets(r, 0);
        my += targets(r, 1);
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t j = 0; j < latent.cols(); ++j) {
        double cx = 0.0, cy = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            cx += latent(r, j) * (targets(r, 0) - mx);
            cy += latent(r, j) * (targets(r, 1) - my);
        }
        const double lead = std::abs(cx) >= std::abs(cy) ? cx : cy;
        if (lead < 0.0)
            for (std::size_t i = 0; i < p.components.rows(); ++i) p.components(i, j) = -p.components(i, j);
    }
}

}  // namespace

Task align_task(const RawTask& raw, std::size_t m, bool use_imu) {
    Task task;
    task.id = raw.id;
    task.normalization = model::fit_normalization(raw.support, use_imu);
    const model::SampleSet support = model::encode_flat_inputs(raw.support, task.normalization);
    const model::SampleSet query = model::encode_flat_inputs(raw.query, task.normalization);
    task.projection = pca_fit(support.inputs, m);
    orient_to_targets(*task.projection, pca_apply(*task.projection, support.inputs), support.targets);
    task.support = project(support, *task.projection);
    task.query = project(query, *task.projection);
    return task;
}

std::vector<Task> align_tasks(const std::vector<RawTask>& tasks, std::size_t m, bool use_imu) {
    std::string too_small;
    for (const RawTask& t : tasks) {
        const std::size_t limit = t.support.aps + (use_imu ? t.support.imu_dims : 0);
        if (m > limit) too_small += " " + t.id + "=" + std::to_string(limit);
    }
    if (!too_small.empty())
        throw ConfigError("align_tasks: m=" + std::to_string(m) + " exceeds the flattened width of some tasks;" +
                          " per-task maxima:" + too_small);
    std::vector<Task> out;
    out.reserve(tasks.size());
    for (const RawTask& t : tasks) out.push_back(align_task(t, m, use_imu));
    return out;
}

RawTask split_task(std::string id, const radio::FingerprintDataset& data, double support_fraction,
                   std::uint64_t seed) {
    const std::size_t n = data.size();
    if (n < 2) throw DomainError("split_task: need at least two samples");
    if (!(support_fraction > 0.0 && support_fraction < 1.0))
        throw ConfigError("split_task: support fraction must lie in (0, 1)");
    std::vector<std::size_t> order = all_rows(n);
    Rng rng = make_rng(seed, 0x5b117);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cut = static_cast<std::size_t>(std::llround(support_fraction * static_cast<double>(n)));
    cut = std::clamp<std::size_t>(cut, 1, n - 1);
    std::vector<std::size_t> support(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<std::size_t> query(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end());
    std::sort(support.begin(), support.end());
    std::sort(query.begin(), query.end());
    return {std::move(id), radio::subset(data, support), radio::subset(data, query)};
}

model::TargetScaler fit_support_scaler(std::span<const Task> tasks) {
    std::size_t n = 0;
    for (const Task& t : tasks) n += t.support.size();
    Matrix all(n, 2);
    std::size_t row = 0;
    for (const Task& t : tasks)
        for (std::size_t r = 0; r < t.support.size(); ++r, ++row) {
            all(row, 0) = t.support.targets(r, 0);
            all(row, 1) = t.support.targets(r, 1);
        }
    return model::fit_target_scaler(all);
}

}  // namespace mgl::meta
