#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "metagraphloc/matrix.hpp"

namespace mgl {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First-order optimizer holding per-parameter state.
///
/// Moment buffers are shaped on the first step() and every later call must pass
/// parameters of the same shapes.
class Optimizer {
public:
    explicit Optimizer(OptimizerSettings settings);

    void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads);

    const OptimizerSettings& settings() const noexcept { return settings_; }
    std::size_t steps() const noexcept { return steps_; }

private:
    OptimizerSettings settings_;
    std::size_t steps_ = 0;
    std::vector<Matrix> first_moment_;
    std::vector<Matrix> second_moment_;
};

}  // namespace mgl
