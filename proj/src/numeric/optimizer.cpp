#include "metagraphloc/optimizer.hpp"

#include <cmath>

#include "metagraphloc/errors.hpp"

namespace mgl {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerSettings settings) : settings_(settings) {}

void Optimizer::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("optimizer: " + std::to_string(params.size()) + " params but " +
                             std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i])) {
            throw DimensionError("optimizer: parameter " + std::to_string(i) + " is " +
                                 params[i].shape_string() + " but gradient is " +
                                 grads[i].shape_string());
        }
    }

    if (settings_.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i)
            axpy(params[i], -settings_.learning_rate, grads[i]);
        ++steps_;
        return;
    }

    if (first_moment_.empty()) {
        for (const Matrix& p : params) {
            first_moment_.emplace_back(p.rows(), p.cols());
            second_moment_.emplace_back(p.rows(), p.cols());
        }
    } else if (first_moment_.size() != params.size()) {
        throw DimensionError("optimizer: parameter count changed between steps");
    }

    ++steps_;
    const double b1 = settings_.beta1, b2 = settings_.beta2;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& m = first_moment_[i];
        Matrix& v = second_moment_[i];
        if (!m.same_shape(params[i])) throw DimensionError("optimizer: moment buffer shape changed");
        for (std::size_t e = 0; e < m.size(); ++e) {
            const double g = grads[i][e];
            m[e] = b1 * m[e] + (1.0 - b1) * g;
            v[e] = b2 * v[e] + (1.0 - b2) * g * g;
            const double m_hat = m[e] / c1;
            const double v_hat = v[e] / c2;
            params[i][e] -= settings_.learning_rate * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
        }
    }
}

}  // namespace mgl
