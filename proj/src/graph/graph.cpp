#include "metagraphloc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/log.hpp"
#include "metagraphloc/text_format.hpp"

namespace mgl::graph {

namespace {

Matrix threshold_matrix(const Matrix& raw, double threshold, bool weighted) {
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double mag = std::abs(raw[i]);
        if (mag >= threshold) out[i] = weighted ? mag : 1.0;
    }
    return out;
}

}  // namespace

std::string to_string(GraphKind kind) {
    switch (kind) {
        case GraphKind::corr: return "corr";
        case GraphKind::prob: return "prob";
        case GraphKind::dynamic_knn: return "dynamic_knn";
    }
    return "?";
}

GraphKind parse_graph_kind(const std::string& name) {
    if (name == "corr") return GraphKind::corr;
    if (name == "prob") return GraphKind::prob;
    if (name == "dynamic_knn" || name == "knn") return GraphKind::dynamic_knn;
    throw ConfigError("unknown graph kind '" + name + "'");
}

Matrix pearson_matrix(const radio::FingerprintDataset& data) {
    const std::size_t n = data.size(), m = data.aps;
    if (n < 2) throw DomainError("pearson_matrix: need at least 2 samples");
    Matrix centered(n, m);
    for (std::size_t ap = 0; ap < m; ++ap) {
        double mu = 0.0;
        for (const auto& fp : data.samples) mu += fp.rssi[ap];
        mu /= static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) centered(k, ap) = data.samples[k].rssi[ap] - mu;
    }
    const Matrix cross = matmul(centered.transposed(), centered);
    Matrix out(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) {
                out(i, j) = 1.0;
                continue;
            }
            const double denom = std::sqrt(cross(i, i) * cross(j, j));
            out(i, j) = denom > 0.0 ? std::clamp(cross(i, j) / denom, -1.0, 1.0) : 0.0;
        }
    }
    return out;
}

Matrix joint_appearance_matrix(const radio::FingerprintDataset& data) {
    const std::size_t m = data.aps;
    Matrix both(m, m);
    std::vector<double> seen(m, 0.0);
    for (const auto& fp : data.samples) {
        for (std::size_t i = 0; i < m; ++i) {
            if (!fp.mask[i]) continue;
            seen[i] += 1.0;
            for (std::size_t j = 0; j < m; ++j)
                if (fp.mask[j]) both(i, j) += 1.0;
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) both(i, j) = seen[i] > 0.0 ? both(i, j) / seen[i] : 0.0;
    }
    return both;
}

GraphSpec pearson_adjacency(const radio::FingerprintDataset& data, double threshold, bool weighted) {
    GraphSpec g{GraphKind::corr, threshold_matrix(pearson_matrix(data), threshold, weighted), threshold};
    for (std::size_t i = 0; i < g.nodes(); ++i) g.adjacency(i, i) = 1.0;
    return g;
}

GraphSpec joint_appearance_adjacency(const radio::FingerprintDataset& data, double threshold,
                                     bool weighted) {
    Matrix raw = joint_appearance_matrix(data);
    Matrix sym(raw.rows(), raw.cols());
    for (std::size_t i = 0; i < raw.rows(); ++i)
        for (std::size_t j = 0; j < raw.cols(); ++j) sym(i, j) = std::max(raw(i, j), raw(j, i));
    return GraphSpec{GraphKind::prob, threshold_matrix(sym, threshold, weighted), threshold};
}

Neighborhoods knn_neighbors(const Matrix& features, std::size_t k) {
    const std::size_t n = features.rows();
    if (n < 2) throw DomainError("knn_neighbors: need at least 2 nodes");
    if (k == 0) throw DomainError("knn_neighbors: k must be >= 1");
    Neighborhoods out;
    out.nodes = n;
    out.clamped = k > n - 1;
    out.k = std::min(k, n - 1);

    Matrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        auto a = features.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            auto b = features.row(j);
            double s = 0.0;
            for (std::size_t c = 0; c < a.size(); ++c) {
                const double d = a[c] - b[c];
                s += d * d;
            }
            dist(i, j) = dist(j, i) = s;
        }
    }

    out.indices.resize(n * out.k);
    std::vector<std::size_t> order(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order[w++] = j;
        auto closer = [&](std::size_t a, std::size_t b) {
            return dist(i, a) < dist(i, b) || (dist(i, a) == dist(i, b) && a < b);
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(out.k),
                          order.end(), closer);
        std::copy_n(order.begin(), out.k, out.indices.begin() + static_cast<std::ptrdiff_t>(i * out.k));
    }
    return out;
}

GraphSpec dynamic_knn_edges(const Matrix& features, std::size_t k) {
    const Neighborhoods nb = knn_neighbors(features, k);
    if (nb.clamped) {
        log::warn("dynamic_knn_edges: k=" + std::to_string(k) + " clamped to " +
                  std::to_string(nb.k) + " for " + std::to_string(nb.nodes) + " nodes");
    }
    GraphSpec g{GraphKind::dynamic_knn, Matrix(nb.nodes, nb.nodes), static_cast<double>(nb.k)};
    for (std::size_t i = 0; i < nb.nodes; ++i)
        for (std::size_t j : nb.of(i)) g.adjacency(i, j) = 1.0;
    return g;
}

NormalizedAdjacency normalize_adjacency(const Matrix& adjacency) {
    const std::size_t n = adjacency.rows();
    if (adjacency.cols() != n) throw DimensionError("normalize_adjacency: matrix is not square");
    for (double v : adjacency.values())
        if (v < 0.0) throw DomainError("normalize_adjacency: negative entry");
    Matrix hat = adjacency;
    for (std::size_t i = 0; i < n; ++i) hat(i, i) += 1.0;
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = hat.row(i);
        const double deg = std::accumulate(row.begin(), row.end(), 0.0);
        if (!(deg > 0.0)) throw ContractError("normalize_adjacency: zero degree after self-loops");
        inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) hat(i, j) *= inv_sqrt[i] * inv_sqrt[j];
    return {std::move(hat)};
}

NormalizedAdjacency normalize_adjacency(const GraphSpec& graph) {
    return normalize_adjacency(graph.adjacency);
}

void write_adjacency_csv(const Matrix& adjacency, std::ostream& out) {
    for (std::size_t i = 0; i < adjacency.rows(); ++i) {
        const auto row = adjacency.row(i);
        out << join_doubles(std::vector<double>(row.begin(), row.end())) << '\n';
    }
}

}  // namespace mgl::graph
