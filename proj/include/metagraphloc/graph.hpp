#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "metagraphloc/matrix.hpp"
#include "metagraphloc/radio.hpp"

namespace mgl::graph {

enum class GraphKind { corr, prob, dynamic_knn };

std::string to_string(GraphKind kind);
GraphKind parse_graph_kind(const std::string& name);

/// AP-graph adjacency. For thresholded static graphs the entries are 0/1; in
/// weighted mode surviving entries keep |a_ij|.
struct GraphSpec {
    GraphKind kind = GraphKind::corr;
    Matrix adjacency;
    double parameter = 0.0;  ///< threshold for corr/prob, k for dynamic_knn

    std::size_t nodes() const noexcept { return adjacency.rows(); }
};

/// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
struct NormalizedAdjacency {
    Matrix matrix;
};

/// Raw Pearson correlation between AP RSSI columns. Columns with zero variance
/// correlate 0 with every other column; the diagonal is 1.
Matrix pearson_matrix(const radio::FingerprintDataset& data);

/// Raw joint-appearance matrix: a_ij = #(i and j detected) / #(i detected).
/// Asymmetric in general; rows of never-detected APs are 0.
Matrix joint_appearance_matrix(const radio::FingerprintDataset& data);

/// Thresholds |a_ij| >= threshold to 1 (or keeps |a_ij| when `weighted`); diagonal 1.
GraphSpec pearson_adjacency(const radio::FingerprintDataset& data, double threshold,
                            bool weighted = false);

/// Symmetrises the raw matrix with max(a_ij, a_ji), then thresholds like pearson_adjacency.
/// The diagonal is 1 for APs that were ever detected and 0 otherwise.
GraphSpec joint_appearance_adjacency(const radio::FingerprintDataset& data, double threshold,
                                     bool weighted = false);

/// Row-wise k nearest neighbours under Euclidean distance between feature rows.
struct Neighborhoods {
    std::size_t nodes = 0;
    std::size_t k = 0;                ///< neighbours per node after clamping
    bool clamped = false;             ///< requested k exceeded nodes - 1
    std::vector<std::size_t> indices; ///< nodes * k, row i sorted by (distance, index)

    std::span<const std::size_t> of(std::size_t node) const {
        return {indices.data() + node * k, k};
    }
};

/// Self is excluded; ties break toward the lower node index.
Neighborhoods knn_neighbors(const Matrix& features, std::size_t k);

/// Directed 0/1 KNN adjacency (row i marks the neighbours of node i). Warns when k is clamped.
GraphSpec dynamic_knn_edges(const Matrix& features, std::size_t k);

NormalizedAdjacency normalize_adjacency(const Matrix& adjacency);
NormalizedAdjacency normalize_adjacency(const GraphSpec& graph);

void write_adjacency_csv(const Matrix& adjacency, std::ostream& out);

}  // namespace mgl::graph
