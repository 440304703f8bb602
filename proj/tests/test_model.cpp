#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metagraphloc/errors.hpp"
#include "metagraphloc/features.hpp"
#include "metagraphloc/graph.hpp"
#include "metagraphloc/log.hpp"
#include "metagraphloc/model.hpp"
#include "metagraphloc/radio.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mgl;
using namespace mgl::model;
using mgl::testing::numeric_gradient;
using mgl::testing::random_matrix;
using mgl::testing::relative_error;

namespace {

Matrix relu_of(Matrix m) {
    for (double& v : m.values()) v = std::max(v, 0.0);
    return m;
}

// Random node inputs flattened per sample, targets inside a 10 x 10 room.
SampleSet random_samples(Rng& rng, std::size_t n, std::size_t nodes, std::size_t channels) {
    SampleSet s;
    s.nodes = nodes;
    s.channels = channels;
    s.inputs = random_matrix(n, nodes * channels, rng, 0.0, 1.0);
    s.targets = random_matrix(n, 2, rng, 0.0, 10.0);
    return s;
}

ModelSpec tiny_dec(std::size_t nodes, std::size_t channels) {
    ModelSpec spec;
    spec.arch = Architecture::dec;
    spec.nodes = nodes;
    spec.channels = channels;
    spec.graph_widths = {4, 3};
    spec.fc_widths = {6};
    spec.k_neigh = 2;
    return spec;
}

// A neighbour list for `rows` rows with k entries each, never listing the row itself.
std::vector<std::size_t> random_neighbours(Rng& rng, std::size_t rows, std::size_t k) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rows; ++i) {
        std::vector<std::size_t> pool;
        for (std::size_t j = 0; j < rows; ++j)
            if (j != i) pool.push_back(j);
        std::shuffle(pool.begin(), pool.end(), rng);
        out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    }
    return out;
}

double model_mde(const Matrix& pred, const Matrix& truth) {
    double s = 0.0;
    for (std::size_t r = 0; r < pred.rows(); ++r) s += std::hypot(pred(r, 0) - truth(r, 0), pred(r, 1) - truth(r, 1));
    return s / static_cast<double>(pred.rows());
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("node features by hand") {
    const auto d = oracle::dataset_from_rssi({{-110, -60, -30}});
    NormalizationParams norm;
    norm.rssi_min = -110;
    norm.rssi_max = -30;
    norm.use_imu = false;
    const Matrix x = build_node_features(d.samples[0], norm);
    REQUIRE(x.rows() == 3);
    REQUIRE(x.cols() == 1);
    CHECK(x(0, 0) == 0.0);
    CHECK(x(1, 0) == doctest::Approx(0.625).epsilon(1e-15));
    CHECK(x(2, 0) == 1.0);
}

TEST_CASE("imu vector is broadcast to every node") {
    auto d = oracle::dataset_from_rssi({{-110, -110}, {-70, -50}});
    d.imu_dims = 2;
    d.samples[0].imu = {1.0, 3.0};
    d.samples[1].imu = {3.0, 3.0};
    const NormalizationParams norm = fit_normalization(d, true);
    CHECK(norm.imu_mean == std::vector<double>{2.0, 3.0});
    CHECK(norm.imu_scale == doctest::Approx(1.0));  // sqrt(1 + 0)
    const Matrix x = build_node_features(d.samples[0], norm);
    REQUIRE(x.cols() == 3);
    CHECK(x(0, 0) == 0.0);
    CHECK(x(1, 0) == 0.0);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(x(i, 1) == doctest::Approx(-1.0));
        CHECK(x(i, 2) == 0.0);
    }
    const NormalizationParams rssi_only = fit_normalization(d, false);
    CHECK(build_node_features(d.samples[0], rssi_only).cols() == 1);
    CHECK(build_flat_features(d.samples[1], norm).size() == 4);
}

TEST_CASE("imu arity mismatch is rejected") {
    auto d = oracle::dataset_from_rssi({{-60, -70}});
    d.imu_dims = 1;
    d.samples[0].imu = {0.5};
    const NormalizationParams norm = fit_normalization(d, true);
    radio::Fingerprint fp = d.samples[0];
    fp.imu = {0.5, 0.5};
    CHECK_THROWS_AS(build_node_features(fp, norm), DimensionError);
}

TEST_CASE("gcn with identity propagation and weights is the identity on non-negative input") {
    Rng rng = make_rng(41, 0);
    const Matrix x = random_matrix(4, 3, rng, 0.0, 2.0);
    const graph::NormalizedAdjacency id{Matrix::identity(4)};
    CHECK(gcn_forward(x, id, {Matrix::identity(3)}) == x);
}

TEST_CASE("two gcn layers equal the hand composition") {
    Rng rng = make_rng(42, 0);
    const Matrix a{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}};
    const graph::NormalizedAdjacency p = graph::normalize_adjacency(a);
    const Matrix x = random_matrix(3, 2, rng), w1 = random_matrix(2, 4, rng), w2 = random_matrix(4, 3, rng);
    const Matrix n = oracle::normalized(a);
    const Matrix expect = relu_of(matmul(matmul(n, relu_of(matmul(matmul(n, x), w1))), w2));
    CHECK(max_abs_difference(gcn_forward(x, p, {w1, w2}), expect) < 1e-14);
}

TEST_CASE("gcn is permutation equivariant") {
    Rng rng = make_rng(43, 0);
    const std::size_t m = 6;
    Matrix a(m, m);
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) a(i, j) = a(j, i) = u(rng) < 0.5 ? 1.0 : 0.0;
    const Matrix x = random_matrix(m, 3, rng), w1 = random_matrix(3, 5, rng), w2 = random_matrix(5, 2, rng);
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix pa(m, m), px(m, 3);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) pa(i, j) = a(perm[i], perm[j]);
        for (std::size_t c = 0; c < 3; ++c) px(i, c) = x(perm[i], c);
    }
    const Matrix h = gcn_forward(x, graph::normalize_adjacency(a), {w1, w2});
    const Matrix ph = gcn_forward(px, graph::normalize_adjacency(pa), {w1, w2});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(ph(i, c) - h(perm[i], c)) < 1e-9);
}

TEST_CASE("gcn rejects a mismatched adjacency") {
    const graph::NormalizedAdjacency id{Matrix::identity(3)};
    CHECK_THROWS_AS(gcn_forward(Matrix(4, 2), id, {Matrix::identity(2)}), DimensionError);
}

TEST_CASE("edgeconv with zero Omega and identity Phi applies the activation") {
    Rng rng = make_rng(44, 0);
    const Matrix x = random_matrix(5, 3, rng);
    Matrix expect = x;
    for (double& v : expect.values()) v = v >= 0 ? v : 0.01 * v;
    for (Aggregation agg : {Aggregation::max, Aggregation::mean}) {
        const Matrix h = edgeconv_forward(x, {Matrix(3, 3), Matrix::identity(3)}, {.k = 3, .aggregation = agg});
        CHECK(max_abs_difference(h, expect) < 1e-15);
    }
    // add sums k identical terms
    const Matrix h = edgeconv_forward(x, {Matrix(3, 3), Matrix::identity(3)}, {.k = 3, .aggregation = Aggregation::add});
    CHECK(max_abs_difference(h, scaled(expect, 3.0)) < 1e-15);
}

TEST_CASE("edgeconv on identical nodes reduces to the centre term") {
    Rng rng = make_rng(45, 0);
    const Matrix row = random_matrix(1, 3, rng), omega = random_matrix(3, 2, rng), phi = random_matrix(3, 2, rng);
    Matrix x(4, 3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t c = 0; c < 3; ++c) x(i, c) = row(0, c);
    Matrix expect = matmul(x, phi);
    for (double& v : expect.values()) v = v >= 0 ? v : 0.01 * v;
    CHECK(max_abs_difference(edgeconv_forward(x, {omega, phi}, {.k = 2}), expect) < 1e-15);
}

TEST_CASE("edgeconv on three nodes with k=1 by hand") {
    // Neighbours: 0 -> 1, 1 -> 0 (tie broken by index), 2 -> 1.
    const Matrix x{{0}, {1}, {3}};
    const Matrix omega{{2, -1}}, phi{{1, 0.5}};
    const Matrix h = edgeconv_forward(x, {omega, phi}, {.k = 1, .aggregation = Aggregation::max});
    // node 0: 2*(1-0)+0 = 2,   -1*(1-0)+0 = -1 -> -0.01
    // node 1: 2*(0-1)+1 = -1,  -1*(0-1)+0.5 = 1.5
    // node 2: 2*(1-3)+3 = -1,  -1*(1-3)+1.5 = 3.5
    const Matrix expect{{2, -0.01}, {-0.01, 1.5}, {-0.01, 3.5}};
    CHECK(max_abs_difference(h, expect) < 1e-15);
}

TEST_CASE("edgeconv needs two nodes and a full weight list") {
    CHECK_THROWS_AS(edgeconv_forward(Matrix(1, 2), {Matrix(2, 2), Matrix(2, 2)}, {.k = 1}), DomainError);
    CHECK_THROWS_AS(edgeconv_forward(Matrix(3, 2), {Matrix(2, 2)}, {.k = 1}), DimensionError);
}

TEST_CASE("fused edge aggregation equals gather, add, activate, reduce") {
    const std::size_t rows = 7, cols = 3, k = 3;
    for (Aggregation agg : {Aggregation::max, Aggregation::mean, Aggregation::add}) {
        Rng rng = make_rng(46, static_cast<std::uint64_t>(agg));
        const Matrix p0 = random_matrix(rows, cols, rng), r0 = random_matrix(rows, cols, rng);
        const Matrix target = random_matrix(rows, cols, rng);
        const auto nb = random_neighbours(rng, rows, k);
        std::vector<std::size_t> centre;
        for (std::size_t i = 0; i < rows; ++i) centre.insert(centre.end(), k, i);

        ad::Tape fused;
        const ad::Var fp = fused.parameter(p0), fr = fused.parameter(r0);
        const ad::Var fo = edge_aggregate(fp, fr, nb, k, agg, 0.01);
        fused.backward(ad::mse(fo, fused.constant(target)));

        ad::Tape plain;
        const ad::Var pp = plain.parameter(p0), pr = plain.parameter(r0);
        const ad::Reduce kind = agg == Aggregation::max ? ad::Reduce::max
                                : agg == Aggregation::mean ? ad::Reduce::mean
                                                            : ad::Reduce::sum;
        const ad::Var pre = ad::add(ad::gather_rows(pp, nb), ad::gather_rows(pr, centre));
        const ad::Var po = ad::group_reduce(ad::leaky_relu(pre, 0.01), k, kind);
        plain.backward(ad::mse(po, plain.constant(target)));

        CHECK(max_abs_difference(fo.value(), po.value()) < 1e-14);
        CHECK(max_abs_difference(fused.grad(fp), plain.grad(pp)) < 1e-14);
        CHECK(max_abs_difference(fused.grad(fr), plain.grad(pr)) < 1e-14);
    }
}

TEST_CASE("mean aggregation ignores neighbour enumeration order") {
    const std::size_t rows = 9, cols = 4, k = 5;
    Rng rng = make_rng(47, 0);
    const Matrix p0 = random_matrix(rows, cols, rng, -1e3, 1e3), r0 = random_matrix(rows, cols, rng, -1e-3, 1e-3);
    auto nb = random_neighbours(rng, rows, k);
    ad::Tape t1;
    const Matrix a = edge_aggregate(t1.constant(p0), t1.constant(r0), nb, k, Aggregation::mean, 0.01).value();
    for (std::size_t i = 0; i < rows; ++i)
        std::reverse(nb.begin() + static_cast<std::ptrdiff_t>(i * k),
                     nb.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    ad::Tape t2;
    const Matrix b = edge_aggregate(t2.constant(p0), t2.constant(r0), nb, k, Aggregation::mean, 0.01).value();
    CHECK(a == b);
}

TEST_CASE("edge embedding concatenates") {
    const std::vector<double> a{1}, b{2};
    CHECK(edge_embedding(a, b) == std::vector<double>{1, 2});
    const std::vector<double> same{1, 2, 3};
    const auto pal = edge_embedding(same, same);
    REQUIRE(pal.size() == 6);
    CHECK(pal == std::vector<double>{1, 2, 3, 1, 2, 3});
    CHECK_THROWS_AS(edge_embedding(a, same), DimensionError);
}

TEST_CASE("fc head identity and constant") {
    const Matrix h{{1.5}, {-2.0}};
    CHECK(fc_head(h, {Matrix::identity(2), Matrix(1, 2)}) == Matrix{{1.5, -2.0}});
    CHECK(fc_head(h, {Matrix(2, 2), Matrix{{3, 4}}}) == Matrix{{3, 4}});
    CHECK_THROWS_AS(fc_head(Matrix(3, 1), {Matrix::identity(2), Matrix(1, 2)}), DimensionError);
}

TEST_CASE("two-layer fc head equals the hand composition") {
    Rng rng = make_rng(48, 0);
    const Matrix h = random_matrix(3, 2, rng);
    const Matrix w1 = random_matrix(6, 5, rng), b1 = random_matrix(1, 5, rng);
    const Matrix w2 = random_matrix(5, 2, rng), b2 = random_matrix(1, 2, rng);
    const Matrix flat = h.reshaped(1, 6);
    const Matrix expect = add(matmul(relu_of(add(matmul(flat, w1), b1)), w2), b2);
    CHECK(max_abs_difference(fc_head(h, {w1, b1, w2, b2}), expect) < 1e-12);
}

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
    Rng rng = make_rng(49, 0);
    const SampleSet data = random_samples(rng, 24, 5, 2);
    for (const ModelSpec& spec : {tiny_dec(5, 2), matched_dnn_spec(10, 2, 120)}) {
        const Model m = make_model(spec, 3);
        for (OptimizerKind kind : {OptimizerKind::adam, OptimizerKind::sgd}) {
            TrainConfig cfg;
            cfg.epochs = 3;
            cfg.optimizer.kind = kind;
            cfg.optimizer.learning_rate = 0.0;
            CHECK(train(m, data, cfg).model.params == m.params);
        }
    }
}

TEST_CASE("constant labels are learned") {
    Rng rng = make_rng(50, 0);
    SampleSet data = random_samples(rng, 32, 5, 2);
    for (std::size_t r = 0; r < data.size(); ++r) {
        data.targets(r, 0) = 3.0;
        data.targets(r, 1) = 4.0;
    }
    for (const ModelSpec& spec : {tiny_dec(5, 2), matched_dnn_spec(10, 2, 120)}) {
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.optimizer.learning_rate = 0.01;
        const TrainResult res = train(make_model(spec, 4), data, cfg);
        CHECK(res.loss_history.back() < 1e-3);
        const Matrix pred = predict(res.model, data);
        CHECK(std::abs(pred(0, 0) - 3.0) < 0.05);
        CHECK(std::abs(pred(0, 1) - 4.0) < 0.05);
    }
}

TEST_CASE("training is deterministic in its seed") {
    Rng rng = make_rng(51, 0);
    const SampleSet data = random_samples(rng, 20, 5, 2);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.optimizer.learning_rate = 0.01;
    const Model m = make_model(tiny_dec(5, 2), 5);
    CHECK(train(m, data, cfg).model == train(m, data, cfg).model);
    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    CHECK_FALSE(train(m, data, cfg).model.params == train(m, data, other).model.params);
}

TEST_CASE("divergence aborts with a diagnostic") {
    Rng rng = make_rng(52, 0);
    SampleSet data = random_samples(rng, 8, 5, 2);
    data.targets(0, 0) = 1e200;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.normalize_targets = false;
    CHECK_THROWS_AS(train(make_model(tiny_dec(5, 2), 6), data, cfg), DivergenceError);
}

TEST_CASE("trained DEC beats the centroid predictor") {
    radio::ChannelParams ch;
    ch.sigma = 2.0;
    const radio::RadioEnvironment env = radio::make_environment(20, 40, 30, ch, 53);
    const radio::FingerprintDataset all = radio::generate_dataset(env, 500, {}, 53);
    radio::FingerprintDataset train_set = all, test_set = all;
    train_set.samples.assign(all.samples.begin(), all.samples.begin() + 350);
    test_set.samples.assign(all.samples.begin() + 350, all.samples.end());
    const NormalizationParams norm = fit_normalization(train_set, true);
    const SampleSet tr = encode_graph_inputs(train_set, norm), te = encode_graph_inputs(test_set, norm);

    ModelSpec spec;
    spec.nodes = tr.nodes;
    spec.channels = tr.channels;
    spec.graph_widths = {16, 16};
    spec.fc_widths = {16};
    spec.k_neigh = 8;
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.optimizer.learning_rate = 0.002;
    const TrainResult res = train(make_model(spec, 7), tr, cfg);

    // Oracle: always answer the mean training position.
    double cx = 0.0, cy = 0.0;
    for (std::size_t r = 0; r < tr.size(); ++r) {
        cx += tr.targets(r, 0);
        cy += tr.targets(r, 1);
    }
    Matrix centroid(te.size(), 2);
    for (std::size_t r = 0; r < te.size(); ++r) {
        centroid(r, 0) = cx / static_cast<double>(tr.size());
        centroid(r, 1) = cy / static_cast<double>(tr.size());
    }
    const double model_error = model_mde(predict(res.model, te), te.targets);
    const double centroid_error = model_mde(centroid, te.targets);
    MESSAGE("DEC " << model_error << " m, centroid " << centroid_error << " m");
    CHECK(model_error < centroid_error);
}

TEST_CASE("matched DNN stays within ten percent of the DEC parameter count") {
    for (std::size_t h : {16, 32, 128}) {
        ModelSpec dec;
        dec.nodes = 30;
        dec.channels = 10;
        dec.graph_widths = {h, h};
        dec.fc_widths = {h};
        const std::size_t budget = parameter_count(init_params(dec, 1));
        const ModelSpec dnn = matched_dnn_spec(39, 2, budget);
        const double count = static_cast<double>(parameter_count(init_params(dnn, 1)));
        CHECK(std::abs(count - static_cast<double>(budget)) <= 0.1 * static_cast<double>(budget));
    }
}

TEST_CASE("end-to-end gradients match finite differences") {
    Rng rng = make_rng(54, 0);
    const SampleSet data = random_samples(rng, 3, 5, 3);
    const std::vector<std::size_t> rows{0, 1, 2};

    ModelSpec dec;
    dec.nodes = 5;
    dec.channels = 3;
    dec.graph_widths = {4, 4};
    dec.fc_widths = {4};
    dec.k_neigh = 2;
    ModelSpec dec_mean = dec;
    dec_mean.aggregation = Aggregation::mean;
    ModelSpec dec_concat = dec;
    dec_concat.edge_form = EdgeForm::concat;
    ModelSpec gcn = dec;
    gcn.arch = Architecture::gcn;
    Matrix ring(5, 5);
    for (std::size_t i = 0; i < 5; ++i) ring(i, (i + 1) % 5) = ring((i + 1) % 5, i) = 1.0;

    for (const ModelSpec& spec : {dec, dec_mean, dec_concat, gcn}) {
        CAPTURE(to_string(spec.arch));
        Model m = make_model(spec, 8, spec.arch == Architecture::gcn ? graph::normalize_adjacency(ring).matrix : Matrix{});
        m.scaler = fit_target_scaler(data.targets);
        ParamList grads;
        batch_loss(m, m.params, data, rows, &grads);
        for (std::size_t p = 0; p < m.params.size(); ++p) {
            const Matrix fd = numeric_gradient(
                [&](const Matrix& v) {
                    ParamList probe = m.params;
                    probe[p] = v;
                    return batch_loss(m, probe, data, rows);
                },
                m.params[p]);
            CHECK(relative_error(grads[p], fd) < 1e-3);
        }
    }
}

TEST_CASE("epoch loss is mostly non-increasing over seeded runs") {
    radio::ChannelParams ch;
    ch.sigma = 3.0;
    const radio::RadioEnvironment env = radio::make_environment(12, 40, 30, ch, 55);
    const radio::FingerprintDataset d = radio::generate_dataset(env, 200, {}, 55);
    const NormalizationParams norm = fit_normalization(d, true);
    const SampleSet s = encode_graph_inputs(d, norm);
    ModelSpec spec;
    spec.nodes = s.nodes;
    spec.channels = s.channels;
    spec.graph_widths = {8, 8};
    spec.fc_widths = {8};
    spec.k_neigh = 5;
    int monotone = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TrainConfig cfg;
        cfg.epochs = 6;
        cfg.seed = seed;
        cfg.optimizer.learning_rate = 0.001;
        const auto hist = train(make_model(spec, seed), s, cfg).loss_history;
        monotone += std::is_sorted(hist.rbegin(), hist.rend());
    }
    CHECK(monotone >= 9);
}

}  // TEST_SUITE
