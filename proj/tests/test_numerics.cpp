#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <vector>

#include "csplat/numerics.hpp"
#include "doctest.h"

using namespace csplat;

TEST_CASE("identity layer passes input and upstream through") {
    DiffLayer layer(2, 2);
    layer.weight(0, 0) = 1.0;
    layer.weight(1, 1) = 1.0;
    double x[2] = {1, 2}, y[2];
    layer.forward(x, y);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == 2.0);

    double up[2] = {0.3, -0.7}, dx[2];
    LayerGradients g(layer);
    layer.backward(x, up, g.d_weights, g.d_biases, dx);
    CHECK(dx[0] == 0.3);
    CHECK(dx[1] == -0.7);
}

TEST_CASE("scalar layer y = 3x + 1") {
    DiffLayer layer(1, 1);
    layer.weight(0, 0) = 3.0;
    layer.biases[0] = 1.0;
    double x = 2.0, y = 0.0;
    layer.forward({&x, 1}, {&y, 1});
    CHECK(y == 7.0);
    double up = 1.0, dx = 0.0;
    LayerGradients g(layer);
    layer.backward({&x, 1}, {&up, 1}, g.d_weights, g.d_biases, {&dx, 1});
    CHECK(dx == 3.0);
    CHECK(g.d_weights[0] == 2.0);
    CHECK(g.d_biases[0] == 1.0);
}

TEST_CASE("random layer gradients match central finite differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> dist;
    const double eps = 1e-4;
    DiffLayer layer(5, 4);
    for (double& w : layer.weights) w = dist(rng);
    for (double& b : layer.biases) b = dist(rng);
    std::vector<double> x(5), up(4);
    for (double& v : x) v = dist(rng);
    for (double& v : up) v = dist(rng);

    auto loss = [&](const DiffLayer& l, const std::vector<double>& xx) {
        std::vector<double> y(4);
        l.forward(xx, y);
        double s = 0;
        for (int i = 0; i < 4; ++i) s += y[i] * up[i];
        return s;
    };

    LayerGradients g(layer);
    std::vector<double> dx(5);
    layer.backward(x, up, g.d_weights, g.d_biases, dx);

    for (size_t i = 0; i < layer.weights.size(); ++i) {
        DiffLayer lp = layer, lm = layer;
        lp.weights[i] += eps;
        lm.weights[i] -= eps;
        double fd = (loss(lp, x) - loss(lm, x)) / (2 * eps);
        CHECK(g.d_weights[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += eps;
        xm[i] -= eps;
        double fd = (loss(layer, xp) - loss(layer, xm)) / (2 * eps);
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("tanh backward uses the forward output") {
    double x = 0.4, y = 0.0;
    tanh_forward({&x, 1}, {&y, 1});
    CHECK(y == doctest::Approx(std::tanh(0.4)));
    double up = 1.0, dx = 0.0;
    tanh_backward({&y, 1}, {&up, 1}, {&dx, 1});
    CHECK(dx == doctest::Approx(1.0 - std::tanh(0.4) * std::tanh(0.4)));
}

TEST_CASE("grid sample at a cell corner returns that cell's feature") {
    FeatureGrid grid(4, 2);
    grid.data[grid.cell_offset(1, 2, 3)] = 5.0;
    grid.data[grid.cell_offset(1, 2, 3) + 1] = -2.0;
    double f[2];
    grid.sample(Vec3{1, 2, 3}, f);
    CHECK(f[0] == 5.0);
    CHECK(f[1] == -2.0);
}

TEST_CASE("constant corners interpolate to the constant") {
    FeatureGrid grid(3, 1);
    for (double& v : grid.data) v = 4.25;
    double f[1];
    grid.sample(Vec3{0.5, 1.3, 0.7}, f);
    CHECK(f[0] == doctest::Approx(4.25).epsilon(1e-15));
}

TEST_CASE("grid positional and feature gradients match finite differences") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> udist(0.2, 2.8);
    std::normal_distribution<double> ndist;
    FeatureGrid grid(4, 3);
    for (double& v : grid.data) v = ndist(rng);
    const double eps = 1e-5;

    for (int trial = 0; trial < 20; ++trial) {
        Vec3 p{udist(rng), udist(rng), udist(rng)};
        std::vector<double> up(3);
        for (double& v : up) v = ndist(rng);

        auto loss = [&](const FeatureGrid& g, const Vec3& q) {
            double f[3];
            g.sample(q, f);
            return f[0] * up[0] + f[1] * up[1] + f[2] * up[2];
        };

        std::vector<double> d_grid(grid.data.size(), 0.0);
        Vec3 dp;
        grid.sample_backward(p, up, d_grid, dp);

        double analytic[3] = {dp.x, dp.y, dp.z};
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 pp = p, pm = p;
            double* pcomp[3] = {&pp.x, &pp.y, &pp.z};
            double* mcomp[3] = {&pm.x, &pm.y, &pm.z};
            *pcomp[axis] += eps;
            *mcomp[axis] -= eps;
            double fd = (loss(grid, pp) - loss(grid, pm)) / (2 * eps);
            CHECK(analytic[axis] == doctest::Approx(fd).epsilon(1e-4));
        }
        for (size_t i = 0; i < grid.data.size(); ++i) {
            if (d_grid[i] == 0.0) continue;
            FeatureGrid gp = grid, gm = grid;
            gp.data[i] += eps;
            gm.data[i] -= eps;
            double fd = (loss(gp, p) - loss(gm, p)) / (2 * eps);
            CHECK(d_grid[i] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("out-of-bounds samples clamp with zero positional gradient") {
    FeatureGrid grid(3, 1);
    for (size_t i = 0; i < grid.data.size(); ++i) grid.data[i] = double(i);
    double edge[1], beyond[1];
    grid.sample(Vec3{2.0, 1.0, 1.0}, edge);
    grid.sample(Vec3{5.0, 1.0, 1.0}, beyond);
    CHECK(edge[0] == beyond[0]);

    double up = 1.0;
    std::vector<double> d_grid(grid.data.size(), 0.0);
    Vec3 dp;
    grid.sample_backward(Vec3{5.0, 1.0, 1.0}, {&up, 1}, d_grid, dp);
    CHECK(dp.x == 0.0);
}
