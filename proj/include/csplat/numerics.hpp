#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csplat/vecmath.hpp"

namespace csplat {

// Dense affine layer y = Wx + b with hand-derived backward. W is stored
// row-major (out_dim x in_dim). Backward is stateless given the forward input,
// so layers can be shared across threads; gradient buffers belong to callers.
struct DiffLayer {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<double> weights;  // out_dim * in_dim
    std::vector<double> biases;   // out_dim

    DiffLayer() = default;
    DiffLayer(int in, int out)
        : in_dim(in), out_dim(out), weights(size_t(out) * in, 0.0), biases(out, 0.0) {}

    double& weight(int row, int col) { return weights[size_t(row) * in_dim + col]; }
    double weight(int row, int col) const { return weights[size_t(row) * in_dim + col]; }

    void forward(std::span<const double> x, std::span<double> y) const;
    // Accumulates dW/db into the given buffers and writes dx.
    void backward(std::span<const double> x, std::span<const double> upstream,
                  std::span<double> d_weights, std::span<double> d_biases,
                  std::span<double> dx) const;
};

struct LayerGradients {
    std::vector<double> d_weights;
    std::vector<double> d_biases;

    explicit LayerGradients(const DiffLayer& layer)
        : d_weights(layer.weights.size(), 0.0), d_biases(layer.biases.size(), 0.0) {}
    void clear() {
        d_weights.assign(d_weights.size(), 0.0);
        d_biases.assign(d_biases.size(), 0.0);
    }
    void accumulate(const LayerGradients& o) {
        for (size_t i = 0; i < d_weights.size(); ++i) d_weights[i] += o.d_weights[i];
        for (size_t i = 0; i < d_biases.size(); ++i) d_biases[i] += o.d_biases[i];
    }
};

void tanh_forward(std::span<const double> x, std::span<double> y);
// upstream through tanh given the forward *output* y.
void tanh_backward(std::span<const double> y, std::span<const double> upstream,
                   std::span<double> dx);

// Dense res^3 x dim trainable feature volume with trilinear sampling.
// Sample coordinates live in grid units [0, res-1]; out-of-bounds coordinates
// clamp to the boundary and the clamped axis gets zero positional gradient.
struct FeatureGrid {
    int res = 0;
    int dim = 0;
    std::vector<double> data;  // ((x*res + y)*res + z)*dim + c

    FeatureGrid() = default;
    FeatureGrid(int res_, int dim_)
        : res(res_), dim(dim_), data(size_t(res_) * res_ * res_ * dim_, 0.0) {}

    size_t cell_offset(int x, int y, int z) const {
        return ((size_t(x) * res + y) * res + z) * dim;
    }

    void sample(const Vec3& p, std::span<double> feature) const;
    // d_grid has the same layout as data; d_p receives the positional gradient.
    void sample_backward(const Vec3& p, std::span<const double> d_feature,
                         std::span<double> d_grid, Vec3& d_p) const;
};

}  // namespace csplat
