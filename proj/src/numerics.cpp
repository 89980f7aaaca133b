#include "csplat/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace csplat {

void DiffLayer::forward(std::span<const double> x, std::span<double> y) const {
    if (int(x.size()) != in_dim || int(y.size()) != out_dim)
        throw std::invalid_argument("DiffLayer::forward dimension mismatch");
    for (int r = 0; r < out_dim; ++r) {
        double s = biases[r];
        const double* wrow = &weights[size_t(r) * in_dim];
        for (int c = 0; c < in_dim; ++c) s += wrow[c] * x[c];
        y[r] = s;
    }
}

void DiffLayer::backward(std::span<const double> x, std::span<const double> upstream,
                         std::span<double> d_weights, std::span<double> d_biases,
                         std::span<double> dx) const {
    if (int(x.size()) != in_dim || int(upstream.size()) != out_dim ||
        d_weights.size() != weights.size() || int(d_biases.size()) != out_dim ||
        int(dx.size()) != in_dim)
        throw std::invalid_argument("DiffLayer::backward dimension mismatch");
    for (int c = 0; c < in_dim; ++c) dx[c] = 0.0;
    for (int r = 0; r < out_dim; ++r) {
        double u = upstream[r];
        d_biases[r] += u;
        const double* wrow = &weights[size_t(r) * in_dim];
        double* gwrow = &d_weights[size_t(r) * in_dim];
        for (int c = 0; c < in_dim; ++c) {
            gwrow[c] += u * x[c];
            dx[c] += u * wrow[c];
        }
    }
}

void tanh_forward(std::span<const double> x, std::span<double> y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(std::span<const double> y, std::span<const double> upstream,
                   std::span<double> dx) {
    for (size_t i = 0; i < y.size(); ++i) dx[i] = upstream[i] * (1.0 - y[i] * y[i]);
}

namespace {

struct Axis {
    int lo, hi;
    double frac;      // interpolation weight of hi
    bool clamped;
};

Axis resolve_axis(double v, int res) {
    Axis a;
    if (v <= 0.0) {
        a = {0, 0, 0.0, true};
    } else if (v >= res - 1) {
        a = {res - 1, res - 1, 0.0, true};
    } else {
        int lo = int(std::floor(v));
        a = {lo, lo + 1, v - lo, false};
    }
    return a;
}

}  // namespace

void FeatureGrid::sample(const Vec3& p, std::span<double> feature) const {
    if (!p.finite()) throw std::invalid_argument("non-finite grid sample point");
    if (int(feature.size()) != dim) throw std::invalid_argument("feature span size mismatch");
    Axis ax = resolve_axis(p.x, res), ay = resolve_axis(p.y, res), az = resolve_axis(p.z, res);
    for (int c = 0; c < dim; ++c) feature[c] = 0.0;
    for (int ix = 0; ix < 2; ++ix)
        for (int iy = 0; iy < 2; ++iy)
            for (int iz = 0; iz < 2; ++iz) {
                double w = (ix ? ax.frac : 1 - ax.frac) * (iy ? ay.frac : 1 - ay.frac) *
                           (iz ? az.frac : 1 - az.frac);
                if (w == 0.0) continue;
                const double* cell =
                    &data[cell_offset(ix ? ax.hi : ax.lo, iy ? ay.hi : ay.lo, iz ? az.hi : az.lo)];
                for (int c = 0; c < dim; ++c) feature[c] += w * cell[c];
            }
}

void FeatureGrid::sample_backward(const Vec3& p, std::span<const double> d_feature,
                                  std::span<double> d_grid, Vec3& d_p) const {
    if (!p.finite()) throw std::invalid_argument("non-finite grid sample point");
    if (int(d_feature.size()) != dim || d_grid.size() != data.size())
        throw std::invalid_argument("gradient span size mismatch");
    Axis ax = resolve_axis(p.x, res), ay = resolve_axis(p.y, res), az = resolve_axis(p.z, res);
    d_p = Vec3{};
    for (int ix = 0; ix < 2; ++ix)
        for (int iy = 0; iy < 2; ++iy)
            for (int iz = 0; iz < 2; ++iz) {
                double wx = ix ? ax.frac : 1 - ax.frac;
                double wy = iy ? ay.frac : 1 - ay.frac;
                double wz = iz ? az.frac : 1 - az.frac;
                double w = wx * wy * wz;
                size_t off = cell_offset(ix ? ax.hi : ax.lo, iy ? ay.hi : ay.lo, iz ? az.hi : az.lo);
                const double* cell = &data[off];
                double dot = 0.0;
                for (int c = 0; c < dim; ++c) {
                    if (w != 0.0) d_grid[off + c] += w * d_feature[c];
                    dot += cell[c] * d_feature[c];
                }
                if (!ax.clamped) d_p.x += (ix ? 1.0 : -1.0) * wy * wz * dot;
                if (!ay.clamped) d_p.y += (iy ? 1.0 : -1.0) * wx * wz * dot;
                if (!az.clamped) d_p.z += (iz ? 1.0 : -1.0) * wx * wy * dot;
            }
}

}  // namespace csplat
