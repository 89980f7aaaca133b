#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csplat/gaussians.hpp"
#include "csplat/numerics.hpp"
#include "csplat/rasterizer.hpp"

namespace csplat {

// Fourier feature lifting: x -> (x, sin(2^0 pi x), cos(2^0 pi x), ...,
// sin(2^{L-1} pi x), cos(2^{L-1} pi x)) per coordinate, coordinate-major.
struct PositionalEncoding {
    int num_frequencies = 0;

    int output_dim(int input_dim) const { return input_dim * (2 * num_frequencies + 1); }
    void encode(std::span<const double> x, std::span<double> out) const;
    void encode_backward(std::span<const double> x, std::span<const double> upstream,
                         std::span<double> dx) const;
};

struct DeformDefaults {
    static constexpr int kGridRes = 32;
    static constexpr int kGridDim = 16;
    static constexpr int kSpaceFrequencies = 6;
    static constexpr int kTimeFrequencies = 4;
    static constexpr int kHiddenWidth = 64;
    static constexpr int kOutputDim = 8;  // dpos(3) + dquat(4) + dopacity(1)
};

// Temporal deformation model: offsets(X, t) from a trilinear feature grid plus
// encoded position and time, through a two-layer tanh head. The head's final
// layer is zero at construction so the field is exactly zero everywhere.
struct DeformationField {
    FeatureGrid grid;
    PositionalEncoding space_encoding{DeformDefaults::kSpaceFrequencies};
    PositionalEncoding time_encoding{DeformDefaults::kTimeFrequencies};
    DiffLayer hidden_layer;
    DiffLayer output_layer;
    Vec3 bounds_lo{-1, -1, -1};
    Vec3 bounds_hi{1, 1, 1};

    DeformationField();
    // Randomizes the hidden layer (output layer stays zero).
    void init_weights(uint64_t seed);

    int input_dim() const { return hidden_layer.in_dim; }
    Vec3 to_grid_coords(const Vec3& p) const;
};

struct DeformCache {
    std::vector<double> input;   // per Gaussian, head input
    std::vector<double> hidden;  // per Gaussian, post-tanh activations
    std::vector<Vec3> grid_points;
};

// Canonical cloud plus additive per-Gaussian offsets at a fixed time.
struct DeformedCloud {
    GaussianCloud cloud;
    double time = 0.0;
    DeformCache cache;
};

struct FieldGradients {
    std::vector<double> d_grid;
    LayerGradients d_hidden;
    LayerGradients d_output;

    explicit FieldGradients(const DeformationField& field)
        : d_grid(field.grid.data.size(), 0.0),
          d_hidden(field.hidden_layer),
          d_output(field.output_layer) {}
    void clear() {
        d_grid.assign(d_grid.size(), 0.0);
        d_hidden.clear();
        d_output.clear();
    }
};

// G_t = G + F(gamma(X), gamma(t)); t must lie in [0,1].
DeformedCloud deform_cloud(const DeformationField& field, const GaussianCloud& cloud, double t);

// Pullback of gradients on the deformed cloud onto the canonical cloud and the
// field parameters. d_deformed is expressed in RenderGradients layout.
void deform_backward(const DeformationField& field, const GaussianCloud& canonical,
                     const DeformedCloud& deformed, const RenderGradients& d_deformed,
                     RenderGradients& d_canonical, FieldGradients& d_field);

// Versioned little-endian checkpoint: canonical cloud + grid tensor + head
// weights + bounds.
void save_checkpoint(const std::string& path, const GaussianCloud& cloud,
                     const DeformationField& field, int num_frames);
void load_checkpoint(const std::string& path, GaussianCloud& cloud, DeformationField& field,
                     int& num_frames);

}  // namespace csplat
