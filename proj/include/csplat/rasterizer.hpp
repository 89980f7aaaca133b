#pragma once

#include <vector>

#include "csplat/camera.hpp"
#include "csplat/gaussians.hpp"
#include "csplat/image.hpp"

namespace csplat {

constexpr int kTileSize = 16;
constexpr double kTransmittanceStop = 1e-4;
constexpr double kExponentCutoff = -12.0;  // alpha underflow
constexpr double kBoundingSigmas = 3.0;

struct RenderConfig {
    int width = 0;
    int height = 0;
    Vec3 background;
    bool tiled = true;
    int num_threads = 1;
};

struct RenderTarget {
    Image color;
    std::vector<double> alpha;  // H*W accumulated opacity
};

struct RenderGradients {
    std::vector<Vec3> d_position;
    std::vector<Quaternion> d_rotation;
    std::vector<Vec3> d_log_scale;
    std::vector<double> d_opacity_logit;
    std::vector<Vec3> d_color;

    explicit RenderGradients(size_t n = 0) { resize(n); }
    void resize(size_t n) {
        d_position.assign(n, Vec3{});
        d_rotation.assign(n, Quaternion{0, 0, 0, 0});
        d_log_scale.assign(n, Vec3{});
        d_opacity_logit.assign(n, 0.0);
        d_color.assign(n, Vec3{});
    }
    void accumulate(const RenderGradients& o);
};

// Front-to-back alpha compositing over depth-sorted projected Gaussians.
// Deterministic: stable depth sort with index tie-break; the tiled and naive
// paths produce bit-identical images.
RenderTarget render(const GaussianCloud& cloud, const CameraView& camera,
                    const RenderConfig& config);

// d(sum_pixels d_image . image)/d(theta) for every cloud parameter group.
// Culled Gaussians receive exactly zero gradient.
RenderGradients render_backward(const GaussianCloud& cloud, const CameraView& camera,
                                const RenderConfig& config, const Image& d_image);

}  // namespace csplat
