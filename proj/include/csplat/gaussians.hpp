#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "csplat/camera.hpp"
#include "csplat/vecmath.hpp"

namespace csplat {

constexpr double kNearPlane = 0.01;          // world units
constexpr double kCovarianceFloor = 0.3;     // pixel^2, added to cov2d diagonal

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Canonical anisotropic Gaussian set. Scales live in log-space and opacities
// in logit-space; these are the optimization parameters.
struct GaussianCloud {
    std::vector<Vec3> positions;
    std::vector<Quaternion> rotations;
    std::vector<Vec3> log_scales;          // log of per-axis standard deviation
    std::vector<double> opacity_logits;
    std::vector<Vec3> colors;              // RGB in [0,1], view-independent

    size_t size() const { return positions.size(); }
    void resize(size_t n) {
        positions.resize(n);
        rotations.resize(n);
        log_scales.resize(n);
        opacity_logits.resize(n, 0.0);
        colors.resize(n);
    }
    // Throws if field sizes disagree or any value is non-finite.
    void validate() const;
};

struct ProjectedGaussian {
    double mean_x = 0.0, mean_y = 0.0;  // pixels
    Sym2 cov2d;                         // pixel^2, after low-pass floor
    double depth = 0.0;                 // camera-space z
    double opacity = 0.0;
    Vec3 color;
    bool culled = false;
};

// Sigma = R diag(exp(2 log_scale)) R^T.
Mat3 build_covariance(const Quaternion& rotation, const Vec3& log_scale);

// Pullback of dL/dSigma onto the rotation quaternion and log-scales.
void covariance_backward(const Quaternion& rotation, const Vec3& log_scale,
                         const Mat3& d_sigma, Quaternion& d_rotation, Vec3& d_log_scale);

// EWA perspective projection of one Gaussian; marks culled when the mean is
// behind the near plane.
ProjectedGaussian project(const Vec3& position, const Quaternion& rotation,
                          const Vec3& log_scale, double opacity_logit, const Vec3& color,
                          const CameraView& camera);

// Binary little-endian PLY with per-vertex x,y,z, rot_{wxyz}, log_scale_{xyz},
// opacity_logit, r,g,b (float32).
void save_ply(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_ply(const std::string& path);

}  // namespace csplat
