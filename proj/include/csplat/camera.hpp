#pragma once

#include "csplat/vecmath.hpp"

namespace csplat {

// Pinhole camera. E = [R | t] maps world to camera coordinates (z forward).
struct CameraView {
    Mat3 intrinsics = Mat3::identity();   // K, pixels; upper-triangular
    Mat3 rotation = Mat3::identity();     // world-to-camera rotation block of E
    Vec3 translation;                     // world-to-camera translation of E
    int width = 0;
    int height = 0;

    Vec3 to_camera(const Vec3& p_world) const { return rotation * p_world + translation; }
    Vec3 center() const { return rotation.transposed() * (-translation); }

    double fx() const { return intrinsics(0, 0); }
    double fy() const { return intrinsics(1, 1); }
    double cx() const { return intrinsics(0, 2); }
    double cy() const { return intrinsics(1, 2); }
};

}  // namespace csplat
