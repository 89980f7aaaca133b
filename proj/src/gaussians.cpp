#include "csplat/gaussians.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csplat {

void GaussianCloud::validate() const {
    size_t n = positions.size();
    if (rotations.size() != n || log_scales.size() != n || opacity_logits.size() != n ||
        colors.size() != n)
        throw std::invalid_argument("GaussianCloud field sizes disagree");
    for (size_t i = 0; i < n; ++i) {
        if (!positions[i].finite() || !rotations[i].finite() || !log_scales[i].finite() ||
            !std::isfinite(opacity_logits[i]) || !colors[i].finite())
            throw std::invalid_argument("non-finite Gaussian at index " + std::to_string(i));
    }
}

Mat3 build_covariance(const Quaternion& rotation, const Vec3& log_scale) {
    Mat3 r = quat_to_rotation(rotation);
    Vec3 s{std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)};
    // Sigma = (R S)(R S)^T with S = diag(s).
    Mat3 q = r * Mat3::diagonal(s.x, s.y, s.z);
    return q * q.transposed();
}

void covariance_backward(const Quaternion& rotation, const Vec3& log_scale,
                         const Mat3& d_sigma, Quaternion& d_rotation, Vec3& d_log_scale) {
    Mat3 r = quat_to_rotation(rotation);
    Vec3 s{std::exp(log_scale.x), std::exp(log_scale.y), std::exp(log_scale.z)};
    Mat3 q = r * Mat3::diagonal(s.x, s.y, s.z);
    // Sigma = Q Q^T  =>  dL/dQ = (dSigma + dSigma^T) Q.
    Mat3 d_q = (d_sigma + d_sigma.transposed()) * q;
    Mat3 d_r = Mat3::zero();
    double ds[3] = {0, 0, 0};
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) {
            d_r(row, col) = d_q(row, col) * s[col];
            ds[col] += d_q(row, col) * r(row, col);
        }
    d_rotation = quat_rotation_backward(rotation, d_r);
    // log-scale chain: d/d(log s) = s * d/ds.
    d_log_scale = {ds[0] * s.x, ds[1] * s.y, ds[2] * s.z};
}

ProjectedGaussian project(const Vec3& position, const Quaternion& rotation,
                          const Vec3& log_scale, double opacity_logit, const Vec3& color,
                          const CameraView& camera) {
    ProjectedGaussian out;
    out.opacity = sigmoid(opacity_logit);
    out.color = color;

    Vec3 t = camera.to_camera(position);
    out.depth = t.z;
    if (t.z <= kNearPlane) {
        out.culled = true;
        return out;
    }

    const double fx = camera.fx(), fy = camera.fy();
    out.mean_x = fx * t.x / t.z + camera.cx();
    out.mean_y = fy * t.y / t.z + camera.cy();

    // J = d(pixel)/d(camera point) at the mean.
    const double inv_z = 1.0 / t.z, inv_z2 = inv_z * inv_z;
    const double j00 = fx * inv_z, j02 = -fx * t.x * inv_z2;
    const double j11 = fy * inv_z, j12 = -fy * t.y * inv_z2;

    Mat3 sigma = build_covariance(rotation, log_scale);
    Mat3 w = camera.rotation;
    Mat3 v = w * sigma * w.transposed();  // camera-frame covariance

    // cov2d = J V J^T with J = [[j00,0,j02],[0,j11,j12]].
    out.cov2d.xx = j00 * (j00 * v(0, 0) + j02 * v(2, 0)) + j02 * (j00 * v(0, 2) + j02 * v(2, 2));
    out.cov2d.xy = j11 * (j00 * v(0, 1) + j02 * v(2, 1)) + j12 * (j00 * v(0, 2) + j02 * v(2, 2));
    out.cov2d.yy = j11 * (j11 * v(1, 1) + j12 * v(2, 1)) + j12 * (j11 * v(1, 2) + j12 * v(2, 2));
    out.cov2d.xx += kCovarianceFloor;
    out.cov2d.yy += kCovarianceFloor;
    return out;
}

namespace {

constexpr const char* kPlyProps[] = {"x", "y", "z", "rot_w", "rot_x", "rot_y", "rot_z",
                                     "log_scale_x", "log_scale_y", "log_scale_z",
                                     "opacity_logit", "r", "g", "b"};
constexpr int kPlyPropCount = 14;

}  // namespace

void save_ply(const std::string& path, const GaussianCloud& cloud) {
    cloud.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "ply\nformat binary_little_endian 1.0\n"
        << "element vertex " << cloud.size() << "\n";
    for (const char* p : kPlyProps) out << "property float " << p << "\n";
    out << "end_header\n";
    for (size_t i = 0; i < cloud.size(); ++i) {
        float row[kPlyPropCount] = {
            float(cloud.positions[i].x), float(cloud.positions[i].y), float(cloud.positions[i].z),
            float(cloud.rotations[i].w), float(cloud.rotations[i].x), float(cloud.rotations[i].y),
            float(cloud.rotations[i].z), float(cloud.log_scales[i].x), float(cloud.log_scales[i].y),
            float(cloud.log_scales[i].z), float(cloud.opacity_logits[i]),
            float(cloud.colors[i].x), float(cloud.colors[i].y), float(cloud.colors[i].z)};
        out.write(reinterpret_cast<const char*>(row), sizeof(row));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

GaussianCloud load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    size_t count = 0;
    int prop_idx = 0;
    bool ok_header = false;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "element") {
            std::string what;
            ls >> what >> count;
            if (what != "vertex") throw std::runtime_error("unexpected PLY element: " + what);
        } else if (tok == "property") {
            std::string type, name;
            ls >> type >> name;
            if (prop_idx >= kPlyPropCount || type != "float" || name != kPlyProps[prop_idx])
                throw std::runtime_error("unexpected PLY property: " + name);
            ++prop_idx;
        } else if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian")
                throw std::runtime_error("unsupported PLY format: " + fmt);
        } else if (tok == "end_header") {
            ok_header = true;
            break;
        }
    }
    if (!ok_header || prop_idx != kPlyPropCount)
        throw std::runtime_error("malformed PLY header: " + path);

    GaussianCloud cloud;
    cloud.resize(count);
    for (size_t i = 0; i < count; ++i) {
        float row[kPlyPropCount];
        in.read(reinterpret_cast<char*>(row), sizeof(row));
        if (!in) throw std::runtime_error("truncated PLY: " + path);
        cloud.positions[i] = {row[0], row[1], row[2]};
        cloud.rotations[i] = {row[3], row[4], row[5], row[6]};
        cloud.log_scales[i] = {row[7], row[8], row[9]};
        cloud.opacity_logits[i] = row[10];
        cloud.colors[i] = {row[11], row[12], row[13]};
    }
    return cloud;
}

}  // namespace csplat
