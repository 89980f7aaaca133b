#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <random>

#include "csplat/gaussians.hpp"
#include "doctest.h"

using namespace csplat;

namespace {

CameraView front_camera(double focal = 100.0, int size = 64) {
    CameraView cam;
    cam.intrinsics = Mat3::identity();
    cam.intrinsics(0, 0) = focal;
    cam.intrinsics(1, 1) = focal;
    cam.intrinsics(0, 2) = size / 2.0;
    cam.intrinsics(1, 2) = size / 2.0;
    cam.width = cam.height = size;
    return cam;  // identity extrinsics: camera at origin looking down +z
}

// symmetric 3x3 eigenvalue bound via Gershgorin-free cubic-less check:
// min eigenvalue >= -eps iff Sigma + eps*I is PSD; test PSD by pivots.
bool psd_with_slack(const Mat3& sigma, double eps) {
    Mat3 a = sigma + Mat3::diagonal(eps, eps, eps);
    double p0 = a(0, 0);
    if (p0 < 0) return false;
    double p1 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    if (p1 < -1e-18) return false;
    double det = a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
                 a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
                 a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
    return det >= -1e-18;
}

}  // namespace

TEST_CASE("identity covariance") {
    Mat3 sigma = build_covariance(Quaternion{1, 0, 0, 0}, Vec3{0, 0, 0});
    CHECK((sigma - Mat3::identity()).max_abs() < 1e-15);
}

TEST_CASE("log-scale ln2 on x gives diag(4,1,1)") {
    Mat3 sigma = build_covariance(Quaternion{1, 0, 0, 0}, Vec3{std::log(2.0), 0, 0});
    CHECK((sigma - Mat3::diagonal(4, 1, 1)).max_abs() < 1e-12);
}

TEST_CASE("random covariances are symmetric and PSD") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    for (int trial = 0; trial < 100; ++trial) {
        Quaternion q{dist(rng), dist(rng), dist(rng), dist(rng)};
        if (q.norm() < 0.1) continue;
        Vec3 ls{dist(rng) * 0.5, dist(rng) * 0.5, dist(rng) * 0.5};
        Mat3 sigma = build_covariance(q, ls);
        CHECK((sigma - sigma.transposed()).max_abs() < 1e-12);
        CHECK(psd_with_slack(sigma, 1e-9));
    }
}

TEST_CASE("covariance backward matches finite differences") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> dist;
    const double eps = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        Quaternion q{dist(rng), dist(rng), dist(rng), dist(rng)};
        if (q.norm() < 0.2) continue;
        Vec3 ls{dist(rng) * 0.3, dist(rng) * 0.3, dist(rng) * 0.3};
        Mat3 upstream;
        for (double& v : upstream.m) v = dist(rng);

        Quaternion dq;
        Vec3 dls;
        covariance_backward(q, ls, upstream, dq, dls);

        auto loss = [&](const Quaternion& qq, const Vec3& ss) {
            Mat3 sigma = build_covariance(qq, ss);
            double s = 0;
            for (int i = 0; i < 9; ++i) s += sigma.m[i] * upstream.m[i];
            return s;
        };
        double aq[4] = {dq.w, dq.x, dq.y, dq.z};
        for (int c = 0; c < 4; ++c) {
            Quaternion qp = q, qm = q;
            double* pp[4] = {&qp.w, &qp.x, &qp.y, &qp.z};
            double* pm[4] = {&qm.w, &qm.x, &qm.y, &qm.z};
            *pp[c] += eps;
            *pm[c] -= eps;
            double fd = (loss(qp, ls) - loss(qm, ls)) / (2 * eps);
            CHECK(aq[c] == doctest::Approx(fd).epsilon(1e-4));
        }
        double als[3] = {dls.x, dls.y, dls.z};
        for (int c = 0; c < 3; ++c) {
            Vec3 lp = ls, lm = ls;
            double* pp[3] = {&lp.x, &lp.y, &lp.z};
            double* pm[3] = {&lm.x, &lm.y, &lm.z};
            *pp[c] += eps;
            *pm[c] -= eps;
            double fd = (loss(q, lp) - loss(q, lm)) / (2 * eps);
            CHECK(als[c] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("on-axis point projects to the principal point") {
    CameraView cam = front_camera();
    ProjectedGaussian p = project(Vec3{0, 0, 3.0}, Quaternion{}, Vec3{}, 0.0,
                                  Vec3{1, 1, 1}, cam);
    CHECK_FALSE(p.culled);
    CHECK(p.mean_x == doctest::Approx(cam.cx()));
    CHECK(p.mean_y == doctest::Approx(cam.cy()));
    CHECK(p.depth == doctest::Approx(3.0));
}

TEST_CASE("isotropic gaussian on axis projects to (f sigma / d)^2 before the floor") {
    CameraView cam = front_camera(200.0);
    const double sigma = 0.02, d = 4.0;
    ProjectedGaussian p = project(Vec3{0, 0, d}, Quaternion{}, Vec3{std::log(sigma),
                                  std::log(sigma), std::log(sigma)}, 0.0, Vec3{1, 1, 1}, cam);
    const double expect = 200.0 * sigma / d;
    CHECK(p.cov2d.xx - kCovarianceFloor ==
          doctest::Approx(expect * expect).epsilon(1e-3));
    CHECK(p.cov2d.yy - kCovarianceFloor ==
          doctest::Approx(expect * expect).epsilon(1e-3));
    CHECK(std::abs(p.cov2d.xy) < 1e-3 * expect * expect);
}

TEST_CASE("behind near plane is culled") {
    CameraView cam = front_camera();
    CHECK(project(Vec3{0, 0, 0.0}, Quaternion{}, Vec3{}, 0.0, Vec3{}, cam).culled);
    CHECK(project(Vec3{0, 0, -2.0}, Quaternion{}, Vec3{}, 0.0, Vec3{}, cam).culled);
    CHECK_FALSE(project(Vec3{0, 0, 0.5}, Quaternion{}, Vec3{}, 0.0, Vec3{}, cam).culled);
}

TEST_CASE("projection is equivariant under in-plane camera roll") {
    CameraView cam = front_camera();
    Vec3 pos{0.3, -0.2, 2.5};
    Quaternion rot = quat_from_axis_angle(Vec3{1, 2, 0.5}, 0.8);
    Vec3 ls{-2.5, -2.0, -2.2};
    ProjectedGaussian base = project(pos, rot, ls, 0.0, Vec3{}, cam);

    const double theta = 0.6;
    const double c = std::cos(theta), s = std::sin(theta);
    CameraView rolled = cam;
    Mat3 roll;  // rotation about the optical axis, applied in camera space
    roll.m = {c, -s, 0, s, c, 0, 0, 0, 1};
    rolled.rotation = roll * cam.rotation;
    rolled.translation = roll * cam.translation;
    ProjectedGaussian moved = project(pos, rot, ls, 0.0, Vec3{}, rolled);

    double dx = base.mean_x - cam.cx(), dy = base.mean_y - cam.cy();
    CHECK(moved.mean_x - cam.cx() == doctest::Approx(c * dx - s * dy).epsilon(1e-6));
    CHECK(moved.mean_y - cam.cy() == doctest::Approx(s * dx + c * dy).epsilon(1e-6));

    // conjugate the floored base covariance minus floor by the 2D rotation
    double bx = base.cov2d.xx - kCovarianceFloor;
    double bxy = base.cov2d.xy;
    double by = base.cov2d.yy - kCovarianceFloor;
    double rx = c * (c * bx - s * bxy) - s * (c * bxy - s * by);
    double rxy = s * (c * bx - s * bxy) + c * (c * bxy - s * by);
    double ry = s * (s * bx + c * bxy) + c * (s * bxy + c * by);
    CHECK(moved.cov2d.xx - kCovarianceFloor == doctest::Approx(rx).epsilon(1e-6));
    CHECK(moved.cov2d.xy == doctest::Approx(rxy).epsilon(1e-6));
    CHECK(moved.cov2d.yy - kCovarianceFloor == doctest::Approx(ry).epsilon(1e-6));
}

TEST_CASE("doubling distance halves the projected standard deviation") {
    CameraView cam = front_camera(300.0);
    Vec3 ls{std::log(0.01), std::log(0.01), std::log(0.01)};
    ProjectedGaussian near_p = project(Vec3{0, 0, 2.0}, Quaternion{}, ls, 0.0, Vec3{}, cam);
    ProjectedGaussian far_p = project(Vec3{0, 0, 4.0}, Quaternion{}, ls, 0.0, Vec3{}, cam);
    double sd_near = std::sqrt(near_p.cov2d.xx - kCovarianceFloor);
    double sd_far = std::sqrt(far_p.cov2d.xx - kCovarianceFloor);
    CHECK(sd_near == doctest::Approx(2.0 * sd_far).epsilon(1e-3));
}

TEST_CASE("PLY round trip preserves the cloud to float precision") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> dist;
    GaussianCloud cloud;
    cloud.resize(17);
    for (size_t i = 0; i < cloud.size(); ++i) {
        cloud.positions[i] = Vec3{dist(rng), dist(rng), dist(rng)};
        cloud.rotations[i] = Quaternion{dist(rng), dist(rng), dist(rng), dist(rng)};
        cloud.log_scales[i] = Vec3{dist(rng), dist(rng), dist(rng)};
        cloud.opacity_logits[i] = dist(rng);
        cloud.colors[i] = Vec3{0.1, 0.5, 0.9};
    }
    const char* path = "test_round_trip.ply";
    save_ply(path, cloud);
    GaussianCloud loaded = load_ply(path);
    std::remove(path);

    REQUIRE(loaded.size() == cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        CHECK(loaded.positions[i].x == doctest::Approx(cloud.positions[i].x).epsilon(1e-6));
        CHECK(loaded.rotations[i].w == doctest::Approx(cloud.rotations[i].w).epsilon(1e-6));
        CHECK(loaded.log_scales[i].z == doctest::Approx(cloud.log_scales[i].z).epsilon(1e-6));
        CHECK(loaded.opacity_logits[i] ==
              doctest::Approx(cloud.opacity_logits[i]).epsilon(1e-6));
        CHECK(loaded.colors[i].y == doctest::Approx(cloud.colors[i].y).epsilon(1e-6));
    }
}

TEST_CASE("validate rejects mismatched field sizes and non-finite values") {
    GaussianCloud cloud;
    cloud.resize(2);
    cloud.colors.pop_back();
    CHECK_THROWS(cloud.validate());
    cloud.resize(2);
    cloud.positions[0].x = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(cloud.validate());
}
