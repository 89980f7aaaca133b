#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <numbers>
#include <random>

#include "csplat/deform.hpp"
#include "doctest.h"

using namespace csplat;

namespace {

GaussianCloud small_cloud(int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(-0.8, 0.8);
    GaussianCloud cloud;
    cloud.resize(n);
    for (int i = 0; i < n; ++i) {
        cloud.positions[i] = Vec3{pos(rng), pos(rng), pos(rng) + 3.0};
        cloud.log_scales[i] = Vec3{-2.0, -2.0, -2.0};
        cloud.opacity_logits[i] = 0.5;
        cloud.colors[i] = Vec3{0.6, 0.3, 0.8};
    }
    return cloud;
}

DeformationField small_field(const GaussianCloud& cloud) {
    DeformationField field;
    field.bounds_lo = Vec3{-1, -1, 2};
    field.bounds_hi = Vec3{1, 1, 4};
    field.init_weights(5);
    return field;
}

CameraView front_camera(int size = 24) {
    CameraView cam;
    cam.intrinsics(0, 0) = cam.intrinsics(1, 1) = 40.0;
    cam.intrinsics(0, 2) = cam.intrinsics(1, 2) = size / 2.0;
    cam.intrinsics(2, 2) = 1.0;
    cam.width = cam.height = size;
    return cam;
}

}  // namespace

TEST_CASE("encoding of zero: sines zero, cosines one") {
    PositionalEncoding enc{2};
    double x = 0.0;
    double out[5];
    enc.encode({&x, 1}, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 1.0);
    CHECK(out[3] == 0.0);
    CHECK(out[4] == 1.0);
}

TEST_CASE("encoding of one half at L=1") {
    PositionalEncoding enc{1};
    double x = 0.5;
    double out[3];
    enc.encode({&x, 1}, out);
    CHECK(out[0] == 0.5);
    CHECK(out[1] == doctest::Approx(1.0));
    CHECK(out[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("encoding dimension is input_dim * (2L + 1)") {
    PositionalEncoding enc{6};
    CHECK(enc.output_dim(3) == 39);
    CHECK(PositionalEncoding{4}.output_dim(1) == 9);
}

TEST_CASE("encoding backward matches finite differences") {
    PositionalEncoding enc{3};
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    const double eps = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        double x[2] = {nd(rng), nd(rng)};
        double up[14];
        for (double& v : up) v = nd(rng);
        double dx[2];
        enc.encode_backward(x, up, dx);

        for (int c = 0; c < 2; ++c) {
            auto loss = [&](double v) {
                double xx[2] = {x[0], x[1]};
                xx[c] = v;
                double out[14];
                enc.encode(xx, out);
                double s = 0;
                for (int i = 0; i < 14; ++i) s += out[i] * up[i];
                return s;
            };
            double fd = (loss(x[c] + eps) - loss(x[c] - eps)) / (2 * eps);
            CHECK(dx[c] == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("fresh field deforms to exactly the canonical cloud") {
    GaussianCloud cloud = small_cloud(12, 3);
    DeformationField field = small_field(cloud);
    for (double t : {0.0, 0.25, 1.0}) {
        DeformedCloud d = deform_cloud(field, cloud, t);
        for (size_t i = 0; i < cloud.size(); ++i) {
            CHECK(d.cloud.positions[i].x == cloud.positions[i].x);
            CHECK(d.cloud.rotations[i].w == cloud.rotations[i].w);
            CHECK(d.cloud.opacity_logits[i] == cloud.opacity_logits[i]);
        }
    }
}

TEST_CASE("hand-set constant head shifts every position by (1,0,0)") {
    GaussianCloud cloud = small_cloud(7, 4);
    DeformationField field = small_field(cloud);
    field.output_layer.biases[0] = 1.0;
    DeformedCloud d = deform_cloud(field, cloud, 0.5);
    for (size_t i = 0; i < cloud.size(); ++i) {
        CHECK(d.cloud.positions[i].x == doctest::Approx(cloud.positions[i].x + 1.0));
        CHECK(d.cloud.positions[i].y == doctest::Approx(cloud.positions[i].y));
        CHECK(d.cloud.positions[i].z == doctest::Approx(cloud.positions[i].z));
    }
}

TEST_CASE("time outside [0,1] is rejected") {
    GaussianCloud cloud = small_cloud(2, 5);
    DeformationField field = small_field(cloud);
    CHECK_THROWS(deform_cloud(field, cloud, -0.1));
    CHECK_THROWS(deform_cloud(field, cloud, 1.5));
}

TEST_CASE("field gradients through deform and render match finite differences") {
    GaussianCloud cloud = small_cloud(6, 6);
    DeformationField field = small_field(cloud);
    // non-trivial output layer so the field actually moves things
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (double& w : field.output_layer.weights) w = 0.01 * nd(rng);

    CameraView cam = front_camera();
    RenderConfig rc{cam.width, cam.height, Vec3{0.1, 0.1, 0.1}, true, 1};
    Image up(cam.width, cam.height);
    for (double& v : up.data) v = nd(rng);
    const double t = 0.4;

    auto loss = [&](const DeformationField& f) {
        DeformedCloud d = deform_cloud(f, cloud, t);
        RenderTarget out = render(d.cloud, cam, rc);
        double s = 0;
        for (size_t i = 0; i < out.color.data.size(); ++i) s += out.color.data[i] * up.data[i];
        return s;
    };

    DeformedCloud d = deform_cloud(field, cloud, t);
    RenderGradients d_deformed = render_backward(d.cloud, cam, rc, up);
    RenderGradients d_canonical(cloud.size());
    FieldGradients d_field(field);
    deform_backward(field, cloud, d, d_deformed, d_canonical, d_field);

    const double eps = 1e-4;
    // grid features touched by the cloud
    int checked = 0;
    for (size_t i = 0; i < field.grid.data.size() && checked < 12; ++i) {
        if (d_field.d_grid[i] == 0.0) continue;
        DeformationField fp = field, fm = field;
        fp.grid.data[i] += eps;
        fm.grid.data[i] -= eps;
        double fd = (loss(fp) - loss(fm)) / (2 * eps);
        CHECK(d_field.d_grid[i] == doctest::Approx(fd).epsilon(1e-3));
        ++checked;
    }
    CHECK(checked > 0);
    // a few head weights
    for (size_t i = 0; i < 10; ++i) {
        size_t wi = i * 37 % field.output_layer.weights.size();
        DeformationField fp = field, fm = field;
        fp.output_layer.weights[wi] += eps;
        fm.output_layer.weights[wi] -= eps;
        double fd = (loss(fp) - loss(fm)) / (2 * eps);
        CHECK(d_field.d_output.d_weights[wi] ==
              doctest::Approx(fd).epsilon(1e-3).scale(std::max(1.0, std::abs(fd))));
    }
    // canonical positions pick up both the render and the encoding paths
    for (int c = 0; c < 3; ++c) {
        GaussianCloud cp = cloud, cm = cloud;
        double* pp[3] = {&cp.positions[2].x, &cp.positions[2].y, &cp.positions[2].z};
        double* pm[3] = {&cm.positions[2].x, &cm.positions[2].y, &cm.positions[2].z};
        *pp[c] += eps;
        *pm[c] -= eps;
        auto loss_cloud = [&](const GaussianCloud& cc) {
            DeformedCloud dd = deform_cloud(field, cc, t);
            RenderTarget out = render(dd.cloud, cam, rc);
            double s = 0;
            for (size_t k = 0; k < out.color.data.size(); ++k)
                s += out.color.data[k] * up.data[k];
            return s;
        };
        double fd = (loss_cloud(cp) - loss_cloud(cm)) / (2 * eps);
        double analytic[3] = {d_canonical.d_position[2].x, d_canonical.d_position[2].y,
                              d_canonical.d_position[2].z};
        CHECK(analytic[c] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    GaussianCloud cloud = small_cloud(9, 8);
    DeformationField field = small_field(cloud);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd;
    for (double& v : field.grid.data) v = nd(rng);
    for (double& w : field.output_layer.weights) w = nd(rng);

    const char* path = "test_ckpt.bin";
    save_checkpoint(path, cloud, field, 8);
    GaussianCloud cloud2;
    DeformationField field2;
    int frames = 0;
    load_checkpoint(path, cloud2, field2, frames);
    std::remove(path);

    CHECK(frames == 8);
    REQUIRE(cloud2.size() == cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i)
        CHECK(cloud2.positions[i].x == cloud.positions[i].x);
    CHECK(field2.grid.data == field.grid.data);
    CHECK(field2.hidden_layer.weights == field.hidden_layer.weights);
    CHECK(field2.output_layer.weights == field.output_layer.weights);
    CHECK(field2.bounds_lo.z == field.bounds_lo.z);
}

TEST_CASE("corrupt checkpoint magic is rejected") {
    const char* path = "test_bad_ckpt.bin";
    {
        std::FILE* f = std::fopen(path, "wb");
        const char junk[16] = "notacheckpoint!";
        std::fwrite(junk, 1, sizeof junk, f);
        std::fclose(f);
    }
    GaussianCloud cloud;
    DeformationField field;
    int frames = 0;
    CHECK_THROWS(load_checkpoint(path, cloud, field, frames));
    std::remove(path);
}
