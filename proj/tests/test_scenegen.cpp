#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <numbers>

#include "csplat/rasterizer.hpp"
#include "csplat/scenegen.hpp"
#include "doctest.h"

using namespace csplat;

TEST_CASE("single-view rig is the front camera at azimuth zero") {
    auto rig = make_orbit_rig(1, 2.5, 40.0);
    REQUIRE(rig.size() == 1);
    Vec3 c = rig[0].center();
    CHECK(c.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.z == doctest::Approx(-2.5).epsilon(1e-12));
}

TEST_CASE("four-view rig has quarter-turn azimuths with anti-parallel opposites") {
    auto rig = make_orbit_rig(4, 2.5, 40.0);
    REQUIRE(rig.size() == 4);
    for (int v = 0; v < 4; ++v) {
        Vec3 c = rig[v].center();
        double az = std::atan2(c.x, -c.z);
        double expect = 2.0 * std::numbers::pi * v / 4;
        if (expect > std::numbers::pi) expect -= 2.0 * std::numbers::pi;
        CHECK(az == doctest::Approx(expect).epsilon(1e-9));
    }
    // optical axis = third row of R; opposing cameras point opposite ways
    for (int v = 0; v < 2; ++v) {
        Vec3 fwd_a{rig[v].rotation(2, 0), rig[v].rotation(2, 1), rig[v].rotation(2, 2)};
        Vec3 fwd_b{rig[v + 2].rotation(2, 0), rig[v + 2].rotation(2, 1),
                   rig[v + 2].rotation(2, 2)};
        CHECK((fwd_a + fwd_b).norm() < 1e-9);
    }
}

TEST_CASE("every camera sits at exactly the orbit radius from the target") {
    Vec3 look_at{0.3, -0.1, 0.2};
    for (int n : {3, 5, 21})
        for (double h : {0.0, 0.8}) {
            auto rig = make_orbit_rig(n, 2.5, 40.0, h, look_at);
            REQUIRE(int(rig.size()) == n);
            for (const CameraView& cam : rig)
                CHECK((cam.center() - look_at).norm() == doctest::Approx(2.5).epsilon(1e-9));
        }
}

TEST_CASE("rig rejects degenerate parameters") {
    CHECK_THROWS(make_orbit_rig(0));
    CHECK_THROWS(make_orbit_rig(4, -1.0));
    CHECK_THROWS(make_orbit_rig(4, 2.5, 40.0, 3.0));  // |height| >= radius
}

TEST_CASE("single static group yields a static scene") {
    GaussianCloud cloud;
    MotionScript script;
    make_articulated_scene(40, 1, 3, 0.0, cloud, script);
    GaussianCloud a = script.apply(cloud, 0.0, 0);
    GaussianCloud b = script.apply(cloud, 0.7, 5);
    for (size_t i = 0; i < cloud.size(); ++i) {
        CHECK(a.positions[i].x == b.positions[i].x);
        CHECK(a.positions[i].y == b.positions[i].y);
        CHECK(a.positions[i].z == b.positions[i].z);
    }
}

TEST_CASE("fixed seed reproduces the scene exactly") {
    GaussianCloud c1, c2;
    MotionScript s1, s2;
    make_articulated_scene(60, 3, 42, 1.0, c1, s1);
    make_articulated_scene(60, 3, 42, 1.0, c2, s2);
    for (size_t i = 0; i < c1.size(); ++i) {
        CHECK(c1.positions[i].x == c2.positions[i].x);
        CHECK(c1.colors[i].y == c2.colors[i].y);
        CHECK(c1.opacity_logits[i] == c2.opacity_logits[i]);
    }
    REQUIRE(s1.groups.size() == s2.groups.size());
    for (size_t g = 0; g < s1.groups.size(); ++g)
        CHECK(s1.groups[g].swing_amplitude == s2.groups[g].swing_amplitude);
}

TEST_CASE("rigid groups keep intra-group distances while group centers move apart") {
    GaussianCloud cloud;
    MotionScript script;
    make_articulated_scene(50, 2, 7, 1.0, cloud, script);
    GaussianCloud t0 = script.apply(cloud, 0.0, 0);
    GaussianCloud t1 = script.apply(cloud, 0.37, 3);

    for (const MotionGroup& g : script.groups)
        for (size_t a = 0; a < g.members.size(); ++a)
            for (size_t b = a + 1; b < g.members.size(); b += 5) {
                int i = g.members[a], j = g.members[b];
                double d0 = (t0.positions[i] - t0.positions[j]).norm();
                double d1 = (t1.positions[i] - t1.positions[j]).norm();
                CHECK(d0 == doctest::Approx(d1).epsilon(1e-9));
            }

    auto center = [&](const GaussianCloud& c, const MotionGroup& g) {
        Vec3 s;
        for (int i : g.members) s += c.positions[i];
        return s / double(g.members.size());
    };
    double gap0 = (center(t0, script.groups[0]) - center(t0, script.groups[1])).norm();
    double gap1 = (center(t1, script.groups[0]) - center(t1, script.groups[1])).norm();
    CHECK(std::abs(gap0 - gap1) > 1e-6);
}

TEST_CASE("motion groups must partition the cloud") {
    GaussianCloud cloud;
    cloud.resize(4);
    for (auto& p : cloud.positions) p.z = 3.0;
    MotionScript script;
    MotionGroup g;
    g.members = {0, 1, 2};  // index 3 uncovered
    script.groups.push_back(g);
    CHECK_THROWS(script.apply(cloud, 0.0, 0));
    script.groups[0].members = {0, 1, 2, 2};  // duplicate
    CHECK_THROWS(script.apply(cloud, 0.0, 0));
}

TEST_CASE("single static frame equals a direct render") {
    GaussianCloud cloud;
    MotionScript script;
    make_articulated_scene(30, 1, 9, 0.0, cloud, script);
    auto rig = make_orbit_rig(2, 2.5, 40.0, 0.0, Vec3{}, 48, 48);
    Vec3 bg{0.1, 0.2, 0.3};
    MultiViewSequence seq = render_ground_truth(cloud, script, rig, 1, bg);
    REQUIRE(seq.num_frames() == 1);
    RenderConfig rc{48, 48, bg, true, 1};
    Image direct = render(cloud, rig[1], rc).color;
    CHECK(seq.images[1][0].data == direct.data);
}

TEST_CASE("translating the scene equals inversely translating the camera") {
    GaussianCloud cloud;
    MotionScript script;
    make_articulated_scene(40, 1, 11, 0.0, cloud, script);
    Vec3 amp{0.25, 0.1, -0.15};
    script.groups[0].translation_amplitude = amp;
    script.groups[0].cycles = 1.0;
    script.groups[0].phase = 0.0;

    auto rig = make_orbit_rig(1, 2.5, 40.0, 0.0, Vec3{}, 64, 64);
    const int t = 3, T = 8;
    double t_norm = double(t) / (T - 1);
    Vec3 shift = amp * std::sin(2.0 * std::numbers::pi * t_norm);

    Vec3 bg{0, 0, 0};
    RenderConfig rc{64, 64, bg, true, 1};
    GaussianCloud posed = script.apply(cloud, t_norm, t);
    Image moved_scene = render(posed, rig[0], rc).color;

    CameraView shifted_cam = rig[0];
    shifted_cam.translation = rig[0].translation + rig[0].rotation * shift;
    Image moved_camera = render(cloud, shifted_cam, rc).color;

    double max_diff = 0;
    for (size_t i = 0; i < moved_scene.data.size(); ++i)
        max_diff = std::max(max_diff, std::abs(moved_scene.data[i] - moved_camera.data[i]));
    CHECK(max_diff < 2.0 / 255.0);
}

TEST_CASE("motion bounds cover all frames with padding") {
    GaussianCloud cloud;
    MotionScript script;
    make_articulated_scene(30, 2, 13, 1.0, cloud, script);
    Vec3 lo, hi;
    motion_bounds(cloud, script, 8, 0.25, lo, hi);
    for (int t = 0; t < 8; ++t) {
        GaussianCloud posed = script.apply(cloud, double(t) / 7, t);
        for (const Vec3& p : posed.positions) {
            CHECK(p.x >= lo.x);
            CHECK(p.x <= hi.x);
            CHECK(p.z >= lo.z);
            CHECK(p.z <= hi.z);
        }
    }
}

TEST_CASE("sequence save and load round trips the float frames") {
    GaussianCloud cloud;
    MotionScript script;
    make_articulated_scene(25, 1, 15, 0.5, cloud, script);
    auto rig = make_orbit_rig(2, 2.5, 40.0, 0.0, Vec3{}, 32, 32);
    MultiViewSequence seq = render_ground_truth(cloud, script, rig, 3, Vec3{0.1, 0.1, 0.1});

    const char* dir = "test_seq_dir";
    save_sequence(dir, seq, false);
    MultiViewSequence loaded = load_sequence(dir);
    std::filesystem::remove_all(dir);

    REQUIRE(loaded.num_views() == 2);
    REQUIRE(loaded.num_frames() == 3);
    for (size_t i = 0; i < seq.images[1][2].data.size(); ++i)
        CHECK(loaded.images[1][2].data[i] ==
              doctest::Approx(seq.images[1][2].data[i]).epsilon(1e-6));
    CHECK(loaded.cameras[1].translation.x ==
          doctest::Approx(seq.cameras[1].translation.x).epsilon(1e-12));
}

TEST_CASE("outlier config injects a single-frame impulse") {
    SceneConfig config;
    config.num_gaussians = 30;
    config.num_groups = 2;
    config.outlier_group = 1;
    config.outlier_frame = 4;
    config.outlier_scale = 0.5;
    GaussianCloud cloud;
    MotionScript script;
    std::vector<CameraView> rig;
    build_scene(config, cloud, script, rig);

    int member = script.groups[1].members[0];
    double t_norm = 4.0 / (config.num_frames - 1);
    Vec3 with = script.apply(cloud, t_norm, 4).positions[member];
    Vec3 without = script.apply(cloud, t_norm, 3).positions[member];
    CHECK((with - without).x == doctest::Approx(0.5).epsilon(1e-12));
    CHECK((with - without).y == doctest::Approx(0.0).epsilon(1e-12));
}
