#include "csplat/scenegen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "csplat/json_util.hpp"
#include "csplat/rasterizer.hpp"

namespace fs = std::filesystem;

namespace csplat {

void MotionScript::group_transform(const MotionGroup& g, double t_norm, int frame_index,
                                   Mat3& rotation, Vec3& translation) const {
    double phase = 2.0 * std::numbers::pi * g.cycles * t_norm + g.phase;
    double angle = g.swing_amplitude * std::sin(phase);
    rotation = (g.swing_amplitude != 0.0) ? quat_to_rotation(quat_from_axis_angle(g.rotation_axis, angle))
                                          : Mat3::identity();
    translation = g.translation_amplitude * std::sin(phase);
    if (frame_index >= 0 && frame_index == g.impulse_frame) translation += g.impulse_offset;
}

GaussianCloud MotionScript::apply(const GaussianCloud& canonical, double t_norm,
                                  int frame_index) const {
    GaussianCloud out = canonical;
    std::vector<char> seen(canonical.size(), 0);
    for (const MotionGroup& g : groups) {
        Mat3 rot;
        Vec3 trans;
        group_transform(g, t_norm, frame_index, rot, trans);
        Quaternion qrot{1, 0, 0, 0};
        if (g.swing_amplitude != 0.0) {
            double angle = g.swing_amplitude *
                           std::sin(2.0 * std::numbers::pi * g.cycles * t_norm + g.phase);
            qrot = quat_from_axis_angle(g.rotation_axis, angle);
        }
        for (int i : g.members) {
            if (i < 0 || size_t(i) >= canonical.size() || seen[i])
                throw std::invalid_argument("motion groups must partition the cloud");
            seen[i] = 1;
            out.positions[i] = rot * (canonical.positions[i] - g.pivot) + g.pivot + trans;
            out.rotations[i] = quat_multiply(qrot, canonical.rotations[i]);
        }
    }
    for (char s : seen)
        if (!s) throw std::invalid_argument("motion groups must cover every Gaussian");
    return out;
}

std::vector<CameraView> make_orbit_rig(int num_views, double radius, double fov_degrees,
                                       double height, const Vec3& look_at, int width,
                                       int height_px) {
    if (num_views < 1) throw std::invalid_argument("num_views must be >= 1");
    if (radius <= 0.0 || fov_degrees <= 0.0)
        throw std::invalid_argument("radius and FoV must be positive");
    if (std::abs(height) >= radius)
        throw std::invalid_argument("|height| must be smaller than the orbit radius");

    double fov = fov_degrees * std::numbers::pi / 180.0;
    double focal = 0.5 * width / std::tan(0.5 * fov);
    double ring_radius = std::sqrt(radius * radius - height * height);

    std::vector<CameraView> rig;
    for (int v = 0; v < num_views; ++v) {
        double az = 2.0 * std::numbers::pi * v / num_views;
        Vec3 pos = look_at + Vec3{ring_radius * std::sin(az), height, -ring_radius * std::cos(az)};
        Vec3 fwd = (look_at - pos).normalized();
        Vec3 up{0, 1, 0};
        Vec3 right = up.cross(fwd).normalized();
        Vec3 down = right.cross(fwd);

        CameraView cam;
        cam.width = width;
        cam.height = height_px;
        cam.intrinsics = Mat3::identity();
        cam.intrinsics(0, 0) = focal;
        cam.intrinsics(1, 1) = focal;
        cam.intrinsics(0, 2) = 0.5 * width;
        cam.intrinsics(1, 2) = 0.5 * height_px;
        for (int c = 0; c < 3; ++c) {
            cam.rotation(0, c) = right[c];
            cam.rotation(1, c) = down[c];
            cam.rotation(2, c) = fwd[c];
        }
        cam.translation = -(cam.rotation * pos);
        rig.push_back(cam);
    }
    return rig;
}

void make_articulated_scene(int num_gaussians, int num_groups, uint64_t seed,
                            double motion_amplitude, GaussianCloud& cloud,
                            MotionScript& script) {
    if (num_groups < 1 || num_groups > num_gaussians)
        throw std::invalid_argument("need 1 <= num_groups <= num_gaussians");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    cloud = GaussianCloud{};
    cloud.resize(size_t(num_gaussians));
    script = MotionScript{};

    // Torso-and-limbs layout: group 0 at the center, others around it.
    std::vector<Vec3> centers(num_groups);
    centers[0] = Vec3{0, 0, 0};
    for (int g = 1; g < num_groups; ++g) {
        double az = 2.0 * std::numbers::pi * (g - 1) / std::max(1, num_groups - 1);
        centers[g] = Vec3{0.45 * std::cos(az), 0.35 * uni(rng), 0.45 * std::sin(az)};
    }

    int base = num_gaussians / num_groups;
    int extra = num_gaussians % num_groups;
    int next = 0;
    for (int g = 0; g < num_groups; ++g) {
        MotionGroup group;
        group.pivot = centers[g];
        int count = base + (g < extra ? 1 : 0);
        Vec3 group_color{0.25 + 0.5 * std::abs(uni(rng)), 0.25 + 0.5 * std::abs(uni(rng)),
                         0.25 + 0.5 * std::abs(uni(rng))};
        for (int m = 0; m < count; ++m, ++next) {
            group.members.push_back(next);
            cloud.positions[next] =
                centers[g] + Vec3{0.12 * gauss(rng), 0.12 * gauss(rng), 0.12 * gauss(rng)};
            Quaternion q{gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
            cloud.rotations[next] = q.normalized();
            double s = std::log(0.03 + 0.02 * std::abs(uni(rng)));
            cloud.log_scales[next] = Vec3{s + 0.3 * uni(rng), s + 0.3 * uni(rng), s + 0.3 * uni(rng)};
            cloud.opacity_logits[next] = 1.5 + uni(rng);
            cloud.colors[next] =
                Vec3{std::clamp(group_color.x + 0.15 * uni(rng), 0.05, 1.0),
                     std::clamp(group_color.y + 0.15 * uni(rng), 0.05, 1.0),
                     std::clamp(group_color.z + 0.15 * uni(rng), 0.05, 1.0)};
        }
        if (g > 0) {
            group.rotation_axis = Vec3{gauss(rng), gauss(rng), gauss(rng)}.normalized();
            group.swing_amplitude = motion_amplitude * 0.25;
            group.translation_amplitude =
                Vec3{0.12 * uni(rng), 0.12 * uni(rng), 0.12 * uni(rng)} * motion_amplitude;
            group.phase = std::numbers::pi * uni(rng);
        }
        script.groups.push_back(group);
    }
}

MultiViewSequence render_ground_truth(const GaussianCloud& cloud, const MotionScript& script,
                                      const std::vector<CameraView>& rig, int num_frames,
                                      const Vec3& background, int num_threads) {
    if (rig.empty() || num_frames < 1) throw std::invalid_argument("need >= 1 view and frame");
    MultiViewSequence seq;
    seq.cameras = rig;
    seq.background = background;
    seq.images.resize(rig.size());
    for (auto& v : seq.images) v.resize(size_t(num_frames));
    for (int t = 0; t < num_frames; ++t) {
        double t_norm = num_frames > 1 ? double(t) / (num_frames - 1) : 0.0;
        GaussianCloud posed = script.apply(cloud, t_norm, t);
        for (size_t v = 0; v < rig.size(); ++v) {
            RenderConfig rc{rig[v].width, rig[v].height, background, true, num_threads};
            seq.images[v][t] = render(posed, rig[v], rc).color;
        }
    }
    return seq;
}

void motion_bounds(const GaussianCloud& cloud, const MotionScript& script, int num_frames,
                   double padding, Vec3& lo, Vec3& hi) {
    lo = Vec3{1e300, 1e300, 1e300};
    hi = Vec3{-1e300, -1e300, -1e300};
    for (int t = 0; t < std::max(1, num_frames); ++t) {
        double t_norm = num_frames > 1 ? double(t) / (num_frames - 1) : 0.0;
        GaussianCloud posed = script.apply(cloud, t_norm, t);
        for (const Vec3& p : posed.positions) {
            lo = Vec3{std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = Vec3{std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
    }
    lo -= Vec3{padding, padding, padding};
    hi += Vec3{padding, padding, padding};
}

namespace {

std::string view_dir(int v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%02d", v);
    return buf;
}

std::string frame_name(int t, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%03d.%s", t, ext);
    return buf;
}

}  // namespace

void save_rig_json(const std::string& path, const std::vector<CameraView>& rig,
                   const Vec3& background, double frame_rate) {
    nlohmann::json j;
    j["background"] = {background.x, background.y, background.z};
    j["frame_rate"] = frame_rate;
    for (const CameraView& cam : rig) {
        nlohmann::json jc;
        jc["width"] = cam.width;
        jc["height"] = cam.height;
        jc["K"] = cam.intrinsics.m;
        jc["R"] = cam.rotation.m;
        jc["t"] = {cam.translation.x, cam.translation.y, cam.translation.z};
        j["views"].push_back(jc);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

void load_rig_json(const std::string& path, std::vector<CameraView>& rig, Vec3& background,
                   double& frame_rate) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    reject_unknown_fields(j, {"background", "frame_rate", "views"}, "rig");
    auto bg = j.at("background").get<std::vector<double>>();
    background = {bg.at(0), bg.at(1), bg.at(2)};
    frame_rate = json_get<double>(j, "frame_rate", 24.0);
    rig.clear();
    for (const auto& jc : j.at("views")) {
        reject_unknown_fields(jc, {"width", "height", "K", "R", "t"}, "rig view");
        CameraView cam;
        cam.width = jc.at("width").get<int>();
        cam.height = jc.at("height").get<int>();
        cam.intrinsics.m = jc.at("K").get<std::array<double, 9>>();
        cam.rotation.m = jc.at("R").get<std::array<double, 9>>();
        auto t = jc.at("t").get<std::vector<double>>();
        cam.translation = {t.at(0), t.at(1), t.at(2)};
        rig.push_back(cam);
    }
}

void save_sequence(const std::string& dir, const MultiViewSequence& seq, bool write_pngs) {
    fs::create_directories(dir);
    save_rig_json((fs::path(dir) / "rig.json").string(), seq.cameras, seq.background,
                  seq.frame_rate);
    for (size_t v = 0; v < seq.num_views(); ++v) {
        fs::path vdir = fs::path(dir) / view_dir(int(v));
        fs::create_directories(vdir);
        for (size_t t = 0; t < seq.images[v].size(); ++t) {
            write_f32((vdir / frame_name(int(t), "f32")).string(), seq.images[v][t]);
            if (write_pngs) write_png((vdir / frame_name(int(t), "png")).string(), seq.images[v][t]);
        }
    }
}

MultiViewSequence load_sequence(const std::string& dir) {
    MultiViewSequence seq;
    load_rig_json((fs::path(dir) / "rig.json").string(), seq.cameras, seq.background,
                  seq.frame_rate);
    seq.images.resize(seq.cameras.size());
    for (size_t v = 0; v < seq.cameras.size(); ++v) {
        fs::path vdir = fs::path(dir) / view_dir(int(v));
        for (int t = 0;; ++t) {
            fs::path f32 = vdir / frame_name(t, "f32");
            if (!fs::exists(f32)) break;
            seq.images[v].push_back(read_f32(f32.string()));
        }
        if (seq.images[v].empty())
            throw std::runtime_error("no frames found under " + vdir.string());
        if (v > 0 && seq.images[v].size() != seq.images[0].size())
            throw std::runtime_error("frame count mismatch at " + vdir.string());
    }
    return seq;
}

SceneConfig SceneConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scene config: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    reject_unknown_fields(j,
                          {"num_gaussians", "num_groups", "num_views", "image_size", "num_frames",
                           "seed", "radius", "fov_degrees", "rig_height", "motion_amplitude",
                           "background", "outlier_group", "outlier_frame", "outlier_scale"},
                          "scene config");
    SceneConfig c;
    c.num_gaussians = json_get<int>(j, "num_gaussians", c.num_gaussians);
    c.num_groups = json_get<int>(j, "num_groups", c.num_groups);
    c.num_views = json_get<int>(j, "num_views", c.num_views);
    c.image_size = json_get<int>(j, "image_size", c.image_size);
    c.num_frames = json_get<int>(j, "num_frames", c.num_frames);
    c.seed = json_get<uint64_t>(j, "seed", c.seed);
    c.radius = json_get<double>(j, "radius", c.radius);
    c.fov_degrees = json_get<double>(j, "fov_degrees", c.fov_degrees);
    c.rig_height = json_get<double>(j, "rig_height", c.rig_height);
    c.motion_amplitude = json_get<double>(j, "motion_amplitude", c.motion_amplitude);
    if (j.contains("background")) {
        auto bg = j.at("background").get<std::vector<double>>();
        if (bg.size() != 3) throw ConfigError("background must have 3 components");
        c.background = {bg[0], bg[1], bg[2]};
    }
    c.outlier_group = json_get<int>(j, "outlier_group", c.outlier_group);
    c.outlier_frame = json_get<int>(j, "outlier_frame", c.outlier_frame);
    c.outlier_scale = json_get<double>(j, "outlier_scale", c.outlier_scale);
    if (c.num_gaussians < 1 || c.num_views < 1 || c.num_frames < 1 || c.image_size < 1)
        throw ConfigError("scene dimensions must be positive");
    return c;
}

std::string SceneConfig::to_json() const {
    nlohmann::json j{{"num_gaussians", num_gaussians},
                     {"num_groups", num_groups},
                     {"num_views", num_views},
                     {"image_size", image_size},
                     {"num_frames", num_frames},
                     {"seed", seed},
                     {"radius", radius},
                     {"fov_degrees", fov_degrees},
                     {"rig_height", rig_height},
                     {"motion_amplitude", motion_amplitude},
                     {"background", {background.x, background.y, background.z}},
                     {"outlier_group", outlier_group},
                     {"outlier_frame", outlier_frame},
                     {"outlier_scale", outlier_scale}};
    return j.dump(2);
}

void build_scene(const SceneConfig& config, GaussianCloud& cloud, MotionScript& script,
                 std::vector<CameraView>& rig) {
    make_articulated_scene(config.num_gaussians, config.num_groups, config.seed,
                           config.motion_amplitude, cloud, script);
    if (config.outlier_group >= 0) {
        if (size_t(config.outlier_group) >= script.groups.size())
            throw ConfigError("outlier_group out of range");
        MotionGroup& g = script.groups[size_t(config.outlier_group)];
        g.impulse_frame = config.outlier_frame;
        g.impulse_offset = Vec3{config.outlier_scale, 0, 0};
    }
    rig = make_orbit_rig(config.num_views, config.radius, config.fov_degrees, config.rig_height,
                         Vec3{}, config.image_size, config.image_size);
}

}  // namespace csplat
