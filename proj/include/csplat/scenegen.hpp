#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csplat/camera.hpp"
#include "csplat/gaussians.hpp"
#include "csplat/image.hpp"

namespace csplat {

struct MultiViewSequence {
    std::vector<std::vector<Image>> images;  // [view][frame]
    std::vector<CameraView> cameras;
    Vec3 background;
    double frame_rate = 24.0;

    size_t num_views() const { return images.size(); }
    size_t num_frames() const { return images.empty() ? 0 : images[0].size(); }
};

// Per-group time-parameterized rigid transform: sinusoidal rotation about a
// pivot plus sinusoidal translation, with an optional single-frame impulse
// offset (used to inject outlier trajectories in tests).
struct MotionGroup {
    std::vector<int> members;
    Vec3 pivot;
    Vec3 rotation_axis{0, 1, 0};
    double swing_amplitude = 0.0;  // radians
    Vec3 translation_amplitude;
    double cycles = 1.0;
    double phase = 0.0;
    int impulse_frame = -1;
    Vec3 impulse_offset;
};

struct MotionScript {
    std::vector<MotionGroup> groups;

    // Rigid transform of one group at normalized time t in [0,1].
    void group_transform(const MotionGroup& g, double t_norm, int frame_index, Mat3& rotation,
                         Vec3& translation) const;
    // Applies the script; member sets must partition [0, N).
    GaussianCloud apply(const GaussianCloud& canonical, double t_norm, int frame_index) const;
};

// Cameras evenly spaced in azimuth on a horizontal circle at distance `radius`
// from look_at; `height` is the vertical offset of the ring (|height| < radius).
std::vector<CameraView> make_orbit_rig(int num_views, double radius = 2.5,
                                       double fov_degrees = 40.0, double height = 0.0,
                                       const Vec3& look_at = Vec3{}, int width = 64,
                                       int height_px = 64);

// Clustered-blob character stand-in with per-group rigid motions;
// deterministic per seed.
void make_articulated_scene(int num_gaussians, int num_groups, uint64_t seed,
                            double motion_amplitude, GaussianCloud& cloud, MotionScript& script);

MultiViewSequence render_ground_truth(const GaussianCloud& cloud, const MotionScript& script,
                                      const std::vector<CameraView>& rig, int num_frames,
                                      const Vec3& background, int num_threads = 1);

// Axis-aligned bounds of the cloud across all script frames, padded.
void motion_bounds(const GaussianCloud& cloud, const MotionScript& script, int num_frames,
                   double padding, Vec3& lo, Vec3& hi);

// view_{v:02}/frame_{t:03}.png (+ .f32 float dumps) plus rig.json.
void save_sequence(const std::string& dir, const MultiViewSequence& seq, bool write_pngs = true);
MultiViewSequence load_sequence(const std::string& dir);

void save_rig_json(const std::string& path, const std::vector<CameraView>& rig,
                   const Vec3& background, double frame_rate);
void load_rig_json(const std::string& path, std::vector<CameraView>& rig, Vec3& background,
                   double& frame_rate);

struct SceneConfig {
    int num_gaussians = 200;
    int num_groups = 3;
    int num_views = 4;
    int image_size = 64;
    int num_frames = 8;
    uint64_t seed = 1;
    double radius = 2.5;
    double fov_degrees = 40.0;
    double rig_height = 0.0;
    double motion_amplitude = 1.0;
    Vec3 background{0, 0, 0};
    int outlier_group = -1;       // inject an impulse into this group
    int outlier_frame = -1;
    double outlier_scale = 0.0;   // impulse magnitude, world units

    static SceneConfig from_json_file(const std::string& path);  // strict fields
    std::string to_json() const;
};

// Builds cloud + script + rig from a config.
void build_scene(const SceneConfig& config, GaussianCloud& cloud, MotionScript& script,
                 std::vector<CameraView>& rig);

}  // namespace csplat
