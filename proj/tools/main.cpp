#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csplat/deform.hpp"
#include "csplat/json_util.hpp"
#include "csplat/losses.hpp"
#include "csplat/metrics.hpp"
#include "csplat/rasterizer.hpp"
#include "csplat/scenegen.hpp"
#include "csplat/trainer.hpp"
#include "csplat/viewformer.hpp"

namespace fs = std::filesystem;
using namespace csplat;

namespace {

constexpr const char* kVersion = "0.1.0";

enum ExitCode { kOk = 0, kConfigError = 2, kNumericFailure = 3, kIoError = 4 };

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Per-command provenance record written next to the outputs.
struct RunManifest {
    std::string command;
    std::string config_hash;
    uint64_t seed = 0;
    nlohmann::json inputs = nlohmann::json::object();
    nlohmann::json outputs = nlohmann::json::object();
    nlohmann::json timings_ms = nlohmann::json::object();

    void write(const std::string& path) const {
        nlohmann::json j;
        j["command"] = command;
        j["config_hash"] = config_hash;
        j["seed"] = seed;
        j["version"] = kVersion;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["timings_ms"] = timings_ms;
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write manifest: " + path);
        out << j.dump(2) << "\n";
    }
};

class StageTimer {
public:
    explicit StageTimer(RunManifest& manifest) : manifest_(manifest) { mark(); }
    void stage(const std::string& name) {
        auto now = std::chrono::steady_clock::now();
        double ms = std::chrono::duration<double, std::milli>(now - last_).count();
        manifest_.timings_ms[name] = ms;
        last_ = now;
    }

private:
    void mark() { last_ = std::chrono::steady_clock::now(); }
    RunManifest& manifest_;
    std::chrono::steady_clock::time_point last_;
};

std::string hash_hex(const std::string& text) {
    std::ostringstream ss;
    ss << std::hex << fnv1a(text);
    return ss.str();
}

int cmd_gen_scene(const std::string& config_path, const std::string& out_dir) {
    std::string config_text = read_text_file(config_path);
    SceneConfig config = SceneConfig::from_json_file(config_path);

    RunManifest manifest;
    manifest.command = "gen-scene";
    manifest.config_hash = hash_hex(config_text);
    manifest.seed = config.seed;
    manifest.inputs["config"] = config_path;
    StageTimer timer(manifest);

    GaussianCloud cloud;
    MotionScript script;
    std::vector<CameraView> rig;
    build_scene(config, cloud, script, rig);
    timer.stage("build_scene");

    MultiViewSequence seq =
        render_ground_truth(cloud, script, rig, config.num_frames, config.background);
    timer.stage("render_ground_truth");

    fs::create_directories(out_dir);
    save_sequence(out_dir, seq);
    save_ply((fs::path(out_dir) / "cloud.ply").string(), cloud);
    {
        std::ofstream cfg(fs::path(out_dir) / "scene.json");
        cfg << config.to_json() << "\n";
    }
    timer.stage("write_outputs");

    manifest.outputs["dir"] = out_dir;
    manifest.outputs["views"] = int(seq.num_views());
    manifest.outputs["frames"] = int(seq.num_frames());
    manifest.write((fs::path(out_dir) / "manifest.json").string());
    std::cout << "wrote " << seq.num_views() << " views x " << seq.num_frames()
              << " frames to " << out_dir << "\n";
    return kOk;
}

int cmd_fit(const std::string& scene_dir, const std::string& config_path,
            const std::string& out_ckpt, bool coarse_only, int threads,
            const std::vector<int>& views) {
    std::string config_text = read_text_file(config_path);
    TrainConfig config = TrainConfig::from_json_file(config_path);
    if (threads > 0) config.num_threads = threads;

    RunManifest manifest;
    manifest.command = "fit";
    manifest.config_hash = hash_hex(config_text);
    manifest.seed = config.seed;
    manifest.inputs["scene"] = scene_dir;
    manifest.inputs["config"] = config_path;
    StageTimer timer(manifest);

    MultiViewSequence seq = load_sequence(scene_dir);
    if (!views.empty()) {
        std::vector<std::vector<Image>> kept_images;
        std::vector<CameraView> kept_cams;
        for (int v : views) {
            if (v < 0 || v >= int(seq.num_views()))
                throw ConfigError("--views index out of range: " + std::to_string(v));
            kept_images.push_back(seq.images[v]);
            kept_cams.push_back(seq.cameras[v]);
        }
        seq.images = std::move(kept_images);
        seq.cameras = std::move(kept_cams);
    }
    timer.stage("load_scene");

    // Cold start inside the ground-truth cloud's motion bounds when available,
    // otherwise a unit box.
    Vec3 lo{-1, -1, -1}, hi{1, 1, 1};
    GaussianCloud init;
    fs::path cloud_path = fs::path(scene_dir) / "cloud.ply";
    if (fs::exists(cloud_path)) {
        GaussianCloud gt_cloud = load_ply(cloud_path.string());
        lo = hi = gt_cloud.positions.at(0);
        for (const Vec3& p : gt_cloud.positions) {
            lo = Vec3{std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = Vec3{std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
        Vec3 pad{0.5, 0.5, 0.5};
        lo = lo - pad;
        hi = hi + pad;
        init = gt_cloud;
        // Perturb so the fit does real work instead of starting at the answer.
        std::mt19937_64 rng(config.seed + 17);
        std::normal_distribution<double> jitter(0.0, 0.05);
        for (Vec3& p : init.positions) p = p + Vec3{jitter(rng), jitter(rng), jitter(rng)};
    } else {
        init = cold_start_cloud(200, lo, hi, config.seed);
    }

    FitState state = init_fit_state(init, lo, hi, int(seq.num_frames()), config);

    fs::path log_path = fs::path(out_ckpt).string() + ".log.jsonl";
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("cannot write log: " + log_path.string());

    bool have_good = false;
    auto snapshot = [&](const FitState& s) {
        save_checkpoint(out_ckpt, s.cloud, s.field, s.num_frames);
        have_good = true;
    };

    try {
        coarse_fit(state, seq, config, &log);
        timer.stage("coarse_fit");
        snapshot(state);
        if (!coarse_only) {
            progressive_fine_fit(state, seq, config, &log, snapshot);
            timer.stage("fine_fit");
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        if (have_good)
            std::cerr << "last-good checkpoint retained at " << out_ckpt << "\n";
        return kNumericFailure;
    }

    save_checkpoint(out_ckpt, state.cloud, state.field, state.num_frames);
    timer.stage("save_checkpoint");

    manifest.outputs["checkpoint"] = out_ckpt;
    manifest.outputs["log"] = log_path.string();
    manifest.outputs["coarse_only"] = coarse_only;
    manifest.write(out_ckpt + ".manifest.json");
    std::cout << "checkpoint written to " << out_ckpt << "\n";
    return kOk;
}

std::vector<double> parse_frames(const std::string& text, int num_frames) {
    std::vector<double> times;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        size_t dots = token.find("..");
        if (dots != std::string::npos) {
            int a = std::stoi(token.substr(0, dots));
            int b = std::stoi(token.substr(dots + 2));
            if (b < a) throw ConfigError("empty frame range: " + token);
            for (int t = a; t <= b; ++t) times.push_back(double(t));
        } else {
            times.push_back(std::stod(token));
        }
    }
    if (times.empty()) throw ConfigError("no frames requested");
    for (double t : times)
        if (t < 0.0 || t > double(num_frames - 1))
            throw ConfigError("frame " + std::to_string(t) + " outside [0, " +
                              std::to_string(num_frames - 1) + "]");
    return times;
}

int cmd_render(const std::string& ckpt_path, const std::string& rig_path,
               const std::string& frames, const std::string& out_dir, int threads) {
    RunManifest manifest;
    manifest.command = "render";
    manifest.config_hash = hash_hex(read_text_file(rig_path));
    manifest.inputs["ckpt"] = ckpt_path;
    manifest.inputs["rig"] = rig_path;
    manifest.inputs["frames"] = frames;
    StageTimer timer(manifest);

    GaussianCloud cloud;
    DeformationField field;
    int num_frames = 0;
    load_checkpoint(ckpt_path, cloud, field, num_frames);

    std::vector<CameraView> rig;
    Vec3 background;
    double frame_rate = 24.0;
    load_rig_json(rig_path, rig, background, frame_rate);
    timer.stage("load");

    std::vector<double> times = parse_frames(frames, num_frames);

    fs::create_directories(out_dir);
    for (size_t v = 0; v < rig.size(); ++v) {
        char view_dir[32];
        std::snprintf(view_dir, sizeof view_dir, "view_%02zu", v);
        fs::path dir = fs::path(out_dir) / view_dir;
        fs::create_directories(dir);
        RenderConfig rc;
        rc.width = rig[v].width;
        rc.height = rig[v].height;
        rc.background = background;
        rc.num_threads = std::max(1, threads);
        for (double t : times) {
            double t_norm = num_frames > 1 ? t / (num_frames - 1) : 0.0;
            DeformedCloud deformed = deform_cloud(field, cloud, t_norm);
            RenderTarget target = render(deformed.cloud, rig[v], rc);
            char name[48];
            if (t == std::floor(t))
                std::snprintf(name, sizeof name, "frame_%03d", int(t));
            else
                std::snprintf(name, sizeof name, "frame_%07.3f", t);
            write_png((dir / (std::string(name) + ".png")).string(), target.color);
            write_f32((dir / (std::string(name) + ".f32")).string(), target.color);
        }
    }
    timer.stage("render");

    manifest.outputs["dir"] = out_dir;
    manifest.outputs["views"] = int(rig.size());
    manifest.outputs["frames_rendered"] = int(times.size());
    manifest.write((fs::path(out_dir) / "manifest.json").string());
    std::cout << "rendered " << times.size() << " frames x " << rig.size() << " views to "
              << out_dir << "\n";
    return kOk;
}

std::vector<std::vector<Image>> load_image_grid(const std::string& dir) {
    std::vector<std::vector<Image>> grid;
    for (int v = 0;; ++v) {
        char view_dir[32];
        std::snprintf(view_dir, sizeof view_dir, "view_%02d", v);
        fs::path vd = fs::path(dir) / view_dir;
        if (!fs::exists(vd)) break;
        std::vector<Image> frames;
        for (int t = 0;; ++t) {
            char name[32];
            std::snprintf(name, sizeof name, "frame_%03d", t);
            fs::path f32 = vd / (std::string(name) + ".f32");
            fs::path png = vd / (std::string(name) + ".png");
            if (fs::exists(f32))
                frames.push_back(read_f32(f32.string()));
            else if (fs::exists(png))
                frames.push_back(read_png(png.string()));
            else
                break;
        }
        grid.push_back(std::move(frames));
    }
    if (grid.empty()) throw std::runtime_error("no view_NN directories under " + dir);
    return grid;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& json_out) {
    auto pred = load_image_grid(pred_dir);
    auto gt = load_image_grid(gt_dir);
    if (pred.size() != gt.size())
        throw std::runtime_error("view count mismatch: pred has " +
                                 std::to_string(pred.size()) + ", gt has " +
                                 std::to_string(gt.size()));
    for (size_t v = 0; v < pred.size(); ++v)
        if (pred[v].size() != gt[v].size()) {
            std::ostringstream msg;
            msg << "frame count mismatch in view " << v << ": pred has " << pred[v].size()
                << ", gt has " << gt[v].size() << "; missing frames:";
            size_t lo = std::min(pred[v].size(), gt[v].size());
            size_t hi = std::max(pred[v].size(), gt[v].size());
            for (size_t t = lo; t < hi; ++t) msg << " frame_" << t;
            throw std::runtime_error(msg.str());
        }

    MetricReport report = evaluate_grid(pred, gt);
    std::cout << report.to_table();
    if (!json_out.empty()) {
        std::ofstream out(json_out);
        if (!out) throw std::runtime_error("cannot write: " + json_out);
        out << report.to_json() << "\n";
    } else {
        std::cout << report.to_json() << "\n";
    }
    return kOk;
}

int cmd_audit_shapes(const std::string& spec_path) {
    LatentSpec spec = spec_path.empty() ? LatentSpec{} : LatentSpec::from_json_file(spec_path);
    std::cout << shape_ledger(spec);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neighbor-constrained 4D gaussian splatting toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, scene_dir, ckpt_path, rig_path, frames = "0..0";
    std::string pred_dir, gt_dir, json_out, spec_path;
    bool coarse_only = false;
    int threads = 1;
    std::vector<int> view_filter;

    auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene");
    gen->add_option("--config", config_path, "scene config JSON")->required();
    gen->add_option("--out", out_path, "output directory")->required();

    auto* fit = app.add_subcommand("fit", "fit a 4D gaussian model to a scene");
    fit->add_option("--scene", scene_dir, "scene directory")->required();
    fit->add_option("--config", config_path, "train config JSON")->required();
    fit->add_option("--out", ckpt_path, "output checkpoint path")->required();
    fit->add_flag("--coarse-only", coarse_only, "stop after the coarse stage");
    fit->add_option("--threads", threads, "worker threads (1 = bit-reproducible)");
    fit->add_option("--views", view_filter, "train on this subset of view indices");

    auto* ren = app.add_subcommand("render", "render a fitted model");
    ren->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    ren->add_option("--rig", rig_path, "rig JSON")->required();
    ren->add_option("--frames", frames, "frame list, e.g. 0..7 or 1,2.5,4");
    ren->add_option("--out", out_path, "output directory")->required();
    ren->add_option("--threads", threads, "worker threads");

    auto* ev = app.add_subcommand("eval", "compare rendered frames against ground truth");
    ev->add_option("--pred", pred_dir, "prediction directory")->required();
    ev->add_option("--gt", gt_dir, "ground-truth directory")->required();
    ev->add_option("--json", json_out, "write report JSON here instead of stdout");

    auto* audit = app.add_subcommand("audit-shapes", "print the viewformer shape ledger");
    audit->add_option("--spec", spec_path, "latent spec JSON (defaults used if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (gen->parsed()) return cmd_gen_scene(config_path, out_path);
        if (fit->parsed())
            return cmd_fit(scene_dir, config_path, ckpt_path, coarse_only, threads, view_filter);
        if (ren->parsed()) return cmd_render(ckpt_path, rig_path, frames, out_path, threads);
        if (ev->parsed()) return cmd_eval(pred_dir, gt_dir, json_out);
        if (audit->parsed()) return cmd_audit_shapes(spec_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kNumericFailure;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    }
    return kOk;
}
