#include "csplat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "csplat/json_util.hpp"
#include "csplat/rasterizer.hpp"

namespace csplat {

static_assert(sizeof(Vec3) == 3 * sizeof(double));
static_assert(sizeof(Quaternion) == 4 * sizeof(double));

namespace {

std::span<double> as_span(std::vector<Vec3>& v) {
    return {reinterpret_cast<double*>(v.data()), v.size() * 3};
}
std::span<double> as_span(std::vector<Quaternion>& v) {
    return {reinterpret_cast<double*>(v.data()), v.size() * 4};
}
std::span<const double> as_span(const std::vector<Vec3>& v) {
    return {reinterpret_cast<const double*>(v.data()), v.size() * 3};
}
std::span<const double> as_span(const std::vector<Quaternion>& v) {
    return {reinterpret_cast<const double*>(v.data()), v.size() * 4};
}

void ensure_moments(FitState& state, const std::string& name, size_t size) {
    AdamMoments& m = state.moments[name];
    if (m.first.size() != size) {
        m.first.assign(size, 0.0);
        m.second.assign(size, 0.0);
        m.step = 0;
    }
}

void update_cloud_groups(FitState& state, const RenderGradients& grads, double lr) {
    GaussianCloud& c = state.cloud;
    ensure_moments(state, "positions", c.size() * 3);
    ensure_moments(state, "rotations", c.size() * 4);
    ensure_moments(state, "log_scales", c.size() * 3);
    ensure_moments(state, "opacity_logits", c.size());
    ensure_moments(state, "colors", c.size() * 3);
    adam_step(as_span(c.positions), as_span(grads.d_position), state.moments["positions"], lr,
              "positions");
    adam_step(as_span(c.rotations), as_span(grads.d_rotation), state.moments["rotations"], lr,
              "rotations");
    adam_step(as_span(c.log_scales), as_span(grads.d_log_scale), state.moments["log_scales"], lr,
              "log_scales");
    adam_step(c.opacity_logits, grads.d_opacity_logit, state.moments["opacity_logits"], lr,
              "opacity_logits");
    adam_step(as_span(c.colors), as_span(grads.d_color), state.moments["colors"], lr, "colors");
}

void update_field_groups(FitState& state, const FieldGradients& grads, double lr) {
    DeformationField& f = state.field;
    ensure_moments(state, "grid", f.grid.data.size());
    ensure_moments(state, "hidden_weights", f.hidden_layer.weights.size());
    ensure_moments(state, "hidden_biases", f.hidden_layer.biases.size());
    ensure_moments(state, "output_weights", f.output_layer.weights.size());
    ensure_moments(state, "output_biases", f.output_layer.biases.size());
    adam_step(f.grid.data, grads.d_grid, state.moments["grid"], lr, "grid");
    adam_step(f.hidden_layer.weights, grads.d_hidden.d_weights, state.moments["hidden_weights"],
              lr, "hidden_weights");
    adam_step(f.hidden_layer.biases, grads.d_hidden.d_biases, state.moments["hidden_biases"], lr,
              "hidden_biases");
    adam_step(f.output_layer.weights, grads.d_output.d_weights, state.moments["output_weights"],
              lr, "output_weights");
    adam_step(f.output_layer.biases, grads.d_output.d_biases, state.moments["output_biases"], lr,
              "output_biases");
}

double frame_time(int frame, int num_frames) {
    return num_frames > 1 ? double(frame) / (num_frames - 1) : 0.0;
}

void log_line(std::ostream* log, const char* stage, int64_t iteration,
              const FineLossBreakdown& b) {
    if (!log) return;
    nlohmann::json j{{"stage", stage},          {"iteration", iteration},
                     {"total", b.total},        {"l1", b.l1},
                     {"dssim", b.dssim},        {"tv", b.tv},
                     {"neighbor", b.neighbor},  {"active_gate_fraction", b.active_gate_fraction}};
    *log << j.dump() << "\n";
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               double lr, const std::string& group_name, double beta1, double beta2,
               double eps) {
    if (params.size() != grads.size() || moments.first.size() != params.size())
        throw std::invalid_argument("adam_step shape mismatch for group " + group_name);
    for (double g : grads)
        if (!std::isfinite(g))
            throw NumericError("non-finite gradient in parameter group " + group_name);
    moments.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, double(moments.step));
    const double bc2 = 1.0 - std::pow(beta2, double(moments.step));
    for (size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        moments.first[i] = beta1 * moments.first[i] + (1.0 - beta1) * g;
        moments.second[i] = beta2 * moments.second[i] + (1.0 - beta2) * g * g;
        double m_hat = moments.first[i] / bc1;
        double v_hat = moments.second[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

FitState init_fit_state(const GaussianCloud& initial_cloud, const Vec3& bounds_lo,
                        const Vec3& bounds_hi, int num_frames, const TrainConfig& config) {
    FitState state;
    state.cloud = initial_cloud;
    state.field.bounds_lo = bounds_lo;
    state.field.bounds_hi = bounds_hi;
    state.field.init_weights(config.seed + 17);
    state.num_frames = num_frames;
    state.window_lo = state.window_hi = num_frames / 2;
    state.rng.seed(config.seed);
    return state;
}

GaussianCloud cold_start_cloud(int n, const Vec3& bounds_lo, const Vec3& bounds_hi,
                               uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(bounds_lo.x, bounds_hi.x);
    std::uniform_real_distribution<double> uy(bounds_lo.y, bounds_hi.y);
    std::uniform_real_distribution<double> uz(bounds_lo.z, bounds_hi.z);
    GaussianCloud cloud;
    cloud.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
        cloud.positions[i] = {ux(rng), uy(rng), uz(rng)};
        cloud.rotations[i] = {1, 0, 0, 0};
        cloud.opacity_logits[i] = 0.0;
        cloud.colors[i] = {0.5, 0.5, 0.5};
    }
    double mean_nn = 0.0;
    for (int i = 0; i < n; ++i) {
        double best = 1e300;
        for (int j = 0; j < n; ++j)
            if (j != i) best = std::min(best, (cloud.positions[i] - cloud.positions[j]).norm());
        mean_nn += best / double(n);
    }
    double s = std::log(std::max(1e-6, 0.5 * mean_nn));
    for (int i = 0; i < n; ++i) cloud.log_scales[i] = {s, s, s};
    return cloud;
}

void coarse_fit(FitState& state, const MultiViewSequence& sequence, const TrainConfig& config,
                std::ostream* log) {
    if (sequence.num_views() == 0 || sequence.num_frames() == 0)
        throw std::invalid_argument("empty sequence");
    const int mid = int(sequence.num_frames()) / 2;
    std::uniform_int_distribution<int> pick_view(0, int(sequence.num_views()) - 1);
    for (int it = 0; it < config.coarse_iters; ++it) {
        RenderGradients total(state.cloud.size());
        double loss = 0.0;
        for (int b = 0; b < std::max(1, config.batch); ++b) {
            int v = pick_view(state.rng);
            const CameraView& cam = sequence.cameras[v];
            RenderConfig rc{cam.width, cam.height, sequence.background, true,
                            config.num_threads};
            RenderTarget target = render(state.cloud, cam, rc);
            Image d_image;
            loss += l1_loss_backward(target.color, sequence.images[v][mid], d_image);
            total.accumulate(render_backward(state.cloud, cam, rc, d_image));
        }
        if (!std::isfinite(loss)) throw NumericError("non-finite coarse loss");
        update_cloud_groups(state, total, config.learning_rate);
        ++state.coarse_iterations_done;
        if (log && (it % 10 == 0 || it + 1 == config.coarse_iters)) {
            FineLossBreakdown b;
            b.l1 = loss / std::max(1, config.batch);
            b.total = b.l1;
            log_line(log, "coarse", state.coarse_iterations_done, b);
        }
    }
}

double compute_tau(const FitState& state, const TauPolicy& policy) {
    if (!policy.adaptive) return policy.absolute;
    std::vector<double> displacements;
    for (int t = state.window_lo + 1; t <= state.window_hi; ++t) {
        DeformedCloud prev =
            deform_cloud(state.field, state.cloud, frame_time(t - 1, state.num_frames));
        DeformedCloud curr =
            deform_cloud(state.field, state.cloud, frame_time(t, state.num_frames));
        for (size_t i = 0; i < state.cloud.size(); ++i)
            displacements.push_back((curr.cloud.positions[i] - prev.cloud.positions[i]).norm());
    }
    if (displacements.empty()) return policy.absolute;
    size_t mid = displacements.size() / 2;
    std::nth_element(displacements.begin(), displacements.begin() + mid, displacements.end());
    double median = displacements[mid];
    return median > 0.0 ? policy.multiplier * median : policy.absolute;
}

void progressive_fine_fit(FitState& state, const MultiViewSequence& sequence,
                          const TrainConfig& config, std::ostream* log,
                          const std::function<void(const FitState&)>& step_callback) {
    const int num_frames = int(sequence.num_frames());
    state.num_frames = num_frames;
    const int mid = num_frames / 2;
    state.window_lo = state.window_hi = mid;

    bool done = false;
    while (!done) {
        done = state.window_lo == 0 && state.window_hi == num_frames - 1;

        NeighborGraph graph = build_neighbor_graph(state.cloud.positions, config.k_neighbors);
        double tau = compute_tau(state, config.tau);
        std::uniform_int_distribution<int> pick_view(0, int(sequence.num_views()) - 1);
        std::uniform_int_distribution<int> pick_frame(state.window_lo, state.window_hi);

        std::vector<double> grad_norms(state.cloud.size(), 0.0);
        int since_densify = 0;
        for (int it = 0; it < config.fine_iters_per_step; ++it) {
            RenderGradients d_canonical(state.cloud.size());
            FieldGradients d_field(state.field);
            FineLossBreakdown mean_loss;
            const int batch = std::max(1, config.batch);
            for (int b = 0; b < batch; ++b) {
                int v = pick_view(state.rng);
                int t = pick_frame(state.rng);
                const CameraView& cam = sequence.cameras[v];
                RenderConfig rc{cam.width, cam.height, sequence.background, true,
                                config.num_threads};

                DeformedCloud deformed =
                    deform_cloud(state.field, state.cloud, frame_time(t, num_frames));
                RenderTarget target = render(deformed.cloud, cam, rc);

                const Image& gt = sequence.images[v][t];
                Image d_l1, d_dssim;
                FineLossBreakdown b_loss;
                b_loss.l1 = l1_loss_backward(target.color, gt, d_l1);
                b_loss.dssim = dssim_loss_backward(target.color, gt, d_dssim);
                Image d_image(cam.width, cam.height);
                for (size_t i = 0; i < d_image.data.size(); ++i)
                    d_image.data[i] = config.weights.lambda_l1 * d_l1.data[i] +
                                      config.weights.lambda_dssim * d_dssim.data[i];

                RenderGradients d_deformed =
                    render_backward(deformed.cloud, cam, rc, d_image);

                // Neighbor term on the deformed positions; the previous frame
                // is a constant (clamped to the window floor).
                int t_prev = std::max(t - 1, state.window_lo);
                DeformedCloud prev =
                    deform_cloud(state.field, state.cloud, frame_time(t_prev, num_frames));
                std::vector<Vec3> d_curr(state.cloud.size());
                NeighborLossResult nb = neighbor_loss_backward(
                    graph, prev.cloud.positions, deformed.cloud.positions, tau, d_curr,
                    config.weights.lambda_neighbor, config.disable_gate);
                for (size_t i = 0; i < d_curr.size(); ++i)
                    d_deformed.d_position[i] += d_curr[i];
                b_loss.neighbor = nb.value;
                b_loss.active_gate_fraction = nb.active_gate_fraction;

                deform_backward(state.field, state.cloud, deformed, d_deformed, d_canonical,
                                d_field);
                b_loss.tv = tv_loss_backward(state.field.grid, d_field.d_grid,
                                             config.weights.lambda_tv);

                b_loss.total = config.weights.lambda_l1 * b_loss.l1 +
                               config.weights.lambda_dssim * b_loss.dssim +
                               config.weights.lambda_neighbor * b_loss.neighbor +
                               config.weights.lambda_tv * b_loss.tv;
                mean_loss.total += b_loss.total / batch;
                mean_loss.l1 += b_loss.l1 / batch;
                mean_loss.dssim += b_loss.dssim / batch;
                mean_loss.tv += b_loss.tv / batch;
                mean_loss.neighbor += b_loss.neighbor / batch;
                mean_loss.active_gate_fraction += b_loss.active_gate_fraction / batch;
            }
            if (!std::isfinite(mean_loss.total)) throw NumericError("non-finite fine loss");

            for (size_t i = 0; i < grad_norms.size(); ++i)
                grad_norms[i] += d_canonical.d_position[i].norm();
            update_cloud_groups(state, d_canonical, config.learning_rate);
            update_field_groups(state, d_field, config.learning_rate);
            ++state.fine_iterations_done;
            log_line(log, "fine", state.fine_iterations_done, mean_loss);

            if (config.densify.enabled && ++since_densify >= config.densify.interval) {
                for (double& g : grad_norms) g /= double(since_densify);
                if (densify_and_prune(state, grad_norms, config.densify))
                    graph = build_neighbor_graph(state.cloud.positions, config.k_neighbors);
                grad_norms.assign(state.cloud.size(), 0.0);
                since_densify = 0;
            }
        }
        if (step_callback) step_callback(state);
        state.window_lo = std::max(0, state.window_lo - 1);
        state.window_hi = std::min(num_frames - 1, state.window_hi + 1);
    }
}

bool densify_and_prune(FitState& state, const std::vector<double>& position_grad_norms,
                       const DensifyConfig& config) {
    GaussianCloud& c = state.cloud;
    GaussianCloud next;
    std::normal_distribution<double> jitter(0.0, 1.0);
    bool changed = false;
    for (size_t i = 0; i < c.size(); ++i) {
        if (sigmoid(c.opacity_logits[i]) < config.opacity_prune) {
            changed = true;
            continue;
        }
        next.positions.push_back(c.positions[i]);
        next.rotations.push_back(c.rotations[i]);
        next.log_scales.push_back(c.log_scales[i]);
        next.opacity_logits.push_back(c.opacity_logits[i]);
        next.colors.push_back(c.colors[i]);

        double max_scale = std::exp(std::max({c.log_scales[i].x, c.log_scales[i].y,
                                              c.log_scales[i].z}));
        bool oversized = max_scale > config.size_threshold;
        bool high_grad = i < position_grad_norms.size() &&
                         position_grad_norms[i] > config.grad_threshold;
        if (oversized || high_grad) {
            changed = true;
            Vec3 offset{jitter(state.rng) * max_scale * 0.5, jitter(state.rng) * max_scale * 0.5,
                        jitter(state.rng) * max_scale * 0.5};
            next.positions.push_back(c.positions[i] + offset);
            next.rotations.push_back(c.rotations[i]);
            Vec3 ls = c.log_scales[i];
            if (oversized) {
                // split: both copies shrink
                ls = ls - Vec3{std::log(1.6), std::log(1.6), std::log(1.6)};
                next.log_scales.back() = ls;
            }
            next.log_scales.push_back(ls);
            next.opacity_logits.push_back(c.opacity_logits[i]);
            next.colors.push_back(c.colors[i]);
        }
    }
    if (!changed) return false;
    c = next;
    // Moment buffers no longer shape-match; drop the cloud groups so they are
    // rebuilt zeroed on the next step.
    for (const char* g : {"positions", "rotations", "log_scales", "opacity_logits", "colors"})
        state.moments.erase(g);
    return true;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open train config: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    reject_unknown_fields(j,
                          {"learning_rate", "coarse_iters", "fine_iters_per_step", "k_neighbors",
                           "lambda_l1", "lambda_dssim", "lambda_neighbor", "lambda_tv",
                           "tau_adaptive", "tau_multiplier", "tau_absolute", "densify_enabled",
                           "densify_interval", "densify_grad_threshold",
                           "densify_size_threshold", "densify_opacity_prune", "seed", "batch",
                           "num_threads", "disable_gate"},
                          "train config");
    TrainConfig c;
    c.learning_rate = json_get<double>(j, "learning_rate", c.learning_rate);
    c.coarse_iters = json_get<int>(j, "coarse_iters", c.coarse_iters);
    c.fine_iters_per_step = json_get<int>(j, "fine_iters_per_step", c.fine_iters_per_step);
    c.k_neighbors = json_get<int>(j, "k_neighbors", c.k_neighbors);
    c.weights.lambda_l1 = json_get<double>(j, "lambda_l1", c.weights.lambda_l1);
    c.weights.lambda_dssim = json_get<double>(j, "lambda_dssim", c.weights.lambda_dssim);
    c.weights.lambda_neighbor = json_get<double>(j, "lambda_neighbor", c.weights.lambda_neighbor);
    c.weights.lambda_tv = json_get<double>(j, "lambda_tv", c.weights.lambda_tv);
    c.tau.adaptive = json_get<bool>(j, "tau_adaptive", c.tau.adaptive);
    c.tau.multiplier = json_get<double>(j, "tau_multiplier", c.tau.multiplier);
    c.tau.absolute = json_get<double>(j, "tau_absolute", c.tau.absolute);
    c.densify.enabled = json_get<bool>(j, "densify_enabled", c.densify.enabled);
    c.densify.interval = json_get<int>(j, "densify_interval", c.densify.interval);
    c.densify.grad_threshold =
        json_get<double>(j, "densify_grad_threshold", c.densify.grad_threshold);
    c.densify.size_threshold =
        json_get<double>(j, "densify_size_threshold", c.densify.size_threshold);
    c.densify.opacity_prune =
        json_get<double>(j, "densify_opacity_prune", c.densify.opacity_prune);
    c.seed = json_get<uint64_t>(j, "seed", c.seed);
    c.batch = json_get<int>(j, "batch", c.batch);
    c.num_threads = json_get<int>(j, "num_threads", c.num_threads);
    c.disable_gate = json_get<bool>(j, "disable_gate", c.disable_gate);
    if (c.learning_rate <= 0.0 || c.coarse_iters < 0 || c.fine_iters_per_step <= 0)
        throw ConfigError("learning_rate must be > 0 and iteration counts positive");
    return c;
}

std::string TrainConfig::to_json() const {
    nlohmann::json j{{"learning_rate", learning_rate},
                     {"coarse_iters", coarse_iters},
                     {"fine_iters_per_step", fine_iters_per_step},
                     {"k_neighbors", k_neighbors},
                     {"lambda_l1", weights.lambda_l1},
                     {"lambda_dssim", weights.lambda_dssim},
                     {"lambda_neighbor", weights.lambda_neighbor},
                     {"lambda_tv", weights.lambda_tv},
                     {"tau_adaptive", tau.adaptive},
                     {"tau_multiplier", tau.multiplier},
                     {"tau_absolute", tau.absolute},
                     {"densify_enabled", densify.enabled},
                     {"densify_interval", densify.interval},
                     {"densify_grad_threshold", densify.grad_threshold},
                     {"densify_size_threshold", densify.size_threshold},
                     {"densify_opacity_prune", densify.opacity_prune},
                     {"seed", seed},
                     {"batch", batch},
                     {"num_threads", num_threads},
                     {"disable_gate", disable_gate}};
    return j.dump(2);
}

}  // namespace csplat
