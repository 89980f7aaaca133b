#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <string>

#include "csplat/deform.hpp"
#include "csplat/gaussians.hpp"
#include "csplat/losses.hpp"
#include "csplat/scenegen.hpp"

namespace csplat {

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TauPolicy {
    bool adaptive = true;       // tau = multiplier * median inter-frame displacement
    double multiplier = 2.0;
    double absolute = 0.05;     // used when adaptive is off or no motion is measurable
};

struct DensifyConfig {
    bool enabled = false;
    int interval = 500;                 // iterations between passes
    double grad_threshold = 2e-4;       // mean positional gradient norm to clone
    double size_threshold = 0.1;        // world-unit scale to split
    double opacity_prune = 0.005;
};

struct TrainConfig {
    double learning_rate = 1.6e-4;
    int coarse_iters = 3000;
    int fine_iters_per_step = 3000;
    int k_neighbors = kDefaultNeighbors;
    LossWeights weights;
    TauPolicy tau;
    DensifyConfig densify;
    uint64_t seed = 0;
    int batch = 1;              // (view, frame) samples per iteration
    int num_threads = 1;
    bool disable_gate = false;  // m_ij == 1 everywhere (ablation)

    static TrainConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

struct AdamMoments {
    std::vector<double> first;
    std::vector<double> second;
    int64_t step = 0;
};

struct FitState {
    GaussianCloud cloud;
    DeformationField field;
    std::map<std::string, AdamMoments> moments;
    int window_lo = 0, window_hi = 0;  // progressive frame window, inclusive
    int64_t coarse_iterations_done = 0;
    int64_t fine_iterations_done = 0;
    int num_frames = 0;
    std::mt19937_64 rng;
};

// Standard bias-corrected Adam. Throws NumericError naming the group on a
// non-finite gradient.
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               double lr, const std::string& group_name, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

FitState init_fit_state(const GaussianCloud& initial_cloud, const Vec3& bounds_lo,
                        const Vec3& bounds_hi, int num_frames, const TrainConfig& config);

// Cold start: N points uniform in the bounding box, isotropic scale set to
// half the mean nearest-neighbor distance.
GaussianCloud cold_start_cloud(int n, const Vec3& bounds_lo, const Vec3& bounds_hi,
                               uint64_t seed);

// L1-only static fit of the canonical cloud at frame floor(T/2); the
// deformation field is untouched.
void coarse_fit(FitState& state, const MultiViewSequence& sequence, const TrainConfig& config,
                std::ostream* log = nullptr);

// Expanding-window optimization of L_fine over cloud + field. The window
// starts at {floor(T/2)} and grows one frame per side per progressive step;
// the neighbor graph and tau are rebuilt at each step start.
void progressive_fine_fit(FitState& state, const MultiViewSequence& sequence,
                          const TrainConfig& config, std::ostream* log = nullptr,
                          const std::function<void(const FitState&)>& step_callback = {});

// Clone high-gradient, split oversized, prune near-transparent Gaussians.
// Returns true when the cloud changed (neighbor graph then needs a rebuild).
bool densify_and_prune(FitState& state, const std::vector<double>& position_grad_norms,
                       const DensifyConfig& config);

// Current tau for a window under the configured policy.
double compute_tau(const FitState& state, const TauPolicy& policy);

}  // namespace csplat
