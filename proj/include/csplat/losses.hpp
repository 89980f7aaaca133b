#pragma once

#include <span>
#include <vector>

#include "csplat/image.hpp"
#include "csplat/numerics.hpp"
#include "csplat/vecmath.hpp"

namespace csplat {

constexpr int kDefaultNeighbors = 20;

struct LossWeights {
    double lambda_l1 = 1.0;
    double lambda_dssim = 0.01;
    double lambda_neighbor = 1.0;
    double lambda_tv = 1.0;
};

// Directed exact kNN edges (i -> j for j in N(i)), ties broken by index.
// Edge weights w_ij are cached from the positions the graph was built on.
struct NeighborGraph {
    int k = 0;
    std::vector<std::vector<int>> neighbors;       // per node, k_eff entries
    std::vector<std::vector<double>> edge_weights; // parallel to neighbors
    size_t size() const { return neighbors.size(); }
};

NeighborGraph build_neighbor_graph(const std::vector<Vec3>& positions,
                                   int k = kDefaultNeighbors);

// Mean absolute difference over all pixels and channels.
double l1_loss(const Image& pred, const Image& gt);
double l1_loss_backward(const Image& pred, const Image& gt, Image& d_pred);

// (1 - SSIM)/2 with an 11x11 Gaussian window (sigma 1.5), standard stability
// constants for [0,1] images; averaged where the window fits fully.
double dssim_loss(const Image& pred, const Image& gt);
double dssim_loss_backward(const Image& pred, const Image& gt, Image& d_pred);

// Mean over adjacent-cell pairs (all axes of extent >= 2) of the squared
// feature-difference norm.
double tv_loss(int res_x, int res_y, int res_z, int dim, std::span<const double> data);
double tv_loss(const FeatureGrid& grid);
// Accumulates scale * d(tv)/d(grid) into d_grid; returns the loss value.
double tv_loss_backward(const FeatureGrid& grid, std::span<double> d_grid, double scale);

struct NeighborLossResult {
    double value = 0.0;
    double active_gate_fraction = 0.0;  // fraction of points with an open gate
};

// Gated group-center rigidity loss. Gates compare each point's inter-frame
// displacement against tau (ignored entirely when force_gates_open). Only
// u_curr is differentiated; u_prev is a constant.
NeighborLossResult neighbor_loss(const NeighborGraph& graph, const std::vector<Vec3>& u_prev,
                                 const std::vector<Vec3>& u_curr, double tau,
                                 bool force_gates_open = false);
NeighborLossResult neighbor_loss_backward(const NeighborGraph& graph,
                                          const std::vector<Vec3>& u_prev,
                                          const std::vector<Vec3>& u_curr, double tau,
                                          std::vector<Vec3>& d_curr, double scale,
                                          bool force_gates_open = false);

struct FineLossBreakdown {
    double total = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    double tv = 0.0;
    double neighbor = 0.0;
    double active_gate_fraction = 0.0;
};

// lambda1*L1 + lambda2*DSSIM + lambda3*L_neighbor + lambda4*L_TV over one
// rendered frame.
FineLossBreakdown fine_loss(const Image& render, const Image& gt, const FeatureGrid& grid,
                            const NeighborGraph& graph, const std::vector<Vec3>& u_prev,
                            const std::vector<Vec3>& u_curr, const LossWeights& weights,
                            double tau, bool force_gates_open = false);

}  // namespace csplat
