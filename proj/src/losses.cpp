#include "csplat/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csplat {

namespace {

void check_same_shape(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("image shape mismatch");
}

}  // namespace

NeighborGraph build_neighbor_graph(const std::vector<Vec3>& positions, int k) {
    const size_t n = positions.size();
    if (n < 2) throw std::invalid_argument("need at least 2 points for a neighbor graph");
    const int k_eff = std::min<int>(k, int(n) - 1);

    NeighborGraph graph;
    graph.k = k;
    graph.neighbors.resize(n);
    graph.edge_weights.resize(n);
    std::vector<std::pair<double, int>> cand;
    cand.reserve(n - 1);
    for (size_t i = 0; i < n; ++i) {
        cand.clear();
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            cand.emplace_back((positions[i] - positions[j]).squared_norm(), int(j));
        }
        std::partial_sort(cand.begin(), cand.begin() + k_eff, cand.end());
        graph.neighbors[i].resize(k_eff);
        graph.edge_weights[i].resize(k_eff);
        for (int e = 0; e < k_eff; ++e) {
            graph.neighbors[i][e] = cand[e].second;
            graph.edge_weights[i][e] = std::sqrt(cand[e].first);
        }
    }
    return graph;
}

double l1_loss(const Image& pred, const Image& gt) {
    check_same_shape(pred, gt);
    double sum = 0.0;
    for (size_t i = 0; i < pred.data.size(); ++i) sum += std::abs(pred.data[i] - gt.data[i]);
    return sum / double(pred.data.size());
}

double l1_loss_backward(const Image& pred, const Image& gt, Image& d_pred) {
    check_same_shape(pred, gt);
    d_pred = Image(pred.width, pred.height);
    double sum = 0.0;
    const double inv = 1.0 / double(pred.data.size());
    for (size_t i = 0; i < pred.data.size(); ++i) {
        double diff = pred.data[i] - gt.data[i];
        sum += std::abs(diff);
        d_pred.data[i] = (diff > 0.0 ? inv : (diff < 0.0 ? -inv : 0.0));
    }
    return sum * inv;
}

namespace {

constexpr int kSsimWindow = 11;
constexpr int kSsimRadius = kSsimWindow / 2;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::array<double, kSsimWindow> ssim_kernel() {
    std::array<double, kSsimWindow> k{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        double d = i - kSsimRadius;
        k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable 11x11 filter over a zero-padded single-channel field.
void filter2(const std::vector<double>& src, int w, int h, std::vector<double>& dst,
             std::vector<double>& tmp) {
    static const auto kern = ssim_kernel();
    tmp.assign(src.size(), 0.0);
    dst.assign(src.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                int xx = x + i - kSsimRadius;
                if (xx >= 0 && xx < w) s += kern[i] * src[size_t(y) * w + xx];
            }
            tmp[size_t(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = 0; i < kSsimWindow; ++i) {
                int yy = y + i - kSsimRadius;
                if (yy >= 0 && yy < h) s += kern[i] * tmp[size_t(yy) * w + x];
            }
            dst[size_t(y) * w + x] = s;
        }
}

struct SsimPlane {
    std::vector<double> mu_x, mu_y, sxx, syy, sxy;  // filtered stats
};

// Mean SSIM over valid window centers; optionally accumulates d(mean ssim)/d(pred).
double ssim_mean(const Image& pred, const Image& gt, Image* d_pred) {
    check_same_shape(pred, gt);
    const int w = pred.width, h = pred.height;
    if (w < kSsimWindow || h < kSsimWindow)
        throw std::invalid_argument("image smaller than the SSIM window");
    const int vx0 = kSsimRadius, vx1 = w - kSsimRadius;  // valid centers, end-exclusive
    const int vy0 = kSsimRadius, vy1 = h - kSsimRadius;
    const double n_valid = double(vx1 - vx0) * (vy1 - vy0) * 3;

    std::vector<double> x(size_t(w) * h), y(size_t(w) * h), buf(size_t(w) * h), tmp;
    SsimPlane pl;
    std::vector<double> am(size_t(w) * h), bv(size_t(w) * h), cv(size_t(w) * h), conv;
    double total = 0.0;

    for (int ch = 0; ch < 3; ++ch) {
        for (int py = 0; py < h; ++py)
            for (int px = 0; px < w; ++px) {
                x[size_t(py) * w + px] = pred.at(px, py, ch);
                y[size_t(py) * w + px] = gt.at(px, py, ch);
            }
        filter2(x, w, h, pl.mu_x, tmp);
        filter2(y, w, h, pl.mu_y, tmp);
        for (size_t i = 0; i < x.size(); ++i) buf[i] = x[i] * x[i];
        filter2(buf, w, h, pl.sxx, tmp);
        for (size_t i = 0; i < x.size(); ++i) buf[i] = y[i] * y[i];
        filter2(buf, w, h, pl.syy, tmp);
        for (size_t i = 0; i < x.size(); ++i) buf[i] = x[i] * y[i];
        filter2(buf, w, h, pl.sxy, tmp);

        std::fill(am.begin(), am.end(), 0.0);
        std::fill(bv.begin(), bv.end(), 0.0);
        std::fill(cv.begin(), cv.end(), 0.0);
        for (int py = vy0; py < vy1; ++py)
            for (int px = vx0; px < vx1; ++px) {
                size_t i = size_t(py) * w + px;
                double mx = pl.mu_x[i], my = pl.mu_y[i];
                double varx = pl.sxx[i] - mx * mx;
                double vary = pl.syy[i] - my * my;
                double covxy = pl.sxy[i] - mx * my;
                double a1 = 2 * mx * my + kSsimC1, a2 = 2 * covxy + kSsimC2;
                double b1 = mx * mx + my * my + kSsimC1, b2 = varx + vary + kSsimC2;
                total += (a1 * a2) / (b1 * b2);
                if (d_pred) {
                    double inv_b = 1.0 / (b1 * b2);
                    // partials of ssim wrt (mu_x, var_x, cov_xy)
                    double d_mu = (2 * my * a2 - 2 * mx * a1 * a2 / b1) * inv_b;
                    double d_var = -a1 * a2 * inv_b / b2;
                    double d_cov = 2 * a1 * inv_b;
                    am[i] = d_mu;
                    bv[i] = d_var;
                    cv[i] = d_cov;
                }
            }
        if (d_pred) {
            // dL/dx = conv(w, am) + 2x conv(w, bv) - 2 conv(w, mu_x bv)
            //       + y conv(w, cv) - conv(w, mu_y cv)
            std::vector<double> g(size_t(w) * h, 0.0);
            filter2(am, w, h, conv, tmp);
            for (size_t i = 0; i < g.size(); ++i) g[i] += conv[i];
            filter2(bv, w, h, conv, tmp);
            for (size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * x[i] * conv[i];
            for (size_t i = 0; i < buf.size(); ++i) buf[i] = pl.mu_x[i] * bv[i];
            filter2(buf, w, h, conv, tmp);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= 2.0 * conv[i];
            filter2(cv, w, h, conv, tmp);
            for (size_t i = 0; i < g.size(); ++i) g[i] += y[i] * conv[i];
            for (size_t i = 0; i < buf.size(); ++i) buf[i] = pl.mu_y[i] * cv[i];
            filter2(buf, w, h, conv, tmp);
            for (size_t i = 0; i < g.size(); ++i) g[i] -= conv[i];
            for (int py = 0; py < h; ++py)
                for (int px = 0; px < w; ++px)
                    d_pred->at(px, py, ch) += g[size_t(py) * w + px] / n_valid;
        }
    }
    return total / n_valid;
}

}  // namespace

double dssim_loss(const Image& pred, const Image& gt) {
    return 0.5 * (1.0 - ssim_mean(pred, gt, nullptr));
}

double dssim_loss_backward(const Image& pred, const Image& gt, Image& d_pred) {
    Image d_ssim(pred.width, pred.height);
    double s = ssim_mean(pred, gt, &d_ssim);
    d_pred = Image(pred.width, pred.height);
    for (size_t i = 0; i < d_pred.data.size(); ++i) d_pred.data[i] = -0.5 * d_ssim.data[i];
    return 0.5 * (1.0 - s);
}

double tv_loss(int rx, int ry, int rz, int dim, std::span<const double> data) {
    auto idx = [&](int x, int y, int z) { return ((size_t(x) * ry + y) * rz + z) * dim; };
    double sum = 0.0;
    size_t pairs = 0;
    const int res[3] = {rx, ry, rz};
    for (int axis = 0; axis < 3; ++axis) {
        if (res[axis] < 2) continue;
        for (int x = 0; x < rx; ++x)
            for (int y = 0; y < ry; ++y)
                for (int z = 0; z < rz; ++z) {
                    int nx = x + (axis == 0), ny = y + (axis == 1), nz = z + (axis == 2);
                    if (nx >= rx || ny >= ry || nz >= rz) continue;
                    const double* a = &data[idx(x, y, z)];
                    const double* b = &data[idx(nx, ny, nz)];
                    for (int c = 0; c < dim; ++c) {
                        double d = a[c] - b[c];
                        sum += d * d;
                    }
                    ++pairs;
                }
    }
    return pairs == 0 ? 0.0 : sum / double(pairs);
}

double tv_loss(const FeatureGrid& grid) {
    return tv_loss(grid.res, grid.res, grid.res, grid.dim, grid.data);
}

double tv_loss_backward(const FeatureGrid& grid, std::span<double> d_grid, double scale) {
    const int r = grid.res, dim = grid.dim;
    if (d_grid.size() != grid.data.size())
        throw std::invalid_argument("tv gradient size mismatch");
    const size_t pairs = 3 * size_t(r - 1) * r * r;
    double sum = 0.0;
    const double g_scale = 2.0 * scale / double(pairs);
    for (int axis = 0; axis < 3; ++axis)
        for (int x = 0; x < r; ++x)
            for (int y = 0; y < r; ++y)
                for (int z = 0; z < r; ++z) {
                    int nx = x + (axis == 0), ny = y + (axis == 1), nz = z + (axis == 2);
                    if (nx >= r || ny >= r || nz >= r) continue;
                    size_t ia = grid.cell_offset(x, y, z);
                    size_t ib = grid.cell_offset(nx, ny, nz);
                    for (int c = 0; c < dim; ++c) {
                        double d = grid.data[ia + c] - grid.data[ib + c];
                        sum += d * d;
                        d_grid[ia + c] += g_scale * d;
                        d_grid[ib + c] -= g_scale * d;
                    }
                }
    return sum / double(pairs);
}

namespace {

struct NeighborTerms {
    std::vector<Vec3> delta;        // D_i = L_i^t - L_i^{t-1}
    std::vector<double> edge_sum;   // a_i = sum_j w_ij m_i m_j
    std::vector<char> gate;
    double value = 0.0;
    double active_fraction = 0.0;
};

NeighborTerms neighbor_terms(const NeighborGraph& graph, const std::vector<Vec3>& u_prev,
                             const std::vector<Vec3>& u_curr, double tau,
                             bool force_gates_open) {
    const size_t n = graph.size();
    if (u_prev.size() != n || u_curr.size() != n)
        throw std::invalid_argument("point count does not match neighbor graph");
    NeighborTerms t;
    t.delta.resize(n);
    t.edge_sum.assign(n, 0.0);
    t.gate.resize(n);
    size_t open = 0;
    for (size_t i = 0; i < n; ++i) {
        bool m = force_gates_open || (u_curr[i] - u_prev[i]).norm() > tau;
        t.gate[i] = m;
        open += m;
        Vec3 mean_curr, mean_prev;
        for (int j : graph.neighbors[i]) {
            mean_curr += u_curr[j];
            mean_prev += u_prev[j];
        }
        double inv_k = 1.0 / double(graph.neighbors[i].size());
        t.delta[i] = (u_curr[i] - mean_curr * inv_k) - (u_prev[i] - mean_prev * inv_k);
    }
    t.active_fraction = n ? double(open) / double(n) : 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (!t.gate[i]) continue;
        double a = 0.0;
        for (size_t e = 0; e < graph.neighbors[i].size(); ++e)
            if (t.gate[graph.neighbors[i][e]]) a += graph.edge_weights[i][e];
        t.edge_sum[i] = a;
        t.value += a * t.delta[i].squared_norm();
    }
    return t;
}

}  // namespace

NeighborLossResult neighbor_loss(const NeighborGraph& graph, const std::vector<Vec3>& u_prev,
                                 const std::vector<Vec3>& u_curr, double tau,
                                 bool force_gates_open) {
    NeighborTerms t = neighbor_terms(graph, u_prev, u_curr, tau, force_gates_open);
    return {t.value, t.active_fraction};
}

NeighborLossResult neighbor_loss_backward(const NeighborGraph& graph,
                                          const std::vector<Vec3>& u_prev,
                                          const std::vector<Vec3>& u_curr, double tau,
                                          std::vector<Vec3>& d_curr, double scale,
                                          bool force_gates_open) {
    NeighborTerms t = neighbor_terms(graph, u_prev, u_curr, tau, force_gates_open);
    const size_t n = graph.size();
    if (d_curr.size() != n) throw std::invalid_argument("d_curr size mismatch");
    // Gates are constants within a step; only u_curr is differentiated.
    for (size_t i = 0; i < n; ++i) {
        if (t.edge_sum[i] == 0.0) continue;
        Vec3 g = t.delta[i] * (2.0 * scale * t.edge_sum[i]);
        d_curr[i] += g;
        double inv_k = 1.0 / double(graph.neighbors[i].size());
        for (int j : graph.neighbors[i]) d_curr[j] -= g * inv_k;
    }
    return {t.value, t.active_fraction};
}

FineLossBreakdown fine_loss(const Image& render, const Image& gt, const FeatureGrid& grid,
                            const NeighborGraph& graph, const std::vector<Vec3>& u_prev,
                            const std::vector<Vec3>& u_curr, const LossWeights& weights,
                            double tau, bool force_gates_open) {
    FineLossBreakdown b;
    b.l1 = l1_loss(render, gt);
    b.dssim = dssim_loss(render, gt);
    b.tv = tv_loss(grid);
    NeighborLossResult nb = neighbor_loss(graph, u_prev, u_curr, tau, force_gates_open);
    b.neighbor = nb.value;
    b.active_gate_fraction = nb.active_gate_fraction;
    b.total = weights.lambda_l1 * b.l1 + weights.lambda_dssim * b.dssim +
              weights.lambda_neighbor * b.neighbor + weights.lambda_tv * b.tv;
    return b;
}

}  // namespace csplat
