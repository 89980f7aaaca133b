#include "csplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace csplat {

namespace {

struct Splat {
    ProjectedGaussian proj;
    Sym2 conic;               // inverse of cov2d
    int x0 = 0, x1 = -1;      // inclusive pixel rect covered by the 3-sigma box
    int y0 = 0, y1 = -1;
    size_t index = 0;         // cloud index
};

struct Contribution {
    const Splat* splat;
    double alpha;
    double transmittance;  // before this contributor
    double dx, dy;         // pixel center minus mean
};

std::vector<Splat> project_sorted(const GaussianCloud& cloud, const CameraView& camera,
                                  const RenderConfig& config) {
    std::vector<Splat> splats;
    splats.reserve(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        Splat s;
        s.index = i;
        s.proj = project(cloud.positions[i], cloud.rotations[i], cloud.log_scales[i],
                         cloud.opacity_logits[i], cloud.colors[i], camera);
        if (s.proj.culled) continue;
        s.conic = s.proj.cov2d.inverse();
        double radius = kBoundingSigmas * std::sqrt(s.proj.cov2d.eigenvalues()[0]);
        s.x0 = std::max(0, int(std::ceil(s.proj.mean_x - radius - 0.5)));
        s.x1 = std::min(config.width - 1, int(std::floor(s.proj.mean_x + radius - 0.5)));
        s.y0 = std::max(0, int(std::ceil(s.proj.mean_y - radius - 0.5)));
        s.y1 = std::min(config.height - 1, int(std::floor(s.proj.mean_y + radius - 0.5)));
        if (s.x0 > s.x1 || s.y0 > s.y1) continue;
        splats.push_back(s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
        if (a.proj.depth != b.proj.depth) return a.proj.depth < b.proj.depth;
        return a.index < b.index;
    });
    return splats;
}

// Contributor walk for one pixel, shared by forward and backward.
void gather_pixel(const std::vector<const Splat*>& list, int px, int py,
                  std::vector<Contribution>& out, double& final_t) {
    out.clear();
    double t = 1.0;
    const double cx = px + 0.5, cy = py + 0.5;
    for (const Splat* s : list) {
        if (px < s->x0 || px > s->x1 || py < s->y0 || py > s->y1) continue;
        double dx = cx - s->proj.mean_x;
        double dy = cy - s->proj.mean_y;
        double power = -0.5 * (s->conic.xx * dx * dx + 2.0 * s->conic.xy * dx * dy +
                               s->conic.yy * dy * dy);
        if (power < kExponentCutoff) continue;
        double alpha = s->proj.opacity * std::exp(power);
        out.push_back({s, alpha, t, dx, dy});
        t *= 1.0 - alpha;
        if (t < kTransmittanceStop) break;
    }
    final_t = t;
}

void shade_rows(const std::vector<const Splat*>& list, const RenderConfig& config,
                int y_begin, int y_end, int x_begin, int x_end, RenderTarget& target) {
    std::vector<Contribution> contribs;
    for (int py = y_begin; py < y_end; ++py)
        for (int px = x_begin; px < x_end; ++px) {
            double final_t;
            gather_pixel(list, px, py, contribs, final_t);
            Vec3 c;
            for (const Contribution& k : contribs) c += k.splat->proj.color * (k.alpha * k.transmittance);
            c += config.background * final_t;
            target.color.at(px, py, 0) = c.x;
            target.color.at(px, py, 1) = c.y;
            target.color.at(px, py, 2) = c.z;
            target.alpha[size_t(py) * config.width + px] = 1.0 - final_t;
        }
}

struct TileRange {
    int x0, y0, x1, y1;  // pixel bounds, end-exclusive
};

std::vector<TileRange> make_tiles(const RenderConfig& config) {
    std::vector<TileRange> tiles;
    for (int ty = 0; ty < config.height; ty += kTileSize)
        for (int tx = 0; tx < config.width; tx += kTileSize)
            tiles.push_back({tx, ty, std::min(tx + kTileSize, config.width),
                             std::min(ty + kTileSize, config.height)});
    return tiles;
}

std::vector<const Splat*> tile_bin(const std::vector<Splat>& splats, const TileRange& tile) {
    std::vector<const Splat*> list;
    for (const Splat& s : splats)
        if (s.x1 >= tile.x0 && s.x0 < tile.x1 && s.y1 >= tile.y0 && s.y0 < tile.y1)
            list.push_back(&s);
    return list;
}

template <typename Fn>
void parallel_for(size_t count, int num_threads, Fn&& fn) {
    if (num_threads <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < num_threads; ++t)
        pool.emplace_back([&, t] {
            for (size_t i = t; i < count; i += size_t(num_threads)) fn(i, t);
        });
    for (auto& th : pool) th.join();
}

void backward_pixel(const std::vector<const Splat*>& list, const RenderConfig& config,
                    const Image& d_image, int px, int py, std::vector<Contribution>& contribs,
                    RenderGradients& grads, std::vector<Sym2>& g_conic,
                    std::vector<double>& g_mean_x, std::vector<double>& g_mean_y) {
    double final_t;
    gather_pixel(list, px, py, contribs, final_t);
    if (contribs.empty()) return;
    const double d0 = d_image.at(px, py, 0), d1 = d_image.at(px, py, 1),
                 d2 = d_image.at(px, py, 2);
    Vec3 suffix;  // sum over later contributors of color * alpha * T
    for (size_t ki = contribs.size(); ki-- > 0;) {
        const Contribution& k = contribs[ki];
        const Splat& s = *k.splat;
        size_t gi = s.index;
        double one_minus = 1.0 - k.alpha;

        grads.d_color[gi] += Vec3{d0, d1, d2} * (k.alpha * k.transmittance);

        double d_alpha =
            d0 * (s.proj.color.x * k.transmittance - (suffix.x + config.background.x * final_t) / one_minus) +
            d1 * (s.proj.color.y * k.transmittance - (suffix.y + config.background.y * final_t) / one_minus) +
            d2 * (s.proj.color.z * k.transmittance - (suffix.z + config.background.z * final_t) / one_minus);

        double d_opacity = d_alpha * (k.alpha / s.proj.opacity);
        grads.d_opacity_logit[gi] += d_opacity * s.proj.opacity * (1.0 - s.proj.opacity);

        double d_power = d_alpha * k.alpha;
        g_mean_x[gi] += d_power * (s.conic.xx * k.dx + s.conic.xy * k.dy);
        g_mean_y[gi] += d_power * (s.conic.xy * k.dx + s.conic.yy * k.dy);
        g_conic[gi].xx += d_power * (-0.5 * k.dx * k.dx);
        g_conic[gi].xy += d_power * (-k.dx * k.dy);
        g_conic[gi].yy += d_power * (-0.5 * k.dy * k.dy);

        suffix += s.proj.color * (k.alpha * k.transmittance);
    }
}

// Pull per-splat image-space gradients back onto the 3D parameters.
void splat_backward(const GaussianCloud& cloud, const CameraView& camera, const Splat& s,
                    const Sym2& g_conic, double g_mean_x, double g_mean_y,
                    RenderGradients& grads) {
    size_t i = s.index;
    const Sym2& a = s.conic;
    // Full-matrix gradient of the conic (xy accumulated as the single shared
    // off-diagonal parameter).
    double m00 = g_conic.xx, m01 = 0.5 * g_conic.xy, m11 = g_conic.yy;
    // dL/dCov = -A M A.
    double am00 = a.xx * m00 + a.xy * m01, am01 = a.xx * m01 + a.xy * m11;
    double am10 = a.xy * m00 + a.yy * m01, am11 = a.xy * m01 + a.yy * m11;
    double gc00 = -(am00 * a.xx + am01 * a.xy);
    double gc01 = -(am00 * a.xy + am01 * a.yy);
    double gc11 = -(am10 * a.xy + am11 * a.yy);

    Vec3 t = camera.to_camera(cloud.positions[i]);
    const double fx = camera.fx(), fy = camera.fy();
    const double inv_z = 1.0 / t.z, inv_z2 = inv_z * inv_z, inv_z3 = inv_z2 * inv_z;
    const double j00 = fx * inv_z, j02 = -fx * t.x * inv_z2;
    const double j11 = fy * inv_z, j12 = -fy * t.y * inv_z2;

    Mat3 sigma = build_covariance(cloud.rotations[i], cloud.log_scales[i]);
    const Mat3& w = camera.rotation;
    Mat3 v = w * sigma * w.transposed();

    // dL/dV = J^T Gc J  (J rows: [j00 0 j02], [0 j11 j12]).
    Mat3 d_v = Mat3::zero();
    double jr0[3] = {j00, 0.0, j02};
    double jr1[3] = {0.0, j11, j12};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            d_v(r, c) = jr0[r] * (gc00 * jr0[c] + gc01 * jr1[c]) +
                        jr1[r] * (gc01 * jr0[c] + gc11 * jr1[c]);
    Mat3 d_sigma = w.transposed() * d_v * w;

    Quaternion d_rot;
    Vec3 d_log_scale;
    covariance_backward(cloud.rotations[i], cloud.log_scales[i], d_sigma, d_rot, d_log_scale);
    grads.d_rotation[i] = grads.d_rotation[i] + d_rot;
    grads.d_log_scale[i] += d_log_scale;

    // dL/dJ = 2 Gc J V.
    double jv0[3], jv1[3];
    for (int c = 0; c < 3; ++c) {
        jv0[c] = jr0[0] * v(0, c) + jr0[2] * v(2, c);
        jv1[c] = jr1[1] * v(1, c) + jr1[2] * v(2, c);
    }
    double dj00 = 2.0 * (gc00 * jv0[0] + gc01 * jv1[0]);
    double dj02 = 2.0 * (gc00 * jv0[2] + gc01 * jv1[2]);
    double dj11 = 2.0 * (gc01 * jv0[1] + gc11 * jv1[1]);
    double dj12 = 2.0 * (gc01 * jv0[2] + gc11 * jv1[2]);

    Vec3 g_t;
    g_t.x = g_mean_x * fx * inv_z + dj02 * (-fx * inv_z2);
    g_t.y = g_mean_y * fy * inv_z + dj12 * (-fy * inv_z2);
    g_t.z = g_mean_x * (-fx * t.x * inv_z2) + g_mean_y * (-fy * t.y * inv_z2) +
            dj00 * (-fx * inv_z2) + dj02 * (2.0 * fx * t.x * inv_z3) +
            dj11 * (-fy * inv_z2) + dj12 * (2.0 * fy * t.y * inv_z3);
    grads.d_position[i] += w.transposed() * g_t;
}

}  // namespace

void RenderGradients::accumulate(const RenderGradients& o) {
    for (size_t i = 0; i < d_position.size(); ++i) {
        d_position[i] += o.d_position[i];
        d_rotation[i] = d_rotation[i] + o.d_rotation[i];
        d_log_scale[i] += o.d_log_scale[i];
        d_opacity_logit[i] += o.d_opacity_logit[i];
        d_color[i] += o.d_color[i];
    }
}

RenderTarget render(const GaussianCloud& cloud, const CameraView& camera,
                    const RenderConfig& config) {
    cloud.validate();
    RenderTarget target;
    target.color = Image(config.width, config.height);
    target.alpha.assign(size_t(config.width) * config.height, 0.0);

    std::vector<Splat> splats = project_sorted(cloud, camera, config);
    if (!config.tiled) {
        std::vector<const Splat*> all;
        all.reserve(splats.size());
        for (const Splat& s : splats) all.push_back(&s);
        shade_rows(all, config, 0, config.height, 0, config.width, target);
        return target;
    }
    std::vector<TileRange> tiles = make_tiles(config);
    parallel_for(tiles.size(), config.num_threads, [&](size_t ti, int) {
        const TileRange& tile = tiles[ti];
        std::vector<const Splat*> list = tile_bin(splats, tile);
        shade_rows(list, config, tile.y0, tile.y1, tile.x0, tile.x1, target);
    });
    return target;
}

RenderGradients render_backward(const GaussianCloud& cloud, const CameraView& camera,
                                const RenderConfig& config, const Image& d_image) {
    cloud.validate();
    if (d_image.width != config.width || d_image.height != config.height)
        throw std::invalid_argument("d_image shape does not match render config");

    const size_t n = cloud.size();
    std::vector<Splat> splats = project_sorted(cloud, camera, config);
    std::vector<TileRange> tiles = make_tiles(config);

    int workers = std::max(1, config.num_threads);
    struct Scratch {
        RenderGradients grads;
        std::vector<Sym2> g_conic;
        std::vector<double> g_mean_x, g_mean_y;
    };
    std::vector<Scratch> per_thread(workers);
    for (Scratch& s : per_thread) {
        s.grads.resize(n);
        s.g_conic.assign(n, Sym2{});
        s.g_mean_x.assign(n, 0.0);
        s.g_mean_y.assign(n, 0.0);
    }

    parallel_for(tiles.size(), config.num_threads, [&](size_t ti, int worker) {
        const TileRange& tile = tiles[ti];
        std::vector<const Splat*> list = tile_bin(splats, tile);
        Scratch& sc = per_thread[worker];
        std::vector<Contribution> contribs;
        for (int py = tile.y0; py < tile.y1; ++py)
            for (int px = tile.x0; px < tile.x1; ++px)
                backward_pixel(list, config, d_image, px, py, contribs, sc.grads,
                               sc.g_conic, sc.g_mean_x, sc.g_mean_y);
    });

    // Merge pixel-space accumulators in fixed worker order, then chain to 3D.
    Scratch& total = per_thread[0];
    for (int t = 1; t < workers; ++t) {
        total.grads.accumulate(per_thread[t].grads);
        for (size_t i = 0; i < n; ++i) {
            total.g_conic[i] = total.g_conic[i] + per_thread[t].g_conic[i];
            total.g_mean_x[i] += per_thread[t].g_mean_x[i];
            total.g_mean_y[i] += per_thread[t].g_mean_y[i];
        }
    }
    for (const Splat& s : splats)
        splat_backward(cloud, camera, s, total.g_conic[s.index], total.g_mean_x[s.index],
                       total.g_mean_y[s.index], total.grads);
    return total.grads;
}

}  // namespace csplat
