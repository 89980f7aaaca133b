#include "csplat/viewformer.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "csplat/json_util.hpp"

namespace csplat {

void LatentSpec::validate() const {
    if (f < 1 || h < 1 || w < 1 || views < 1 || n < 1 || token_channels < 1)
        throw std::invalid_argument("latent spec dimensions must be positive");
    if (h % n != 0 || w % n != 0)
        throw std::invalid_argument("latent h and w must be divisible by the patch size");
}

LatentSpec LatentSpec::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open latent spec: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    reject_unknown_fields(j, {"f", "h", "w", "channels", "views", "n", "token_channels"},
                          "latent spec");
    LatentSpec s;
    s.f = json_get<int>(j, "f", s.f);
    s.h = json_get<int>(j, "h", s.h);
    s.w = json_get<int>(j, "w", s.w);
    s.channels = json_get<int>(j, "channels", s.channels);
    s.views = json_get<int>(j, "views", s.views);
    s.n = json_get<int>(j, "n", s.n);
    s.token_channels = json_get<int>(j, "token_channels", s.token_channels);
    s.validate();
    return s;
}

Tensor4 concat_condition_latents(const Tensor4& z_r, const Tensor4& z_i,
                                 const Tensor4& z_p_ref, const Tensor4& z_p,
                                 const LatentSpec& spec) {
    spec.validate();
    auto check = [&](const Tensor4& t, int frames, const char* name) {
        if (t.dims[0] != frames || t.dims[1] != spec.h || t.dims[2] != spec.w ||
            t.dims[3] != spec.channels)
            throw std::invalid_argument(std::string("latent shape mismatch: ") + name);
    };
    check(z_r, 1, "z_r");
    check(z_i, spec.f, "z_i");
    check(z_p_ref, 1, "z_p_ref");
    check(z_p, spec.f, "z_p");

    Tensor4 out(spec.f + 1, spec.h, spec.w, 2 * spec.channels);
    for (int fr = 0; fr <= spec.f; ++fr) {
        const Tensor4& content = fr == 0 ? z_r : z_i;
        const Tensor4& pose = fr == 0 ? z_p_ref : z_p;
        int src = fr == 0 ? 0 : fr - 1;
        for (int y = 0; y < spec.h; ++y)
            for (int x = 0; x < spec.w; ++x)
                for (int c = 0; c < spec.channels; ++c) {
                    out.at(fr, y, x, c) = content.at(src, y, x, c);
                    out.at(fr, y, x, spec.channels + c) = pose.at(src, y, x, c);
                }
    }
    return out;
}

PluckerMap plucker_embedding(const CameraView& camera) {
    if (camera.fx() == 0.0 || camera.fy() == 0.0)
        throw std::invalid_argument("singular intrinsics");
    PluckerMap map;
    map.width = camera.width;
    map.height = camera.height;
    map.data.assign(size_t(camera.width) * camera.height * 6, 0.0);

    Mat3 rot_t = camera.rotation.transposed();  // camera-to-world
    Vec3 origin = camera.center();
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x) {
            // back-project the pixel center to a unit world ray
            Vec3 d_cam{(x + 0.5 - camera.cx()) / camera.fx(),
                       (y + 0.5 - camera.cy()) / camera.fy(), 1.0};
            Vec3 d = (rot_t * d_cam).normalized();
            Vec3 moment = origin.cross(d);
            map.at(x, y, 0) = moment.x;
            map.at(x, y, 1) = moment.y;
            map.at(x, y, 2) = moment.z;
            map.at(x, y, 3) = d.x;
            map.at(x, y, 4) = d.y;
            map.at(x, y, 5) = d.z;
        }
    return map;
}

void PatchEncoder::init_weights(uint64_t seed) {
    std::mt19937_64 rng(seed);
    double bound = 1.0 / std::sqrt(double(6 * patch * patch));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : weights) w = dist(rng);
    for (double& b : bias) b = 0.0;
}

CameraToken encode_camera_tokens(const PluckerMap& map, const LatentSpec& spec,
                                 const PatchEncoder& encoder) {
    spec.validate();
    const int patch = 8 * spec.n;
    if (encoder.patch != patch || encoder.out_channels != spec.token_channels)
        throw std::invalid_argument("encoder does not match the latent spec");
    if (map.width != 8 * spec.w || map.height != 8 * spec.h)
        throw std::invalid_argument("map dims inconsistent with the latent spec");

    const int ty = spec.h / spec.n, tx = spec.w / spec.n;
    CameraToken out;
    out.tokens = ty * tx;
    out.channels = spec.token_channels;
    out.data.assign(size_t(out.tokens) * out.channels, 0.0);

    std::vector<double> patch_buf(size_t(6) * patch * patch);
    for (int py = 0; py < ty; ++py)
        for (int px = 0; px < tx; ++px) {
            size_t k = 0;
            for (int yy = 0; yy < patch; ++yy)
                for (int xx = 0; xx < patch; ++xx)
                    for (int c = 0; c < 6; ++c)
                        patch_buf[k++] = map.at(px * patch + xx, py * patch + yy, c);
            for (int oc = 0; oc < out.channels; ++oc) {
                double s = encoder.bias[oc];
                const double* wrow = &encoder.weights[size_t(oc) * patch_buf.size()];
                for (size_t i = 0; i < patch_buf.size(); ++i) s += wrow[i] * patch_buf[i];
                out.data[size_t(py * tx + px) * out.channels + oc] = s;
            }
        }
    return out;
}

TokenSequences rearrange_temporal(const TokenGrid& x) {
    // (v, f, t, c) is already contiguous per view: a pure reshape.
    TokenSequences s;
    s.num_sequences = x.views;
    s.length = x.frames * x.tokens;
    s.channels = x.channels;
    s.data = x.data;
    return s;
}

TokenGrid rearrange_temporal_inverse(const TokenSequences& seqs, const TokenGrid& like) {
    if (seqs.num_sequences != like.views || seqs.length != like.frames * like.tokens ||
        seqs.channels != like.channels)
        throw std::invalid_argument("sequence shape does not match the grid");
    TokenGrid out = like;
    out.data = seqs.data;
    return out;
}

TokenSequences rearrange_view(const TokenGrid& x) {
    TokenSequences s;
    s.num_sequences = x.frames;
    s.length = x.views * x.tokens;
    s.channels = x.channels;
    s.data.resize(x.data.size());
    for (int v = 0; v < x.views; ++v)
        for (int f = 0; f < x.frames; ++f)
            for (int t = 0; t < x.tokens; ++t)
                for (int c = 0; c < x.channels; ++c)
                    s.data[(size_t(f) * s.length + size_t(v) * x.tokens + t) * x.channels + c] =
                        x.at(v, f, t, c);
    return s;
}

TokenGrid rearrange_view_inverse(const TokenSequences& seqs, const TokenGrid& like) {
    if (seqs.num_sequences != like.frames || seqs.length != like.views * like.tokens ||
        seqs.channels != like.channels)
        throw std::invalid_argument("sequence shape does not match the grid");
    TokenGrid out = like;
    for (int v = 0; v < like.views; ++v)
        for (int f = 0; f < like.frames; ++f)
            for (int t = 0; t < like.tokens; ++t)
                for (int c = 0; c < like.channels; ++c)
                    out.at(v, f, t, c) = seqs.at(f, v * like.tokens + t, c);
    return out;
}

void AttentionWeights::init_weights(uint64_t seed) {
    std::mt19937_64 rng(seed);
    double bound = 1.0 / std::sqrt(double(dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double* mat : {&wq[0], &wk[0], &wv[0], &wo[0]})
        for (size_t i = 0; i < size_t(dim) * dim; ++i) mat[i] = dist(rng);
}

namespace {

// y[p] = x[p] * W^T (W row-major dim x dim)
void project_seq(const std::vector<double>& x, int length, int dim,
                 const std::vector<double>& w, std::vector<double>& y) {
    y.assign(size_t(length) * dim, 0.0);
    for (int p = 0; p < length; ++p)
        for (int r = 0; r < dim; ++r) {
            double s = 0.0;
            const double* wrow = &w[size_t(r) * dim];
            const double* xp = &x[size_t(p) * dim];
            for (int c = 0; c < dim; ++c) s += wrow[c] * xp[c];
            y[size_t(p) * dim + r] = s;
        }
}

}  // namespace

std::vector<double> softmax_attention(const std::vector<double>& seq, int length, int dim,
                                      const AttentionWeights& w,
                                      std::vector<double>* attention_matrix) {
    if (int(seq.size()) != length * dim)
        throw std::invalid_argument("sequence size mismatch");
    std::vector<double> q, k, v;
    project_seq(seq, length, dim, w.wq, q);
    project_seq(seq, length, dim, w.wk, k);
    project_seq(seq, length, dim, w.wv, v);

    const double scale = 1.0 / std::sqrt(double(dim));
    std::vector<double> attended(size_t(length) * dim, 0.0);
    if (attention_matrix) attention_matrix->assign(size_t(length) * length, 0.0);
    std::vector<double> row(length);
    for (int i = 0; i < length; ++i) {
        double max_s = -1e300;
        for (int j = 0; j < length; ++j) {
            double s = 0.0;
            for (int c = 0; c < dim; ++c) s += q[size_t(i) * dim + c] * k[size_t(j) * dim + c];
            row[j] = s * scale;
            max_s = std::max(max_s, row[j]);
        }
        double denom = 0.0;
        for (int j = 0; j < length; ++j) {
            row[j] = std::exp(row[j] - max_s);
            denom += row[j];
        }
        for (int j = 0; j < length; ++j) {
            double a = row[j] / denom;
            if (attention_matrix) (*attention_matrix)[size_t(i) * length + j] = a;
            for (int c = 0; c < dim; ++c)
                attended[size_t(i) * dim + c] += a * v[size_t(j) * dim + c];
        }
    }
    std::vector<double> out;
    project_seq(attended, length, dim, w.wo, out);
    return out;
}

TokenGrid dual_attention_block(const TokenGrid& x, const std::vector<CameraToken>& camera,
                               const DualAttentionWeights& weights) {
    if (int(camera.size()) != x.views)
        throw std::invalid_argument("need one camera token block per view");
    for (const CameraToken& c : camera)
        if (c.tokens != x.tokens || c.channels != x.channels)
            throw std::invalid_argument("camera token shape mismatch");
    if (weights.temporal.dim != x.channels || weights.view.dim != x.channels)
        throw std::invalid_argument("attention weight dim mismatch");

    // camera prior: every frame of a view gets the same additive shift
    TokenGrid shifted = x;
    for (int v = 0; v < x.views; ++v)
        for (int f = 0; f < x.frames; ++f)
            for (int t = 0; t < x.tokens; ++t)
                for (int c = 0; c < x.channels; ++c)
                    shifted.at(v, f, t, c) += camera[v].data[size_t(t) * x.channels + c];

    TokenSequences temporal = rearrange_temporal(shifted);
    TokenSequences view = rearrange_view(shifted);

    TokenSequences t_out = temporal, v_out = view;
    for (int s = 0; s < temporal.num_sequences; ++s) {
        std::vector<double> seq(temporal.data.begin() + size_t(s) * temporal.length * x.channels,
                                temporal.data.begin() +
                                    size_t(s + 1) * temporal.length * x.channels);
        std::vector<double> out =
            softmax_attention(seq, temporal.length, x.channels, weights.temporal);
        std::copy(out.begin(), out.end(),
                  t_out.data.begin() + size_t(s) * temporal.length * x.channels);
    }
    for (int s = 0; s < view.num_sequences; ++s) {
        std::vector<double> seq(view.data.begin() + size_t(s) * view.length * x.channels,
                                view.data.begin() + size_t(s + 1) * view.length * x.channels);
        std::vector<double> out = softmax_attention(seq, view.length, x.channels, weights.view);
        std::copy(out.begin(), out.end(), v_out.data.begin() + size_t(s) * view.length * x.channels);
    }

    TokenGrid a = rearrange_temporal_inverse(t_out, x);
    TokenGrid b = rearrange_view_inverse(v_out, x);
    TokenGrid out = x;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = x.data[i] + 0.5 * (a.data[i] + b.data[i]);
    return out;
}

std::string shape_ledger(const LatentSpec& s) {
    s.validate();
    std::ostringstream out;
    const int tok = s.tokens_per_frame();
    out << "video:            " << 4 * s.f << " x " << 8 * s.h << " x " << 8 * s.w << " x 3\n"
        << "video latent z_i: " << s.f << " x " << s.h << " x " << s.w << " x " << s.channels
        << "\n"
        << "reference z_r:    1 x " << s.h << " x " << s.w << " x " << s.channels << "\n"
        << "conditioned z_0:  " << s.f + 1 << " x " << s.h << " x " << s.w << " x "
        << 2 * s.channels << "\n"
        << "tokens per frame: " << s.h / s.n << " * " << s.w / s.n << " = " << tok << "\n"
        << "token grid x_0:   " << s.views << " x " << s.f + 1 << " x " << tok << " x "
        << s.token_channels << "\n"
        << "plucker map:      6 x " << 8 * s.h << " x " << 8 * s.w << "\n"
        << "camera feature:   " << s.token_channels << " x " << s.h / s.n << " x " << s.w / s.n
        << "\n"
        << "camera tokens:    " << tok << " x " << s.token_channels << "\n"
        << "temporal layout:  " << s.views << " x " << (s.f + 1) * tok << " x "
        << s.token_channels << "\n"
        << "view layout:      " << s.f + 1 << " x " << s.views * tok << " x " << s.token_channels
        << "\n";
    return out.str();
}

}  // namespace csplat
