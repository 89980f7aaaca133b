#include "csplat/deform.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace csplat {

void PositionalEncoding::encode(std::span<const double> x, std::span<double> out) const {
    const int stride = 2 * num_frequencies + 1;
    if (int(out.size()) != int(x.size()) * stride)
        throw std::invalid_argument("encoding output size mismatch");
    for (size_t i = 0; i < x.size(); ++i) {
        double* o = &out[i * stride];
        o[0] = x[i];
        double freq = std::numbers::pi;
        for (int l = 0; l < num_frequencies; ++l) {
            o[1 + 2 * l] = std::sin(freq * x[i]);
            o[2 + 2 * l] = std::cos(freq * x[i]);
            freq *= 2.0;
        }
    }
}

void PositionalEncoding::encode_backward(std::span<const double> x,
                                         std::span<const double> upstream,
                                         std::span<double> dx) const {
    const int stride = 2 * num_frequencies + 1;
    for (size_t i = 0; i < x.size(); ++i) {
        const double* u = &upstream[i * stride];
        double g = u[0];
        double freq = std::numbers::pi;
        for (int l = 0; l < num_frequencies; ++l) {
            g += u[1 + 2 * l] * freq * std::cos(freq * x[i]);
            g -= u[2 + 2 * l] * freq * std::sin(freq * x[i]);
            freq *= 2.0;
        }
        dx[i] = g;
    }
}

DeformationField::DeformationField()
    : grid(DeformDefaults::kGridRes, DeformDefaults::kGridDim) {
    int in = DeformDefaults::kGridDim + space_encoding.output_dim(3) + time_encoding.output_dim(1);
    hidden_layer = DiffLayer(in, DeformDefaults::kHiddenWidth);
    output_layer = DiffLayer(DeformDefaults::kHiddenWidth, DeformDefaults::kOutputDim);
}

void DeformationField::init_weights(uint64_t seed) {
    std::mt19937_64 rng(seed);
    double bound = 1.0 / std::sqrt(double(hidden_layer.in_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : hidden_layer.weights) w = dist(rng);
    for (double& b : hidden_layer.biases) b = 0.0;
    // Output layer stays zero: F == 0 at init, so G_t == G for all t.
    for (double& w : output_layer.weights) w = 0.0;
    for (double& b : output_layer.biases) b = 0.0;
}

Vec3 DeformationField::to_grid_coords(const Vec3& p) const {
    Vec3 ext = bounds_hi - bounds_lo;
    double r = DeformDefaults::kGridRes - 1;
    return {(p.x - bounds_lo.x) / ext.x * r, (p.y - bounds_lo.y) / ext.y * r,
            (p.z - bounds_lo.z) / ext.z * r};
}

DeformedCloud deform_cloud(const DeformationField& field, const GaussianCloud& cloud, double t) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("deform time outside [0,1]");
    cloud.validate();
    const size_t n = cloud.size();
    const int in_dim = field.input_dim();
    const int hid = field.hidden_layer.out_dim;

    DeformedCloud out;
    out.cloud = cloud;
    out.time = t;
    out.cache.input.resize(n * in_dim);
    out.cache.hidden.resize(n * hid);
    out.cache.grid_points.resize(n);

    const int sdim = field.space_encoding.output_dim(3);
    const int tdim = field.time_encoding.output_dim(1);
    std::vector<double> time_enc(tdim);
    field.time_encoding.encode(std::span<const double>(&t, 1), time_enc);

    std::vector<double> pre(hid), head_out(DeformDefaults::kOutputDim);
    Vec3 ext = field.bounds_hi - field.bounds_lo;
    for (size_t i = 0; i < n; ++i) {
        double* input = &out.cache.input[i * in_dim];
        Vec3 gp = field.to_grid_coords(cloud.positions[i]);
        out.cache.grid_points[i] = gp;
        field.grid.sample(gp, std::span<double>(input, field.grid.dim));
        double norm_pos[3] = {(cloud.positions[i].x - field.bounds_lo.x) / ext.x,
                              (cloud.positions[i].y - field.bounds_lo.y) / ext.y,
                              (cloud.positions[i].z - field.bounds_lo.z) / ext.z};
        field.space_encoding.encode(norm_pos, std::span<double>(input + field.grid.dim, sdim));
        std::copy(time_enc.begin(), time_enc.end(), input + field.grid.dim + sdim);

        double* h = &out.cache.hidden[i * hid];
        field.hidden_layer.forward(std::span<const double>(input, in_dim), pre);
        tanh_forward(pre, std::span<double>(h, hid));
        field.output_layer.forward(std::span<const double>(h, hid), head_out);

        out.cloud.positions[i] += Vec3{head_out[0], head_out[1], head_out[2]};
        out.cloud.rotations[i] =
            out.cloud.rotations[i] + Quaternion{head_out[3], head_out[4], head_out[5], head_out[6]};
        out.cloud.opacity_logits[i] += head_out[7];
    }
    return out;
}

void deform_backward(const DeformationField& field, const GaussianCloud& canonical,
                     const DeformedCloud& deformed, const RenderGradients& d_deformed,
                     RenderGradients& d_canonical, FieldGradients& d_field) {
    const size_t n = canonical.size();
    if (d_deformed.d_position.size() != n || d_canonical.d_position.size() != n)
        throw std::invalid_argument("gradient size mismatch in deform_backward");
    const int in_dim = field.input_dim();
    const int hid = field.hidden_layer.out_dim;
    const int sdim = field.space_encoding.output_dim(3);

    std::vector<double> upstream(DeformDefaults::kOutputDim), dh(hid), dpre(hid), dinput(in_dim);
    Vec3 ext = field.bounds_hi - field.bounds_lo;
    double grid_scale = DeformDefaults::kGridRes - 1;
    for (size_t i = 0; i < n; ++i) {
        // Scale/color bypass the field entirely; rotation and opacity offsets
        // are purely additive.
        d_canonical.d_log_scale[i] += d_deformed.d_log_scale[i];
        d_canonical.d_color[i] += d_deformed.d_color[i];
        d_canonical.d_rotation[i] = d_canonical.d_rotation[i] + d_deformed.d_rotation[i];
        d_canonical.d_opacity_logit[i] += d_deformed.d_opacity_logit[i];
        d_canonical.d_position[i] += d_deformed.d_position[i];

        upstream[0] = d_deformed.d_position[i].x;
        upstream[1] = d_deformed.d_position[i].y;
        upstream[2] = d_deformed.d_position[i].z;
        upstream[3] = d_deformed.d_rotation[i].w;
        upstream[4] = d_deformed.d_rotation[i].x;
        upstream[5] = d_deformed.d_rotation[i].y;
        upstream[6] = d_deformed.d_rotation[i].z;
        upstream[7] = d_deformed.d_opacity_logit[i];

        const double* input = &deformed.cache.input[i * in_dim];
        const double* h = &deformed.cache.hidden[i * hid];
        field.output_layer.backward(std::span<const double>(h, hid), upstream,
                                    d_field.d_output.d_weights, d_field.d_output.d_biases, dh);
        tanh_backward(std::span<const double>(h, hid), dh, dpre);
        field.hidden_layer.backward(std::span<const double>(input, in_dim), dpre,
                                    d_field.d_hidden.d_weights, d_field.d_hidden.d_biases,
                                    dinput);

        // Grid feature slice: gradient to the grid tensor and to the sample point.
        Vec3 d_gp;
        field.grid.sample_backward(deformed.cache.grid_points[i],
                                   std::span<const double>(dinput.data(), field.grid.dim),
                                   d_field.d_grid, d_gp);
        Vec3 d_pos{d_gp.x * grid_scale / ext.x, d_gp.y * grid_scale / ext.y,
                   d_gp.z * grid_scale / ext.z};

        // Encoded-position slice, chained through the [0,1] normalization.
        double norm_pos[3] = {(canonical.positions[i].x - field.bounds_lo.x) / ext.x,
                              (canonical.positions[i].y - field.bounds_lo.y) / ext.y,
                              (canonical.positions[i].z - field.bounds_lo.z) / ext.z};
        double d_norm[3];
        field.space_encoding.encode_backward(
            norm_pos, std::span<const double>(dinput.data() + field.grid.dim, sdim), d_norm);
        d_pos += Vec3{d_norm[0] / ext.x, d_norm[1] / ext.y, d_norm[2] / ext.z};
        d_canonical.d_position[i] += d_pos;
    }
}

namespace {

constexpr uint32_t kCheckpointMagic = 0x43535054;  // "CSPT"
constexpr uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
    write_pod(out, uint64_t(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * 8));
}
void read_doubles(std::ifstream& in, std::vector<double>& v) {
    uint64_t count = 0;
    read_pod(in, count);
    v.resize(count);
    in.read(reinterpret_cast<char*>(v.data()), std::streamsize(count * 8));
}

}  // namespace

void save_checkpoint(const std::string& path, const GaussianCloud& cloud,
                     const DeformationField& field, int num_frames) {
    cloud.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_pod(out, kCheckpointMagic);
    write_pod(out, kCheckpointVersion);
    write_pod(out, uint32_t(num_frames));
    write_pod(out, uint64_t(cloud.size()));
    for (size_t i = 0; i < cloud.size(); ++i) {
        double row[14] = {cloud.positions[i].x,     cloud.positions[i].y, cloud.positions[i].z,
                          cloud.rotations[i].w,     cloud.rotations[i].x, cloud.rotations[i].y,
                          cloud.rotations[i].z,     cloud.log_scales[i].x, cloud.log_scales[i].y,
                          cloud.log_scales[i].z,    cloud.opacity_logits[i],
                          cloud.colors[i].x,        cloud.colors[i].y,    cloud.colors[i].z};
        out.write(reinterpret_cast<const char*>(row), sizeof(row));
    }
    write_pod(out, field.bounds_lo);
    write_pod(out, field.bounds_hi);
    write_pod(out, uint32_t(field.grid.res));
    write_pod(out, uint32_t(field.grid.dim));
    write_doubles(out, field.grid.data);
    write_doubles(out, field.hidden_layer.weights);
    write_doubles(out, field.hidden_layer.biases);
    write_doubles(out, field.output_layer.weights);
    write_doubles(out, field.output_layer.biases);
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, GaussianCloud& cloud, DeformationField& field,
                     int& num_frames) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    uint32_t magic = 0, version = 0, frames = 0;
    read_pod(in, magic);
    read_pod(in, version);
    if (magic != kCheckpointMagic || version != kCheckpointVersion)
        throw std::runtime_error("not a recognized checkpoint: " + path);
    read_pod(in, frames);
    num_frames = int(frames);
    uint64_t n = 0;
    read_pod(in, n);
    cloud.resize(n);
    for (size_t i = 0; i < n; ++i) {
        double row[14];
        in.read(reinterpret_cast<char*>(row), sizeof(row));
        cloud.positions[i] = {row[0], row[1], row[2]};
        cloud.rotations[i] = {row[3], row[4], row[5], row[6]};
        cloud.log_scales[i] = {row[7], row[8], row[9]};
        cloud.opacity_logits[i] = row[10];
        cloud.colors[i] = {row[11], row[12], row[13]};
    }
    read_pod(in, field.bounds_lo);
    read_pod(in, field.bounds_hi);
    uint32_t res = 0, dim = 0;
    read_pod(in, res);
    read_pod(in, dim);
    field.grid = FeatureGrid(int(res), int(dim));
    read_doubles(in, field.grid.data);
    read_doubles(in, field.hidden_layer.weights);
    read_doubles(in, field.hidden_layer.biases);
    read_doubles(in, field.output_layer.weights);
    read_doubles(in, field.output_layer.biases);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
}

}  // namespace csplat
