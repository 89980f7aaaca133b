#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "csplat/camera.hpp"

namespace csplat {

// Latent/patchify shape algebra: a 4f x 8h x 8w x 3 video compresses to an
// f x h x w x 16 latent; patch size n folds n x n latent patches into tokens.
struct LatentSpec {
    int f = 2;          // latent frames (excluding the reference frame)
    int h = 4, w = 4;   // latent spatial dims
    int channels = 16;
    int views = 5;
    int n = 2;          // patch size
    int token_channels = 32;  // C

    int tokens_per_frame() const { return (h / n) * (w / n); }
    void validate() const;

    static LatentSpec from_json_file(const std::string& path);
};

// Dense (frames, height, width, channels) tensor.
struct Tensor4 {
    std::array<int, 4> dims{};
    std::vector<double> data;

    Tensor4() = default;
    Tensor4(int a, int b, int c, int d)
        : dims{a, b, c, d}, data(size_t(a) * b * c * d, 0.0) {}
    double& at(int a, int b, int c, int d) {
        return data[((size_t(a) * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }
    double at(int a, int b, int c, int d) const {
        return data[((size_t(a) * dims[1] + b) * dims[2] + c) * dims[3] + d];
    }
};

// Token tensor indexed (view, frame, token, channel).
struct TokenGrid {
    int views = 0, frames = 0, tokens = 0, channels = 0;
    std::vector<double> data;

    TokenGrid() = default;
    TokenGrid(int v, int f, int t, int c)
        : views(v), frames(f), tokens(t), channels(c), data(size_t(v) * f * t * c, 0.0) {}
    double& at(int v, int f, int t, int c) {
        return data[((size_t(v) * frames + f) * tokens + t) * channels + c];
    }
    double at(int v, int f, int t, int c) const {
        return data[((size_t(v) * frames + f) * tokens + t) * channels + c];
    }
    size_t flat_index(int v, int f, int t, int c) const {
        return ((size_t(v) * frames + f) * tokens + t) * channels + c;
    }
};

// Per-view camera token block, same shape as one frame's tokens.
struct CameraToken {
    int tokens = 0, channels = 0;
    std::vector<double> data;  // (token, channel)
};

// z0 = Concat([z_r, z_i], [z_p_ref, z_p]): frame axis prepends the reference,
// channel axis pairs content with pose. Output (f+1) x h x w x 32.
Tensor4 concat_condition_latents(const Tensor4& z_r, const Tensor4& z_i,
                                 const Tensor4& z_p_ref, const Tensor4& z_p,
                                 const LatentSpec& spec);

// Per-pixel camera ray map, channels (moment o x d, unit direction d).
struct PluckerMap {
    int width = 0, height = 0;
    std::vector<double> data;  // (y, x, 6)

    double& at(int x, int y, int c) { return data[(size_t(y) * width + x) * 6 + c]; }
    double at(int x, int y, int c) const { return data[(size_t(y) * width + x) * 6 + c]; }
};

PluckerMap plucker_embedding(const CameraView& camera);

// Strided linear patch encoder (patch 8n x 8n, 6 -> C channels).
struct PatchEncoder {
    int patch = 0;
    int out_channels = 0;
    std::vector<double> weights;  // out_channels x (6 * patch * patch)
    std::vector<double> bias;

    PatchEncoder() = default;
    PatchEncoder(int patch_, int out_channels_)
        : patch(patch_),
          out_channels(out_channels_),
          weights(size_t(out_channels_) * 6 * patch_ * patch_, 0.0),
          bias(out_channels_, 0.0) {}
    void init_weights(uint64_t seed);
};

CameraToken encode_camera_tokens(const PluckerMap& map, const LatentSpec& spec,
                                 const PatchEncoder& encoder);

// Pure relayouts of the token grid; inverses restore the grid bit-exactly.
// Temporal: V sequences of length (f+1) * tokens_per_frame.
// View: (f+1) sequences of length V * tokens_per_frame.
struct TokenSequences {
    int num_sequences = 0, length = 0, channels = 0;
    std::vector<double> data;

    double& at(int s, int p, int c) {
        return data[(size_t(s) * length + p) * channels + c];
    }
    double at(int s, int p, int c) const {
        return data[(size_t(s) * length + p) * channels + c];
    }
};

TokenSequences rearrange_temporal(const TokenGrid& x);
TokenSequences rearrange_view(const TokenGrid& x);
TokenGrid rearrange_temporal_inverse(const TokenSequences& seqs, const TokenGrid& like);
TokenGrid rearrange_view_inverse(const TokenSequences& seqs, const TokenGrid& like);

struct AttentionWeights {
    int dim = 0;
    std::vector<double> wq, wk, wv, wo;  // dim x dim, row-major

    explicit AttentionWeights(int d = 0)
        : dim(d), wq(size_t(d) * d, 0.0), wk(size_t(d) * d, 0.0), wv(size_t(d) * d, 0.0),
          wo(size_t(d) * d, 0.0) {}
    void init_weights(uint64_t seed);
};

struct DualAttentionWeights {
    AttentionWeights temporal;
    AttentionWeights view;

    explicit DualAttentionWeights(int dim = 0) : temporal(dim), view(dim) {}
};

// Single-head softmax attention over one sequence (rows of scores sum to 1).
// Returns the attended output; optionally exposes the attention matrix.
std::vector<double> softmax_attention(const std::vector<double>& seq, int length, int dim,
                                      const AttentionWeights& w,
                                      std::vector<double>* attention_matrix = nullptr);

// Camera tokens are added to every frame of the matching view, then the two
// rearranged attention passes run in parallel; outputs are averaged and
// residual-added to the input.
TokenGrid dual_attention_block(const TokenGrid& x, const std::vector<CameraToken>& camera,
                               const DualAttentionWeights& weights);

// Plain-text ledger of every shape from latents to rearrangements.
std::string shape_ledger(const LatentSpec& spec);

}  // namespace csplat
