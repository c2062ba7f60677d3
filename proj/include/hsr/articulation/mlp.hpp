#pragma once

#include "hsr/core/types.hpp"

#include <string>
#include <vector>

namespace hsr {

/// Plain fully connected network: linear layers with ReLU between hidden
/// layers and a linear output. Weight matrices are (out x in).
struct MlpDecoder {
    std::vector<MatX> weights;
    std::vector<VecX> biases;

    int n_layers() const { return static_cast<int>(weights.size()); }
    int input_dim() const { return n_layers() ? static_cast<int>(weights.front().cols()) : 0; }
    int output_dim() const { return n_layers() ? static_cast<int>(weights.back().rows()) : 0; }

    void validate() const; // layer shapes must chain; throws otherwise

    /// Hidden layers He-uniform from the given seed; final layer zeroed so
    /// the network starts as the constant-zero map.
    static MlpDecoder create(const std::vector<int>& dims, std::uint64_t seed);
};

/// Forward intermediates needed by the backward pass. Rows are samples.
struct MlpCache {
    MatX input;
    std::vector<MatX> pre_activations; // one per layer
};

/// Batched forward pass (rows = samples). Throws on input width mismatch.
MatX mlp_forward(const MlpDecoder& dec, const MatX& x, MlpCache* cache = nullptr);

struct MlpGrads {
    std::vector<MatX> d_weights;
    std::vector<VecX> d_biases;

    static MlpGrads zero_like(const MlpDecoder& dec);
    void add(const MlpGrads& other);
    void scale(double s);
};

/// Exact reverse-mode gradients for the linear+ReLU chain. Returns input
/// gradients; parameter gradients are accumulated into `grads` when given.
MatX mlp_backward(const MlpDecoder& dec, const MlpCache& cache, const MatX& upstream,
                  MlpGrads* grads = nullptr);

/// Non-rigid offsets (dx, ds, dq) decoded from a canonical feature.
struct NonrigidDeltas {
    Vec3 d_position;
    Vec3 d_log_scale;
    Vec3 d_rotation; // imaginary part of the right-multiplied offset quaternion
};

NonrigidDeltas nonrigid_decode(const MlpDecoder& dec, const VecX& feature);

/// Opacity logit + SH coefficients decoded from a canonical feature.
struct ColorDecode {
    double opacity_logit;
    VecX sh;
};

ColorDecode color_decode(const MlpDecoder& dec, const VecX& feature);

/// LBS weight logit offsets (one per joint) decoded from a canonical feature.
VecX lbs_offset_decode(const MlpDecoder& dec, const VecX& feature);

// Factory shapes used by the articulated pipeline.
MlpDecoder make_nonrigid_decoder(int feature_dim, std::uint64_t seed);      // f -> 9
MlpDecoder make_color_decoder(int feature_dim, int sh_dim, std::uint64_t seed); // f -> 1 + sh
MlpDecoder make_lbs_offset_decoder(int feature_dim, int n_joints, std::uint64_t seed);

} // namespace hsr
