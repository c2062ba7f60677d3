#include "hsr/articulation/mlp.hpp"

#include "hsr/error.hpp"

#include <cmath>

namespace hsr {

void MlpDecoder::validate() const {
    if (weights.empty()) throw PreconditionError("MlpDecoder: no layers");
    if (biases.size() != weights.size())
        throw PreconditionError("MlpDecoder: bias count does not match layer count");
    for (size_t l = 0; l < weights.size(); ++l) {
        if (biases[l].size() != weights[l].rows())
            throw PreconditionError("MlpDecoder: bias size mismatch");
        if (l > 0 && weights[l].cols() != weights[l - 1].rows())
            throw PreconditionError("MlpDecoder: layer shapes do not chain");
        if (!weights[l].allFinite() || !biases[l].allFinite())
            throw PreconditionError("MlpDecoder: non-finite parameters");
    }
}

MlpDecoder MlpDecoder::create(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw PreconditionError("MlpDecoder::create: need at least in/out dims");
    Rng rng(seed);
    MlpDecoder dec;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        MatX w = MatX::Zero(dims[l + 1], dims[l]);
        const bool last = (l + 2 == dims.size());
        if (!last) {
            const double limit = std::sqrt(6.0 / dims[l]);
            for (Index i = 0; i < w.rows(); ++i)
                for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
        }
        dec.weights.push_back(std::move(w));
        dec.biases.push_back(VecX::Zero(dims[l + 1]));
    }
    return dec;
}

MatX mlp_forward(const MlpDecoder& dec, const MatX& x, MlpCache* cache) {
    if (x.cols() != dec.input_dim())
        throw PreconditionError("mlp_forward: input width mismatch");
    if (cache) {
        cache->input = x;
        cache->pre_activations.clear();
    }
    MatX h = x;
    for (int l = 0; l < dec.n_layers(); ++l) {
        MatX z = (h * dec.weights[l].transpose()).rowwise() + dec.biases[l].transpose();
        if (cache) cache->pre_activations.push_back(z);
        h = (l + 1 < dec.n_layers()) ? z.cwiseMax(0.0) : z;
    }
    return h;
}

MlpGrads MlpGrads::zero_like(const MlpDecoder& dec) {
    MlpGrads g;
    for (int l = 0; l < dec.n_layers(); ++l) {
        g.d_weights.push_back(MatX::Zero(dec.weights[l].rows(), dec.weights[l].cols()));
        g.d_biases.push_back(VecX::Zero(dec.biases[l].size()));
    }
    return g;
}

void MlpGrads::add(const MlpGrads& other) {
    for (size_t l = 0; l < d_weights.size(); ++l) {
        d_weights[l] += other.d_weights[l];
        d_biases[l] += other.d_biases[l];
    }
}

void MlpGrads::scale(double s) {
    for (size_t l = 0; l < d_weights.size(); ++l) {
        d_weights[l] *= s;
        d_biases[l] *= s;
    }
}

MatX mlp_backward(const MlpDecoder& dec, const MlpCache& cache, const MatX& upstream,
                  MlpGrads* grads) {
    const int layers = dec.n_layers();
    if (static_cast<int>(cache.pre_activations.size()) != layers)
        throw PreconditionError("mlp_backward: cache does not match decoder");
    if (upstream.rows() != cache.input.rows() || upstream.cols() != dec.output_dim())
        throw PreconditionError("mlp_backward: upstream gradient shape mismatch");

    MatX delta = upstream; // dL/d(pre-activation of current layer)
    for (int l = layers - 1; l >= 0; --l) {
        if (l + 1 < layers) {
            // Upstream reached us through a ReLU; kill negative pre-acts.
            delta = delta.cwiseProduct(
                (cache.pre_activations[l].array() > 0.0).cast<double>().matrix());
        }
        const MatX& layer_in = (l == 0)
            ? cache.input
            : MatX(cache.pre_activations[l - 1].cwiseMax(0.0));
        if (grads) {
            grads->d_weights[l] += delta.transpose() * layer_in;
            grads->d_biases[l] += delta.colwise().sum().transpose();
        }
        delta = delta * dec.weights[l];
    }
    return delta; // dL/d input
}

NonrigidDeltas nonrigid_decode(const MlpDecoder& dec, const VecX& feature) {
    if (dec.output_dim() != 9)
        throw PreconditionError("nonrigid_decode: decoder output width must be 9");
    const MatX y = mlp_forward(dec, feature.transpose());
    NonrigidDeltas d;
    d.d_position = y.row(0).segment<3>(0);
    d.d_log_scale = y.row(0).segment<3>(3);
    d.d_rotation = y.row(0).segment<3>(6);
    return d;
}

ColorDecode color_decode(const MlpDecoder& dec, const VecX& feature) {
    if (dec.output_dim() < 2)
        throw PreconditionError("color_decode: decoder output width must be 1 + sh size");
    const MatX y = mlp_forward(dec, feature.transpose());
    ColorDecode c;
    c.opacity_logit = y(0, 0);
    c.sh = y.row(0).tail(y.cols() - 1);
    return c;
}

VecX lbs_offset_decode(const MlpDecoder& dec, const VecX& feature) {
    const MatX y = mlp_forward(dec, feature.transpose());
    return y.row(0).transpose();
}

MlpDecoder make_nonrigid_decoder(int feature_dim, std::uint64_t seed) {
    return MlpDecoder::create({feature_dim, 128, 128, 128, 9}, seed);
}

MlpDecoder make_color_decoder(int feature_dim, int sh_dim, std::uint64_t seed) {
    return MlpDecoder::create({feature_dim, 128, 1 + sh_dim}, seed);
}

MlpDecoder make_lbs_offset_decoder(int feature_dim, int n_joints, std::uint64_t seed) {
    return MlpDecoder::create({feature_dim, 128, 128, 128, n_joints}, seed);
}

} // namespace hsr
