#pragma once

#include "hf/encode.hpp"
#include "hf/tensor.hpp"

namespace hf {

// The NeRF MLP evaluated with externally supplied per-layer weights; it owns
// no parameters of its own. Layers are bias-free matrix multiplies with ReLU
// between them, additive skips every skip_period layers where widths agree,
// and a softplus/sigmoid head for density/color.

struct NerfArchitecture {
    int num_layers = 6;
    int hidden_dim = 64;
    int input_dim = 0;  // encoder output width
    int output_dim = 4;
    int skip_period = 2;

    // layers are 1-based
    int layer_in(int i) const { return i == 1 ? input_dim : hidden_dim; }
    int layer_out(int i) const { return i == num_layers ? output_dim : hidden_dim; }
    bool skip_at(int i) const { return i >= 3 && i < num_layers && (i - 1) % skip_period == 0; }

    void validate() const {
        if (num_layers < 2) throw ConfigError("nerf: num_layers must be >= 2");
        if (hidden_dim < 1 || input_dim < 1) throw ConfigError("nerf: bad layer widths");
    }

    template <typename R>
    void check_weights(const std::vector<Tensor<R>>& w) const {
        if (static_cast<int>(w.size()) != num_layers)
            throw ShapeError("nerf: expected " + std::to_string(num_layers) +
                             " weight matrices, got " + std::to_string(w.size()));
        for (int i = 1; i <= num_layers; ++i) {
            const auto& t = w[static_cast<size_t>(i - 1)];
            if (t.rank() != 2 || t.dim(0) != layer_in(i) || t.dim(1) != layer_out(i))
                throw ShapeError("nerf: layer " + std::to_string(i) + " weight is " +
                                 shape_str(t.shape()) + ", expected [" +
                                 std::to_string(layer_in(i)) + "x" +
                                 std::to_string(layer_out(i)) + "]");
        }
    }
};

template <typename R>
using GeneratedWeights = std::vector<Tensor<R>>;

template <typename R>
struct NerfResult {
    Tensor<R> density;                   // [n], softplus of raw channel 0
    Tensor<R> rgb;                       // [n x 3], sigmoid of raw channels 1..3
    std::vector<Tensor<R>> activations;  // a_1 .. a_{L-1}, each [n x hidden]
};

// Forward pass from pre-encoded inputs.
template <typename R>
NerfResult<R> nerf_apply(const Tensor<R>& encoded, const GeneratedWeights<R>& weights,
                         const NerfArchitecture& arch) {
    arch.check_weights(weights);
    if (encoded.rank() != 2 || encoded.dim(1) != arch.input_dim)
        throw ShapeError("nerf: encoded input is " + shape_str(encoded.shape()) + ", expected [nx" +
                         std::to_string(arch.input_dim) + "]");
    NerfResult<R> res;
    Tensor<R> a = encoded;
    Tensor<R> out;
    for (int i = 1; i <= arch.num_layers; ++i) {
        Tensor<R> z = matmul(a, weights[static_cast<size_t>(i - 1)]);
        if (i < arch.num_layers) {
            a = relu(z);
            if (arch.skip_at(i)) a = add(a, res.activations[static_cast<size_t>(i - 3)]);
            res.activations.push_back(a);
        } else {
            out = z;
        }
    }
    const int n = encoded.dim(0);
    res.density = reshape(softplus(slice_cols(out, 0, 1)), {n});
    res.rgb = sigmoid(slice_cols(out, 1, 3));
    return res;
}

// Forward pass from world-space points through an encoder stack.
template <typename R>
NerfResult<R> nerf_forward(const Tensor<R>& points_world, const GeneratedWeights<R>& weights,
                           const EncoderStack<R>& enc, const NerfArchitecture& arch) {
    return nerf_apply(enc.encode(points_world), weights, arch);
}

}  // namespace hf
