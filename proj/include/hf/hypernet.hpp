#pragma once

#include <string>

#include "hf/encode.hpp"
#include "hf/nerf.hpp"

namespace hf {

// The dynamic hypernetwork: a learned two-word embedding table feeds a small
// transformer whose pooled output is the conditioning token CT; per NeRF
// layer, a two-layer MLP maps [CT || AdaIN(mean activation)] to that layer's
// weight matrix. In static mode the activation input is replaced by zeros so
// parameter counts stay identical while the dynamic feedback is ablated.

enum class ConditioningMode { Dynamic, Static };

inline std::string mode_name(ConditioningMode m) {
    return m == ConditioningMode::Dynamic ? "dynamic" : "static";
}
inline ConditioningMode parse_mode(const std::string& s) {
    if (s == "dynamic") return ConditioningMode::Dynamic;
    if (s == "static") return ConditioningMode::Static;
    throw ConfigError("mode must be 'dynamic' or 'static', got '" + s + "'");
}

struct PromptVocab {
    std::vector<std::string> attributes;
    std::vector<std::string> shapes;

    int size() const { return static_cast<int>(attributes.size() + shapes.size()); }

    int attribute_row(const std::string& word) const {
        for (size_t i = 0; i < attributes.size(); ++i)
            if (attributes[i] == word) return static_cast<int>(i);
        throw VocabError("unknown attribute '" + word + "'; known:" + joined());
    }
    int shape_row(const std::string& word) const {
        for (size_t i = 0; i < shapes.size(); ++i)
            if (shapes[i] == word) return static_cast<int>(attributes.size() + i);
        throw VocabError("unknown shape '" + word + "'; known:" + joined());
    }
    bool contains(const std::string& attribute, const std::string& shape) const {
        for (const auto& a : attributes)
            if (a == attribute)
                for (const auto& s : shapes)
                    if (s == shape) return true;
        return false;
    }

    std::string joined() const {
        std::string out;
        for (const auto& w : attributes) out += " " + w;
        for (const auto& w : shapes) out += " " + w;
        return out;
    }
};

struct TransformerConfig {
    int num_blocks = 6;
    int num_heads = 12;
    int head_dim = 16;
    int mlp_ratio = 4;

    int width() const { return num_heads * head_dim; }
};

struct HypernetConfig {
    int token_dim = 64;
    TransformerConfig tx;
    int gen_hidden = 128;
};

template <typename R>
struct HypernetForward {
    Tensor<R> density;  // [n]
    Tensor<R> rgb;      // [n x 3]
    GeneratedWeights<R> weights;
    Tensor<R> encoded;                   // a_0, the encoder output
    std::vector<Tensor<R>> activations;  // a_1.., empty when keep_activations=false
};

template <typename R>
class Hypernet {
public:
    struct Block {
        Tensor<R> ln1_g, ln1_b;
        Tensor<R> wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor<R> ln2_g, ln2_b;
        Tensor<R> ff1_w, ff1_b, ff2_w, ff2_b;
    };
    struct Generator {
        Tensor<R> adain_w, adain_b;  // width -> 2*prev
        Tensor<R> mlp1_w, mlp1_b;    // (width+prev) -> gen_hidden
        Tensor<R> mlp2_w, mlp2_b;    // gen_hidden -> prev*out
    };

    PromptVocab vocab;
    HypernetConfig cfg;
    NerfArchitecture arch;
    EncoderStack<R> enc;

    Tensor<R> embed;  // vocab.size x token_dim
    Tensor<R> in_w, in_b;
    std::vector<Block> blocks;
    std::vector<Generator> gens;  // one per NeRF layer, 0-indexed

    NamedParams<R> params;

    Hypernet() = default;
    Hypernet(const Hypernet&) = delete;
    Hypernet& operator=(const Hypernet&) = delete;
    Hypernet(Hypernet&&) = default;
    Hypernet& operator=(Hypernet&&) = default;

    static Hypernet build(PromptVocab vocab, HypernetConfig cfg, NerfArchitecture arch_no_input,
                          SinusoidalConfig sin_cfg, HashGridConfig hash_cfg, bool use_sin,
                          bool use_hash, double scene_radius, uint64_t seed) {
        Hypernet h;
        h.vocab = std::move(vocab);
        h.cfg = cfg;
        Pcg32 rng(seed, /*stream=*/0x9e3779b9);

        h.enc.sin_cfg = sin_cfg;
        h.enc.grid.cfg = hash_cfg;
        h.enc.use_sinusoidal = use_sin;
        h.enc.use_hash = use_hash;
        h.enc.scene_radius = scene_radius;
        h.enc.grid.init(rng);

        h.arch = arch_no_input;
        h.arch.input_dim = h.enc.out_dim();
        h.arch.validate();

        const int width = cfg.tx.width();
        auto linear = [&rng](int fan_in, int fan_out) {
            const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
            return Tensor<R>::uniform({fan_in, fan_out}, static_cast<R>(-a), static_cast<R>(a),
                                      rng);
        };

        h.embed = Tensor<R>::uniform({h.vocab.size(), cfg.token_dim}, R(-0.1), R(0.1), rng);
        h.in_w = linear(cfg.token_dim, width);
        h.in_b = Tensor<R>::zeros({width});

        for (int b = 0; b < cfg.tx.num_blocks; ++b) {
            Block blk;
            blk.ln1_g = Tensor<R>::full({width}, R(1));
            blk.ln1_b = Tensor<R>::zeros({width});
            blk.wq = linear(width, width);
            blk.bq = Tensor<R>::zeros({width});
            blk.wk = linear(width, width);
            blk.bk = Tensor<R>::zeros({width});
            blk.wv = linear(width, width);
            blk.bv = Tensor<R>::zeros({width});
            blk.wo = linear(width, width);
            blk.bo = Tensor<R>::zeros({width});
            blk.ln2_g = Tensor<R>::full({width}, R(1));
            blk.ln2_b = Tensor<R>::zeros({width});
            blk.ff1_w = linear(width, width * cfg.tx.mlp_ratio);
            blk.ff1_b = Tensor<R>::zeros({width * cfg.tx.mlp_ratio});
            blk.ff2_w = linear(width * cfg.tx.mlp_ratio, width);
            blk.ff2_b = Tensor<R>::zeros({width});
            h.blocks.push_back(std::move(blk));
        }

        for (int i = 1; i <= h.arch.num_layers; ++i) {
            const int prev = h.arch.layer_in(i);
            const int out = h.arch.layer_out(i);
            Generator g;
            const double aw = 0.1 / std::sqrt(static_cast<double>(width));
            g.adain_w = Tensor<R>::uniform({width, 2 * prev}, static_cast<R>(-aw),
                                           static_cast<R>(aw), rng);
            g.adain_b = Tensor<R>::zeros({2 * prev});
            for (int j = 0; j < prev; ++j) g.adain_b.at(j) = R(1);  // scale part starts at 1
            g.mlp1_w = linear(width + prev, cfg.gen_hidden);
            g.mlp1_b = Tensor<R>::zeros({cfg.gen_hidden});
            // final layer scaled by 1/sqrt(prev) so generated weights start at
            // the variance of a standard MLP init
            const double af =
                1.0 / (std::sqrt(static_cast<double>(cfg.gen_hidden)) * std::sqrt(static_cast<double>(prev)));
            g.mlp2_w = Tensor<R>::uniform({cfg.gen_hidden, prev * out}, static_cast<R>(-af),
                                          static_cast<R>(af), rng);
            g.mlp2_b = Tensor<R>::zeros({prev * out});
            h.gens.push_back(std::move(g));
        }

        h.register_params();
        return h;
    }

    void register_params() {
        params.clear();
        auto reg = [this](const std::string& name, Tensor<R>& t) {
            t.set_requires_grad(true);
            params.push_back({name, t});
        };
        reg("embed/table", embed);
        reg("tx/in/w", in_w);
        reg("tx/in/b", in_b);
        for (size_t b = 0; b < blocks.size(); ++b) {
            const std::string p = "tx/" + std::to_string(b) + "/";
            reg(p + "ln1/g", blocks[b].ln1_g);
            reg(p + "ln1/b", blocks[b].ln1_b);
            reg(p + "attn/wq", blocks[b].wq);
            reg(p + "attn/bq", blocks[b].bq);
            reg(p + "attn/wk", blocks[b].wk);
            reg(p + "attn/bk", blocks[b].bk);
            reg(p + "attn/wv", blocks[b].wv);
            reg(p + "attn/bv", blocks[b].bv);
            reg(p + "attn/wo", blocks[b].wo);
            reg(p + "attn/bo", blocks[b].bo);
            reg(p + "ln2/g", blocks[b].ln2_g);
            reg(p + "ln2/b", blocks[b].ln2_b);
            reg(p + "ff1/w", blocks[b].ff1_w);
            reg(p + "ff1/b", blocks[b].ff1_b);
            reg(p + "ff2/w", blocks[b].ff2_w);
            reg(p + "ff2/b", blocks[b].ff2_b);
        }
        for (size_t i = 0; i < gens.size(); ++i) {
            const std::string p = "gen/" + std::to_string(i + 1) + "/";
            reg(p + "adain/w", gens[i].adain_w);
            reg(p + "adain/b", gens[i].adain_b);
            reg(p + "mlp1/w", gens[i].mlp1_w);
            reg(p + "mlp1/b", gens[i].mlp1_b);
            reg(p + "mlp2/w", gens[i].mlp2_w);
            reg(p + "mlp2/b", gens[i].mlp2_b);
        }
        reg("hash/tables", enc.grid.tables);
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& p : params) n += p.tensor.numel();
        return n;
    }

    void zero_grads() { zero_all_grads(params); }

    // prompt -> [2 x token_dim] rows (attribute row, shape row), trainable
    Tensor<R> embed_prompt(const std::string& attribute, const std::string& shape) const {
        return take_rows(embed, {vocab.attribute_row(attribute), vocab.shape_row(shape)});
    }

    // tokens [s x token_dim] -> CT [1 x width]
    Tensor<R> transform(const Tensor<R>& tokens) const {
        const int width = cfg.tx.width();
        Tensor<R> x = add(matmul(tokens, in_w), in_b);
        for (const auto& blk : blocks) {
            Tensor<R> h = layer_norm(x, blk.ln1_g, blk.ln1_b);
            Tensor<R> q = add(matmul(h, blk.wq), blk.bq);
            Tensor<R> k = add(matmul(h, blk.wk), blk.bk);
            Tensor<R> v = add(matmul(h, blk.wv), blk.bv);
            std::vector<Tensor<R>> heads;
            const R inv_sqrt_d = static_cast<R>(1.0 / std::sqrt(static_cast<double>(cfg.tx.head_dim)));
            for (int hd = 0; hd < cfg.tx.num_heads; ++hd) {
                const int c0 = hd * cfg.tx.head_dim;
                Tensor<R> qh = slice_cols(q, c0, cfg.tx.head_dim);
                Tensor<R> kh = slice_cols(k, c0, cfg.tx.head_dim);
                Tensor<R> vh = slice_cols(v, c0, cfg.tx.head_dim);
                Tensor<R> scores = scale(matmul(qh, transpose(kh)), inv_sqrt_d);
                Tensor<R> att = softmax(scores, 1);
                heads.push_back(matmul(att, vh));
            }
            Tensor<R> o = add(matmul(concat(heads, 1), blk.wo), blk.bo);
            x = add(x, o);
            Tensor<R> h2 = layer_norm(x, blk.ln2_g, blk.ln2_b);
            Tensor<R> f =
                add(matmul(relu(add(matmul(h2, blk.ff1_w), blk.ff1_b)), blk.ff2_w), blk.ff2_b);
            x = add(x, f);
        }
        return reshape(reduce_mean(x, 0), {1, width});
    }

    Tensor<R> conditioning_token(const std::string& attribute, const std::string& shape) const {
        return transform(embed_prompt(attribute, shape));
    }

    // One layer's weight matrix from CT and the previous activation batch.
    // The activation path is stop-gradiented and minibatch-averaged, then
    // instance-normalized with a CT-conditioned affine (AdaIN).
    Tensor<R> generate_layer(int layer, const Tensor<R>& ct, const Tensor<R>& a_prev,
                             ConditioningMode mode) const {
        const int prev = arch.layer_in(layer);
        const int out = arch.layer_out(layer);
        const Generator& g = gens[static_cast<size_t>(layer - 1)];
        if (a_prev.rank() != 2 || a_prev.dim(1) != prev)
            throw ShapeError("generate_layer " + std::to_string(layer) + ": activations are " +
                             shape_str(a_prev.shape()) + ", expected [nx" + std::to_string(prev) +
                             "]");

        Tensor<R> abar;
        if (mode == ConditioningMode::Static) {
            abar = Tensor<R>::zeros({1, prev});
        } else {
            // reduce_mean(stop_gradient(a_prev), axis=0), fused to skip the copy
            abar = batch_mean_detached(a_prev);
        }

        // AdaIN over the feature dimension
        Tensor<R> mu = reduce_mean(abar, 1);
        Tensor<R> centered = sub(abar, mu);
        Tensor<R> var = reduce_mean(mul(centered, centered), 1);
        Tensor<R> denom = add_scalar(sqrt_(var), R(1e-5));
        Tensor<R> normed = div(centered, denom);
        Tensor<R> aff = add(matmul(ct, g.adain_w), g.adain_b);
        Tensor<R> sc = slice_cols(aff, 0, prev);
        Tensor<R> sh = slice_cols(aff, prev, prev);
        Tensor<R> a_norm = add(mul(sc, normed), sh);

        Tensor<R> gin = concat<R>({ct, a_norm}, 1);
        Tensor<R> hidden = relu(add(matmul(gin, g.mlp1_w), g.mlp1_b));
        Tensor<R> flat = add(matmul(hidden, g.mlp2_w), g.mlp2_b);
        return reshape(flat, {prev, out});
    }

    // Interleaved per-layer generation and NeRF evaluation. Layer 1's
    // generator is fed the mean encoded input (there is no previous generated
    // layer); static mode feeds zeros everywhere.
    //
    // frozen_gen_inputs, when given, replaces each generator's activation
    // input with a stored constant batch. Values match the live forward when
    // the constants come from the same parameters; gradients match always,
    // since the live activation path is stop-gradiented anyway. Finite
    // difference checks of the composite difference against this frozen
    // variant.
    HypernetForward<R> forward_with_ct(const Tensor<R>& ct, const Tensor<R>& points_world,
                                       ConditioningMode mode, bool keep_activations = true,
                                       const std::vector<Tensor<R>>* frozen_gen_inputs =
                                           nullptr) const {
        HypernetForward<R> res;
        const int n = points_world.dim(0);
        Tensor<R> a = enc.encode(points_world);  // a_0
        res.encoded = a;

        Tensor<R> prev1, prev2;  // a_{i-1}, a_{i-2} rolling pair for skips
        Tensor<R> out;
        for (int i = 1; i <= arch.num_layers; ++i) {
            const Tensor<R>& gen_in =
                frozen_gen_inputs ? (*frozen_gen_inputs)[static_cast<size_t>(i - 1)] : a;
            Tensor<R> w = generate_layer(i, ct, gen_in, mode);  // conditioned on a_{i-1}
            res.weights.push_back(w);
            Tensor<R> z = matmul(a, w);
            if (i < arch.num_layers) {
                Tensor<R> ai = relu(z);
                if (arch.skip_at(i)) ai = add(ai, prev2);
                prev2 = prev1;
                prev1 = ai;
                a = ai;
                if (keep_activations) res.activations.push_back(ai);
            } else {
                out = z;
            }
        }
        res.density = reshape(softplus(slice_cols(out, 0, 1)), {n});
        res.rgb = sigmoid(slice_cols(out, 1, 3));
        return res;
    }

    HypernetForward<R> forward(const std::string& attribute, const std::string& shape,
                               const Tensor<R>& points_world, ConditioningMode mode,
                               bool keep_activations = true,
                               const std::vector<Tensor<R>>* frozen_gen_inputs = nullptr) const {
        return forward_with_ct(conditioning_token(attribute, shape), points_world, mode,
                               keep_activations, frozen_gen_inputs);
    }

    // Detached copies of the generator inputs (a_0, a_1, ..., a_{L-1}) from a
    // completed forward, for the frozen variant above.
    static std::vector<Tensor<R>> frozen_inputs_of(const HypernetForward<R>& fwd) {
        std::vector<Tensor<R>> frozen;
        frozen.push_back(fwd.encoded.clone_detached());
        for (size_t i = 0; i + 1 < fwd.weights.size(); ++i)
            frozen.push_back(fwd.activations[i].clone_detached());
        return frozen;
    }
};

}  // namespace hf
