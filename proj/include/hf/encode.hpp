#pragma once

#include <cmath>

#include "hf/tensor.hpp"

namespace hf {

// Input feature encodings for 3D positions: parameter-free sinusoidal bands
// plus a trainable multiresolution hash grid. Positions are normalized by the
// caller (sinusoidal expects [-1,1], the hash grid [0,1]).

struct SinusoidalConfig {
    int num_frequencies = 6;
    bool include_input = true;

    int out_dim() const { return 3 * (2 * num_frequencies + (include_input ? 1 : 0)); }
};

// Per point: [sin(2^k pi x), cos(2^k pi x)] for k = 0..F-1 over all three
// coordinates, raw coordinates appended last when configured. Higher bands
// come from the double-angle recurrence on the base band, in double precision.
template <typename R>
Tensor<R> sinusoidal_encode(const Tensor<R>& pts, const SinusoidalConfig& cfg) {
    if (pts.rank() != 2 || pts.dim(1) != 3)
        throw ShapeError("sinusoidal_encode: expected [n x 3] positions, got " +
                         shape_str(pts.shape()));
    const int n = pts.dim(0);
    const int d = cfg.out_dim();
    auto out = Tensor<R>::uninitialized({n, d});
    constexpr double kPi = 3.14159265358979323846;
    for (int i = 0; i < n; ++i) {
        const R* p = pts.data() + static_cast<size_t>(i) * 3;
        R* o = out.data() + static_cast<size_t>(i) * d;
        double s[3], c[3];
        for (int a = 0; a < 3; ++a) {
            s[a] = std::sin(kPi * static_cast<double>(p[a]));
            c[a] = std::cos(kPi * static_cast<double>(p[a]));
        }
        int col = 0;
        for (int k = 0; k < cfg.num_frequencies; ++k) {
            for (int a = 0; a < 3; ++a) o[col++] = static_cast<R>(s[a]);
            for (int a = 0; a < 3; ++a) o[col++] = static_cast<R>(c[a]);
            for (int a = 0; a < 3; ++a) {
                const double s2 = 2.0 * s[a] * c[a];
                const double c2 = 1.0 - 2.0 * s[a] * s[a];
                s[a] = s2;
                c[a] = c2;
            }
        }
        if (cfg.include_input)
            for (int a = 0; a < 3; ++a) o[col++] = p[a];
    }
    return out;
}

struct HashGridConfig {
    int levels = 8;
    int features_per_level = 2;
    int log2_table_size = 14;
    int base_resolution = 16;
    double growth_factor = 1.5;

    int table_size() const { return 1 << log2_table_size; }
    int out_dim() const { return levels * features_per_level; }
    int resolution(int level) const {
        return static_cast<int>(std::floor(base_resolution * std::pow(growth_factor, level)));
    }
    void validate() const {
        if (levels < 1 || features_per_level < 1 || log2_table_size < 1 || base_resolution < 1)
            throw ConfigError("hash grid: all sizes must be positive");
        if (growth_factor <= 1.0)
            throw ConfigError("hash grid: growth factor must exceed 1 (resolutions must increase)");
        for (int l = 1; l < levels; ++l)
            if (resolution(l) <= resolution(l - 1))
                throw ConfigError("hash grid: per-level resolution not strictly increasing at level " +
                                  std::to_string(l));
    }
};

template <typename R>
struct HashGrid {
    HashGridConfig cfg;
    Tensor<R> tables;  // [levels * table_size, features_per_level], trainable

    void init(Pcg32& rng) {
        cfg.validate();
        tables = Tensor<R>::uniform({cfg.levels * cfg.table_size(), cfg.features_per_level},
                                    R(-1e-4), R(1e-4), rng);
    }
};

namespace detail {
inline uint32_t hash_corner(uint32_t x, uint32_t y, uint32_t z, uint32_t mask) {
    return (x ^ (y * 2654435761u) ^ (z * 805459861u)) & mask;
}
}  // namespace detail

// Trilinear interpolation of hashed corner features, per level, levels
// concatenated. Differentiable into the tables (and only into the <= 8*levels
// touched rows per point); positions are clamped into [0,1]^3.
template <typename R>
Tensor<R> hash_encode(const HashGrid<R>& grid, const Tensor<R>& pts01) {
    if (pts01.rank() != 2 || pts01.dim(1) != 3)
        throw ShapeError("hash_encode: expected [n x 3] positions, got " +
                         shape_str(pts01.shape()));
    const auto& cfg = grid.cfg;
    const int n = pts01.dim(0);
    const int L = cfg.levels;
    const int F = cfg.features_per_level;
    const int T = cfg.table_size();
    const uint32_t mask = static_cast<uint32_t>(T - 1);
    const int d = cfg.out_dim();
    std::vector<int> res_of_level(L);
    for (int l = 0; l < L; ++l) res_of_level[l] = cfg.resolution(l);

    auto accumulate = [=](const Tensor<R>& pts, const R* table, R* out, R* table_grad,
                          const R* out_grad) {
        for (int i = 0; i < n; ++i) {
            const R* p = pts.data() + static_cast<size_t>(i) * 3;
            double q[3];
            for (int a = 0; a < 3; ++a) {
                double v = static_cast<double>(p[a]);
                q[a] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
            }
            for (int l = 0; l < L; ++l) {
                const int res = res_of_level[l];
                uint32_t c0[3];
                double fr[3];
                for (int a = 0; a < 3; ++a) {
                    const double s = q[a] * res;
                    double fl = std::floor(s);
                    if (fl > res) fl = res;
                    c0[a] = static_cast<uint32_t>(fl);
                    fr[a] = s - fl;
                }
                const size_t level_off = static_cast<size_t>(l) * T;
                const size_t out_off = static_cast<size_t>(i) * d + static_cast<size_t>(l) * F;
                for (int corner = 0; corner < 8; ++corner) {
                    const uint32_t dx = corner & 1, dy = (corner >> 1) & 1, dz = (corner >> 2) & 1;
                    const double w = (dx ? fr[0] : 1.0 - fr[0]) * (dy ? fr[1] : 1.0 - fr[1]) *
                                     (dz ? fr[2] : 1.0 - fr[2]);
                    if (w == 0.0) continue;
                    const uint32_t h = detail::hash_corner(c0[0] + dx, c0[1] + dy, c0[2] + dz, mask);
                    const size_t row = (level_off + h) * static_cast<size_t>(F);
                    if (out) {
                        for (int f = 0; f < F; ++f)
                            out[out_off + f] += static_cast<R>(w) * table[row + f];
                    } else {
                        for (int f = 0; f < F; ++f)
                            table_grad[row + f] += static_cast<R>(w) * out_grad[out_off + f];
                    }
                }
            }
        }
    };

    Tensor<R> out({n, d});
    accumulate(pts01, grid.tables.data(), out.data(), nullptr, nullptr);

    if (detail::taping(grid.tables)) {
        Tensor<R> tc = grid.tables;
        tc.ensure_grad();
        Tensor<R> pc = pts01;
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, pc, out, accumulate]() mutable {
            accumulate(pc, tc.data(), nullptr, tc.grad().data(), out.grad().data());
        });
    }
    return out;
}

// World-space positions -> concatenated [sinusoidal | hash] features.
// scene_radius maps the sampled world volume into the encoders' unit domains.
template <typename R>
struct EncoderStack {
    SinusoidalConfig sin_cfg;
    HashGrid<R> grid;
    bool use_sinusoidal = true;
    bool use_hash = true;
    double scene_radius = 2.0;

    int out_dim() const {
        int d = 0;
        if (use_sinusoidal) d += sin_cfg.out_dim();
        if (use_hash) d += grid.cfg.out_dim();
        return d;
    }

    Tensor<R> encode(const Tensor<R>& pts_world) const {
        if (pts_world.rank() != 2 || pts_world.dim(1) != 3)
            throw ShapeError("encode: expected [n x 3] positions, got " +
                             shape_str(pts_world.shape()));
        const int n = pts_world.dim(0);
        const R inv = static_cast<R>(1.0 / scene_radius);
        auto norm = Tensor<R>::uninitialized({n, 3});
        for (size_t i = 0; i < pts_world.numel(); ++i) norm.data()[i] = pts_world.data()[i] * inv;
        std::vector<Tensor<R>> parts;
        if (use_sinusoidal) parts.push_back(sinusoidal_encode(norm, sin_cfg));
        if (use_hash) {
            auto half = Tensor<R>::uninitialized({n, 3});
            for (size_t i = 0; i < norm.numel(); ++i)
                half.data()[i] = (norm.data()[i] + R(1)) * R(0.5);
            parts.push_back(hash_encode(grid, half));
        }
        if (parts.empty()) throw ConfigError("encoder stack: both encodings disabled");
        return parts.size() == 1 ? parts[0] : concat(parts, 1);
    }
};

}  // namespace hf
