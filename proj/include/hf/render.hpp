#pragma once

#include <array>
#include <cmath>

#include "hf/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hf {

struct Vec3 {
    double x = 0, y = 0, z = 0;
};
inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(Vec3 v) {
    const double n = norm(v);
    return {v.x / n, v.y / n, v.z / n};
}

struct CameraPose {
    Vec3 position{4, 0, 0};
    Vec3 look_at{0, 0, 0};
    Vec3 up{0, 0, 1};
    double fov_y = 0.5;  // radians
    int width = 64;
    int height = 64;
};

struct RayBatch {
    std::vector<Vec3> origins;
    std::vector<Vec3> dirs;  // unit length
    double t_near = 2.0;
    double t_far = 6.0;
    int count() const { return static_cast<int>(dirs.size()); }
};

// One ray per pixel through pixel centers, row-major from the top-left,
// right-handed basis from (look_at - position, up).
inline RayBatch make_rays(const CameraPose& cam, double t_near = 2.0, double t_far = 6.0) {
    const Vec3 fwd_raw = cam.look_at - cam.position;
    if (norm(fwd_raw) < 1e-12) throw ConfigError("camera: position equals look_at");
    const Vec3 f = normalized(fwd_raw);
    const Vec3 right_raw = cross(f, cam.up);
    if (norm(right_raw) < 1e-9) throw ConfigError("camera: up is parallel to the view direction");
    const Vec3 r = normalized(right_raw);
    const Vec3 u = cross(r, f);
    const double ty = std::tan(cam.fov_y * 0.5);
    const double tx = ty * static_cast<double>(cam.width) / cam.height;

    RayBatch rays;
    rays.t_near = t_near;
    rays.t_far = t_far;
    rays.origins.assign(static_cast<size_t>(cam.width) * cam.height, cam.position);
    rays.dirs.resize(static_cast<size_t>(cam.width) * cam.height);
    for (int py = 0; py < cam.height; ++py) {
        const double sy = (1.0 - 2.0 * (py + 0.5) / cam.height) * ty;
        for (int px = 0; px < cam.width; ++px) {
            const double sx = (2.0 * (px + 0.5) / cam.width - 1.0) * tx;
            rays.dirs[static_cast<size_t>(py) * cam.width + px] =
                normalized(f + sx * r + sy * u);
        }
    }
    return rays;
}

inline RayBatch subset_rays(const RayBatch& rays, const std::vector<int>& idx) {
    RayBatch out;
    out.t_near = rays.t_near;
    out.t_far = rays.t_far;
    out.origins.reserve(idx.size());
    out.dirs.reserve(idx.size());
    for (int i : idx) {
        out.origins.push_back(rays.origins[static_cast<size_t>(i)]);
        out.dirs.push_back(rays.dirs[static_cast<size_t>(i)]);
    }
    return out;
}

// Stratified depths: t_j = t_near + (j + u_j) * (t_far - t_near)/S per ray,
// u ~ U[0,1) when jittered, u = 1/2 for deterministic midpoint sampling.
inline std::vector<double> sample_depths(int rays, int samples, double t_near, double t_far,
                                         bool jitter, Pcg32* rng) {
    std::vector<double> ts(static_cast<size_t>(rays) * samples);
    const double seg = (t_far - t_near) / samples;
    for (int r = 0; r < rays; ++r)
        for (int j = 0; j < samples; ++j) {
            const double u = jitter ? rng->next_double() : 0.5;
            ts[static_cast<size_t>(r) * samples + j] = t_near + (j + u) * seg;
        }
    return ts;
}

inline std::vector<double> segment_deltas(const std::vector<double>& ts, int rays, int samples,
                                          double t_far) {
    std::vector<double> deltas(ts.size());
    for (int r = 0; r < rays; ++r) {
        const size_t off = static_cast<size_t>(r) * samples;
        for (int j = 0; j + 1 < samples; ++j) deltas[off + j] = ts[off + j + 1] - ts[off + j];
        deltas[off + samples - 1] = t_far - ts[off + samples - 1];
    }
    return deltas;
}

// World-space sample positions for (rays x samples), flattened row-major.
template <typename R>
Tensor<R> ray_points(const RayBatch& rays, const std::vector<double>& ts, int samples) {
    const int r = rays.count();
    auto pts = Tensor<R>::uninitialized({r * samples, 3});
    for (int i = 0; i < r; ++i) {
        const Vec3 o = rays.origins[static_cast<size_t>(i)];
        const Vec3 d = rays.dirs[static_cast<size_t>(i)];
        for (int j = 0; j < samples; ++j) {
            const double t = ts[static_cast<size_t>(i) * samples + j];
            R* p = pts.data() + (static_cast<size_t>(i) * samples + j) * 3;
            p[0] = static_cast<R>(o.x + t * d.x);
            p[1] = static_cast<R>(o.y + t * d.y);
            p[2] = static_cast<R>(o.z + t * d.z);
        }
    }
    return pts;
}

// Emission-absorption compositing of one ray's samples; shared by the
// differentiable op and the detached oracle/teacher paths.
//   alpha_j = 1 - exp(-sigma_j * delta_j), T_j = prod_{k<j} (1 - alpha_k)
//   pixel   = sum_j T_j alpha_j c_j + T_final * background
template <typename T>
inline void composite_ray(const T* sigma, const T* rgb, const T* delta, int samples,
                          const T* background, T* pixel, T* opacity, T* alphas = nullptr) {
    T trans = T(1);
    pixel[0] = pixel[1] = pixel[2] = T(0);
    for (int j = 0; j < samples; ++j) {
        const T a = T(1) - std::exp(-sigma[j] * delta[j]);
        if (alphas) alphas[j] = a;
        const T w = trans * a;
        pixel[0] += w * rgb[j * 3 + 0];
        pixel[1] += w * rgb[j * 3 + 1];
        pixel[2] += w * rgb[j * 3 + 2];
        trans *= (T(1) - a);
    }
    pixel[0] += trans * background[0];
    pixel[1] += trans * background[1];
    pixel[2] += trans * background[2];
    *opacity = T(1) - trans;
}

template <typename R>
struct CompositeResult {
    Tensor<R> pixels;   // [rays x 3]
    Tensor<R> opacity;  // [rays]
};

// Differentiable volume rendering op over per-sample density and color.
template <typename R>
CompositeResult<R> composite(const Tensor<R>& density, const Tensor<R>& rgb,
                             const std::vector<double>& deltas, int rays, int samples,
                             const std::array<R, 3>& background) {
    if (samples < 2) throw ConfigError("composite: needs at least 2 samples per ray");
    if (static_cast<int>(density.numel()) != rays * samples)
        throw ShapeError("composite: density is " + shape_str(density.shape()) + ", expected " +
                         std::to_string(rays * samples) + " samples");
    if (rgb.rank() != 2 || rgb.dim(0) != rays * samples || rgb.dim(1) != 3)
        throw ShapeError("composite: rgb is " + shape_str(rgb.shape()) + ", expected [" +
                         std::to_string(rays * samples) + "x3]");

    auto dl = std::make_shared<std::vector<R>>(deltas.size());
    for (size_t i = 0; i < deltas.size(); ++i) (*dl)[i] = static_cast<R>(deltas[i]);
    auto alphas = std::make_shared<std::vector<R>>(static_cast<size_t>(rays) * samples);

    CompositeResult<R> res{Tensor<R>::uninitialized({rays, 3}),
                           Tensor<R>::uninitialized({rays})};
    const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1 && rays >= 256)
#endif
    for (int r = 0; r < rays; ++r) {
        const size_t off = static_cast<size_t>(r) * samples;
        composite_ray(density.data() + off, rgb.data() + off * 3, dl->data() + off, samples,
                      background.data(), res.pixels.data() + static_cast<size_t>(r) * 3,
                      res.opacity.data() + r, alphas->data() + off);
    }

    if (detail::taping(density, rgb)) {
        Tensor<R> dc = density, cc = rgb;
        if (dc.requires_grad()) dc.ensure_grad();
        if (cc.requires_grad()) cc.ensure_grad();
        Tensor<R> pix = res.pixels, opa = res.opacity;
        detail::mark_output(pix, true);
        detail::mark_output(opa, true);
        res.pixels = pix;
        res.opacity = opa;
        std::array<R, 3> bg = background;
        Tape<R>::active()->record([dc, cc, pix, opa, dl, alphas, rays, samples, bg]() mutable {
            const R* al = alphas->data();
            const R* gp = pix.grad().data();
            const R* go = opa.grad().data();
            std::vector<R> trans(static_cast<size_t>(samples));
            for (int r = 0; r < rays; ++r) {
                const size_t off = static_cast<size_t>(r) * samples;
                // forward transmittance prefix
                R t = R(1);
                for (int j = 0; j < samples; ++j) {
                    trans[static_cast<size_t>(j)] = t;
                    t *= (R(1) - al[off + j]);
                }
                const R* gpr = gp + static_cast<size_t>(r) * 3;
                const R gor = go[r];
                // suffix sweep: P_j = prod_{k>j}(1-alpha_k),
                // Q_j[c] = sum_{m>j} prod_{j<k<m}(1-alpha_k) alpha_m c_m[c]
                R P = R(1);
                R Q[3] = {R(0), R(0), R(0)};
                for (int j = samples - 1; j >= 0; --j) {
                    const R a = al[off + j];
                    const R* col = cc.data() + (off + j) * 3;
                    const R Tj = trans[static_cast<size_t>(j)];
                    if (cc.requires_grad()) {
                        R* gc = cc.grad().data() + (off + j) * 3;
                        const R w = Tj * a;
                        gc[0] += gpr[0] * w;
                        gc[1] += gpr[1] * w;
                        gc[2] += gpr[2] * w;
                    }
                    if (dc.requires_grad()) {
                        // d pixel / d alpha_j = T_j (c_j - Q_j - bg * P_j)
                        // d opacity / d alpha_j = T_j P_j
                        R dalpha = gor * Tj * P;
                        for (int c = 0; c < 3; ++c)
                            dalpha += gpr[c] * Tj * (col[c] - Q[c] - bg[c] * P);
                        const R dsig = dalpha * (*dl)[off + j] * (R(1) - a);
                        dc.grad()[off + j] += dsig;
                    }
                    for (int c = 0; c < 3; ++c) Q[c] = a * col[c] + (R(1) - a) * Q[c];
                    P *= (R(1) - a);
                }
            }
        });
    }
    return res;
}

// ---------------------------------------------------------------------------

struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;  // h*w*3, [0,1]

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, 0.f) {}
    float* px(int x, int y) { return pixels.data() + (static_cast<size_t>(y) * width + x) * 3; }
    const float* px(int x, int y) const {
        return pixels.data() + (static_cast<size_t>(y) * width + x) * 3;
    }
};

inline double mse_images(const Image& a, const Image& b) {
    double s = 0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        s += d * d;
    }
    return s / static_cast<double>(a.pixels.size());
}

// 10*log10(1/MSE) on unit-range images, capped at 99 dB for identical inputs.
inline double psnr_from_mse(double mse) {
    if (mse <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}
inline double psnr_images(const Image& a, const Image& b) { return psnr_from_mse(mse_images(a, b)); }

}  // namespace hf
