#include "hf/scenes.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hf {

namespace {

const std::vector<std::string> kShapeNames = {"sphere", "box",     "torus",       "cylinder",
                                              "octahedron", "cone", "capsule", "rounded_box",
                                              "pyramid"};
const std::vector<std::string> kAttributeNames = {"red",    "green",  "blue", "yellow",
                                                  "purple", "orange", "cyan", "white"};

const std::array<std::array<float, 3>, kNumAttributes> kAttributeColors = {{
    {1.0f, 0.0f, 0.0f},  // red
    {0.0f, 1.0f, 0.0f},  // green
    {0.0f, 0.0f, 1.0f},  // blue
    {1.0f, 1.0f, 0.0f},  // yellow
    {0.5f, 0.0f, 0.5f},  // purple
    {1.0f, 0.5f, 0.0f},  // orange
    {0.0f, 1.0f, 1.0f},  // cyan
    {1.0f, 1.0f, 1.0f},  // white
}};

inline double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }
inline double len2d(double x, double y) { return std::sqrt(x * x + y * y); }

}  // namespace

const std::vector<std::string>& all_shape_names() { return kShapeNames; }
const std::vector<std::string>& all_attribute_names() { return kAttributeNames; }

std::string shape_name(ShapeKind s) { return kShapeNames[static_cast<size_t>(s)]; }
std::string attribute_name(AttributeKind a) { return kAttributeNames[static_cast<size_t>(a)]; }

std::optional<ShapeKind> parse_shape(const std::string& name) {
    for (size_t i = 0; i < kShapeNames.size(); ++i)
        if (kShapeNames[i] == name) return static_cast<ShapeKind>(i);
    return std::nullopt;
}

std::optional<AttributeKind> parse_attribute(const std::string& name) {
    for (size_t i = 0; i < kAttributeNames.size(); ++i)
        if (kAttributeNames[i] == name) return static_cast<AttributeKind>(i);
    return std::nullopt;
}

std::array<float, 3> attribute_rgb(AttributeKind a) {
    return kAttributeColors[static_cast<size_t>(a)];
}

SceneSpec parse_prompt(const std::string& prompt) {
    const auto space = prompt.find(' ');
    if (space == std::string::npos)
        throw VocabError("prompt '" + prompt + "' is not of the form '<attribute> <shape>'");
    const std::string attr = prompt.substr(0, space);
    const std::string shape = prompt.substr(space + 1);
    auto a = parse_attribute(attr);
    auto s = parse_shape(shape);
    if (!a || !s) {
        std::string msg = "unknown prompt '" + prompt + "'; known attributes:";
        for (const auto& w : kAttributeNames) msg += " " + w;
        msg += "; known shapes:";
        for (const auto& w : kShapeNames) msg += " " + w;
        throw VocabError(msg);
    }
    return SceneSpec{*s, *a};
}

double shape_sdf(ShapeKind shape, Vec3 p) {
    switch (shape) {
        case ShapeKind::Sphere:
            return norm(p) - 0.6;

        case ShapeKind::Box: {
            const double bx = 0.45;
            const double qx = std::fabs(p.x) - bx, qy = std::fabs(p.y) - bx,
                         qz = std::fabs(p.z) - bx;
            const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
            return std::sqrt(ox * ox + oy * oy + oz * oz) +
                   std::min(std::max(qx, std::max(qy, qz)), 0.0);
        }

        case ShapeKind::RoundedBox: {
            const double bx = 0.36, r = 0.14;
            const double qx = std::fabs(p.x) - bx, qy = std::fabs(p.y) - bx,
                         qz = std::fabs(p.z) - bx;
            const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
            return std::sqrt(ox * ox + oy * oy + oz * oz) +
                   std::min(std::max(qx, std::max(qy, qz)), 0.0) - r;
        }

        case ShapeKind::Torus: {
            // major radius in the xy-plane, tube along z
            const double R = 0.42, r = 0.18;
            const double qx = len2d(p.x, p.y) - R;
            return len2d(qx, p.z) - r;
        }

        case ShapeKind::Cylinder: {
            const double r = 0.4, h = 0.45;  // half-height, axis z
            const double dx = len2d(p.x, p.y) - r;
            const double dz = std::fabs(p.z) - h;
            const double ox = std::max(dx, 0.0), oz = std::max(dz, 0.0);
            return std::min(std::max(dx, dz), 0.0) + len2d(ox, oz);
        }

        case ShapeKind::Octahedron: {
            const double s = 0.65;
            const double ax = std::fabs(p.x), ay = std::fabs(p.y), az = std::fabs(p.z);
            const double m = ax + ay + az - s;
            double qx, qy, qz;
            if (3.0 * ax < m) {
                qx = ax; qy = ay; qz = az;
            } else if (3.0 * ay < m) {
                qx = ay; qy = az; qz = ax;
            } else if (3.0 * az < m) {
                qx = az; qy = ax; qz = ay;
            } else {
                return m * 0.57735027;
            }
            const double k = clampd(0.5 * (qz - qy + s), 0.0, s);
            const double ex = qx, ey = qy - s + k, ez = qz - k;
            return std::sqrt(ex * ex + ey * ey + ez * ez);
        }

        case ShapeKind::Cone: {
            // capped cone along z: base radius r1 at z=-h, tip radius r2 at z=+h
            const double h = 0.45, r1 = 0.45, r2 = 0.05;
            const double qx = len2d(p.x, p.y), qz = p.z;
            const double k1x = r2, k1z = h;
            const double k2x = r2 - r1, k2z = 2.0 * h;
            const double cax = qx - std::min(qx, (qz < 0.0) ? r1 : r2);
            const double caz = std::fabs(qz) - h;
            const double t =
                clampd(((k1x - qx) * k2x + (k1z - qz) * k2z) / (k2x * k2x + k2z * k2z), 0.0, 1.0);
            const double cbx = qx - k1x + k2x * t;
            const double cbz = qz - k1z + k2z * t;
            const double s = (cbx < 0.0 && caz < 0.0) ? -1.0 : 1.0;
            return s * std::sqrt(std::min(cax * cax + caz * caz, cbx * cbx + cbz * cbz));
        }

        case ShapeKind::Capsule: {
            const double a = 0.25, r = 0.3;  // segment z in [-a, a]
            const double cz = clampd(p.z, -a, a);
            return std::sqrt(p.x * p.x + p.y * p.y + (p.z - cz) * (p.z - cz)) - r;
        }

        case ShapeKind::Pyramid: {
            // square base (side 0.9) at z=-0.30, apex at z=+0.40; evaluated via
            // the unit-base exact pyramid distance, uniformly scaled
            const double sc = 0.9;
            const double hu = 0.7 / sc;
            double px = p.x / sc;
            double py = (p.z + 0.30) / sc;  // world z-up -> formula y-up
            double pz = p.y / sc;
            const double m2 = hu * hu + 0.25;
            px = std::fabs(px);
            pz = std::fabs(pz);
            if (pz > px) std::swap(px, pz);
            px -= 0.5;
            pz -= 0.5;
            const double qx = pz;
            const double qy = hu * py - 0.5 * px;
            const double qz = hu * px + 0.5 * py;
            const double s = std::max(-qx, 0.0);
            const double t = clampd((qy - 0.5 * pz) / (m2 + 0.25), 0.0, 1.0);
            const double a = m2 * (qx + s) * (qx + s) + qy * qy;
            const double b = m2 * (qx + 0.5 * t) * (qx + 0.5 * t) + (qy - m2 * t) * (qy - m2 * t);
            const double d2 = std::min(qy, -qx * m2 - qy * 0.5) > 0.0 ? 0.0 : std::min(a, b);
            const double d = sc * std::sqrt((d2 + qz * qz) / m2);
            return std::max(qz, -py) < 0.0 ? -d : d;
        }
    }
    throw ConfigError("unhandled shape kind");
}

void oracle_query(const OracleField& field, const double* points, int n, double* density,
                  double* rgb) {
    const auto col = field.color();
    for (int i = 0; i < n; ++i) {
        const Vec3 p{points[i * 3 + 0], points[i * 3 + 1], points[i * 3 + 2]};
        density[i] = field.density(p);
        if (rgb) {
            rgb[i * 3 + 0] = col[0];
            rgb[i * 3 + 1] = col[1];
            rgb[i * 3 + 2] = col[2];
        }
    }
}

void oracle_render_rays(const OracleField& field, const RayBatch& rays,
                        const std::vector<double>& ts, int samples,
                        const std::array<float, 3>& background, float* out_pixels,
                        float* out_opacity) {
    const int r = rays.count();
    const std::array<double, 3> bg = {background[0], background[1], background[2]};
    const auto col = field.color();
    const std::array<double, 3> cd = {col[0], col[1], col[2]};
    const int nt = num_threads();
#ifdef _OPENMP
#pragma omp parallel for num_threads(nt) schedule(static) if (nt > 1 && r >= 256)
#endif
    for (int i = 0; i < r; ++i) {
        const Vec3 o = rays.origins[static_cast<size_t>(i)];
        const Vec3 d = rays.dirs[static_cast<size_t>(i)];
        std::vector<double> sigma(static_cast<size_t>(samples));
        std::vector<double> rgb(static_cast<size_t>(samples) * 3);
        std::vector<double> delta(static_cast<size_t>(samples));
        const size_t off = static_cast<size_t>(i) * samples;
        for (int j = 0; j < samples; ++j) {
            const double t = ts[off + j];
            sigma[static_cast<size_t>(j)] = field.density(o + t * d);
            rgb[static_cast<size_t>(j) * 3 + 0] = cd[0];
            rgb[static_cast<size_t>(j) * 3 + 1] = cd[1];
            rgb[static_cast<size_t>(j) * 3 + 2] = cd[2];
            if (j > 0) delta[static_cast<size_t>(j - 1)] = ts[off + j] - ts[off + j - 1];
        }
        delta[static_cast<size_t>(samples - 1)] = rays.t_far - ts[off + samples - 1];
        double pix[3], opa;
        composite_ray(sigma.data(), rgb.data(), delta.data(), samples, bg.data(), pix, &opa);
        out_pixels[i * 3 + 0] = static_cast<float>(pix[0]);
        out_pixels[i * 3 + 1] = static_cast<float>(pix[1]);
        out_pixels[i * 3 + 2] = static_cast<float>(pix[2]);
        if (out_opacity) out_opacity[i] = static_cast<float>(opa);
    }
}

Image oracle_render(const OracleField& field, const CameraPose& cam, int samples, double t_near,
                    double t_far, const std::array<float, 3>& background, Image* opacity_out) {
    RayBatch rays = make_rays(cam, t_near, t_far);
    const auto ts = sample_depths(rays.count(), samples, t_near, t_far, /*jitter=*/false, nullptr);
    Image img(cam.width, cam.height);
    std::vector<float> opa(static_cast<size_t>(rays.count()));
    oracle_render_rays(field, rays, ts, samples, background, img.pixels.data(), opa.data());
    if (opacity_out) {
        *opacity_out = Image(cam.width, cam.height);
        for (int i = 0; i < rays.count(); ++i) {
            opacity_out->pixels[static_cast<size_t>(i) * 3 + 0] = opa[static_cast<size_t>(i)];
            opacity_out->pixels[static_cast<size_t>(i) * 3 + 1] = opa[static_cast<size_t>(i)];
            opacity_out->pixels[static_cast<size_t>(i) * 3 + 2] = opa[static_cast<size_t>(i)];
        }
    }
    return img;
}

}  // namespace hf
