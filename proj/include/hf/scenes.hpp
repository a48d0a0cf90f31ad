#pragma once

#include <optional>
#include <string>

#include "hf/render.hpp"

namespace hf {

// Procedural ground-truth scenes: (shape, attribute) -> analytic density and
// color field. Shapes are exact signed distance functions sized to sit inside
// the unit ball; attributes are flat colors. These stand in for per-scene
// teachers, so renders are deterministic and noise-free.

enum class ShapeKind {
    Sphere,
    Box,
    Torus,
    Cylinder,
    Octahedron,
    Cone,
    Capsule,
    RoundedBox,
    Pyramid,
};

enum class AttributeKind {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
    Orange,
    Cyan,
    White,
};

inline constexpr int kNumShapes = 9;
inline constexpr int kNumAttributes = 8;

const std::vector<std::string>& all_shape_names();
const std::vector<std::string>& all_attribute_names();

std::string shape_name(ShapeKind s);
std::string attribute_name(AttributeKind a);
std::optional<ShapeKind> parse_shape(const std::string& name);
std::optional<AttributeKind> parse_attribute(const std::string& name);
std::array<float, 3> attribute_rgb(AttributeKind a);

struct SceneSpec {
    ShapeKind shape = ShapeKind::Sphere;
    AttributeKind attribute = AttributeKind::Red;

    std::string prompt() const { return attribute_name(attribute) + " " + shape_name(shape); }
    std::string slug() const { return attribute_name(attribute) + "_" + shape_name(shape); }
    bool operator==(const SceneSpec&) const = default;
};

// "<attribute> <shape>" -> SceneSpec; throws VocabError listing known words.
SceneSpec parse_prompt(const std::string& prompt);

// Exact signed distance to the shape at world point p (unit-ball sized).
double shape_sdf(ShapeKind shape, Vec3 p);

struct OracleField {
    SceneSpec spec;
    double kappa = 50.0;  // density scale
    double beta = 0.02;   // interior-indicator softness

    double density(Vec3 p) const {
        const double s = shape_sdf(spec.shape, p);
        // kappa * sigmoid(-sdf/beta)
        const double t = -s / beta;
        double sig;
        if (t >= 0) {
            sig = 1.0 / (1.0 + std::exp(-t));
        } else {
            const double e = std::exp(t);
            sig = e / (1.0 + e);
        }
        return kappa * sig;
    }
    std::array<float, 3> color() const { return attribute_rgb(spec.attribute); }
};

// density/color for a batch of points (rgb constant per scene)
void oracle_query(const OracleField& field, const double* points, int n, double* density,
                  double* rgb);

// Deterministic reference render along the given rays with the given sample
// depths (midpoint eval sampling unless the caller passes jittered depths).
// Pixels land in out_pixels (r x 3 floats); opacity optional.
void oracle_render_rays(const OracleField& field, const RayBatch& rays,
                        const std::vector<double>& ts, int samples,
                        const std::array<float, 3>& background, float* out_pixels,
                        float* out_opacity = nullptr);

Image oracle_render(const OracleField& field, const CameraPose& cam, int samples, double t_near,
                    double t_far, const std::array<float, 3>& background,
                    Image* opacity_out = nullptr);

}  // namespace hf
