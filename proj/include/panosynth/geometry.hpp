#pragma once

// Equirectangular pixel <-> spherical <-> Cartesian conversions and
// reprojection of spherical samples between panorama centers.
//
// Local frame convention: +x is the panorama center direction (theta = 0,
// phi = 0), +y is up, and theta grows towards -z.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace panosynth {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHalfPi = 0.5 * std::numbers::pi;

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The reprojected point coincides with the destination center.
class DegeneratePointError : public DomainError {
public:
    using DomainError::DomainError;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    constexpr bool operator==(const Vec3&) const = default;

    [[nodiscard]] constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    [[nodiscard]] constexpr Vec3 cross(const Vec3& o) const
    {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    [[nodiscard]] double norm() const { return std::sqrt(dot(*this)); }
    [[nodiscard]] bool finite() const
    {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static constexpr Mat3 identity() { return {}; }

    constexpr double operator()(int r, int c) const { return m[static_cast<size_t>(r * 3 + c)]; }
    constexpr double& operator()(int r, int c) { return m[static_cast<size_t>(r * 3 + c)]; }

    constexpr Vec3 operator*(const Vec3& v) const
    {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    constexpr Mat3 operator*(const Mat3& o) const
    {
        Mat3 out;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                out(r, c) = (*this)(r, 0) * o(0, c) + (*this)(r, 1) * o(1, c) + (*this)(r, 2) * o(2, c);
        return out;
    }

    [[nodiscard]] constexpr Mat3 transposed() const
    {
        return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }

    [[nodiscard]] constexpr double determinant() const
    {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    constexpr bool operator==(const Mat3&) const = default;

    /// Rotation about +y; positive angles increase theta.
    static Mat3 rotation_y(double a)
    {
        const double c = std::cos(a), s = std::sin(a);
        return {{c, 0, s, 0, 1, 0, -s, 0, c}};
    }
    /// Rotation about +z; positive angles tilt +x towards +y.
    static Mat3 rotation_z(double a)
    {
        const double c = std::cos(a), s = std::sin(a);
        return {{c, -s, 0, s, c, 0, 0, 0, 1}};
    }
    static Mat3 rotation_x(double a)
    {
        const double c = std::cos(a), s = std::sin(a);
        return {{1, 0, 0, 0, c, -s, 0, s, c}};
    }

    /// world-from-local = yaw (about up) * pitch (about z) * roll (about forward).
    static Mat3 from_yaw_pitch_roll(double yaw, double pitch, double roll)
    {
        return rotation_y(yaw) * rotation_z(pitch) * rotation_x(roll);
    }
};

inline bool is_rotation(const Mat3& r, double tol = 1e-9)
{
    const Mat3 p = r * r.transposed();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            if (std::abs(p(a, b) - (a == b ? 1.0 : 0.0)) > tol) return false;
    return std::abs(r.determinant() - 1.0) <= tol;
}

/// Camera pose of one panorama in the world frame. `rotation` is world-from-local.
struct Pose {
    Vec3 position;
    Mat3 rotation = Mat3::identity();

    static Pose at(const Vec3& p) { return {p, Mat3::identity()}; }
    bool operator==(const Pose&) const = default;

    [[nodiscard]] bool valid() const { return position.finite() && is_rotation(rotation); }

    [[nodiscard]] Vec3 to_world(const Vec3& local) const { return rotation * local + position; }
    [[nodiscard]] Vec3 to_local(const Vec3& world) const
    {
        return rotation.transposed() * (world - position);
    }
};

struct SphericalCoord {
    double theta = 0.0; ///< [-pi, pi]
    double phi = 0.0;   ///< [-pi/2, pi/2]
    double d = 1.0;     ///< meters, > 0
};

struct Angles {
    double theta = 0.0;
    double phi = 0.0;
};

/// Continuous pixel position; integer values are pixel centers.
struct PixelCoord {
    double i = 0.0;
    double j = 0.0;
};

struct ImageDims {
    int width = 0;
    int height = 0;

    [[nodiscard]] constexpr size_t size() const
    {
        return static_cast<size_t>(width) * static_cast<size_t>(height);
    }
    [[nodiscard]] constexpr bool is_equirect() const
    {
        return width >= 2 && width % 2 == 0 && width == 2 * height;
    }
    constexpr bool operator==(const ImageDims&) const = default;

    static ImageDims equirect(int width)
    {
        ImageDims d{width, width / 2};
        d.require_equirect();
        return d;
    }
    void require_equirect() const
    {
        if (!is_equirect())
            throw DomainError("equirectangular image must be 2:1 with even width, got " +
                              std::to_string(width) + "x" + std::to_string(height));
    }
};

/// Angles of a continuous pixel position; no range check.
inline Angles continuous_pixel_to_angles(double i, double j, const ImageDims& dims)
{
    return {kPi - kTwoPi * (i + 0.5) / dims.width, kHalfPi - kPi * (j + 0.5) / dims.height};
}

/// Angles of the center of pixel (i, j). Column 0 sits just under theta = +pi,
/// row 0 just under the zenith.
inline Angles pixel_to_angles(int i, int j, const ImageDims& dims)
{
    if (i < 0 || i >= dims.width || j < 0 || j >= dims.height)
        throw DomainError("pixel (" + std::to_string(i) + ", " + std::to_string(j) +
                          ") outside " + std::to_string(dims.width) + "x" +
                          std::to_string(dims.height));
    return continuous_pixel_to_angles(i, j, dims);
}

/// Inverse of the continuous pixel mapping. Columns wrap into (-0.5, W - 0.5];
/// rows clamp to [-0.5, H - 0.5].
inline PixelCoord angles_to_pixel(double theta, double phi, const ImageDims& dims)
{
    if (!std::isfinite(theta) || !std::isfinite(phi))
        throw DomainError("non-finite angle");
    const double w = dims.width;
    const double h = dims.height;
    double i = w * (kPi - theta) / kTwoPi - 0.5;
    if (i <= -0.5 || i > w - 0.5) {
        i = std::fmod(i + 0.5, w);
        if (i <= 0.0) i += w;
        i -= 0.5;
    }
    double j = h * (kHalfPi - phi) / kPi - 0.5;
    j = std::clamp(j, -0.5, h - 0.5);
    return {i, j};
}

/// Unit direction for angles in the local frame.
inline Vec3 direction(double theta, double phi)
{
    const double cp = std::cos(phi);
    return {cp * std::cos(theta), std::sin(phi), -cp * std::sin(theta)};
}

inline Vec3 spherical_to_cartesian(const SphericalCoord& s)
{
    return direction(s.theta, s.phi) * s.d;
}

/// Quadrant-aware inverse of spherical_to_cartesian. Latitude is taken from
/// atan2 against the horizontal radius, which equals asin(y / d) but stays
/// well conditioned at the poles.
inline SphericalCoord cartesian_to_spherical(const Vec3& v)
{
    const double horizontal = std::sqrt(v.x * v.x + v.z * v.z);
    const double d = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    if (!(d > 0.0)) throw DomainError("cannot take spherical coordinates of the zero vector");
    return {std::atan2(-v.z, v.x), std::atan2(v.y, horizontal), d};
}

/// Precomputed rigid transform from one panorama's local frame to another's.
struct RelativeTransform {
    Mat3 rotation;
    Vec3 translation;

    RelativeTransform() = default;
    RelativeTransform(const Pose& src, const Pose& dst)
        : rotation(dst.rotation.transposed() * src.rotation),
          translation(dst.rotation.transposed() * (src.position - dst.position))
    {
    }

    [[nodiscard]] Vec3 apply(const Vec3& local_src) const { return rotation * local_src + translation; }
};

/// Points closer than this to the destination center are degenerate.
inline constexpr double kDegenerateDistance = 1e-12;

inline std::optional<SphericalCoord> try_reproject(const Vec3& local_src, const RelativeTransform& xf)
{
    const Vec3 p = xf.apply(local_src);
    const double horizontal = std::sqrt(p.x * p.x + p.z * p.z);
    const double d = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (!(d > kDegenerateDistance)) return std::nullopt;
    return SphericalCoord{std::atan2(-p.z, p.x), std::atan2(p.y, horizontal), d};
}

/// Moves a spherical sample seen from `src` into the local spherical frame of `dst`.
inline SphericalCoord reproject(const SphericalCoord& s, const Pose& src, const Pose& dst)
{
    const Vec3 world = src.to_world(spherical_to_cartesian(s));
    const Vec3 local = dst.to_local(world);
    if (!(local.norm() > kDegenerateDistance))
        throw DegeneratePointError("reprojected point coincides with destination center");
    return cartesian_to_spherical(local);
}

/// Per-column and per-row trigonometry for a raster, so hot loops can build
/// unit ray directions without calling sin/cos per pixel.
class DirectionTable {
public:
    explicit DirectionTable(const ImageDims& dims) : dims_(dims)
    {
        cos_theta_.resize(static_cast<size_t>(dims.width));
        sin_theta_.resize(static_cast<size_t>(dims.width));
        cos_phi_.resize(static_cast<size_t>(dims.height));
        sin_phi_.resize(static_cast<size_t>(dims.height));
        for (int i = 0; i < dims.width; ++i) {
            const double t = continuous_pixel_to_angles(i, 0, dims).theta;
            cos_theta_[static_cast<size_t>(i)] = std::cos(t);
            sin_theta_[static_cast<size_t>(i)] = std::sin(t);
        }
        for (int j = 0; j < dims.height; ++j) {
            const double p = continuous_pixel_to_angles(0, j, dims).phi;
            cos_phi_[static_cast<size_t>(j)] = std::cos(p);
            sin_phi_[static_cast<size_t>(j)] = std::sin(p);
        }
    }

    [[nodiscard]] Vec3 operator()(int i, int j) const
    {
        const double cp = cos_phi_[static_cast<size_t>(j)];
        return {cp * cos_theta_[static_cast<size_t>(i)], sin_phi_[static_cast<size_t>(j)],
                -cp * sin_theta_[static_cast<size_t>(i)]};
    }
    [[nodiscard]] const ImageDims& dims() const { return dims_; }

private:
    ImageDims dims_;
    std::vector<double> cos_theta_, sin_theta_, cos_phi_, sin_phi_;
};

} // namespace panosynth
