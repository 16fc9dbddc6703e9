#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace hudsim {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    constexpr bool operator==(const Vec2&) const = default;

    double norm() const { return std::hypot(x, y); }
    constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
    constexpr double cross(Vec2 o) const { return x * o.y - y * o.x; }
    /// Left-hand normal (rotated +90 degrees).
    constexpr Vec2 perp() const { return {-y, x}; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline Vec2 unit_from_heading(double heading) { return {std::cos(heading), std::sin(heading)}; }

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a <= 0.0) a += two_pi;
    return a - std::numbers::pi;
}

/// Planar footprint plus height, all in meters.
struct Extent {
    double length = 1.0;
    double width = 1.0;
    double height = 1.0;
};

struct Pose {
    Vec2 position;
    double heading = 0.0;
};

/// Oriented rectangle in the plane.
struct OrientedBox {
    Vec2 center;
    double heading = 0.0;
    double half_length = 0.5;
    double half_width = 0.5;

    std::array<Vec2, 4> corners() const {
        const Vec2 ax = unit_from_heading(heading) * half_length;
        const Vec2 ay = unit_from_heading(heading).perp() * half_width;
        return {center + ax + ay, center - ax + ay, center - ax - ay, center + ax - ay};
    }
};

inline OrientedBox make_box(const Pose& pose, const Extent& extent, double margin = 0.0) {
    return {pose.position, pose.heading, 0.5 * extent.length + margin, 0.5 * extent.width + margin};
}

/// Separating-axis overlap test for two oriented rectangles. Touching counts as overlap.
inline bool overlaps(const OrientedBox& a, const OrientedBox& b) {
    const auto project = [](const OrientedBox& box, Vec2 axis) {
        const Vec2 ax = unit_from_heading(box.heading);
        const double r = box.half_length * std::abs(ax.dot(axis)) + box.half_width * std::abs(ax.perp().dot(axis));
        const double c = box.center.dot(axis);
        return std::array<double, 2>{c - r, c + r};
    };
    const std::array<Vec2, 4> axes = {unit_from_heading(a.heading), unit_from_heading(a.heading).perp(),
                                      unit_from_heading(b.heading), unit_from_heading(b.heading).perp()};
    for (const Vec2& axis : axes) {
        const auto pa = project(a, axis);
        const auto pb = project(b, axis);
        if (pa[1] < pb[0] || pb[1] < pa[0]) return false;
    }
    return true;
}

/// Open or closed polyline parameterized by arc length.
class Polyline {
public:
    Polyline() = default;
    Polyline(std::vector<Vec2> points, bool closed) : points_(std::move(points)), closed_(closed) {
        if (closed_ && points_.size() > 1 && points_.front() != points_.back()) points_.push_back(points_.front());
        cumulative_.assign(points_.size(), 0.0);
        for (std::size_t i = 1; i < points_.size(); ++i)
            cumulative_[i] = cumulative_[i - 1] + distance(points_[i - 1], points_[i]);
    }

    bool closed() const { return closed_; }
    double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
    std::span<const Vec2> points() const { return points_; }
    std::size_t segment_count() const { return points_.empty() ? 0 : points_.size() - 1; }
    double segment_start(std::size_t seg) const { return cumulative_[seg]; }

    /// Maps any arc length onto the valid range (wrapping for closed lines, clamping otherwise).
    double normalize(double s) const {
        const double len = length();
        if (len <= 0.0) return 0.0;
        if (closed_) {
            s = std::fmod(s, len);
            return s < 0.0 ? s + len : s;
        }
        return std::clamp(s, 0.0, len);
    }

    std::size_t segment_at(double s) const {
        s = normalize(s);
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
        const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - cumulative_.begin()) - 1));
        return std::min(idx, segment_count() - 1);
    }

    Vec2 point_at(double s) const {
        s = normalize(s);
        const std::size_t seg = segment_at(s);
        const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
        const double f = seg_len > 0.0 ? (s - cumulative_[seg]) / seg_len : 0.0;
        return points_[seg] + (points_[seg + 1] - points_[seg]) * f;
    }

    double heading_at(double s) const {
        const std::size_t seg = segment_at(s);
        const Vec2 d = points_[seg + 1] - points_[seg];
        return std::atan2(d.y, d.x);
    }

    struct Projection {
        double s = 0.0;        ///< arc length of the closest point
        double lateral = 0.0;  ///< signed offset, positive to the left of travel
        std::size_t segment = 0;
    };

    /// Closest point on the line. When `hint` is given, only segments within `window` meters of it are searched.
    Projection project(Vec2 p, std::optional<double> hint = std::nullopt, double window = 60.0) const {
        Projection best;
        double best_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t seg = 0; seg < segment_count(); ++seg) {
            if (hint) {
                const double mid = 0.5 * (cumulative_[seg] + cumulative_[seg + 1]);
                double gap = std::abs(mid - *hint);
                if (closed_) gap = std::min(gap, length() - gap);
                if (gap > window + 0.5 * (cumulative_[seg + 1] - cumulative_[seg])) continue;
            }
            const Vec2 a = points_[seg];
            const Vec2 d = points_[seg + 1] - a;
            const double len2 = d.dot(d);
            const double f = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
            const Vec2 q = a + d * f;
            const double d2 = (p - q).dot(p - q);
            if (d2 < best_d2) {
                best_d2 = d2;
                best.s = cumulative_[seg] + f * std::sqrt(len2);
                best.segment = seg;
                best.lateral = d.cross(p - a) >= 0.0 ? std::sqrt(d2) : -std::sqrt(d2);
            }
        }
        return best;
    }

private:
    std::vector<Vec2> points_;
    std::vector<double> cumulative_;
    bool closed_ = false;
};

}  // namespace hudsim
