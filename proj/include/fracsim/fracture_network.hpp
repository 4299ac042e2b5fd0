#pragma once

#include "fracsim/core.hpp"
#include "fracsim/predicates.hpp"

namespace fracsim {

// Open polyline fracture, ordered vertices. Tip 0 is the first vertex,
// tip 1 the last.
struct Fracture {
    std::vector<Vec2> vertices;

    double length() const {
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < vertices.size(); ++i)
            s += dist(vertices[i], vertices[i + 1]);
        return s;
    }
    const Vec2& tip(int end) const { return end == 0 ? vertices.front() : vertices.back(); }
};

struct FractureNetwork {
    std::vector<Fracture> fractures;

    // Fractures are non-intersecting open polylines strictly inside the
    // domain; min_gap rejects near-tangent configurations.
    void validate(const Rect& domain, double min_gap) const {
        for (std::size_t i = 0; i < fractures.size(); ++i) {
            const auto& f = fractures[i];
            FRACSIM_REQUIRE(f.vertices.size() >= 2, "fracture needs at least 2 vertices");
            for (std::size_t k = 0; k + 1 < f.vertices.size(); ++k)
                FRACSIM_REQUIRE(dist(f.vertices[k], f.vertices[k + 1]) > 0.0,
                                "zero-length fracture segment");
            for (const auto& p : f.vertices)
                FRACSIM_REQUIRE(domain.strictly_inside(p, 0.0),
                                "fracture vertex not strictly inside domain");
            // self-proximity of non-adjacent segments
            for (std::size_t a = 0; a + 1 < f.vertices.size(); ++a)
                for (std::size_t b = a + 2; b + 1 < f.vertices.size(); ++b) {
                    FRACSIM_REQUIRE(!segments_intersect(f.vertices[a], f.vertices[a + 1],
                                                        f.vertices[b], f.vertices[b + 1]),
                                    "self-intersecting fracture");
                    if (segment_gap(f.vertices[a], f.vertices[a + 1], f.vertices[b],
                                    f.vertices[b + 1]) < min_gap && b > a + 2)
                        throw Error("fracsim: fracture self-proximity below h/4");
                }
        }
        for (std::size_t i = 0; i < fractures.size(); ++i)
            for (std::size_t j = i + 1; j < fractures.size(); ++j)
                for (std::size_t a = 0; a + 1 < fractures[i].vertices.size(); ++a)
                    for (std::size_t b = 0; b + 1 < fractures[j].vertices.size(); ++b) {
                        const Vec2 &p0 = fractures[i].vertices[a],
                                   &p1 = fractures[i].vertices[a + 1];
                        const Vec2 &q0 = fractures[j].vertices[b],
                                   &q1 = fractures[j].vertices[b + 1];
                        FRACSIM_REQUIRE(!segments_intersect(p0, p1, q0, q1),
                                        "intersecting fractures");
                        FRACSIM_REQUIRE(segment_gap(p0, p1, q0, q1) >= min_gap,
                                        "fractures closer than h/4");
                    }
    }

private:
    static double segment_gap(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                              const Vec2& b1) {
        return std::min(std::min(point_segment_distance(a0, b0, b1),
                                 point_segment_distance(a1, b0, b1)),
                        std::min(point_segment_distance(b0, a0, a1),
                                 point_segment_distance(b1, a0, a1)));
    }
};

} // namespace fracsim
