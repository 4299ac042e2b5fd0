#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "fracsim/core.hpp"

namespace fracsim {

// Filtered geometric predicates: fast double evaluation with a forward error
// bound, falling back to 254-bit floats when the sign is uncertain.
namespace detail {

using bigfloat = boost::multiprecision::cpp_bin_float_oct;

inline int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

inline int orient2d_exact(const Vec2& a, const Vec2& b, const Vec2& c) {
    const bigfloat ax(a.x), ay(a.y), bx(b.x), by(b.y), cx(c.x), cy(c.y);
    const bigfloat det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    if (det > 0) return 1;
    if (det < 0) return -1;
    return 0;
}

inline int incircle_exact(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const bigfloat adx = bigfloat(a.x) - bigfloat(d.x);
    const bigfloat ady = bigfloat(a.y) - bigfloat(d.y);
    const bigfloat bdx = bigfloat(b.x) - bigfloat(d.x);
    const bigfloat bdy = bigfloat(b.y) - bigfloat(d.y);
    const bigfloat cdx = bigfloat(c.x) - bigfloat(d.x);
    const bigfloat cdy = bigfloat(c.y) - bigfloat(d.y);
    const bigfloat det = (adx * adx + ady * ady) * (bdx * cdy - bdy * cdx)
                       + (bdx * bdx + bdy * bdy) * (cdx * ady - cdy * adx)
                       + (cdx * cdx + cdy * cdy) * (adx * bdy - ady * bdx);
    if (det > 0) return 1;
    if (det < 0) return -1;
    return 0;
}

} // namespace detail

// Sign of the signed area of triangle (a,b,c): +1 counterclockwise.
inline int orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
    const double detleft = (b.x - a.x) * (c.y - a.y);
    const double detright = (b.y - a.y) * (c.x - a.x);
    const double det = detleft - detright;
    const double detsum = std::abs(detleft) + std::abs(detright);
    // 4 ulps of slack on the accumulated magnitude
    const double errbound = 8.8872057372592798e-16 * detsum;
    if (det > errbound || -det > errbound) return detail::sign_of(det);
    return detail::orient2d_exact(a, b, c);
}

// +1 when d is strictly inside the circumcircle of counterclockwise (a,b,c).
inline int incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double adx = a.x - d.x, ady = a.y - d.y;
    const double bdx = b.x - d.x, bdy = b.y - d.y;
    const double cdx = c.x - d.x, cdy = c.y - d.y;

    const double bdxcdy = bdx * cdy, cdxbdy = cdx * bdy;
    const double alift = adx * adx + ady * ady;
    const double cdxady = cdx * ady, adxcdy = adx * cdy;
    const double blift = bdx * bdx + bdy * bdy;
    const double adxbdy = adx * bdy, bdxady = bdx * ady;
    const double clift = cdx * cdx + cdy * cdy;

    const double det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy)
                     + clift * (adxbdy - bdxady);
    const double permanent = (std::abs(bdxcdy) + std::abs(cdxbdy)) * alift
                           + (std::abs(cdxady) + std::abs(adxcdy)) * blift
                           + (std::abs(adxbdy) + std::abs(bdxady)) * clift;
    const double errbound = 1.1102230246251565e-15 * 10.0 * permanent;
    if (det > errbound || -det > errbound) return detail::sign_of(det);
    return detail::incircle_exact(a, b, c, d);
}

// Strict proper intersection test for open segments (a,b) and (c,d).
inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const int o1 = orient2d(a, b, c);
    const int o2 = orient2d(a, b, d);
    const int o3 = orient2d(c, d, a);
    const int o4 = orient2d(c, d, b);
    if (o1 * o2 < 0 && o3 * o4 < 0) return true;
    auto on = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return orient2d(p, q, r) == 0 && r.x >= std::min(p.x, q.x) - 0.0 &&
               r.x <= std::max(p.x, q.x) && r.y >= std::min(p.y, q.y) &&
               r.y <= std::max(p.y, q.y);
    };
    return (o1 == 0 && on(a, b, c)) || (o2 == 0 && on(a, b, d)) ||
           (o3 == 0 && on(c, d, a)) || (o4 == 0 && on(c, d, b));
}

} // namespace fracsim
