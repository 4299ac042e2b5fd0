#pragma once

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "fracsim/core.hpp"
#include "fracsim/predicates.hpp"

namespace fracsim {

// Incremental Bowyer-Watson Delaunay triangulation with constrained-edge
// insertion. Input points must be pairwise distinct. Constrained segments
// must not pass through any third input point.
class Delaunay {
public:
    explicit Delaunay(std::vector<Vec2> points) : pts_(std::move(points)) {
        FRACSIM_REQUIRE(pts_.size() >= 3, "need at least 3 points");
        build();
    }

    void insert_segment(int a, int b) {
        FRACSIM_REQUIRE(a != b, "degenerate constraint");
        if (edge_exists(a, b)) return;
        enforce_edge(a, b);
    }

    // Triangles not touching the super-triangle, CCW.
    std::vector<std::array<int, 3>> triangles() const {
        const int n = static_cast<int>(pts_.size()) - 3;
        std::vector<std::array<int, 3>> out;
        out.reserve(tris_.size());
        for (std::size_t t = 0; t < tris_.size(); ++t) {
            if (!alive_[t]) continue;
            const auto& v = tris_[t].v;
            if (v[0] >= n || v[1] >= n || v[2] >= n) continue;
            out.push_back({v[0], v[1], v[2]});
        }
        return out;
    }

private:
    struct Tri {
        std::array<int, 3> v{};  // CCW
        std::array<int, 3> nb{}; // neighbor opposite v[i]; -1 none
    };

    std::vector<Vec2> pts_;
    std::vector<Tri> tris_;
    std::vector<char> alive_;
    std::unordered_map<std::uint64_t, int> edge_tri_; // directed edge (a,b) -> tri with CCW edge a->b
    int last_tri_ = 0;

    static std::uint64_t ekey(int a, int b) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
               static_cast<std::uint32_t>(b);
    }

    void reg_tri(int t) {
        const auto& v = tris_[t].v;
        for (int i = 0; i < 3; ++i) edge_tri_[ekey(v[i], v[(i + 1) % 3])] = t;
    }
    void unreg_tri(int t) {
        const auto& v = tris_[t].v;
        for (int i = 0; i < 3; ++i) {
            auto it = edge_tri_.find(ekey(v[i], v[(i + 1) % 3]));
            if (it != edge_tri_.end() && it->second == t) edge_tri_.erase(it);
        }
    }

    bool edge_exists(int a, int b) const {
        return edge_tri_.count(ekey(a, b)) || edge_tri_.count(ekey(b, a));
    }

    int edge_index_in(int t, int a, int b) const {
        const auto& v = tris_[t].v;
        for (int i = 0; i < 3; ++i)
            if ((v[(i + 1) % 3] == a && v[(i + 2) % 3] == b) ||
                (v[(i + 1) % 3] == b && v[(i + 2) % 3] == a))
                return i;
        return -1;
    }

    void link(int t, int i, int u) {
        tris_[t].nb[i] = u;
        if (u >= 0) {
            const int a = tris_[t].v[(i + 1) % 3];
            const int b = tris_[t].v[(i + 2) % 3];
            const int j = edge_index_in(u, a, b);
            FRACSIM_REQUIRE(j >= 0, "adjacency link failure");
            tris_[u].nb[j] = t;
        }
    }

    void build() {
        const int n = static_cast<int>(pts_.size());
        Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
        for (const auto& p : pts_) {
            lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y);
            hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y);
        }
        const double d = std::max(hi.x - lo.x, hi.y - lo.y) + 1.0;
        const Vec2 c = 0.5 * (lo + hi);
        pts_.push_back({c.x - 50.0 * d, c.y - 40.0 * d});
        pts_.push_back({c.x + 50.0 * d, c.y - 40.0 * d});
        pts_.push_back({c.x, c.y + 60.0 * d});

        tris_.push_back({{n, n + 1, n + 2}, {-1, -1, -1}});
        alive_.push_back(1);
        reg_tri(0);

        // spatially coherent insertion order: bin rows
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        const int nbins = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n) / 2.0)));
        auto bin_of = [&](int i) {
            int bx = std::min(nbins - 1, static_cast<int>((pts_[i].x - lo.x) / d * nbins));
            int by = std::min(nbins - 1, static_cast<int>((pts_[i].y - lo.y) / d * nbins));
            if (by % 2) bx = nbins - 1 - bx;
            return by * nbins + bx;
        };
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return bin_of(a) < bin_of(b); });

        for (int i : order) insert_point(i);
    }

    int locate(const Vec2& p, int hint) const {
        int t = hint;
        if (t < 0 || t >= static_cast<int>(tris_.size()) || !alive_[t]) {
            t = -1;
            for (int k = static_cast<int>(tris_.size()) - 1; k >= 0; --k)
                if (alive_[k]) { t = k; break; }
        }
        int guard = 0;
        const int maxsteps = static_cast<int>(tris_.size()) * 4 + 64;
        while (true) {
            FRACSIM_REQUIRE(++guard <= maxsteps, "point location failed to converge");
            const auto& v = tris_[t].v;
            int next = -1;
            for (int i = 0; i < 3; ++i) {
                const int a = v[(i + 1) % 3], b = v[(i + 2) % 3];
                if (orient2d(pts_[a], pts_[b], p) < 0) { next = tris_[t].nb[i]; break; }
            }
            if (next < 0) return t;
            t = next;
        }
    }

    void insert_point(int ip) {
        const Vec2& p = pts_[ip];
        const int t0 = locate(p, last_tri_);

        // grow the cavity of triangles whose circumcircle contains p
        std::vector<int> cavity;
        std::vector<char> in_cavity(tris_.size(), 0);
        std::vector<int> stack{t0};
        in_cavity[t0] = 1;
        while (!stack.empty()) {
            const int t = stack.back();
            stack.pop_back();
            cavity.push_back(t);
            for (int i = 0; i < 3; ++i) {
                const int u = tris_[t].nb[i];
                if (u < 0 || in_cavity[u]) continue;
                const auto& w = tris_[u].v;
                if (incircle(pts_[w[0]], pts_[w[1]], pts_[w[2]], p) > 0) {
                    in_cavity[u] = 1;
                    stack.push_back(u);
                }
            }
        }

        // boundary edges of the cavity (CCW as seen from inside)
        struct BEdge { int a, b, outside; };
        std::vector<BEdge> bnd;
        for (int t : cavity) {
            for (int i = 0; i < 3; ++i) {
                const int u = tris_[t].nb[i];
                if (u >= 0 && in_cavity[u]) continue;
                bnd.push_back({tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3], u});
            }
        }
        for (int t : cavity) { unreg_tri(t); alive_[t] = 0; }

        std::vector<int> fresh;
        fresh.reserve(bnd.size());
        for (const auto& e : bnd) {
            const int t = new_tri({ip, e.a, e.b});
            fresh.push_back(t);
            link(t, 0, e.outside);
        }
        // stitch fan neighbors via directed-edge map
        std::unordered_map<std::uint64_t, std::pair<int, int>> half; // (v_from,v_to)->(tri, idx)
        for (int t : fresh) {
            const auto& v = tris_[t].v;
            half[ekey(v[1], v[0])] = {t, 2}; // edge opposite v[2] is (v0,v1)
            half[ekey(v[0], v[2])] = {t, 1}; // edge opposite v[1] is (v2,v0)
        }
        for (int t : fresh) {
            const auto& v = tris_[t].v;
            if (tris_[t].nb[2] < 0) {
                auto it = half.find(ekey(v[0], v[1]));
                if (it != half.end()) tris_[t].nb[2] = it->second.first;
            }
            if (tris_[t].nb[1] < 0) {
                auto it = half.find(ekey(v[2], v[0]));
                if (it != half.end()) tris_[t].nb[1] = it->second.first;
            }
        }
        last_tri_ = fresh.empty() ? last_tri_ : fresh.back();
    }

    int new_tri(std::array<int, 3> v) {
        if (orient2d(pts_[v[0]], pts_[v[1]], pts_[v[2]]) < 0) std::swap(v[1], v[2]);
        tris_.push_back({v, {-1, -1, -1}});
        alive_.push_back(1);
        const int t = static_cast<int>(tris_.size()) - 1;
        reg_tri(t);
        return t;
    }

    // Remove all triangles crossed by segment (a,b) and retriangulate the two
    // resulting pseudo-polygons so that (a,b) becomes an edge.
    void enforce_edge(int a, int b) {
        const Vec2 pa = pts_[a], pb = pts_[b];

        // find the triangle at a whose opposite edge is crossed by (a,b)
        int t = -1, eo = -1;
        for (const auto& kv : edge_tri_) {
            const int tt = kv.second;
            if (!alive_[tt]) continue;
            const auto& v = tris_[tt].v;
            for (int i = 0; i < 3; ++i) {
                if (v[i] != a) continue;
                const int u = v[(i + 1) % 3], w = v[(i + 2) % 3];
                if (orient2d(pa, pb, pts_[u]) > 0 && orient2d(pa, pb, pts_[w]) < 0 &&
                    segments_intersect(pa, pb, pts_[u], pts_[w])) {
                    t = tt; eo = i;
                }
            }
            if (t >= 0) break;
        }
        FRACSIM_REQUIRE(t >= 0, "constraint enforcement: no crossing triangle at endpoint");

        std::vector<int> dead{t};
        std::vector<int> upper{tris_[t].v[(eo + 1) % 3]}; // side with orient > 0
        std::vector<int> lower{tris_[t].v[(eo + 2) % 3]};
        int cur = tris_[t].nb[eo];
        int ea = tris_[t].v[(eo + 1) % 3], eb = tris_[t].v[(eo + 2) % 3];
        int guard = 0;
        while (true) {
            FRACSIM_REQUIRE(cur >= 0, "constraint crossed the hull");
            FRACSIM_REQUIRE(++guard < 100000, "constraint walk failed");
            dead.push_back(cur);
            const int j = edge_index_in(cur, ea, eb);
            const int apex = tris_[cur].v[j];
            if (apex == b) break;
            const int s = orient2d(pa, pb, pts_[apex]);
            FRACSIM_REQUIRE(s != 0, "input point lies on a constrained segment");
            if (s > 0) {
                upper.push_back(apex);
                // next crossed edge is (apex, eb)
                const int k = edge_index_in(cur, apex, eb);
                cur = tris_[cur].nb[k];
                ea = apex;
            } else {
                lower.push_back(apex);
                const int k = edge_index_in(cur, ea, apex);
                cur = tris_[cur].nb[k];
                eb = apex;
            }
        }

        // outside neighbor of every hole boundary edge, for relinking
        std::unordered_map<std::uint64_t, int> outside;
        std::unordered_set<int> dead_set(dead.begin(), dead.end());
        for (int tt : dead) {
            for (int i = 0; i < 3; ++i) {
                const int u = tris_[tt].nb[i];
                if (u >= 0 && dead_set.count(u)) continue;
                outside[ekey(tris_[tt].v[(i + 1) % 3], tris_[tt].v[(i + 2) % 3])] = u;
            }
        }
        for (int tt : dead) { unreg_tri(tt); alive_[tt] = 0; }

        std::vector<int> created;
        triangulate_pseudo(a, b, upper, created);
        std::reverse(lower.begin(), lower.end());
        triangulate_pseudo(b, a, lower, created);

        // relink: edges of created triangles against 'outside' map and each other
        std::unordered_map<std::uint64_t, std::pair<int, int>> half;
        for (int tt : created) {
            const auto& v = tris_[tt].v;
            for (int i = 0; i < 3; ++i)
                half[ekey(v[(i + 1) % 3], v[(i + 2) % 3])] = {tt, i};
        }
        for (int tt : created) {
            const auto& v = tris_[tt].v;
            for (int i = 0; i < 3; ++i) {
                const int va = v[(i + 1) % 3], vb = v[(i + 2) % 3];
                auto in = half.find(ekey(vb, va));
                if (in != half.end()) {
                    tris_[tt].nb[i] = in->second.first;
                } else {
                    auto out = outside.find(ekey(va, vb));
                    int u = (out != outside.end()) ? out->second : -1;
                    if (out == outside.end()) {
                        auto out2 = outside.find(ekey(vb, va));
                        if (out2 != outside.end()) u = out2->second;
                    }
                    tris_[tt].nb[i] = u;
                    if (u >= 0) {
                        const int j = edge_index_in(u, va, vb);
                        FRACSIM_REQUIRE(j >= 0, "relink failure");
                        tris_[u].nb[j] = tt;
                    }
                }
            }
        }
    }

    // Delaunay triangulation of the pseudo-polygon bounded by edge (a,b) and
    // the chain 'chain' (ordered from a to b on the positive side of a->b).
    void triangulate_pseudo(int a, int b, const std::vector<int>& chain,
                            std::vector<int>& created) {
        if (chain.empty()) return;
        if (chain.size() == 1) {
            created.push_back(new_tri({a, b, chain[0]}));
            return;
        }
        std::size_t ci = 0;
        for (std::size_t i = 1; i < chain.size(); ++i) {
            if (incircle(pts_[a], pts_[b], pts_[chain[ci]], pts_[chain[i]]) > 0) ci = i;
        }
        created.push_back(new_tri({a, b, chain[ci]}));
        triangulate_pseudo(a, chain[ci], std::vector<int>(chain.begin(), chain.begin() + ci),
                           created);
        triangulate_pseudo(chain[ci], b,
                           std::vector<int>(chain.begin() + ci + 1, chain.end()), created);
    }
};

} // namespace fracsim
