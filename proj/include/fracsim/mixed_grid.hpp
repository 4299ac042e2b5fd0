#pragma once

#include <functional>
#include <map>
#include <set>
#include <unordered_map>

#include "fracsim/delaunay.hpp"
#include "fracsim/fracture_network.hpp"
#include "fracsim/trimesh.hpp"

namespace fracsim {

// One-dimensional grid on a fracture, together with its two interface sides.
// Cell c spans path vertices c and c+1. The + side is the side the cell
// normal (tangent rotated a quarter turn counterclockwise) points into.
struct FractureGrid1D {
    std::vector<Vec2> verts;
    std::vector<int> nodes_plus;  // matrix node ids along the path, + side copies
    std::vector<int> nodes_minus; // - side copies; tips share the + id
    std::vector<int> face_plus;   // matrix face per cell, + side
    std::vector<int> face_minus;
    std::vector<double> cell_len;
    std::vector<Vec2> tangent;
    std::vector<Vec2> normal;
    std::vector<Vec2> cell_center;
    std::vector<double> arc_begin;

    int n_cells() const { return static_cast<int>(cell_len.size()); }
    double total_length() const {
        return arc_begin.empty() ? 0.0 : arc_begin.back() + cell_len.back();
    }
    double arc_of_vertex(int k) const {
        return k < n_cells() ? arc_begin[k] : total_length();
    }
};

struct MixedDimGrid {
    Rect domain;
    double h = 0.0;
    TriMesh mesh;
    FractureNetwork network; // current polylines (user-level vertices)
    std::vector<FractureGrid1D> frac;
    bool is_split = false;

    int tip_node(int fi, int end) const {
        const auto& g = frac[fi];
        return end == 0 ? g.nodes_plus.front() : g.nodes_plus.back();
    }
    Vec2 tip_pos(int fi, int end) const {
        const auto& g = frac[fi];
        return end == 0 ? g.verts.front() : g.verts.back();
    }
    // unit vector pointing ahead of the tip (straight prolongation direction)
    Vec2 tip_ahead(int fi, int end) const {
        const auto& g = frac[fi];
        if (end == 0) return (g.verts[0] - g.verts[1]).normalized();
        const int n = static_cast<int>(g.verts.size());
        return (g.verts[n - 1] - g.verts[n - 2]).normalized();
    }
};

namespace meshdetail {

// Laplacian smoothing with inversion guard: a node move that inverts an
// incident triangle is retried at half relaxation, then reverted.
inline void laplacian_smooth(TriMesh& mesh, const std::vector<int>& movable,
                             int sweeps, double relax) {
    std::vector<std::vector<int>> nbr(mesh.nodes.size());
    std::set<std::pair<int, int>> seen;
    for (const auto& f : mesh.faces) {
        if (seen.insert({f[0], f[1]}).second) {
            nbr[f[0]].push_back(f[1]);
            nbr[f[1]].push_back(f[0]);
        }
    }
    for (int s = 0; s < sweeps; ++s) {
        for (int n : movable) {
            if (nbr[n].empty()) continue;
            Vec2 avg{};
            for (int m : nbr[n]) avg += mesh.nodes[m];
            avg = avg / static_cast<double>(nbr[n].size());
            const Vec2 old = mesh.nodes[n];
            double r = relax;
            bool placed = false;
            for (int attempt = 0; attempt < 4 && !placed; ++attempt, r *= 0.5) {
                mesh.nodes[n] = old + r * (avg - old);
                placed = true;
                for (int t : mesh.node_tris[n]) {
                    const auto& v = mesh.tris[t];
                    if (triangle_area(mesh.nodes[v[0]], mesh.nodes[v[1]],
                                      mesh.nodes[v[2]]) <= 0.0) {
                        placed = false;
                        break;
                    }
                }
            }
            if (!placed) mesh.nodes[n] = old;
        }
    }
    mesh.build_topology();
}

// CCW angular interval test: is direction d inside the sector swept
// counterclockwise from a to b?
inline bool in_ccw_sector(const Vec2& a, const Vec2& b, const Vec2& d) {
    const double ta = std::atan2(a.y, a.x);
    double tb = std::atan2(b.y, b.x) - ta;
    double td = std::atan2(d.y, d.x) - ta;
    const double two_pi = 2.0 * kPi;
    while (tb <= 0.0) tb += two_pi;
    while (td < 0.0) td += two_pi;
    return td < tb;
}

// Side of the fracture path at interior path vertex k: +1 for the side the
// cell normals point into. 'probe' is a direction from the vertex.
inline int path_side_at_vertex(const std::vector<Vec2>& verts, int k, const Vec2& probe) {
    const int n = static_cast<int>(verts.size());
    FRACSIM_REQUIRE(k > 0 && k < n - 1, "side query only at interior path vertices");
    const Vec2 u_next = (verts[k + 1] - verts[k]).normalized();
    const Vec2 u_prev = (verts[k - 1] - verts[k]).normalized();
    return in_ccw_sector(u_next, u_prev, probe) ? 1 : -1;
}

// Split triangle t at its centroid into three. Returns the new node id; the
// two extra triangles are appended. Topology must be rebuilt afterwards.
inline int split_triangle_at_centroid(TriMesh& mesh, int t) {
    const auto v = mesh.tris[t];
    const int c_id = mesh.n_nodes();
    mesh.nodes.push_back((mesh.nodes[v[0]] + mesh.nodes[v[1]] + mesh.nodes[v[2]]) / 3.0);
    mesh.tris[t] = {v[0], v[1], c_id};
    mesh.tris.push_back({v[1], v[2], c_id});
    mesh.tris.push_back({v[2], v[0], c_id});
    return c_id;
}

struct PointPool {
    std::vector<Vec2> pts;
    std::map<std::pair<long long, long long>, int> snap; // 1e-9 m snap grid

    int add(const Vec2& p) {
        const auto key = std::make_pair(static_cast<long long>(std::llround(p.x * 1e9)),
                                        static_cast<long long>(std::llround(p.y * 1e9)));
        auto it = snap.find(key);
        if (it != snap.end()) return it->second;
        const int id = static_cast<int>(pts.size());
        pts.push_back(p);
        snap.emplace(key, id);
        return id;
    }
    int lookup(const Vec2& p) const {
        const auto key = std::make_pair(static_cast<long long>(std::llround(p.x * 1e9)),
                                        static_cast<long long>(std::llround(p.y * 1e9)));
        auto it = snap.find(key);
        return it == snap.end() ? -1 : it->second;
    }
};

} // namespace meshdetail

using SizeField = std::function<double(const Vec2&)>;

inline void finalize_geometry(FractureGrid1D& g) {
    const int n = static_cast<int>(g.face_plus.size());
    FRACSIM_REQUIRE(static_cast<int>(g.verts.size()) == n + 1, "1D grid vertex count");
    g.cell_len.assign(n, 0.0);
    g.tangent.assign(n, Vec2{});
    g.normal.assign(n, Vec2{});
    g.cell_center.assign(n, Vec2{});
    g.arc_begin.assign(n, 0.0);
    double arc = 0.0;
    for (int c = 0; c < n; ++c) {
        const Vec2 a = g.verts[c], b = g.verts[c + 1];
        g.cell_len[c] = dist(a, b);
        g.tangent[c] = (b - a) / g.cell_len[c];
        g.normal[c] = g.tangent[c].rot90();
        g.cell_center[c] = 0.5 * (a + b);
        g.arc_begin[c] = arc;
        arc += g.cell_len[c];
    }
}

// Conforming triangulation of a rectangle with embedded fracture polylines.
// Every fracture vertex becomes a node and every fracture segment a union of
// mesh faces. A size field grades the interior point lattice; by default the
// mesh is uniform at size h.
inline MixedDimGrid triangulate_conforming(const Rect& domain,
                                           const FractureNetwork& network, double h,
                                           const SizeField& size = nullptr) {
    FRACSIM_REQUIRE(h > 0.0, "mesh size must be positive");
    FRACSIM_REQUIRE(domain.width() > 0.0 && domain.height() > 0.0, "empty domain");
    network.validate(domain, h / 4.0);

    meshdetail::PointPool pool;
    std::vector<std::vector<int>> frac_path_ids(network.fractures.size());

    // fracture points, subdivided to ~h
    for (std::size_t fi = 0; fi < network.fractures.size(); ++fi) {
        const auto& f = network.fractures[fi];
        auto& ids = frac_path_ids[fi];
        ids.push_back(pool.add(f.vertices[0]));
        for (std::size_t s = 0; s + 1 < f.vertices.size(); ++s) {
            const Vec2 a = f.vertices[s], b = f.vertices[s + 1];
            const double len = dist(a, b);
            const double hloc = size ? std::min(size(0.5 * (a + b)), h) : h;
            const int nsub = std::max(1, static_cast<int>(std::llround(len / hloc)));
            for (int k = 1; k <= nsub; ++k) {
                const int id = pool.add(a + (static_cast<double>(k) / nsub) * (b - a));
                if (id != ids.back()) ids.push_back(id);
            }
        }
        FRACSIM_REQUIRE(ids.size() >= 3,
                        "fracture under-resolved: shorten h so each fracture has >= 2 faces");
    }
    const int n_frac_pts = static_cast<int>(pool.pts.size());

    // boundary points, jittered along each side
    auto add_side = [&](Vec2 a, Vec2 b, std::uint64_t seed) {
        const double len = dist(a, b);
        const double hloc = size ? size(0.5 * (a + b)) : h;
        const int n = std::max(1, static_cast<int>(std::ceil(len / hloc)));
        for (int k = 1; k < n; ++k) {
            const double jit = 0.05 * hash_unit(seed, static_cast<std::uint64_t>(k));
            const double t = (k + jit) / n;
            pool.add(a + t * (b - a));
        }
    };
    pool.add({domain.x0, domain.y0});
    pool.add({domain.x1, domain.y0});
    pool.add({domain.x1, domain.y1});
    pool.add({domain.x0, domain.y1});
    add_side({domain.x0, domain.y0}, {domain.x1, domain.y0}, 11);
    add_side({domain.x1, domain.y0}, {domain.x1, domain.y1}, 12);
    add_side({domain.x1, domain.y1}, {domain.x0, domain.y1}, 13);
    add_side({domain.x0, domain.y1}, {domain.x0, domain.y0}, 14);

    // fracture segments for proximity pruning
    std::vector<std::array<Vec2, 2>> segs;
    for (const auto& f : network.fractures)
        for (std::size_t s = 0; s + 1 < f.vertices.size(); ++s)
            segs.push_back({f.vertices[s], f.vertices[s + 1]});
    auto near_fracture = [&](const Vec2& p, double r) {
        for (const auto& s : segs) {
            if (p.x < std::min(s[0].x, s[1].x) - r || p.x > std::max(s[0].x, s[1].x) + r ||
                p.y < std::min(s[0].y, s[1].y) - r || p.y > std::max(s[0].y, s[1].y) + r)
                continue;
            if (point_segment_distance(p, s[0], s[1]) < r) return true;
        }
        return false;
    };

    auto add_interior = [&](const Vec2& q, double spacing, std::uint64_t k) {
        Vec2 p = q;
        p.x += 0.08 * spacing * hash_unit(21, k);
        p.y += 0.08 * spacing * hash_unit(22, k);
        if (!domain.strictly_inside(p, 0.45 * spacing)) return;
        if (near_fracture(p, 0.55 * spacing)) return;
        pool.add(p);
    };

    if (!size) {
        // hexagonal lattice at spacing h
        const double dy = h * std::sqrt(3.0) / 2.0;
        const int nrow = static_cast<int>(std::floor(domain.height() / dy));
        std::uint64_t k = 0;
        for (int r = 1; r < nrow; ++r) {
            const double y = domain.y0 + r * dy;
            const double x_off = (r % 2) ? 0.5 * h : 0.0;
            const int ncol = static_cast<int>(std::floor(domain.width() / h)) + 1;
            for (int ci = 0; ci <= ncol; ++ci) {
                add_interior({domain.x0 + x_off + ci * h, y}, h, ++k);
            }
        }
    } else {
        // nested square lattices select the level matching the local size
        double hmax = h;
        int levels = 0;
        {
            const Vec2 corners[4] = {{domain.x0, domain.y0}, {domain.x1, domain.y0},
                                     {domain.x0, domain.y1}, {domain.x1, domain.y1}};
            for (const auto& c : corners) hmax = std::max(hmax, size(c));
            hmax = std::max(hmax, size({0.5 * (domain.x0 + domain.x1),
                                        0.5 * (domain.y0 + domain.y1)}));
            while (h * std::pow(2.0, levels) < hmax) ++levels;
        }
        std::uint64_t k = 0;
        for (int L = 0; L <= levels; ++L) {
            const double s = h * std::pow(2.0, L);
            const int nx = static_cast<int>(std::floor(domain.width() / s));
            const int ny = static_cast<int>(std::floor(domain.height() / s));
            for (int j = 0; j <= ny; ++j)
                for (int i = 0; i <= nx; ++i) {
                    const Vec2 q{domain.x0 + (i + 0.5 * (j % 2)) * s, domain.y0 + j * s};
                    ++k;
                    const double want = std::clamp(size(q), h, hmax);
                    const int lvl = std::clamp(
                        static_cast<int>(std::floor(std::log2(want / h) + 0.5)), 0, levels);
                    if (lvl != L) continue;
                    add_interior(q, s, k);
                }
        }
    }

    Delaunay dt(pool.pts);
    for (const auto& ids : frac_path_ids)
        for (std::size_t k = 0; k + 1 < ids.size(); ++k)
            dt.insert_segment(ids[k], static_cast<int>(ids[k + 1]));

    MixedDimGrid grid;
    grid.domain = domain;
    grid.h = h;
    grid.network = network;
    grid.mesh.nodes = pool.pts;
    grid.mesh.tris = dt.triangles();
    grid.mesh.build_topology();

    // quality smoothing of unconstrained interior nodes
    {
        std::vector<char> fixed(grid.mesh.nodes.size(), 0);
        for (int i = 0; i < n_frac_pts; ++i) fixed[i] = 1;
        const double tol = 1e-12 * std::max(domain.width(), domain.height());
        for (std::size_t i = 0; i < grid.mesh.nodes.size(); ++i) {
            const Vec2& p = grid.mesh.nodes[i];
            if (std::abs(p.x - domain.x0) < tol || std::abs(p.x - domain.x1) < tol ||
                std::abs(p.y - domain.y0) < tol || std::abs(p.y - domain.y1) < tol)
                fixed[i] = 1;
        }
        std::vector<int> movable;
        for (std::size_t i = 0; i < grid.mesh.nodes.size(); ++i)
            if (!fixed[i]) movable.push_back(static_cast<int>(i));
        meshdetail::laplacian_smooth(grid.mesh, movable, 2, 0.5);
    }

    // record unsplit 1D paths
    grid.frac.resize(network.fractures.size());
    for (std::size_t fi = 0; fi < network.fractures.size(); ++fi) {
        auto& g = grid.frac[fi];
        const auto& ids = frac_path_ids[fi];
        g.nodes_plus = ids;
        g.nodes_minus = ids;
        for (int id : ids) g.verts.push_back(grid.mesh.nodes[id]);
        for (std::size_t k = 0; k + 1 < ids.size(); ++k) {
            const int f = grid.mesh.find_face(ids[k], ids[k + 1]);
            FRACSIM_REQUIRE(f >= 0, "conformity lost: fracture segment is not a mesh face");
            g.face_plus.push_back(f);
            g.face_minus.push_back(f);
        }
        finalize_geometry(g);
    }
    return grid;
}

// Duplicate nodes and faces along every fracture path: interior path nodes
// get one copy per side, tips stay single, and each fracture receives its 1D
// cell grid with matched +/- interface faces.
inline MixedDimGrid split_along_fractures(const MixedDimGrid& unsplit) {
    FRACSIM_REQUIRE(!unsplit.is_split, "grid already split");
    MixedDimGrid grid = unsplit;
    if (grid.frac.empty()) {
        grid.is_split = true;
        return grid;
    }
    TriMesh& mesh = grid.mesh;

    for (auto& g : grid.frac) {
        const int n = static_cast<int>(g.nodes_plus.size());
        FRACSIM_REQUIRE(n >= 3, "fracture path needs at least 2 faces to split");
        // conformity of the input path
        for (int k = 0; k + 1 < n; ++k)
            FRACSIM_REQUIRE(mesh.find_face(g.nodes_plus[k], g.nodes_plus[k + 1]) >= 0,
                            "non-conforming grid: missing fracture path edge");

        g.nodes_minus = g.nodes_plus;
        for (int k = 1; k + 1 < n; ++k) {
            const int node = g.nodes_plus[k];
            const int prev_plus = g.nodes_plus[k - 1];
            const int prev_minus = g.nodes_minus[k - 1];
            const int next_plus = g.nodes_plus[k + 1];

            const auto& inc = mesh.node_tris[node];
            // seed: triangle containing the previous path edge, centroid on + side
            const Vec2 a = g.verts[k - 1], b = g.verts[k];
            const Vec2 m = (b - a).rot90().normalized();
            int seed = -1;
            for (int t : inc) {
                const auto& v = mesh.tris[t];
                bool has_prev = false;
                for (int i = 0; i < 3; ++i) has_prev |= (v[i] == prev_plus);
                if (!has_prev) continue;
                const Vec2 c = (mesh.nodes[v[0]] + mesh.nodes[v[1]] + mesh.nodes[v[2]]) / 3.0;
                if (m.dot(c - b) > 0.0) { seed = t; break; }
            }
            FRACSIM_REQUIRE(seed >= 0, "split: no plus-side seed triangle");

            // flood fill blocked by the two path edges (either side's copies)
            auto blocked = [&](int other) {
                return other == prev_plus || other == prev_minus || other == next_plus;
            };
            std::vector<int> group{seed};
            std::vector<int> stack{seed};
            std::set<int> in_group{seed};
            while (!stack.empty()) {
                const int t = stack.back();
                stack.pop_back();
                const auto& v = mesh.tris[t];
                int li = -1;
                for (int i = 0; i < 3; ++i)
                    if (v[i] == node) li = i;
                FRACSIM_REQUIRE(li >= 0, "split: incidence corrupted");
                for (int other : {v[(li + 1) % 3], v[(li + 2) % 3]}) {
                    if (blocked(other)) continue;
                    for (int u : inc) {
                        if (in_group.count(u)) continue;
                        const auto& w = mesh.tris[u];
                        bool has_node = false, has_other = false;
                        for (int i = 0; i < 3; ++i) {
                            has_node |= (w[i] == node);
                            has_other |= (w[i] == other);
                        }
                        if (has_node && has_other) {
                            in_group.insert(u);
                            group.push_back(u);
                            stack.push_back(u);
                        }
                    }
                }
            }
            FRACSIM_REQUIRE(group.size() < inc.size(),
                            "split: flood fill crossed the fracture path");

            const int minus_id = mesh.n_nodes();
            mesh.nodes.push_back(mesh.nodes[node]);
            for (int t : inc) {
                if (in_group.count(t)) continue; // + side keeps the original id
                for (int i = 0; i < 3; ++i)
                    if (mesh.tris[t][i] == node) mesh.tris[t][i] = minus_id;
            }
            g.nodes_minus[k] = minus_id;
        }
    }

    mesh.build_topology();

    for (auto& g : grid.frac) {
        const int nc = static_cast<int>(g.face_plus.size());
        for (int c = 0; c < nc; ++c) {
            const int fp = mesh.find_face(g.nodes_plus[c], g.nodes_plus[c + 1]);
            const int fm = mesh.find_face(g.nodes_minus[c], g.nodes_minus[c + 1]);
            FRACSIM_REQUIRE(fp >= 0 && fm >= 0 && fp != fm, "split: interface faces missing");
            FRACSIM_REQUIRE((mesh.face_tris[fp][0] < 0) != (mesh.face_tris[fp][1] < 0),
                            "split: plus face not one-sided");
            FRACSIM_REQUIRE((mesh.face_tris[fm][0] < 0) != (mesh.face_tris[fm][1] < 0),
                            "split: minus face not one-sided");
            g.face_plus[c] = fp;
            g.face_minus[c] = fm;
        }
        finalize_geometry(g);
        // the + face's adjacent triangle must lie on the + side
        for (int c = 0; c < nc; ++c) {
            const int fp = g.face_plus[c];
            const int t = mesh.face_tris[fp][0] >= 0 ? mesh.face_tris[fp][0]
                                                     : mesh.face_tris[fp][1];
            FRACSIM_REQUIRE(g.normal[c].dot(mesh.tri_centroid[t] - g.cell_center[c]) > 0.0,
                            "split: side bookkeeping inconsistent");
        }
    }
    grid.is_split = true;
    return grid;
}

// matrix triangle adjacent to a 1D fracture cell on the given side
inline int frac_cell_tri(const MixedDimGrid& grid, int fi, int cell, bool plus) {
    const auto& g = grid.frac[fi];
    const int f = plus ? g.face_plus[cell] : g.face_minus[cell];
    const auto& ft = grid.mesh.face_tris[f];
    return ft[0] >= 0 ? ft[0] : ft[1];
}

} // namespace fracsim
