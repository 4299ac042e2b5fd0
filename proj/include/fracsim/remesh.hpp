#pragma once

#include "fracsim/mixed_grid.hpp"

namespace fracsim {

struct RemeshResult {
    MixedDimGrid grid;
    std::vector<int> old_to_new_tri; // -1 where the old triangle was rebuilt
    std::vector<int> old_region_tris;
    std::vector<int> new_region_tris;
};

// Intersection area of two triangles via half-plane clipping, computed in
// shifted coordinates to limit cancellation.
inline double tri_tri_overlap_area(const std::array<Vec2, 3>& a,
                                   const std::array<Vec2, 3>& b) {
    const Vec2 shift = (a[0] + a[1] + a[2]) / 3.0;
    std::vector<Vec2> poly{b[0] - shift, b[1] - shift, b[2] - shift};
    std::array<Vec2, 3> clip{a[0] - shift, a[1] - shift, a[2] - shift};
    for (int i = 0; i < 3 && !poly.empty(); ++i) {
        const Vec2 p0 = clip[i], p1 = clip[(i + 1) % 3];
        const Vec2 dirv = p1 - p0;
        std::vector<Vec2> out;
        const std::size_t m = poly.size();
        for (std::size_t j = 0; j < m; ++j) {
            const Vec2 cur = poly[j], nxt = poly[(j + 1) % m];
            const double sc = dirv.cross(cur - p0);
            const double sn = dirv.cross(nxt - p0);
            if (sc >= 0.0) out.push_back(cur);
            if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
                const double t = sc / (sc - sn);
                out.push_back(cur + t * (nxt - cur));
            }
        }
        poly.swap(out);
    }
    double area2 = 0.0;
    for (std::size_t j = 0; j < poly.size(); ++j) {
        const Vec2 cur = poly[j], nxt = poly[(j + 1) % poly.size()];
        area2 += cur.cross(nxt);
    }
    return 0.5 * area2;
}

// Sparse overlap map between triangle subsets of two meshes covering the
// same region: rows sum to the new-cell areas.
inline std::vector<std::vector<std::pair<int, double>>>
overlap_areas(const TriMesh& old_mesh, const std::vector<int>& old_sub,
              const TriMesh& new_mesh, const std::vector<int>& new_sub) {
    std::vector<std::vector<std::pair<int, double>>> rows(new_sub.size());
    for (std::size_t e = 0; e < new_sub.size(); ++e) {
        const int te = new_sub[e];
        const auto& v = new_mesh.tris[te];
        const std::array<Vec2, 3> pe{new_mesh.nodes[v[0]], new_mesh.nodes[v[1]],
                                     new_mesh.nodes[v[2]]};
        double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
        for (const auto& p : pe) {
            x0 = std::min(x0, p.x); x1 = std::max(x1, p.x);
            y0 = std::min(y0, p.y); y1 = std::max(y1, p.y);
        }
        double sum = 0.0;
        for (int tj : old_sub) {
            const auto& w = old_mesh.tris[tj];
            const std::array<Vec2, 3> pj{old_mesh.nodes[w[0]], old_mesh.nodes[w[1]],
                                         old_mesh.nodes[w[2]]};
            if (std::max({pj[0].x, pj[1].x, pj[2].x}) < x0 ||
                std::min({pj[0].x, pj[1].x, pj[2].x}) > x1 ||
                std::max({pj[0].y, pj[1].y, pj[2].y}) < y0 ||
                std::min({pj[0].y, pj[1].y, pj[2].y}) > y1)
                continue;
            const double a = tri_tri_overlap_area(pe, pj);
            if (a > 1e-14 * new_mesh.tri_area[te]) {
                rows[e].push_back({tj, a});
                sum += a;
            }
        }
        FRACSIM_REQUIRE(std::abs(sum - new_mesh.tri_area[te]) <=
                            1e-8 * new_mesh.tri_area[te],
                        "overlap map does not partition a new cell (non-overlapping grids?)");
    }
    return rows;
}

// Locally retriangulate the disk of radius 5*l_max around a fracture tip so
// that the intended kink segment (tip -> tip + seg_len * seg_dir) lies on mesh
// faces: removes the disk interior, plants a rosette node fan at radius
// target_h, constrains crack paths and the kink segment, and smooths the new
// interior nodes. Pass seg_len = 0 to rebuild the disk without a kink target.
inline RemeshResult rosette_remesh(const MixedDimGrid& grid, int fi, int end,
                                   double target_h, double l_max, const Vec2& seg_dir,
                                   double seg_len) {
    FRACSIM_REQUIRE(grid.is_split, "rosette_remesh expects a split grid");
    FRACSIM_REQUIRE(l_max > 0.0 && target_h > 0.0, "rosette: bad sizes");
    const double R = 5.0 * l_max;
    FRACSIM_REQUIRE(seg_len < 0.9 * R, "rosette: segment longer than vicinity region");
    const TriMesh& mesh = grid.mesh;
    const Vec2 tip = grid.tip_pos(fi, end);
    const int tip_id = grid.tip_node(fi, end);

    const double btol = 1e-12 * std::max(grid.domain.width(), grid.domain.height());
    auto on_domain_boundary = [&](const Vec2& p) {
        return std::abs(p.x - grid.domain.x0) < btol || std::abs(p.x - grid.domain.x1) < btol ||
               std::abs(p.y - grid.domain.y0) < btol || std::abs(p.y - grid.domain.y1) < btol;
    };

    // region: triangles with a vertex inside the disk, clamped off the outer boundary
    std::vector<int> region;
    std::vector<char> in_region(mesh.n_tris(), 0);
    for (int t = 0; t < mesh.n_tris(); ++t) {
        const auto& v = mesh.tris[t];
        bool near = false, touches_bnd = false;
        for (int i = 0; i < 3; ++i) {
            if (dist(mesh.nodes[v[i]], tip) < R) near = true;
            if (on_domain_boundary(mesh.nodes[v[i]])) touches_bnd = true;
        }
        if (near && !touches_bnd) {
            region.push_back(t);
            in_region[t] = 1;
        }
    }
    FRACSIM_REQUIRE(!region.empty(), "rosette: empty vicinity region");

    // classify nodes: removable = all incident triangles in region, not on any
    // fracture path, not the tip
    std::vector<char> is_path_node(mesh.n_nodes(), 0);
    for (const auto& g : grid.frac) {
        for (int id : g.nodes_plus) is_path_node[id] = 1;
        for (int id : g.nodes_minus) is_path_node[id] = 1;
    }
    std::vector<char> removable(mesh.n_nodes(), 0);
    for (int n = 0; n < mesh.n_nodes(); ++n) {
        if (mesh.node_tris[n].empty() || is_path_node[n]) continue;
        bool all_in = true;
        for (int t : mesh.node_tris[n]) all_in &= (in_region[t] != 0);
        removable[n] = all_in;
    }

    // node merge map for the geometric triangulation: minus copies -> plus ids
    std::vector<int> rep(mesh.n_nodes());
    for (int n = 0; n < mesh.n_nodes(); ++n) rep[n] = n;
    for (const auto& g : grid.frac)
        for (std::size_t k = 0; k < g.nodes_minus.size(); ++k)
            rep[g.nodes_minus[k]] = g.nodes_plus[k];

    // collect kept points and constraints in merged indexing
    meshdetail::PointPool pool;
    std::unordered_map<int, int> node_to_cdt; // merged node id -> cdt point
    auto cdt_of = [&](int node) {
        const int r = rep[node];
        auto it = node_to_cdt.find(r);
        if (it != node_to_cdt.end()) return it->second;
        const int id = pool.add(mesh.nodes[r]);
        node_to_cdt.emplace(r, id);
        return id;
    };

    std::set<std::pair<int, int>> constraints; // cdt index pairs
    for (int t : region) {
        for (int i = 0; i < 3; ++i) {
            const int f = mesh.tri_faces[t][i];
            const auto& ft = mesh.face_tris[f];
            const int other = (ft[0] == t) ? ft[1] : ft[0];
            const bool slit = (other < 0);
            const bool rim = (other >= 0 && !in_region[other]);
            if (slit || rim) {
                const int a = cdt_of(mesh.faces[f][0]);
                const int b = cdt_of(mesh.faces[f][1]);
                if (a != b) constraints.insert(std::minmax(a, b));
            }
        }
    }
    // kept (non-removable) nodes referenced by region triangles
    for (int t : region)
        for (int i = 0; i < 3; ++i)
            if (!removable[mesh.tris[t][i]]) cdt_of(mesh.tris[t][i]);

    const int n_kept = static_cast<int>(pool.pts.size());

    // kink target and rosette fan
    int target_cdt = -1;
    Vec2 target{};
    if (seg_len > 0.0) {
        target = tip + seg_len * seg_dir;
        FRACSIM_REQUIRE(grid.domain.strictly_inside(target, grid.h * 0.25),
                        "kink segment exits the domain");
        target_cdt = pool.add(target);
    }
    const Vec2 incoming = -grid.tip_ahead(fi, end); // direction from tip into the crack
    std::vector<int> fan_cdt;
    {
        const double base = (seg_len > 0.0) ? std::atan2(seg_dir.y, seg_dir.x)
                                            : std::atan2(-incoming.y, -incoming.x);
        for (int k = 0; k < 8; ++k) {
            const double ang = base + k * (kPi / 4.0);
            const Vec2 d{std::cos(ang), std::sin(ang)};
            if (d.dot(incoming) > std::cos(25.0 * kPi / 180.0)) continue; // crack corridor
            const Vec2 p = tip + target_h * d;
            if (seg_len > 0.0 && dist(p, target) < 0.45 * target_h) continue;
            bool clash = false;
            for (int i = 0; i < n_kept && !clash; ++i)
                clash = dist(pool.pts[i], p) < 0.45 * target_h;
            if (clash) continue;
            // stay clear of crack segments
            for (const auto& g : grid.frac)
                for (std::size_t c = 0; c + 1 < g.verts.size() && !clash; ++c)
                    clash = point_segment_distance(p, g.verts[c], g.verts[c + 1]) <
                            0.4 * target_h;
            if (clash) continue;
            fan_cdt.push_back(pool.add(p));
        }
    }

    if (seg_len > 0.0) {
        const int tip_cdt = cdt_of(tip_id);
        constraints.insert(std::minmax(tip_cdt, target_cdt));
    }

    // refill the disk interior with a lattice at the target size
    std::vector<int> fill_cdt;
    {
        const int n_before_fill = static_cast<int>(pool.pts.size());
        std::vector<std::array<Vec2, 2>> cseg; // segments to stay clear of
        for (const auto& g : grid.frac)
            for (std::size_t c = 0; c + 1 < g.verts.size(); ++c)
                cseg.push_back({g.verts[c], g.verts[c + 1]});
        if (seg_len > 0.0) cseg.push_back({tip, target});

        const double dy = target_h * std::sqrt(3.0) / 2.0;
        const int nr = static_cast<int>(std::ceil(2.0 * R / dy));
        std::uint64_t jk = 0;
        for (int r = -nr; r <= nr; ++r) {
            const double y = tip.y + r * dy;
            const double x_off = (std::abs(r) % 2) ? 0.5 * target_h : 0.0;
            const int ncl = static_cast<int>(std::ceil(R / target_h)) + 1;
            for (int ci = -ncl; ci <= ncl; ++ci) {
                ++jk;
                Vec2 p{tip.x + x_off + ci * target_h, y};
                p.x += 0.07 * target_h * hash_unit(31, jk);
                p.y += 0.07 * target_h * hash_unit(32, jk);
                if (dist(p, tip) >= R - 0.55 * target_h) continue;
                if (dist(p, tip) < 1.45 * target_h) continue; // rosette fan owns the core
                bool clash = false;
                for (const auto& s : cseg) {
                    if (point_segment_distance(p, s[0], s[1]) < 0.55 * target_h) {
                        clash = true;
                        break;
                    }
                }
                for (int i = 0; i < n_before_fill && !clash; ++i)
                    clash = dist(pool.pts[i], p) < 0.5 * target_h;
                if (clash) continue;
                // must be covered by the removed region
                bool inside = false;
                for (int t : region) {
                    if (mesh.point_in_tri(t, p, 1e-9)) { inside = true; break; }
                }
                if (!inside) continue;
                fill_cdt.push_back(pool.add(p));
            }
        }
    }

    fan_cdt.insert(fan_cdt.end(), fill_cdt.begin(), fill_cdt.end());

    Delaunay dt(pool.pts);
    for (const auto& c : constraints) dt.insert_segment(c.first, c.second);
    auto cand = dt.triangles();

    // keep new triangles whose centroid lies inside the old region
    std::vector<std::array<int, 3>> new_tris_cdt;
    for (const auto& tv : cand) {
        const Vec2 c = (pool.pts[tv[0]] + pool.pts[tv[1]] + pool.pts[tv[2]]) / 3.0;
        if (dist(c, tip) > R + grid.h) continue;
        bool inside = false;
        for (int t : region) {
            if (mesh.point_in_tri(t, c, 1e-9)) { inside = true; break; }
        }
        if (inside) new_tris_cdt.push_back(tv);
    }

    // assemble the new mesh
    RemeshResult res;
    res.grid = grid;
    TriMesh& nm = res.grid.mesh;
    nm.tris.clear();
    res.old_to_new_tri.assign(mesh.n_tris(), -1);
    res.old_region_tris = region;
    for (int t = 0; t < mesh.n_tris(); ++t) {
        if (in_region[t]) continue;
        res.old_to_new_tri[t] = static_cast<int>(nm.tris.size());
        nm.tris.push_back(mesh.tris[t]);
    }

    // cdt point -> global node id (side-resolved for crack nodes)
    std::vector<int> cdt_to_node(pool.pts.size(), -1);
    for (const auto& kv : node_to_cdt) cdt_to_node[kv.second] = kv.first;
    std::vector<int> fan_global(pool.pts.size(), -1);
    for (int fc : fan_cdt) {
        fan_global[fc] = nm.n_nodes();
        nm.nodes.push_back(pool.pts[fc]);
    }
    if (target_cdt >= 0 && cdt_to_node[target_cdt] < 0 && fan_global[target_cdt] < 0) {
        fan_global[target_cdt] = nm.n_nodes();
        nm.nodes.push_back(pool.pts[target_cdt]);
    }

    // minus copies of merged path nodes, pre-indexed by (fracture, vertex)
    std::unordered_map<int, std::pair<int, int>> plus_to_frac; // plus id -> (fi, k)
    for (std::size_t gi = 0; gi < grid.frac.size(); ++gi) {
        const auto& g = grid.frac[gi];
        for (std::size_t k = 0; k < g.nodes_plus.size(); ++k)
            if (g.nodes_plus[k] != g.nodes_minus[k])
                plus_to_frac[g.nodes_plus[k]] = {static_cast<int>(gi),
                                                 static_cast<int>(k)};
    }

    std::vector<int> new_region_ids;
    for (const auto& tv : new_tris_cdt) {
        const Vec2 cen =
            (pool.pts[tv[0]] + pool.pts[tv[1]] + pool.pts[tv[2]]) / 3.0;
        std::array<int, 3> gv{};
        for (int i = 0; i < 3; ++i) {
            const int ci = tv[i];
            int node = cdt_to_node[ci];
            if (node < 0) {
                node = fan_global[ci];
                FRACSIM_REQUIRE(node >= 0, "rosette: unmapped cdt point");
            } else {
                auto it = plus_to_frac.find(node);
                if (it != plus_to_frac.end()) {
                    const auto& g = res.grid.frac[it->second.first];
                    const int k = it->second.second;
                    const Vec2 probe = cen - pool.pts[ci];
                    if (meshdetail::path_side_at_vertex(g.verts, k, probe) < 0)
                        node = g.nodes_minus[k];
                }
            }
            gv[i] = node;
        }
        if (triangle_area(nm.nodes[gv[0]], nm.nodes[gv[1]], nm.nodes[gv[2]]) < 0.0)
            std::swap(gv[1], gv[2]);
        new_region_ids.push_back(static_cast<int>(nm.tris.size()));
        nm.tris.push_back(gv);
    }
    res.new_region_tris = new_region_ids;

    // drop nodes the region rebuild orphaned
    {
        std::vector<int> remap(nm.nodes.size(), -1);
        for (const auto& tv : nm.tris)
            for (int i = 0; i < 3; ++i) remap[tv[i]] = 0;
        std::vector<Vec2> packed;
        packed.reserve(nm.nodes.size());
        for (std::size_t n = 0; n < nm.nodes.size(); ++n) {
            if (remap[n] == 0) {
                remap[n] = static_cast<int>(packed.size());
                packed.push_back(nm.nodes[n]);
            }
        }
        nm.nodes.swap(packed);
        for (auto& tv : nm.tris)
            for (int i = 0; i < 3; ++i) tv[i] = remap[tv[i]];
        for (int& fg : fan_global)
            if (fg >= 0) fg = remap[fg];
        for (auto& g : res.grid.frac) {
            for (int& id : g.nodes_plus) id = remap[id];
            for (int& id : g.nodes_minus) id = remap[id];
            for (int id : g.nodes_plus)
                FRACSIM_REQUIRE(id >= 0, "rosette: fracture path node vanished");
            for (int id : g.nodes_minus)
                FRACSIM_REQUIRE(id >= 0, "rosette: fracture path node vanished");
        }
    }

    nm.build_topology();

    // smooth the fresh fan nodes only; the kink target stays put
    std::vector<int> movable;
    for (int fc : fan_cdt)
        if (fan_global[fc] >= 0 && fc != target_cdt) movable.push_back(fan_global[fc]);
    meshdetail::laplacian_smooth(nm, movable, 5, 0.6);

    // interface faces carry fresh indices after the rebuild
    for (auto& g : res.grid.frac) {
        for (std::size_t c = 0; c + 1 < g.nodes_plus.size(); ++c) {
            const int fp = nm.find_face(g.nodes_plus[c], g.nodes_plus[c + 1]);
            const int fm = nm.find_face(g.nodes_minus[c], g.nodes_minus[c + 1]);
            FRACSIM_REQUIRE(fp >= 0 && fm >= 0, "rosette: fracture path conformity lost");
            g.face_plus[c] = fp;
            g.face_minus[c] = fm;
        }
        finalize_geometry(g);
    }
    return res;
}

// Prolong a fracture by one straight segment whose geometry already lies on
// mesh faces (rosette_remesh ran first). The old tip node is duplicated, the
// new tip stays single, and the 1D grid and interfaces gain one cell.
inline RemeshResult extend_fracture(const MixedDimGrid& grid, int fi, int end,
                                    const Vec2& dir, double length) {
    FRACSIM_REQUIRE(grid.is_split, "extend_fracture expects a split grid");
    RemeshResult res;
    res.grid = grid;
    res.old_to_new_tri.resize(grid.mesh.n_tris());
    for (int t = 0; t < grid.mesh.n_tris(); ++t) res.old_to_new_tri[t] = t;
    if (length == 0.0) return res;
    FRACSIM_REQUIRE(length > 0.0, "extend_fracture: negative length");

    MixedDimGrid& g2 = res.grid;
    TriMesh& mesh = g2.mesh;
    auto& g = g2.frac[fi];
    const Vec2 tip = g2.tip_pos(fi, end);
    const int tip_id = g2.tip_node(fi, end);
    const Vec2 target = tip + length * dir;
    FRACSIM_REQUIRE(g2.domain.strictly_inside(target, 0.0),
                    "fracture extension exits the domain");

    int target_id = -1;
    for (int t : mesh.node_tris[tip_id]) {
        const auto& v = mesh.tris[t];
        for (int i = 0; i < 3; ++i)
            if (dist(mesh.nodes[v[i]], target) < 1e-9) target_id = v[i];
    }
    FRACSIM_REQUIRE(target_id >= 0,
                    "extend_fracture: target is not a neighboring node (run rosette first)");
    FRACSIM_REQUIRE(mesh.find_face(tip_id, target_id) >= 0,
                    "extend_fracture: segment is not a mesh face");

    // grow the polyline and path arrays
    auto& poly = g2.network.fractures[fi].vertices;
    if (end == 1) {
        poly.push_back(target);
        g.verts.push_back(target);
        g.nodes_plus.push_back(target_id);
        g.nodes_minus.push_back(target_id);
    } else {
        poly.insert(poly.begin(), target);
        g.verts.insert(g.verts.begin(), target);
        g.nodes_plus.insert(g.nodes_plus.begin(), target_id);
        g.nodes_minus.insert(g.nodes_minus.begin(), target_id);
    }

    // the old tip is now interior: duplicate it
    const int k = (end == 1) ? static_cast<int>(g.verts.size()) - 2 : 1;
    {
        const int node = tip_id;
        const auto inc = mesh.node_tris[node]; // copy: mesh.tris mutate below
        const int prev_plus = g.nodes_plus[k - 1];
        const int prev_minus = g.nodes_minus[k - 1];
        const int next_plus = g.nodes_plus[k + 1];
        const int next_minus = g.nodes_minus[k + 1];
        const int minus_id = mesh.n_nodes();
        mesh.nodes.push_back(mesh.nodes[node]);
        bool any_minus = false;
        for (int t : inc) {
            const auto& v = mesh.tris[t];
            const Vec2 cen = (mesh.nodes[v[0]] + mesh.nodes[v[1]] + mesh.nodes[v[2]]) / 3.0;
            if (meshdetail::path_side_at_vertex(g.verts, k, cen - mesh.nodes[node]) < 0) {
                for (int i = 0; i < 3; ++i)
                    if (mesh.tris[t][i] == node) mesh.tris[t][i] = minus_id;
                any_minus = true;
            }
        }
        FRACSIM_REQUIRE(any_minus, "extend: tip split produced no minus side");
        g.nodes_minus[k] = minus_id;
        (void)prev_plus; (void)prev_minus; (void)next_plus; (void)next_minus;
    }

    if (end == 1)
        g.face_plus.push_back(-1), g.face_minus.push_back(-1);
    else
        g.face_plus.insert(g.face_plus.begin(), -1),
            g.face_minus.insert(g.face_minus.begin(), -1);

    mesh.build_topology();
    for (auto& gg : g2.frac) {
        for (std::size_t c = 0; c + 1 < gg.nodes_plus.size(); ++c) {
            const int fp = mesh.find_face(gg.nodes_plus[c], gg.nodes_plus[c + 1]);
            const int fm = mesh.find_face(gg.nodes_minus[c], gg.nodes_minus[c + 1]);
            FRACSIM_REQUIRE(fp >= 0 && fm >= 0, "extend: fracture path conformity lost");
            gg.face_plus[c] = fp;
            gg.face_minus[c] = fm;
        }
        finalize_geometry(gg);
    }
    return res;
}

} // namespace fracsim
