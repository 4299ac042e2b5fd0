#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "fracsim/mesh_io.hpp"
#include "fracsim/mixed_grid.hpp"
#include "fracsim/remesh.hpp"

using namespace fracsim;

namespace {

FractureNetwork single_45deg_fracture() {
    // 0.1 m fracture at the center of a 2x2 m square, 45 degrees
    const double r = 0.05 / std::sqrt(2.0);
    FractureNetwork net;
    net.fractures.push_back({{{1.0 - r, 1.0 - r}, {1.0 + r, 1.0 + r}}});
    return net;
}

void check_conformity(const MixedDimGrid& grid) {
    for (const auto& g : grid.frac) {
        for (std::size_t c = 0; c + 1 < g.nodes_plus.size(); ++c) {
            const Vec2 mid = 0.5 * (g.verts[c] + g.verts[c + 1]);
            // midpoint of each 1D cell lies on its matrix faces
            const int fp = g.face_plus[c];
            const auto& fn = grid.mesh.faces[fp];
            REQUIRE(point_segment_distance(mid, grid.mesh.nodes[fn[0]],
                                           grid.mesh.nodes[fn[1]]) < 1e-12);
        }
    }
}

} // namespace

TEST_CASE("triangulate covers an empty square exactly", "[meshkit]") {
    MixedDimGrid grid = triangulate_conforming({0, 0, 2, 2}, {}, 0.1);
    REQUIRE(grid.mesh.n_tris() > 100);
    REQUIRE_THAT(grid.mesh.total_area(), Catch::Matchers::WithinRel(4.0, 1e-12));
    for (double a : grid.mesh.tri_area) REQUIRE(a > 0.0);
}

TEST_CASE("45-degree center fracture forms a conforming face path", "[meshkit]") {
    MixedDimGrid grid = triangulate_conforming({0, 0, 2, 2}, single_45deg_fracture(), 0.02);
    REQUIRE(grid.frac.size() == 1);
    const auto& g = grid.frac[0];
    double path_len = 0.0;
    for (std::size_t c = 0; c + 1 < g.nodes_plus.size(); ++c) {
        const Vec2 a = grid.mesh.nodes[g.nodes_plus[c]];
        const Vec2 b = grid.mesh.nodes[g.nodes_plus[c + 1]];
        path_len += dist(a, b);
        const Vec2 d = (b - a).normalized();
        REQUIRE_THAT(d.x, Catch::Matchers::WithinAbs(1.0 / std::sqrt(2.0), 1e-9));
        REQUIRE_THAT(d.y, Catch::Matchers::WithinAbs(1.0 / std::sqrt(2.0), 1e-9));
    }
    REQUIRE_THAT(path_len, Catch::Matchers::WithinRel(0.1, 1e-9));
    check_conformity(grid);
}

TEST_CASE("horizontal fracture face count golden value", "[meshkit]") {
    FractureNetwork net;
    net.fractures.push_back({{{0.25, 0.5}, {0.75, 0.5}}});
    MixedDimGrid grid = triangulate_conforming({0, 0, 1, 1}, net, 0.05);
    const int n_faces = static_cast<int>(grid.frac[0].face_plus.size());
    REQUIRE(n_faces >= 8);
    REQUIRE(n_faces <= 14);
    REQUIRE(n_faces == 10); // golden: round(0.5 / 0.05) subdivisions
}

TEST_CASE("degenerate fracture proximity is rejected", "[meshkit]") {
    FractureNetwork net;
    net.fractures.push_back({{{0.3, 0.5}, {0.7, 0.5}}});
    net.fractures.push_back({{{0.3, 0.505}, {0.7, 0.505}}}); // 5 mm apart < h/4
    REQUIRE_THROWS_AS(triangulate_conforming({0, 0, 1, 1}, net, 0.05), Error);
}

TEST_CASE("splitting duplicates exactly the interior path nodes", "[meshkit]") {
    MixedDimGrid grid = triangulate_conforming({0, 0, 2, 2}, single_45deg_fracture(), 0.02);
    const int n_before = grid.mesh.n_nodes();
    const int k_interior = static_cast<int>(grid.frac[0].nodes_plus.size()) - 2;

    MixedDimGrid split = split_along_fractures(grid);
    REQUIRE(split.mesh.n_nodes() == n_before + k_interior);
    REQUIRE(split.mesh.total_area() == Catch::Approx(4.0).epsilon(1e-12));

    const auto& g = split.frac[0];
    // tips shared, interior duplicated once
    REQUIRE(g.nodes_minus.front() == g.nodes_plus.front());
    REQUIRE(g.nodes_minus.back() == g.nodes_plus.back());
    for (std::size_t k = 1; k + 1 < g.nodes_plus.size(); ++k) {
        REQUIRE(g.nodes_minus[k] != g.nodes_plus[k]);
        REQUIRE(dist(split.mesh.nodes[g.nodes_minus[k]],
                     split.mesh.nodes[g.nodes_plus[k]]) == 0.0);
    }
    // each interface face is one-sided and pairs with exactly one 1D cell
    std::set<int> seen;
    for (int c = 0; c < g.n_cells(); ++c) {
        for (int f : {g.face_plus[c], g.face_minus[c]}) {
            REQUIRE(seen.insert(f).second);
            const auto& ft = split.mesh.face_tris[f];
            REQUIRE(((ft[0] < 0) != (ft[1] < 0)));
        }
    }
    // 5.1 grid, dH = 0.02: 1D cell count within the derived band
    REQUIRE(g.n_cells() >= 4);
    REQUIRE(g.n_cells() <= 8);
    check_conformity(split);
}

TEST_CASE("splitting without fractures is the identity", "[meshkit]") {
    MixedDimGrid grid = triangulate_conforming({0, 0, 1, 1}, {}, 0.1);
    MixedDimGrid split = split_along_fractures(grid);
    REQUIRE(split.mesh.n_nodes() == grid.mesh.n_nodes());
    REQUIRE(split.mesh.n_tris() == grid.mesh.n_tris());
}

TEST_CASE("rosette remesh aligns the kink segment and keeps quality", "[meshkit]") {
    MixedDimGrid grid =
        split_along_fractures(triangulate_conforming({0, 0, 2, 2}, single_45deg_fracture(), 0.02));
    const double l_max = 0.02;
    const Vec2 ahead = grid.tip_ahead(0, 1);
    const double theta = -30.0 * kPi / 180.0;
    const Vec2 dir{ahead.x * std::cos(theta) - ahead.y * std::sin(theta),
                   ahead.x * std::sin(theta) + ahead.y * std::cos(theta)};
    const double seg_len = 0.01;

    auto res = rosette_remesh(grid, 0, 1, 0.02, l_max, dir, seg_len);
    const auto& nm = res.grid.mesh;
    for (double a : nm.tri_area) REQUIRE(a > 0.0);
    REQUIRE_THAT(nm.total_area(), Catch::Matchers::WithinRel(4.0, 1e-10));

    // the kink segment is a mesh face
    const Vec2 tip = grid.tip_pos(0, 1);
    const int tip_id = res.grid.tip_node(0, 1);
    const int target_id = nm.find_node(tip + seg_len * dir, 1e-9);
    REQUIRE(target_id >= 0);
    REQUIRE(nm.find_face(tip_id, target_id) >= 0);

    // locality: nodes beyond 5*l_max are bitwise unchanged
    const double R = 5.0 * l_max;
    for (int n = 0; n < grid.mesh.n_nodes(); ++n) {
        if (dist(grid.mesh.nodes[n], tip) > R + 2.1 * 0.02) continue;
        if (dist(grid.mesh.nodes[n], tip) <= R) continue;
        const int m = nm.find_node(grid.mesh.nodes[n], 0.0);
        REQUIRE(m >= 0);
        REQUIRE(nm.nodes[m].x == grid.mesh.nodes[n].x);
        REQUIRE(nm.nodes[m].y == grid.mesh.nodes[n].y);
    }

    // triangle quality (2 r_in / r_circ) in the rebuilt region
    double qmin = 1.0;
    for (int t : res.new_region_tris) {
        const auto& v = nm.tris[t];
        const double a = dist(nm.nodes[v[1]], nm.nodes[v[2]]);
        const double b = dist(nm.nodes[v[0]], nm.nodes[v[2]]);
        const double c = dist(nm.nodes[v[0]], nm.nodes[v[1]]);
        const double s = 0.5 * (a + b + c);
        const double area = nm.tri_area[t];
        const double r_in = area / s;
        const double r_circ = a * b * c / (4.0 * area);
        qmin = std::min(qmin, 2.0 * r_in / r_circ);
    }
    INFO("min region quality " << qmin);
    REQUIRE(qmin >= 0.3);
    check_conformity(res.grid);
}

TEST_CASE("rosette with straight extension stays conforming", "[meshkit]") {
    MixedDimGrid grid =
        split_along_fractures(triangulate_conforming({0, 0, 2, 2}, single_45deg_fracture(), 0.02));
    const Vec2 dir = grid.tip_ahead(0, 1);
    auto res = rosette_remesh(grid, 0, 1, 0.02, 0.02, dir, 0.01);
    check_conformity(res.grid);
    for (double a : res.grid.mesh.tri_area) REQUIRE(a > 0.0);
}

TEST_CASE("extend_fracture grows one cell and splits the old tip", "[meshkit]") {
    MixedDimGrid grid =
        split_along_fractures(triangulate_conforming({0, 0, 2, 2}, single_45deg_fracture(), 0.02));
    const Vec2 dir = grid.tip_ahead(0, 1);
    auto ros = rosette_remesh(grid, 0, 1, 0.02, 0.02, dir, 0.01);

    const int tip_old = ros.grid.tip_node(0, 1);
    const int cells_old = ros.grid.frac[0].n_cells();
    const int nodes_old = ros.grid.mesh.n_nodes();
    auto ext = extend_fracture(ros.grid, 0, 1, dir, 0.01);

    const auto& g = ext.grid.frac[0];
    REQUIRE(g.n_cells() == cells_old + 1);
    REQUIRE(ext.grid.mesh.n_nodes() == nodes_old + 1); // duplicated old tip
    REQUIRE(ext.grid.network.fractures[0].length() ==
            Catch::Approx(0.1 + 0.01).epsilon(1e-9));
    // old tip now duplicated, new tip single
    REQUIRE(g.nodes_minus[g.n_cells() - 1] != g.nodes_plus[g.n_cells() - 1]);
    REQUIRE(g.nodes_minus.back() == g.nodes_plus.back());
    REQUIRE(dist(ext.grid.tip_pos(0, 1),
                 grid.tip_pos(0, 1) + 0.01 * dir) < 1e-12);
    check_conformity(ext.grid);

    // zero-length extension is the identity
    auto same = extend_fracture(ext.grid, 0, 1, dir, 0.0);
    REQUIRE(same.grid.mesh.n_nodes() == ext.grid.mesh.n_nodes());
    REQUIRE(same.grid.frac[0].n_cells() == ext.grid.frac[0].n_cells());
}

TEST_CASE("overlap areas form a partition", "[meshkit]") {
    MixedDimGrid grid =
        split_along_fractures(triangulate_conforming({0, 0, 2, 2}, single_45deg_fracture(), 0.05));

    SECTION("identity grids give diagonal rows") {
        std::vector<int> sub;
        for (int t = 0; t < 40; ++t) sub.push_back(t);
        auto rows = overlap_areas(grid.mesh, sub, grid.mesh, sub);
        for (std::size_t e = 0; e < sub.size(); ++e) {
            double diag = 0.0, total = 0.0;
            for (const auto& [j, a] : rows[e]) {
                total += a;
                if (j == sub[e]) diag += a;
            }
            REQUIRE_THAT(diag, Catch::Matchers::WithinRel(grid.mesh.tri_area[sub[e]], 1e-10));
            REQUIRE_THAT(total, Catch::Matchers::WithinRel(grid.mesh.tri_area[sub[e]], 1e-10));
        }
    }

    SECTION("local remesh partitions the region area") {
        const Vec2 dir = grid.tip_ahead(0, 1);
        auto res = rosette_remesh(grid, 0, 1, 0.05, 0.05, dir, 0.02);
        auto rows = overlap_areas(grid.mesh, res.old_region_tris, res.grid.mesh,
                                  res.new_region_tris);
        double region_new = 0.0, region_old = 0.0, mapped = 0.0;
        for (int t : res.new_region_tris) region_new += res.grid.mesh.tri_area[t];
        for (int t : res.old_region_tris) region_old += grid.mesh.tri_area[t];
        for (const auto& row : rows)
            for (const auto& [j, a] : row) mapped += a;
        REQUIRE_THAT(region_new, Catch::Matchers::WithinRel(region_old, 1e-10));
        REQUIRE_THAT(mapped, Catch::Matchers::WithinRel(region_new, 1e-10));
    }
}

TEST_CASE("mesh text round trip preserves geometry and splits identically", "[meshkit]") {
    MixedDimGrid grid = triangulate_conforming({0, 0, 2, 2}, single_45deg_fracture(), 0.05);
    std::stringstream ss;
    write_mesh_text(grid, ss);
    MixedDimGrid back = read_mesh_text(ss, grid.domain, grid.h);
    REQUIRE(back.mesh.n_nodes() == grid.mesh.n_nodes());
    REQUIRE(back.mesh.n_tris() == grid.mesh.n_tris());
    REQUIRE(back.frac[0].n_cells() == grid.frac[0].n_cells());
    MixedDimGrid s1 = split_along_fractures(grid);
    MixedDimGrid s2 = split_along_fractures(back);
    REQUIRE(s1.mesh.n_nodes() == s2.mesh.n_nodes());
}
