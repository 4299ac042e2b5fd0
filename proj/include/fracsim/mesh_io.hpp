#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>

#include "fracsim/mixed_grid.hpp"

namespace fracsim {

// Plain-text mesh exchange format:
//   nodes N triangles T fractures F
//   id x y                      (N lines)
//   id n1 n2 n3                 (T lines)
//   frac_id n_vertices x1 y1 ...(F lines)
inline void write_mesh_text(const MixedDimGrid& grid, std::ostream& os) {
    os << std::setprecision(17);
    os << "nodes " << grid.mesh.n_nodes() << " triangles " << grid.mesh.n_tris()
       << " fractures " << grid.network.fractures.size() << "\n";
    for (int i = 0; i < grid.mesh.n_nodes(); ++i)
        os << i << " " << grid.mesh.nodes[i].x << " " << grid.mesh.nodes[i].y << "\n";
    for (int t = 0; t < grid.mesh.n_tris(); ++t)
        os << t << " " << grid.mesh.tris[t][0] << " " << grid.mesh.tris[t][1] << " "
           << grid.mesh.tris[t][2] << "\n";
    for (std::size_t f = 0; f < grid.network.fractures.size(); ++f) {
        const auto& verts = grid.network.fractures[f].vertices;
        os << f << " " << verts.size();
        for (const auto& v : verts) os << " " << v.x << " " << v.y;
        os << "\n";
    }
}

inline void write_mesh_text(const MixedDimGrid& grid, const std::string& path) {
    std::ofstream os(path);
    FRACSIM_REQUIRE(os.good(), "cannot open mesh file for writing: " + path);
    write_mesh_text(grid, os);
}

// Import an unsplit conforming grid. Fracture paths are recovered by
// collecting mesh nodes on each polyline; conformity is verified.
inline MixedDimGrid read_mesh_text(std::istream& is, const Rect& domain, double h) {
    std::string word;
    long long n_nodes = 0, n_tris = 0, n_fracs = 0;
    is >> word;
    FRACSIM_REQUIRE(word == "nodes", "mesh import: bad header");
    is >> n_nodes >> word;
    FRACSIM_REQUIRE(word == "triangles", "mesh import: bad header");
    is >> n_tris >> word;
    FRACSIM_REQUIRE(word == "fractures", "mesh import: bad header");
    is >> n_fracs;
    FRACSIM_REQUIRE(is.good() && n_nodes >= 3 && n_tris >= 1 && n_fracs >= 0,
                    "mesh import: bad header counts");

    MixedDimGrid grid;
    grid.domain = domain;
    grid.h = h;
    grid.mesh.nodes.resize(n_nodes);
    for (long long i = 0; i < n_nodes; ++i) {
        long long id;
        double x, y;
        is >> id >> x >> y;
        FRACSIM_REQUIRE(is.good() && id >= 0 && id < n_nodes, "mesh import: bad node line");
        grid.mesh.nodes[id] = {x, y};
    }
    grid.mesh.tris.resize(n_tris);
    for (long long t = 0; t < n_tris; ++t) {
        long long id, a, b, c;
        is >> id >> a >> b >> c;
        FRACSIM_REQUIRE(is.good() && id >= 0 && id < n_tris, "mesh import: bad triangle line");
        FRACSIM_REQUIRE(a >= 0 && a < n_nodes && b >= 0 && b < n_nodes && c >= 0 && c < n_nodes,
                        "mesh import: triangle references unknown node");
        grid.mesh.tris[id] = {static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)};
        if (triangle_area(grid.mesh.nodes[a], grid.mesh.nodes[b], grid.mesh.nodes[c]) < 0.0)
            std::swap(grid.mesh.tris[id][1], grid.mesh.tris[id][2]);
    }
    grid.mesh.build_topology();

    for (long long f = 0; f < n_fracs; ++f) {
        long long id, nv;
        is >> id >> nv;
        FRACSIM_REQUIRE(is.good() && nv >= 2, "mesh import: bad fracture line");
        Fracture fr;
        for (long long k = 0; k < nv; ++k) {
            double x, y;
            is >> x >> y;
            fr.vertices.push_back({x, y});
        }
        grid.network.fractures.push_back(fr);
    }

    // recover path node ids: all nodes on the polyline, ordered by arc length
    grid.frac.resize(grid.network.fractures.size());
    for (std::size_t f = 0; f < grid.network.fractures.size(); ++f) {
        const auto& verts = grid.network.fractures[f].vertices;
        std::vector<std::pair<double, int>> on_path;
        std::vector<double> seg_arc(verts.size(), 0.0);
        for (std::size_t s = 1; s < verts.size(); ++s)
            seg_arc[s] = seg_arc[s - 1] + dist(verts[s - 1], verts[s]);
        for (int n = 0; n < grid.mesh.n_nodes(); ++n) {
            for (std::size_t s = 0; s + 1 < verts.size(); ++s) {
                if (point_segment_distance(grid.mesh.nodes[n], verts[s], verts[s + 1]) < 1e-9) {
                    const double t = (grid.mesh.nodes[n] - verts[s]).dot(
                        (verts[s + 1] - verts[s]).normalized());
                    on_path.push_back({seg_arc[s] + t, n});
                    break;
                }
            }
        }
        std::sort(on_path.begin(), on_path.end());
        auto& g = grid.frac[f];
        for (const auto& [arc, id] : on_path) {
            (void)arc;
            g.nodes_plus.push_back(id);
            g.verts.push_back(grid.mesh.nodes[id]);
        }
        g.nodes_minus = g.nodes_plus;
        FRACSIM_REQUIRE(g.nodes_plus.size() >= 3, "mesh import: fracture under-resolved");
        for (std::size_t k = 0; k + 1 < g.nodes_plus.size(); ++k) {
            const int face = grid.mesh.find_face(g.nodes_plus[k], g.nodes_plus[k + 1]);
            FRACSIM_REQUIRE(face >= 0, "mesh import: non-conforming fracture path");
            g.face_plus.push_back(face);
            g.face_minus.push_back(face);
        }
        finalize_geometry(g);
    }
    return grid;
}

inline MixedDimGrid read_mesh_text(const std::string& path, const Rect& domain, double h) {
    std::ifstream is(path);
    FRACSIM_REQUIRE(is.good(), "cannot open mesh file: " + path);
    return read_mesh_text(is, domain, h);
}

// VTK legacy ASCII export of the matrix triangulation with named cell fields.
inline void write_vtk(const TriMesh& mesh, const std::string& path,
                      const std::vector<std::pair<std::string, std::vector<double>>>&
                          cell_scalars = {},
                      const std::vector<std::pair<std::string, std::vector<Vec2>>>&
                          cell_vectors = {}) {
    std::ofstream os(path);
    FRACSIM_REQUIRE(os.good(), "cannot open vtk file for writing: " + path);
    os << std::setprecision(12);
    os << "# vtk DataFile Version 3.0\nfracsim mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.n_nodes() << " double\n";
    for (const auto& p : mesh.nodes) os << p.x << " " << p.y << " 0\n";
    os << "CELLS " << mesh.n_tris() << " " << 4 * mesh.n_tris() << "\n";
    for (const auto& t : mesh.tris) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    os << "CELL_TYPES " << mesh.n_tris() << "\n";
    for (int t = 0; t < mesh.n_tris(); ++t) os << "5\n";
    if (!cell_scalars.empty() || !cell_vectors.empty()) {
        os << "CELL_DATA " << mesh.n_tris() << "\n";
        for (const auto& [name, vals] : cell_scalars) {
            FRACSIM_REQUIRE(static_cast<int>(vals.size()) == mesh.n_tris(),
                            "vtk: cell scalar size mismatch");
            os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (double v : vals) os << v << "\n";
        }
        for (const auto& [name, vals] : cell_vectors) {
            FRACSIM_REQUIRE(static_cast<int>(vals.size()) == mesh.n_tris(),
                            "vtk: cell vector size mismatch");
            os << "VECTORS " << name << " double\n";
            for (const auto& v : vals) os << v.x << " " << v.y << " 0\n";
        }
    }
}

// VTK polyline export of the fracture network with per-1D-cell fields.
inline void write_fracture_vtk(const MixedDimGrid& grid, const std::string& path,
                               const std::vector<std::pair<std::string, std::vector<double>>>&
                                   cell_scalars = {}) {
    std::ofstream os(path);
    FRACSIM_REQUIRE(os.good(), "cannot open vtk file for writing: " + path);
    os << std::setprecision(12);
    int n_pts = 0, n_cells = 0;
    for (const auto& g : grid.frac) {
        n_pts += static_cast<int>(g.verts.size());
        n_cells += g.n_cells();
    }
    os << "# vtk DataFile Version 3.0\nfracsim fractures\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << n_pts << " double\n";
    for (const auto& g : grid.frac)
        for (const auto& p : g.verts) os << p.x << " " << p.y << " 0\n";
    os << "CELLS " << n_cells << " " << 3 * n_cells << "\n";
    int base = 0;
    for (const auto& g : grid.frac) {
        for (int c = 0; c < g.n_cells(); ++c)
            os << "2 " << base + c << " " << base + c + 1 << "\n";
        base += static_cast<int>(g.verts.size());
    }
    os << "CELL_TYPES " << n_cells << "\n";
    for (int c = 0; c < n_cells; ++c) os << "3\n";
    if (!cell_scalars.empty()) {
        os << "CELL_DATA " << n_cells << "\n";
        for (const auto& [name, vals] : cell_scalars) {
            FRACSIM_REQUIRE(static_cast<int>(vals.size()) == n_cells,
                            "vtk: fracture scalar size mismatch");
            os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (double v : vals) os << v << "\n";
        }
    }
}

} // namespace fracsim
