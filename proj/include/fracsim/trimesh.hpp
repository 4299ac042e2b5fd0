#pragma once

#include <algorithm>
#include <map>
#include <unordered_map>

#include "fracsim/core.hpp"
#include "fracsim/predicates.hpp"

namespace fracsim {

// Conforming triangle mesh. Nodes duplicated along fracture slits carry
// identical coordinates but distinct ids; the slit faces are then boundary
// faces of their respective sides.
struct TriMesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 3>> tris; // CCW

    // derived topology
    std::vector<std::array<int, 2>> faces;     // node pair, lexicographic
    std::vector<std::array<int, 2>> face_tris; // [pos-side tri, neg-side tri], -1 if none
    std::vector<std::array<int, 3>> tri_faces; // face opposite local vertex i
    std::vector<std::vector<int>> node_tris;
    std::vector<double> tri_area;
    std::vector<Vec2> tri_centroid;
    std::vector<double> face_length;
    std::vector<Vec2> face_center;
    std::vector<Vec2> face_normal; // unit, from neg side to pos side

    int n_nodes() const { return static_cast<int>(nodes.size()); }
    int n_tris() const { return static_cast<int>(tris.size()); }
    int n_faces() const { return static_cast<int>(faces.size()); }

    void build_topology() {
        const int nt = n_tris();
        faces.clear();
        face_tris.clear();
        tri_faces.assign(nt, {-1, -1, -1});
        node_tris.assign(nodes.size(), {});
        tri_area.assign(nt, 0.0);
        tri_centroid.assign(nt, Vec2{});

        std::map<std::pair<int, int>, int> fmap;
        for (int t = 0; t < nt; ++t) {
            const auto& v = tris[t];
            FRACSIM_REQUIRE(v[0] != v[1] && v[1] != v[2] && v[0] != v[2],
                            "degenerate triangle");
            tri_area[t] = triangle_area(nodes[v[0]], nodes[v[1]], nodes[v[2]]);
            FRACSIM_REQUIRE(tri_area[t] > 0.0, "non-positive triangle area");
            tri_centroid[t] = (nodes[v[0]] + nodes[v[1]] + nodes[v[2]]) / 3.0;
            for (int i = 0; i < 3; ++i) {
                node_tris[v[i]].push_back(t);
                const int a = v[(i + 1) % 3], b = v[(i + 2) % 3];
                const auto key = std::minmax(a, b);
                auto it = fmap.find(key);
                int f;
                if (it == fmap.end()) {
                    f = static_cast<int>(faces.size());
                    fmap.emplace(key, f);
                    faces.push_back({key.first, key.second});
                    face_tris.push_back({-1, -1});
                } else {
                    f = it->second;
                }
                tri_faces[t][i] = f;
            }
        }

        face_length.assign(faces.size(), 0.0);
        face_center.assign(faces.size(), Vec2{});
        face_normal.assign(faces.size(), Vec2{});
        for (std::size_t f = 0; f < faces.size(); ++f) {
            const Vec2 a = nodes[faces[f][0]], b = nodes[faces[f][1]];
            face_length[f] = dist(a, b);
            FRACSIM_REQUIRE(face_length[f] > 0.0, "zero-length face");
            face_center[f] = 0.5 * (a + b);
            face_normal[f] = (b - a).rot90() / face_length[f];
        }
        for (int t = 0; t < nt; ++t) {
            for (int i = 0; i < 3; ++i) {
                const int f = tri_faces[t][i];
                const Vec2 a = nodes[faces[f][0]];
                const double s = face_normal[f].dot(tri_centroid[t] - a);
                FRACSIM_REQUIRE(s != 0.0, "triangle centroid on its own face");
                auto& ft = face_tris[f];
                int& slot = (s > 0.0) ? ft[0] : ft[1];
                FRACSIM_REQUIRE(slot == -1, "more than two triangles on a face");
                slot = t;
            }
        }
        locator_built_ = false;
    }

    // +1 when face_normal[f] points out of triangle t.
    double outward_sign(int t, int f) const {
        if (face_tris[f][1] == t) return 1.0;
        FRACSIM_REQUIRE(face_tris[f][0] == t, "face/tri mismatch");
        return -1.0;
    }

    bool point_in_tri(int t, const Vec2& p, double tol_rel = 1e-12) const {
        const auto& v = tris[t];
        const double tol = tol_rel * 2.0 * tri_area[t];
        return triangle_area(nodes[v[0]], nodes[v[1]], p) >= -tol &&
               triangle_area(nodes[v[1]], nodes[v[2]], p) >= -tol &&
               triangle_area(nodes[v[2]], nodes[v[0]], p) >= -tol;
    }

    // All triangles containing p (two or more when p lies on an edge/slit).
    std::vector<int> locate_all(const Vec2& p) const {
        build_locator();
        std::vector<int> out;
        const int bx = bucket_coord(p.x, lo_.x, inv_hx_, nbx_);
        const int by = bucket_coord(p.y, lo_.y, inv_hy_, nby_);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int cx = bx + dx, cy = by + dy;
                if (cx < 0 || cy < 0 || cx >= nbx_ || cy >= nby_) continue;
                for (int t : buckets_[cy * nbx_ + cx])
                    if (point_in_tri(t, p, 1e-9) &&
                        std::find(out.begin(), out.end(), t) == out.end())
                        out.push_back(t);
            }
        std::sort(out.begin(), out.end());
        return out;
    }

    int locate_one(const Vec2& p) const {
        auto all = locate_all(p);
        FRACSIM_REQUIRE(!all.empty(), "point outside every cell");
        return all.front();
    }

    double total_area() const {
        double s = 0.0;
        for (double a : tri_area) s += a;
        return s;
    }

    int find_node(const Vec2& p, double tol) const {
        for (int i = 0; i < n_nodes(); ++i)
            if (dist(nodes[i], p) <= tol) return i;
        return -1;
    }

    int find_face(int a, int b) const {
        // linear over node_tris of a: small fan
        for (int t : node_tris[a])
            for (int i = 0; i < 3; ++i) {
                const int f = tri_faces[t][i];
                const auto& fn = faces[f];
                if ((fn[0] == a && fn[1] == b) || (fn[0] == b && fn[1] == a)) return f;
            }
        return -1;
    }

private:
    mutable bool locator_built_ = false;
    mutable Vec2 lo_, hi_;
    mutable int nbx_ = 0, nby_ = 0;
    mutable double inv_hx_ = 0.0, inv_hy_ = 0.0;
    mutable std::vector<std::vector<int>> buckets_;

    static int bucket_coord(double v, double lo, double inv, int n) {
        return std::clamp(static_cast<int>((v - lo) * inv), 0, n - 1);
    }

    void build_locator() const {
        if (locator_built_) return;
        lo_ = {1e300, 1e300};
        hi_ = {-1e300, -1e300};
        for (const auto& p : nodes) {
            lo_.x = std::min(lo_.x, p.x); lo_.y = std::min(lo_.y, p.y);
            hi_.x = std::max(hi_.x, p.x); hi_.y = std::max(hi_.y, p.y);
        }
        const int n = std::max(1, static_cast<int>(std::sqrt(n_tris() / 2.0)));
        nbx_ = nby_ = n;
        inv_hx_ = n / std::max(1e-300, hi_.x - lo_.x);
        inv_hy_ = n / std::max(1e-300, hi_.y - lo_.y);
        buckets_.assign(static_cast<std::size_t>(n) * n, {});
        for (int t = 0; t < n_tris(); ++t) {
            const auto& v = tris[t];
            double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
            for (int i = 0; i < 3; ++i) {
                x0 = std::min(x0, nodes[v[i]].x); x1 = std::max(x1, nodes[v[i]].x);
                y0 = std::min(y0, nodes[v[i]].y); y1 = std::max(y1, nodes[v[i]].y);
            }
            const int bx0 = bucket_coord(x0, lo_.x, inv_hx_, nbx_);
            const int bx1 = bucket_coord(x1, lo_.x, inv_hx_, nbx_);
            const int by0 = bucket_coord(y0, lo_.y, inv_hy_, nby_);
            const int by1 = bucket_coord(y1, lo_.y, inv_hy_, nby_);
            for (int by = by0; by <= by1; ++by)
                for (int bx = bx0; bx <= bx1; ++bx)
                    buckets_[by * nbx_ + bx].push_back(t);
        }
        locator_built_ = true;
    }
};

} // namespace fracsim
