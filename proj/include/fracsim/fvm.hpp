#pragma once

#include <Eigen/Dense>

#include "fracsim/macro_state.hpp"
#include "fracsim/materials.hpp"
#include "fracsim/mixed_grid.hpp"

namespace fracsim {

// Column identities for discrete weight rows.
enum class WKind : std::uint8_t {
    CellU = 0,   // matrix cell displacement component
    CellP = 1,   // matrix cell pressure
    BndMech = 2, // boundary face mechanical datum (Dirichlet value or Neumann traction)
    BndFlow = 3, // boundary face flow datum (outward flux for Neumann faces)
};

struct WTerm {
    WKind kind;
    std::uint8_t comp;
    int id;
    double w;
};

struct LinComb {
    std::vector<WTerm> terms;

    void add(WKind k, int id, int comp, double w) {
        if (w != 0.0) terms.push_back({k, static_cast<std::uint8_t>(comp), id, w});
    }
    void compress() {
        std::sort(terms.begin(), terms.end(), [](const WTerm& a, const WTerm& b) {
            if (a.kind != b.kind) return a.kind < b.kind;
            if (a.id != b.id) return a.id < b.id;
            return a.comp < b.comp;
        });
        std::size_t out = 0;
        for (std::size_t i = 0; i < terms.size();) {
            WTerm acc = terms[i];
            std::size_t j = i + 1;
            while (j < terms.size() && terms[j].kind == acc.kind && terms[j].id == acc.id &&
                   terms[j].comp == acc.comp)
                acc.w += terms[j++].w;
            if (std::abs(acc.w) > 0.0) terms[out++] = acc;
            i = j;
        }
        terms.resize(out);
    }
};

// Per-face boundary condition classification (global x/y components for
// mechanics). Interior faces keep the defaults.
struct FaceBC {
    bool boundary = false;
    std::array<bool, 2> mech_dirichlet{false, false};
    bool flow_dirichlet = false;
};

// Multipoint flux discretization (MPFA-O on simplices, continuity points at
// eta = 1/3). Produces, per face, the integrated flux along face_normal as a
// linear combination of cell pressures and boundary data, plus pressure
// traces on boundary Neumann faces.
struct FlowDisc {
    std::vector<LinComb> face_flux;
    std::vector<LinComb> face_trace; // filled for boundary Neumann faces
};

// Multipoint stress discretization (MPSA-O) with cellwise Biot pressure in
// the tractions, plus a consistent cell divergence reconstruction whose
// pressure part provides the Biot stabilization.
struct MechDisc {
    std::vector<std::array<LinComb, 2>> face_force;
    std::vector<LinComb> cell_div;
};

namespace fvmdetail {

struct SubFace {
    int face = -1;
    int t_pos = -1, t_neg = -1; // local sub-cell indices; -1 when absent
    Vec2 n;                     // stored face normal (neg -> pos)
    Vec2 cp;                    // continuity point
    double a_sf = 0.0;          // sub-face length
    double out_sign = 1.0;      // +1 when n is outward of the single adjacent tri
};

struct Region {
    std::vector<int> cells; // global tri ids (sub-cell order)
    std::vector<SubFace> sf;
};

inline Region build_region(const TriMesh& mesh, int v, double eta = 1.0 / 3.0) {
    Region r;
    const auto& inc = mesh.node_tris[v];
    r.cells = inc;
    std::vector<int> seen_faces;
    for (int t : inc) {
        for (int i = 0; i < 3; ++i) {
            const int f = mesh.tri_faces[t][i];
            const auto& fn = mesh.faces[f];
            if (fn[0] != v && fn[1] != v) continue;
            if (std::find(seen_faces.begin(), seen_faces.end(), f) != seen_faces.end())
                continue;
            seen_faces.push_back(f);
            SubFace s;
            s.face = f;
            s.n = mesh.face_normal[f];
            s.cp = mesh.face_center[f] + eta * (mesh.nodes[v] - mesh.face_center[f]);
            s.a_sf = 0.5 * mesh.face_length[f];
            auto local = [&](int gt) {
                if (gt < 0) return -1;
                for (std::size_t k = 0; k < inc.size(); ++k)
                    if (inc[k] == gt) return static_cast<int>(k);
                return -1;
            };
            s.t_pos = local(mesh.face_tris[f][0]);
            s.t_neg = local(mesh.face_tris[f][1]);
            FRACSIM_REQUIRE(s.t_pos >= 0 || s.t_neg >= 0, "dangling face in region");
            if (s.t_pos < 0 || s.t_neg < 0) {
                s.out_sign = (s.t_neg >= 0) ? 1.0 : -1.0;
                // boundary data lives as one value per face, imposed at its center
                s.cp = mesh.face_center[f];
            }
            r.sf.push_back(s);
        }
    }
    return r;
}

} // namespace fvmdetail

inline FlowDisc assemble_matrix_flow(const MixedDimGrid& grid, const BiotMaterial& mat,
                                     const std::vector<FaceBC>& bc) {
    mat.validate();
    const TriMesh& mesh = grid.mesh;
    FRACSIM_REQUIRE(static_cast<int>(bc.size()) == mesh.n_faces(), "face bc size mismatch");
    FlowDisc disc;
    disc.face_flux.resize(mesh.n_faces());
    disc.face_trace.resize(mesh.n_faces());
    const double mobility = mat.permeability / mat.viscosity;

    for (int v = 0; v < mesh.n_nodes(); ++v) {
        if (mesh.node_tris[v].empty()) continue;
        const auto reg = fvmdetail::build_region(mesh, v);
        const int k = static_cast<int>(reg.cells.size());
        const int n_unk = 2 * k;

        int n_bnd = 0;
        for (const auto& s : reg.sf) n_bnd += (s.t_pos < 0 || s.t_neg < 0) ? 1 : 0;
        const int n_cols = k + n_bnd;

        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n_unk, n_unk);
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n_unk, n_cols);
        std::vector<int> bnd_face_of_col(n_bnd, -1);

        double h_scale = 0.0;
        for (const auto& s : reg.sf) h_scale = std::max(h_scale, 2.0 * s.a_sf);

        int row = 0, bcol = 0;
        for (const auto& s : reg.sf) {
            if (s.t_pos >= 0 && s.t_neg >= 0) {
                // flux continuity: K g1 . n - K g2 . n = 0
                for (int d = 0; d < 2; ++d) {
                    M(row, 2 * s.t_pos + d) += mobility * (d == 0 ? s.n.x : s.n.y);
                    M(row, 2 * s.t_neg + d) -= mobility * (d == 0 ? s.n.x : s.n.y);
                }
                ++row;
                // potential continuity at the continuity point, scaled by 1/h
                const Vec2 d1 = s.cp - mesh.tri_centroid[reg.cells[s.t_pos]];
                const Vec2 d2 = s.cp - mesh.tri_centroid[reg.cells[s.t_neg]];
                M(row, 2 * s.t_pos + 0) += d1.x / h_scale;
                M(row, 2 * s.t_pos + 1) += d1.y / h_scale;
                M(row, 2 * s.t_neg + 0) -= d2.x / h_scale;
                M(row, 2 * s.t_neg + 1) -= d2.y / h_scale;
                B(row, s.t_pos) -= 1.0 / h_scale;
                B(row, s.t_neg) += 1.0 / h_scale;
                ++row;
            } else {
                const int t = (s.t_pos >= 0) ? s.t_pos : s.t_neg;
                bnd_face_of_col[bcol] = s.face;
                if (bc[s.face].flow_dirichlet) {
                    const Vec2 d1 = s.cp - mesh.tri_centroid[reg.cells[t]];
                    M(row, 2 * t + 0) += d1.x / h_scale;
                    M(row, 2 * t + 1) += d1.y / h_scale;
                    B(row, t) -= 1.0 / h_scale;
                    B(row, k + bcol) += 1.0 / h_scale;
                } else {
                    // prescribed outward flux density
                    const Vec2 n_out = s.out_sign * s.n;
                    M(row, 2 * t + 0) -= mobility * n_out.x;
                    M(row, 2 * t + 1) -= mobility * n_out.y;
                    B(row, k + bcol) += 1.0;
                }
                ++row;
                ++bcol;
            }
        }
        FRACSIM_REQUIRE(row == n_unk, "mpfa: region equation count mismatch");

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
        const Eigen::MatrixXd W = lu.solve(B);
        FRACSIM_REQUIRE((M * W - B).cwiseAbs().maxCoeff() <=
                            1e-7 * (1.0 + B.cwiseAbs().maxCoeff()),
                        "mpfa: singular interaction region (degenerate cell geometry)");

        auto emit = [&](LinComb& lc, int urow, double scale) {
            for (int c = 0; c < k; ++c)
                lc.add(WKind::CellP, reg.cells[c], 0, scale * W(urow, c));
            for (int b2 = 0; b2 < n_bnd; ++b2)
                lc.add(WKind::BndFlow, bnd_face_of_col[b2], 0, scale * W(urow, k + b2));
        };

        for (const auto& s : reg.sf) {
            const bool is_bnd = (s.t_pos < 0 || s.t_neg < 0);
            if (is_bnd && !bc[s.face].flow_dirichlet) {
                // flux along stored normal equals the prescribed datum exactly
                disc.face_flux[s.face].add(WKind::BndFlow, s.face, 0, s.out_sign * s.a_sf);
                // pressure trace from the cell-side reconstruction
                const int t = (s.t_pos >= 0) ? s.t_pos : s.t_neg;
                const Vec2 d1 = s.cp - mesh.tri_centroid[reg.cells[t]];
                const double wt = s.a_sf / (2.0 * s.a_sf); // sub-face share of the face
                auto& tr = disc.face_trace[s.face];
                tr.add(WKind::CellP, reg.cells[t], 0, wt);
                emit(tr, 2 * t + 0, wt * d1.x);
                emit(tr, 2 * t + 1, wt * d1.y);
            } else {
                const int t = (s.t_pos >= 0) ? s.t_pos : s.t_neg;
                // integrated flux along the stored normal
                LinComb& lc = disc.face_flux[s.face];
                emit(lc, 2 * t + 0, -mobility * s.n.x * s.a_sf);
                emit(lc, 2 * t + 1, -mobility * s.n.y * s.a_sf);
            }
        }
    }
    for (auto& lc : disc.face_flux) lc.compress();
    for (auto& lc : disc.face_trace) lc.compress();
    return disc;
}

inline MechDisc assemble_matrix_mechanics(const MixedDimGrid& grid, const BiotMaterial& mat,
                                          const std::vector<FaceBC>& bc) {
    mat.validate();
    FRACSIM_REQUIRE(mat.nu < 0.5, "nu >= 0.5 is not admissible");
    const TriMesh& mesh = grid.mesh;
    FRACSIM_REQUIRE(static_cast<int>(bc.size()) == mesh.n_faces(), "face bc size mismatch");
    MechDisc disc;
    disc.face_force.resize(mesh.n_faces());
    disc.cell_div.resize(mesh.n_tris());

    const double lam = mat.lame_lambda();
    const double mu = mat.shear_modulus();
    const double e_scale = 2.0 * mu + lam;

    // traction components from a displacement gradient: t_d = sum_g S[d][g] G[g]
    // G ordered (g00, g01, g10, g11); sigma = lam tr(sym G) I + 2 mu sym(G)
    auto traction_row = [&](const Vec2& n, int d, double out[4]) {
        if (d == 0) {
            out[0] = (lam + 2.0 * mu) * n.x;
            out[1] = mu * n.y;
            out[2] = mu * n.y;
            out[3] = lam * n.x;
        } else {
            out[0] = lam * n.y;
            out[1] = mu * n.x;
            out[2] = mu * n.x;
            out[3] = (lam + 2.0 * mu) * n.y;
        }
    };

    for (int v = 0; v < mesh.n_nodes(); ++v) {
        if (mesh.node_tris[v].empty()) continue;
        const auto reg = fvmdetail::build_region(mesh, v);
        const int k = static_cast<int>(reg.cells.size());
        const int n_unk = 4 * k;

        int n_bnd = 0;
        for (const auto& s : reg.sf) n_bnd += (s.t_pos < 0 || s.t_neg < 0) ? 1 : 0;
        // columns: cell u (2k), cell p (k), boundary data (2 per boundary sub-face)
        const int n_cols = 3 * k + 2 * n_bnd;

        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n_unk, n_unk);
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n_unk, n_cols);
        std::vector<int> bnd_face_of_col(n_bnd, -1);

        double h_scale = 0.0;
        for (const auto& s : reg.sf) h_scale = std::max(h_scale, 2.0 * s.a_sf);

        int row = 0, bcol = 0;
        double trow[4];
        for (const auto& s : reg.sf) {
            if (s.t_pos >= 0 && s.t_neg >= 0) {
                for (int d = 0; d < 2; ++d) {
                    traction_row(s.n, d, trow);
                    for (int g = 0; g < 4; ++g) {
                        M(row, 4 * s.t_pos + g) += trow[g] / e_scale;
                        M(row, 4 * s.t_neg + g) -= trow[g] / e_scale;
                    }
                    // Biot pressure part of the traction: -alpha p n_d
                    const double nd = (d == 0) ? s.n.x : s.n.y;
                    B(row, 2 * k + s.t_pos) += mat.alpha * nd / e_scale;
                    B(row, 2 * k + s.t_neg) -= mat.alpha * nd / e_scale;
                    ++row;
                }
                const Vec2 d1 = s.cp - mesh.tri_centroid[reg.cells[s.t_pos]];
                const Vec2 d2 = s.cp - mesh.tri_centroid[reg.cells[s.t_neg]];
                for (int d = 0; d < 2; ++d) {
                    M(row, 4 * s.t_pos + 2 * d + 0) += d1.x / h_scale;
                    M(row, 4 * s.t_pos + 2 * d + 1) += d1.y / h_scale;
                    M(row, 4 * s.t_neg + 2 * d + 0) -= d2.x / h_scale;
                    M(row, 4 * s.t_neg + 2 * d + 1) -= d2.y / h_scale;
                    B(row, 2 * s.t_pos + d) -= 1.0 / h_scale;
                    B(row, 2 * s.t_neg + d) += 1.0 / h_scale;
                    ++row;
                }
            } else {
                const int t = (s.t_pos >= 0) ? s.t_pos : s.t_neg;
                bnd_face_of_col[bcol] = s.face;
                const Vec2 n_out = s.out_sign * s.n;
                const Vec2 d1 = s.cp - mesh.tri_centroid[reg.cells[t]];
                for (int d = 0; d < 2; ++d) {
                    if (bc[s.face].mech_dirichlet[d]) {
                        M(row, 4 * t + 2 * d + 0) += d1.x / h_scale;
                        M(row, 4 * t + 2 * d + 1) += d1.y / h_scale;
                        B(row, 2 * t + d) -= 1.0 / h_scale;
                        B(row, 3 * k + 2 * bcol + d) += 1.0 / h_scale;
                    } else {
                        // prescribed traction on the outward normal
                        traction_row(n_out, d, trow);
                        for (int g = 0; g < 4; ++g) M(row, 4 * t + g) += trow[g] / e_scale;
                        const double nd = (d == 0) ? n_out.x : n_out.y;
                        B(row, 2 * k + t) += mat.alpha * nd / e_scale;
                        B(row, 3 * k + 2 * bcol + d) += 1.0 / e_scale;
                    }
                    ++row;
                }
                ++bcol;
            }
        }
        FRACSIM_REQUIRE(row == n_unk, "mpsa: region equation count mismatch");

        Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
        const Eigen::MatrixXd W = lu.solve(B);
        FRACSIM_REQUIRE((M * W - B).cwiseAbs().maxCoeff() <=
                            1e-7 * (1.0 + B.cwiseAbs().maxCoeff()),
                        "mpsa: singular interaction region (degenerate cell geometry)");

        auto emit = [&](LinComb& lc, int urow, double scale) {
            if (scale == 0.0) return;
            for (int c = 0; c < k; ++c) {
                lc.add(WKind::CellU, reg.cells[c], 0, scale * W(urow, 2 * c + 0));
                lc.add(WKind::CellU, reg.cells[c], 1, scale * W(urow, 2 * c + 1));
                lc.add(WKind::CellP, reg.cells[c], 0, scale * W(urow, 2 * k + c));
            }
            for (int b2 = 0; b2 < n_bnd; ++b2) {
                lc.add(WKind::BndMech, bnd_face_of_col[b2], 0,
                       scale * W(urow, 3 * k + 2 * b2 + 0));
                lc.add(WKind::BndMech, bnd_face_of_col[b2], 1,
                       scale * W(urow, 3 * k + 2 * b2 + 1));
            }
        };

        for (const auto& s : reg.sf) {
            const bool is_bnd = (s.t_pos < 0 || s.t_neg < 0);
            const int t = (s.t_pos >= 0) ? s.t_pos : s.t_neg;
            for (int d = 0; d < 2; ++d) {
                LinComb& lc = disc.face_force[s.face][d];
                if (is_bnd && !bc[s.face].mech_dirichlet[d]) {
                    lc.add(WKind::BndMech, s.face, d, s.out_sign * s.a_sf);
                    continue;
                }
                traction_row(s.n, d, trow);
                for (int g = 0; g < 4; ++g) emit(lc, 4 * t + g, trow[g] * s.a_sf);
                const double nd = (d == 0) ? s.n.x : s.n.y;
                lc.add(WKind::CellP, reg.cells[t], 0, -mat.alpha * nd * s.a_sf);
            }
        }

        // consistent divergence: each sub-cell covers a third of its triangle
        for (int c = 0; c < k; ++c) {
            LinComb& lc = disc.cell_div[reg.cells[c]];
            emit(lc, 4 * c + 0, 1.0 / 3.0);
            emit(lc, 4 * c + 3, 1.0 / 3.0);
        }
    }
    for (auto& ff : disc.face_force) {
        ff[0].compress();
        ff[1].compress();
    }
    for (auto& lc : disc.cell_div) lc.compress();
    return disc;
}

} // namespace fracsim
