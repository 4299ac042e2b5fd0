#pragma once

#include <Eigen/Dense>

#include "fracsim/fvm.hpp"
#include "fracsim/linsolve.hpp"
#include "fracsim/macro_state.hpp"

namespace fracsim {

// Semismooth classification of one fracture cell from a trial state.
// Trials: penetration q_n = f_n + c_n * jn; driving force d_t = -f_t + c_t * djt
// with friction bound -mu_s * q_n. slip_sign receives the slip direction for
// Slip cells, 0 otherwise.
inline ContactMode classify_contact(double f_n, double f_t, double jn, double djt,
                                    double mu_s, double c_n, double c_t,
                                    double* slip_sign = nullptr) {
    if (slip_sign) *slip_sign = 0.0;
    const double q_n = f_n + c_n * jn;
    if (q_n >= 0.0) return ContactMode::Open;
    const double bound = -mu_s * q_n;
    const double d_t = -f_t + c_t * djt;
    if (std::abs(d_t) < bound) return ContactMode::Stick;
    if (slip_sign) *slip_sign = (d_t > 0.0) ? 1.0 : -1.0;
    return ContactMode::Slip;
}

// Grid-bound discretization cache: MPFA/MPSA weights, face links,
// outer-boundary data. Shared across time-step sizes.
class MacroDisc {
public:
    struct FaceLink {
        int fi = -1, cell = -1;
        int side = 0; // +1 plus side, -1 minus side
    };

    const MixedDimGrid& grid;
    BiotMaterial mat;
    FractureProps props;
    BoundaryConditions bcs;
    std::vector<FaceBC> face_bc;
    std::vector<FaceLink> flink;
    std::vector<Vec2> outer_traction; // Neumann datum per outer face (global comps)
    FlowDisc flow;
    MechDisc mech;

    int n_cells = 0, n_M = 0, n_F = 0;
    std::vector<int> frac_off;

    MacroDisc(const MixedDimGrid& g, const BiotMaterial& m, const FractureProps& pr,
              const BoundaryConditions& b)
        : grid(g), mat(m), props(pr), bcs(b) {
        FRACSIM_REQUIRE(grid.is_split, "macro discretization expects a split grid");
        props.validate();
        const TriMesh& mesh = grid.mesh;
        n_cells = mesh.n_tris();
        n_M = 3 * n_cells;
        frac_off.resize(grid.frac.size() + 1, 0);
        for (std::size_t fi = 0; fi < grid.frac.size(); ++fi)
            frac_off[fi + 1] = frac_off[fi] + 9 * grid.frac[fi].n_cells();
        n_F = frac_off.empty() ? 0 : frac_off.back();

        face_bc.assign(mesh.n_faces(), {});
        flink.assign(mesh.n_faces(), {});
        outer_traction.assign(mesh.n_faces(), Vec2{});

        for (std::size_t fi = 0; fi < grid.frac.size(); ++fi) {
            const auto& fg = grid.frac[fi];
            for (int c = 0; c < fg.n_cells(); ++c) {
                flink[fg.face_plus[c]] = {static_cast<int>(fi), c, +1};
                flink[fg.face_minus[c]] = {static_cast<int>(fi), c, -1};
            }
        }

        const double tol = 1e-9;
        for (int f = 0; f < mesh.n_faces(); ++f) {
            const bool one_sided = (mesh.face_tris[f][0] < 0) != (mesh.face_tris[f][1] < 0);
            if (!one_sided) continue;
            auto& fb = face_bc[f];
            fb.boundary = true;
            if (flink[f].fi >= 0) {
                fb.mech_dirichlet = {true, true}; // interface displacement is Dirichlet data
                fb.flow_dirichlet = false;        // interface flux is Neumann data
                continue;
            }
            const Vec2 c = mesh.face_center[f];
            const Rect& d = grid.domain;
            SideBC side;
            Vec2 n_out{};
            if (std::abs(c.x - d.x0) < tol) { side = bcs.left; n_out = {-1, 0}; }
            else if (std::abs(c.x - d.x1) < tol) { side = bcs.right; n_out = {1, 0}; }
            else if (std::abs(c.y - d.y0) < tol) { side = bcs.bottom; n_out = {0, -1}; }
            else if (std::abs(c.y - d.y1) < tol) { side = bcs.top; n_out = {0, 1}; }
            else { throw Error("fracsim: dangling interior face"); }
            fb.flow_dirichlet = false; // no-flow outer boundary
            switch (side.kind) {
                case SideBCKind::Roller:
                    // normal displacement fixed, tangential traction free
                    fb.mech_dirichlet = {n_out.x != 0.0, n_out.y != 0.0};
                    break;
                case SideBCKind::Free:
                    fb.mech_dirichlet = {false, false};
                    break;
                case SideBCKind::NormalTraction:
                    fb.mech_dirichlet = {false, false};
                    outer_traction[f] = -side.traction * n_out; // compression positive
                    break;
            }
        }

        flow = assemble_matrix_flow(grid, mat, face_bc);
        mech = assemble_matrix_mechanics(grid, mat, face_bc);
    }

    int fdof(int fi, int cell, int slot) const { return frac_off[fi] + 9 * cell + slot; }

    // column of a weight term; -1 means outer boundary datum (value in *data)
    int term_col(const WTerm& t, double* data) const {
        switch (t.kind) {
            case WKind::CellU:
                return 3 * t.id + t.comp;
            case WKind::CellP:
                return 3 * t.id + 2;
            case WKind::BndMech: {
                const auto& l = flink[t.id];
                if (l.fi >= 0)
                    return n_M + fdof(l.fi, l.cell, (l.side > 0 ? 3 : 5) + t.comp);
                if (data)
                    *data = face_bc[t.id].mech_dirichlet[t.comp]
                                ? 0.0
                                : (t.comp == 0 ? outer_traction[t.id].x
                                               : outer_traction[t.id].y);
                return -1;
            }
            case WKind::BndFlow: {
                const auto& l = flink[t.id];
                if (l.fi >= 0) return n_M + fdof(l.fi, l.cell, l.side > 0 ? 1 : 2);
                if (data) *data = 0.0; // no-flow
                return -1;
            }
        }
        return -1;
    }

    // evaluate a weight row against a state (boundary data included)
    double eval(const LinComb& lc, const MacroState& s) const {
        double v = 0.0;
        for (const auto& t : lc.terms) {
            double data = 0.0;
            const int col = term_col(t, &data);
            if (col < 0) {
                v += t.w * data;
            } else if (col < n_M) {
                const int c = col / 3, k = col % 3;
                v += t.w * (k == 0 ? s.u[c].x : (k == 1 ? s.u[c].y : s.p[c]));
            } else {
                const int fd = col - n_M;
                int fi = 0;
                while (frac_off[fi + 1] <= fd) ++fi;
                const int cell = (fd - frac_off[fi]) / 9, slot = (fd - frac_off[fi]) % 9;
                const auto& fs = s.frac[fi];
                const double vals[9] = {fs.p[cell],        fs.lambda_p[cell],
                                        fs.lambda_m[cell], fs.u_plus[cell].x,
                                        fs.u_plus[cell].y, fs.u_minus[cell].x,
                                        fs.u_minus[cell].y, fs.f_n[cell],
                                        fs.f_t[cell]};
                v += t.w * vals[slot];
            }
        }
        return v;
    }
};

struct StepReport {
    int iterations = 0;
    bool converged = false;
    double residual = 0.0;
    double injected_volume = 0.0;     // m^2 over the step
    double matrix_storage_delta = 0.0;
    double fracture_storage_delta = 0.0;
    double mass_audit_rel = 0.0;
    bool modes_frozen = false;
};

// Fully coupled macroscale step solver for one time-step size. The matrix
// Biot block is factorized once; per Newton iteration only the fracture
// block is reassembled and a dense Schur system solved.
class MacroSystem {
public:
    MacroSystem(const MacroDisc& disc, double dt, double newton_tol = 1e-8,
                int max_newton = 30)
        : d_(disc), dt_(dt), tol_(newton_tol), max_iter_(max_newton) {
        FRACSIM_REQUIRE(dt > 0.0, "time step must be positive");
        build_constant_blocks();
        build_scaling_and_factor();
    }

    double dt() const { return dt_; }
    const MacroDisc& disc() const { return d_; }

    MacroState solve_time_step(const MacroState& old, const InjectionSchedule& sched,
                               StepReport* rep = nullptr) {
        const bool first = (old.time == 0.0);
        const Eigen::VectorXd b_M = assemble_b_M(old, first);

        MacroState cur = old;
        std::vector<std::vector<ContactMode>> modes;
        std::vector<std::vector<double>> ssign;
        init_modes(old, modes, ssign);

        StepReport report;
        std::vector<std::size_t> mode_history;
        bool frozen = false;

        for (int it = 0; it < max_iter_; ++it) {
            SpMat ff;
            Eigen::VectorXd b_F;
            assemble_fracture_system(old, cur, modes, ssign, sched, ff, b_F);
            Eigen::VectorXd x = schur_solve(ff, b_M, b_F);
            vec_to_state(x, old, cur);
            report.iterations = it + 1;

            // reclassify and measure the updated-coefficient residual
            auto modes_new = modes;
            auto ssign_new = ssign;
            if (!frozen) classify(old, cur, modes_new, ssign_new);
            const bool modes_stable = (modes_new == modes);

            SpMat ff2;
            Eigen::VectorXd b_F2;
            assemble_fracture_system(old, cur, modes_new, ssign_new, sched, ff2, b_F2);
            const double res = scaled_residual(cur, ff2, b_M, b_F2);
            report.residual = res;

            if (modes_stable && res <= tol_) {
                report.converged = true;
                break;
            }
            // contact chattering guard: freeze modes on a repeated state
            const std::size_t h = modes_hash(modes_new);
            if (!frozen && std::find(mode_history.begin(), mode_history.end(), h) !=
                               mode_history.end()) {
                frozen = true;
                report.modes_frozen = true;
            } else {
                mode_history.push_back(h);
            }
            modes = modes_new;
            ssign = ssign_new;
        }
        FRACSIM_REQUIRE(report.converged,
                        "macro step did not converge in " + std::to_string(max_iter_) +
                            " iterations (residual " + std::to_string(report.residual) + ")");

        finalize_state(old, cur, modes, ssign);
        mass_audit(old, cur, sched, report);
        if (rep) *rep = report;
        return cur;
    }

    // nonlinear residual of a state pair, for tests and audits
    double residual_norm(const MacroState& old, const MacroState& cur,
                         const InjectionSchedule& sched) {
        std::vector<std::vector<ContactMode>> modes;
        std::vector<std::vector<double>> ssign;
        init_modes(cur, modes, ssign);
        SpMat ff;
        Eigen::VectorXd b_F;
        assemble_fracture_system(old, cur, modes, ssign, sched, ff, b_F);
        const Eigen::VectorXd b_M = assemble_b_M(old, old.time == 0.0);
        return scaled_residual(cur, ff, b_M, b_F);
    }

private:
    const MacroDisc& d_;
    double dt_;
    double tol_;
    int max_iter_;

    std::vector<Triplet> trip_MM_, trip_MF_, trip_FM_, trip_FF_const_;
    Eigen::VectorXd b_const_M_, b_const_F_;
    Eigen::VectorXd dr_, dc_; // equilibration scales, global indexing
    SpMat A_MM_, A_MF_, A_FM_; // scaled
    Eigen::SparseLU<SpMat> lu_MM_;
    Eigen::MatrixXd M_red_;

    // ---- constant assembly ----------------------------------------------

    void add_lincomb(std::vector<Triplet>& mm, std::vector<Triplet>& mf,
                     std::vector<Triplet>& fm, std::vector<Triplet>& ffc, int row,
                     const LinComb& lc, double scale, Eigen::VectorXd& b_const) {
        for (const auto& t : lc.terms) {
            double data = 0.0;
            const int col = d_.term_col(t, &data);
            if (col < 0) {
                b_const[row] -= scale * t.w * data;
                continue;
            }
            const bool row_M = row < d_.n_M, col_M = col < d_.n_M;
            const Triplet tr(row_M ? row : row - d_.n_M, col_M ? col : col - d_.n_M,
                             scale * t.w);
            if (row_M && col_M) mm.push_back(tr);
            else if (row_M) mf.push_back(tr);
            else if (col_M) fm.push_back(tr);
            else ffc.push_back(tr);
        }
    }

    void build_constant_blocks() {
        const TriMesh& mesh = d_.grid.mesh;
        b_const_M_ = Eigen::VectorXd::Zero(d_.n_M);
        b_const_F_ = Eigen::VectorXd::Zero(std::max(1, d_.n_F));

        Eigen::VectorXd b_all = Eigen::VectorXd::Zero(d_.n_M + d_.n_F);
        auto addlc = [&](int row, const LinComb& lc, double scale) {
            add_lincomb(trip_MM_, trip_MF_, trip_FM_, trip_FF_const_, row, lc, scale, b_all);
        };

        // momentum: sum_f s T_f - b V = 0
        for (int t = 0; t < d_.n_cells; ++t) {
            for (int i = 0; i < 3; ++i) {
                const int f = mesh.tri_faces[t][i];
                const double s = mesh.outward_sign(t, f);
                addlc(3 * t + 0, d_.mech.face_force[f][0], s);
                addlc(3 * t + 1, d_.mech.face_force[f][1], s);
            }
            b_all[3 * t + 0] += d_.mat.body_force.x * mesh.tri_area[t];
            b_all[3 * t + 1] += d_.mat.body_force.y * mesh.tri_area[t];
        }
        // matrix mass: V (alpha div + S p)^{n+1} + dt sum_f s F_f = rhs
        for (int t = 0; t < d_.n_cells; ++t) {
            const int row = 3 * t + 2;
            const double V = mesh.tri_area[t];
            addlc(row, d_.mech.cell_div[t], d_.mat.alpha * V);
            trip_MM_.push_back({row, row, d_.mat.storage() * V});
            for (int i = 0; i < 3; ++i) {
                const int f = mesh.tri_faces[t][i];
                addlc(row, d_.flow.face_flux[f], dt_ * mesh.outward_sign(t, f));
            }
        }
        // interface and force-balance rows (constant parts)
        for (std::size_t fi = 0; fi < d_.grid.frac.size(); ++fi) {
            const auto& g = d_.grid.frac[fi];
            for (int c = 0; c < g.n_cells(); ++c) {
                const int base = d_.n_M + d_.fdof(static_cast<int>(fi), c, 0);
                // eq 9: (1/kappa) lambda + p_i - tr p = 0 (variable diag added later)
                for (int side = 0; side < 2; ++side) {
                    const int row = base + 1 + side;
                    const int face = side == 0 ? g.face_plus[c] : g.face_minus[c];
                    addlc(row, d_.flow.face_trace[face], -1.0);
                    trip_FF_const_.push_back(
                        {row - d_.n_M, base - d_.n_M + 0, 1.0}); // + p_i
                }
                // force balance: (s_m/A) T_f - (f_n - alpha_f p_i) m + f_t t = 0
                for (int side = 0; side < 2; ++side) {
                    const int face = side == 0 ? g.face_plus[c] : g.face_minus[c];
                    const double s_m =
                        g.normal[c].dot(mesh.face_normal[face]) > 0.0 ? 1.0 : -1.0;
                    const double inv_A = 1.0 / mesh.face_length[face];
                    for (int dcomp = 0; dcomp < 2; ++dcomp) {
                        const int row = base + 3 + 2 * side + dcomp;
                        addlc(row, d_.mech.face_force[face][dcomp], s_m * inv_A);
                        const double md = dcomp == 0 ? g.normal[c].x : g.normal[c].y;
                        const double td = dcomp == 0 ? g.tangent[c].x : g.tangent[c].y;
                        trip_FF_const_.push_back({row - d_.n_M, base - d_.n_M + 7, -md});
                        trip_FF_const_.push_back({row - d_.n_M, base - d_.n_M + 8, td});
                        trip_FF_const_.push_back(
                            {row - d_.n_M, base - d_.n_M + 0, d_.props.alpha_f * md});
                    }
                }
            }
        }
        b_const_M_ = b_all.head(d_.n_M);
        if (d_.n_F > 0) b_const_F_ = b_all.tail(d_.n_F);
    }

    // ---- per-iteration fracture block ------------------------------------

    static double lagged_aperture(const FractureGrid1D& g, const FractureState& fs,
                                  const FractureProps& props, int c) {
        return std::max(aperture_unchecked(g, fs, props, c), 1e-3 * props.a0);
    }
    static double aperture_unchecked(const FractureGrid1D& g, const FractureState& fs,
                                     const FractureProps& props, int c) {
        return props.a0 + jump_normal(g, fs, c) +
               std::tan(props.dilation) * fs.slip_acc[c];
    }

    void init_modes(const MacroState& s, std::vector<std::vector<ContactMode>>& modes,
                    std::vector<std::vector<double>>& ssign) const {
        modes.resize(s.frac.size());
        ssign.resize(s.frac.size());
        for (std::size_t fi = 0; fi < s.frac.size(); ++fi) {
            modes[fi] = s.frac[fi].mode;
            ssign[fi].assign(s.frac[fi].n_cells(), 0.0);
        }
    }

    void classify(const MacroState& old, const MacroState& cur,
                  std::vector<std::vector<ContactMode>>& modes,
                  std::vector<std::vector<double>>& ssign) const {
        for (std::size_t fi = 0; fi < cur.frac.size(); ++fi) {
            const auto& g = d_.grid.frac[fi];
            const auto& fs = cur.frac[fi];
            for (int c = 0; c < fs.n_cells(); ++c) {
                const double c_n = d_.mat.E / g.cell_len[c];
                const double djt = jump_tangential(g, fs, c) -
                                   jump_tangential(g, old.frac[fi], c);
                double s = 0.0;
                modes[fi][c] = classify_contact(fs.f_n[c], fs.f_t[c],
                                                jump_normal(g, fs, c), djt,
                                                d_.props.friction, c_n, c_n, &s);
                ssign[fi][c] = s;
            }
        }
    }

    std::size_t modes_hash(const std::vector<std::vector<ContactMode>>& modes) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (const auto& mf : modes)
            for (ContactMode m : mf) {
                h ^= static_cast<std::uint64_t>(m) + 1;
                h *= 1099511628211ULL;
            }
        return h;
    }

    void assemble_fracture_system(const MacroState& old, const MacroState& cur,
                                  const std::vector<std::vector<ContactMode>>& modes,
                                  const std::vector<std::vector<double>>& ssign,
                                  const InjectionSchedule& sched, SpMat& ff,
                                  Eigen::VectorXd& b_F) const {
        b_F = b_const_F_;
        std::vector<Triplet> trip = trip_FF_const_;
        if (d_.n_F == 0) {
            ff = SpMat(0, 0);
            return;
        }
        const double tanpsi = std::tan(d_.props.dilation);

        for (std::size_t fi = 0; fi < d_.grid.frac.size(); ++fi) {
            const auto& g = d_.grid.frac[fi];
            const auto& fs_old = old.frac[fi];
            const auto& fs_cur = cur.frac[fi];
            const double len_tot = g.total_length();
            const double q_rate = sched.mean_rate(static_cast<int>(fi), old.time,
                                                  old.time + dt_);

            std::vector<double> a_lag(g.n_cells());
            for (int c = 0; c < g.n_cells(); ++c)
                a_lag[c] = lagged_aperture(g, fs_cur, d_.props, c);

            for (int c = 0; c < g.n_cells(); ++c) {
                const int base = d_.fdof(static_cast<int>(fi), c, 0);
                const double len = g.cell_len[c];
                const Vec2 m = g.normal[c], t = g.tangent[c];
                const double s = ssign[fi][c];

                // fracture mass row
                {
                    const int row = base + 0;
                    // aperture change: jn^{n+1} + tan(psi) s jt^{n+1}
                    for (int dcomp = 0; dcomp < 2; ++dcomp) {
                        const double md = dcomp == 0 ? m.x : m.y;
                        const double td = dcomp == 0 ? t.x : t.y;
                        const double w = len * (md + tanpsi * s * td);
                        trip.push_back({row, base + 3 + dcomp, w});
                        trip.push_back({row, base + 5 + dcomp, -w});
                    }
                    trip.push_back({row, base + 0, a_lag[c] * d_.mat.c_p * len});
                    trip.push_back({row, base + 1, -dt_ * len});
                    trip.push_back({row, base + 2, -dt_ * len});
                    const double jn_old = jump_normal(g, fs_old, c);
                    const double jt_old = jump_tangential(g, fs_old, c);
                    b_F[row] += len * (jn_old + tanpsi * s * jt_old) +
                                a_lag[c] * d_.mat.c_p * len * fs_old.p[c] +
                                dt_ * q_rate * len / len_tot;
                }
                // tangential two-point flux toward the next cell
                if (c + 1 < g.n_cells()) {
                    const double k1 =
                        cubic_law_transmissivity(a_lag[c]) / d_.mat.viscosity;
                    const double k2 =
                        cubic_law_transmissivity(a_lag[c + 1]) / d_.mat.viscosity;
                    const double trans =
                        1.0 / (0.5 * g.cell_len[c] / k1 + 0.5 * g.cell_len[c + 1] / k2);
                    const int r1 = base + 0;
                    const int r2 = d_.fdof(static_cast<int>(fi), c + 1, 0);
                    trip.push_back({r1, base + 0, dt_ * trans});
                    trip.push_back({r1, r2 + 0, -dt_ * trans});
                    trip.push_back({r2, r2 + 0, dt_ * trans});
                    trip.push_back({r2, base + 0, -dt_ * trans});
                }
                // eq 9 variable diagonal: (1/kappa) lambda
                {
                    const double kappa =
                        interface_permeability(a_lag[c], d_.mat.viscosity);
                    trip.push_back({base + 1, base + 1, 1.0 / kappa});
                    trip.push_back({base + 2, base + 2, 1.0 / kappa});
                }
                // contact rows
                {
                    const int row_n = base + 7, row_t = base + 8;
                    switch (modes[fi][c]) {
                        case ContactMode::Open:
                            trip.push_back({row_n, base + 7, 1.0});
                            trip.push_back({row_t, base + 8, 1.0});
                            break;
                        case ContactMode::Stick:
                            for (int dcomp = 0; dcomp < 2; ++dcomp) {
                                const double md = dcomp == 0 ? m.x : m.y;
                                const double td = dcomp == 0 ? t.x : t.y;
                                trip.push_back({row_n, base + 3 + dcomp, md});
                                trip.push_back({row_n, base + 5 + dcomp, -md});
                                trip.push_back({row_t, base + 3 + dcomp, td});
                                trip.push_back({row_t, base + 5 + dcomp, -td});
                            }
                            b_F[row_t] += jump_tangential(g, old.frac[fi], c);
                            break;
                        case ContactMode::Slip:
                            for (int dcomp = 0; dcomp < 2; ++dcomp) {
                                const double md = dcomp == 0 ? m.x : m.y;
                                trip.push_back({row_n, base + 3 + dcomp, md});
                                trip.push_back({row_n, base + 5 + dcomp, -md});
                            }
                            trip.push_back({row_t, base + 8, 1.0});
                            trip.push_back({row_t, base + 7, -s * d_.props.friction});
                            break;
                    }
                }
            }
        }
        ff = SpMat(d_.n_F, d_.n_F);
        ff.setFromTriplets(trip.begin(), trip.end());
    }

    Eigen::VectorXd assemble_b_M(const MacroState& old, bool first_step) const {
        Eigen::VectorXd b = b_const_M_;
        const TriMesh& mesh = d_.grid.mesh;
        for (int t = 0; t < d_.n_cells; ++t) {
            const int row = 3 * t + 2;
            const double V = mesh.tri_area[t];
            const double div_old = first_step ? 0.0 : d_.eval(d_.mech.cell_div[t], old);
            b[row] += d_.mat.alpha * V * div_old + d_.mat.storage() * V * old.p[t];
        }
        return b;
    }

    // ---- scaling, factorization, Schur solve ------------------------------

    void build_scaling_and_factor() {
        const int n = d_.n_M + d_.n_F;
        // representative system for equilibration
        std::vector<Triplet> all;
        all.reserve(trip_MM_.size() + trip_MF_.size() + trip_FM_.size() +
                    trip_FF_const_.size());
        for (const auto& t : trip_MM_) all.push_back(t);
        for (const auto& t : trip_MF_) all.push_back({t.row(), d_.n_M + t.col(), t.value()});
        for (const auto& t : trip_FM_) all.push_back({d_.n_M + t.row(), t.col(), t.value()});
        {
            MacroState ref = MacroState::zero(d_.grid);
            std::vector<std::vector<ContactMode>> modes;
            std::vector<std::vector<double>> ssign;
            init_modes(ref, modes, ssign);
            SpMat ff;
            Eigen::VectorXd b_F;
            assemble_fracture_system(ref, ref, modes, ssign, {}, ff, b_F);
            for (int k = 0; k < ff.outerSize(); ++k)
                for (SpMat::InnerIterator it(ff, k); it; ++it)
                    all.push_back({d_.n_M + static_cast<int>(it.row()),
                                   d_.n_M + static_cast<int>(it.col()), it.value()});
        }
        SpMat A(n, n);
        A.setFromTriplets(all.begin(), all.end());
        equilibrate(A, dr_, dc_);

        auto scaled = [&](const std::vector<Triplet>& trips, int roff, int coff, int nr,
                          int nc) {
            std::vector<Triplet> out;
            out.reserve(trips.size());
            for (const auto& t : trips)
                out.push_back({t.row(), t.col(),
                               t.value() * dr_(roff + t.row()) * dc_(coff + t.col())});
            SpMat m(nr, nc);
            m.setFromTriplets(out.begin(), out.end());
            return m;
        };
        A_MM_ = scaled(trip_MM_, 0, 0, d_.n_M, d_.n_M);
        A_MF_ = scaled(trip_MF_, 0, d_.n_M, d_.n_M, std::max(1, d_.n_F));
        A_FM_ = scaled(trip_FM_, d_.n_M, 0, std::max(1, d_.n_F), d_.n_M);

        lu_MM_.analyzePattern(A_MM_);
        lu_MM_.factorize(A_MM_);
        FRACSIM_REQUIRE(lu_MM_.info() == Eigen::Success,
                        "macro system: singular Biot block");

        // M_red = A_FM A_MM^{-1} A_MF, in column blocks
        M_red_ = Eigen::MatrixXd::Zero(d_.n_F, d_.n_F);
        const int blk = 64;
        for (int c0 = 0; c0 < d_.n_F; c0 += blk) {
            const int nc = std::min(blk, d_.n_F - c0);
            Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(d_.n_M, nc);
            for (int j = 0; j < nc; ++j) rhs.col(j) = A_MF_.col(c0 + j);
            const Eigen::MatrixXd sol = lu_MM_.solve(rhs);
            M_red_.middleCols(c0, nc) = A_FM_ * sol;
        }
    }

    Eigen::VectorXd schur_solve(const SpMat& ff, const Eigen::VectorXd& b_M,
                                const Eigen::VectorXd& b_F) const {
        Eigen::VectorXd bs_M = b_M.cwiseProduct(dr_.head(d_.n_M));
        const Eigen::VectorXd y_M = lu_MM_.solve(bs_M);
        Eigen::VectorXd x(d_.n_M + d_.n_F);
        if (d_.n_F == 0) {
            x.head(d_.n_M) = y_M.cwiseProduct(dc_.head(d_.n_M));
            return x;
        }
        Eigen::MatrixXd S = -M_red_;
        for (int k = 0; k < ff.outerSize(); ++k)
            for (SpMat::InnerIterator it(ff, k); it; ++it)
                S(it.row(), it.col()) += it.value() * dr_(d_.n_M + it.row()) *
                                         dc_(d_.n_M + it.col());
        Eigen::VectorXd bs_F = b_F.cwiseProduct(dr_.tail(d_.n_F));
        const Eigen::VectorXd rhs_F = bs_F - A_FM_ * y_M;
        Eigen::PartialPivLU<Eigen::MatrixXd> slu(S);
        const Eigen::VectorXd x_F = slu.solve(rhs_F);
        FRACSIM_REQUIRE((S * x_F - rhs_F).cwiseAbs().maxCoeff() <=
                            1e-8 * (1.0 + rhs_F.cwiseAbs().maxCoeff()),
                        "macro system: singular fracture Schur complement");
        const Eigen::VectorXd x_M = y_M - lu_MM_.solve(Eigen::VectorXd(A_MF_ * x_F));
        x.head(d_.n_M) = x_M.cwiseProduct(dc_.head(d_.n_M));
        x.tail(d_.n_F) = x_F.cwiseProduct(dc_.tail(d_.n_F));
        return x;
    }

    void vec_to_state(const Eigen::VectorXd& x, const MacroState& old,
                      MacroState& s) const {
        for (int c = 0; c < d_.n_cells; ++c) {
            s.u[c] = {x[3 * c + 0], x[3 * c + 1]};
            s.p[c] = x[3 * c + 2];
        }
        for (std::size_t fi = 0; fi < s.frac.size(); ++fi) {
            auto& fs = s.frac[fi];
            for (int c = 0; c < fs.n_cells(); ++c) {
                const int base = d_.n_M + d_.fdof(static_cast<int>(fi), c, 0);
                fs.p[c] = x[base + 0];
                fs.lambda_p[c] = x[base + 1];
                fs.lambda_m[c] = x[base + 2];
                fs.u_plus[c] = {x[base + 3], x[base + 4]};
                fs.u_minus[c] = {x[base + 5], x[base + 6]};
                fs.f_n[c] = x[base + 7];
                fs.f_t[c] = x[base + 8];
            }
        }
        s.time = old.time + dt_;
    }

    Eigen::VectorXd state_to_vec(const MacroState& s) const {
        Eigen::VectorXd x(d_.n_M + d_.n_F);
        for (int c = 0; c < d_.n_cells; ++c) {
            x[3 * c + 0] = s.u[c].x;
            x[3 * c + 1] = s.u[c].y;
            x[3 * c + 2] = s.p[c];
        }
        for (std::size_t fi = 0; fi < s.frac.size(); ++fi) {
            const auto& fs = s.frac[fi];
            for (int c = 0; c < fs.n_cells(); ++c) {
                const int base = d_.n_M + d_.fdof(static_cast<int>(fi), c, 0);
                x[base + 0] = fs.p[c];
                x[base + 1] = fs.lambda_p[c];
                x[base + 2] = fs.lambda_m[c];
                x[base + 3] = fs.u_plus[c].x;
                x[base + 4] = fs.u_plus[c].y;
                x[base + 5] = fs.u_minus[c].x;
                x[base + 6] = fs.u_minus[c].y;
                x[base + 7] = fs.f_n[c];
                x[base + 8] = fs.f_t[c];
            }
        }
        return x;
    }

    double scaled_residual(const MacroState& cur, const SpMat& ff,
                           const Eigen::VectorXd& b_M, const Eigen::VectorXd& b_F) const {
        const Eigen::VectorXd x = state_to_vec(cur);
        Eigen::VectorXd xs(x.size());
        for (int i = 0; i < x.size(); ++i) xs[i] = x[i] / dc_(i);
        Eigen::VectorXd r_M = A_MM_ * xs.head(d_.n_M) - b_M.cwiseProduct(dr_.head(d_.n_M));
        double bmax = b_M.cwiseProduct(dr_.head(d_.n_M)).cwiseAbs().maxCoeff();
        double rmax;
        if (d_.n_F > 0) {
            r_M += A_MF_ * xs.tail(d_.n_F);
            Eigen::VectorXd r_F = A_FM_ * xs.head(d_.n_M) -
                                  b_F.cwiseProduct(dr_.tail(d_.n_F));
            for (int k = 0; k < ff.outerSize(); ++k)
                for (SpMat::InnerIterator it(ff, k); it; ++it)
                    r_F(it.row()) += it.value() * dr_(d_.n_M + it.row()) *
                                     dc_(d_.n_M + it.col()) * xs(d_.n_M + it.col());
            rmax = std::max(r_M.cwiseAbs().maxCoeff(), r_F.cwiseAbs().maxCoeff());
            bmax = std::max(bmax, b_F.cwiseProduct(dr_.tail(d_.n_F)).cwiseAbs().maxCoeff());
        } else {
            rmax = r_M.cwiseAbs().maxCoeff();
        }
        return rmax / std::max(bmax, 1e-30);
    }

    void finalize_state(const MacroState& old, MacroState& cur,
                        const std::vector<std::vector<ContactMode>>& modes,
                        const std::vector<std::vector<double>>& ssign) const {
        for (std::size_t fi = 0; fi < cur.frac.size(); ++fi) {
            const auto& g = d_.grid.frac[fi];
            auto& fs = cur.frac[fi];
            for (int c = 0; c < fs.n_cells(); ++c) {
                fs.mode[c] = modes[fi][c];
                fs.slip_acc[c] = old.frac[fi].slip_acc[c];
                if (modes[fi][c] == ContactMode::Slip)
                    fs.slip_acc[c] += std::abs(jump_tangential(g, fs, c) -
                                               jump_tangential(g, old.frac[fi], c));
                FRACSIM_REQUIRE(aperture_unchecked(g, fs, d_.props, c) > 0.0,
                                "converged state has nonpositive aperture");
                (void)ssign;
            }
        }
    }

    void mass_audit(const MacroState& old, const MacroState& cur,
                    const InjectionSchedule& sched, StepReport& rep) const {
        const TriMesh& mesh = d_.grid.mesh;
        const bool first = (old.time == 0.0);
        double dm_matrix = 0.0;
        for (int t = 0; t < d_.n_cells; ++t) {
            const double div_new = d_.eval(d_.mech.cell_div[t], cur);
            const double div_old = first ? 0.0 : d_.eval(d_.mech.cell_div[t], old);
            dm_matrix += mesh.tri_area[t] *
                         (d_.mat.alpha * (div_new - div_old) +
                          d_.mat.storage() * (cur.p[t] - old.p[t]));
        }
        double dm_frac = 0.0, injected = 0.0;
        const double tanpsi = std::tan(d_.props.dilation);
        for (std::size_t fi = 0; fi < cur.frac.size(); ++fi) {
            const auto& g = d_.grid.frac[fi];
            const auto& fo = old.frac[fi];
            const auto& fc = cur.frac[fi];
            injected += sched.mean_rate(static_cast<int>(fi), old.time,
                                        old.time + dt_) * dt_;
            for (int c = 0; c < fc.n_cells(); ++c) {
                const double a_lag = lagged_aperture(g, fc, d_.props, c);
                const double da =
                    (jump_normal(g, fc, c) - jump_normal(g, fo, c)) +
                    tanpsi * (fc.slip_acc[c] - fo.slip_acc[c]);
                dm_frac += g.cell_len[c] *
                           (da + a_lag * d_.mat.c_p * (fc.p[c] - fo.p[c]));
            }
        }
        rep.injected_volume = injected;
        rep.matrix_storage_delta = dm_matrix;
        rep.fracture_storage_delta = dm_frac;
        const double scale =
            std::max({std::abs(injected), std::abs(dm_matrix) + std::abs(dm_frac), 1e-30});
        rep.mass_audit_rel = std::abs(injected - dm_matrix - dm_frac) / scale;
    }
};

} // namespace fracsim
