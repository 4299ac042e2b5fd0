#pragma once

#include "fracsim/materials.hpp"
#include "fracsim/mixed_grid.hpp"

namespace fracsim {

enum class ContactMode : int { Open = 0, Stick = 1, Slip = 2 };

// State of one fracture's 1D grid.
struct FractureState {
    std::vector<double> p;        // fluid pressure, Pa
    std::vector<double> lambda_p; // interface flux to + side matrix, outward of matrix sign
    std::vector<double> lambda_m;
    std::vector<Vec2> u_plus;     // trace displacement of the + surface, m
    std::vector<Vec2> u_minus;
    std::vector<double> f_n;      // contact traction, normal (<= 0 in contact), Pa
    std::vector<double> f_t;      // contact traction, tangential, Pa
    std::vector<double> slip_acc; // accumulated |slip|, m
    std::vector<ContactMode> mode;

    void resize(int n) {
        p.assign(n, 0.0);
        lambda_p.assign(n, 0.0);
        lambda_m.assign(n, 0.0);
        u_plus.assign(n, Vec2{});
        u_minus.assign(n, Vec2{});
        f_n.assign(n, 0.0);
        f_t.assign(n, 0.0);
        slip_acc.assign(n, 0.0);
        mode.assign(n, ContactMode::Stick);
    }
    int n_cells() const { return static_cast<int>(p.size()); }
};

struct MacroState {
    std::vector<Vec2> u;    // matrix cell displacement
    std::vector<double> p;  // matrix cell pressure
    std::vector<FractureState> frac;
    double time = 0.0;

    static MacroState zero(const MixedDimGrid& grid) {
        MacroState s;
        s.u.assign(grid.mesh.n_tris(), Vec2{});
        s.p.assign(grid.mesh.n_tris(), 0.0);
        s.frac.resize(grid.frac.size());
        for (std::size_t i = 0; i < grid.frac.size(); ++i)
            s.frac[i].resize(grid.frac[i].n_cells());
        return s;
    }
};

// displacement jump across a fracture cell: u_plus - u_minus
inline Vec2 jump(const FractureState& fs, int c) { return fs.u_plus[c] - fs.u_minus[c]; }

inline double jump_normal(const FractureGrid1D& g, const FractureState& fs, int c) {
    return jump(fs, c).dot(g.normal[c]);
}
inline double jump_tangential(const FractureGrid1D& g, const FractureState& fs, int c) {
    return jump(fs, c).dot(g.tangent[c]);
}

// aperture law: a = a0 + [[u]]_n + tan(psi) * accumulated slip
inline double aperture(const FractureGrid1D& g, const FractureState& fs,
                       const FractureProps& props, int c) {
    return props.a0 + jump_normal(g, fs, c) + std::tan(props.dilation) * fs.slip_acc[c];
}

inline std::vector<double> apertures(const FractureGrid1D& g, const FractureState& fs,
                                     const FractureProps& props) {
    std::vector<double> a(fs.n_cells());
    for (int c = 0; c < fs.n_cells(); ++c) {
        a[c] = aperture(g, fs, props, c);
        FRACSIM_REQUIRE(a[c] > 0.0, "nonphysical aperture (interpenetration)");
    }
    return a;
}

} // namespace fracsim
