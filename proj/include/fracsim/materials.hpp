#pragma once

#include "fracsim/core.hpp"

namespace fracsim {

struct BiotMaterial {
    double E = 0.0;            // Young's modulus, Pa
    double nu = 0.0;           // Poisson ratio
    double alpha = 0.0;        // Biot coefficient
    double porosity = 0.0;
    double c_p = 0.0;          // fluid compressibility, 1/Pa
    double permeability = 0.0; // m^2
    double viscosity = 0.0;    // Pa s
    Vec2 body_force{};         // N/m^3

    double bulk_modulus() const { return E / (3.0 * (1.0 - 2.0 * nu)); }
    double shear_modulus() const { return E / (2.0 * (1.0 + nu)); }
    double lame_lambda() const {
        return E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    }
    // storage coefficient: phi c_p + (alpha - phi)/K
    double storage() const {
        return porosity * c_p + (alpha - porosity) / bulk_modulus();
    }

    void validate() const {
        FRACSIM_REQUIRE(E > 0.0, "E must be positive");
        FRACSIM_REQUIRE(nu > 0.0 && nu < 0.5, "nu must lie in (0, 0.5)");
        FRACSIM_REQUIRE(porosity >= 0.0 && alpha >= porosity && alpha <= 1.0,
                        "need 0 <= porosity <= alpha <= 1");
        FRACSIM_REQUIRE(permeability > 0.0, "permeability must be positive");
        FRACSIM_REQUIRE(viscosity > 0.0, "viscosity must be positive");
        FRACSIM_REQUIRE(storage() > 0.0, "storage coefficient must be positive");
    }
};

struct FractureProps {
    double a0 = 0.0;       // initial aperture, m
    double friction = 0.0; // Coulomb friction coefficient
    double dilation = 0.0; // dilation angle, rad
    double alpha_f = 1.0;  // fracture Biot coefficient

    void validate() const {
        FRACSIM_REQUIRE(a0 > 0.0, "initial aperture must be positive");
        FRACSIM_REQUIRE(friction > 0.0, "friction coefficient must be positive");
        FRACSIM_REQUIRE(dilation >= 0.0 && dilation < kPi / 2.0,
                        "dilation angle must lie in [0, pi/2)");
    }
};

// cubic law tangential transmissivity
inline double cubic_law_transmissivity(double aperture) { return aperture * aperture * aperture / 12.0; }
// permeability normal to the fracture: kappa = 2 K_i / (mu a^2)
inline double interface_permeability(double aperture, double viscosity) {
    return 2.0 * cubic_law_transmissivity(aperture) / (viscosity * aperture * aperture);
}

struct InjectionPhase {
    double t_start = 0.0; // s
    double t_end = 0.0;   // s
    double rate = 0.0;    // m^2/s
    int fracture = 0;
};

struct InjectionSchedule {
    std::vector<InjectionPhase> phases;

    void validate(int n_fractures) const {
        for (const auto& p : phases) {
            FRACSIM_REQUIRE(p.rate >= 0.0, "injection rate must be nonnegative");
            FRACSIM_REQUIRE(p.t_end > p.t_start, "injection window must be nonempty");
            FRACSIM_REQUIRE(p.fracture >= 0 && p.fracture < n_fractures,
                            "injection references unknown fracture");
        }
        for (std::size_t i = 0; i < phases.size(); ++i)
            for (std::size_t j = i + 1; j < phases.size(); ++j)
                if (phases[i].fracture == phases[j].fracture)
                    FRACSIM_REQUIRE(phases[i].t_end <= phases[j].t_start ||
                                        phases[j].t_end <= phases[i].t_start,
                                    "overlapping injection windows on one fracture");
    }

    // time-averaged rate into a fracture over [t0, t1]
    double mean_rate(int fracture, double t0, double t1) const {
        double q = 0.0;
        for (const auto& p : phases) {
            if (p.fracture != fracture) continue;
            const double lo = std::max(t0, p.t_start), hi = std::min(t1, p.t_end);
            if (hi > lo) q += p.rate * (hi - lo) / (t1 - t0);
        }
        return q;
    }
};

enum class SideBCKind { Roller, Free, NormalTraction };

struct SideBC {
    SideBCKind kind = SideBCKind::Free;
    double traction = 0.0; // compression positive; applied as -traction * outward normal
};

// outer boundary conditions: flow is no-flow on all sides
struct BoundaryConditions {
    SideBC left, right, bottom, top;
};

} // namespace fracsim
