// Physical constants and ion species data (strict SI internally).
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace ionsep {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline constexpr double kElementaryCharge = 1.602176634e-19;   // C
inline constexpr double kVacuumPermittivity = 8.8541878128e-12; // F/m
inline constexpr double kReducedPlanck = 1.054571817e-34;      // J s
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;   // kg

/// Charge, mass and derived Coulomb factor for a single trapped ion.
struct PhysicalConstants {
    double charge = kElementaryCharge; // C
    double mass = 39.9626 * kAtomicMassUnit; // kg, 40Ca+ by default
    double hbar = kReducedPlanck;

    // kappa = q / (4 pi eps0), the pair-repulsion scale q^2/(4 pi eps0 d^2) / q.
    double coulomb_factor() const {
        return charge / (4.0 * kPi * kVacuumPermittivity);
    }

    void validate() const {
        if (!(charge > 0.0) || !(mass > 0.0) || !(hbar > 0.0))
            throw std::invalid_argument("PhysicalConstants: all entries must be positive");
    }

    static PhysicalConstants ca40() { return PhysicalConstants{}; }

    static PhysicalConstants be9() {
        PhysicalConstants c;
        c.mass = 9.0121831 * kAtomicMassUnit;
        return c;
    }

    static PhysicalConstants for_species(const std::string& name) {
        if (name == "40Ca+") return ca40();
        if (name == "9Be+") return be9();
        throw std::invalid_argument("unknown ion species: " + name);
    }
};

} // namespace ionsep
