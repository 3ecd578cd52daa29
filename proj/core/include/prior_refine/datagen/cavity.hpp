#pragma once

#include <Eigen/Dense>

#include "prior_refine/fields.hpp"

namespace prior_refine::datagen {

/// Laminar lid-driven cavity on the unit square, nondimensionalized by the
/// cavity side and a unit reference lid speed.
struct CavityConfig {
    int grid = 32;            ///< nodes per side, walls included
    double reynolds = 100.0;  ///< 1 / kinematic viscosity
    int frames = 16;
    double duration = 4.0;  ///< solver time spanned by the signal's [0, 1] s
    double cfl = 0.5;
};

/// Direct solver for (a - b * Laplacian) x = f on the interior of a uniform
/// grid with homogeneous Dirichlet walls, diagonalized by the discrete sine
/// transform. Interior is (rows-2) x (cols-2); spacings are 1/(rows-1) and
/// 1/(cols-1).
class SineTransformSolver {
public:
    SineTransformSolver(std::size_t rows, std::size_t cols);

    /// `rhs` and the result are interior-only matrices.
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs, double a, double b) const;

    double hy() const noexcept { return hy_; }
    double hx() const noexcept { return hx_; }

private:
    Eigen::MatrixXd sine_rows_;
    Eigen::MatrixXd sine_cols_;
    Eigen::VectorXd eig_rows_;
    Eigen::VectorXd eig_cols_;
    double hy_;
    double hx_;
};

/// Integrates the streamfunction-vorticity equations with no-slip walls and
/// the lid (top row) moving at `signal(t)`. Returns psi at `frames` equally
/// spaced instants ending at t = 1 s; walls are exactly zero in every frame.
FieldVideo solve_cavity(const InputSignal& signal, const CavityConfig& config);

/// Solves Laplacian(psi) = du/dy - dv/dx (centered differences) with psi = 0
/// on all walls.
Grid2D streamfunction_from_velocity(const Grid2D& u, const Grid2D& v);

struct Velocity {
    Grid2D u;
    Grid2D v;
};

/// u = dpsi/dy, v = -dpsi/dx by centered differences at interior nodes
/// (zero on walls).
Velocity velocity_from_streamfunction(const Grid2D& psi);

/// Centered-difference divergence at interior nodes (zero on walls).
Grid2D divergence(const Grid2D& u, const Grid2D& v);

}  // namespace prior_refine::datagen
