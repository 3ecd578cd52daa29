#include "prior_refine/datagen/cavity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "prior_refine/error.hpp"

namespace prior_refine::datagen {

namespace {

Eigen::MatrixXd sine_matrix(Eigen::Index n) {
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) {
            s(j, k) = std::sin(std::numbers::pi * static_cast<double>((j + 1) * (k + 1)) / static_cast<double>(n + 1));
        }
    }
    return s;
}

Eigen::VectorXd laplacian_eigenvalues(Eigen::Index n, double h) {
    Eigen::VectorXd mu(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        mu(k) = (2.0 - 2.0 * std::cos(std::numbers::pi * static_cast<double>(k + 1) / static_cast<double>(n + 1))) / (h * h);
    }
    return mu;
}

Eigen::MatrixXd interior(const Eigen::MatrixXd& full) {
    return full.block(1, 1, full.rows() - 2, full.cols() - 2);
}

}  // namespace

SineTransformSolver::SineTransformSolver(std::size_t rows, std::size_t cols)
    : hy_(1.0 / static_cast<double>(rows - 1)), hx_(1.0 / static_cast<double>(cols - 1)) {
    require(rows >= 3 && cols >= 3, ErrorKind::invalid_argument, "grid needs an interior");
    const auto nr = static_cast<Eigen::Index>(rows - 2);
    const auto nc = static_cast<Eigen::Index>(cols - 2);
    sine_rows_ = sine_matrix(nr);
    sine_cols_ = sine_matrix(nc);
    eig_rows_ = laplacian_eigenvalues(nr, hy_);
    eig_cols_ = laplacian_eigenvalues(nc, hx_);
}

Eigen::MatrixXd SineTransformSolver::solve(const Eigen::MatrixXd& rhs, double a, double b) const {
    const double nr1 = static_cast<double>(sine_rows_.rows() + 1);
    const double nc1 = static_cast<double>(sine_cols_.rows() + 1);
    // S^-1 = 2/(n+1) S for the symmetric DST-I matrix.
    Eigen::MatrixXd spectral = (2.0 / nr1) * (2.0 / nc1) * (sine_rows_ * rhs * sine_cols_);
    for (Eigen::Index j = 0; j < spectral.rows(); ++j) {
        for (Eigen::Index k = 0; k < spectral.cols(); ++k) {
            spectral(j, k) /= a + b * (eig_rows_(j) + eig_cols_(k));
        }
    }
    return sine_rows_ * spectral * sine_cols_;
}

FieldVideo solve_cavity(const InputSignal& signal, const CavityConfig& config) {
    signal.validate();
    require(config.grid >= 16, ErrorKind::invalid_argument, "cavity grid must be at least 16");
    require(config.frames >= 2, ErrorKind::invalid_argument, "cavity needs at least 2 frames");
    require(config.reynolds > 0.0 && config.reynolds <= 1000.0, ErrorKind::invalid_argument,
            "reynolds number outside the laminar range (0, 1000]");
    require(config.duration > 0.0 && config.cfl > 0.0, ErrorKind::invalid_argument, "duration and cfl must be positive");

    const auto n = static_cast<Eigen::Index>(config.grid);
    const SineTransformSolver solver(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    const double h = solver.hx();
    const double nu = 1.0 / config.reynolds;

    double u_max = 0.0;
    for (double v : signal.values) u_max = std::max(u_max, std::abs(v));
    const double frame_span = config.duration / config.frames;
    double dt_max = frame_span;
    if (u_max > 0.0) dt_max = std::min({frame_span, config.cfl * h / u_max, nu / (u_max * u_max)});
    const int substeps = static_cast<int>(std::ceil(frame_span / dt_max - 1e-12));
    const double dt = frame_span / substeps;

    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
    const Eigen::Index top = n - 1;
    const double inv_h2 = 1.0 / (h * h);

    FieldVideo video(static_cast<std::size_t>(config.frames), static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    video.kind = FieldKind::streamfunction;
    video.units = "m^2/s";
    video.dt = 1.0 / config.frames;

    long step = 0;
    for (int frame = 0; frame < config.frames; ++frame) {
        for (int s = 0; s < substeps; ++s, ++step) {
            const double t_next = (frame * substeps + s + 1) * dt;
            const double lid = signal.at(t_next / config.duration);

            // Explicit centered advection of the current vorticity.
            Eigen::MatrixXd rhs(n - 2, n - 2);
            for (Eigen::Index i = 1; i < top; ++i) {
                for (Eigen::Index j = 1; j < top; ++j) {
                    const double u = (psi(i + 1, j) - psi(i - 1, j)) / (2.0 * h);
                    const double v = -(psi(i, j + 1) - psi(i, j - 1)) / (2.0 * h);
                    const double wx = (omega(i, j + 1) - omega(i, j - 1)) / (2.0 * h);
                    const double wy = (omega(i + 1, j) - omega(i - 1, j)) / (2.0 * h);
                    rhs(i - 1, j - 1) = omega(i, j) - dt * (u * wx + v * wy);
                }
            }

            // Thom wall vorticity from the current streamfunction and next lid speed.
            Eigen::MatrixXd wall = Eigen::MatrixXd::Zero(n, n);
            for (Eigen::Index k = 1; k < top; ++k) {
                wall(0, k) = -2.0 * psi(1, k) * inv_h2;
                wall(top, k) = -2.0 * psi(top - 1, k) * inv_h2 - 2.0 * lid / h;
                wall(k, 0) = -2.0 * psi(k, 1) * inv_h2;
                wall(k, top) = -2.0 * psi(k, top - 1) * inv_h2;
            }
            // Known wall values enter the implicit diffusion stencil on the right.
            const double b = dt * nu;
            for (Eigen::Index k = 1; k < top; ++k) {
                rhs(0, k - 1) += b * inv_h2 * wall(0, k);
                rhs(n - 3, k - 1) += b * inv_h2 * wall(top, k);
                rhs(k - 1, 0) += b * inv_h2 * wall(k, 0);
                rhs(k - 1, n - 3) += b * inv_h2 * wall(k, top);
            }

            omega = wall;
            omega.block(1, 1, n - 2, n - 2) = solver.solve(rhs, 1.0, b);
            psi.block(1, 1, n - 2, n - 2) = solver.solve(-interior(omega), 0.0, -1.0);
            // psi solve: Laplacian(psi) = -omega  <=>  (0 - (-1) Laplacian) psi = -omega.

            if (!omega.allFinite() || !psi.allFinite()) {
                std::ostringstream msg;
                msg << "cavity solver diverged at step " << step << " (t=" << t_next << ", lid=" << lid << ")";
                fail(ErrorKind::numerical_instability, msg.str());
            }
        }
        for (Eigen::Index i = 1; i < top; ++i) {
            for (Eigen::Index j = 1; j < top; ++j) {
                video.at(static_cast<std::size_t>(frame), static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                    static_cast<float>(psi(i, j));
            }
        }
    }
    return video;
}

Grid2D streamfunction_from_velocity(const Grid2D& u, const Grid2D& v) {
    require(u.same_shape(v), ErrorKind::invalid_argument, "u and v shapes differ");
    require(u.rows >= 3 && u.cols >= 3, ErrorKind::invalid_argument, "velocity grid needs an interior");
    for (std::size_t i = 0; i < u.data.size(); ++i) {
        require(std::isfinite(u.data[i]) && std::isfinite(v.data[i]), ErrorKind::invalid_argument,
                "velocity has non-finite entries");
    }
    const SineTransformSolver solver(u.rows, u.cols);
    const auto nr = static_cast<Eigen::Index>(u.rows);
    const auto nc = static_cast<Eigen::Index>(u.cols);
    Eigen::MatrixXd rhs(nr - 2, nc - 2);
    for (std::size_t i = 1; i + 1 < u.rows; ++i) {
        for (std::size_t j = 1; j + 1 < u.cols; ++j) {
            const double du_dy = (u(i + 1, j) - u(i - 1, j)) / (2.0 * solver.hy());
            const double dv_dx = (v(i, j + 1) - v(i, j - 1)) / (2.0 * solver.hx());
            rhs(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1)) = du_dy - dv_dx;
        }
    }
    const Eigen::MatrixXd psi = solver.solve(rhs, 0.0, -1.0);
    Grid2D out(u.rows, u.cols, 0.0);
    for (std::size_t i = 1; i + 1 < u.rows; ++i) {
        for (std::size_t j = 1; j + 1 < u.cols; ++j) {
            out(i, j) = psi(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1));
        }
    }
    return out;
}

Velocity velocity_from_streamfunction(const Grid2D& psi) {
    require(psi.rows >= 3 && psi.cols >= 3, ErrorKind::invalid_argument, "streamfunction grid needs an interior");
    const double hy = 1.0 / static_cast<double>(psi.rows - 1);
    const double hx = 1.0 / static_cast<double>(psi.cols - 1);
    Velocity vel{Grid2D(psi.rows, psi.cols), Grid2D(psi.rows, psi.cols)};
    for (std::size_t i = 1; i + 1 < psi.rows; ++i) {
        for (std::size_t j = 1; j + 1 < psi.cols; ++j) {
            vel.u(i, j) = (psi(i + 1, j) - psi(i - 1, j)) / (2.0 * hy);
            vel.v(i, j) = -(psi(i, j + 1) - psi(i, j - 1)) / (2.0 * hx);
        }
    }
    return vel;
}

Grid2D divergence(const Grid2D& u, const Grid2D& v) {
    require(u.same_shape(v), ErrorKind::invalid_argument, "u and v shapes differ");
    const double hy = 1.0 / static_cast<double>(u.rows - 1);
    const double hx = 1.0 / static_cast<double>(u.cols - 1);
    Grid2D div(u.rows, u.cols);
    for (std::size_t i = 1; i + 1 < u.rows; ++i) {
        for (std::size_t j = 1; j + 1 < u.cols; ++j) {
            div(i, j) = (u(i, j + 1) - u(i, j - 1)) / (2.0 * hx) + (v(i + 1, j) - v(i - 1, j)) / (2.0 * hy);
        }
    }
    return div;
}

}  // namespace prior_refine::datagen
