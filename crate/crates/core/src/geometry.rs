//! Planar rigid-body kinematics on SE(2).
//!
//! Poses keep `theta` unwrapped so that net rotation over many gait cycles
//! stays measurable. Everything here is a pure function of its inputs.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Element of SE(2): position of a frame origin and its heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Body-frame twist `(xi_x, xi_y, xi_theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub xi_x: f64,
    pub xi_y: f64,
    pub xi_theta: f64,
}

/// Planar force and torque about the frame origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub f_x: f64,
    pub f_y: f64,
    pub tau: f64,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { x: 0.0, y: 0.0, theta: 0.0 };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Group inverse, so that `p.compose(p.inverse())` is the identity.
    pub fn inverse(self) -> Pose {
        let (s, c) = self.theta.sin_cos();
        Pose::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    pub fn compose(self, other: Pose) -> Pose {
        se2_compose(self, other)
    }
}

impl BodyVelocity {
    pub fn new(xi_x: f64, xi_y: f64, xi_theta: f64) -> Self {
        Self { xi_x, xi_y, xi_theta }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.xi_x, self.xi_y, self.xi_theta)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.xi_x.is_finite() && self.xi_y.is_finite() && self.xi_theta.is_finite()
    }
}

impl Wrench {
    pub fn new(f_x: f64, f_y: f64, tau: f64) -> Self {
        Self { f_x, f_y, tau }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.f_x, self.f_y, self.tau)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.f_x + rhs.f_x, self.f_y + rhs.f_y, self.tau + rhs.tau)
    }
}

/// The left-translation lift `T_e L_g` evaluated at heading `theta`.
pub fn lifted_action(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Maps a body velocity to world-frame rates `(x_dot, y_dot, theta_dot)`.
pub fn body_to_world(pose: Pose, xi: BodyVelocity) -> Vector3<f64> {
    let (s, c) = pose.theta.sin_cos();
    Vector3::new(c * xi.xi_x - s * xi.xi_y, s * xi.xi_x + c * xi.xi_y, xi.xi_theta)
}

pub fn se2_compose(g1: Pose, g2: Pose) -> Pose {
    let (s, c) = g1.theta.sin_cos();
    Pose::new(
        g1.x + c * g2.x - s * g2.y,
        g1.y + s * g2.x + c * g2.y,
        g1.theta + g2.theta,
    )
}

/// Matrix form of [`transform_wrench`]: `w_dst = M * w_src`.
///
/// This is the transpose of the adjoint that carries destination-frame twists
/// into the source frame, so power is frame independent.
pub fn wrench_transform_matrix(offset: Pose) -> Matrix3<f64> {
    let (s, c) = offset.theta.sin_cos();
    let (x, y) = (offset.x, offset.y);
    Matrix3::new(
        c,
        -s,
        0.0,
        s,
        c,
        0.0,
        x * s - y * c,
        x * c + y * s,
        1.0,
    )
}

/// Re-expresses a wrench acting in a frame located at `offset` (relative to
/// the destination frame) in the destination frame.
pub fn transform_wrench(offset: Pose, w: Wrench) -> Wrench {
    let (s, c) = offset.theta.sin_cos();
    let fx = c * w.f_x - s * w.f_y;
    let fy = s * w.f_x + c * w.f_y;
    Wrench::new(fx, fy, w.tau + offset.x * fy - offset.y * fx)
}

/// One classical RK4 step of `g_dot = T_e L_g xi(t)` from time `t` to `t + dt`.
pub fn integrate_pose<F>(pose: Pose, t: f64, dt: f64, mut xi_fn: F) -> Pose
where
    F: FnMut(f64) -> BodyVelocity,
{
    let g0 = pose.to_vector();
    let rate = |g: &Vector3<f64>, xi: BodyVelocity| body_to_world(Pose::from_vector(g), xi);
    let k1 = rate(&g0, xi_fn(t));
    let k2 = rate(&(g0 + k1 * (0.5 * dt)), xi_fn(t + 0.5 * dt));
    let k3 = rate(&(g0 + k2 * (0.5 * dt)), xi_fn(t + 0.5 * dt));
    let k4 = rate(&(g0 + k3 * dt), xi_fn(t + dt));
    Pose::from_vector(&(g0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

/// Closed-form SE(2) exponential of a constant body twist applied for `dt`.
pub fn exp_twist(pose: Pose, xi: BodyVelocity, dt: f64) -> Pose {
    let phi = xi.xi_theta * dt;
    let (vx, vy) = (xi.xi_x * dt, xi.xi_y * dt);
    let (dx, dy) = if phi.abs() < 1e-9 {
        // second-order series of sin(phi)/phi and (1 - cos(phi))/phi
        let a = 1.0 - phi * phi / 6.0;
        let b = phi / 2.0 - phi.powi(3) / 24.0;
        (a * vx - b * vy, b * vx + a * vy)
    } else {
        let a = phi.sin() / phi;
        let b = (1.0 - phi.cos()) / phi;
        (a * vx - b * vy, b * vx + a * vy)
    };
    se2_compose(pose, Pose::new(dx, dy, phi))
}
