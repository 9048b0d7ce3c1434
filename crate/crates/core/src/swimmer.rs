//! Local connections of the three-link swimmer.
//!
//! Both fluid models are assembled from explicit per-link kinematics: each
//! link's body velocity is a linear function of the proximal-link twist and
//! the joint rates, `xi_i = J_i(alpha) [xi; alpha_dot]`. The low Reynolds
//! number swimmer balances resistive drag, the high Reynolds number swimmer
//! conserves (zero) momentum of the links plus their added fluid mass.
//!
//! Frames: the body frame sits at the centre of link 1 with x along the link,
//! pointing away from the rest of the chain. Joint 1 is at `(-L/2, 0)` and
//! joint angles are positive counter-clockwise.

use nalgebra::{Cholesky, Matrix3, Matrix3x2, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{transform_wrench, wrench_transform_matrix, BodyVelocity, Pose, Wrench};

pub const NUM_LINKS: usize = 3;

/// Maps `(xi, alpha_dot)` to a single link's body velocity.
pub type LinkJacobian = SMatrix<f64, 3, 5>;
pub type MassMatrix = SMatrix<f64, 5, 5>;

const SINGULAR_DET: f64 = 1e-12;

/// Joint angles `(alpha1, alpha2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Shape {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Shape {
    pub fn new(alpha1: f64, alpha2: f64) -> Self {
        Self { alpha1, alpha2 }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.alpha1, self.alpha2)
    }
}

/// Local connection `A(alpha)`; body velocity is `xi = -A alpha_dot`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection(pub Matrix3x2<f64>);

impl Connection {
    /// Body velocity produced by a joint-rate vector.
    pub fn body_velocity(&self, alpha_dot: Vector2<f64>) -> BodyVelocity {
        BodyVelocity::from_vector(&(-(self.0 * alpha_dot)))
    }

    pub fn row(&self, row: ConnectionRow) -> (f64, f64) {
        let i = row.index();
        (self.0[(i, 0)], self.0[(i, 1)])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Row of the connection: one per body-velocity component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectionRow {
    X,
    Y,
    Theta,
}

impl ConnectionRow {
    pub const ALL: [ConnectionRow; 3] = [ConnectionRow::X, ConnectionRow::Y, ConnectionRow::Theta];

    pub fn index(self) -> usize {
        match self {
            ConnectionRow::X => 0,
            ConnectionRow::Y => 1,
            ConnectionRow::Theta => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConnectionRow::X => "x",
            ConnectionRow::Y => "y",
            ConnectionRow::Theta => "theta",
        }
    }
}

impl std::str::FromStr for ConnectionRow {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" => Ok(ConnectionRow::X),
            "y" => Ok(ConnectionRow::Y),
            "theta" | "θ" => Ok(ConnectionRow::Theta),
            other => Err(Error::InvalidParameter(format!("unknown connection row '{other}'"))),
        }
    }
}

/// Link frames and their velocity Jacobians, all relative to link 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkKinematics {
    pub poses: [Pose; NUM_LINKS],
    pub jacobians: [LinkJacobian; NUM_LINKS],
}

impl LinkKinematics {
    /// Body velocity of link `i` (0-based).
    pub fn link_velocity(&self, i: usize, xi: BodyVelocity, alpha_dot: Vector2<f64>) -> BodyVelocity {
        let q = stack(xi, alpha_dot);
        BodyVelocity::from_vector(&(self.jacobians[i] * q))
    }
}

pub(crate) fn stack(xi: BodyVelocity, alpha_dot: Vector2<f64>) -> SMatrix<f64, 5, 1> {
    SMatrix::<f64, 5, 1>::new(xi.xi_x, xi.xi_y, xi.xi_theta, alpha_dot[0], alpha_dot[1])
}

/// Jacobian of a link whose centre frame sits at `pose` relative to link 1,
/// given the shape derivatives of its position and heading.
fn link_jacobian(pose: Pose, dp: [Vector2<f64>; 2], dphi: [f64; 2]) -> LinkJacobian {
    let (s, c) = pose.theta.sin_cos();
    // R^T applied to a planar vector
    let rt = |v: Vector2<f64>| Vector2::new(c * v[0] + s * v[1], -s * v[0] + c * v[1]);
    let mut j = LinkJacobian::zeros();
    let cols = [
        Vector2::new(1.0, 0.0),
        Vector2::new(0.0, 1.0),
        // rigid rotation of the base moves the link origin by omega x p
        Vector2::new(-pose.y, pose.x),
    ];
    for (k, v) in cols.into_iter().enumerate() {
        let r = rt(v);
        j[(0, k)] = r[0];
        j[(1, k)] = r[1];
    }
    j[(2, 2)] = 1.0;
    for m in 0..2 {
        let r = rt(dp[m]);
        j[(0, 3 + m)] = r[0];
        j[(1, 3 + m)] = r[1];
        j[(2, 3 + m)] = dphi[m];
    }
    j
}

pub fn link_kinematics(alpha: Shape, link_length: f64) -> LinkKinematics {
    let half = 0.5 * link_length;
    let phi2 = alpha.alpha1;
    let phi3 = alpha.alpha1 + alpha.alpha2;
    let (s2, c2) = phi2.sin_cos();
    let (s3, c3) = phi3.sin_cos();

    // the chain trails behind link 1, along its -x axis
    let pose1 = Pose::IDENTITY;
    let pose2 = Pose::new(-half - half * c2, -half * s2, phi2);
    let pose3 = Pose::new(
        -half - link_length * c2 - half * c3,
        -link_length * s2 - half * s3,
        phi3,
    );

    let mut jac1 = LinkJacobian::zeros();
    jac1.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());

    let jac2 = link_jacobian(
        pose2,
        [Vector2::new(half * s2, -half * c2), Vector2::zeros()],
        [1.0, 0.0],
    );
    let jac3 = link_jacobian(
        pose3,
        [
            Vector2::new(link_length * s2 + half * s3, -link_length * c2 - half * c3),
            Vector2::new(half * s3, -half * c3),
        ],
        [1.0, 1.0],
    );

    LinkKinematics { poses: [pose1, pose2, pose3], jacobians: [jac1, jac2, jac3] }
}

/// Resistive-force parameters of the viscous swimmer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LowReParams {
    /// Link length R (m).
    pub link_length: f64,
    /// Longitudinal drag per unit length and unit speed.
    pub drag_constant: f64,
    /// Lateral-to-longitudinal drag coefficient ratio.
    pub lateral_ratio: f64,
}

impl Default for LowReParams {
    fn default() -> Self {
        Self { link_length: 0.3, drag_constant: 1.0, lateral_ratio: 2.0 }
    }
}

impl LowReParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.link_length > 0.0) {
            return Err(Error::InvalidParameter("link_length must be positive".into()));
        }
        if !(self.drag_constant > 0.0) {
            return Err(Error::InvalidParameter("drag_constant must be positive".into()));
        }
        if !(self.lateral_ratio > 1.0) {
            return Err(Error::InvalidParameter("lateral_ratio must exceed 1".into()));
        }
        Ok(())
    }

    /// Diagonal of the link-frame drag map `w = -diag(..) xi_i`.
    fn drag_diagonal(&self) -> Vector3<f64> {
        let (k, r, len) = (self.drag_constant, self.lateral_ratio, self.link_length);
        Vector3::new(k * len, r * k * len, r * k * len.powi(3) / 12.0)
    }
}

/// Drag wrench on a slender rod about its centre, integrated along its length.
pub fn low_re_link_wrench(xi_i: BodyVelocity, p: &LowReParams) -> Wrench {
    let d = p.drag_diagonal();
    Wrench::new(-d[0] * xi_i.xi_x, -d[1] * xi_i.xi_y, -d[2] * xi_i.xi_theta)
}

/// Pfaffian matrices `(omega1, omega2)` with total base-frame drag wrench
/// `F = omega1 xi + omega2 alpha_dot`.
pub fn low_re_constraint_matrices(alpha: Shape, p: &LowReParams) -> (Matrix3<f64>, Matrix3x2<f64>) {
    let kin = link_kinematics(alpha, p.link_length);
    let drag = Matrix3::from_diagonal(&(-p.drag_diagonal()));
    let mut total = SMatrix::<f64, 3, 5>::zeros();
    for (pose, jac) in kin.poses.iter().zip(kin.jacobians.iter()) {
        total += wrench_transform_matrix(*pose) * drag * jac;
    }
    (total.fixed_view::<3, 3>(0, 0).into_owned(), total.fixed_view::<3, 2>(0, 3).into_owned())
}

/// Net drag wrench on the swimmer summed link by link.
pub fn low_re_total_wrench(alpha: Shape, xi: BodyVelocity, alpha_dot: Vector2<f64>, p: &LowReParams) -> Wrench {
    let kin = link_kinematics(alpha, p.link_length);
    (0..NUM_LINKS).fold(Wrench::default(), |acc, i| {
        let w = low_re_link_wrench(kin.link_velocity(i, xi, alpha_dot), p);
        acc + transform_wrench(kin.poses[i], w)
    })
}

pub fn low_re_connection(alpha: Shape, p: &LowReParams) -> Result<Connection> {
    let (omega1, omega2) = low_re_constraint_matrices(alpha, p);
    let det = omega1.determinant();
    if !(det.abs() >= SINGULAR_DET) {
        return Err(Error::SingularConstraint { alpha1: alpha.alpha1, alpha2: alpha.alpha2, det });
    }
    let a = omega1
        .lu()
        .solve(&omega2)
        .ok_or(Error::SingularConstraint { alpha1: alpha.alpha1, alpha2: alpha.alpha2, det })?;
    Ok(Connection(a))
}

/// Elliptical links in an ideal fluid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HighReParams {
    pub fluid_density: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Link density as a multiple of the fluid density (0 keeps added mass only).
    pub body_density_ratio: f64,
}

impl Default for HighReParams {
    fn default() -> Self {
        Self { fluid_density: 1.0, semi_major: 4.0, semi_minor: 1.0, body_density_ratio: 1.0 }
    }
}

impl HighReParams {
    /// Joints sit at the ellipse tips.
    pub fn link_length(&self) -> f64 {
        2.0 * self.semi_major
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fluid_density > 0.0) {
            return Err(Error::InvalidParameter("fluid_density must be positive".into()));
        }
        if !(self.semi_minor > 0.0 && self.semi_major >= self.semi_minor) {
            return Err(Error::InvalidParameter("need semi_major >= semi_minor > 0".into()));
        }
        if !(self.body_density_ratio >= 0.0) {
            return Err(Error::InvalidParameter("body_density_ratio must be non-negative".into()));
        }
        Ok(())
    }
}

/// Rigid and added-mass inertia of one elliptical link, in its centre frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkInertia {
    pub rigid: Matrix3<f64>,
    pub added: Matrix3<f64>,
}

impl LinkInertia {
    pub fn total(&self) -> Matrix3<f64> {
        self.rigid + self.added
    }
}

pub fn ellipse_inertia(p: &HighReParams) -> LinkInertia {
    let (rho, a, b) = (p.fluid_density, p.semi_major, p.semi_minor);
    let pi = std::f64::consts::PI;
    let mass = p.body_density_ratio * rho * pi * a * b;
    let moment = mass * (a * a + b * b) / 4.0;
    LinkInertia {
        rigid: Matrix3::from_diagonal(&Vector3::new(mass, mass, moment)),
        added: Matrix3::from_diagonal(&Vector3::new(
            rho * pi * b * b,
            rho * pi * a * a,
            rho * pi * (a * a - b * b).powi(2) / 8.0,
        )),
    }
}

/// Total effective inertia `I_i + M_i` of a link.
pub fn ellipse_effective_inertia(p: &HighReParams) -> Matrix3<f64> {
    ellipse_inertia(p).total()
}

/// Kinetic-energy metric over `(xi, alpha_dot)` for identical links.
pub fn mass_matrix_with(alpha: Shape, link_length: f64, link_inertia: &Matrix3<f64>) -> MassMatrix {
    let kin = link_kinematics(alpha, link_length);
    kin.jacobians
        .iter()
        .fold(MassMatrix::zeros(), |acc, j| acc + j.transpose() * link_inertia * j)
}

pub fn high_re_mass_matrix(alpha: Shape, p: &HighReParams) -> MassMatrix {
    mass_matrix_with(alpha, p.link_length(), &ellipse_effective_inertia(p))
}

/// Connection from the block split `[[I, I A], [(I A)^T, m]]` of a mass matrix.
pub fn connection_from_mass_matrix(alpha: Shape, m: &MassMatrix) -> Result<Connection> {
    let locked: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let coupling: Matrix3x2<f64> = m.fixed_view::<3, 2>(0, 3).into_owned();
    let chol = Cholesky::new(locked)
        .ok_or(Error::SingularInertia { alpha1: alpha.alpha1, alpha2: alpha.alpha2 })?;
    Ok(Connection(chol.solve(&coupling)))
}

pub fn high_re_connection(alpha: Shape, p: &HighReParams) -> Result<Connection> {
    connection_from_mass_matrix(alpha, &high_re_mass_matrix(alpha, p))
}

/// Which fluid regime a swimmer lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwimmerKind {
    LowRe,
    HighRe,
}

impl std::str::FromStr for SwimmerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low-re" | "low" | "lowRe" => Ok(SwimmerKind::LowRe),
            "high-re" | "high" | "highRe" => Ok(SwimmerKind::HighRe),
            other => Err(Error::InvalidParameter(format!("unknown swimmer '{other}'"))),
        }
    }
}

impl std::fmt::Display for SwimmerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SwimmerKind::LowRe => "low-re",
            SwimmerKind::HighRe => "high-re",
        })
    }
}

/// A concrete swimmer: fluid regime plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SwimmerModel {
    LowRe(LowReParams),
    HighRe(HighReParams),
}

impl SwimmerModel {
    pub fn default_for(kind: SwimmerKind) -> Self {
        match kind {
            SwimmerKind::LowRe => SwimmerModel::LowRe(LowReParams::default()),
            SwimmerKind::HighRe => SwimmerModel::HighRe(HighReParams::default()),
        }
    }

    pub fn kind(&self) -> SwimmerKind {
        match self {
            SwimmerModel::LowRe(_) => SwimmerKind::LowRe,
            SwimmerModel::HighRe(_) => SwimmerKind::HighRe,
        }
    }

    pub fn link_length(&self) -> f64 {
        match self {
            SwimmerModel::LowRe(p) => p.link_length,
            SwimmerModel::HighRe(p) => p.link_length(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SwimmerModel::LowRe(p) => p.validate(),
            SwimmerModel::HighRe(p) => p.validate(),
        }
    }
}

/// Anything that yields a local connection at a shape.
pub trait ConnectionModel: Sync {
    fn connection(&self, alpha: Shape) -> Result<Connection>;
}

impl ConnectionModel for SwimmerModel {
    fn connection(&self, alpha: Shape) -> Result<Connection> {
        match self {
            SwimmerModel::LowRe(p) => low_re_connection(alpha, p),
            SwimmerModel::HighRe(p) => high_re_connection(alpha, p),
        }
    }
}

impl<F> ConnectionModel for F
where
    F: Fn(Shape) -> Result<Connection> + Sync,
{
    fn connection(&self, alpha: Shape) -> Result<Connection> {
        self(alpha)
    }
}
