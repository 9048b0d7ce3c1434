//! Connection fields over joint space: exterior derivatives, loop (line)
//! integrals and enclosed-area (surface) integrals.
//!
//! For a closed joint-space loop the two integrals agree by Stokes' theorem;
//! for the rotation row they also equal the net heading change of a gait.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::swimmer::{Connection, ConnectionModel, ConnectionRow, Shape};

pub const MIN_RESOLUTION: usize = 8;
const CLOSURE_TOL: f64 = 1e-12;
/// Horizontal scanlines per grid row used to rasterise loop interiors.
const SUBROWS: usize = 8;

/// Square sampling grid `[alpha_min, alpha_max]^2` with nodes on the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { alpha_min: -3.0, alpha_max: 3.0, resolution: 128 }
    }
}

impl GridSpec {
    pub fn new(alpha_min: f64, alpha_max: f64, resolution: usize) -> Result<Self> {
        let g = Self { alpha_min, alpha_max, resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_min < self.alpha_max) || !self.alpha_min.is_finite() || !self.alpha_max.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy alpha_min < alpha_max (got {} and {})",
                self.alpha_min, self.alpha_max
            )));
        }
        if self.resolution < MIN_RESOLUTION {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be at least {MIN_RESOLUTION} (got {})",
                self.resolution
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.alpha_max - self.alpha_min) / (self.resolution - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.resolution {
            self.alpha_max
        } else {
            self.alpha_min + i as f64 * self.spacing()
        }
    }

    pub fn contains(&self, s: Shape) -> bool {
        let inside = |v: f64| v >= self.alpha_min && v <= self.alpha_max;
        inside(s.alpha1) && inside(s.alpha2)
    }

    fn index(&self, i: usize, j: usize) -> usize {
        j * self.resolution + i
    }
}

/// Samples of one connection-derived quantity on a [`GridSpec`].
///
/// `values[j * resolution + i]` holds the sample at `(coord(i), coord(j))`,
/// i.e. `i` runs along alpha1. `None` marks samples that could not be
/// evaluated (singular model).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<Option<f64>>,
    pub component: ConnectionRow,
}

impl ScalarField {
    pub fn from_fn(grid: GridSpec, component: ConnectionRow, f: impl Fn(Shape) -> Option<f64>) -> Self {
        let n = grid.resolution;
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                values.push(f(Shape::new(grid.coord(i), grid.coord(j))));
            }
        }
        Self { grid, values, component }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[self.grid.index(i, j)]
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Largest finite magnitude in the field.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Bilinear interpolation at an arbitrary shape inside the grid.
    pub fn sample(&self, s: Shape) -> Option<f64> {
        if !self.grid.contains(s) {
            return None;
        }
        let h = self.grid.spacing();
        let last = self.grid.resolution - 2;
        let locate = |v: f64| {
            let u = (v - self.grid.alpha_min) / h;
            let k = (u.floor() as usize).min(last);
            (k, u - k as f64)
        };
        let (i, fx) = locate(s.alpha1);
        let (j, fy) = locate(s.alpha2);
        let v00 = self.get(i, j)?;
        let v10 = self.get(i + 1, j)?;
        let v01 = self.get(i, j + 1)?;
        let v11 = self.get(i + 1, j + 1)?;
        Some(v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy)
    }
}

/// Evaluates the connection at every grid node, fanning out across threads.
pub fn connection_grid<M: ConnectionModel + ?Sized>(model: &M, grid: &GridSpec) -> Vec<Option<Connection>> {
    let n = grid.resolution;
    let rows: Vec<usize> = (0..n).collect();
    let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(n);
    let chunk = n.div_ceil(workers);
    let eval_row = |j: usize| -> Vec<Option<Connection>> {
        (0..n)
            .map(|i| model.connection(Shape::new(grid.coord(i), grid.coord(j))).ok().filter(|c| c.is_finite()))
            .collect()
    };
    if workers <= 1 {
        return rows.into_iter().flat_map(eval_row).collect();
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = rows
            .chunks(chunk)
            .map(|js| {
                let eval_row = &eval_row;
                scope.spawn(move || js.iter().flat_map(|&j| eval_row(j)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("grid worker panicked")).collect()
    })
}

/// Derivative along one axis of gridded samples: central in the interior,
/// second-order one-sided at the borders.
fn axis_derivative(f: impl Fn(usize) -> Option<f64>, k: usize, n: usize, h: f64) -> Option<f64> {
    if k == 0 {
        Some((-3.0 * f(0)? + 4.0 * f(1)? - f(2)?) / (2.0 * h))
    } else if k + 1 == n {
        Some((3.0 * f(n - 1)? - 4.0 * f(n - 2)? + f(n - 3)?) / (2.0 * h))
    } else {
        Some((f(k + 1)? - f(k - 1)?) / (2.0 * h))
    }
}

/// Curl `dA_i = dA_{i,2}/d alpha1 - dA_{i,1}/d alpha2` of one connection row.
pub fn exterior_derivative_field<M: ConnectionModel + ?Sized>(
    model: &M,
    grid: &GridSpec,
    row: ConnectionRow,
) -> Result<ScalarField> {
    grid.validate()?;
    let conns = connection_grid(model, grid);
    let n = grid.resolution;
    let h = grid.spacing();
    let r = row.index();
    let entry = |i: usize, j: usize, col: usize| conns[grid.index(i, j)].map(|c| c.0[(r, col)]);
    let mut values = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let d2_d1 = axis_derivative(|k| entry(k, j, 1), i, n, h);
            let d1_d2 = axis_derivative(|k| entry(i, k, 0), j, n, h);
            values.push(match (d2_d1, d1_d2) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            });
        }
    }
    Ok(ScalarField { grid: *grid, values, component: row })
}

/// Central-difference curl of one row at a single shape with step `h`.
pub fn curl_at<M: ConnectionModel + ?Sized>(model: &M, s: Shape, row: ConnectionRow, h: f64) -> Result<f64> {
    let r = row.index();
    let a = |da1: f64, da2: f64, col: usize| -> Result<f64> {
        Ok(model.connection(Shape::new(s.alpha1 + da1, s.alpha2 + da2))?.0[(r, col)])
    };
    let d2_d1 = (a(h, 0.0, 1)? - a(-h, 0.0, 1)?) / (2.0 * h);
    let d1_d2 = (a(0.0, h, 0)? - a(0.0, -h, 0)?) / (2.0 * h);
    Ok(d2_d1 - d1_d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    CounterClockwise,
    Clockwise,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::CounterClockwise => 1.0,
            Orientation::Clockwise => -1.0,
        }
    }
}

/// Closed polyline in joint space (first sample equals the last).
#[derive(Debug, Clone, PartialEq)]
pub struct JointLoop {
    points: Vec<Shape>,
    orientation: Orientation,
}

impl JointLoop {
    pub fn new(points: Vec<Shape>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidParameter("a loop needs at least three samples".into()));
        }
        let first = points[0];
        let last = points[points.len() - 1];
        let gap = (first.alpha1 - last.alpha1).abs().max((first.alpha2 - last.alpha2).abs());
        if !(gap <= CLOSURE_TOL) {
            return Err(Error::OpenLoop(gap));
        }
        let orientation =
            if shoelace(&points) >= 0.0 { Orientation::CounterClockwise } else { Orientation::Clockwise };
        Ok(Self { points, orientation })
    }

    /// Samples `f` at `segments + 1` evenly spaced parameters in `[0, 1]`,
    /// closing the loop exactly on the first sample.
    pub fn from_fn(segments: usize, f: impl Fn(f64) -> Shape) -> Result<Self> {
        let mut points: Vec<Shape> = (0..segments).map(|k| f(k as f64 / segments as f64)).collect();
        points.push(points[0]);
        Self::new(points)
    }

    /// Closed polygon through the given vertices.
    pub fn polygon(vertices: &[Shape]) -> Result<Self> {
        let mut points = vertices.to_vec();
        if let Some(&p) = vertices.first() {
            points.push(p);
        }
        Self::new(points)
    }

    pub fn points(&self) -> &[Shape] {
        &self.points
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn signed_area(&self) -> f64 {
        shoelace(&self.points)
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        let orientation = match self.orientation {
            Orientation::CounterClockwise => Orientation::Clockwise,
            Orientation::Clockwise => Orientation::CounterClockwise,
        };
        Self { points, orientation }
    }

    /// Same loop starting at sample `k`.
    pub fn rotated(&self, k: usize) -> Self {
        let n = self.points.len() - 1;
        let k = k % n;
        let mut points: Vec<Shape> = (0..n).map(|m| self.points[(m + k) % n]).collect();
        points.push(points[0]);
        Self { points, orientation: self.orientation }
    }

    fn segments(&self) -> impl Iterator<Item = (Shape, Shape)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    /// Index pair of the first two non-adjacent segments that cross, if any.
    pub fn find_self_intersection(&self) -> Option<(usize, usize)> {
        let segs: Vec<(Shape, Shape)> = self.segments().collect();
        let n = segs.len();
        for a in 0..n {
            for b in (a + 2)..n {
                if a == 0 && b == n - 1 {
                    continue;
                }
                if segments_intersect(segs[a], segs[b]) {
                    return Some((a, b));
                }
            }
        }
        None
    }
}

fn shoelace(points: &[Shape]) -> f64 {
    0.5 * points
        .windows(2)
        .map(|w| w[0].alpha1 * w[1].alpha2 - w[1].alpha1 * w[0].alpha2)
        .sum::<f64>()
}

fn segments_intersect(p: (Shape, Shape), q: (Shape, Shape)) -> bool {
    let cross = |o: Shape, a: Shape, b: Shape| {
        (a.alpha1 - o.alpha1) * (b.alpha2 - o.alpha2) - (a.alpha2 - o.alpha2) * (b.alpha1 - o.alpha1)
    };
    let on_segment = |o: Shape, a: Shape, b: Shape| {
        b.alpha1 >= o.alpha1.min(a.alpha1)
            && b.alpha1 <= o.alpha1.max(a.alpha1)
            && b.alpha2 >= o.alpha2.min(a.alpha2)
            && b.alpha2 <= o.alpha2.max(a.alpha2)
    };
    let d1 = cross(q.0, q.1, p.0);
    let d2 = cross(q.0, q.1, p.1);
    let d3 = cross(p.0, p.1, q.0);
    let d4 = cross(p.0, p.1, q.1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q.0, q.1, p.0))
        || (d2 == 0.0 && on_segment(q.0, q.1, p.1))
        || (d3 == 0.0 && on_segment(p.0, p.1, q.0))
        || (d4 == 0.0 && on_segment(p.0, p.1, q.1))
}

/// `-∮ A(alpha) d alpha` by per-segment midpoint quadrature, returned as
/// `(x, y, theta)`.
///
/// Segment contributions are summed in an order that depends only on the
/// segment geometry, so reversing or relabelling the loop changes the result
/// only by the exact sign flip.
pub fn line_integral<M: ConnectionModel + ?Sized>(model: &M, lp: &JointLoop) -> Result<Vector3<f64>> {
    let mut terms = Vec::with_capacity(lp.points.len());
    for (a, b) in lp.segments() {
        let mid = Shape::new(0.5 * (a.alpha1 + b.alpha1), 0.5 * (a.alpha2 + b.alpha2));
        let d = Vector2::new(b.alpha1 - a.alpha1, b.alpha2 - a.alpha2);
        let conn = model.connection(mid)?;
        terms.push((mid, d, -(conn.0 * d)));
    }
    terms.sort_by(|p, q| {
        p.0.alpha1
            .total_cmp(&q.0.alpha1)
            .then(p.0.alpha2.total_cmp(&q.0.alpha2))
            .then(p.1[0].abs().total_cmp(&q.1[0].abs()))
            .then(p.1[1].abs().total_cmp(&q.1[1].abs()))
    });
    Ok(terms.into_iter().fold(Vector3::zeros(), |acc, t| acc + t.2))
}

/// Fraction-weighted area of every grid cell that lies inside the loop.
///
/// Cells are centred on grid nodes. Each cell row is cut by `SUBROWS`
/// horizontal scanlines; along a scanline the polygon interior is exact.
fn cell_coverage(grid: &GridSpec, lp: &JointLoop) -> Vec<(usize, f64)> {
    let n = grid.resolution;
    let h = grid.spacing();
    let segs: Vec<(Shape, Shape)> = lp.segments().collect();
    let mut area = vec![0.0; n * n];
    let mut crossings = Vec::new();
    let dy = h / SUBROWS as f64;
    for j in 0..n {
        for s in 0..SUBROWS {
            let y = grid.coord(j) - 0.5 * h + (s as f64 + 0.5) * dy;
            crossings.clear();
            for (a, b) in &segs {
                if (a.alpha2 > y) != (b.alpha2 > y) {
                    let t = (y - a.alpha2) / (b.alpha2 - a.alpha2);
                    crossings.push(a.alpha1 + t * (b.alpha1 - a.alpha1));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for span in crossings.chunks_exact(2) {
                let (x0, x1) = (span[0], span[1]);
                let first = (((x0 - grid.alpha_min) / h + 0.5).floor().max(0.0) as usize).min(n - 1);
                let last = (((x1 - grid.alpha_min) / h + 0.5).floor().max(0.0) as usize).min(n - 1);
                for i in first..=last {
                    let lo = grid.coord(i) - 0.5 * h;
                    let hi = grid.coord(i) + 0.5 * h;
                    let overlap = x1.min(hi) - x0.max(lo);
                    if overlap > 0.0 {
                        area[grid.index(i, j)] += overlap * dy;
                    }
                }
            }
        }
    }
    area.into_iter().enumerate().filter(|(_, a)| *a > 0.0).collect()
}

/// `-∬ dA` over the region enclosed by the loop; counter-clockwise loops
/// count the enclosed area positively.
pub fn surface_integral(field: &ScalarField, lp: &JointLoop) -> Result<f64> {
    if let Some(p) = lp.points.iter().find(|p| !field.grid.contains(**p)) {
        return Err(Error::LoopOutsideGrid { alpha1: p.alpha1, alpha2: p.alpha2 });
    }
    if let Some((a, b)) = lp.find_self_intersection() {
        return Err(Error::SelfIntersectingLoop(a, b));
    }
    let total: f64 = cell_coverage(&field.grid, lp)
        .into_iter()
        .filter_map(|(k, a)| field.values[k].map(|v| v * a))
        .sum();
    Ok(-lp.orientation.sign() * total)
}

/// Enclosed area of a loop as seen by the rasteriser (unsigned).
pub fn rasterized_area(grid: &GridSpec, lp: &JointLoop) -> f64 {
    cell_coverage(grid, lp).into_iter().map(|(_, a)| a).sum()
}
