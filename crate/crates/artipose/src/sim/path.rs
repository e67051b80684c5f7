//! Parametric ground-truth paths for the control point, sampled by arc
//! length so the vehicle moves at constant speed.

use nalgebra::Vector2;

/// Pose of the path at a given arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    /// Horizontal position of the control point, meters.
    pub position: Vector2<f64>,
    /// Tangent heading, radians counterclockwise from east.
    pub heading: f64,
    /// Signed curvature, 1/m (positive turns left).
    pub curvature: f64,
}

/// Closed figure-eight (lemniscate) path. The parameter `a` is three times
/// the curvature radius at the lobe tips, where the turn is tightest.
#[derive(Debug, Clone)]
pub struct FigureEightPath {
    a: f64,
    /// Cumulative arc length over a uniform parameter grid on [0, 2pi].
    arc_table: Vec<f64>,
    total_length: f64,
}

const ARC_TABLE_SIZE: usize = 16_384;

impl FigureEightPath {
    /// `tip_radius` is the curvature radius at the lobe tips, meters.
    pub fn new(tip_radius: f64) -> Self {
        let a = 3.0 * tip_radius;
        let n = ARC_TABLE_SIZE;
        let du = std::f64::consts::TAU / n as f64;
        let mut arc_table = Vec::with_capacity(n + 1);
        arc_table.push(0.0);
        let mut s = 0.0;
        let mut prev = Self::parameter_speed(a, 0.0);
        for i in 1..=n {
            let u = i as f64 * du;
            let cur = Self::parameter_speed(a, u);
            s += 0.5 * (prev + cur) * du;
            arc_table.push(s);
            prev = cur;
        }
        let total_length = s;
        Self { a, arc_table, total_length }
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn max_curvature(&self) -> f64 {
        3.0 / self.a
    }

    /// |dp/du| of the parametric curve
    /// p(u) = a * (cos u, sin u cos u) / (1 + sin^2 u).
    fn parameter_speed(a: f64, u: f64) -> f64 {
        let sin = u.sin();
        let s2 = sin * sin;
        let d = 1.0 + s2;
        let xp = -sin * (3.0 - s2);
        let yp = 1.0 - 3.0 * s2;
        a * (xp * xp + yp * yp).sqrt() / (d * d)
    }

    fn parameter_at_arc_length(&self, s: f64) -> f64 {
        let s = s.rem_euclid(self.total_length);
        // Binary search the cumulative table, then interpolate linearly.
        let i = self.arc_table.partition_point(|&v| v <= s).min(self.arc_table.len() - 1);
        let (i0, i1) = (i - 1, i);
        let (s0, s1) = (self.arc_table[i0], self.arc_table[i1]);
        let frac = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        let du = std::f64::consts::TAU / ARC_TABLE_SIZE as f64;
        (i0 as f64 + frac) * du
    }

    pub fn sample(&self, s: f64) -> PathSample {
        let u = self.parameter_at_arc_length(s);
        let (sin, cos) = u.sin_cos();
        let s2 = sin * sin;
        let d = 1.0 + s2;
        let position = Vector2::new(self.a * cos / d, self.a * sin * cos / d);
        let heading = (1.0 - 3.0 * s2).atan2(-sin * (3.0 - s2));
        let curvature = 3.0 * cos / (self.a * d.sqrt());
        PathSample { position, heading, curvature }
    }
}

/// Piecewise-linear path through waypoints; zero curvature on segments.
#[derive(Debug, Clone)]
pub struct WaypointPath {
    points: Vec<Vector2<f64>>,
    cumulative: Vec<f64>,
}

impl WaypointPath {
    /// Requires at least two distinct consecutive waypoints.
    pub fn new(waypoints: &[[f64; 2]]) -> Option<Self> {
        if waypoints.len() < 2 {
            return None;
        }
        let points: Vec<Vector2<f64>> =
            waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect();
        let mut cumulative = vec![0.0];
        for pair in points.windows(2) {
            let len = (pair[1] - pair[0]).norm();
            if len <= 0.0 {
                return None;
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        Some(Self { points, cumulative })
    }

    pub fn total_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Arc lengths beyond the end clamp to the final pose.
    pub fn sample(&self, s: f64) -> PathSample {
        let s = s.clamp(0.0, self.total_length());
        let i = self
            .cumulative
            .partition_point(|&v| v <= s)
            .clamp(1, self.points.len() - 1);
        let (p0, p1) = (self.points[i - 1], self.points[i]);
        let seg = p1 - p0;
        let seg_len = seg.norm();
        let frac = (s - self.cumulative[i - 1]) / seg_len;
        PathSample {
            position: p0 + seg * frac,
            heading: seg.y.atan2(seg.x),
            curvature: 0.0,
        }
    }
}
