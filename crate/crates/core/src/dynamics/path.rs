//! Reference paths: arc-length parameterized cubic splines through an ordered
//! point sequence, with curvature and tangent available on any [`Scalar`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Spline fitting options.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplineOptions {
    /// Roughness penalty weight; 0 interpolates the points.
    pub smoothing: f64,
    /// Number of arc-length re-parameterization passes.
    pub reparam_passes: usize,
}

impl Default for SplineOptions {
    fn default() -> Self {
        SplineOptions {
            smoothing: 0.0,
            reparam_passes: 2,
        }
    }
}

/// One coordinate of a piecewise cubic: on `[k_i, k_{i+1}]`,
/// `a + b t + c t² + d t³` with `t = s - k_i`.
#[derive(Clone, Debug, PartialEq)]
struct Cubic {
    knots: Vec<f64>,
    coef: Vec<[f64; 4]>,
}

impl Cubic {
    fn piece(&self, s: f64) -> usize {
        let n = self.coef.len();
        match self.knots.binary_search_by(|k| k.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    /// Value, first and second derivative.
    fn eval<S: Scalar>(&self, s: S) -> (S, S, S) {
        let i = self.piece(s.value());
        let [a, b, c, d] = self.coef[i];
        let t = s - self.knots[i];
        let v = ((t * d + c) * t + b) * t + a;
        let d1 = (t * (3.0 * d) + 2.0 * c) * t + b;
        let d2 = t * (6.0 * d) + 2.0 * c;
        (v, d1, d2)
    }
}

/// Natural cubic smoothing spline (Reinsch). `lambda = 0` interpolates.
fn fit_cubic(knots: &[f64], y: &[f64], lambda: f64) -> Result<Cubic> {
    let n = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("spline knots must be strictly increasing"));
    }
    let m = n - 2;
    let mut gamma_inner = DVector::zeros(m);
    let mut g: Vec<f64> = y.to_vec();
    if m > 0 {
        // Q is n x m, R is m x m
        let mut q = DMatrix::zeros(n, m);
        let mut r = DMatrix::zeros(m, m);
        for j in 0..m {
            let (h0, h1) = (h[j], h[j + 1]);
            q[(j, j)] = 1.0 / h0;
            q[(j + 1, j)] = -1.0 / h0 - 1.0 / h1;
            q[(j + 2, j)] = 1.0 / h1;
            r[(j, j)] = (h0 + h1) / 3.0;
            if j + 1 < m {
                r[(j, j + 1)] = h1 / 6.0;
                r[(j + 1, j)] = h1 / 6.0;
            }
        }
        let yv = DVector::from_column_slice(y);
        let a = &r + q.transpose() * &q * lambda;
        let rhs = q.transpose() * &yv;
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::invalid("spline system is not positive definite"))?;
        gamma_inner = chol.solve(&rhs);
        let gv = &yv - &q * &gamma_inner * lambda;
        g = gv.iter().copied().collect();
    }
    let mut gamma = vec![0.0; n];
    for j in 0..m {
        gamma[j + 1] = gamma_inner[j];
    }
    let coef = (0..n - 1)
        .map(|i| {
            let hi = h[i];
            let b = (g[i + 1] - g[i]) / hi - hi * (2.0 * gamma[i] + gamma[i + 1]) / 6.0;
            [g[i], b, gamma[i] / 2.0, (gamma[i + 1] - gamma[i]) / (6.0 * hi)]
        })
        .collect();
    Ok(Cubic {
        knots: knots.to_vec(),
        coef,
    })
}

/// Local frame of the path at a given progress.
#[derive(Clone, Copy, Debug)]
pub struct Frame<S> {
    pub x: S,
    pub y: S,
    pub cos_phi: S,
    pub sin_phi: S,
    pub kappa: S,
}

#[derive(Clone, Debug)]
pub struct ReferencePath {
    points: Vec<(f64, f64)>,
    xs: Cubic,
    ys: Cubic,
    length: f64,
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

impl ReferencePath {
    pub fn build(points: &[(f64, f64)]) -> Result<Self> {
        Self::build_with(points, SplineOptions::default())
    }

    pub fn build_with(points: &[(f64, f64)], opts: SplineOptions) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid(format!(
                "reference path needs at least 4 points, got {}",
                points.len()
            )));
        }
        if opts.smoothing < 0.0 || !opts.smoothing.is_finite() {
            return Err(Error::invalid("smoothing weight must be finite and non-negative"));
        }
        let mut knots = vec![0.0];
        for w in points.windows(2) {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            if !(d > 1e-9) {
                return Err(Error::invalid("consecutive reference points must be distinct"));
            }
            knots.push(knots.last().unwrap() + d);
        }
        let px: Vec<f64> = points.iter().map(|p| p.0).collect();
        let py: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mut path = ReferencePath {
            points: points.to_vec(),
            xs: fit_cubic(&knots, &px, opts.smoothing)?,
            ys: fit_cubic(&knots, &py, opts.smoothing)?,
            length: 0.0,
        };
        for _ in 0..opts.reparam_passes {
            let arc = path.knot_arc_lengths();
            path.xs = fit_cubic(&arc, &px, opts.smoothing)?;
            path.ys = fit_cubic(&arc, &py, opts.smoothing)?;
        }
        path.length = *path.knot_arc_lengths().last().unwrap();
        Ok(path)
    }

    fn knot_arc_lengths(&self) -> Vec<f64> {
        let k = &self.xs.knots;
        let mut out = vec![0.0];
        for i in 0..k.len() - 1 {
            let (a, b) = (k[i], k[i + 1]);
            let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
            let mut acc = 0.0;
            for (x, w) in GAUSS5 {
                let s = mid + half * x;
                let (_, dx, _) = self.xs.eval(s);
                let (_, dy, _) = self.ys.eval(s);
                acc += w * (dx * dx + dy * dy).sqrt();
            }
            out.push(out.last().unwrap() + acc * half);
        }
        out
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Frame at progress `s`. Outside `[0, length]` the path continues as a
    /// straight line along the end tangent.
    pub fn frame<S: Scalar>(&self, s: S) -> Frame<S> {
        let sv = s.value();
        if sv > self.length || sv < 0.0 {
            let anchor = if sv > self.length { self.length } else { 0.0 };
            let f = self.frame(anchor);
            let ds = s - anchor;
            return Frame {
                x: ds * f.cos_phi + f.x,
                y: ds * f.sin_phi + f.y,
                cos_phi: S::cst(f.cos_phi),
                sin_phi: S::cst(f.sin_phi),
                kappa: S::cst(0.0),
            };
        }
        let (x, dx, ddx) = self.xs.eval(s);
        let (y, dy, ddy) = self.ys.eval(s);
        let speed = (dx * dx + dy * dy).sqrt();
        Frame {
            x,
            y,
            cos_phi: dx / speed,
            sin_phi: dy / speed,
            kappa: (dx * ddy - dy * ddx) / (speed * speed * speed),
        }
    }

    pub fn curvature<S: Scalar>(&self, s: S) -> S {
        self.frame(s).kappa
    }

    pub fn heading(&self, s: f64) -> f64 {
        let f = self.frame(s);
        f.sin_phi.atan2(f.cos_phi)
    }

    /// Global point at progress `s` and signed lateral offset `d` (left positive).
    pub fn to_global(&self, s: f64, d: f64) -> (f64, f64) {
        let f = self.frame(s);
        (f.x - d * f.sin_phi, f.y + d * f.cos_phi)
    }

    /// Closest point on the path: `(s, d)` with `d` positive to the left.
    pub fn project(&self, p: (f64, f64)) -> (f64, f64) {
        let n = ((self.length / 0.25).ceil() as usize).max(8);
        let mut best_s = 0.0;
        let mut best_d2 = f64::INFINITY;
        for i in 0..=n {
            let s = self.length * i as f64 / n as f64;
            let f = self.frame(s);
            let d2 = (f.x - p.0).powi(2) + (f.y - p.1).powi(2);
            if d2 < best_d2 {
                best_d2 = d2;
                best_s = s;
            }
        }
        let mut s = best_s;
        for _ in 0..20 {
            let f = self.frame(s);
            let (ex, ey) = (p.0 - f.x, p.1 - f.y);
            let along = ex * f.cos_phi + ey * f.sin_phi;
            let lat = -ex * f.sin_phi + ey * f.cos_phi;
            let denom = 1.0 - f.kappa * lat;
            let step = if denom > 0.1 { along / denom } else { along };
            s = (s + step).clamp(0.0, self.length);
            if step.abs() < 1e-12 {
                break;
            }
        }
        let f = self.frame(s);
        let d = -(p.0 - f.x) * f.sin_phi + (p.1 - f.y) * f.cos_phi;
        (s, d)
    }

    /// Polyline offset laterally by `d` (left positive), sampled every `step` meters.
    pub fn offset_polyline(&self, d: f64, step: f64) -> Vec<(f64, f64)> {
        let n = ((self.length / step).ceil() as usize).max(1);
        (0..=n).map(|i| self.to_global(self.length * i as f64 / n as f64, d)).collect()
    }
}

/// Index of the path point nearest to `p` (first one on ties).
pub fn nearest_index(p: (f64, f64), points: &[(f64, f64)]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::invalid("empty reference path"));
    }
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (i, q) in points.iter().enumerate() {
        let d = (q.0 - p.0).powi(2) + (q.1 - p.1).powi(2);
        if d < bd {
            bd = d;
            best = i;
        }
    }
    Ok(best)
}

/// Reference point bookkeeping: advance past `i_prev` once within `gamma` of
/// it, otherwise jump to the nearest point. Clamped at the last point, where
/// the second element reports that the path is exhausted.
pub fn update_reference_index(p: (f64, f64), points: &[(f64, f64)], i_prev: usize, gamma: f64) -> Result<(usize, bool)> {
    if points.is_empty() {
        return Err(Error::invalid("empty reference path"));
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if i_prev >= points.len() {
        return Err(Error::invalid("reference index out of range"));
    }
    let last = points.len() - 1;
    let q = points[i_prev];
    let dist = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
    if dist <= gamma {
        if i_prev == last {
            return Ok((last, true));
        }
        return Ok((i_prev + 1, false));
    }
    let j = nearest_index(p, points)?;
    Ok((j, false))
}
