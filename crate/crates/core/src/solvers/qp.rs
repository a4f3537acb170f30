//! Dense convex QP: `min ½xᵀQx + cᵀx  s.t.  Gx ≥ h`.
//!
//! Mehrotra predictor-corrector interior point. When the main solve does not
//! converge, a phase-1 problem `min Σt  s.t.  Gx + t ≥ h, t ≥ 0` is solved on
//! the row-normalized constraints; a positive optimum certifies
//! infeasibility, otherwise the failure is reported as numerical.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl QpProblem {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        QpProblem {
            q,
            c,
            g: DMatrix::zeros(0, n),
            h: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Appends `a·x ≥ b`.
    pub fn add_row(&mut self, a: &[f64], b: f64) {
        let m = self.g.nrows();
        let n = self.dim();
        let g = std::mem::replace(&mut self.g, DMatrix::zeros(0, 0));
        let mut g = g.resize_vertically(m + 1, 0.0);
        for j in 0..n {
            g[(m, j)] = a.get(j).copied().unwrap_or(0.0);
        }
        self.g = g;
        let h = std::mem::replace(&mut self.h, DVector::zeros(0));
        let mut h = h.resize_vertically(m + 1, 0.0);
        h[m] = b;
        self.h = h;
    }

    /// Appends `lo ≤ x_i ≤ hi`.
    pub fn add_bounds(&mut self, i: usize, lo: f64, hi: f64) {
        let n = self.dim();
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        self.add_row(&e, lo);
        e[i] = -1.0;
        self.add_row(&e, -hi);
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    /// Largest amount by which `x` violates a row.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let r = &self.g * x - &self.h;
        r.iter().fold(0.0, |m: f64, v| m.max(-v))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpOutcome {
    pub status: QpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub iterations: usize,
    /// Phase-1 optimum (normalized total violation) when it was computed.
    pub infeasibility: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Phase-1 optimum above which the problem is declared infeasible.
    pub infeasibility_threshold: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iterations: 200,
            tolerance: 1e-9,
            infeasibility_threshold: 1e-6,
        }
    }
}

struct IpmResult {
    x: DVector<f64>,
    converged: bool,
    iterations: usize,
}

/// Scales rows to unit norm; rows with a zero coefficient vector are dropped
/// and reported through the returned flag (true when such a row is violated).
fn normalize(p: &QpProblem) -> (DMatrix<f64>, DVector<f64>, bool) {
    let n = p.dim();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut trivially_infeasible = false;
    for i in 0..p.g.nrows() {
        let norm = p.g.row(i).norm();
        if norm <= 1e-14 {
            if p.h[i] > 1e-12 {
                trivially_infeasible = true;
            }
            continue;
        }
        rows.push(p.g.row(i) / norm);
        rhs.push(p.h[i] / norm);
    }
    let g = if rows.is_empty() {
        DMatrix::zeros(0, n)
    } else {
        DMatrix::from_rows(&rows)
    };
    (g, DVector::from_vec(rhs), trivially_infeasible)
}

fn ipm(q: &DMatrix<f64>, c: &DVector<f64>, g: &DMatrix<f64>, h: &DVector<f64>, s: &QpSettings) -> IpmResult {
    let n = c.len();
    let m = h.len();
    let scale = 1.0 + c.amax().max(h.amax()).max(q.amax());
    let reg = 1e-12 * (1.0 + q.amax());
    // starting point: regularized least squares then shifted slacks
    let gt = g.transpose();
    let mut x = {
        let a = q + &gt * g + DMatrix::identity(n, n) * (reg + 1e-8);
        match a.cholesky() {
            Some(ch) => ch.solve(&(-c + &gt * h)),
            None => DVector::zeros(n),
        }
    };
    if m == 0 {
        let a = q + DMatrix::identity(n, n) * reg;
        let converged = match a.clone().cholesky() {
            Some(ch) => {
                x = ch.solve(&(-c));
                (q * &x + c).amax() <= s.tolerance * scale * 10.0
            }
            None => false,
        };
        return IpmResult {
            x,
            converged,
            iterations: 1,
        };
    }
    let r0 = g * &x - h;
    let mut sl = r0.map(|v| v.max(1.0));
    let mut z = DVector::from_element(m, 1.0);
    // last iterate meeting a looser tolerance, used when progress stalls
    let mut near = None;
    for it in 0..s.max_iterations {
        let rd = q * &x + c - &gt * &z;
        let rp = g * &x - &sl - h;
        let mu = sl.dot(&z) / m as f64;
        if rd.amax() <= s.tolerance * scale && rp.amax() <= s.tolerance * scale && mu <= s.tolerance * scale {
            return IpmResult {
                x,
                converged: true,
                iterations: it,
            };
        }
        if !mu.is_finite() || z.amax() > 1e14 || x.amax() > 1e14 {
            break;
        }
        let loose = 1e3 * s.tolerance * scale;
        if rd.amax() <= loose && rp.amax() <= loose && mu <= loose {
            near = Some((x.clone(), it));
        }
        let d = sl.zip_map(&z, |si, zi| zi / si);
        let mut kkt = q.clone();
        for i in 0..m {
            let gi = g.row(i);
            kkt += gi.transpose() * gi * d[i];
        }
        for j in 0..n {
            kkt[(j, j)] += reg;
        }
        let ch = match kkt.clone().cholesky() {
            Some(ch) => ch,
            None => {
                let bump = 1e-10 * (1.0 + kkt.diagonal().amax());
                for j in 0..n {
                    kkt[(j, j)] += bump;
                }
                match kkt.cholesky() {
                    Some(ch) => ch,
                    None => break,
                }
            }
        };
        let solve_dir = |rc: &DVector<f64>| {
            // dz = S⁻¹(rc - Z(G dx + rp)), ds = G dx + rp
            let t = rc.zip_map(&sl, |a, b| a / b) - rp.component_mul(&d);
            let rhs = -&rd + &gt * &t;
            let dx = ch.solve(&rhs);
            let ds = g * &dx + &rp;
            let dz = (rc - z.component_mul(&ds)).zip_map(&sl, |a, b| a / b);
            (dx, ds, dz)
        };
        let max_step = |v: &DVector<f64>, dv: &DVector<f64>| {
            let mut a: f64 = 1.0;
            for i in 0..v.len() {
                if dv[i] < 0.0 {
                    a = a.min(-v[i] / dv[i]);
                }
            }
            a
        };
        let rc_aff = -sl.component_mul(&z);
        let (_, ds_a, dz_a) = solve_dir(&rc_aff);
        let a_aff = max_step(&sl, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = (&sl + &ds_a * a_aff).dot(&(&z + &dz_a * a_aff)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = rc_aff.add_scalar(sigma * mu) - ds_a.component_mul(&dz_a);
        let (dx, ds, dz) = solve_dir(&rc);
        let alpha = (0.99 * max_step(&sl, &ds).min(max_step(&z, &dz))).min(1.0);
        x += &dx * alpha;
        sl += &ds * alpha;
        z += &dz * alpha;
        for i in 0..m {
            sl[i] = sl[i].max(1e-300);
            z[i] = z[i].max(1e-300);
        }
    }
    match near {
        Some((x, it)) => IpmResult {
            x,
            converged: true,
            iterations: it,
        },
        None => IpmResult {
            x,
            converged: false,
            iterations: s.max_iterations,
        },
    }
}

/// Optimal value of the phase-1 problem on normalized rows.
fn phase_one(g: &DMatrix<f64>, h: &DVector<f64>, s: &QpSettings) -> Option<(f64, DVector<f64>)> {
    let (m, n) = (g.nrows(), g.ncols());
    let nn = n + m;
    let q = DMatrix::zeros(nn, nn);
    let mut c = DVector::zeros(nn);
    for i in 0..m {
        c[n + i] = 1.0;
    }
    let mut gg = DMatrix::zeros(2 * m, nn);
    let mut hh = DVector::zeros(2 * m);
    for i in 0..m {
        for j in 0..n {
            gg[(i, j)] = g[(i, j)];
        }
        gg[(i, n + i)] = 1.0;
        hh[i] = h[i];
        gg[(m + i, n + i)] = 1.0;
    }
    let r = ipm(&q, &c, &gg, &hh, s);
    if !r.converged {
        return None;
    }
    let x = r.x.rows(0, n).into_owned();
    // exact violation of the returned point is an upper bound on the optimum;
    // at convergence it matches it to solver tolerance
    let viol: f64 = (g * &x - h).iter().map(|v| (-v).max(0.0)).sum();
    Some((viol, x))
}

pub fn solve_qp(p: &QpProblem) -> QpOutcome {
    solve_qp_with(p, &QpSettings::default())
}

pub fn solve_qp_with(p: &QpProblem, s: &QpSettings) -> QpOutcome {
    let n = p.dim();
    let (g, h, trivially_infeasible) = normalize(p);
    let fail = |status, x: DVector<f64>, iterations, infeasibility| QpOutcome {
        status,
        objective: p.objective(&x),
        max_violation: p.max_violation(&x),
        x,
        iterations,
        infeasibility,
    };
    if trivially_infeasible {
        return fail(QpStatus::Infeasible, DVector::zeros(n), 0, None);
    }
    let r = ipm(&p.q, &p.c, &g, &h, s);
    if r.converged {
        let viol = p.max_violation(&r.x);
        let scale = 1.0 + p.h.amax();
        if viol <= 1e-7 * scale {
            return QpOutcome {
                status: QpStatus::Optimal,
                objective: p.objective(&r.x),
                max_violation: viol,
                x: r.x,
                iterations: r.iterations,
                infeasibility: None,
            };
        }
    }
    match phase_one(&g, &h, s) {
        Some((v, x)) if v > s.infeasibility_threshold => fail(QpStatus::Infeasible, x, r.iterations, Some(v)),
        Some((v, _)) => fail(QpStatus::NumericalFailure, r.x, r.iterations, Some(v)),
        None => fail(QpStatus::NumericalFailure, r.x, r.iterations, None),
    }
}
