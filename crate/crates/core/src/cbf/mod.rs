//! Constraint rows from high-order control barrier functions and relaxed
//! control Lyapunov functions.
//!
//! Derivatives along the dynamics are taken with the control held constant
//! over the sample (zero-order hold): the state is expanded as a Taylor series
//! in time for `u = 0` and for each unit control, and the barrier is evaluated
//! on those series. The k-th time derivative is affine in a held control for
//! the vehicle model, so the three expansions give exact row coefficients.

pub mod families;

use crate::dynamics::{state_series, Dynamics};
use crate::error::Result;
use crate::scalar::{Jet, Scalar};

/// Series length: derivatives up to order `SERIES - 1` are available.
pub const SERIES: usize = 5;
pub type Series = Jet<SERIES>;

/// Largest supported relative degree.
pub const MAX_DEGREE: usize = SERIES - 1;

/// A scalar function of time and state, evaluable on any [`Scalar`].
pub trait StateFn {
    fn eval<S: Scalar>(&self, t: S, x: &[S]) -> Result<S>;
}

/// `weights·x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineStateFn {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl StateFn for AffineStateFn {
    fn eval<S: Scalar>(&self, _t: S, x: &[S]) -> Result<S> {
        let mut acc = S::cst(self.offset);
        for (w, xi) in self.weights.iter().zip(x) {
            acc += *xi * *w;
        }
        Ok(acc)
    }
}

/// Time expansions of the state at one sample for zero and unit controls.
#[derive(Clone, Debug)]
pub struct Expansion {
    pub t0: f64,
    pub zero: Vec<Series>,
    pub unit: Vec<Vec<Series>>,
}

impl Expansion {
    pub fn new<D: Dynamics>(dyn_: &D, t0: f64, x0: &[f64]) -> Result<Self> {
        let q = dyn_.control_dim();
        let zero = state_series::<D, SERIES>(dyn_, t0, x0, &vec![0.0; q])?;
        let mut unit = Vec::with_capacity(q);
        for i in 0..q {
            let mut u = vec![0.0; q];
            u[i] = 1.0;
            unit.push(state_series::<D, SERIES>(dyn_, t0, x0, &u)?);
        }
        Ok(Expansion { t0, zero, unit })
    }

    pub fn control_dim(&self) -> usize {
        self.unit.len()
    }

    pub fn state(&self) -> Vec<f64> {
        self.zero.iter().map(|j| j.c[0]).collect()
    }

    /// Time derivatives of `f` along the zero-control flow, plus, per control,
    /// the derivative increments produced by a unit control.
    pub fn derivatives<F: StateFn>(&self, f: &F) -> Result<Derivatives> {
        let t = Series::variable(self.t0);
        let base = f.eval(t, &self.zero)?;
        let zero: Vec<f64> = (0..SERIES).map(|k| base.derivative(k)).collect();
        let mut gain = Vec::with_capacity(self.unit.len());
        for xs in &self.unit {
            let v = f.eval(t, xs)?;
            gain.push((0..SERIES).map(|k| v.derivative(k) - zero[k]).collect());
        }
        Ok(Derivatives { zero, gain })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Derivatives {
    /// `zero[k]` is the k-th time derivative with zero control.
    pub zero: Vec<f64>,
    /// `gain[i][k]` is the change of the k-th derivative per unit of control `i`.
    pub gain: Vec<Vec<f64>>,
}

/// Weights expressing `ψ_i` as a combination of the time derivatives of `b`:
/// `ψ_0 = b`, `ψ_i = ψ_{i-1}' + k_i ψ_{i-1}`.
pub fn psi_weights(gains: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0]];
    for &k in gains {
        let prev = out.last().unwrap();
        let mut next = vec![0.0; prev.len() + 1];
        for (j, w) in prev.iter().enumerate() {
            next[j + 1] += w;
            next[j] += k * w;
        }
        out.push(next);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Sense {
    /// `coeffs·u + constant ≥ relax`
    Ge,
    /// `coeffs·u + constant ≤ relax`
    Le,
}

/// A linear constraint on the control, optionally with a relaxation column.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintRow {
    pub coeffs: Vec<f64>,
    pub constant: f64,
    pub relax: Option<usize>,
    pub sense: Sense,
}

impl ConstraintRow {
    /// Value of `coeffs·u + constant`.
    pub fn lhs(&self, u: &[f64]) -> f64 {
        self.coeffs.iter().zip(u).map(|(c, v)| c * v).sum::<f64>() + self.constant
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierSpec<F> {
    pub function: F,
    pub degree: usize,
    /// Linear class-K gains `k_1..k_m`.
    pub gains: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiSequence {
    /// `ψ_0 .. ψ_{m-1}` at the current state.
    pub values: Vec<f64>,
    /// `false` when some `ψ_i < 0`: the forward-invariance guarantee is void.
    pub in_safe_set: bool,
    pub row: ConstraintRow,
}

pub fn psi_sequence<F: StateFn>(spec: &BarrierSpec<F>, exp: &Expansion, relax: Option<usize>) -> Result<PsiSequence> {
    let m = spec.degree;
    if m == 0 || m > MAX_DEGREE || spec.gains.len() != m {
        return Err(crate::Error::invalid(format!(
            "barrier degree {m} needs {m} gains and must be in 1..={MAX_DEGREE}"
        )));
    }
    if spec.gains.iter().any(|k| !(*k > 0.0)) {
        return Err(crate::Error::invalid("class-K gains must be positive"));
    }
    let d = exp.derivatives(&spec.function)?;
    let w = psi_weights(&spec.gains);
    let values: Vec<f64> = (0..m)
        .map(|i| w[i].iter().enumerate().map(|(j, wj)| wj * d.zero[j]).sum())
        .collect();
    let last = &w[m];
    let constant = last.iter().enumerate().map(|(j, wj)| wj * d.zero[j]).sum();
    let coeffs = d
        .gain
        .iter()
        .map(|g| last.iter().enumerate().map(|(j, wj)| wj * g[j]).sum())
        .collect();
    let in_safe_set = values.iter().all(|v| *v >= 0.0);
    Ok(PsiSequence {
        values,
        in_safe_set,
        row: ConstraintRow {
            coeffs,
            constant,
            relax,
            sense: Sense::Ge,
        },
    })
}

pub fn hocbf_row<F: StateFn>(spec: &BarrierSpec<F>, exp: &Expansion, relax: Option<usize>) -> Result<ConstraintRow> {
    Ok(psi_sequence(spec, exp, relax)?.row)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClfSpec<F> {
    pub function: F,
    /// Exponential decay rate.
    pub rate: f64,
}

/// `V' + rate·V ≤ δ_e` as a row; returns the row and `V`.
pub fn clf_row<F: StateFn>(spec: &ClfSpec<F>, exp: &Expansion, relax: Option<usize>) -> Result<(ConstraintRow, f64)> {
    let d = exp.derivatives(&spec.function)?;
    let v = d.zero[0];
    Ok((
        ConstraintRow {
            coeffs: d.gain.iter().map(|g| g[1]).collect(),
            constant: d.zero[1] + spec.rate * v,
            relax,
            sense: Sense::Le,
        },
        v,
    ))
}
