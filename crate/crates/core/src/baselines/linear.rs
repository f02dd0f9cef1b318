//! Linear dueling bandit: utility modelled as `θᵀx`, fitted by regularized
//! logistic regression on arm differences, with optimistic second-arm choice
//! under the design matrix `M = λI + Σ zzᵀ`.

use ndarray::{Array1, Array2, ArrayView1};

use crate::domain::{ArmDomain, ArmResolver};
use crate::error::{Error, Result};
use crate::history::{History, PreferenceRecord};
use crate::math::{argmax_by, log_sigmoid, sigmoid};
use crate::policy::{DuelingPolicy, RoundView, Selection};

const NEWTON_TOLERANCE: f64 = 1e-8;
const NEWTON_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub theta: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// `(z_s, y_s)` pairs from a history.
fn differences<R: ArmResolver + ?Sized>(
    history: &History,
    resolver: &R,
) -> Result<Vec<(Array1<f64>, f64)>> {
    history
        .records()
        .iter()
        .map(|r| {
            let d = resolver.domain_for(r.context_id.as_deref())?;
            let z = ArrayView1::from(d.embedding(r.first)).to_owned()
                - ArrayView1::from(d.embedding(r.second));
            Ok((z, f64::from(r.outcome)))
        })
        .collect()
}

fn objective(theta: &Array1<f64>, data: &[(Array1<f64>, f64)], lambda: f64) -> f64 {
    let nll: f64 = data
        .iter()
        .map(|(z, y)| {
            let m = theta.dot(z);
            -(y * log_sigmoid(m) + (1.0 - y) * log_sigmoid(-m))
        })
        .sum();
    nll + lambda * theta.dot(theta)
}

/// In-place Cholesky solve of `a · x = b` for symmetric positive-definite `a`.
fn cholesky_solve(mut a: Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        if diag <= 0.0 {
            return None;
        }
        let diag = diag.sqrt();
        a[[j, j]] = diag;
        for i in j + 1..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / diag;
        }
    }
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            y[i] -= a[[i, k]] * y[k];
        }
        y[i] /= a[[i, i]];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= a[[k, i]] * y[k];
        }
        y[i] /= a[[i, i]];
    }
    Some(y)
}

/// Regularized maximum-likelihood `θ̂` by damped Newton iterations.
/// Non-convergence within the iteration cap is reported through
/// `LinearFit::converged`, with the last iterate returned.
pub fn linear_fit<R: ArmResolver + ?Sized>(
    history: &History,
    resolver: &R,
    d: usize,
    lambda: f64,
) -> Result<LinearFit> {
    if !(lambda > 0.0) {
        return Err(Error::Config("lambda must be positive".into()));
    }
    let data = differences(history, resolver)?;
    let mut theta = Array1::zeros(d);
    let mut loss = objective(&theta, &data, lambda);
    let mut gradient_norm = f64::INFINITY;
    for iteration in 0..=NEWTON_MAX_ITERATIONS {
        let mut grad = &theta * (2.0 * lambda);
        let mut hess = Array2::eye(d) * (2.0 * lambda);
        for (z, y) in &data {
            let s = sigmoid(theta.dot(z));
            grad.scaled_add(s - y, z);
            let w = s * (1.0 - s);
            if w > 0.0 {
                let zc = z.view().insert_axis(ndarray::Axis(1));
                let zr = z.view().insert_axis(ndarray::Axis(0));
                ndarray::linalg::general_mat_mul(w, &zc, &zr, 1.0, &mut hess);
            }
        }
        gradient_norm = grad.dot(&grad).sqrt();
        if gradient_norm < NEWTON_TOLERANCE {
            return Ok(LinearFit {
                theta,
                converged: true,
                iterations: iteration,
                gradient_norm,
            });
        }
        if iteration == NEWTON_MAX_ITERATIONS {
            break;
        }
        let step = cholesky_solve(hess, &grad)
            .ok_or_else(|| Error::Config("Newton system is not positive definite".into()))?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &theta - &(&step * alpha);
            let candidate_loss = objective(&candidate, &data, lambda);
            if candidate_loss <= loss - 1e-4 * alpha * grad.dot(&step) {
                theta = candidate;
                loss = candidate_loss;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No representable decrease left; this is as good as it gets.
            break;
        }
    }
    Ok(LinearFit {
        theta,
        converged: gradient_norm < NEWTON_TOLERANCE,
        iterations: NEWTON_MAX_ITERATIONS,
        gradient_norm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDuelingState {
    pub theta_hat: Array1<f64>,
    pub m_inv: Array2<f64>,
    pub nu: f64,
    pub lambda: f64,
    pub exclude_first: bool,
}

impl LinearDuelingState {
    pub fn new(d: usize, nu: f64, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        Ok(Self {
            theta_hat: Array1::zeros(d),
            m_inv: Array2::eye(d) / lambda,
            nu,
            lambda,
            exclude_first: true,
        })
    }

    fn utility(&self, x: &[f64]) -> f64 {
        self.theta_hat.dot(&ArrayView1::from(x))
    }

    /// Pair under the current `θ̂` and `M⁻¹`, without updating `M`.
    pub fn choose_pair(&self, domain: &ArmDomain) -> Result<(usize, usize)> {
        if domain.len() < 2 && self.exclude_first {
            return Err(Error::TooFewArms {
                needed: 2,
                found: domain.len(),
            });
        }
        let first = argmax_by((0..domain.len()).map(|i| (i, self.utility(domain.embedding(i)))))
            .ok_or(Error::EmptyDomain)?;
        let x1 = ArrayView1::from(domain.embedding(first));
        let second = argmax_by(
            (0..domain.len())
                .filter(|&i| !(self.exclude_first && i == first))
                .map(|i| (i, self.acquisition(domain.embedding(i), x1))),
        )
        .ok_or(Error::EmptyDomain)?;
        Ok((first, second))
    }

    /// `θ̂ᵀx + ν‖x − x_first‖_{M⁻¹}`.
    pub fn acquisition(&self, x: &[f64], first: ArrayView1<'_, f64>) -> f64 {
        let diff = &ArrayView1::from(x) - &first;
        let q = diff.dot(&self.m_inv.dot(&diff)).max(0.0);
        self.utility(x) + self.nu * q.sqrt()
    }

    /// Sherman–Morrison update of `M⁻¹` with `zzᵀ`.
    pub fn absorb(&mut self, z: ArrayView1<'_, f64>) {
        let u = self.m_inv.dot(&z);
        let c = 1.0 / (1.0 + z.dot(&u));
        for (mut row, &ui) in self.m_inv.rows_mut().into_iter().zip(&u) {
            for (v, &uj) in row.iter_mut().zip(&u) {
                *v -= (ui * uj) * c;
            }
        }
    }
}

/// Chooses a pair and folds `z = x_first − x_second` into `M⁻¹`.
pub fn linear_select(state: &mut LinearDuelingState, domain: &ArmDomain) -> Result<(usize, usize)> {
    let (first, second) = state.choose_pair(domain)?;
    let z = ArrayView1::from(domain.embedding(first)).to_owned()
        - ArrayView1::from(domain.embedding(second));
    state.absorb(z.view());
    Ok((first, second))
}

/// The linear dueling bandit as a policy. `θ̂` is refitted on the full
/// history whenever the history grows.
#[derive(Debug, Clone)]
pub struct LinearDueling {
    state: LinearDuelingState,
    fitted_on: Option<usize>,
}

impl LinearDueling {
    pub fn new(d: usize, nu: f64, lambda: f64, exclude_first: bool) -> Result<Self> {
        let mut state = LinearDuelingState::new(d, nu, lambda)?;
        state.exclude_first = exclude_first;
        Ok(Self {
            state,
            fitted_on: None,
        })
    }

    pub fn state(&self) -> &LinearDuelingState {
        &self.state
    }

    fn refit(&mut self, view: &RoundView<'_>) -> Result<()> {
        if self.fitted_on != Some(view.history.len()) {
            let fit = linear_fit(
                view.history,
                view.resolver,
                view.domain.dim(),
                self.state.lambda,
            )?;
            self.state.theta_hat = fit.theta;
            self.fitted_on = Some(view.history.len());
        }
        Ok(())
    }
}

impl DuelingPolicy for LinearDueling {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn select(&mut self, view: &RoundView<'_>) -> Result<Selection> {
        self.refit(view)?;
        let (first, second) = self.state.choose_pair(view.domain)?;
        Ok(Selection {
            first,
            second,
            phi: None,
        })
    }

    fn absorb_record(
        &mut self,
        record: &PreferenceRecord,
        resolver: &dyn ArmResolver,
    ) -> Result<()> {
        let d = resolver.domain_for(record.context_id.as_deref())?;
        let z = ArrayView1::from(d.embedding(record.first)).to_owned()
            - ArrayView1::from(d.embedding(record.second));
        self.state.absorb(z.view());
        Ok(())
    }

    fn report(&mut self, view: &RoundView<'_>, candidates: &[usize]) -> Result<usize> {
        if candidates.is_empty() {
            return Err(Error::EmptyQueriedSet);
        }
        self.refit(view)?;
        let mut sorted = candidates.to_vec();
        sorted.sort_unstable();
        argmax_by(
            sorted
                .iter()
                .map(|&i| (i, self.state.utility(view.domain.embedding(i)))),
        )
        .ok_or(Error::EmptyQueriedSet)
    }
}
