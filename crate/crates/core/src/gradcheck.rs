//! Central finite-difference verification of tape gradients.

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;
use crate::rng::StreamKey;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Finite-difference step, in `[1e-7, 1e-3]`.
    pub eps: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Denominator floor for the relative error, so gradients far below
    /// finite-difference resolution compare on an absolute scale.
    pub abs_floor: f64,
    /// Check at most this many entries per parameter (sampled deterministically).
    pub max_entries: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-7,
            max_entries: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryMismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
    /// Entries whose gradients lie below the resolution floor.
    pub below_resolution: usize,
    /// Entries above tolerance.
    pub failures: Vec<EntryMismatch>,
    /// Entries where the objective was not finite at a perturbed point.
    pub non_finite: Vec<usize>,
}

impl ParamCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.non_finite.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tol: f64,
    /// Objective value at the unperturbed parameters.
    pub objective: f64,
    /// Effective denominator floor: the larger of the configured floor and
    /// [`resolution_floor`] at the objective value.
    pub floor: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(ParamCheck::passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed())
    }
}

/// Rounding error assumed in one evaluation of a deep objective, in units
/// of the objective's last place.
pub const ROUNDING_ULPS: f64 = 16.0;

/// Relative accuracy the central difference must be able to resolve for a
/// gradient to be compared on the relative scale.
pub const RESOLVED_RELATIVE: f64 = 1e-4;

/// Gradient magnitude below which rounding in an objective of size `f`
/// keeps the central difference from resolving [`RESOLVED_RELATIVE`].
///
/// The floor does not depend on the tolerance, so tolerances tighter than
/// the finite-difference resolution fail instead of passing vacuously.
pub fn resolution_floor(f: f64, eps: f64) -> f64 {
    ROUNDING_ULPS * f.abs() * f64::EPSILON / (eps * RESOLVED_RELATIVE)
}

pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(abs_floor);
    (analytic - numeric).abs() / denom
}

/// Compare autodiff gradients of the scalar objective `f` with central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, parameter by parameter.
///
/// `f` records the objective on the supplied tape and returns the root. It
/// must be deterministic in the parameter values (fix any dropout masks).
pub fn grad_check<F>(store: &mut ParamStore<f64>, mut f: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&cfg.eps) {
        return Err(crate::Error::InvalidArgument(format!(
            "grad_check: eps {} outside [1e-7, 1e-3]",
            cfg.eps
        )));
    }
    store.zero_grads();
    let mut tape = Tape::new();
    let root = f(&mut tape, store)?;
    let objective = tape.value(root).item();
    tape.backward(root)?;
    store.accumulate_grads(&tape)?;
    drop(tape);
    let floor = cfg.abs_floor.max(resolution_floor(objective, cfg.eps));

    let mut eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let root = f(&mut tape, store)?;
        Ok(tape.value(root).item())
    };

    let ids: Vec<ParamId> = store.iter().map(|(id, _)| id).collect();
    let mut params = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store.value(id).numel();
        let entries: Vec<usize> = match cfg.max_entries {
            Some(m) if m < n => {
                let mut perm = StreamKey::new(cfg.seed).named(&store.get(id).name).rng().permutation(n);
                perm.truncate(m);
                perm.sort_unstable();
                perm
            }
            _ => (0..n).collect(),
        };
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            checked: entries.len(),
            max_rel_error: 0.0,
            max_abs_analytic: 0.0,
            max_abs_numeric: 0.0,
            failures: Vec::new(),
            below_resolution: 0,
            non_finite: Vec::new(),
        };
        for idx in entries {
            let orig = store.value(id).data()[idx];
            store.value_mut(id).data_mut()[idx] = orig + cfg.eps;
            let plus = eval(store)?;
            store.value_mut(id).data_mut()[idx] = orig - cfg.eps;
            let minus = eval(store)?;
            store.value_mut(id).data_mut()[idx] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                check.non_finite.push(idx);
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let analytic = store.grad(id).data()[idx];
            let rel = relative_error(analytic, numeric, floor);
            if analytic.abs().max(numeric.abs()) < floor {
                check.below_resolution += 1;
            }
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_analytic = check.max_abs_analytic.max(analytic.abs());
            check.max_abs_numeric = check.max_abs_numeric.max(numeric.abs());
            if rel > cfg.tol {
                check.failures.push(EntryMismatch {
                    index: idx,
                    analytic,
                    numeric,
                    rel_error: rel,
                });
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport { tol: cfg.tol, objective, floor, params })
}
