//! Central-cut ellipsoid method for maximizing a concave, possibly
//! non-differentiable function over a box.
//!
//! The box is enforced by the method itself: whenever the ellipsoid center
//! leaves the box a feasibility cut along the violated face is applied and
//! the oracle is not consulted. Coordinates whose bounds coincide are pinned
//! and removed from the search space.
//!
//! The driver can be used in two ways. [`maximize`] runs the whole loop
//! against an oracle closure. [`Ellipsoid`] exposes the loop step by step so
//! callers can add their own stopping rules (certified duality gaps, say).

use nalgebra::{DMatrix, DVector};

/// Width of a box side below which the coordinate is treated as fixed.
const PINNED_WIDTH: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidOptions {
    /// Stop once the ellipsoid's width along the last subgradient,
    /// `sqrt(gᵀ A g)`, drops below this. That width bounds the optimality gap.
    pub tol: f64,
    /// Iteration budget; `None` means `2000·d²`.
    pub max_iter: Option<usize>,
    /// Half-width used for coordinates with an infinite upper bound.
    pub infinite_radius: f64,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        EllipsoidOptions {
            tol: 1e-7,
            max_iter: None,
            infinite_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub center: DVector<f64>,
    /// Symmetric positive-definite shape matrix `A`; the ellipsoid is
    /// `{x : (x − c)ᵀ A⁻¹ (x − c) ≤ 1}`.
    pub shape: DMatrix<f64>,
    pub iteration: usize,
}

/// What an oracle reports about a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientOracleResult {
    /// Function value at the point; ignored for feasibility cuts.
    pub value: f64,
    /// A supergradient of the objective, or for a feasibility cut the outward
    /// normal of a violated constraint.
    pub subgradient: Vec<f64>,
    pub is_feasibility_cut: bool,
}

impl SubgradientOracleResult {
    pub fn optimality(value: f64, subgradient: Vec<f64>) -> Self {
        SubgradientOracleResult {
            value,
            subgradient,
            is_feasibility_cut: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Subgradient-direction width fell below tolerance, or a zero
    /// supergradient certified optimality.
    Converged,
    /// The caller stopped the loop.
    Stopped,
    /// Iteration budget exhausted.
    Exhausted,
    /// The shape matrix lost positive definiteness.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidOutcome {
    /// Best box-feasible point seen. Empty if the oracle was never consulted.
    pub point: Vec<f64>,
    pub value: f64,
    /// Smallest certified upper bound on the maximum seen.
    pub upper_bound: f64,
    pub converged: bool,
    pub iterations: usize,
    pub termination: Termination,
}

/// Step-wise ellipsoid driver.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    free: Vec<usize>,
    state: EllipsoidState,
    tol: f64,
    max_iter: usize,
    best: Option<(Vec<f64>, f64)>,
    upper_bound: f64,
    pending: Option<Vec<f64>>,
    done: Option<Termination>,
}

impl Ellipsoid {
    /// Panics if the bounds have different lengths or `lower > upper`
    /// somewhere, or if a lower bound is not finite.
    pub fn new(lower: &[f64], upper: &[f64], opts: &EllipsoidOptions) -> Self {
        assert_eq!(lower.len(), upper.len(), "bound dimensions differ");
        for (l, u) in lower.iter().zip(upper) {
            assert!(l.is_finite(), "lower bounds must be finite");
            assert!(l <= u, "lower bound {l} exceeds upper bound {u}");
        }
        let free: Vec<usize> = (0..lower.len())
            .filter(|&j| upper[j] - lower[j] > PINNED_WIDTH)
            .collect();
        let d = free.len();
        let mut center = DVector::zeros(d);
        let mut shape = DMatrix::zeros(d, d);
        for (a, &j) in free.iter().enumerate() {
            let (c, r) = if upper[j].is_finite() {
                (0.5 * (lower[j] + upper[j]), 0.5 * (upper[j] - lower[j]))
            } else {
                (lower[j] + 1.0, opts.infinite_radius)
            };
            center[a] = c;
            // d·r² per axis makes the ellipsoid contain the whole box.
            shape[(a, a)] = d as f64 * r * r;
        }
        Ellipsoid {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            free,
            state: EllipsoidState {
                center,
                shape,
                iteration: 0,
            },
            tol: opts.tol,
            max_iter: opts.max_iter.unwrap_or(2000 * d.max(1) * d.max(1)),
            best: None,
            upper_bound: f64::INFINITY,
            pending: None,
            done: None,
        }
    }

    pub fn state(&self) -> &EllipsoidState {
        &self.state
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(p, v)| (p.as_slice(), *v))
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn termination(&self) -> Option<Termination> {
        self.done
    }

    /// Next point the oracle must evaluate, or `None` once the method has
    /// terminated. Box feasibility cuts are applied internally, so every
    /// returned point lies inside the box.
    pub fn next_query(&mut self) -> Option<Vec<f64>> {
        if self.done.is_some() {
            return None;
        }
        if let Some(p) = &self.pending {
            return Some(p.clone());
        }
        loop {
            if self.state.iteration >= self.max_iter {
                self.done = Some(Termination::Exhausted);
                return None;
            }
            match self.box_violation() {
                Some(cut) => {
                    self.state.iteration += 1;
                    if !self.cut(&cut) {
                        self.done = Some(Termination::Degenerate);
                        return None;
                    }
                }
                None => {
                    let p = self.full_point();
                    self.pending = Some(p.clone());
                    return Some(p);
                }
            }
        }
    }

    /// Feed back the oracle's answer at the point returned by the last
    /// [`next_query`](Self::next_query).
    pub fn observe(&mut self, result: &SubgradientOracleResult) {
        let Some(point) = self.pending.take() else {
            return;
        };
        self.state.iteration += 1;
        let d = self.free.len();
        // Minimization form: keep {y : cᵀ(y − x) ≤ 0}.
        let mut c = DVector::zeros(d);
        for (a, &j) in self.free.iter().enumerate() {
            let g = result.subgradient[j];
            c[a] = if result.is_feasibility_cut { g } else { -g };
        }
        if !result.is_feasibility_cut {
            if self.best.as_ref().is_none_or(|(_, v)| result.value > *v) {
                self.best = Some((point, result.value));
            }
            let width = (c.dot(&(&self.state.shape * &c))).max(0.0).sqrt();
            self.upper_bound = self.upper_bound.min(result.value + width);
            if d == 0 || width <= self.tol || c.iter().all(|&x| x == 0.0) {
                self.done = Some(Termination::Converged);
                return;
            }
        }
        if !self.cut(&c) {
            self.done = Some(Termination::Degenerate);
        }
    }

    /// Stop the loop at the caller's request.
    pub fn stop(&mut self) {
        self.pending = None;
        self.done.get_or_insert(Termination::Stopped);
    }

    pub fn outcome(&self) -> EllipsoidOutcome {
        let termination = self.done.unwrap_or(Termination::Stopped);
        let (point, value) = self.best.clone().unwrap_or((Vec::new(), f64::NEG_INFINITY));
        EllipsoidOutcome {
            point,
            value,
            upper_bound: self.upper_bound,
            converged: termination == Termination::Converged,
            iterations: self.state.iteration,
            termination,
        }
    }

    fn full_point(&self) -> Vec<f64> {
        let mut p = self.lower.clone();
        for (a, &j) in self.free.iter().enumerate() {
            p[j] = self.state.center[a];
        }
        p
    }

    fn box_violation(&self) -> Option<DVector<f64>> {
        let d = self.free.len();
        // Cut along the most violated face, measured in ellipsoid widths.
        let mut worst: Option<(usize, f64, f64)> = None;
        for (a, &j) in self.free.iter().enumerate() {
            let x = self.state.center[a];
            let (excess, sign) = if x > self.upper[j] {
                (x - self.upper[j], 1.0)
            } else if x < self.lower[j] {
                (self.lower[j] - x, -1.0)
            } else {
                continue;
            };
            let score = excess / self.state.shape[(a, a)].sqrt();
            if worst.is_none_or(|(_, s, _)| score > s) {
                worst = Some((a, score, sign));
            }
        }
        worst.map(|(a, _, sign)| {
            let mut c = DVector::zeros(d);
            c[a] = sign;
            c
        })
    }

    /// Central cut keeping `{y : cᵀ(y − center) ≤ 0}`. Returns false when the
    /// update breaks positive definiteness.
    fn cut(&mut self, c: &DVector<f64>) -> bool {
        let d = self.free.len();
        let a = &self.state.shape;
        let ac = a * c;
        let denom = c.dot(&ac);
        if !(denom > 0.0 && denom.is_finite()) {
            return false;
        }
        let g = ac / denom.sqrt();
        if d == 1 {
            self.state.center -= &g * 0.5;
            self.state.shape *= 0.25;
        } else {
            let n = d as f64;
            self.state.center -= &g / (n + 1.0);
            let mut next = (a - (&g * g.transpose()) * (2.0 / (n + 1.0))) * (n * n / (n * n - 1.0));
            next = (&next + next.transpose()) * 0.5;
            self.state.shape = next;
        }
        self.state.center.iter().all(|x| x.is_finite()) && self.state.shape.clone().cholesky().is_some()
    }
}

/// Maximize a concave function over `[lower, upper]`.
///
/// The oracle is only called at box-feasible points and must return the
/// value and a supergradient there (or a feasibility cut for constraints the
/// driver does not know about). Oracle errors abort the loop.
pub fn maximize<F, E>(
    mut oracle: F,
    lower: &[f64],
    upper: &[f64],
    opts: &EllipsoidOptions,
) -> Result<EllipsoidOutcome, E>
where
    F: FnMut(&[f64]) -> Result<SubgradientOracleResult, E>,
{
    let mut el = Ellipsoid::new(lower, upper, opts);
    while let Some(x) = el.next_query() {
        let r = oracle(&x)?;
        el.observe(&r);
    }
    Ok(el.outcome())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn run<F>(f: F, lower: &[f64], upper: &[f64], tol: f64) -> EllipsoidOutcome
    where
        F: FnMut(&[f64]) -> Result<SubgradientOracleResult, Infallible>,
    {
        let opts = EllipsoidOptions {
            tol,
            ..Default::default()
        };
        maximize(f, lower, upper, &opts).unwrap()
    }

    #[test]
    fn interior_quadratic() {
        let out = run(
            |z| {
                Ok(SubgradientOracleResult::optimality(
                    -(z[0] - 0.5).powi(2),
                    vec![-2.0 * (z[0] - 0.5)],
                ))
            },
            &[0.0],
            &[1.0],
            1e-9,
        );
        assert!(out.converged);
        assert!((out.point[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn boundary_maximizer() {
        let out = run(
            |z| Ok(SubgradientOracleResult::optimality(z[0], vec![1.0])),
            &[0.0],
            &[1.0],
            1e-9,
        );
        assert!(out.converged);
        assert!((out.point[0] - 1.0).abs() < 1e-6);
        assert!(out.point[0] <= 1.0);
    }

    // f(z) = min(z1, z2, 1.7 − z1 − z2); supergradient of the active piece.
    fn piecewise(z: &[f64]) -> (f64, Vec<f64>) {
        let pieces = [
            (z[0], vec![1.0, 0.0]),
            (z[1], vec![0.0, 1.0]),
            (1.7 - z[0] - z[1], vec![-1.0, -1.0]),
        ];
        pieces.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap()
    }

    #[test]
    fn piecewise_linear_matches_grid() {
        // Dense grid oracle at resolution 1e-3.
        let n = 1000;
        let mut grid_best = (f64::NEG_INFINITY, 0.0, 0.0);
        for a in 0..=n {
            for b in 0..=n {
                let z = [a as f64 / n as f64, b as f64 / n as f64];
                let v = piecewise(&z).0;
                if v > grid_best.0 {
                    grid_best = (v, z[0], z[1]);
                }
            }
        }
        // Frozen from the grid scan: max ≈ 0.5667 at z1 = z2 ≈ 0.5667.
        assert!((grid_best.0 - 1.7 / 3.0).abs() < 1e-3);

        let out = run(
            |z| {
                let (v, g) = piecewise(z);
                Ok(SubgradientOracleResult::optimality(v, g))
            },
            &[0.0, 0.0],
            &[1.0, 1.0],
            1e-9,
        );
        assert!((out.value - grid_best.0).abs() < 1e-3);
        assert!((out.point[0] - out.point[1]).abs() < 1e-3);
        assert!((out.point[0] - grid_best.1).abs() < 2e-3);
    }

    #[test]
    fn returned_point_is_inside_box() {
        let lower = [0.2, -1.0, 3.0];
        let upper = [0.4, 5.0, 3.5];
        let out = run(
            |z| {
                Ok(SubgradientOracleResult::optimality(
                    z[0] - z[1] + 2.0 * z[2],
                    vec![1.0, -1.0, 2.0],
                ))
            },
            &lower,
            &upper,
            1e-8,
        );
        for j in 0..3 {
            assert!(lower[j] <= out.point[j] && out.point[j] <= upper[j]);
        }
        assert!((out.value - (0.4 + 1.0 + 7.0)).abs() < 1e-6);
    }

    #[test]
    fn best_value_never_decreases() {
        let mut el = Ellipsoid::new(&[-3.0, -3.0], &[3.0, 3.0], &EllipsoidOptions::default());
        let mut last = f64::NEG_INFINITY;
        let mut count = 0;
        while let Some(z) = el.next_query() {
            let v = -(z[0] - 1.0).abs() - 2.0 * (z[1] + 0.5).abs();
            let g = vec![-(z[0] - 1.0).signum(), -2.0 * (z[1] + 0.5).signum()];
            el.observe(&SubgradientOracleResult::optimality(v, g));
            let best = el.best().unwrap().1;
            assert!(best >= last);
            last = best;
            count += 1;
        }
        assert!(count > 10);
        assert!(el.upper_bound() >= last - 1e-12);
    }

    #[test]
    fn geometric_decay_on_strongly_concave() {
        let target = [0.3, -0.7, 1.1];
        let opts = EllipsoidOptions {
            tol: 1e-14,
            ..Default::default()
        };
        let mut el = Ellipsoid::new(&[-5.0; 3], &[5.0; 3], &opts);
        let mut errs = Vec::new();
        while let Some(z) = el.next_query() {
            let v: f64 = -z.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let g = z.iter().zip(&target).map(|(a, b)| -2.0 * (a - b)).collect();
            el.observe(&SubgradientOracleResult::optimality(v, g));
            let p = el.best().unwrap().0;
            errs.push(p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
        }
        // Distance after 200 iterations is orders of magnitude below the
        // distance after 50, consistent with a per-iteration contraction.
        assert!(errs.len() > 200);
        assert!(errs[199] < 1e-2 * errs[49].max(1e-12) || errs[199] < 1e-9);
        assert!(*errs.last().unwrap() < 1e-6);
    }

    #[test]
    fn pinned_coordinates_are_respected() {
        let out = run(
            |z| {
                Ok(SubgradientOracleResult::optimality(
                    -(z[1] - 0.25).powi(2) + z[0],
                    vec![1.0, -2.0 * (z[1] - 0.25)],
                ))
            },
            &[0.7, 0.0],
            &[0.7, 1.0],
            1e-10,
        );
        assert_eq!(out.point[0], 0.7);
        assert!((out.point[1] - 0.25).abs() < 1e-5);

        let all_pinned = run(
            |z| Ok(SubgradientOracleResult::optimality(z[0], vec![1.0])),
            &[2.0],
            &[2.0],
            1e-9,
        );
        assert!(all_pinned.converged);
        assert_eq!(all_pinned.point, vec![2.0]);
    }

    #[test]
    fn infinite_upper_bound() {
        let out = run(
            |z| {
                Ok(SubgradientOracleResult::optimality(
                    -(z[0] - 4.0).powi(2),
                    vec![-2.0 * (z[0] - 4.0)],
                ))
            },
            &[0.0],
            &[f64::INFINITY],
            1e-10,
        );
        assert!((out.point[0] - 4.0).abs() < 1e-4);
    }

    #[test]
    fn budget_exhaustion_is_not_convergence() {
        let opts = EllipsoidOptions {
            tol: 1e-300,
            max_iter: Some(5),
            ..Default::default()
        };
        let out = maximize(
            |z: &[f64]| -> Result<_, Infallible> {
                Ok(SubgradientOracleResult::optimality(
                    -z[0] * z[0],
                    vec![-2.0 * z[0] + 0.1],
                ))
            },
            &[-1.0],
            &[1.0],
            &opts,
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.termination, Termination::Exhausted);
    }

    #[test]
    fn oracle_errors_propagate() {
        let r = maximize(
            |_: &[f64]| -> Result<SubgradientOracleResult, &'static str> { Err("boom") },
            &[0.0],
            &[1.0],
            &EllipsoidOptions::default(),
        );
        assert_eq!(r.unwrap_err(), "boom");
    }
}
