//! Alternating accelerated proximal gradient solver.
//!
//! Each outer iteration minimizes the convex `{W, A}` sub-problem with `Z, b`
//! fixed and then the convex `{Z, b}` sub-problem with `W, A` fixed. Both
//! sub-problems run FISTA momentum with a backtracking line search and a
//! momentum restart whenever the extrapolated step raises the objective, so
//! every accepted iterate is monotone.
//!
//! Steps are scaled per block by the inverse Lipschitz constant of that
//! block's gradient (per coordinate for `b`), and the backtracking factor
//! multiplies all of them. The thresholds handed to the proximal operators
//! are the step of the corresponding block times its penalty weight.

use log::{debug, trace};

use crate::matrix::{DenseMatrix, MatrixError};
use crate::prox::{columnwise_l2_prox_in_place, lf_project_in_place, soft_threshold};
use crate::scalar::Real;
use crate::svd::svd;

use super::objective::{
    grad_a, grad_b, grad_w, grad_z, l1_norm, objective, overlap, residual_unchecked,
};
use super::{HslConfig, HslError, HslModel};

/// Result of one convex sub-problem solve.
#[derive(Debug, Clone)]
pub struct InnerFit<P, T> {
    pub value: P,
    /// Full relaxed objective at the returned point.
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
}

/// A point of one sub-problem: `head` lives in the unit Frobenius ball
/// (`W` or `Z`), `tail` carries the penalized block (`A`, or `b` as a `1 × p` row).
#[derive(Clone)]
struct Point<T> {
    head: DenseMatrix<T>,
    tail: DenseMatrix<T>,
}

impl<T: Real> Point<T> {
    fn extrapolate(&self, prev: &Self, beta: T) -> Self {
        let mut out = self.clone();
        for (o, (&c, &p)) in out
            .head
            .as_mut_slice()
            .iter_mut()
            .zip(self.head.as_slice().iter().zip(prev.head.as_slice()))
        {
            *o = c + beta * (c - p);
        }
        for (o, (&c, &p)) in out
            .tail
            .as_mut_slice()
            .iter_mut()
            .zip(self.tail.as_slice().iter().zip(prev.tail.as_slice()))
        {
            *o = c + beta * (c - p);
        }
        out
    }
}

trait Block<T: Real> {
    const NAME: &'static str;
    fn value(&self, pt: &Point<T>) -> T;
    /// Smooth value and gradient.
    fn value_and_grad(&self, pt: &Point<T>) -> (T, Point<T>);
    /// Non-smooth part plus the constant penalty terms of the fixed block, so
    /// that value + penalty is the full relaxed objective.
    fn penalty(&self, pt: &Point<T>) -> T;
    /// Gradient step already applied; apply the projection / prox in place.
    fn prox(&self, pt: &mut Point<T>, tail_steps: &[T]);
    /// Inverse Lipschitz constants: one for the head, one per tail column.
    fn inverse_lipschitz(&self) -> (T, Vec<T>);
}

/// `{W, A}` with `Z, b` fixed.
struct WaBlock<'a, T> {
    x: &'a DenseMatrix<T>,
    z: &'a DenseMatrix<T>,
    b: &'a [T],
    gamma: T,
    lambda: T,
}

impl<T: Real> WaBlock<'_, T> {
    fn residual(&self, pt: &Point<T>) -> DenseMatrix<T> {
        let low = self.z.matmul(&pt.tail).expect("conformable");
        residual_unchecked(self.x, &low, &pt.head, self.b)
    }
}

impl<T: Real> Block<T> for WaBlock<'_, T> {
    const NAME: &'static str = "W,A";

    fn value(&self, pt: &Point<T>) -> T {
        self.residual(pt).frobenius_norm_sq()
    }

    fn value_and_grad(&self, pt: &Point<T>) -> (T, Point<T>) {
        let r = self.residual(pt);
        let m2 = T::lit(-2.0);
        let mut head = grad_w(&r, self.b);
        head.scale_in_place(m2);
        let mut tail = grad_a(&r, self.z);
        tail.scale_in_place(m2);
        (r.frobenius_norm_sq(), Point { head, tail })
    }

    fn penalty(&self, pt: &Point<T>) -> T {
        self.gamma * overlap(&pt.tail, self.b) + self.lambda * l1_norm(self.b)
    }

    fn prox(&self, pt: &mut Point<T>, tail_steps: &[T]) {
        lf_project_in_place(&mut pt.head);
        let thresholds: Vec<T> = tail_steps
            .iter()
            .zip(self.b)
            .map(|(&s, &bj)| s * self.gamma * bj.abs())
            .collect();
        columnwise_l2_prox_in_place(&mut pt.tail, &thresholds).expect("thresholds are valid");
    }

    fn inverse_lipschitz(&self) -> (T, Vec<T>) {
        let max_b2 = self.b.iter().fold(T::zero(), |m, &v| m.max(v * v));
        let l_head = T::lit(2.0) * max_b2;
        let l_tail = T::lit(2.0) * spectral_norm_sq(self.z);
        let floor = T::epsilon() * (T::one() + l_head.max(l_tail));
        (
            T::one() / l_head.max(floor),
            vec![T::one() / l_tail.max(floor); self.b.len()],
        )
    }
}

/// `{Z, b}` with `W, A` fixed.
struct ZbBlock<'a, T> {
    x: &'a DenseMatrix<T>,
    w: &'a DenseMatrix<T>,
    a: &'a DenseMatrix<T>,
    a_col_norms: Vec<T>,
    gamma: T,
    lambda: T,
}

impl<T: Real> ZbBlock<'_, T> {
    fn residual(&self, pt: &Point<T>) -> DenseMatrix<T> {
        let low = pt.head.matmul(self.a).expect("conformable");
        residual_unchecked(self.x, &low, self.w, pt.tail.row(0))
    }

    fn weights(&self) -> impl Iterator<Item = T> + '_ {
        self.a_col_norms
            .iter()
            .map(move |&n| self.gamma * n + self.lambda)
    }
}

impl<T: Real> Block<T> for ZbBlock<'_, T> {
    const NAME: &'static str = "Z,b";

    fn value(&self, pt: &Point<T>) -> T {
        self.residual(pt).frobenius_norm_sq()
    }

    fn value_and_grad(&self, pt: &Point<T>) -> (T, Point<T>) {
        let r = self.residual(pt);
        let m2 = T::lit(-2.0);
        let mut head = grad_z(&r, self.a);
        head.scale_in_place(m2);
        let gb: Vec<T> = grad_b(&r, self.w).into_iter().map(|g| g * m2).collect();
        let tail = DenseMatrix::from_vec(1, gb.len(), gb).expect("finite gradient");
        (r.frobenius_norm_sq(), Point { head, tail })
    }

    fn penalty(&self, pt: &Point<T>) -> T {
        pt.tail
            .row(0)
            .iter()
            .zip(self.weights())
            .map(|(&bj, wgt)| wgt * bj.abs())
            .sum()
    }

    fn prox(&self, pt: &mut Point<T>, tail_steps: &[T]) {
        lf_project_in_place(&mut pt.head);
        let weights: Vec<T> = self.weights().collect();
        for ((bj, &s), wgt) in pt.tail.row_mut(0).iter_mut().zip(tail_steps).zip(weights) {
            *bj = soft_threshold(*bj, s * wgt);
        }
    }

    fn inverse_lipschitz(&self) -> (T, Vec<T>) {
        let l_head = T::lit(2.0) * spectral_norm_sq(self.a);
        let l_tail: Vec<T> = self
            .w
            .column_l2_norms()
            .into_iter()
            .map(|n| T::lit(2.0) * n * n)
            .collect();
        let top = l_tail.iter().fold(l_head, |m, &v| m.max(v));
        let floor = T::epsilon() * (T::one() + top);
        (
            T::one() / l_head.max(floor),
            l_tail
                .into_iter()
                .map(|l| T::one() / l.max(floor))
                .collect(),
        )
    }
}

/// Largest squared singular value.
fn spectral_norm_sq<T: Real>(m: &DenseMatrix<T>) -> T {
    if m.max_abs() == T::zero() {
        return T::zero();
    }
    match svd(m) {
        Ok(s) => s.singular_values[0] * s.singular_values[0],
        // Frobenius norm bounds the spectral norm from above.
        Err(_) => m.frobenius_norm_sq(),
    }
}

struct ApgOutcome<T> {
    point: Point<T>,
    objective: T,
    iterations: usize,
    converged: bool,
}

fn inner_product<T: Real>(g: &Point<T>, d_head: &[T], d_tail: &[T]) -> T {
    crate::matrix::dot(g.head.as_slice(), d_head) + crate::matrix::dot(g.tail.as_slice(), d_tail)
}

/// Backtracking proximal step from `y`. Returns the new point and its smooth value.
fn prox_step<T: Real, B: Block<T>>(
    block: &B,
    y: &Point<T>,
    scale: &mut T,
    inv_head: T,
    inv_tail: &[T],
    iterations: usize,
) -> Result<(Point<T>, T), HslError> {
    let (f_y, g) = block.value_and_grad(y);
    if !f_y.is_finite() {
        return Err(HslError::NonFinite {
            block: B::NAME,
            iterations,
        });
    }
    let tail_cols = y.tail.cols();
    let half = T::lit(0.5);
    let slack = T::lit(16.0) * T::epsilon() * f_y.abs().max(T::min_positive_value());
    loop {
        let s = *scale;
        let head_step = s * inv_head;
        let tail_steps: Vec<T> = inv_tail.iter().map(|&c| s * c).collect();

        let mut cand = y.clone();
        for (c, &gv) in cand.head.as_mut_slice().iter_mut().zip(g.head.as_slice()) {
            *c -= head_step * gv;
        }
        for (idx, (c, &gv)) in cand
            .tail
            .as_mut_slice()
            .iter_mut()
            .zip(g.tail.as_slice())
            .enumerate()
        {
            *c -= tail_steps[idx % tail_cols] * gv;
        }
        block.prox(&mut cand, &tail_steps);

        let d_head: Vec<T> = cand
            .head
            .as_slice()
            .iter()
            .zip(y.head.as_slice())
            .map(|(&a, &b)| a - b)
            .collect();
        let d_tail: Vec<T> = cand
            .tail
            .as_slice()
            .iter()
            .zip(y.tail.as_slice())
            .map(|(&a, &b)| a - b)
            .collect();
        let mut quad = d_head.iter().map(|&v| v * v).sum::<T>() / head_step;
        for (idx, &v) in d_tail.iter().enumerate() {
            quad += v * v / tail_steps[idx % tail_cols];
        }
        let model = f_y + inner_product(&g, &d_head, &d_tail) + half * quad;
        let f_c = block.value(&cand);
        if f_c.is_finite() && f_c <= model + slack {
            return Ok((cand, f_c));
        }
        *scale = s * half;
        if *scale < T::lit(1e-30) {
            return Err(HslError::NonFinite {
                block: B::NAME,
                iterations,
            });
        }
    }
}

fn apg<T: Real, B: Block<T>>(
    block: &B,
    start: Point<T>,
    config: &HslConfig<T>,
) -> Result<ApgOutcome<T>, HslError> {
    let (inv_head, inv_tail) = block.inverse_lipschitz();
    let mut scale = config.alpha0;
    let mut x = start;
    let mut big_f = block.value(&x) + block.penalty(&x);
    if !big_f.is_finite() {
        return Err(HslError::NonFinite {
            block: B::NAME,
            iterations: 0,
        });
    }
    let mut x_prev = x.clone();
    let mut t = T::one();
    let mut converged = false;
    let mut iterations = 0;
    let tiny = T::min_positive_value();

    while iterations < config.max_inner_iters {
        iterations += 1;
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        let beta = (t - T::one()) / t_next;
        let y = if beta > T::zero() {
            x.extrapolate(&x_prev, beta)
        } else {
            x.clone()
        };
        let (mut cand, mut f_c) =
            prox_step(block, &y, &mut scale, inv_head, &inv_tail, iterations)?;
        let mut big_c = f_c + block.penalty(&cand);
        let mut t_after = t_next;
        if big_c > big_f && beta > T::zero() {
            // Momentum overshot: restart from x with a plain proximal step.
            trace!(
                "{} block: momentum restart at iteration {iterations}",
                B::NAME
            );
            (cand, f_c) = prox_step(block, &x, &mut scale, inv_head, &inv_tail, iterations)?;
            big_c = f_c + block.penalty(&cand);
            t_after = T::one();
        }
        if !big_c.is_finite() {
            return Err(HslError::NonFinite {
                block: B::NAME,
                iterations,
            });
        }
        if big_c > big_f {
            // Rounding-level increase from a plain step: x is stationary to working precision.
            converged = true;
            break;
        }
        let rel = (big_f - big_c) / big_f.abs().max(tiny);
        x_prev = std::mem::replace(&mut x, cand);
        big_f = big_c;
        t = t_after;
        if rel < config.inner_tol {
            converged = true;
            break;
        }
    }
    Ok(ApgOutcome {
        point: x,
        objective: big_f,
        iterations,
        converged,
    })
}

fn check_problem<T: Real>(
    x: &DenseMatrix<T>,
    k: usize,
    config: &HslConfig<T>,
) -> Result<(), HslError> {
    config.validate()?;
    if x.is_empty() {
        return Err(HslError::Shape(MatrixError::Empty("hsl fit")));
    }
    if !x.is_finite() {
        return Err(HslError::InvalidConfig(
            "data matrix has non-finite entries".into(),
        ));
    }
    if k != config.k {
        return Err(HslError::InvalidConfig(format!(
            "initial factors have k={k}, configuration asks for k={}",
            config.k
        )));
    }
    Ok(())
}

fn conformable<T: Real>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    b: &[T],
) -> Result<(), HslError> {
    // Reuse the objective's shape check.
    objective(x, z, a, w, b, T::zero(), T::zero()).map(|_| ())
}

/// Minimizes the `{W, A}` sub-problem with `Z` and `b` held fixed.
pub fn fit_inner_wa<T: Real>(
    x: &DenseMatrix<T>,
    z: &DenseMatrix<T>,
    b: &[T],
    w0: &DenseMatrix<T>,
    a0: &DenseMatrix<T>,
    config: &HslConfig<T>,
) -> Result<InnerFit<(DenseMatrix<T>, DenseMatrix<T>), T>, HslError> {
    check_problem(x, z.cols(), config)?;
    conformable(x, z, a0, w0, b)?;
    let block = WaBlock {
        x,
        z,
        b,
        gamma: config.gamma,
        lambda: config.lambda,
    };
    let mut head = w0.clone();
    lf_project_in_place(&mut head);
    let out = apg(
        &block,
        Point {
            head,
            tail: a0.clone(),
        },
        config,
    )?;
    Ok(InnerFit {
        value: (out.point.head, out.point.tail),
        objective: out.objective,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// Minimizes the `{Z, b}` sub-problem with `W` and `A` held fixed.
pub fn fit_inner_zb<T: Real>(
    x: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    z0: &DenseMatrix<T>,
    b0: &[T],
    config: &HslConfig<T>,
) -> Result<InnerFit<(DenseMatrix<T>, Vec<T>), T>, HslError> {
    check_problem(x, z0.cols(), config)?;
    conformable(x, z0, a, w, b0)?;
    let block = ZbBlock {
        x,
        w,
        a,
        a_col_norms: a.column_l2_norms(),
        gamma: config.gamma,
        lambda: config.lambda,
    };
    let mut head = z0.clone();
    lf_project_in_place(&mut head);
    let tail = DenseMatrix::from_vec(1, b0.len(), b0.to_vec())?;
    let out = apg(&block, Point { head, tail }, config)?;
    Ok(InnerFit {
        value: (out.point.head, out.point.tail.into_vec()),
        objective: out.objective,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// Alternating minimization from `init` at the `(λ, γ)` given in `config`.
///
/// Hitting `max_outer_iters` is not an error; the returned model has
/// `converged == false`.
pub fn fit<T: Real>(
    x: &DenseMatrix<T>,
    config: &HslConfig<T>,
    init: HslModel<T>,
) -> Result<HslModel<T>, HslError> {
    check_problem(x, init.k(), config)?;
    let HslModel {
        mut z,
        mut a,
        mut w,
        mut b,
        ..
    } = init;
    conformable(x, &z, &a, &w, &b)?;
    lf_project_in_place(&mut z);
    lf_project_in_place(&mut w);

    let (lambda, gamma) = (config.lambda, config.gamma);
    let mut current = objective(x, &z, &a, &w, &b, lambda, gamma)?;
    let mut trace_values = vec![current];
    let mut converged = false;
    let mut outer = 0;
    let tiny = T::min_positive_value();

    while outer < config.max_outer_iters {
        outer += 1;
        let wa = fit_inner_wa(x, &z, &b, &w, &a, config)?;
        (w, a) = wa.value;
        let zb = fit_inner_zb(x, &w, &a, &z, &b, config)?;
        (z, b) = zb.value;
        let next = zb.objective;
        debug!(
            "outer {outer}: objective {next:e} (inner iterations {} + {})",
            wa.iterations, zb.iterations
        );
        let rel = (current - next) / current.abs().max(tiny);
        trace_values.push(next);
        current = next;
        if rel < config.outer_tol {
            converged = true;
            break;
        }
    }

    Ok(HslModel {
        z,
        a,
        w,
        b,
        gamma_at_fit: gamma,
        lambda_at_fit: lambda,
        objective_trace: trace_values,
        outer_iterations: outer,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    type M = DenseMatrix<f64>;

    fn cfg(k: usize) -> HslConfig<f64> {
        HslConfig::with_k(k)
    }

    #[test]
    fn least_squares_a_when_gates_are_closed() {
        // With b = 0 the {W, A} problem reduces to min ‖X − ZA‖², solved by
        // the normal equations A = (ZᵀZ)⁻¹ ZᵀX.
        let mut rng = RngStream::new(21, 0);
        let (n, p, k) = (12, 9, 3);
        let x: M = rng.gaussian_matrix(n, p, 0.0, 1.0).unwrap();
        let z = crate::prox::lf_project(&rng.gaussian_matrix(n, k, 0.0, 1.0).unwrap());
        let b = vec![0.0; p];
        let mut c = cfg(k);
        c.inner_tol = 1e-15;
        c.max_inner_iters = 20_000;
        let fit = fit_inner_wa(&x, &z, &b, &M::zeros(n, p), &M::zeros(k, p), &c).unwrap();
        let (_, a) = fit.value;

        let gram = z.tr_matmul(&z).unwrap();
        let rhs = z.tr_matmul(&x).unwrap();
        let oracle = solve_spd(&gram, &rhs);
        let err = a.sub(&oracle).unwrap().frobenius_norm() / oracle.frobenius_norm();
        assert!(err < 1e-6, "relative error {err}");
    }

    /// Gaussian elimination with partial pivoting, test-only.
    fn solve_spd(g: &M, rhs: &M) -> M {
        let n = g.rows();
        let m = rhs.cols();
        let mut aug: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = g.row(i).to_vec();
                row.extend_from_slice(rhs.row(i));
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
                .unwrap();
            aug.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = aug[r][col] / aug[col][col];
                    for c in col..n + m {
                        let v = aug[col][c];
                        aug[r][c] -= f * v;
                    }
                }
            }
        }
        M::from_fn(n, m, |i, j| aug[i][n + j] / aug[i][i]).unwrap()
    }

    #[test]
    fn zero_data_kills_gates_in_one_update() {
        let mut rng = RngStream::new(22, 0);
        let (n, p, k) = (6, 8, 2);
        let x = M::zeros(n, p);
        let init = HslModel::<f64>::random_init(n, p, k, &mut rng).unwrap();
        let mut c = cfg(k);
        c.lambda = 0.1;
        c.max_inner_iters = 1;
        // With X = 0 and A = 0 the b-gradient is 2 b ‖W_j‖² and a single
        // prox step lands on the minimizer of the separable quadratic + l1.
        let (w, a) = (init.w.clone(), M::zeros(k, p));
        let z = init.z.clone();
        let fit = fit_inner_zb(&x, &w, &a, &z, &init.b, &c).unwrap();
        let (_, b) = fit.value;
        assert!(b.iter().all(|&v| v == 0.0), "{b:?}");
    }

    #[test]
    fn sub_problem_objective_matches_long_reference() {
        let mut rng = RngStream::new(23, 0);
        let (n, p, k) = (15, 20, 3);
        let x: M = rng.gaussian_matrix(n, p, 0.0, 1.0).unwrap();
        let init = HslModel::<f64>::random_init(n, p, k, &mut rng).unwrap();
        let mut c = cfg(k);
        c.lambda = 0.5;
        c.gamma = 2.0;
        c.inner_tol = 1e-12;
        c.max_inner_iters = 2_000;
        let short = fit_inner_wa(&x, &init.z, &init.b, &init.w, &init.a, &c).unwrap();
        c.max_inner_iters = 20_000;
        c.inner_tol = 1e-15;
        let long = fit_inner_wa(&x, &init.z, &init.b, &init.w, &init.a, &c).unwrap();
        assert!(short.objective - long.objective <= 1e-6 * long.objective.abs().max(1.0));
        assert!(short.objective >= long.objective - 1e-9);
    }

    #[test]
    fn fit_trace_is_monotone_and_feasible() {
        let mut rng = RngStream::new(24, 0);
        let (n, p, k) = (20, 30, 3);
        let x: M = rng.gaussian_matrix(n, p, 0.0, 1.0).unwrap();
        let init = HslModel::<f64>::random_init(n, p, k, &mut rng).unwrap();
        let mut c = cfg(k);
        c.lambda = 0.3;
        c.gamma = 0.5;
        let m = fit(&x, &c, init).unwrap();
        assert!(m.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        assert!(m.z.frobenius_norm() <= 1.0 + 1e-9);
        assert!(m.w.frobenius_norm() <= 1.0 + 1e-9);
        let recomputed = m.objective(&x, 0.3, 0.5).unwrap();
        assert!((recomputed - m.final_objective().unwrap()).abs() <= 1e-9 * recomputed);
    }

    #[test]
    fn fit_rejects_mismatched_k() {
        let mut rng = RngStream::new(25, 0);
        let x: M = rng.gaussian_matrix(5, 6, 0.0, 1.0).unwrap();
        let init = HslModel::<f64>::random_init(5, 6, 2, &mut rng).unwrap();
        assert!(matches!(
            fit(&x, &cfg(3), init),
            Err(HslError::InvalidConfig(_))
        ));
    }

    #[test]
    fn iteration_cap_is_reported_not_raised() {
        let mut rng = RngStream::new(26, 0);
        let x: M = rng.gaussian_matrix(10, 12, 0.0, 1.0).unwrap();
        let init = HslModel::<f64>::random_init(10, 12, 2, &mut rng).unwrap();
        let mut c = cfg(2);
        c.max_outer_iters = 1;
        c.outer_tol = 1e-300;
        let m = fit(&x, &c, init).unwrap();
        assert!(!m.converged);
        assert_eq!(m.outer_iterations, 1);
    }
}
