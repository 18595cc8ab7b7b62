//! Primal-dual interior-point solver for semidefinite programs over
//! products of complex Hermitian PSD blocks.
//!
//! Standard form:
//!
//! ```text
//!   min  sum_b <C_b, X_b>   s.t.  sum_b <A_ib, X_b> = b_i,   X_b >= 0
//!   max  b^T y              s.t.  C_b - sum_i y_i A_ib = S_b >= 0
//! ```
//!
//! with the real inner product `<A, X> = Re Tr(A X)`. Nonnegative scalar
//! variables are 1x1 blocks. The iteration runs on the homogeneous
//! self-dual embedding (so infeasibility is detected from a certificate
//! rather than a heuristic), uses the HKM search direction and a Mehrotra
//! predictor-corrector step. Intended for problems with few constraints and
//! small blocks; the Schur complement is formed densely.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{hermitian_part, inner, trace_product, CMatrix, C64};

/// One equality row: sparse list of `(block, coefficient)` terms.
#[derive(Debug, Clone)]
pub struct Row {
    pub terms: Vec<(usize, CMatrix)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct BlockSdp {
    pub block_dims: Vec<usize>,
    pub objective: Vec<CMatrix>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub max_iter: usize,
    /// Relative duality gap at which the solve stops.
    pub rel_gap: f64,
    /// Absolute duality gap at which the solve stops.
    pub abs_gap: f64,
    /// Relative primal/dual residual tolerance.
    pub feas_tol: f64,
    /// Tolerance on normalized infeasibility certificates.
    pub infeas_tol: f64,
    pub step_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_gap: 1e-7,
            abs_gap: 1e-12,
            feas_tol: 1e-8,
            infeas_tol: 1e-8,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x: Vec<CMatrix>,
    pub y: Vec<f64>,
    pub s: Vec<CMatrix>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    /// Final relative primal residual, dual residual and relative gap.
    pub residuals: [f64; 3],
}

struct Iterate {
    x: Vec<CMatrix>,
    y: DVector<f64>,
    s: Vec<CMatrix>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx: Vec<CMatrix>,
    dy: DVector<f64>,
    ds: Vec<CMatrix>,
    dtau: f64,
    dkappa: f64,
}

impl BlockSdp {
    fn check(&self) -> Result<(), String> {
        if self.objective.len() != self.block_dims.len() {
            return Err("one objective block per variable block required".into());
        }
        for (b, c) in self.objective.iter().enumerate() {
            if c.shape() != (self.block_dims[b], self.block_dims[b]) {
                return Err(format!("objective block {b} has wrong shape"));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            for (b, a) in &row.terms {
                let n = *self
                    .block_dims
                    .get(*b)
                    .ok_or_else(|| format!("row {i} references block {b}"))?;
                if a.shape() != (n, n) {
                    return Err(format!("row {i} block {b} has wrong shape"));
                }
            }
        }
        Ok(())
    }

    /// `A(X)` for arbitrary (not necessarily Hermitian) block arguments.
    pub fn apply(&self, x: &[CMatrix]) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|row| {
                row.terms
                    .iter()
                    .map(|(b, a)| trace_product(a, &x[*b]))
                    .sum::<f64>()
            }),
        )
    }

    /// Adjoint `A^*(y)`.
    pub fn adjoint(&self, y: &DVector<f64>) -> Vec<CMatrix> {
        let mut out: Vec<CMatrix> = self
            .block_dims
            .iter()
            .map(|&n| CMatrix::zeros(n, n))
            .collect();
        for (row, &yi) in self.rows.iter().zip(y.iter()) {
            for (b, a) in &row.terms {
                out[*b] += a.scale(yi);
            }
        }
        out
    }

    pub fn objective_value(&self, x: &[CMatrix]) -> f64 {
        self.objective
            .iter()
            .zip(x)
            .map(|(c, xb)| trace_product(c, xb))
            .sum()
    }

    fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|r| r.rhs))
    }
}

/// Writes the problem in a self-describing sparse triplet text form:
/// a header, the block sizes, then `block i j re im` lines for the
/// objective and for every row (upper triangle, entries above 1e-300).
pub fn write_dump<W: std::io::Write>(mut out: W, p: &BlockSdp) -> std::io::Result<()> {
    writeln!(out, "# hbcoop sdp dump v1")?;
    writeln!(
        out,
        "# minimize sum_b Re Tr(C_b X_b) s.t. sum_b Re Tr(A_ib X_b) = b_i, X_b Hermitian PSD"
    )?;
    write!(out, "blocks {}", p.block_dims.len())?;
    for d in &p.block_dims {
        write!(out, " {d}")?;
    }
    writeln!(out)?;
    let triplets = |out: &mut W, b: usize, m: &CMatrix| -> std::io::Result<()> {
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                let v = m[(i, j)];
                if v.norm() > 1e-300 {
                    writeln!(out, "{b} {i} {j} {:.17e} {:.17e}", v.re, v.im)?;
                }
            }
        }
        Ok(())
    };
    writeln!(out, "objective")?;
    for (b, cmat) in p.objective.iter().enumerate() {
        triplets(&mut out, b, cmat)?;
    }
    for (i, row) in p.rows.iter().enumerate() {
        writeln!(out, "row {i} rhs {:.17e}", row.rhs)?;
        for (b, a) in &row.terms {
            triplets(&mut out, *b, a)?;
        }
    }
    Ok(())
}

fn frob(blocks: &[CMatrix]) -> f64 {
    blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
}

fn block_inner(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    a.iter().zip(b).map(|(x, y)| inner(x, y)).sum()
}

/// Largest `alpha` keeping `x + alpha dx` PSD (infinite if unbounded).
fn max_step(x: &CMatrix, dx: &CMatrix) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    // W = L^{-1} dX L^{-H}
    let tmp = l.solve_lower_triangular(dx)?;
    let w = l.solve_lower_triangular(&tmp.adjoint())?;
    let w = hermitian_part(&w.adjoint());
    if w.nrows() == 1 {
        let v = w[(0, 0)].re;
        return Some(if v < 0.0 { -1.0 / v } else { f64::INFINITY });
    }
    let eig = w.symmetric_eigen();
    let lmin = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Some(if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    })
}

fn hermitian_inverse(s: &CMatrix) -> Option<CMatrix> {
    if s.nrows() == 1 {
        let v = s[(0, 0)].re;
        return (v > 0.0).then(|| CMatrix::from_element(1, 1, C64::new(1.0 / v, 0.0)));
    }
    let chol = s.clone().cholesky()?;
    Some(hermitian_part(&chol.inverse()))
}

fn solve_spd(m: &DMatrix<f64>, rhs: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
    let n = m.nrows();
    if n == 0 {
        return Some(rhs.to_vec());
    }
    if let Some(ch) = m.clone().cholesky() {
        return Some(rhs.iter().map(|r| ch.solve(r)).collect());
    }
    let scale = (0..n)
        .map(|i| m[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut reg = m.clone();
    for i in 0..n {
        reg[(i, i)] += 1e-13 * scale;
    }
    if let Some(ch) = reg.clone().cholesky() {
        return Some(rhs.iter().map(|r| ch.solve(r)).collect());
    }
    let lu = reg.lu();
    rhs.iter().map(|r| lu.solve(r)).collect()
}

struct Workspace<'a> {
    p: &'a BlockSdp,
    b: DVector<f64>,
    nu: f64,
}

impl<'a> Workspace<'a> {
    /// Solves the Newton system of the embedding for given complementarity
    /// targets. `comp` holds the right-hand side `R_b` of
    /// `dX + X dS S^{-1} = R_b`; `tk` the right-hand side of
    /// `tau dkappa + kappa dtau = tk`; `eta` scales the residuals.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        sinv: &[CMatrix],
        schur: &DMatrix<f64>,
        xcs: &[CMatrix],
        res: (&DVector<f64>, &[CMatrix], f64),
        comp: &[CMatrix],
        tk: f64,
        eta: f64,
    ) -> Option<Direction> {
        let p = self.p;
        let (r_p, r_d, r_g) = res;
        // Z = R + eta X r_d S^{-1}
        let z: Vec<CMatrix> = comp
            .iter()
            .zip(&it.x)
            .zip(r_d)
            .zip(sinv)
            .map(|(((r, x), rd), si)| r + (x * rd * si).scale(eta))
            .collect();
        let f = -(r_p.scale(eta)) - p.apply(&z);
        let w = p.apply(xcs);
        let g = &w + &self.b;
        let sol = solve_spd(schur, &[f, g])?;
        let (u, v) = (&sol[0], &sol[1]);
        let cc = block_inner_re_trace(&p.objective, xcs);
        let cz: f64 = p
            .objective
            .iter()
            .zip(&z)
            .map(|(c, zb)| trace_product(c, zb))
            .sum();
        let denom = self.b.dot(v) - w.dot(v) + cc + it.kappa / it.tau;
        let numer = -eta * r_g - self.b.dot(u) + cz + w.dot(u) + tk / it.tau;
        if !(denom.is_finite() && denom > 0.0) {
            return None;
        }
        let dtau = numer / denom;
        let dy = u + v.scale(dtau);
        let aty = p.adjoint(&dy);
        let mut ds = Vec::with_capacity(r_d.len());
        let mut dx = Vec::with_capacity(r_d.len());
        for b in 0..r_d.len() {
            let dsb =
                hermitian_part(&(-(r_d[b].scale(eta)) - &aty[b] + p.objective[b].scale(dtau)));
            let dxb = hermitian_part(&(&comp[b] - &it.x[b] * &dsb * &sinv[b]));
            ds.push(dsb);
            dx.push(dxb);
        }
        let dkappa = (tk - it.kappa * dtau) / it.tau;
        Some(Direction {
            dx,
            dy,
            ds,
            dtau,
            dkappa,
        })
    }

    fn step_length(&self, it: &Iterate, d: &Direction) -> Option<f64> {
        let mut alpha = f64::INFINITY;
        for b in 0..it.x.len() {
            alpha = alpha.min(max_step(&it.x[b], &d.dx[b])?);
            alpha = alpha.min(max_step(&it.s[b], &d.ds[b])?);
        }
        if d.dtau < 0.0 {
            alpha = alpha.min(-it.tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            alpha = alpha.min(-it.kappa / d.dkappa);
        }
        Some(alpha)
    }

    fn mu(&self, x: &[CMatrix], s: &[CMatrix], tau: f64, kappa: f64) -> f64 {
        (block_inner(x, s) + tau * kappa) / (self.nu + 1.0)
    }
}

fn block_inner_re_trace(c: &[CMatrix], z: &[CMatrix]) -> f64 {
    c.iter().zip(z).map(|(a, b)| trace_product(a, b)).sum()
}

/// Solves a block SDP. Problems with malformed dimensions return
/// `NumericalFailure` with a logged reason.
///
/// Rows are scaled to unit size before the iteration, so residual tests and
/// the Schur complement see comparable rows; `y` refers to the rows as given.
pub fn solve(p: &BlockSdp, settings: &Settings) -> ConicSolution {
    if let Err(e) = p.check() {
        log::error!("malformed SDP: {e}");
        return failure(p, 0);
    }
    let factors: Vec<f64> = p
        .rows
        .iter()
        .map(|r| {
            let size = r
                .terms
                .iter()
                .map(|(_, a)| a.norm_squared())
                .sum::<f64>()
                .sqrt()
                .max(r.rhs.abs());
            if size > 0.0 {
                1.0 / size
            } else {
                1.0
            }
        })
        .collect();
    let scaled = BlockSdp {
        block_dims: p.block_dims.clone(),
        objective: p.objective.clone(),
        rows: p
            .rows
            .iter()
            .zip(&factors)
            .map(|(r, &f)| Row {
                terms: r.terms.iter().map(|(b, a)| (*b, a.scale(f))).collect(),
                rhs: r.rhs * f,
            })
            .collect(),
    };
    let mut sol = solve_scaled(&scaled, settings);
    for (y, f) in sol.y.iter_mut().zip(&factors) {
        *y *= f;
    }
    sol
}

fn solve_scaled(p: &BlockSdp, settings: &Settings) -> ConicSolution {
    let nblocks = p.block_dims.len();
    let m = p.rows.len();
    let b = p.rhs();
    let ws = Workspace {
        p,
        b: b.clone(),
        nu: p.block_dims.iter().sum::<usize>() as f64,
    };
    let norm_b = b.norm();
    let norm_c = frob(&p.objective);

    let mut it = Iterate {
        x: p.block_dims
            .iter()
            .map(|&n| CMatrix::identity(n, n))
            .collect(),
        y: DVector::zeros(m),
        s: p.block_dims
            .iter()
            .map(|&n| CMatrix::identity(n, n))
            .collect(),
        tau: 1.0,
        kappa: 1.0,
    };

    let mut last = [f64::INFINITY; 3];
    for iter in 0..settings.max_iter {
        // residuals of the embedding
        let ax = p.apply(&it.x);
        let r_p = &ax - b.scale(it.tau);
        let aty = p.adjoint(&it.y);
        let r_d: Vec<CMatrix> = (0..nblocks)
            .map(|k| &aty[k] + &it.s[k] - p.objective[k].scale(it.tau))
            .collect();
        let cx = p.objective_value(&it.x);
        let by = b.dot(&it.y);
        let r_g = by - cx - it.kappa;

        let pobj = cx / it.tau;
        let dobj = by / it.tau;
        let pres = r_p.norm() / it.tau / (1.0 + norm_b);
        let dres = frob(&r_d) / it.tau / (1.0 + norm_c);
        let gap = (pobj - dobj).abs();
        let rel_gap = gap / pobj.abs().max(dobj.abs()).max(1e-300);
        last = [pres, dres, rel_gap];
        log::trace!(
            "ipm {iter:3} pobj {pobj:+.6e} dobj {dobj:+.6e} pres {pres:.2e} dres {dres:.2e} gap {gap:.2e} tau {:.2e} kappa {:.2e}",
            it.tau,
            it.kappa
        );

        if pres <= settings.feas_tol
            && dres <= settings.feas_tol
            && (rel_gap <= settings.rel_gap || gap <= settings.abs_gap)
        {
            return finish(ConicStatus::Optimal, &it, p, iter, last);
        }
        // certificates
        let aty_s: Vec<CMatrix> = (0..nblocks).map(|k| &aty[k] + &it.s[k]).collect();
        if by > 0.0 && frob(&aty_s) / by <= settings.infeas_tol * (1.0 + norm_c) {
            return certificate(ConicStatus::PrimalInfeasible, &it, p, iter, last);
        }
        if cx < 0.0 && ax.norm() / (-cx) <= settings.infeas_tol * (1.0 + norm_b) {
            return certificate(ConicStatus::DualInfeasible, &it, p, iter, last);
        }

        let Some(sinv) =
            it.s.iter()
                .map(hermitian_inverse)
                .collect::<Option<Vec<_>>>()
        else {
            return failure_with(&it, p, iter, last, "dual slack lost definiteness");
        };
        // X C S^{-1} and the Schur complement
        let xcs: Vec<CMatrix> = (0..nblocks)
            .map(|k| &it.x[k] * &p.objective[k] * &sinv[k])
            .collect();
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for (j, row_j) in p.rows.iter().enumerate() {
            for (bj, aj) in &row_j.terms {
                let g = &it.x[*bj] * aj * &sinv[*bj];
                for (i, row_i) in p.rows.iter().enumerate().skip(j) {
                    for (bi, ai) in &row_i.terms {
                        if bi == bj {
                            schur[(i, j)] += trace_product(ai, &g);
                        }
                    }
                }
            }
        }
        for j in 0..m {
            for i in (j + 1)..m {
                schur[(j, i)] = schur[(i, j)];
            }
        }

        let mu = ws.mu(&it.x, &it.s, it.tau, it.kappa);
        let res = (&r_p, r_d.as_slice(), r_g);

        // predictor
        let comp_aff: Vec<CMatrix> = it.x.iter().map(|x| -x).collect();
        let tk_aff = -it.tau * it.kappa;
        let Some(aff) = ws.direction(&it, &sinv, &schur, &xcs, res, &comp_aff, tk_aff, 1.0) else {
            return failure_with(&it, p, iter, last, "predictor direction");
        };
        let Some(alpha_aff) = ws.step_length(&it, &aff) else {
            return failure_with(&it, p, iter, last, "predictor step");
        };
        let alpha_aff = alpha_aff.min(1.0);
        let xa: Vec<CMatrix> = (0..nblocks)
            .map(|k| &it.x[k] + aff.dx[k].scale(alpha_aff))
            .collect();
        let sa: Vec<CMatrix> = (0..nblocks)
            .map(|k| &it.s[k] + aff.ds[k].scale(alpha_aff))
            .collect();
        let mu_aff = ws.mu(
            &xa,
            &sa,
            it.tau + alpha_aff * aff.dtau,
            it.kappa + alpha_aff * aff.dkappa,
        );
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let comp: Vec<CMatrix> = (0..nblocks)
            .map(|k| sinv[k].scale(sigma * mu) - &it.x[k] - &aff.dx[k] * &aff.ds[k] * &sinv[k])
            .collect();
        let tk = sigma * mu - it.tau * it.kappa - aff.dtau * aff.dkappa;
        let Some(dir) = ws.direction(&it, &sinv, &schur, &xcs, res, &comp, tk, 1.0 - sigma) else {
            return failure_with(&it, p, iter, last, "corrector direction");
        };
        let Some(alpha_max) = ws.step_length(&it, &dir) else {
            return failure_with(&it, p, iter, last, "corrector step");
        };
        let alpha = (settings.step_fraction * alpha_max).min(1.0);
        if !(alpha > 1e-12) {
            return failure_with(&it, p, iter, last, "step too short");
        }
        for k in 0..nblocks {
            it.x[k] = hermitian_part(&(&it.x[k] + dir.dx[k].scale(alpha)));
            it.s[k] = hermitian_part(&(&it.s[k] + dir.ds[k].scale(alpha)));
        }
        it.y += dir.dy.scale(alpha);
        it.tau += alpha * dir.dtau;
        it.kappa += alpha * dir.dkappa;
        if !(it.tau > 0.0 && it.kappa > 0.0 && it.tau.is_finite()) {
            return failure_with(&it, p, settings.max_iter, last, "embedding left the cone");
        }
        // renormalize the embedding to avoid drift
        let scale = 1.0 / (it.tau + it.kappa).max(1e-300);
        if !(1e-8..=1e8).contains(&scale) {
            for k in 0..nblocks {
                it.x[k] = it.x[k].scale(scale);
                it.s[k] = it.s[k].scale(scale);
            }
            it.y = it.y.scale(scale);
            it.tau *= scale;
            it.kappa *= scale;
        }
    }
    failure_with(&it, p, settings.max_iter, last, "iteration limit")
}

fn finish(
    status: ConicStatus,
    it: &Iterate,
    p: &BlockSdp,
    iterations: usize,
    residuals: [f64; 3],
) -> ConicSolution {
    let inv = 1.0 / it.tau;
    let x: Vec<CMatrix> = it.x.iter().map(|m| m.scale(inv)).collect();
    let s: Vec<CMatrix> = it.s.iter().map(|m| m.scale(inv)).collect();
    let y: Vec<f64> = it.y.iter().map(|v| v * inv).collect();
    let primal_objective = p.objective_value(&x);
    let dual_objective = p.rhs().iter().zip(&y).map(|(a, b)| a * b).sum();
    ConicSolution {
        status,
        x,
        y,
        s,
        primal_objective,
        dual_objective,
        iterations,
        residuals,
    }
}

/// Returns the unnormalized certificate direction (scaled so `b^T y = 1`
/// for primal infeasibility).
fn certificate(
    status: ConicStatus,
    it: &Iterate,
    p: &BlockSdp,
    iterations: usize,
    residuals: [f64; 3],
) -> ConicSolution {
    let b = p.rhs();
    let scale = match status {
        ConicStatus::PrimalInfeasible => 1.0 / b.dot(&it.y),
        _ => 1.0 / (-p.objective_value(&it.x)),
    };
    ConicSolution {
        status,
        x: it.x.iter().map(|m| m.scale(scale)).collect(),
        y: it.y.iter().map(|v| v * scale).collect(),
        s: it.s.iter().map(|m| m.scale(scale)).collect(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations,
        residuals,
    }
}

/// Loosely converged iterates are still accepted as optimal; anything else
/// is a numerical failure.
fn failure_with(
    it: &Iterate,
    p: &BlockSdp,
    iterations: usize,
    residuals: [f64; 3],
    reason: &str,
) -> ConicSolution {
    let [pres, dres, gap] = residuals;
    if pres <= 1e-6 && dres <= 1e-6 && gap <= 1e-5 && it.tau > 0.0 {
        log::debug!(
            "ipm stalled at an acceptable point (pres {pres:.1e}, dres {dres:.1e}, gap {gap:.1e})"
        );
        return finish(ConicStatus::Optimal, it, p, iterations, residuals);
    }
    log::debug!(
        "ipm numerical failure: {reason} (pres {pres:.1e}, dres {dres:.1e}, gap {gap:.1e})"
    );
    let mut out = finish(ConicStatus::NumericalFailure, it, p, iterations, residuals);
    out.status = ConicStatus::NumericalFailure;
    out
}

fn failure(p: &BlockSdp, iterations: usize) -> ConicSolution {
    ConicSolution {
        status: ConicStatus::NumericalFailure,
        x: p.block_dims.iter().map(|&n| CMatrix::zeros(n, n)).collect(),
        y: vec![0.0; p.rows.len()],
        s: p.block_dims.iter().map(|&n| CMatrix::zeros(n, n)).collect(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations,
        residuals: [f64::NAN; 3],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, hermitian_eigen, outer, CVector};
    use approx::assert_relative_eq;

    fn scalar(v: f64) -> CMatrix {
        CMatrix::from_element(1, 1, c(v, 0.0))
    }

    #[test]
    fn linear_program_in_scalar_blocks() {
        // min x1 + 2 x2  s.t. x1 + x2 = 1, x >= 0  -> x1 = 1, obj 1.
        let p = BlockSdp {
            block_dims: vec![1, 1],
            objective: vec![scalar(1.0), scalar(2.0)],
            rows: vec![Row {
                terms: vec![(0, scalar(1.0)), (1, scalar(1.0))],
                rhs: 1.0,
            }],
        };
        let sol = solve(&p, &Settings::default());
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert_relative_eq!(sol.primal_objective, 1.0, max_relative = 1e-7);
        assert_relative_eq!(sol.y[0], 1.0, max_relative = 1e-6);
    }

    #[test]
    fn min_eigenvalue_problem() {
        // min <C, X> s.t. Tr X = 1, X >= 0 equals lambda_min(C).
        let v1 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)]);
        let v2 = CVector::from_vec(vec![c(0.5, 0.5), c(1.0, 0.0), c(0.0, 0.0)]);
        let cmat = outer(&v1) + outer(&v2).scale(3.0) + CMatrix::identity(3, 3).scale(0.25);
        let (vals, _) = hermitian_eigen(&cmat);
        let p = BlockSdp {
            block_dims: vec![3],
            objective: vec![cmat],
            rows: vec![Row {
                terms: vec![(0, CMatrix::identity(3, 3))],
                rhs: 1.0,
            }],
        };
        let sol = solve(&p, &Settings::default());
        assert_eq!(sol.status, ConicStatus::Optimal);
        assert_relative_eq!(sol.primal_objective, vals[2], max_relative = 1e-7);
        assert_relative_eq!(sol.dual_objective, vals[2], max_relative = 1e-7);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x >= 0 with x = -1 is infeasible.
        let p = BlockSdp {
            block_dims: vec![2],
            objective: vec![CMatrix::identity(2, 2)],
            rows: vec![Row {
                terms: vec![(0, CMatrix::identity(2, 2))],
                rhs: -1.0,
            }],
        };
        let sol = solve(&p, &Settings::default());
        assert_eq!(sol.status, ConicStatus::PrimalInfeasible);
        // certificate: A^* y <= 0 with b^T y = 1
        assert!(sol.y[0] < 0.0);
    }

    #[test]
    fn detects_conflicting_bounds() {
        // x + s1 = 1 (x <= 1) and x - s2 = 2 (x >= 2).
        let p = BlockSdp {
            block_dims: vec![1, 1, 1],
            objective: vec![scalar(1.0), scalar(0.0), scalar(0.0)],
            rows: vec![
                Row {
                    terms: vec![(0, scalar(1.0)), (1, scalar(1.0))],
                    rhs: 1.0,
                },
                Row {
                    terms: vec![(0, scalar(1.0)), (2, scalar(-1.0))],
                    rhs: 2.0,
                },
            ],
        };
        assert_eq!(
            solve(&p, &Settings::default()).status,
            ConicStatus::PrimalInfeasible
        );
    }

    #[test]
    fn detects_dual_infeasibility() {
        // min -x s.t. x - s = 0: unbounded.
        let p = BlockSdp {
            block_dims: vec![1, 1],
            objective: vec![scalar(-1.0), scalar(0.0)],
            rows: vec![Row {
                terms: vec![(0, scalar(1.0)), (1, scalar(-1.0))],
                rhs: 0.0,
            }],
        };
        assert_eq!(
            solve(&p, &Settings::default()).status,
            ConicStatus::DualInfeasible
        );
    }

    #[test]
    fn dump_lists_blocks_and_rows() {
        let p = BlockSdp {
            block_dims: vec![1, 2],
            objective: vec![scalar(1.0), CMatrix::identity(2, 2)],
            rows: vec![Row {
                terms: vec![(1, CMatrix::identity(2, 2))],
                rhs: 3.0,
            }],
        };
        let mut buf = Vec::new();
        write_dump(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# hbcoop sdp dump v1"));
        assert!(text.contains("blocks 2 1 2"));
        assert!(text.contains("row 0 rhs 3.0"));
        // objective: 1 + 2 diagonal entries; row: 2 diagonal entries
        assert_eq!(text.lines().filter(|l| l.starts_with("1 ")).count(), 4);
    }

    #[test]
    fn malformed_problem_is_a_failure() {
        let p = BlockSdp {
            block_dims: vec![2],
            objective: vec![scalar(1.0)],
            rows: vec![],
        };
        assert_eq!(
            solve(&p, &Settings::default()).status,
            ConicStatus::NumericalFailure
        );
    }
}
