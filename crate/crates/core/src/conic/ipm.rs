use super::cones::{self, Scaling};
use super::{Cone, Problem, Settings, Solution, Status};
use crate::linalg::{axpy, dot, norm, Cholesky, Matrix};
use crate::scalar::Real;

/// Row range and constant Gram data of one cone block.
struct Block {
    cone: Cone,
    offset: usize,
    /// Sorted columns of `G` with a nonzero in this block.
    columns: Vec<usize>,
}

impl Block {
    fn rows(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.cone.dim()
    }
}

fn layout<T: Real>(problem: &Problem<T>) -> Vec<Block> {
    let mut offset = 0;
    problem
        .cones
        .iter()
        .map(|&cone| {
            let mut columns: Vec<usize> = (offset..offset + cone.dim())
                .flat_map(|r| problem.g.row(r).0.iter().copied())
                .collect();
            columns.sort_unstable();
            columns.dedup();
            let block = Block { cone, offset, columns };
            offset += cone.dim();
            block
        })
        .collect()
}

/// Factored reduced KKT system for one scaling.
struct Kkt<'a, T> {
    problem: &'a Problem<T>,
    blocks: &'a [Block],
    scalings: &'a [Scaling<T>],
    h: Matrix<T>,
    h_chol: Cholesky<T>,
    /// `H^{-1} A^T` columns, one per equality row.
    h_inv_at: Vec<Vec<T>>,
    schur_chol: Option<Cholesky<T>>,
}

impl<'a, T: Real> Kkt<'a, T> {
    fn factor(problem: &'a Problem<T>, blocks: &'a [Block], scalings: &'a [Scaling<T>]) -> Option<Self> {
        let n = problem.num_variables();
        let mut h = Matrix::zeros(n, n);
        for (block, scaling) in blocks.iter().zip(scalings) {
            match scaling {
                Scaling::Nonnegative { w } => {
                    for (r, &wi) in block.rows().zip(w) {
                        let inv2 = T::one() / (wi * wi);
                        let (idx, val) = problem.g.row(r);
                        for (&i, &vi) in idx.iter().zip(val) {
                            for (&j, &vj) in idx.iter().zip(val) {
                                h[(i, j)] += inv2 * vi * vj;
                            }
                        }
                    }
                }
                Scaling::SecondOrder { .. } => {
                    // accumulate (W^{-1} G_b)^T (W^{-1} G_b) over the columns the block touches
                    let cols = &block.columns;
                    let d = block.cone.dim();
                    let mut scaled = vec![vec![T::zero(); d]; cols.len()];
                    for (k, r) in block.rows().enumerate() {
                        let (idx, val) = problem.g.row(r);
                        for (&i, &v) in idx.iter().zip(val) {
                            let c = cols.binary_search(&i).expect("column index");
                            scaled[c][k] = v;
                        }
                    }
                    for col in scaled.iter_mut() {
                        *col = scaling.apply_inverse(col);
                    }
                    for (a, ca) in cols.iter().zip(&scaled) {
                        for (b, cb) in cols.iter().zip(&scaled) {
                            if b >= a {
                                let v = dot(ca, cb);
                                h[(*a, *b)] += v;
                                if b != a {
                                    h[(*b, *a)] += v;
                                }
                            }
                        }
                    }
                }
            }
        }
        let scale = T::one().max(h.max_abs_diagonal());
        let mut reg = T::epsilon() * T::lit(10.0) * scale;
        let h_chol = loop {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += reg;
            }
            match Cholesky::factor(&hr) {
                Ok(c) => break c,
                Err(_) if reg < T::lit(1e-4) * scale => reg *= T::lit(100.0),
                Err(_) => return None,
            }
        };
        let p = problem.num_equalities();
        let a_dense = problem.a.to_dense();
        let h_inv_at: Vec<Vec<T>> = (0..p).map(|i| h_chol.solve(a_dense.row(i))).collect();
        let schur_chol = if p > 0 {
            let mut s = Matrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    s[(i, j)] = problem.a.row_dot(i, &h_inv_at[j]);
                }
            }
            let sscale = T::one().max(s.max_abs_diagonal());
            for i in 0..p {
                s[(i, i)] += T::epsilon() * sscale;
            }
            Some(Cholesky::factor(&s).ok()?)
        } else {
            None
        };
        Some(Self {
            problem,
            blocks,
            scalings,
            h,
            h_chol,
            h_inv_at,
            schur_chol,
        })
    }

    fn map_blocks(&self, v: &[T], f: impl Fn(&Scaling<T>, &[T]) -> Vec<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(v.len());
        for (block, scaling) in self.blocks.iter().zip(self.scalings) {
            out.extend(f(scaling, &v[block.rows()]));
        }
        out
    }

    fn w(&self, v: &[T]) -> Vec<T> {
        self.map_blocks(v, |s, x| s.apply(x))
    }

    fn w_inv(&self, v: &[T]) -> Vec<T> {
        self.map_blocks(v, |s, x| s.apply_inverse(x))
    }

    /// Solves `[H A^T; A 0] [dx; dy] = [fx; fy]` with two refinement steps.
    fn solve_reduced(&self, fx: &[T], fy: &[T]) -> (Vec<T>, Vec<T>) {
        let (mut dx, mut dy) = self.solve_reduced_once(fx, fy);
        for _ in 0..2 {
            let mut rx = fx.to_vec();
            let hdx = self.h.mul_vec(&dx);
            let atdy = self.problem.a.transpose_mul_vec(&dy);
            for i in 0..rx.len() {
                rx[i] -= hdx[i] + atdy[i];
            }
            let adx = self.problem.a.mul_vec(&dx);
            let ry: Vec<T> = fy.iter().zip(&adx).map(|(&f, &a)| f - a).collect();
            let (cx, cy) = self.solve_reduced_once(&rx, &ry);
            axpy(T::one(), &cx, &mut dx);
            axpy(T::one(), &cy, &mut dy);
        }
        (dx, dy)
    }

    fn solve_reduced_once(&self, fx: &[T], fy: &[T]) -> (Vec<T>, Vec<T>) {
        let h_inv_f = self.h_chol.solve(fx);
        match &self.schur_chol {
            None => (h_inv_f, Vec::new()),
            Some(schur) => {
                let rhs: Vec<T> = (0..fy.len())
                    .map(|i| self.problem.a.row_dot(i, &h_inv_f) - fy[i])
                    .collect();
                let dy = schur.solve(&rhs);
                let mut dx = h_inv_f;
                for (col, &yi) in self.h_inv_at.iter().zip(&dy) {
                    axpy(-yi, col, &mut dx);
                }
                (dx, dy)
            }
        }
    }

    fn solve_once(&self, bx: &[T], by: &[T], bz: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let w2inv_bz = self.w_inv(&self.w_inv(bz));
        let mut fx = bx.to_vec();
        axpy(T::one(), &self.problem.g.transpose_mul_vec(&w2inv_bz), &mut fx);
        let (dx, dy) = self.solve_reduced(&fx, by);
        let mut gdx = self.problem.g.mul_vec(&dx);
        for (g, &b) in gdx.iter_mut().zip(bz) {
            *g -= b;
        }
        let dz = self.w_inv(&self.w_inv(&gdx));
        (dx, dy, dz)
    }

    /// Solves `A^T dy + G^T dz = bx`, `A dx = by`, `G dx - W^2 dz = bz`,
    /// refining against the unreduced system.
    fn solve(&self, bx: &[T], by: &[T], bz: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let p = self.problem;
        let (mut dx, mut dy, mut dz) = self.solve_once(bx, by, bz);
        for _ in 0..2 {
            let mut ex = bx.to_vec();
            axpy(-T::one(), &p.a.transpose_mul_vec(&dy), &mut ex);
            axpy(-T::one(), &p.g.transpose_mul_vec(&dz), &mut ex);
            let ey: Vec<T> = by.iter().zip(p.a.mul_vec(&dx)).map(|(&b, a)| b - a).collect();
            let w2dz = self.w(&self.w(&dz));
            let ez: Vec<T> = bz
                .iter()
                .zip(p.g.mul_vec(&dx))
                .zip(&w2dz)
                .map(|((&b, g), &w)| b - g + w)
                .collect();
            let (cx, cy, cz) = self.solve_once(&ex, &ey, &ez);
            axpy(T::one(), &cx, &mut dx);
            axpy(T::one(), &cy, &mut dy);
            axpy(T::one(), &cz, &mut dz);
        }
        (dx, dy, dz)
    }
}

struct Residuals<T> {
    rx: Vec<T>,
    ry: Vec<T>,
    rz: Vec<T>,
    pres: T,
    dres: T,
    gap: T,
    pcost: T,
    dcost: T,
}

fn residuals<T: Real>(p: &Problem<T>, x: &[T], y: &[T], z: &[T], s: &[T]) -> Residuals<T> {
    let mut rx = p.a.transpose_mul_vec(y);
    axpy(T::one(), &p.g.transpose_mul_vec(z), &mut rx);
    axpy(T::one(), &p.c, &mut rx);
    let ry: Vec<T> = p.a.mul_vec(x).iter().zip(&p.b).map(|(&ax, &b)| ax - b).collect();
    let rz: Vec<T> = p
        .g
        .mul_vec(x)
        .iter()
        .zip(s)
        .zip(&p.h)
        .map(|((&gx, &si), &hi)| gx + si - hi)
        .collect();
    let one = T::one();
    let pres = (norm(&ry) / one.max(norm(&p.b))).max(norm(&rz) / one.max(norm(&p.h)));
    let dres = norm(&rx) / one.max(norm(&p.c));
    Residuals {
        pres,
        dres,
        gap: dot(s, z),
        pcost: dot(&p.c, x),
        dcost: -dot(&p.h, z) - dot(&p.b, y),
        rx,
        ry,
        rz,
    }
}

fn converged<T: Real>(r: &Residuals<T>, feas: T, abs_gap: T, rel_gap: T) -> bool {
    if r.pres > feas || r.dres > feas {
        return false;
    }
    let rel = if r.pcost < T::zero() {
        r.gap / -r.pcost
    } else if r.dcost > T::zero() {
        r.gap / r.dcost
    } else {
        T::infinity()
    };
    r.gap <= abs_gap || rel <= rel_gap
}

fn shift_into_cone<T: Real>(blocks: &[Block], v: &mut [T]) {
    let norm_v = norm(v);
    let worst = blocks
        .iter()
        .map(|b| -cones::min_eigenvalue(b.cone, &v[b.rows()]))
        .fold(T::neg_infinity(), T::max);
    if worst >= -T::lit(1e-8) * T::one().max(norm_v) {
        for b in blocks {
            cones::add_identity(b.cone, T::one() + worst, &mut v[b.rows()]);
        }
    }
}

fn blockwise<T: Real>(blocks: &[Block], u: &[T], f: impl Fn(Cone, &[T]) -> Vec<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(u.len());
    for b in blocks {
        out.extend(f(b.cone, &u[b.rows()]));
    }
    out
}

fn step_to_boundary<T: Real>(blocks: &[Block], s: &[T], ds: &[T], z: &[T], dz: &[T]) -> T {
    blocks
        .iter()
        .map(|b| {
            let r = b.rows();
            cones::max_step(b.cone, &s[r.clone()], &ds[r.clone()])
                .min(cones::max_step(b.cone, &z[r.clone()], &dz[r]))
        })
        .fold(T::infinity(), T::min)
}

/// Solves a conic program. Never panics on numerical trouble; failures are
/// reported through [`Status`].
pub fn solve<T: Real>(problem: &Problem<T>, settings: &Settings<T>) -> Solution<T> {
    let n = problem.num_variables();
    let m = problem.cone_dim();
    let blocks = layout(problem);
    let degree = T::count(problem.degree().max(1));

    let failed = |x: Vec<T>, y: Vec<T>, z: Vec<T>, s: Vec<T>, it: usize| {
        let r = residuals(problem, &x, &y, &z, &s);
        Solution {
            status: Status::Failed,
            iterations: it,
            primal_objective: r.pcost,
            dual_objective: r.dcost,
            primal_residual: r.pres,
            dual_residual: r.dres,
            gap: r.gap,
            x,
            y,
            z,
            s,
        }
    };

    // Starting point from least-squares solves with W = I.
    let identity: Vec<Scaling<T>> = blocks.iter().map(|b| Scaling::identity(b.cone)).collect();
    let Some(kkt0) = Kkt::factor(problem, &blocks, &identity) else {
        return failed(vec![T::zero(); n], vec![T::zero(); problem.num_equalities()], vec![T::one(); m], vec![T::one(); m], 0);
    };
    let zeros_n = vec![T::zero(); n];
    let zeros_p = vec![T::zero(); problem.num_equalities()];
    let zeros_m = vec![T::zero(); m];
    let (mut x, _, neg_s) = kkt0.solve(&zeros_n, &problem.b, &problem.h);
    let mut s: Vec<T> = neg_s.iter().map(|&v| -v).collect();
    let neg_c: Vec<T> = problem.c.iter().map(|&v| -v).collect();
    let (_, mut y, mut z) = kkt0.solve(&neg_c, &zeros_p, &zeros_m);
    drop(kkt0);
    shift_into_cone(&blocks, &mut s);
    shift_into_cone(&blocks, &mut z);

    // (merit, x, y, z, s) of the least-bad iterate
    type Iterate<T> = (T, Vec<T>, Vec<T>, Vec<T>, Vec<T>);
    let mut best: Option<Iterate<T>> = None;
    let mut iterations = 0;
    for it in 0..=settings.max_iterations {
        let r = residuals(problem, &x, &y, &z, &s);
        let finite = r.pres.is_finite() && r.dres.is_finite() && r.gap.is_finite();
        if !finite {
            break;
        }
        if converged(
            &r,
            settings.feasibility_tolerance,
            settings.absolute_gap_tolerance,
            settings.relative_gap_tolerance,
        ) {
            return Solution {
                status: Status::Optimal,
                iterations: it,
                primal_objective: r.pcost,
                dual_objective: r.dcost,
                primal_residual: r.pres,
                dual_residual: r.dres,
                gap: r.gap,
                x,
                y,
                z,
                s,
            };
        }
        log::trace!("ipm {it}: pres={:?} dres={:?} gap={:?} pcost={:?}", r.pres, r.dres, r.gap, r.pcost);
        let merit = r.pres.max(r.dres).max(r.gap / T::one().max(r.pcost.abs()));
        if best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), z.clone(), s.clone()));
        }
        iterations = it;
        if it == settings.max_iterations {
            break;
        }

        let scalings: Vec<Scaling<T>> = blocks
            .iter()
            .map(|b| Scaling::nesterov_todd(b.cone, &s[b.rows()], &z[b.rows()]))
            .collect();
        let Some(kkt) = Kkt::factor(problem, &blocks, &scalings) else {
            break;
        };
        let lambda = kkt.w(&z);
        let mu = r.gap / degree;
        let lambda_sq = blockwise(&blocks, &lambda, |c, l| cones::product(c, l, l));

        let neg_rx: Vec<T> = r.rx.iter().map(|&v| -v).collect();
        let neg_ry: Vec<T> = r.ry.iter().map(|&v| -v).collect();
        let direction = |rc: &[T]| {
            // t = lambda \ rc ; bz = -rz - W t
            let mut t = Vec::with_capacity(m);
            for b in &blocks {
                t.extend(cones::inverse_product(b.cone, &lambda[b.rows()], &rc[b.rows()]));
            }
            let wt = kkt.w(&t);
            let bz: Vec<T> = r.rz.iter().zip(&wt).map(|(&a, &b)| -a - b).collect();
            let (dx, dy, dz) = kkt.solve(&neg_rx, &neg_ry, &bz);
            let dz_scaled = kkt.w(&dz);
            let ds_scaled: Vec<T> = t.iter().zip(&dz_scaled).map(|(&a, &b)| a - b).collect();
            let ds = kkt.w(&ds_scaled);
            (dx, dy, dz, ds, dz_scaled, ds_scaled)
        };

        // predictor
        let rc_aff: Vec<T> = lambda_sq.iter().map(|&v| -v).collect();
        let (_, _, dz_a, ds_a, dzs_a, dss_a) = direction(&rc_aff);
        let alpha_aff = step_to_boundary(&blocks, &s, &ds_a, &z, &dz_a).min(T::one());
        let sigma = (T::one() - alpha_aff).max(T::zero()).powi(3);

        // corrector
        let mut cross = Vec::with_capacity(m);
        for b in &blocks {
            cross.extend(cones::product(b.cone, &dss_a[b.rows()], &dzs_a[b.rows()]));
        }
        let mut rc: Vec<T> = lambda_sq.iter().zip(&cross).map(|(&l, &c)| -l - c).collect();
        for b in &blocks {
            cones::add_identity(b.cone, sigma * mu, &mut rc[b.rows()]);
        }
        let (dx, dy, dz, ds, _, _) = direction(&rc);
        let alpha = (settings.step_fraction * step_to_boundary(&blocks, &s, &ds, &z, &dz)).min(T::one());
        if !(alpha > T::lit(1e-12)) {
            break;
        }
        axpy(alpha, &dx, &mut x);
        axpy(alpha, &dy, &mut y);
        axpy(alpha, &dz, &mut z);
        axpy(alpha, &ds, &mut s);
    }

    // Stalled or out of iterations: report the best iterate seen.
    let Some((_, bx, by, bz, bs)) = best else {
        return failed(x, y, z, s, iterations);
    };
    let r = residuals(problem, &bx, &by, &bz, &bs);
    let tol = settings.reduced_tolerance;
    let status = if converged(&r, tol, tol, tol) {
        Status::NearOptimal
    } else {
        Status::Failed
    };
    Solution {
        status,
        iterations,
        primal_objective: r.pcost,
        dual_objective: r.dcost,
        primal_residual: r.pres,
        dual_residual: r.dres,
        gap: r.gap,
        x: bx,
        y: by,
        z: bz,
        s: bs,
    }
}
