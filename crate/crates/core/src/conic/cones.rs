//! Per-cone Jordan algebra and Nesterov-Todd scaling.

use super::Cone;
use crate::linalg::dot;
use crate::scalar::Real;

/// NT scaling `W` of one cone block, with `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) enum Scaling<T> {
    /// `W = diag(w)`
    Nonnegative { w: Vec<T> },
    /// `W = beta * [[w0, w1^T], [w1, I + w1 w1^T / (1 + w0)]]`, `w0^2 - |w1|^2 = 1`.
    SecondOrder { beta: T, wbar: Vec<T> },
}

impl<T: Real> Scaling<T> {
    pub fn identity(cone: Cone) -> Self {
        match cone {
            Cone::Nonnegative(d) => Scaling::Nonnegative {
                w: vec![T::one(); d],
            },
            Cone::SecondOrder(d) => {
                let mut wbar = vec![T::zero(); d];
                wbar[0] = T::one();
                Scaling::SecondOrder {
                    beta: T::one(),
                    wbar,
                }
            }
        }
    }

    /// Scaling for strictly interior `s`, `z`.
    pub fn nesterov_todd(cone: Cone, s: &[T], z: &[T]) -> Self {
        match cone {
            Cone::Nonnegative(_) => Scaling::Nonnegative {
                w: s.iter().zip(z).map(|(&si, &zi)| (si / zi).sqrt()).collect(),
            },
            Cone::SecondOrder(_) => {
                let sn = j_norm(s);
                let zn = j_norm(z);
                let half = T::lit(0.5);
                let sbar: Vec<T> = s.iter().map(|&v| v / sn).collect();
                let zbar: Vec<T> = z.iter().map(|&v| v / zn).collect();
                let gamma = ((T::one() + dot(&sbar, &zbar)) * half).sqrt();
                let inv = T::one() / (T::lit(2.0) * gamma);
                let mut wbar = Vec::with_capacity(s.len());
                wbar.push((sbar[0] + zbar[0]) * inv);
                for i in 1..s.len() {
                    wbar.push((sbar[i] - zbar[i]) * inv);
                }
                Scaling::SecondOrder {
                    beta: (sn / zn).sqrt(),
                    wbar,
                }
            }
        }
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        match self {
            Scaling::Nonnegative { w } => w.iter().zip(v).map(|(&a, &b)| a * b).collect(),
            Scaling::SecondOrder { beta, wbar } => {
                let (w0, w1) = (wbar[0], &wbar[1..]);
                let (v0, v1) = (v[0], &v[1..]);
                let w1v1 = dot(w1, v1);
                let coef = v0 + w1v1 / (T::one() + w0);
                let mut out = Vec::with_capacity(v.len());
                out.push(*beta * (w0 * v0 + w1v1));
                out.extend(w1.iter().zip(v1).map(|(&a, &b)| *beta * (b + coef * a)));
                out
            }
        }
    }

    pub fn apply_inverse(&self, v: &[T]) -> Vec<T> {
        match self {
            Scaling::Nonnegative { w } => w.iter().zip(v).map(|(&a, &b)| b / a).collect(),
            Scaling::SecondOrder { beta, wbar } => {
                let (w0, w1) = (wbar[0], &wbar[1..]);
                let (v0, v1) = (v[0], &v[1..]);
                let w1v1 = dot(w1, v1);
                let coef = -v0 + w1v1 / (T::one() + w0);
                let inv = T::one() / *beta;
                let mut out = Vec::with_capacity(v.len());
                out.push(inv * (w0 * v0 - w1v1));
                out.extend(w1.iter().zip(v1).map(|(&a, &b)| inv * (b + coef * a)));
                out
            }
        }
    }
}

/// `sqrt(x^T J x)` for an interior point of the second-order cone.
fn j_norm<T: Real>(x: &[T]) -> T {
    let tail = dot(&x[1..], &x[1..]).sqrt();
    ((x[0] - tail) * (x[0] + tail)).sqrt()
}

/// Jordan product `u o v`.
pub(crate) fn product<T: Real>(cone: Cone, u: &[T], v: &[T]) -> Vec<T> {
    match cone {
        Cone::Nonnegative(_) => u.iter().zip(v).map(|(&a, &b)| a * b).collect(),
        Cone::SecondOrder(_) => {
            let mut out = Vec::with_capacity(u.len());
            out.push(dot(u, v));
            for i in 1..u.len() {
                out.push(u[0] * v[i] + v[0] * u[i]);
            }
            out
        }
    }
}

/// Solves `lambda o x = r` for `x`.
pub(crate) fn inverse_product<T: Real>(cone: Cone, lambda: &[T], r: &[T]) -> Vec<T> {
    match cone {
        Cone::Nonnegative(_) => lambda.iter().zip(r).map(|(&l, &v)| v / l).collect(),
        Cone::SecondOrder(_) => {
            let (l0, l1) = (lambda[0], &lambda[1..]);
            let tail = dot(l1, l1).sqrt();
            let det = (l0 - tail) * (l0 + tail);
            let x0 = (l0 * r[0] - dot(l1, &r[1..])) / det;
            let mut out = Vec::with_capacity(r.len());
            out.push(x0);
            out.extend(l1.iter().zip(&r[1..]).map(|(&a, &b)| (b - x0 * a) / l0));
            out
        }
    }
}

/// Adds `alpha * e` (the cone's identity element) to `x`.
pub(crate) fn add_identity<T: Real>(cone: Cone, alpha: T, x: &mut [T]) {
    match cone {
        Cone::Nonnegative(_) => x.iter_mut().for_each(|v| *v += alpha),
        Cone::SecondOrder(_) => x[0] += alpha,
    }
}

/// Smallest Jordan eigenvalue.
pub(crate) fn min_eigenvalue<T: Real>(cone: Cone, x: &[T]) -> T {
    match cone {
        Cone::Nonnegative(_) => x.iter().copied().fold(T::infinity(), T::min),
        Cone::SecondOrder(_) => x[0] - dot(&x[1..], &x[1..]).sqrt(),
    }
}

/// Largest `a >= 0` with `x + a d` in the cone (`+inf` when unbounded).
pub(crate) fn max_step<T: Real>(cone: Cone, x: &[T], d: &[T]) -> T {
    match cone {
        Cone::Nonnegative(_) => x
            .iter()
            .zip(d)
            .filter(|(_, &di)| di < T::zero())
            .map(|(&xi, &di)| -xi / di)
            .fold(T::infinity(), T::min),
        Cone::SecondOrder(_) => {
            // q(a) = aa a^2 + 2 bb a + cc; first positive root
            let x1n = dot(&x[1..], &x[1..]).sqrt();
            let d1n = dot(&d[1..], &d[1..]).sqrt();
            let aa = (d[0] - d1n) * (d[0] + d1n);
            let bb = x[0] * d[0] - dot(&x[1..], &d[1..]);
            let cc = ((x[0] - x1n) * (x[0] + x1n)).max(T::zero());
            let disc = bb * bb - aa * cc;
            if disc < T::zero() {
                return T::infinity();
            }
            let denom = disc.sqrt() - bb;
            if denom <= T::zero() {
                T::infinity()
            } else {
                cc / denom
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nt_scaling_maps_z_and_s_to_same_point() {
        let cone = Cone::SecondOrder(4);
        let s = [3.0f64, 1.0, -0.5, 0.7];
        let z = [2.0f64, -0.3, 0.9, 0.1];
        let w = Scaling::nesterov_todd(cone, &s, &z);
        let wz = w.apply(&z);
        let winv_s = w.apply_inverse(&s);
        for (a, b) in wz.iter().zip(&winv_s) {
            assert!((a - b).abs() < 1e-13, "{wz:?} vs {winv_s:?}");
        }
        let back = w.apply_inverse(&w.apply(&s));
        for (a, b) in back.iter().zip(&s) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn inverse_product_inverts_product() {
        let cone = Cone::SecondOrder(3);
        let l = [2.0f64, 0.5, -0.4];
        let x = [0.3f64, -1.0, 2.0];
        let r = product(cone, &l, &x);
        let back = inverse_product(cone, &l, &r);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn soc_step_hits_boundary() {
        let cone = Cone::SecondOrder(2);
        // (1, 0) + a (0, 1) leaves the cone at a = 1
        assert!((max_step(cone, &[1.0f64, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
        // moving along the axis stays inside
        assert!(max_step(cone, &[1.0f64, 0.0], &[1.0, 0.0]).is_infinite());
        // (2, 1) + a (-1, 0): boundary where 2 - a = 1
        assert!((max_step(cone, &[2.0f64, 1.0], &[-1.0, 0.0]) - 1.0).abs() < 1e-15);
        let lp = Cone::Nonnegative(2);
        assert_eq!(max_step(lp, &[1.0f64, 2.0], &[-2.0, -1.0]), 0.5);
    }
}
