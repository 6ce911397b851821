//! Closed-form limit objects: the positive 1/2-stable law, the constants
//! `eta`, `A`, `B`, the root `z(c, K)`, Theorem 5's `L_k` and the resolvent
//! `S_lambda`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::EigenData;
use crate::error::{Error, Result};
use crate::process::{dot_counts_real, CriticalProcess, ProcessSpec};
use crate::sampler::AdditiveFn;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `exp{-(1 - i sign t) sqrt|t|}`.
pub fn stable_cf(t: f64) -> Complex64 {
    (-(Complex64::new(1.0, -sign(t))) * t.abs().sqrt()).exp()
}

/// CDF of the law with characteristic function [`stable_cf`]: the Levy law
/// with density `(2 pi)^{-1/2} x^{-3/2} e^{-1/(2x)}`.
pub fn levy_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    libm::erfc(1.0 / (2.0 * x).sqrt())
}

/// CDF of `scale * xi` for `scale > 0`.
pub fn levy_cdf_scaled(x: f64, scale: f64) -> f64 {
    levy_cdf(x / scale)
}

/// Scale of the Theorem 1 limit of `c . N^-2 sum f`: `(c.v) u_k^2 / H(u)`.
pub fn theorem1_scale(p: &CriticalProcess, k: usize, c: &[f64]) -> f64 {
    dot(c, p.v()) * p.u()[k].powi(2) / p.h_u
}

pub fn theorem1_cf(p: &CriticalProcess, k: usize, c: &[f64], t: f64) -> Complex64 {
    stable_cf(t * theorem1_scale(p, k, c))
}

/// `C_g = sum_s v_s sum_n p_s(n) g_s(n)`.
pub fn additive_constant(spec: &ProcessSpec, v: &[f64], g: &AdditiveFn) -> f64 {
    (0..spec.num_rules())
        .map(|id| {
            let (k, rule) = spec.rule_by_id(id);
            v[k] * rule.prob * g.value(id)
        })
        .sum()
}

/// `L_k = -u_k (1 - i sign C_g) sqrt|C_g| / sqrt H(u)`; the limit CF of
/// `N^-2 sum G` at `t = 1` is `exp(L_k)`.
pub fn l_k(p: &CriticalProcess, g: &AdditiveFn, k: usize) -> Result<Complex64> {
    let cg = additive_constant(&p.spec, p.v(), g);
    if cg == 0.0 {
        return Err(Error::ZeroCg);
    }
    Ok(additive_exponent(p, k, cg))
}

fn additive_exponent(p: &CriticalProcess, k: usize, cg: f64) -> Complex64 {
    -Complex64::new(1.0, -sign(cg)) * (p.u()[k] * cg.abs().sqrt() / p.h_u.sqrt())
}

/// Limit CF of `N^-2 sum G(omega_n)` at `t`.
pub fn theorem5_cf(p: &CriticalProcess, g: &AdditiveFn, k: usize, t: f64) -> Result<Complex64> {
    let cg = additive_constant(&p.spec, p.v(), g);
    if cg == 0.0 {
        return Err(Error::ZeroCg);
    }
    Ok(additive_exponent(p, k, t * cg).exp())
}

/// `eta^t = Lambda c^t`.
pub fn eta_vector(eigen: &EigenData, c: &[f64]) -> Vec<f64> {
    let out = &eigen.lambda * DVector::from_column_slice(c);
    out.iter().copied().collect()
}

/// `(A, B)` of the joint type-frequency limit for direction `c`.
pub fn ab_theorem2(p: &CriticalProcess, c: &[f64]) -> (f64, f64) {
    let (v, u) = (p.v(), p.u());
    let eta = eta_vector(&p.eigen, c);
    let xu_mean = p.q.expect(|n| dot_counts_real(n, u));
    let xe_mean = p.q.expect(|n| dot_counts_real(n, &eta));
    let cov =
        p.q.expect(|n| (dot_counts_real(n, u) - xu_mean) * (dot_counts_real(n, &eta) - xe_mean));
    let var = p.q.expect(|n| (dot_counts_real(n, &eta) - xe_mean).powi(2));
    let cv = dot(c, v);
    let a = cov
        - (0..v.len())
            .map(|s| v[s] * u[s] * (eta[s] - c[s]))
            .sum::<f64>()
        - cv;
    let b = -var
        + (0..v.len())
            .map(|s| v[s] * (c[s] - eta[s]).powi(2))
            .sum::<f64>()
        - cv * cv;
    (a, b)
}

/// `(A, B)` of the joint rule-frequency limit for type `j`, rules
/// `n_1..n_M` of that type and direction `c` over the rules.
///
/// `B = (c.q)^2 - sum p_j(n_mu) c_mu^2`, the sign that makes the single-type
/// case `p(0) = p(2) = 1/2`, `c = (1, 0)` reproduce the exact law of the
/// statistic (whose first component is the constant 1/2).
pub fn ab_theorem3(
    p: &CriticalProcess,
    j: usize,
    rules: &[Vec<u32>],
    c: &[f64],
) -> Result<(f64, f64)> {
    if rules.len() != c.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rules but {} coefficients",
            rules.len(),
            c.len()
        )));
    }
    let q = rule_probabilities(&p.spec, j, rules)?;
    let u = p.u();
    let cq = dot(c, &q);
    let a = rules
        .iter()
        .zip(c)
        .zip(&q)
        .map(|((n, &cm), &pm)| cm * pm * dot_counts_real(n, u))
        .sum::<f64>()
        - cq * u[j];
    let b = cq * cq - c.iter().zip(&q).map(|(cm, pm)| pm * cm * cm).sum::<f64>();
    Ok((a, b))
}

/// `q = (p_j(n_1), .., p_j(n_M))`; rules must be distinct and in the support.
pub fn rule_probabilities(spec: &ProcessSpec, j: usize, rules: &[Vec<u32>]) -> Result<Vec<f64>> {
    let mut seen = Vec::with_capacity(rules.len());
    rules
        .iter()
        .map(|n| {
            let r = spec.find_rule(j, n).ok_or_else(|| Error::UnknownRule {
                type_id: j + 1,
                offspring: n.clone(),
            })?;
            if seen.contains(&r) {
                return Err(Error::InvalidArgument(format!("rule {n:?} listed twice")));
            }
            seen.push(r);
            Ok(spec.rules(j)[r].prob)
        })
        .collect()
}

/// Root with `Re z <= 0` of `z^2 + (2 vj A i / H) z + (vj / H)(B + 2 K i) = 0`.
///
/// When both roots lie on the imaginary axis the root chosen is the limit of
/// the selected root as `K -> 0+`.
pub fn z_root(hu: f64, a: f64, b: f64, k: f64, vj: f64) -> Complex64 {
    let half_b = I * (vj * a / hu);
    let c0 = Complex64::new(b, 2.0 * k) * (vj / hu);
    let s = (half_b * half_b - c0).sqrt();
    let (r1, r2) = (-half_b + s, -half_b - s);
    let scale = 1.0 + r1.norm().max(r2.norm());
    let tie = 1e-14 * scale;
    if r1.re.abs() <= tie && r2.re.abs() <= tie {
        // d(root)/dK has real part proportional to -Im s for the `+s` root
        let z = if s.im >= 0.0 { r1 } else { r2 };
        return Complex64::new(0.0, z.im);
    }
    if r1.re <= r2.re {
        r1
    } else {
        r2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TargetKind {
    Thm1Stable,
    Thm2Joint,
    Thm3Joint,
    Thm5Additive,
}

/// One fully resolved limit CF value with the constants behind it.
#[derive(Debug, Clone, Serialize)]
pub struct LimitTarget {
    pub kind: TargetKind,
    /// 0-based root type.
    pub root: usize,
    /// Direction `c` (types for Theorems 1-2, rules for Theorem 3, the
    /// scalar `t` times `g` is not stored for Theorem 5).
    pub direction: Vec<f64>,
    /// `K` for joint targets, `t` for one-dimensional ones.
    pub k: f64,
    pub h_u: f64,
    pub eta: Option<Vec<f64>>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c_g: Option<f64>,
    pub l_k: Option<Complex64>,
    pub z: Option<Complex64>,
    pub cf: Complex64,
}

impl LimitTarget {
    fn base(kind: TargetKind, p: &CriticalProcess, root: usize, direction: &[f64], k: f64) -> Self {
        Self {
            kind,
            root,
            direction: direction.to_vec(),
            k,
            h_u: p.h_u,
            eta: None,
            a: None,
            b: None,
            c_g: None,
            l_k: None,
            z: None,
            cf: Complex64::new(1.0, 0.0),
        }
    }

    pub fn theorem1(p: &CriticalProcess, root: usize, c: &[f64], t: f64) -> Self {
        let mut target = Self::base(TargetKind::Thm1Stable, p, root, c, t);
        target.cf = theorem1_cf(p, root, c, t);
        target
    }

    pub fn theorem2(p: &CriticalProcess, root: usize, c: &[f64], k: f64) -> Self {
        let mut target = Self::base(TargetKind::Thm2Joint, p, root, c, k);
        let eta = eta_vector(&p.eigen, c);
        let (a, b) = ab_theorem2(p, c);
        let z = z_root(p.h_u, a, b, k, 1.0);
        target.cf = (z * p.u()[root] + I * eta[root]).exp();
        target.eta = Some(eta);
        target.a = Some(a);
        target.b = Some(b);
        target.z = Some(z);
        target
    }

    pub fn theorem3(
        p: &CriticalProcess,
        root: usize,
        j: usize,
        rules: &[Vec<u32>],
        c: &[f64],
        k: f64,
    ) -> Result<Self> {
        let mut target = Self::base(TargetKind::Thm3Joint, p, root, c, k);
        let (a, b) = ab_theorem3(p, j, rules, c)?;
        let z = z_root(p.h_u, a, b, k, p.v()[j]);
        target.cf = (z * p.u()[root]).exp();
        target.a = Some(a);
        target.b = Some(b);
        target.z = Some(z);
        Ok(target)
    }

    pub fn theorem5(p: &CriticalProcess, root: usize, g: &AdditiveFn, t: f64) -> Result<Self> {
        let mut target = Self::base(TargetKind::Thm5Additive, p, root, &[], t);
        let l = l_k(p, g, root)?;
        target.c_g = Some(additive_constant(&p.spec, p.v(), g));
        target.l_k = Some(l);
        target.cf = theorem5_cf(p, g, root, t)?;
        Ok(target)
    }
}

/// Value of the joint limit CF held by a resolved target.
pub fn joint_cf(target: &LimitTarget) -> Complex64 {
    target.cf
}

/// Solves `(I - lambda M) S^t = 1^t`.
pub fn s_lambda(eigen: &EigenData, lambda: f64) -> Result<Vec<f64>> {
    let n = eigen.num_types();
    let system = DMatrix::<f64>::identity(n, n) - &eigen.mean * lambda;
    let s = system
        .lu()
        .solve(&DVector::from_element(n, 1.0))
        .filter(|x| x.iter().all(|e| e.is_finite()))
        .ok_or(Error::SingularSystem(lambda))?;
    Ok(s.iter().copied().collect())
}

/// Writes `t,Re_theory,Im_theory` rows.
pub fn write_t_grid_csv<W: Write>(mut out: W, rows: &[(f64, Complex64)]) -> Result<()> {
    writeln!(out, "t,Re_theory,Im_theory")?;
    for (t, z) in rows {
        writeln!(out, "{t},{:e},{:e}", z.re, z.im)?;
    }
    Ok(())
}

/// Writes `c_id,K,Re_theory,Im_theory` rows.
pub fn write_ck_grid_csv<W: Write>(mut out: W, rows: &[(usize, f64, Complex64)]) -> Result<()> {
    writeln!(out, "c_id,K,Re_theory,Im_theory")?;
    for (id, k, z) in rows {
        writeln!(out, "{id},{k},{:e},{:e}", z.re, z.im)?;
    }
    Ok(())
}
