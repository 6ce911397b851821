//! Test-only fixtures and oracles shared by the integration tests.
#![allow(dead_code)]

use gwcrit::{frobenius_eigenpair, mean_matrix, ProcessSpec};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

pub fn e1() -> ProcessSpec {
    ProcessSpec::new(1, vec![(0, vec![0], 0.5), (0, vec![2], 0.5)]).unwrap()
}

pub fn e2() -> ProcessSpec {
    ProcessSpec::new(
        2,
        vec![
            (0, vec![0, 0], 0.5),
            (0, vec![1, 1], 0.5),
            (1, vec![0, 0], 0.5),
            (1, vec![1, 1], 0.5),
        ],
    )
    .unwrap()
}

pub fn e3() -> ProcessSpec {
    ProcessSpec::new(
        2,
        vec![
            (0, vec![0, 0], 0.25),
            (0, vec![2, 0], 0.25),
            (0, vec![0, 1], 0.5),
            (1, vec![0, 0], 0.5),
            (1, vec![1, 1], 0.5),
        ],
    )
    .unwrap()
}

pub fn e4() -> ProcessSpec {
    ProcessSpec::new(
        2,
        vec![
            (0, vec![0, 0], 0.25),
            (0, vec![1, 0], 0.5),
            (0, vec![0, 1], 0.25),
            (1, vec![0, 0], 0.5),
            (1, vec![2, 1], 0.5),
        ],
    )
    .unwrap()
}

pub fn all_examples() -> Vec<(&'static str, ProcessSpec)> {
    vec![("E1", e1()), ("E2", e2()), ("E3", e3()), ("E4", e4())]
}

/// Exact CF of `sum_{n<=power} X(omega_n)` where `X(omega)` is the sum over
/// rule applications of `phase[rule id]`, for trees rooted at `root`.
///
/// The per-tree CF `theta` solves
/// `theta_k = sum_n p_k(n) e^{i phase(k -> n)} prod_s theta_s^{n_s}`;
/// it is found by fixed-point iteration from 0 (the iterates are the CFs of
/// trees truncated at growing heights) and polished by Newton steps.
pub fn exact_tree_cf(spec: &ProcessSpec, phase: &[f64], root: usize, power: f64) -> Complex64 {
    let v = spec.num_types();
    let rules: Vec<(usize, Vec<u32>, Complex64)> = (0..spec.num_rules())
        .map(|id| {
            let (k, r) = spec.rule_by_id(id);
            (
                k,
                r.offspring.clone(),
                Complex64::from_polar(r.prob, phase[id]),
            )
        })
        .collect();
    let phi = |theta: &[Complex64]| -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); v];
        for (k, n, w) in &rules {
            let mut term = *w;
            for (s, &c) in n.iter().enumerate() {
                term *= theta[s].powu(c);
            }
            out[*k] += term;
        }
        out
    };
    let mut theta = vec![Complex64::new(0.0, 0.0); v];
    for _ in 0..20_000_000 {
        let next = phi(&theta);
        let diff = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        theta = next;
        if diff < 1e-13 {
            break;
        }
    }
    for _ in 0..20 {
        let f: Vec<Complex64> = phi(&theta).iter().zip(&theta).map(|(a, b)| a - b).collect();
        let mut jac = DMatrix::<Complex64>::from_fn(v, v, |i, j| {
            if i == j {
                Complex64::new(-1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        for (k, n, w) in &rules {
            for s in 0..v {
                if n[s] == 0 {
                    continue;
                }
                let mut d = *w * n[s] as f64;
                for (l, &c) in n.iter().enumerate() {
                    let e = if l == s { c - 1 } else { c };
                    d *= theta[l].powu(e);
                }
                jac[(*k, s)] += d;
            }
        }
        let Some(step) = jac.lu().solve(&DVector::from_vec(f)) else {
            break;
        };
        for (t, d) in theta.iter_mut().zip(step.iter()) {
            *t -= d;
        }
        if step.iter().map(|d| d.norm()).fold(0.0, f64::max) < 1e-17 {
            break;
        }
    }
    (theta[root].ln() * power).exp()
}

/// Gil-Pelaez inversion of the CF `exp{-(1 - i sign t) sqrt|t|}` at `x`,
/// integrating over `s = sqrt t` with Simpson's rule on `[0, 40]`.
pub fn gil_pelaez_stable_cdf(x: f64) -> f64 {
    let integrand = |s: f64| -> f64 {
        if s == 0.0 {
            return 2.0;
        }
        let t = s * s;
        let cf = (Complex64::new(-1.0, 1.0) * s).exp();
        let val = Complex64::new(0.0, -t * x).exp() * cf;
        2.0 * val.im / s
    };
    let n = 40_000;
    let (a, b) = (0.0, 40.0);
    let h = (b - a) / n as f64;
    let mut sum = integrand(a) + integrand(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * integrand(a + i as f64 * h);
    }
    0.5 - sum * h / 3.0 / std::f64::consts::PI
}

/// Random critical spec: per type a support containing the zero vector, the
/// all-ones vector and a few random vectors, with
/// `p_k(n) ~ w_k(n) theta^{|n|}` and `theta` tuned by bisection so the
/// spectral radius is 1.
pub fn random_critical_spec(rng: &mut impl Rng) -> ProcessSpec {
    let v: usize = rng.gen_range(2..=4);
    let mut supports: Vec<Vec<(Vec<u32>, f64)>> = Vec::new();
    for _ in 0..v {
        let mut support = vec![
            (vec![0u32; v], rng.gen_range(0.2..1.0)),
            (vec![1u32; v], rng.gen_range(0.2..1.0)),
        ];
        for _ in 0..rng.gen_range(1..=3) {
            let n: Vec<u32> = (0..v).map(|_| rng.gen_range(0..=3)).collect();
            if support.iter().all(|(m, _)| *m != n) {
                support.push((n, rng.gen_range(0.05..1.0)));
            }
        }
        supports.push(support);
    }
    let build = |theta: f64| -> ProcessSpec {
        let mut rules = Vec::new();
        for (k, support) in supports.iter().enumerate() {
            let weights: Vec<f64> = support
                .iter()
                .map(|(n, w)| w * theta.powi(n.iter().sum::<u32>() as i32))
                .collect();
            let z: f64 = weights.iter().sum();
            for ((n, _), w) in support.iter().zip(&weights) {
                rules.push((k, n.clone(), w / z));
            }
        }
        ProcessSpec::new(v, rules).unwrap()
    };
    let rho = |theta: f64| {
        frobenius_eigenpair(&mean_matrix(&build(theta)), 1e-14, 1_000_000)
            .unwrap()
            .rho
    };
    let (mut lo, mut hi) = (1e-6, 1.0);
    while rho(hi) < 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rho(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    build(0.5 * (lo + hi))
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
