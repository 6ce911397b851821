//! Offspring laws of a multi-type branching process and the quantities that
//! depend on them alone: the mean matrix, the measure Q, and the quadratic
//! forms `h_k` and `H`.
//!
//! Types are 0-based inside the crate. The JSON file format and all error
//! messages use 1-based type labels.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::eigen::{frobenius_eigenpair, EigenData};
use crate::error::{Error, Result};

/// One branching rule `k -> n` of a fixed parent type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub offspring: Vec<u32>,
    pub prob: f64,
}

impl Rule {
    /// Total number of children, `|n|`.
    pub fn total(&self) -> u64 {
        self.offspring.iter().map(|&x| x as u64).sum()
    }
}

/// Finite-support offspring distributions `p_k(n)` for every type `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    num_types: usize,
    rules: Vec<Vec<Rule>>,
    offsets: Vec<usize>,
}

/// Global index of a rule in the flattened `(type, rule)` enumeration.
pub type RuleId = usize;

impl ProcessSpec {
    /// Builds a spec from `(parent type, offspring counts, probability)`
    /// triples with 0-based parent types. Only structure is checked here;
    /// normalization is the business of [`validate_spec`].
    pub fn new(num_types: usize, rules: Vec<(usize, Vec<u32>, f64)>) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::Malformed("number of types must be positive".into()));
        }
        let mut by_type: Vec<Vec<Rule>> = vec![Vec::new(); num_types];
        for (i, (k, offspring, prob)) in rules.into_iter().enumerate() {
            if k >= num_types {
                return Err(Error::Malformed(format!(
                    "rule {i}: parent type {} outside 1..={num_types}",
                    k + 1
                )));
            }
            if offspring.len() != num_types {
                return Err(Error::Malformed(format!(
                    "rule {i}: offspring vector has {} entries, expected {num_types}",
                    offspring.len()
                )));
            }
            if by_type[k].iter().any(|r| r.offspring == offspring) {
                return Err(Error::Malformed(format!(
                    "rule {i}: duplicate offspring vector {offspring:?} for type {}",
                    k + 1
                )));
            }
            by_type[k].push(Rule { offspring, prob });
        }
        let mut offsets = Vec::with_capacity(num_types + 1);
        let mut acc = 0;
        for rs in &by_type {
            offsets.push(acc);
            acc += rs.len();
        }
        offsets.push(acc);
        Ok(Self {
            num_types,
            rules: by_type,
            offsets,
        })
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn rules(&self, k: usize) -> &[Rule] {
        &self.rules[k]
    }

    pub fn num_rules(&self) -> usize {
        self.offsets[self.num_types]
    }

    pub fn rule_id(&self, k: usize, index: usize) -> RuleId {
        self.offsets[k] + index
    }

    /// Range of global rule ids belonging to type `k`.
    pub fn rule_range(&self, k: usize) -> std::ops::Range<RuleId> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Parent type and rule of a global id.
    pub fn rule_by_id(&self, id: RuleId) -> (usize, &Rule) {
        let k = self.offsets.partition_point(|&o| o <= id) - 1;
        (k, &self.rules[k][id - self.offsets[k]])
    }

    pub fn find_rule(&self, k: usize, offspring: &[u32]) -> Option<usize> {
        self.rules
            .get(k)?
            .iter()
            .position(|r| r.offspring == offspring)
    }

    /// Reads the JSON process format:
    /// `{"types": V, "rules": [{"type": k, "offspring": [..], "prob": p}, ..]}`
    /// with 1-based `type`. `prob` may be a JSON number, a decimal string or a
    /// rational string `"a/b"`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ProcessFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
        let mut triples = Vec::with_capacity(file.rules.len());
        for (i, r) in file.rules.into_iter().enumerate() {
            if r.type_id == 0 {
                return Err(Error::Malformed(format!(
                    "rule {i}: types are numbered from 1"
                )));
            }
            let prob = parse_probability(&r.prob).map_err(|detail| Error::NotAProbability {
                type_id: r.type_id,
                rule: Some(i),
                detail,
            })?;
            triples.push((r.type_id - 1, r.offspring, prob));
        }
        Self::new(file.types, triples)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Value {
        let rules: Vec<Value> = (0..self.num_types)
            .flat_map(|k| {
                self.rules[k].iter().map(move |r| {
                    serde_json::json!({"type": k + 1, "offspring": r.offspring, "prob": r.prob})
                })
            })
            .collect();
        serde_json::json!({"types": self.num_types, "rules": rules})
    }
}

#[derive(Deserialize)]
struct ProcessFile {
    types: usize,
    rules: Vec<RuleEntry>,
}

#[derive(Deserialize)]
struct RuleEntry {
    #[serde(rename = "type")]
    type_id: usize,
    offspring: Vec<u32>,
    prob: Value,
}

/// Accepts `0.25`, `"0.25"`, `"1/4"`.
pub fn parse_probability(value: &Value) -> std::result::Result<f64, String> {
    let p = match value {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| format!("unrepresentable number {n}"))?,
        Value::String(s) => parse_probability_str(s)?,
        other => return Err(format!("expected a number or string, got {other}")),
    };
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(format!("probability {p} outside [0, 1]"));
    }
    Ok(p)
}

fn parse_probability_str(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: u64 = num
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in {s:?}"))?;
        let den: u64 = den
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in {s:?}"))?;
        if den == 0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        Ok(num as f64 / den as f64)
    } else {
        s.parse::<f64>().map_err(|_| format!("cannot parse {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed deviation of each type's probability mass from 1.
    pub prob_sum: f64,
    /// Allowed `|rho - 1|`.
    pub critical: f64,
    /// Residual target for the power iteration.
    pub eigen: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            prob_sum: 1e-12,
            critical: 1e-9,
            eigen: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub num_types: usize,
    pub probability_sums: Vec<f64>,
    /// Smallest `p` with `M^p > 0`.
    pub primitive_power: usize,
    pub rho: f64,
}

/// Checks normalization, primitivity, criticality and nondegeneracy, in that
/// order, stopping at the first failure.
pub fn validate_spec(spec: &ProcessSpec, tol: &Tolerances) -> Result<ValidationReport> {
    validate_with_eigen(spec, tol).map(|(report, _)| report)
}

fn validate_with_eigen(
    spec: &ProcessSpec,
    tol: &Tolerances,
) -> Result<(ValidationReport, EigenData)> {
    let mut sums = Vec::with_capacity(spec.num_types());
    for k in 0..spec.num_types() {
        let rules = spec.rules(k);
        if rules.is_empty() {
            return Err(Error::NotAProbability {
                type_id: k + 1,
                rule: None,
                detail: "no rules".into(),
            });
        }
        for (i, r) in rules.iter().enumerate() {
            if !r.prob.is_finite() || r.prob < 0.0 || r.prob > 1.0 {
                return Err(Error::NotAProbability {
                    type_id: k + 1,
                    rule: Some(i),
                    detail: format!("probability {} outside [0, 1]", r.prob),
                });
            }
        }
        let total: f64 = rules.iter().map(|r| r.prob).sum();
        if (total - 1.0).abs() > tol.prob_sum {
            return Err(Error::NotAProbability {
                type_id: k + 1,
                rule: None,
                detail: format!("probabilities sum to {total}"),
            });
        }
        sums.push(total);
    }

    let m = mean_matrix(spec);
    let primitive_power = primitivity_power(&m).ok_or(Error::NotPrimitive {
        checked_up_to: wielandt_bound(spec.num_types()),
    })?;

    let eigen = frobenius_eigenpair(&m, tol.eigen, tol.max_iter)?;
    if (eigen.rho - 1.0).abs() > tol.critical {
        return Err(Error::NotCritical(eigen.rho));
    }

    let branching =
        (0..spec.num_types()).any(|k| spec.rules(k).iter().any(|r| r.prob > 0.0 && r.total() >= 2));
    if !branching {
        return Err(Error::DegenerateH);
    }

    Ok((
        ValidationReport {
            num_types: spec.num_types(),
            probability_sums: sums,
            primitive_power,
            rho: eigen.rho,
        },
        eigen,
    ))
}

/// `M_kl = sum_n p_k(n) n_l`.
pub fn mean_matrix(spec: &ProcessSpec) -> DMatrix<f64> {
    let v = spec.num_types();
    DMatrix::from_fn(v, v, |k, l| {
        spec.rules(k)
            .iter()
            .map(|r| r.prob * r.offspring[l] as f64)
            .sum()
    })
}

fn wielandt_bound(v: usize) -> usize {
    (v - 1) * (v - 1) + 1
}

/// Smallest power `p <= (V-1)^2 + 1` with `M^p` entrywise positive, using
/// the zero pattern only.
pub fn primitivity_power(m: &DMatrix<f64>) -> Option<usize> {
    let n = m.nrows();
    let base: Vec<bool> = (0..n * n).map(|i| m[(i / n, i % n)] > 0.0).collect();
    let mut power = base.clone();
    for p in 1..=wielandt_bound(n) {
        if power.iter().all(|&b| b) {
            return Some(p);
        }
        let mut next = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                next[i * n + j] = (0..n).any(|l| power[i * n + l] && base[l * n + j]);
            }
        }
        power = next;
    }
    None
}

/// `Q(n) = sum_s v_s p_s(n)` over the union of the per-type supports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QMeasure {
    pub support: Vec<Vec<u32>>,
    pub weights: Vec<f64>,
}

impl QMeasure {
    pub fn new(spec: &ProcessSpec, v: &[f64]) -> Self {
        let mut acc: BTreeMap<&[u32], f64> = BTreeMap::new();
        for (k, &vk) in v.iter().enumerate() {
            for r in spec.rules(k) {
                *acc.entry(&r.offspring).or_insert(0.0) += vk * r.prob;
            }
        }
        let (support, weights) = acc.into_iter().map(|(n, w)| (n.to_vec(), w)).unzip();
        Self { support, weights }
    }

    /// `E_Q[f(X)]`.
    pub fn expect<T, F>(&self, mut f: F) -> T
    where
        T: std::iter::Sum<T> + std::ops::Mul<f64, Output = T>,
        F: FnMut(&[u32]) -> T,
    {
        self.support
            .iter()
            .zip(&self.weights)
            .map(|(n, &w)| f(n) * w)
            .sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let dim = self.support.first().map_or(0, Vec::len);
        (0..dim).map(|l| self.expect(|n| n[l] as f64)).collect()
    }
}

pub fn q_measure(spec: &ProcessSpec, v: &[f64]) -> QMeasure {
    QMeasure::new(spec, v)
}

fn dot_counts(n: &[u32], z: &[Complex64]) -> Complex64 {
    n.iter().zip(z).map(|(&c, &zi)| zi * c as f64).sum()
}

pub(crate) fn dot_counts_real(n: &[u32], z: &[f64]) -> f64 {
    n.iter().zip(z).map(|(&c, &zi)| zi * c as f64).sum()
}

/// `h_k(z) = sum_n p_k(n) (n.z)^2 - sum_s M_ks z_s^2`.
pub fn h_poly(spec: &ProcessSpec, k: usize, z: &[Complex64]) -> Complex64 {
    let rules = spec.rules(k);
    let second: Complex64 = rules
        .iter()
        .map(|r| {
            let d = dot_counts(&r.offspring, z);
            d * d * r.prob
        })
        .sum();
    let diag: Complex64 = (0..spec.num_types())
        .map(|s| {
            let mks: f64 = rules.iter().map(|r| r.prob * r.offspring[s] as f64).sum();
            z[s] * z[s] * mks
        })
        .sum();
    second - diag
}

/// `H(z) = E_Q (X.z)^2 - sum_s v_s z_s^2`.
pub fn big_h(q: &QMeasure, v: &[f64], z: &[Complex64]) -> Complex64 {
    let second: Complex64 = q.expect(|n| {
        let d = dot_counts(n, z);
        d * d
    });
    let diag: Complex64 = v.iter().zip(z).map(|(&vs, &zs)| zs * zs * vs).sum();
    second - diag
}

/// Real restriction of `H`, used for `H(u)`.
pub fn big_h_real(q: &QMeasure, v: &[f64], z: &[f64]) -> f64 {
    let second: f64 = q.expect(|n| dot_counts_real(n, z).powi(2));
    let diag: f64 = v.iter().zip(z).map(|(&vs, &zs)| vs * zs * zs).sum();
    second - diag
}

/// A validated critical process together with its Frobenius data, Q and
/// `H(u)`. This is what every downstream computation takes.
#[derive(Debug, Clone)]
pub struct CriticalProcess {
    pub spec: ProcessSpec,
    pub eigen: EigenData,
    pub q: QMeasure,
    pub h_u: f64,
    pub report: ValidationReport,
}

impl CriticalProcess {
    pub fn new(spec: ProcessSpec) -> Result<Self> {
        Self::with_tolerances(spec, &Tolerances::default())
    }

    pub fn with_tolerances(spec: ProcessSpec, tol: &Tolerances) -> Result<Self> {
        let (report, eigen) = validate_with_eigen(&spec, tol)?;
        let q = QMeasure::new(&spec, &eigen.v);
        let h_u = big_h_real(&q, &eigen.v, &eigen.u);
        Ok(Self {
            spec,
            eigen,
            q,
            h_u,
            report,
        })
    }

    pub fn num_types(&self) -> usize {
        self.spec.num_types()
    }

    pub fn v(&self) -> &[f64] {
        &self.eigen.v
    }

    pub fn u(&self) -> &[f64] {
        &self.eigen.u
    }

    pub fn h(&self, z: &[Complex64]) -> Complex64 {
        big_h(&self.q, &self.eigen.v, z)
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::ProcessSpec;

    /// `p(0) = p(2) = 1/2`.
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
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn mean_matrix_examples() {
        assert_eq!(mean_matrix(&e1()), DMatrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(
            mean_matrix(&e2()),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5])
        );
        assert_eq!(
            mean_matrix(&e4()),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 1.0, 0.5])
        );
        let dead = ProcessSpec::new(2, vec![(0, vec![0, 0], 1.0), (1, vec![0, 0], 1.0)]).unwrap();
        assert_eq!(mean_matrix(&dead), DMatrix::zeros(2, 2));
    }

    #[test]
    fn validates_examples() {
        let tol = Tolerances::default();
        for spec in [e1(), e2(), e3(), e4()] {
            let report = validate_spec(&spec, &tol).unwrap();
            assert!((report.rho - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_child_process_is_degenerate() {
        let spec = ProcessSpec::new(1, vec![(0, vec![1], 1.0)]).unwrap();
        assert!(matches!(
            validate_spec(&spec, &Tolerances::default()),
            Err(Error::DegenerateH)
        ));
    }

    #[test]
    fn subcritical_is_rejected_with_rho() {
        let spec = ProcessSpec::new(1, vec![(0, vec![0], 0.6), (0, vec![2], 0.4)]).unwrap();
        match validate_spec(&spec, &Tolerances::default()) {
            Err(Error::NotCritical(rho)) => assert!((rho - 0.8).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unnormalized_type_is_named() {
        let spec = ProcessSpec::new(
            2,
            vec![
                (0, vec![0, 0], 0.5),
                (0, vec![1, 1], 0.5),
                (1, vec![0, 0], 0.7),
            ],
        )
        .unwrap();
        match validate_spec(&spec, &Tolerances::default()) {
            Err(Error::NotAProbability { type_id, .. }) => assert_eq!(type_id, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reducible_matrix_is_not_primitive() {
        // type 1 never produces type 2
        let spec = ProcessSpec::new(
            2,
            vec![
                (0, vec![0, 0], 0.5),
                (0, vec![2, 0], 0.5),
                (1, vec![0, 0], 0.5),
                (1, vec![1, 1], 0.5),
            ],
        )
        .unwrap();
        assert!(matches!(
            validate_spec(&spec, &Tolerances::default()),
            Err(Error::NotPrimitive { checked_up_to: 2 })
        ));
        // periodic: irreducible but not primitive
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(primitivity_power(&m), None);
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(primitivity_power(&m), Some(2));
    }

    #[test]
    fn structural_errors() {
        assert!(ProcessSpec::new(0, vec![]).is_err());
        assert!(ProcessSpec::new(1, vec![(1, vec![0], 1.0)]).is_err());
        assert!(ProcessSpec::new(2, vec![(0, vec![0], 1.0)]).is_err());
        assert!(ProcessSpec::new(1, vec![(0, vec![0], 0.5), (0, vec![0], 0.5)]).is_err());
    }

    #[test]
    fn json_round_trip_and_rationals() {
        let text = r#"{"types": 1, "rules": [
            {"type": 1, "offspring": [0], "prob": "1/2"},
            {"type": 1, "offspring": [2], "prob": "0.5"}]}"#;
        let spec = ProcessSpec::from_json_str(text).unwrap();
        assert_eq!(spec, e1());
        let again = ProcessSpec::from_json_str(&spec.to_json().to_string()).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn json_bad_probability_names_rule() {
        let text = r#"{"types": 1, "rules": [
            {"type": 1, "offspring": [0], "prob": "1/2"},
            {"type": 1, "offspring": [2], "prob": "x"}]}"#;
        match ProcessSpec::from_json_str(text) {
            Err(Error::NotAProbability {
                type_id: 1,
                rule: Some(1),
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let err = ProcessSpec::from_json_str("{\"types\": 1,\n \"rules\": [}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn q_measure_examples() {
        let q = QMeasure::new(&e1(), &[1.0]);
        assert_eq!(q.support, vec![vec![0], vec![2]]);
        assert_eq!(q.weights, vec![0.5, 0.5]);

        let q = QMeasure::new(&e2(), &[0.5, 0.5]);
        assert_eq!(q.support, vec![vec![0, 0], vec![1, 1]]);
        assert_eq!(q.weights, vec![0.5, 0.5]);

        let q = QMeasure::new(&e4(), &[2.0 / 3.0, 1.0 / 3.0]);
        let at_zero = q.weights[q.support.iter().position(|n| n == &[0, 0]).unwrap()];
        assert!((at_zero - 1.0 / 3.0).abs() < 1e-15);
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn h_poly_examples() {
        assert_eq!(h_poly(&e1(), 0, &[c(1.0)]), c(1.0));
        assert_eq!(h_poly(&e4(), 0, &[c(0.0), c(0.0)]), c(0.0));
        assert!((h_poly(&e4(), 1, &[c(1.0), c(1.0)]) - c(3.0)).norm() < 1e-15);
    }

    #[test]
    fn h_of_u_examples() {
        let cases = [(e1(), 1.0), (e2(), 1.0), (e3(), 0.75), (e4(), 15.0 / 16.0)];
        for (spec, expected) in cases {
            let p = CriticalProcess::new(spec).unwrap();
            assert!((p.h_u - expected).abs() < 1e-12, "{} vs {expected}", p.h_u);
        }
    }
}
