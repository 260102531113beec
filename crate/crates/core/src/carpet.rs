//! Carpet specifications, validation and the closed-form constants derived
//! from them.
//!
//! A carpet is given by two subdivision counts `n >= m >= 2`, a digit set
//! `G` of pairs `(i, j)` and exact rational weights `p_ij`. The map attached
//! to a pair is `(x, y) -> ((x + i) / n, (y + j) / m)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::SpecError;

pub type Digit = u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DigitPair {
    pub i: Digit,
    pub j: Digit,
}

impl DigitPair {
    pub const fn new(i: Digit, j: Digit) -> Self {
        DigitPair { i, j }
    }
}

impl fmt::Display for DigitPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// Raw carpet data as supplied by the user. Nothing is checked on
/// construction; see [`validate_spec`] and [`Carpet::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct CarpetSpec {
    pub n: u32,
    pub m: u32,
    pub maps: Vec<(DigitPair, BigRational)>,
}

impl CarpetSpec {
    pub fn new(n: u32, m: u32, maps: Vec<(DigitPair, BigRational)>) -> Self {
        CarpetSpec { n, m, maps }
    }

    /// Equal weights `1 / card(G)` on the given digit pairs.
    pub fn uniform(n: u32, m: u32, pairs: &[(Digit, Digit)]) -> Self {
        let w = BigRational::new(BigInt::one(), BigInt::from(pairs.len().max(1)));
        let maps = pairs
            .iter()
            .map(|&(i, j)| (DigitPair::new(i, j), w.clone()))
            .collect();
        CarpetSpec { n, m, maps }
    }

    pub fn pairs(&self) -> impl Iterator<Item = DigitPair> + '_ {
        self.maps.iter().map(|(g, _)| *g)
    }

    /// Checks every invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), SpecError> {
        match validate_spec(self).first_error() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<InvariantCheck>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    errors: Vec<SpecError>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn errors(&self) -> &[SpecError] {
        &self.errors
    }

    pub fn first_error(&self) -> Option<SpecError> {
        self.errors.first().cloned()
    }

    fn record(&mut self, name: &'static str, violations: Vec<SpecError>, ok_detail: &str) {
        let detail = if violations.is_empty() {
            ok_detail.to_string()
        } else {
            violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        };
        self.checks.push(InvariantCheck {
            name,
            passed: violations.is_empty(),
            detail,
        });
        self.errors.extend(violations);
    }
}

/// Reports pass/fail for each invariant of a [`CarpetSpec`].
pub fn validate_spec(spec: &CarpetSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (n, m) = (spec.n, spec.m);

    let mut v = Vec::new();
    if n < m {
        v.push(SpecError::ColumnsBelowRows { n, m });
    }
    report.record("n_ge_m", v, "n >= m");

    let mut v = Vec::new();
    if m < 2 {
        v.push(SpecError::TooFewRows(m));
    }
    report.record("m_ge_2", v, "m >= 2");

    let mut v = Vec::new();
    if n > 256 {
        v.push(SpecError::TooManyColumns(n));
    }
    report.record("n_le_256", v, "digits fit in one byte");

    let mut v = Vec::new();
    if spec.maps.len() < 2 {
        v.push(SpecError::TooFewMaps(spec.maps.len()));
    }
    report.record("card_g_ge_2", v, "card(G) >= 2");

    let mut v = Vec::new();
    for (g, _) in &spec.maps {
        if u32::from(g.i) >= n || u32::from(g.j) >= m {
            v.push(SpecError::DigitOutOfRange { pair: *g, n, m });
        }
    }
    report.record("digit_bounds", v, "every pair inside the grid");

    let mut v = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (g, _) in &spec.maps {
        if !seen.insert(*g) {
            v.push(SpecError::DuplicatePair(*g));
        }
    }
    report.record("distinct_pairs", v, "pairs are distinct");

    let mut v = Vec::new();
    for (g, p) in &spec.maps {
        if !p.is_positive() || *p >= BigRational::one() {
            v.push(SpecError::ProbabilityOutOfRange {
                pair: *g,
                value: p.to_string(),
            });
        }
    }
    report.record("p_in_open_unit_interval", v, "0 < p_ij < 1");

    let mut v = Vec::new();
    let total: BigRational = spec.maps.iter().map(|(_, p)| p.clone()).sum();
    if !total.is_one() {
        v.push(SpecError::MassNotOne(total.to_string()));
    }
    report.record("mass_sum_one", v, "sum p_ij = 1 exactly");

    if n.min(m) < 3 {
        report.warnings.push(format!(
            "min(n, m) = {} < 3: the positivity/finiteness result is stated for n, m >= 3",
            n.min(m)
        ));
    }
    if report.is_valid() && !check_separation(spec) {
        report
            .warnings
            .push("separation condition fails: some pair of maps is adjacent".to_string());
    }
    report
}

/// True iff `max(|i1 - i2|, |j1 - j2|) >= 2` for every pair of distinct digit
/// pairs. Vacuously true for fewer than two maps.
pub fn check_separation(spec: &CarpetSpec) -> bool {
    let pairs: Vec<DigitPair> = spec.pairs().collect();
    pairs.iter().enumerate().all(|(a, g)| {
        pairs[a + 1..].iter().all(|h| {
            let di = (i32::from(g.i) - i32::from(h.i)).abs();
            let dj = (i32::from(g.j) - i32::from(h.j)).abs();
            g == h || di.max(dj) >= 2
        })
    })
}

/// Closed-form constants of a valid carpet.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedParams {
    /// `log m / log n`.
    pub theta: f64,
    /// `1 / theta`.
    pub k0: f64,
    /// Occupied rows, ascending.
    pub gy: Vec<Digit>,
    /// Occupied columns of each row.
    pub gx: BTreeMap<Digit, Vec<Digit>>,
    /// Row masses `q_j = sum_i p_ij`.
    pub q: BTreeMap<Digit, BigRational>,
    pub p_min: BigRational,
    pub p_max: BigRational,
    pub q_min: BigRational,
    pub q_max: BigRational,
    /// `p_min * q_min`.
    pub eta: BigRational,
    /// Hausdorff dimension of the measure.
    pub s0: f64,
    /// `sum p log(1/p)`.
    pub hp: f64,
    /// `sum q log(1/q)`.
    pub hq: f64,
    pub c0: f64,
    pub c1: f64,
    pub delta: f64,
    pub a1: u64,
    pub a2: u64,
    pub d0: f64,
    /// Exponent `t` of the uniform ball bound `mu(B(x, eps)) <= C eps^t`.
    pub ball_exponent: f64,
    pub eps0: f64,
    pub d_ball: f64,
    pub c_ball: f64,
}

impl DerivedParams {
    /// `s0` through the row/column entropy split
    /// `theta * H_p / log m + (1 - theta) * H_q / log m`.
    pub fn s0_entropy_form(&self, m: u32) -> f64 {
        let lm = f64::from(m).ln();
        self.theta * self.hp / lm + (1.0 - self.theta) * self.hq / lm
    }

    /// The ball bound is meaningful only when more than one row is occupied.
    pub fn ball_bound_applicable(&self) -> bool {
        !self.q_max.is_one()
    }
}

pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Computes every closed-form constant of a valid spec.
pub fn derive_params(spec: &CarpetSpec) -> Result<DerivedParams, SpecError> {
    spec.validate()?;
    let (n, m) = (f64::from(spec.n), f64::from(spec.m));
    let (ln_n, ln_m) = (n.ln(), m.ln());
    let theta = ln_m / ln_n;

    let mut gx: BTreeMap<Digit, Vec<Digit>> = BTreeMap::new();
    let mut q: BTreeMap<Digit, BigRational> = BTreeMap::new();
    for (g, p) in &spec.maps {
        gx.entry(g.j).or_default().push(g.i);
        *q.entry(g.j).or_insert_with(BigRational::zero) += p;
    }
    for cols in gx.values_mut() {
        cols.sort_unstable();
    }
    let gy: Vec<Digit> = gx.keys().copied().collect();

    let ps = spec.maps.iter().map(|(_, p)| p);
    let p_min = ps.clone().min().cloned().expect("validated: card(G) >= 2");
    let p_max = ps.max().cloned().expect("validated: card(G) >= 2");
    let q_min = q.values().min().cloned().expect("nonempty");
    let q_max = q.values().max().cloned().expect("nonempty");
    let eta = &p_min * &q_min;

    let xlogx = |r: &BigRational| {
        let x = ratio_to_f64(r);
        x * x.ln()
    };
    let sum_plogp: f64 = spec.maps.iter().map(|(_, p)| xlogx(p)).sum();
    let sum_qlogq: f64 = q.values().map(xlogx).sum();
    let s0 = -(theta * sum_plogp + (1.0 - theta) * sum_qlogq) / ln_m;

    let pmin_f = ratio_to_f64(&p_min);
    let qmax_f = ratio_to_f64(&q_max);
    let qmin_f = ratio_to_f64(&q_min);
    let c0 = -2.0 * qmax_f * qmax_f * pmin_f.ln();
    let c1 = c0 / (qmin_f * qmin_f);

    let n2p1 = n * n + 1.0;
    let delta = n2p1.powf(-0.5);
    let a1 = (16.0 / delta + 5.0).floor() as u64;
    let a2 = (16.0 / delta + 3.0).floor() as u64;
    let d0 = 4.0 * PI * n2p1;
    let ball_exponent = -qmax_f.ln() / ln_m;
    let eps0 = n2p1.sqrt() / m;
    let d_ball = d0 * qmax_f.powf((n2p1.sqrt().ln() - ln_m) / ln_m);
    let c_ball = 2f64.powf(ball_exponent) * d_ball.max(eps0.powf(-ball_exponent));

    Ok(DerivedParams {
        theta,
        k0: 1.0 / theta,
        gy,
        gx,
        q,
        p_min,
        p_max,
        q_min,
        q_max,
        eta,
        s0,
        hp: -sum_plogp,
        hq: -sum_qlogq,
        c0,
        c1,
        delta,
        a1: a1 * a1,
        a2: a2 * a2,
        d0,
        ball_exponent,
        eps0,
        d_ball,
        c_ball,
    })
}

/// Exact `l(k) = floor(k * theta)`, decided by `n^l <= m^k < n^(l+1)`.
#[derive(Clone, Debug)]
pub struct LevelTable {
    n: u32,
    m: u32,
    table: Vec<usize>,
}

impl LevelTable {
    const PRECOMPUTED: usize = 1024;

    pub fn new(n: u32, m: u32) -> Self {
        let (nb, mb) = (BigUint::from(n), BigUint::from(m));
        let mut table = Vec::with_capacity(Self::PRECOMPUTED + 1);
        let mut m_pow = BigUint::one();
        let mut n_next = nb.clone();
        let mut l = 0usize;
        table.push(0);
        for _ in 1..=Self::PRECOMPUTED {
            m_pow *= &mb;
            while n_next <= m_pow {
                n_next *= &nb;
                l += 1;
            }
            table.push(l);
        }
        LevelTable { n, m, table }
    }

    pub fn ell(&self, k: usize) -> usize {
        if let Some(&l) = self.table.get(k) {
            return l;
        }
        let (nb, mb) = (BigUint::from(self.n), BigUint::from(self.m));
        let m_pow = mb.pow(k as u32);
        let guess = (k as f64 * f64::from(self.m).ln() / f64::from(self.n).ln()).floor() as usize;
        let mut l = guess.saturating_sub(1);
        while nb.pow(l as u32 + 1) <= m_pow {
            l += 1;
        }
        while l > 0 && nb.pow(l as u32) > m_pow {
            l -= 1;
        }
        l
    }
}

/// A validated carpet together with its derived constants and the lookup
/// tables the enumeration code needs.
#[derive(Clone, Debug)]
pub struct Carpet {
    spec: CarpetSpec,
    params: DerivedParams,
    levels: LevelTable,
    /// `(i * m + j) -> index into spec.maps`
    pair_index: Vec<Option<u16>>,
    /// Row mass by digit (`None` for empty rows).
    q_by_row: Vec<Option<BigRational>>,
    log_p: Vec<f64>,
    log_q: Vec<f64>,
    /// Common denominator of all weights, and the weights scaled by it.
    scale: BigUint,
    scaled_p: Vec<BigUint>,
    scaled_q: Vec<BigUint>,
}

impl Carpet {
    pub fn new(spec: CarpetSpec) -> Result<Self, SpecError> {
        let mut spec = spec;
        let params = derive_params(&spec)?;
        spec.maps.sort_by_key(|(g, _)| *g);
        let (n, m) = (spec.n as usize, spec.m as usize);
        let mut pair_index = vec![None; n * m];
        for (idx, (g, _)) in spec.maps.iter().enumerate() {
            pair_index[g.i as usize * m + g.j as usize] = Some(idx as u16);
        }
        let mut q_by_row = vec![None; m];
        for (j, qj) in &params.q {
            q_by_row[*j as usize] = Some(qj.clone());
        }
        let log_p = spec
            .maps
            .iter()
            .map(|(_, p)| ratio_to_f64(p).ln())
            .collect();
        let log_q = q_by_row
            .iter()
            .map(|q| q.as_ref().map_or(f64::NAN, |q| ratio_to_f64(q).ln()))
            .collect();

        let mut scale = BigUint::one();
        for (_, p) in &spec.maps {
            let d = p.denom().magnitude();
            scale = num_integer_lcm(&scale, d);
        }
        let scaled = |r: &BigRational| -> BigUint {
            let s = r * BigRational::from(BigInt::from(scale.clone()));
            debug_assert!(s.is_integer());
            s.to_integer().magnitude().clone()
        };
        let scaled_p = spec.maps.iter().map(|(_, p)| scaled(p)).collect();
        let scaled_q = q_by_row
            .iter()
            .map(|q| q.as_ref().map_or_else(BigUint::zero, scaled))
            .collect();

        Ok(Carpet {
            levels: LevelTable::new(spec.n, spec.m),
            spec,
            params,
            pair_index,
            q_by_row,
            log_p,
            log_q,
            scale,
            scaled_p,
            scaled_q,
        })
    }

    pub fn spec(&self) -> &CarpetSpec {
        &self.spec
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    pub fn n(&self) -> u32 {
        self.spec.n
    }

    pub fn m(&self) -> u32 {
        self.spec.m
    }

    pub fn ell(&self, k: usize) -> usize {
        self.levels.ell(k)
    }

    pub fn maps(&self) -> &[(DigitPair, BigRational)] {
        &self.spec.maps
    }

    pub fn map_index(&self, g: DigitPair) -> Option<usize> {
        let (i, j) = (g.i as usize, g.j as usize);
        if i >= self.spec.n as usize || j >= self.spec.m as usize {
            return None;
        }
        self.pair_index[i * self.spec.m as usize + j].map(usize::from)
    }

    pub fn has_row(&self, j: Digit) -> bool {
        self.q_by_row.get(j as usize).is_some_and(Option::is_some)
    }

    pub fn p(&self, g: DigitPair) -> Option<&BigRational> {
        self.map_index(g).map(|idx| &self.spec.maps[idx].1)
    }

    pub fn q(&self, j: Digit) -> Option<&BigRational> {
        self.q_by_row.get(j as usize).and_then(Option::as_ref)
    }

    pub fn columns(&self, j: Digit) -> &[Digit] {
        self.params.gx.get(&j).map_or(&[], Vec::as_slice)
    }

    pub fn rows(&self) -> &[Digit] {
        &self.params.gy
    }

    pub(crate) fn log_p_index(&self, idx: usize) -> f64 {
        self.log_p[idx]
    }

    pub(crate) fn log_p(&self, g: DigitPair) -> f64 {
        self.map_index(g).map_or(f64::NAN, |idx| self.log_p[idx])
    }

    pub(crate) fn log_q(&self, j: Digit) -> f64 {
        self.log_q[j as usize]
    }

    /// Exact mass of a word whose pairs and rows are given, as
    /// `prod(scaled weights) / scale^len`.
    pub(crate) fn exact_product(
        &self,
        pairs: impl Iterator<Item = DigitPair>,
        rows: impl Iterator<Item = Digit>,
    ) -> BigRational {
        let mut num = BigUint::one();
        let mut len = 0u32;
        for g in pairs {
            let idx = self.map_index(g).expect("pair validated on construction");
            num *= &self.scaled_p[idx];
            len += 1;
        }
        for j in rows {
            num *= &self.scaled_q[j as usize];
            len += 1;
        }
        BigRational::new(BigInt::from(num), BigInt::from(self.scale.pow(len)))
    }

    /// `eta^k` as an exact rational.
    pub fn eta_pow(&self, k: usize) -> BigRational {
        num_traits::pow(self.params.eta.clone(), k)
    }
}

fn num_integer_lcm(a: &BigUint, b: &BigUint) -> BigUint {
    use num_integer::Integer;
    a.lcm(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn carpet_a() -> CarpetSpec {
        CarpetSpec::uniform(4, 3, &[(0, 0), (0, 2), (2, 2)])
    }

    #[test]
    fn carpet_a_is_valid_and_separated() {
        let report = validate_spec(&carpet_a());
        assert!(report.is_valid(), "{:?}", report.errors());
        assert!(check_separation(&carpet_a()));
    }

    #[test]
    fn rows_above_columns_rejected() {
        let spec = CarpetSpec::uniform(3, 4, &[(0, 0), (2, 2)]);
        let err = spec.validate().unwrap_err();
        assert_eq!(err.invariant(), "n_ge_m");
        assert!(err.to_string().contains("n >= m required"));
    }

    #[test]
    fn unnormalized_mass_rejected() {
        let spec = CarpetSpec::new(
            4,
            3,
            vec![
                (DigitPair::new(0, 0), rat(1, 2)),
                (DigitPair::new(2, 2), rat(1, 3)),
            ],
        );
        let report = validate_spec(&spec);
        assert!(!report.is_valid());
        assert!(matches!(
            report.first_error(),
            Some(SpecError::MassNotOne(_))
        ));
    }

    #[test]
    fn single_map_rejected_but_vacuously_separated() {
        let spec = CarpetSpec::new(4, 3, vec![(DigitPair::new(0, 0), rat(1, 1))]);
        assert!(check_separation(&spec));
        let report = validate_spec(&spec);
        assert!(report
            .errors()
            .iter()
            .any(|e| matches!(e, SpecError::TooFewMaps(1))));
    }

    #[test]
    fn adjacent_columns_not_separated() {
        let spec = CarpetSpec::uniform(4, 3, &[(0, 0), (1, 0)]);
        assert!(!check_separation(&spec));
        assert!(validate_spec(&spec)
            .warnings
            .iter()
            .any(|w| w.contains("separation")));
    }

    #[test]
    fn out_of_range_digit_rejected() {
        let spec = CarpetSpec::uniform(4, 3, &[(0, 0), (4, 2)]);
        assert_eq!(spec.validate().unwrap_err().invariant(), "digit_bounds");
    }

    #[test]
    fn small_grid_warns_only() {
        let spec = CarpetSpec::uniform(4, 2, &[(0, 0), (2, 1)]);
        let report = validate_spec(&spec);
        assert!(report.is_valid());
        assert!(report.warnings.iter().any(|w| w.contains("< 3")));
    }

    #[test]
    fn carpet_a_constants() {
        let p = derive_params(&carpet_a()).unwrap();
        assert!((p.theta - 0.792_481_250_360_578).abs() < 1e-12);
        assert_eq!(p.q[&0], rat(1, 3));
        assert_eq!(p.q[&2], rat(2, 3));
        assert_eq!(p.eta, rat(1, 9));
        assert_eq!(p.gx[&2], vec![0, 2]);
        assert!((p.s0 - 0.912_713_497_619_028_4).abs() < 1e-12);
        assert!((p.s0 - p.s0_entropy_form(3)).abs() < 1e-12);
        let ln3 = 3f64.ln();
        assert!((p.c0 - 8.0 / 9.0 * ln3).abs() < 1e-12);
        assert!((p.c1 - 8.0 * ln3).abs() < 1e-12);
        assert!((p.ball_exponent - (1.0 - 2f64.ln() / ln3)).abs() < 1e-12);
        // 16 sqrt(17) = 65.97 -> floor(70.97) = 70, floor(68.97) = 68
        assert_eq!(p.a1, 70 * 70);
        assert_eq!(p.a2, 68 * 68);
        assert!(p.eta <= p.q_max);
    }

    #[test]
    fn level_table_matches_integer_definition() {
        let t = LevelTable::new(4, 3);
        assert_eq!(t.ell(1), 0);
        assert_eq!(t.ell(2), 1);
        assert_eq!(t.ell(4), 3);
        assert_eq!(t.ell(5), 3);
        let c = LevelTable::new(3, 3);
        assert!((1..50).all(|k| c.ell(k) == k));
        // beyond the precomputed table
        let big = 1500;
        let l = t.ell(big);
        let (n, m) = (BigUint::from(4u32), BigUint::from(3u32));
        assert!(n.pow(l as u32) <= m.pow(big as u32));
        assert!(m.pow(big as u32) < n.pow(l as u32 + 1));
    }

    #[test]
    fn resonant_pair_exact_levels() {
        // n = m^2: k * theta = k / 2 hits integers exactly
        let t = LevelTable::new(9, 3);
        for k in 1..200 {
            assert_eq!(t.ell(k), k / 2);
        }
    }
}
