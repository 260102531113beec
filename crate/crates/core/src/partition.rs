//! Words of the carpet alphabet, their approximate squares, and the
//! stopping-time partitions `Lambda_k`.
//!
//! A word of length `k` carries `l(k)` digit pairs followed by `k - l(k)`
//! row digits. It is stored as two digit strings: the column digits
//! `i_1..i_l` and the row digits `j_1..j_k`. Going to a child only ever
//! appends to these strings, which is what makes in-place depth-first
//! enumeration cheap.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::carpet::{ratio_to_f64, Carpet, Digit, DigitPair};
use crate::error::{CarpetError, Result};
use crate::sum::{mean_std, NeumaierSum};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CarpetWord {
    xs: Vec<Digit>,
    ys: Vec<Digit>,
}

impl CarpetWord {
    /// Builds a word from its pair prefix and row tail, checking that the
    /// prefix has exactly `l(k)` pairs and that every digit is admissible.
    pub fn new(carpet: &Carpet, pairs: &[DigitPair], tail: &[Digit]) -> Result<Self> {
        let len = pairs.len() + tail.len();
        if len == 0 {
            return Err(CarpetError::EmptyWord);
        }
        let expected = carpet.ell(len);
        if pairs.len() != expected {
            return Err(CarpetError::PairCount {
                pairs: pairs.len(),
                len,
                expected,
            });
        }
        if let Some(g) = pairs.iter().find(|g| carpet.map_index(**g).is_none()) {
            return Err(CarpetError::UnknownPair(*g));
        }
        if let Some(j) = tail.iter().find(|j| !carpet.has_row(**j)) {
            return Err(CarpetError::UnknownRow(*j));
        }
        let xs = pairs.iter().map(|g| g.i).collect();
        let ys = pairs
            .iter()
            .map(|g| g.j)
            .chain(tail.iter().copied())
            .collect();
        Ok(CarpetWord { xs, ys })
    }

    pub(crate) fn from_digits(xs: Vec<Digit>, ys: Vec<Digit>) -> Self {
        debug_assert!(xs.len() <= ys.len());
        CarpetWord { xs, ys }
    }

    /// Word length `k`.
    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// Number of digit pairs, `l(k)`.
    pub fn ell(&self) -> usize {
        self.xs.len()
    }

    pub fn pairs(&self) -> impl ExactSizeIterator<Item = DigitPair> + '_ {
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(&i, &j)| DigitPair::new(i, j))
    }

    pub fn tail(&self) -> &[Digit] {
        &self.ys[self.xs.len()..]
    }

    /// Column digits `i_1..i_l`.
    pub fn column_digits(&self) -> &[Digit] {
        &self.xs
    }

    /// Row digits `j_1..j_k`.
    pub fn row_digits(&self) -> &[Digit] {
        &self.ys
    }
}

impl fmt::Display for CarpetWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (h, g) in self.pairs().enumerate() {
            if h > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
        }
        f.write_str(")x(")?;
        for (h, j) in self.tail().iter().enumerate() {
            if h > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str(")")
    }
}

/// The length-`(k-1)` word whose approximate square contains `w`'s.
pub fn flat_predecessor(carpet: &Carpet, w: &CarpetWord) -> Result<CarpetWord> {
    let k = w.len();
    if k < 2 {
        return Err(CarpetError::NoPredecessor(k));
    }
    let mut xs = w.xs.clone();
    let mut ys = w.ys.clone();
    if carpet.ell(k - 1) < carpet.ell(k) {
        // last pair is demoted to its row digit
        xs.pop();
    }
    ys.pop();
    Ok(CarpetWord { xs, ys })
}

/// All words of length `k + 1` whose flat predecessor is `w`, in map order.
pub fn carpet_children(carpet: &Carpet, w: &CarpetWord) -> Vec<CarpetWord> {
    let k = w.len();
    let mut out = Vec::new();
    if carpet.ell(k + 1) == carpet.ell(k) {
        for &j in carpet.rows() {
            let mut ys = w.ys.clone();
            ys.push(j);
            out.push(CarpetWord::from_digits(w.xs.clone(), ys));
        }
    } else if w.xs.len() < w.ys.len() {
        let promoted = w.ys[w.xs.len()];
        for &i in carpet.columns(promoted) {
            for &j in carpet.rows() {
                let mut xs = w.xs.clone();
                xs.push(i);
                let mut ys = w.ys.clone();
                ys.push(j);
                out.push(CarpetWord::from_digits(xs, ys));
            }
        }
    } else {
        for (g, _) in carpet.maps() {
            let mut xs = w.xs.clone();
            xs.push(g.i);
            let mut ys = w.ys.clone();
            ys.push(g.j);
            out.push(CarpetWord::from_digits(xs, ys));
        }
    }
    out
}

/// The words of length 1.
pub fn root_words(carpet: &Carpet) -> Vec<CarpetWord> {
    if carpet.ell(1) == 0 {
        carpet
            .rows()
            .iter()
            .map(|&j| CarpetWord::from_digits(Vec::new(), vec![j]))
            .collect()
    } else {
        carpet
            .maps()
            .iter()
            .map(|(g, _)| CarpetWord::from_digits(vec![g.i], vec![g.j]))
            .collect()
    }
}

/// Exact `mu(F_w)`: product of the pair weights and the row masses of the tail.
pub fn word_mass(carpet: &Carpet, w: &CarpetWord) -> BigRational {
    carpet.exact_product(w.pairs(), w.tail().iter().copied())
}

pub fn log_word_mass(carpet: &Carpet, w: &CarpetWord) -> f64 {
    let pairs: f64 = w.pairs().map(|g| carpet.log_p(g)).sum();
    let tail: f64 = w.tail().iter().map(|&j| carpet.log_q(j)).sum();
    pairs + tail
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproxSquare {
    pub x_low: BigRational,
    pub y_low: BigRational,
    pub width: BigRational,
    pub height: BigRational,
    pub mass: BigRational,
    pub diameter: f64,
}

impl ApproxSquare {
    pub fn center(&self) -> [f64; 2] {
        let two = BigRational::from_integer(2.into());
        let cx = &self.x_low + &self.width / &two;
        let cy = &self.y_low + &self.height / two;
        [ratio_to_f64(&cx), ratio_to_f64(&cy)]
    }

    /// Whether the open rectangles intersect.
    pub fn interiors_overlap(&self, other: &ApproxSquare) -> bool {
        let x_hi = &self.x_low + &self.width;
        let ox_hi = &other.x_low + &other.width;
        let y_hi = &self.y_low + &self.height;
        let oy_hi = &other.y_low + &other.height;
        self.x_low < ox_hi && other.x_low < x_hi && self.y_low < oy_hi && other.y_low < y_hi
    }
}

fn digit_series(digits: &[Digit], base: u32) -> (BigUint, BigUint) {
    let b = BigUint::from(base);
    let mut num = BigUint::zero();
    for &d in digits {
        num = num * &b + BigUint::from(d);
    }
    (num, b.pow(digits.len() as u32))
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Geometry of `F_w` in exact arithmetic.
pub fn square_geometry(carpet: &Carpet, w: &CarpetWord) -> ApproxSquare {
    let (xn, xd) = digit_series(&w.xs, carpet.n());
    let (yn, yd) = digit_series(&w.ys, carpet.m());
    let width = ratio(BigUint::one(), xd.clone());
    let height = ratio(BigUint::one(), yd.clone());
    let (wf, hf) = (ratio_to_f64(&width), ratio_to_f64(&height));
    ApproxSquare {
        x_low: ratio(xn, xd),
        y_low: ratio(yn, yd),
        diameter: wf.hypot(hf),
        width,
        height,
        mass: word_mass(carpet, w),
    }
}

/// `(x_low, y_low, width, height)` in floating point.
pub fn square_bounds(carpet: &Carpet, w: &CarpetWord) -> [f64; 4] {
    let horner = |digits: &[Digit], base: f64| {
        digits
            .iter()
            .rev()
            .fold(0.0, |acc, &d| (acc + f64::from(d)) / base)
    };
    let (n, m) = (f64::from(carpet.n()), f64::from(carpet.m()));
    [
        horner(&w.xs, n),
        horner(&w.ys, m),
        n.powi(-(w.xs.len() as i32)),
        m.powi(-(w.ys.len() as i32)),
    ]
}

/// Exact check of `|F_w| <= sqrt(n^2 + 1) m^-k`, i.e. `m^2k <= n^(2l + 2)`,
/// together with the lower bound `sqrt(2) m^-k <= |F_w|`, i.e. `n^l <= m^k`.
pub fn diameter_bounds_hold(carpet: &Carpet, w: &CarpetWord) -> bool {
    let (n, m) = (BigUint::from(carpet.n()), BigUint::from(carpet.m()));
    let mk = m.pow(w.len() as u32);
    let nl = n.pow(w.ell() as u32);
    nl <= mk && &mk * &mk <= nl.pow(2) * n.pow(2)
}

/// `mu >= eta^k` is decided in floating point away from the boundary and
/// exactly inside a guard band around it.
struct Threshold {
    exact: BigRational,
    log: f64,
}

const LOG_GUARD: f64 = 1e-9;

impl Threshold {
    fn new(carpet: &Carpet, k: usize) -> Self {
        Threshold {
            exact: carpet.eta_pow(k),
            log: k as f64 * ratio_to_f64(&carpet.params().eta).ln(),
        }
    }

    fn below(&self, carpet: &Carpet, w: &CarpetWord, log_mass: f64) -> bool {
        if log_mass < self.log - LOG_GUARD {
            true
        } else if log_mass > self.log + LOG_GUARD {
            false
        } else {
            word_mass(carpet, w) < self.exact
        }
    }
}

/// Depth-first descent below `w` (which is at or above the threshold),
/// visiting every partition word in lexicographic map order.
fn descend<F>(
    carpet: &Carpet,
    th: &Threshold,
    w: &mut CarpetWord,
    log_mass: f64,
    visit: &mut F,
) -> ControlFlow<()>
where
    F: FnMut(&CarpetWord, f64) -> ControlFlow<()>,
{
    let k = w.len();
    let promote = carpet.ell(k + 1) > w.xs.len();
    let mut step = |w: &mut CarpetWord, child_log: f64| -> ControlFlow<()> {
        if th.below(carpet, w, child_log) {
            visit(w, child_log)
        } else {
            descend(carpet, th, w, child_log, visit)
        }
    };
    if !promote {
        for &j in carpet.rows() {
            w.ys.push(j);
            let r = step(w, log_mass + carpet.log_q(j));
            w.ys.pop();
            r?;
        }
    } else if w.xs.len() < w.ys.len() {
        let promoted = w.ys[w.xs.len()];
        let base = log_mass - carpet.log_q(promoted);
        for &i in carpet.columns(promoted) {
            let with_pair = base + carpet.log_p(DigitPair::new(i, promoted));
            w.xs.push(i);
            for &j in carpet.rows() {
                w.ys.push(j);
                let r = step(w, with_pair + carpet.log_q(j));
                w.ys.pop();
                if r.is_break() {
                    w.xs.pop();
                    return r;
                }
            }
            w.xs.pop();
        }
    } else {
        for (idx, (g, _)) in carpet.maps().iter().enumerate() {
            w.xs.push(g.i);
            w.ys.push(g.j);
            let r = step(w, log_mass + carpet.log_p_index(idx));
            w.xs.pop();
            w.ys.pop();
            r?;
        }
    }
    ControlFlow::Continue(())
}

fn check_level(k: usize) -> Result<()> {
    if k == 0 {
        return Err(CarpetError::LevelTooSmall { k, min: 1 });
    }
    Ok(())
}

/// Visits every word of `Lambda_k` in canonical order with its log-mass.
pub fn stream_lambda_k<F>(carpet: &Carpet, k: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&CarpetWord, f64),
{
    check_level(k)?;
    let th = Threshold::new(carpet, k);
    let mut v = |w: &CarpetWord, lm: f64| {
        visit(w, lm);
        ControlFlow::Continue(())
    };
    for mut root in root_words(carpet) {
        let lm = log_word_mass(carpet, &root);
        if th.below(carpet, &root, lm) {
            let _ = v(&root, lm);
        } else {
            let _ = descend(carpet, &th, &mut root, lm, &mut v);
        }
    }
    Ok(())
}

enum FrontierItem {
    Leaf(CarpetWord, f64),
    Subtree(CarpetWord, f64),
}

/// Number of independent subtrees the parallel walkers split into. Fixed so
/// that the reduction order never depends on the thread count.
const FRONTIER_TARGET: usize = 256;

fn frontier(carpet: &Carpet, th: &Threshold) -> Vec<FrontierItem> {
    let classify = |w: CarpetWord| {
        let lm = log_word_mass(carpet, &w);
        if th.below(carpet, &w, lm) {
            FrontierItem::Leaf(w, lm)
        } else {
            FrontierItem::Subtree(w, lm)
        }
    };
    let mut items: Vec<FrontierItem> = root_words(carpet).into_iter().map(classify).collect();
    loop {
        let open = items
            .iter()
            .filter(|it| matches!(it, FrontierItem::Subtree(..)))
            .count();
        if open == 0 || open >= FRONTIER_TARGET {
            return items;
        }
        items = items
            .into_iter()
            .flat_map(|it| match it {
                FrontierItem::Leaf(..) => vec![it],
                FrontierItem::Subtree(w, _) => carpet_children(carpet, &w)
                    .into_iter()
                    .map(classify)
                    .collect(),
            })
            .collect();
    }
}

/// Parallel fold over `Lambda_k`. Each subtree of a fixed frontier is folded
/// into its own accumulator; the accumulators are combined in canonical order,
/// so the result is independent of the worker count.
pub fn fold_lambda_k<A, I, F, R>(
    carpet: &Carpet,
    k: usize,
    init: I,
    fold: F,
    reduce: R,
) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &CarpetWord, f64) + Sync,
    R: Fn(A, A) -> A,
{
    check_level(k)?;
    let th = Threshold::new(carpet, k);
    let items = frontier(carpet, &th);
    let parts: Vec<A> = items
        .into_par_iter()
        .map(|item| {
            let mut acc = init();
            match item {
                FrontierItem::Leaf(w, lm) => fold(&mut acc, &w, lm),
                FrontierItem::Subtree(mut w, lm) => {
                    let _ = descend(carpet, &th, &mut w, lm, &mut |w, lm| {
                        fold(&mut acc, w, lm);
                        ControlFlow::Continue(())
                    });
                }
            }
            acc
        })
        .collect();
    Ok(parts.into_iter().reduce(reduce).unwrap_or_else(init))
}

/// A collected stopping-time partition.
#[derive(Clone, Debug)]
pub struct PartitionLambdaK {
    pub k: usize,
    pub eta_k: BigRational,
    pub words: Vec<CarpetWord>,
    /// Exact masses, parallel to `words`.
    pub masses: Vec<BigRational>,
    pub xi_min: usize,
    pub xi_max: usize,
}

impl PartitionLambdaK {
    pub fn phi_k(&self) -> usize {
        self.words.len()
    }

    pub fn mass_sum(&self) -> BigRational {
        exact_sum(&self.masses)
    }
}

/// Sum of rationals, grouped by denominator to keep the gcd work small.
pub fn exact_sum(values: &[BigRational]) -> BigRational {
    let mut by_den: HashMap<&BigInt, BigInt> = HashMap::new();
    for v in values {
        *by_den.entry(v.denom()).or_insert_with(BigInt::zero) += v.numer();
    }
    let mut groups: Vec<(&BigInt, BigInt)> = by_den.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(b.0));
    groups
        .into_iter()
        .map(|(d, n)| BigRational::new(n, d.clone()))
        .fold(BigRational::zero(), |a, b| a + b)
}

#[derive(Clone, Copy, Debug)]
pub struct EnumOptions {
    /// Collect mode refuses partitions larger than this.
    pub cap_words: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions {
            cap_words: 10_000_000,
        }
    }
}

/// Collects `Lambda_k` with exact masses.
pub fn enumerate_lambda_k(
    carpet: &Carpet,
    k: usize,
    opts: &EnumOptions,
) -> Result<PartitionLambdaK> {
    check_level(k)?;
    let th = Threshold::new(carpet, k);
    let items = frontier(carpet, &th);
    let count = AtomicUsize::new(0);
    let cap = opts.cap_words;
    let over = |count: &AtomicUsize| count.fetch_add(1, AtomicOrdering::Relaxed) >= cap;
    let parts: Vec<Option<Vec<CarpetWord>>> = items
        .into_par_iter()
        .map(|item| {
            let mut out = Vec::new();
            match item {
                FrontierItem::Leaf(w, _) => {
                    if over(&count) {
                        return None;
                    }
                    out.push(w);
                }
                FrontierItem::Subtree(mut w, lm) => {
                    let flow = descend(carpet, &th, &mut w, lm, &mut |w, _| {
                        if over(&count) {
                            return ControlFlow::Break(());
                        }
                        out.push(w.clone());
                        ControlFlow::Continue(())
                    });
                    if flow.is_break() {
                        return None;
                    }
                }
            }
            Some(out)
        })
        .collect();
    let mut words = Vec::new();
    for part in parts {
        match part {
            Some(p) => words.extend(p),
            None => return Err(CarpetError::ResourceLimit { cap }),
        }
    }
    let masses: Vec<BigRational> = words.par_iter().map(|w| word_mass(carpet, w)).collect();
    let xi_min = words.iter().map(CarpetWord::len).min().unwrap_or(0);
    let xi_max = words.iter().map(CarpetWord::len).max().unwrap_or(0);
    Ok(PartitionLambdaK {
        k,
        eta_k: th.exact,
        words,
        masses,
        xi_min,
        xi_max,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionStats {
    pub k: usize,
    pub phi_k: usize,
    pub xi_min: usize,
    pub xi_max: usize,
    pub mass_sum_is_one: bool,
    pub checks: Vec<BoundCheck>,
}

impl PartitionStats {
    pub fn all_passed(&self) -> bool {
        self.mass_sum_is_one && self.checks.iter().all(|c| c.passed)
    }
}

/// Verifies the counting and length bounds that every partition satisfies.
/// When the next level's partition size is given, also checks
/// `phi_k <= phi_{k+1} <= eta^-2 phi_k`.
pub fn partition_stats(
    carpet: &Carpet,
    lk: &PartitionLambdaK,
    next_phi: Option<usize>,
) -> PartitionStats {
    let p = carpet.params();
    let eta_k = &lk.eta_k;
    let phi = BigRational::from_integer(BigInt::from(lk.phi_k()));
    let mut checks = Vec::new();

    let lower = num_traits::pow(p.p_min.clone(), lk.xi_min);
    let upper = num_traits::pow(p.q_max.clone(), lk.xi_max.saturating_sub(1));
    checks.push(BoundCheck {
        name: "length_bounds",
        passed: lower < *eta_k && *eta_k <= upper,
        detail: format!(
            "p_min^{} < eta^{} <= q_max^{}",
            lk.xi_min,
            lk.k,
            lk.xi_max.saturating_sub(1)
        ),
    });

    let one = BigRational::one();
    let below = &phi * eta_k * &p.eta <= one;
    let above = one < &phi * eta_k;
    checks.push(BoundCheck {
        name: "count_bounds",
        passed: below && above,
        detail: format!(
            "phi_k eta^(k+1) <= 1 < phi_k eta^k with phi_k = {}",
            lk.phi_k()
        ),
    });

    if let Some(next) = next_phi {
        let growth = BigRational::from_integer(BigInt::from(next));
        let ceiling = &phi / (&p.eta * &p.eta);
        checks.push(BoundCheck {
            name: "growth_bounds",
            passed: lk.phi_k() <= next && growth <= ceiling,
            detail: format!(
                "phi_k = {} <= phi_(k+1) = {} <= eta^-2 phi_k",
                lk.phi_k(),
                next
            ),
        });
    }

    PartitionStats {
        k: lk.k,
        phi_k: lk.phi_k(),
        xi_min: lk.xi_min,
        xi_max: lk.xi_max,
        mass_sum_is_one: lk.mass_sum().is_one(),
        checks,
    }
}

/// Indices of words whose defining inequality `mu(w^flat) >= eta^k > mu(w)`
/// fails, or whose mass ratio to the flat predecessor leaves `[eta, q_max]`.
pub fn check_partition_words(carpet: &Carpet, lk: &PartitionLambdaK) -> Vec<usize> {
    let p = carpet.params();
    lk.words
        .par_iter()
        .zip(&lk.masses)
        .enumerate()
        .filter_map(|(idx, (w, mass))| {
            let ok = match flat_predecessor(carpet, w) {
                Ok(parent) => {
                    let pm = word_mass(carpet, &parent);
                    let r = mass / &pm;
                    pm >= lk.eta_k && *mass < lk.eta_k && r >= p.eta && r <= p.q_max
                }
                Err(_) => *mass < lk.eta_k,
            };
            (!ok).then_some(idx)
        })
        .collect()
}

/// Finds a pair of partition words whose open squares intersect, if any.
///
/// Two overlapping squares share their first `l_min` column digits and first
/// `k_min` row digits, so only words in the same coarse cell are compared.
pub fn find_overlapping_squares(carpet: &Carpet, lk: &PartitionLambdaK) -> Option<(usize, usize)> {
    let l_min = lk.words.iter().map(CarpetWord::ell).min().unwrap_or(0);
    let k_min = lk.xi_min;
    let mut cells: HashMap<(&[Digit], &[Digit]), Vec<usize>> = HashMap::new();
    for (idx, w) in lk.words.iter().enumerate() {
        cells
            .entry((&w.xs[..l_min], &w.ys[..k_min]))
            .or_default()
            .push(idx);
    }
    let mut buckets: Vec<Vec<usize>> = cells.into_values().collect();
    buckets.sort_unstable();
    buckets.par_iter().find_map_first(|bucket| {
        let squares: Vec<ApproxSquare> = bucket
            .iter()
            .map(|&i| square_geometry(carpet, &lk.words[i]))
            .collect();
        for a in 0..squares.len() {
            for b in a + 1..squares.len() {
                if squares[a].interiors_overlap(&squares[b]) {
                    return Some((bucket[a], bucket[b]));
                }
            }
        }
        None
    })
}

/// Draws digit pairs i.i.d. by their weights.
#[derive(Clone, Debug)]
pub struct DigitSampler {
    dist: WeightedIndex<f64>,
    pairs: Vec<DigitPair>,
    n: f64,
    m: f64,
}

impl DigitSampler {
    pub fn new(carpet: &Carpet) -> Self {
        let weights: Vec<f64> = carpet.maps().iter().map(|(_, p)| ratio_to_f64(p)).collect();
        DigitSampler {
            dist: WeightedIndex::new(weights).expect("validated weights are positive"),
            pairs: carpet.maps().iter().map(|(g, _)| *g).collect(),
            n: f64::from(carpet.n()),
            m: f64::from(carpet.m()),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DigitPair {
        self.pairs[self.dist.sample(rng)]
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<DigitPair>, depth: usize) {
        buf.clear();
        buf.extend((0..depth).map(|_| self.draw(rng)));
    }

    /// `(sum i_h n^-h, sum j_h m^-h)`, summed from the deepest digit up.
    pub fn point(&self, digits: &[DigitPair]) -> [f64; 2] {
        let (mut x, mut y) = (0.0, 0.0);
        for g in digits.iter().rev() {
            x = (x + f64::from(g.i)) / self.n;
            y = (y + f64::from(g.j)) / self.m;
        }
        [x, y]
    }
}

/// The shard RNG used by every sampler in the crate: one ChaCha stream per
/// shard, all derived from the same seed.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Draws a depth-`depth` address and returns the level-`depth` word whose
/// approximate square contains the sampled point.
pub fn sample_address<R: Rng + ?Sized>(
    carpet: &Carpet,
    depth: usize,
    rng: &mut R,
) -> Result<(CarpetWord, [f64; 2])> {
    if depth == 0 {
        return Err(CarpetError::Argument("sample depth must be >= 1".into()));
    }
    let sampler = DigitSampler::new(carpet);
    let mut digits = Vec::with_capacity(depth);
    sampler.fill(rng, &mut digits, depth);
    Ok(address_word(carpet, &sampler, &digits))
}

fn address_word(
    carpet: &Carpet,
    sampler: &DigitSampler,
    digits: &[DigitPair],
) -> (CarpetWord, [f64; 2]) {
    let l = carpet.ell(digits.len());
    let xs = digits[..l].iter().map(|g| g.i).collect();
    let ys = digits.iter().map(|g| g.j).collect();
    (CarpetWord::from_digits(xs, ys), sampler.point(digits))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LocalDimension {
    pub k: usize,
    pub samples: usize,
    pub mean: f64,
    pub stddev: f64,
}

const DIM_SHARD: usize = 4096;

/// Statistics of `log mu(F_{w(x,k)}) / (-k log m)` over sampled addresses `x`.
pub fn local_dimension_estimate(
    carpet: &Carpet,
    samples: usize,
    k: usize,
    seed: u64,
) -> Result<LocalDimension> {
    check_level(k)?;
    if samples == 0 {
        return Err(CarpetError::Argument("samples must be >= 1".into()));
    }
    let sampler = DigitSampler::new(carpet);
    let l = carpet.ell(k);
    let scale = -(k as f64) * f64::from(carpet.m()).ln();
    let shards = samples.div_ceil(DIM_SHARD);
    let values: Vec<f64> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|s| {
            let mut rng = shard_rng(seed, s as u64);
            let count = DIM_SHARD.min(samples - s * DIM_SHARD);
            let sampler = &sampler;
            let mut buf = Vec::with_capacity(k);
            (0..count)
                .map(|_| {
                    sampler.fill(&mut rng, &mut buf, k);
                    let mut acc = NeumaierSum::new();
                    for (h, g) in buf.iter().enumerate() {
                        acc += if h < l {
                            carpet.log_p(*g)
                        } else {
                            carpet.log_q(g.j)
                        };
                    }
                    acc.value() / scale
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let (mean, stddev) = mean_std(&values);
    Ok(LocalDimension {
        k,
        samples,
        mean,
        stddev,
    })
}

/// Canonical order of words: by length, then digits.
pub fn canonical_cmp(a: &CarpetWord, b: &CarpetWord) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carpet::CarpetSpec;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn carpet_a() -> Carpet {
        Carpet::new(CarpetSpec::uniform(4, 3, &[(0, 0), (0, 2), (2, 2)])).unwrap()
    }

    fn carpet_c() -> Carpet {
        Carpet::new(CarpetSpec::uniform(3, 3, &[(0, 0), (2, 2)])).unwrap()
    }

    fn dp(i: u8, j: u8) -> DigitPair {
        DigitPair::new(i, j)
    }

    #[test]
    fn constructor_enforces_pair_count() {
        let a = carpet_a();
        let err = CarpetWord::new(&a, &[dp(0, 0)], &[2, 0]).unwrap_err();
        assert!(matches!(err, CarpetError::PairCount { expected: 2, .. }));
        assert!(CarpetWord::new(&a, &[dp(1, 0)], &[2]).is_err());
        assert!(CarpetWord::new(&a, &[dp(0, 0)], &[1]).is_err());
    }

    #[test]
    fn flat_predecessor_demotes_last_pair() {
        let a = carpet_a();
        let w = CarpetWord::new(&a, &[dp(0, 0), dp(0, 2)], &[0]).unwrap();
        let f = flat_predecessor(&a, &w).unwrap();
        assert_eq!(f, CarpetWord::new(&a, &[dp(0, 0)], &[2]).unwrap());
        let c = carpet_c();
        let w = CarpetWord::new(&c, &[dp(0, 0), dp(2, 2)], &[]).unwrap();
        assert_eq!(
            flat_predecessor(&c, &w).unwrap(),
            CarpetWord::new(&c, &[dp(0, 0)], &[]).unwrap()
        );
        let root = CarpetWord::new(&a, &[], &[0]).unwrap();
        assert!(matches!(
            flat_predecessor(&a, &root),
            Err(CarpetError::NoPredecessor(1))
        ));
    }

    #[test]
    fn children_of_roots() {
        let a = carpet_a();
        let r0 = CarpetWord::new(&a, &[], &[0]).unwrap();
        let kids = carpet_children(&a, &r0);
        assert_eq!(
            kids,
            vec![
                CarpetWord::new(&a, &[dp(0, 0)], &[0]).unwrap(),
                CarpetWord::new(&a, &[dp(0, 0)], &[2]).unwrap(),
            ]
        );
        let r2 = CarpetWord::new(&a, &[], &[2]).unwrap();
        let kids = carpet_children(&a, &r2);
        assert_eq!(kids.len(), 4);
        assert!(kids.iter().all(|w| w.ell() == 1 && w.ys[0] == 2));
        for child in &kids {
            assert_eq!(flat_predecessor(&a, child).unwrap(), r2);
        }
    }

    #[test]
    fn masses_are_exact_products() {
        let a = carpet_a();
        let w = CarpetWord::new(&a, &[dp(0, 0)], &[2]).unwrap();
        assert_eq!(word_mass(&a, &w), rat(2, 9));
        let w = CarpetWord::new(&a, &[dp(0, 0), dp(0, 0)], &[0]).unwrap();
        assert_eq!(word_mass(&a, &w), rat(1, 27));
        let c = carpet_c();
        let w = CarpetWord::new(&c, &[dp(0, 0), dp(2, 2)], &[]).unwrap();
        assert_eq!(word_mass(&c, &w), rat(1, 4));
    }

    #[test]
    fn square_geometry_digit_series() {
        let a = carpet_a();
        let w = CarpetWord::new(&a, &[dp(0, 0)], &[2]).unwrap();
        let sq = square_geometry(&a, &w);
        assert_eq!(sq.x_low, rat(0, 1));
        assert_eq!(sq.y_low, rat(2, 9));
        assert_eq!(sq.width, rat(1, 4));
        assert_eq!(sq.height, rat(1, 9));
        let expected = (1.0f64 / 16.0 + 1.0 / 81.0).sqrt();
        assert!((sq.diameter - expected).abs() < 1e-15);
        assert!(2f64.sqrt() / 9.0 <= sq.diameter && sq.diameter <= 17f64.sqrt() / 9.0);
        assert!(diameter_bounds_hold(&a, &w));

        let root = CarpetWord::new(&a, &[], &[0]).unwrap();
        let sq = square_geometry(&a, &root);
        assert_eq!((sq.x_low.clone(), sq.width.clone()), (rat(0, 1), rat(1, 1)));
        assert_eq!(
            (sq.y_low.clone(), sq.height.clone()),
            (rat(0, 1), rat(1, 3))
        );
    }

    #[test]
    fn lambda_1_boundary_is_strict() {
        let a = carpet_a();
        let lk = enumerate_lambda_k(&a, 1, &EnumOptions::default()).unwrap();
        let inside = CarpetWord::new(&a, &[dp(0, 0), dp(0, 0)], &[0]).unwrap();
        let at_eta = CarpetWord::new(&a, &[dp(0, 0)], &[0]).unwrap();
        assert!(lk.words.contains(&inside));
        assert!(!lk.words.contains(&at_eta));
        assert!(lk.mass_sum().is_one());
    }

    #[test]
    fn cap_is_enforced() {
        let a = carpet_a();
        let err = enumerate_lambda_k(&a, 3, &EnumOptions { cap_words: 100 }).unwrap_err();
        assert!(matches!(err, CarpetError::ResourceLimit { cap: 100 }));
    }

    #[test]
    fn stream_and_collect_agree() {
        let a = carpet_a();
        let lk = enumerate_lambda_k(&a, 3, &EnumOptions::default()).unwrap();
        let mut streamed = Vec::new();
        stream_lambda_k(&a, 3, |w, _| streamed.push(w.clone())).unwrap();
        assert_eq!(streamed, lk.words);
        let folded = fold_lambda_k(
            &a,
            3,
            Vec::new,
            |acc, w, _| acc.push(w.clone()),
            |mut x, y| {
                x.extend(y);
                x
            },
        )
        .unwrap();
        assert_eq!(folded, lk.words);
    }

    #[test]
    fn sampled_points_stay_in_unit_square() {
        let a = carpet_a();
        let mut rng = shard_rng(7, 0);
        for _ in 0..200 {
            let (w, [x, y]) = sample_address(&a, 30, &mut rng).unwrap();
            assert_eq!(w.len(), 30);
            assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
            let [x0, y0, wd, ht] = square_bounds(&a, &w);
            assert!(x >= x0 - 1e-12 && x <= x0 + wd + 1e-12);
            assert!(y >= y0 - 1e-12 && y <= y0 + ht + 1e-12);
        }
        assert!(sample_address(&a, 0, &mut rng).is_err());
    }
}
