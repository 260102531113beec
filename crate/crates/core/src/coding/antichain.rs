//! Repairing `L(Lambda_k)` into a finite maximal antichain by staged
//! digit-interchange replacements.
//!
//! Internally every word of `Phi*` is stored as its path: the sequence of
//! steps from the empty word, one symbol per unit of length. A step that adds
//! a pair is encoded by the map index, a step that adds a row digit `j` by
//! `|G| + j`. Because a word of `Phi*` descends from exactly one word of each
//! shorter length, `a` precedes `b` iff the path of `a` is a prefix of the
//! path of `b`.

use std::collections::{BTreeMap, HashSet};

use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::Serialize;

use super::{lambda_mass, log_lambda_mass, swap_tail, CodingWord};
use crate::carpet::{Carpet, Digit};
use crate::error::{CarpetError, Result};
use crate::partition::{exact_sum, PartitionLambdaK};
use crate::sum::NeumaierSum;

type Path = Box<[u16]>;

pub(crate) fn encode(carpet: &Carpet, w: &CodingWord) -> Path {
    let g = carpet.maps().len() as u16;
    let mut path = Vec::with_capacity(w.total());
    let mut prev = 0;
    for t in 1..=w.total() {
        let l = carpet.ell(t);
        if l > prev {
            let idx = carpet.map_index(w.omega[l - 1]).expect("pair in G");
            path.push(idx as u16);
        } else {
            path.push(g + u16::from(w.rho[t - l - 1]));
        }
        prev = l;
    }
    path.into_boxed_slice()
}

pub(crate) fn decode(carpet: &Carpet, path: &[u16]) -> CodingWord {
    let g = carpet.maps().len() as u16;
    let mut omega = Vec::new();
    let mut rho = Vec::new();
    for &s in path {
        if s < g {
            omega.push(carpet.maps()[s as usize].0);
        } else {
            rho.push((s - g) as Digit);
        }
    }
    CodingWord::from_parts(omega, rho)
}

/// `xi_1 = lo` and `xi_(j+1)` is the first length in `(xi_j, hi]` whose pair
/// count is one more than that of `xi_j`.
pub fn xi_sequence(carpet: &Carpet, lo: usize, hi: usize) -> Vec<usize> {
    let mut xi = vec![lo];
    let mut h = lo;
    while h < hi {
        h += 1;
        if carpet.ell(h) == carpet.ell(*xi.last().expect("nonempty")) + 1 {
            xi.push(h);
        }
    }
    xi
}

#[derive(Clone, Copy, Debug)]
pub struct AntichainOptions {
    /// Family records keep their member words only up to this level.
    pub word_log_max_k: usize,
}

impl Default for AntichainOptions {
    fn default() -> Self {
        AntichainOptions { word_log_max_k: 4 }
    }
}

/// One replaced sibling family `F` and its replacement `G`.
#[derive(Clone, Debug, Serialize)]
pub struct FamilyRecord {
    pub length: usize,
    pub f_count: usize,
    pub g_count: usize,
    /// Common mass of `F` and `G`.
    #[serde(serialize_with = "ser_ratio")]
    pub mass: BigRational,
    /// `sum lambda log lambda` over `F`.
    pub f_entropy: f64,
    /// `sum lambda log lambda` over `G`.
    pub g_entropy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replacements: Option<Vec<String>>,
}

fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct StageLog {
    pub stage: usize,
    /// `xi_(l+1)`, the length of every replaced word.
    pub length: usize,
    /// Members of the current set with length in `[xi_1, xi_(l+1) - 1]`.
    pub gamma_count: usize,
    pub f_count: usize,
    pub g_count: usize,
    pub families: Vec<FamilyRecord>,
}

#[derive(Clone, Debug)]
pub struct Antichain {
    pub k: usize,
    pub words: Vec<CodingWord>,
    pub masses: Vec<BigRational>,
    pub xi: Vec<usize>,
    pub stages: Vec<StageLog>,
    pub l_min: usize,
    pub l_max: usize,
}

impl Antichain {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn mass_sum(&self) -> BigRational {
        exact_sum(&self.masses)
    }

    /// `sum lambda |w|`, the exact part of `sum lambda log m^-|w|`.
    pub fn length_weighted_mass(&self) -> BigRational {
        length_weighted_mass(&self.words, &self.masses)
    }
}

pub fn length_weighted_mass(words: &[CodingWord], masses: &[BigRational]) -> BigRational {
    let mut by_len: BTreeMap<usize, Vec<BigRational>> = BTreeMap::new();
    for (w, m) in words.iter().zip(masses) {
        by_len.entry(w.total()).or_default().push(m.clone());
    }
    by_len
        .into_iter()
        .map(|(len, ms)| exact_sum(&ms) * BigRational::from_integer(len.into()))
        .fold(BigRational::zero(), |a, b| a + b)
}

fn entropy_term(carpet: &Carpet, w: &CodingWord) -> f64 {
    let lm = log_lambda_mass(carpet, w);
    lm.exp() * lm
}

/// Runs the staged construction on `Lambda_k`.
///
/// Fails if a sibling family is incomplete, if a replacement word collides
/// with a word already present, or if a replacement violates
/// `lambda(g) < eta^k <= lambda(g^-)`.
pub fn build_antichain(
    carpet: &Carpet,
    lk: &PartitionLambdaK,
    opts: &AntichainOptions,
) -> Result<Antichain> {
    let k = lk.k;
    let eta_k = &lk.eta_k;
    let keep_words = k <= opts.word_log_max_k;
    let xi = xi_sequence(carpet, lk.xi_min, lk.xi_max);

    let mut set: HashSet<Path> = lk
        .words
        .iter()
        .map(|w| encode(carpet, &super::l_map(w)))
        .collect();
    if set.len() != lk.words.len() {
        return Err(CarpetError::Invariant(
            "L is not injective on Lambda_k".into(),
        ));
    }

    let mut stages = Vec::new();
    for l in 1..xi.len() {
        let len = xi[l];
        let (lo, hi) = (xi[0], len - 1);
        let gamma_count = set.iter().filter(|p| (lo..=hi).contains(&p.len())).count();
        let mut candidates: Vec<&Path> = set.iter().filter(|p| p.len() == len).collect();
        candidates.sort_unstable();
        let f_paths: Vec<Path> = candidates
            .par_iter()
            .filter(|p| (lo..=hi).any(|t| set.contains(&p[..t])))
            .map(|p| (*p).clone())
            .collect();

        // sibling families: same word up to the column digit of the last pair
        let mut families: BTreeMap<(Vec<_>, Digit, Vec<Digit>), Vec<CodingWord>> = BTreeMap::new();
        for p in &f_paths {
            let w = decode(carpet, p);
            let last = *w
                .omega
                .last()
                .ok_or_else(|| CarpetError::Invariant(format!("replaced word {w} has no pairs")))?;
            let key = (w.omega[..w.omega.len() - 1].to_vec(), last.j, w.rho.clone());
            families.entry(key).or_default().push(w);
        }
        for p in &f_paths {
            set.remove(p);
        }

        let mut records = Vec::with_capacity(families.len());
        let mut g_count = 0;
        for ((_, j_l, _), mut members) in families {
            let expected = carpet.columns(j_l).len();
            members.sort_by_key(|w| w.omega.last().expect("checked").i);
            if members.len() != expected {
                return Err(CarpetError::IncompleteFamily {
                    word: members[0].to_string(),
                    found: members.len(),
                    expected,
                });
            }
            let rep = &members[0];
            let j_last = *rep
                .rho
                .last()
                .ok_or(CarpetError::SwapShape("empty row tail"))?;
            let replacements: Vec<CodingWord> = carpet
                .columns(j_last)
                .iter()
                .map(|&i| swap_tail(carpet, rep, i))
                .collect::<Result<_>>()?;

            let f_mass: BigRational = members.iter().map(|w| lambda_mass(carpet, w)).sum();
            let mut g_mass = BigRational::zero();
            for g in &replacements {
                let path = encode(carpet, g);
                let mass = lambda_mass(carpet, g);
                let parent = lambda_mass(carpet, &g.truncate(carpet, g.total() - 1));
                if !(mass < *eta_k && *eta_k <= parent) {
                    return Err(CarpetError::Invariant(format!(
                        "replacement {g} violates lambda(g) < eta^{k} <= lambda(g^-)"
                    )));
                }
                if !set.insert(path) {
                    return Err(CarpetError::Collision(g.to_string()));
                }
                g_mass += mass;
            }
            if f_mass != g_mass {
                return Err(CarpetError::Invariant(format!(
                    "family of {rep} changes mass from {f_mass} to {g_mass}"
                )));
            }
            g_count += replacements.len();
            records.push(FamilyRecord {
                length: len,
                f_count: members.len(),
                g_count: replacements.len(),
                mass: f_mass,
                f_entropy: members
                    .iter()
                    .map(|w| entropy_term(carpet, w))
                    .sum::<NeumaierSum>()
                    .value(),
                g_entropy: replacements
                    .iter()
                    .map(|w| entropy_term(carpet, w))
                    .sum::<NeumaierSum>()
                    .value(),
                members: keep_words.then(|| members.iter().map(ToString::to_string).collect()),
                replacements: keep_words
                    .then(|| replacements.iter().map(ToString::to_string).collect()),
            });
        }
        stages.push(StageLog {
            stage: l,
            length: len,
            gamma_count,
            f_count: f_paths.len(),
            g_count,
            families: records,
        });
    }

    let mut paths: Vec<Path> = set.into_iter().collect();
    paths.sort_unstable();
    let words: Vec<CodingWord> = paths.iter().map(|p| decode(carpet, p)).collect();
    let masses: Vec<BigRational> = words.par_iter().map(|w| lambda_mass(carpet, w)).collect();
    if let Some(w) = words.iter().zip(&masses).find(|(_, m)| *m >= eta_k) {
        return Err(CarpetError::Invariant(format!(
            "word {} has mass at least eta^{k}",
            w.0
        )));
    }
    let l_min = paths.iter().map(|p| p.len()).min().unwrap_or(0);
    let l_max = paths.iter().map(|p| p.len()).max().unwrap_or(0);
    Ok(Antichain {
        k,
        words,
        masses,
        xi,
        stages,
        l_min,
        l_max,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AntichainReport {
    pub word_count: usize,
    pub incomparable: bool,
    /// A comparable pair `(ancestor, descendant)`, if any.
    pub violation: Option<(String, String)>,
    #[serde(serialize_with = "ser_ratio")]
    pub mass_sum: BigRational,
    pub mass_is_one: bool,
}

impl AntichainReport {
    pub fn is_maximal(&self) -> bool {
        self.incomparable && self.mass_is_one
    }
}

/// Pairwise incomparability plus exact unit mass.
///
/// After sorting the paths, any word that precedes another is immediately
/// followed by one of its descendants, so adjacent pairs suffice.
pub fn verify_maximal_antichain(carpet: &Carpet, words: &[CodingWord]) -> AntichainReport {
    let mut paths: Vec<Path> = words.par_iter().map(|w| encode(carpet, w)).collect();
    paths.par_sort_unstable();
    let violation = paths
        .windows(2)
        .find(|ab| ab[1].starts_with(&ab[0]))
        .map(|ab| {
            (
                decode(carpet, &ab[0]).to_string(),
                decode(carpet, &ab[1]).to_string(),
            )
        });
    let masses: Vec<BigRational> = words.par_iter().map(|w| lambda_mass(carpet, w)).collect();
    let mass_sum = exact_sum(&masses);
    AntichainReport {
        word_count: words.len(),
        incomparable: violation.is_none(),
        violation,
        mass_is_one: mass_sum.is_one(),
        mass_sum,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeltaReport {
    pub k: usize,
    /// `|sum over the antichain - sum over L(Lambda_k)|` of `lambda log lambda`.
    pub delta: f64,
    pub c1: f64,
    pub within_c1: bool,
    /// Largest `|F term - G term| / lambda(F)` over all families.
    pub worst_family_ratio: f64,
    pub families_within_c1: bool,
}

/// `Delta_k` from the stage log, family by family.
pub fn delta_k(carpet: &Carpet, a: &Antichain) -> DeltaReport {
    let c1 = carpet.params().c1;
    let mut total = NeumaierSum::new();
    let mut worst: f64 = 0.0;
    for fam in a.stages.iter().flat_map(|s| &s.families) {
        let diff = fam.g_entropy - fam.f_entropy;
        total += diff;
        let mass = crate::carpet::ratio_to_f64(&fam.mass);
        worst = worst.max(diff.abs() / mass);
    }
    let delta = total.value().abs();
    DeltaReport {
        k: a.k,
        delta,
        c1,
        within_c1: delta <= c1,
        worst_family_ratio: worst,
        families_within_c1: worst <= c1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carpet::{CarpetSpec, DigitPair};
    use crate::coding::{is_descendant, l_map, phi_k_words};
    use crate::partition::{enumerate_lambda_k, EnumOptions};

    fn carpet_a() -> Carpet {
        Carpet::new(CarpetSpec::uniform(4, 3, &[(0, 0), (0, 2), (2, 2)])).unwrap()
    }

    fn carpet_c() -> Carpet {
        Carpet::new(CarpetSpec::uniform(3, 3, &[(0, 0), (2, 2)])).unwrap()
    }

    fn build(c: &Carpet, k: usize) -> (PartitionLambdaK, Antichain) {
        let lk = enumerate_lambda_k(c, k, &EnumOptions::default()).unwrap();
        let a = build_antichain(c, &lk, &AntichainOptions::default()).unwrap();
        (lk, a)
    }

    fn quadratic_incomparable(words: &[CodingWord]) -> bool {
        for (x, a) in words.iter().enumerate() {
            for b in &words[x + 1..] {
                if is_descendant(a, b) || is_descendant(b, a) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn path_round_trip() {
        let a = carpet_a();
        let w = CodingWord::new(&a, &[DigitPair::new(0, 0), DigitPair::new(2, 2)], &[0]).unwrap();
        let p = encode(&a, &w);
        assert_eq!(p.len(), 3);
        assert_eq!(decode(&a, &p), w);
        let parent = encode(&a, &w.truncate(&a, 2));
        assert!(p.starts_with(&parent));
    }

    #[test]
    fn xi_steps_by_one_pair() {
        let a = carpet_a();
        assert_eq!(xi_sequence(&a, 5, 6), vec![5, 6]);
        assert_eq!(xi_sequence(&a, 4, 4), vec![4]);
        let xi = xi_sequence(&a, 3, 20);
        for w in xi.windows(2) {
            assert_eq!(a.ell(w[1]), a.ell(w[0]) + 1);
            assert!((1..=2).contains(&(w[1] - w[0])));
        }
    }

    #[test]
    fn carpet_a_level_2_stage_counts() {
        let a = carpet_a();
        let (lk, ac) = build(&a, 2);
        assert_eq!(ac.xi, vec![5, 6]);
        assert_eq!(ac.stages.len(), 1);
        let s = &ac.stages[0];
        assert_eq!((s.f_count, s.g_count, s.families.len()), (54, 27, 27));
        assert_eq!(ac.len(), lk.phi_k() - 27);
        let report = verify_maximal_antichain(&a, &ac.words);
        assert!(report.is_maximal(), "{report:?}");
        assert!(quadratic_incomparable(&ac.words));
        let d = delta_k(&a, &ac);
        assert!((d.delta - 0.1027).abs() < 1e-3, "{}", d.delta);
        assert!(d.within_c1 && d.families_within_c1);
        assert!(s.families[0].members.is_some());
    }

    #[test]
    fn uniform_lengths_run_no_stages() {
        let c = carpet_c();
        let (lk, ac) = build(&c, 3);
        assert_eq!(ac.xi.len(), 1);
        assert!(ac.stages.is_empty());
        let mut raw: Vec<_> = lk.words.iter().map(l_map).collect();
        raw.sort();
        assert_eq!(raw, ac.words);
        assert_eq!(delta_k(&c, &ac).delta, 0.0);
    }

    #[test]
    fn raw_image_can_fail_incomparability() {
        let a = carpet_a();
        let lk = enumerate_lambda_k(&a, 2, &EnumOptions::default()).unwrap();
        let raw: Vec<_> = lk.words.iter().map(l_map).collect();
        let report = verify_maximal_antichain(&a, &raw);
        assert!(!report.incomparable);
        assert!(report.mass_is_one);
        assert!(!quadratic_incomparable(&raw));
    }

    #[test]
    fn phi_k_is_maximal() {
        let a = carpet_a();
        for k in 1..=4 {
            let words = phi_k_words(&a, k, 1_000_000).unwrap();
            assert!(verify_maximal_antichain(&a, &words).is_maximal());
        }
    }

    #[test]
    fn sorted_check_matches_quadratic_oracle() {
        let a = carpet_a();
        for k in 2..=3 {
            let (lk, ac) = build(&a, k);
            assert!(quadratic_incomparable(&ac.words));
            assert!(verify_maximal_antichain(&a, &ac.words).incomparable);
            let mut raw: Vec<_> = lk.words.iter().map(l_map).collect();
            raw.truncate(400);
            assert_eq!(
                verify_maximal_antichain(&a, &raw).incomparable,
                quadratic_incomparable(&raw)
            );
        }
    }

    #[test]
    fn length_weighted_mass_is_preserved() {
        let a = carpet_a();
        for k in 2..=4 {
            let (lk, ac) = build(&a, k);
            let raw: Vec<_> = lk.words.iter().map(l_map).collect();
            assert_eq!(
                ac.length_weighted_mass(),
                length_weighted_mass(&raw, &lk.masses)
            );
            assert!(ac.mass_sum().is_one());
        }
    }

    #[test]
    fn word_logs_dropped_above_threshold() {
        let a = carpet_a();
        let lk = enumerate_lambda_k(&a, 2, &EnumOptions::default()).unwrap();
        let ac = build_antichain(&a, &lk, &AntichainOptions { word_log_max_k: 1 }).unwrap();
        assert!(ac.stages[0].families[0].members.is_none());
    }
}
