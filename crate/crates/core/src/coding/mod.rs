//! The product coding space `W = G^N x G_y^N`.
//!
//! A coding word `omega x rho` names the cylinder `[omega] x [rho]` and has
//! product mass `p_omega q_rho`. Words of `Phi*` carry exactly
//! `floor(len * theta)` pairs, where `len = |omega| + |rho|`.

pub mod antichain;
pub mod sequences;

use std::fmt;

use num_rational::BigRational;

use crate::carpet::{Carpet, Digit, DigitPair};
use crate::error::{CarpetError, Result};
use crate::partition::CarpetWord;

pub use antichain::{
    build_antichain, delta_k, length_weighted_mass, verify_maximal_antichain, xi_sequence,
    Antichain, AntichainOptions, AntichainReport, DeltaReport, FamilyRecord, StageLog,
};
pub use sequences::{
    compute_d_k, compute_s_k, compute_t, compute_u_k, sequence_point, stream_s_k, SequenceOptions,
    SequencePoint, StreamedEntropy,
};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodingWord {
    omega: Vec<DigitPair>,
    rho: Vec<Digit>,
}

impl CodingWord {
    /// Builds a word of `Phi*`, rejecting pair counts other than
    /// `floor(len * theta)` and digits outside `G` / `G_y`.
    pub fn new(carpet: &Carpet, omega: &[DigitPair], rho: &[Digit]) -> Result<Self> {
        let len = omega.len() + rho.len();
        if len == 0 {
            return Err(CarpetError::EmptyWord);
        }
        let expected = carpet.ell(len);
        if omega.len() != expected {
            return Err(CarpetError::PairCount {
                pairs: omega.len(),
                len,
                expected,
            });
        }
        if let Some(g) = omega.iter().find(|g| carpet.map_index(**g).is_none()) {
            return Err(CarpetError::UnknownPair(*g));
        }
        if let Some(j) = rho.iter().find(|j| !carpet.has_row(**j)) {
            return Err(CarpetError::UnknownRow(*j));
        }
        Ok(CodingWord {
            omega: omega.to_vec(),
            rho: rho.to_vec(),
        })
    }

    pub(crate) fn from_parts(omega: Vec<DigitPair>, rho: Vec<Digit>) -> Self {
        CodingWord { omega, rho }
    }

    pub fn omega(&self) -> &[DigitPair] {
        &self.omega
    }

    pub fn rho(&self) -> &[Digit] {
        &self.rho
    }

    /// `|omega| + |rho|`.
    pub fn total(&self) -> usize {
        self.omega.len() + self.rho.len()
    }

    /// The truncation of this word to length `t` inside `Phi*`: the unique
    /// word of length `t` that it descends from.
    pub fn truncate(&self, carpet: &Carpet, t: usize) -> CodingWord {
        let l = carpet.ell(t);
        CodingWord {
            omega: self.omega[..l].to_vec(),
            rho: self.rho[..t - l].to_vec(),
        }
    }

    /// Proper ancestors from length `total - 1` down to `1`.
    pub fn ancestors<'a>(&'a self, carpet: &'a Carpet) -> impl Iterator<Item = CodingWord> + 'a {
        (1..self.total())
            .rev()
            .map(move |t| self.truncate(carpet, t))
    }
}

impl fmt::Display for CodingWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (h, g) in self.omega.iter().enumerate() {
            if h > 0 {
                f.write_str(",")?;
            }
            write!(f, "{g}")?;
        }
        f.write_str(")x(")?;
        for (h, j) in self.rho.iter().enumerate() {
            if h > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        f.write_str(")")
    }
}

/// Splits a carpet word into its pair prefix and row tail.
pub fn l_map(w: &CarpetWord) -> CodingWord {
    CodingWord {
        omega: w.pairs().collect(),
        rho: w.tail().to_vec(),
    }
}

pub fn l_inverse(carpet: &Carpet, w: &CodingWord) -> Result<CarpetWord> {
    CarpetWord::new(carpet, &w.omega, &w.rho)
}

/// `lambda([omega x rho]) = p_omega q_rho`, exact.
pub fn lambda_mass(carpet: &Carpet, w: &CodingWord) -> BigRational {
    carpet.exact_product(w.omega.iter().copied(), w.rho.iter().copied())
}

pub fn log_lambda_mass(carpet: &Carpet, w: &CodingWord) -> f64 {
    let a: f64 = w.omega.iter().map(|g| carpet.log_p(*g)).sum();
    let b: f64 = w.rho.iter().map(|&j| carpet.log_q(j)).sum();
    a + b
}

/// Drops the last row digit when `l(len) = l(len - 1)`, else the last pair.
pub fn coding_predecessor(carpet: &Carpet, w: &CodingWord) -> Result<CodingWord> {
    let len = w.total();
    if len < 2 {
        return Err(CarpetError::NoPredecessor(len));
    }
    Ok(w.truncate(carpet, len - 1))
}

/// `a` precedes `b`: both components of `a` are prefixes of those of `b`.
pub fn is_descendant(a: &CodingWord, b: &CodingWord) -> bool {
    a.omega.len() <= b.omega.len()
        && a.rho.len() <= b.rho.len()
        && b.omega.starts_with(&a.omega)
        && b.rho.starts_with(&a.rho)
}

pub fn comparable(a: &CodingWord, b: &CodingWord) -> bool {
    is_descendant(a, b) || is_descendant(b, a)
}

/// Replaces the final pair `(i_l, j_l)` by `(i, j_last)` and the final row
/// digit `j_last` by `j_l`, where `j_last` is the last digit of `rho`.
pub fn swap_tail(carpet: &Carpet, w: &CodingWord, i: Digit) -> Result<CodingWord> {
    let last_pair = *w
        .omega
        .last()
        .ok_or(CarpetError::SwapShape("empty pair prefix"))?;
    let j_last = *w
        .rho
        .last()
        .ok_or(CarpetError::SwapShape("empty row tail"))?;
    if !carpet.columns(j_last).contains(&i) {
        return Err(CarpetError::NotInColumn { i, j: j_last });
    }
    let mut omega = w.omega.clone();
    let mut rho = w.rho.clone();
    *omega.last_mut().expect("nonempty") = DigitPair::new(i, j_last);
    *rho.last_mut().expect("nonempty") = last_pair.j;
    Ok(CodingWord { omega, rho })
}

/// Every word of `Phi_k`, in path order. Fails once more than `cap` words
/// would be produced.
pub fn phi_k_words(carpet: &Carpet, k: usize, cap: usize) -> Result<Vec<CodingWord>> {
    if k == 0 {
        return Err(CarpetError::EmptyWord);
    }
    let l = carpet.ell(k);
    let count = (carpet.maps().len() as f64).powi(l as i32)
        * (carpet.rows().len() as f64).powi((k - l) as i32);
    if count > cap as f64 {
        return Err(CarpetError::ResourceLimit { cap });
    }
    let mut words = vec![CodingWord::from_parts(Vec::new(), Vec::new())];
    for t in 1..=k {
        let pair_step = carpet.ell(t) > carpet.ell(t - 1);
        words = words
            .into_iter()
            .flat_map(|w| {
                let next: Vec<CodingWord> = if pair_step {
                    carpet
                        .maps()
                        .iter()
                        .map(|(g, _)| {
                            let mut c = w.clone();
                            c.omega.push(*g);
                            c
                        })
                        .collect()
                } else {
                    carpet
                        .rows()
                        .iter()
                        .map(|&j| {
                            let mut c = w.clone();
                            c.rho.push(j);
                            c
                        })
                        .collect()
                };
                next
            })
            .collect();
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carpet::CarpetSpec;
    use crate::partition::{enumerate_lambda_k, word_mass, EnumOptions};
    use num_traits::One;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn dp(i: u8, j: u8) -> DigitPair {
        DigitPair::new(i, j)
    }

    fn carpet_a() -> Carpet {
        Carpet::new(CarpetSpec::uniform(4, 3, &[(0, 0), (0, 2), (2, 2)])).unwrap()
    }

    fn carpet_c() -> Carpet {
        Carpet::new(CarpetSpec::uniform(3, 3, &[(0, 0), (2, 2)])).unwrap()
    }

    #[test]
    fn l_map_round_trip_and_mass() {
        let a = carpet_a();
        let lk = enumerate_lambda_k(&a, 2, &EnumOptions::default()).unwrap();
        for (w, mu) in lk.words.iter().zip(&lk.masses) {
            let c = l_map(w);
            assert_eq!(c.total(), w.len());
            assert_eq!(&l_inverse(&a, &c).unwrap(), w);
            assert_eq!(&lambda_mass(&a, &c), mu);
        }
        let w = CodingWord::new(&a, &[dp(0, 0)], &[2]).unwrap();
        assert_eq!(lambda_mass(&a, &w), rat(2, 9));
    }

    #[test]
    fn lambda_of_pure_pair_word() {
        let c = carpet_c();
        let w = CodingWord::new(&c, &[dp(0, 0), dp(2, 2)], &[]).unwrap();
        assert_eq!(lambda_mass(&c, &w), rat(1, 4));
        let a = carpet_a();
        assert!(CodingWord::new(&a, &[dp(0, 0), dp(2, 2)], &[]).is_err());
    }

    #[test]
    fn predecessor_drops_pair_or_digit() {
        let a = carpet_a();
        let w = CodingWord::new(&a, &[dp(0, 0), dp(2, 2)], &[0]).unwrap();
        assert_eq!(
            coding_predecessor(&a, &w).unwrap(),
            CodingWord::new(&a, &[dp(0, 0)], &[0]).unwrap()
        );
        assert!(CodingWord::new(&a, &[dp(0, 0)], &[0, 0]).is_err());
        let c = carpet_c();
        let w = CodingWord::new(&c, &[dp(0, 0), dp(2, 2)], &[]).unwrap();
        assert_eq!(
            coding_predecessor(&c, &w).unwrap(),
            CodingWord::new(&c, &[dp(0, 0)], &[]).unwrap()
        );
        let root = CodingWord::new(&a, &[], &[2]).unwrap();
        assert!(coding_predecessor(&a, &root).is_err());
    }

    #[test]
    fn overlap_phenomenon() {
        let a = carpet_a();
        let s1 = CarpetWord::new(&a, &[dp(0, 0)], &[0]).unwrap();
        let s2 = CarpetWord::new(&a, &[dp(0, 0), dp(0, 0)], &[0]).unwrap();
        assert!(is_descendant(&l_map(&s1), &l_map(&s2)));
        assert!(!is_descendant(&l_map(&s2), &l_map(&s1)));
    }

    #[test]
    fn same_length_words_are_incomparable() {
        let a = carpet_a();
        let u = CodingWord::new(&a, &[dp(0, 0)], &[0]).unwrap();
        let v = CodingWord::new(&a, &[dp(0, 0)], &[2]).unwrap();
        assert!(!comparable(&u, &v));
        assert!(is_descendant(&u, &u));
    }

    #[test]
    fn swap_tail_interchanges_digits() {
        let a = carpet_a();
        let w = CodingWord::new(&a, &[dp(0, 0), dp(0, 0), dp(2, 2)], &[2, 0]).unwrap();
        let s = swap_tail(&a, &w, 0).unwrap();
        assert_eq!(
            s,
            CodingWord::new(&a, &[dp(0, 0), dp(0, 0), dp(0, 0)], &[2, 2]).unwrap()
        );
        assert!(matches!(
            swap_tail(&a, &w, 2),
            Err(CarpetError::NotInColumn { i: 2, j: 0 })
        ));

        // family masses agree: sum over G_x(2) before, over G_x(0) after
        let before: BigRational = [0u8, 2]
            .iter()
            .map(|&i| {
                let f = CodingWord::new(&a, &[dp(0, 0), dp(0, 0), dp(i, 2)], &[2, 0]).unwrap();
                lambda_mass(&a, &f)
            })
            .sum();
        let after = lambda_mass(&a, &s);
        assert_eq!(before, rat(4, 243));
        assert_eq!(before, after);

        let same = CodingWord::new(&a, &[dp(0, 0), dp(0, 0), dp(0, 2)], &[2, 2]).unwrap();
        assert_eq!(swap_tail(&a, &same, 0).unwrap(), same);
        let no_tail = CodingWord::new(&carpet_c(), &[dp(0, 0)], &[]).unwrap();
        assert!(matches!(
            swap_tail(&carpet_c(), &no_tail, 0),
            Err(CarpetError::SwapShape(_))
        ));
    }

    #[test]
    fn lambda_agrees_with_mu_on_lambda_3() {
        let a = carpet_a();
        let lk = enumerate_lambda_k(&a, 3, &EnumOptions::default()).unwrap();
        assert!(lk
            .words
            .iter()
            .all(|w| lambda_mass(&a, &l_map(w)) == word_mass(&a, w)));
        let total: BigRational = lk.words.iter().map(|w| lambda_mass(&a, &l_map(w))).sum();
        assert!(total.is_one());
    }
}
