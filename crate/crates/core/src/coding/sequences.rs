//! The entropy-to-scale ratios `d_k` (over `Phi_k`), `t` (over an antichain)
//! and `s_k` (over `Lambda_k`), with their explicit distance bounds to `s0`.

use serde::Serialize;

use super::antichain::{build_antichain, AntichainOptions};
use super::{log_lambda_mass, CodingWord};
use crate::carpet::Carpet;
use crate::error::Result;
use crate::partition::{enumerate_lambda_k, fold_lambda_k, EnumOptions, PartitionLambdaK};
use crate::sum::NeumaierSum;

/// `U_k = sum over Phi_k of lambda log lambda`, in closed form.
pub fn compute_u_k(carpet: &Carpet, k: usize) -> f64 {
    let p = carpet.params();
    let l = carpet.ell(k) as f64;
    -(l * p.hp + (k as f64 - l) * p.hq)
}

pub fn compute_d_k(carpet: &Carpet, k: usize) -> f64 {
    let log_m = f64::from(carpet.m()).ln();
    compute_u_k(carpet, k) / (-(k as f64) * log_m)
}

/// `sum lambda log lambda / sum lambda log m^-|w|` over a set of words.
pub fn compute_t(carpet: &Carpet, words: &[CodingWord]) -> f64 {
    let log_m = f64::from(carpet.m()).ln();
    let mut num = NeumaierSum::new();
    let mut den = NeumaierSum::new();
    for w in words {
        let lm = log_lambda_mass(carpet, w);
        let mass = lm.exp();
        num += mass * lm;
        den += -mass * w.total() as f64 * log_m;
    }
    num.value() / den.value()
}

/// `s_k` over a collected partition.
pub fn compute_s_k(carpet: &Carpet, lk: &PartitionLambdaK) -> f64 {
    let log_m = f64::from(carpet.m()).ln();
    let mut num = NeumaierSum::new();
    let mut den = NeumaierSum::new();
    for w in &lk.words {
        let lm = crate::partition::log_word_mass(carpet, w);
        let mass = lm.exp();
        num += mass * lm;
        den += -mass * w.len() as f64 * log_m;
    }
    num.value() / den.value()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct StreamedEntropy {
    pub k: usize,
    pub phi_k: usize,
    pub xi_min: usize,
    pub xi_max: usize,
    /// `sum mu log mu`.
    pub entropy: f64,
    /// `sum mu |w|`.
    pub mean_length: f64,
    pub s_k: f64,
}

#[derive(Clone, Copy)]
struct Acc {
    count: usize,
    lo: usize,
    hi: usize,
    ent: NeumaierSum,
    len: NeumaierSum,
}

/// `s_k` without collecting `Lambda_k`.
pub fn stream_s_k(carpet: &Carpet, k: usize) -> Result<StreamedEntropy> {
    let init = || Acc {
        count: 0,
        lo: usize::MAX,
        hi: 0,
        ent: NeumaierSum::new(),
        len: NeumaierSum::new(),
    };
    let acc = fold_lambda_k(
        carpet,
        k,
        init,
        |a, w, lm| {
            let mass = lm.exp();
            a.count += 1;
            a.lo = a.lo.min(w.len());
            a.hi = a.hi.max(w.len());
            a.ent += mass * lm;
            a.len += mass * w.len() as f64;
        },
        |a, b| Acc {
            count: a.count + b.count,
            lo: a.lo.min(b.lo),
            hi: a.hi.max(b.hi),
            ent: a.ent + b.ent,
            len: a.len + b.len,
        },
    )?;
    let log_m = f64::from(carpet.m()).ln();
    Ok(StreamedEntropy {
        k,
        phi_k: acc.count,
        xi_min: acc.lo,
        xi_max: acc.hi,
        entropy: acc.ent.value(),
        mean_length: acc.len.value(),
        s_k: acc.ent.value() / (-acc.len.value() * log_m),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct SequenceOptions {
    /// `t_k` needs the antichain, which is only built up to this level.
    pub antichain_max_k: usize,
    pub enum_opts: EnumOptions,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            antichain_max_k: 6,
            enum_opts: EnumOptions::default(),
        }
    }
}

/// One row of the sequence table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SequencePoint {
    pub k: usize,
    pub phi_k: usize,
    pub xi_min: usize,
    pub xi_max: usize,
    pub d_k: f64,
    pub t_k: Option<f64>,
    pub s_k: f64,
    pub s0: f64,
    /// `2 H_p / (k log m)`, bounding `s0 - d_k`.
    pub bound_dk: f64,
    /// `(C1 + 2 H_p) / (xi_min log m)`, bounding `|s_k - s0|`.
    pub bound_sk: f64,
    /// `2 H_p / (xi_min log m)`, bounding `|t_k - s0|`.
    pub bound_tk: f64,
    pub pass: bool,
}

impl SequencePoint {
    /// `0 <= s0 - d_k <= bound_dk`, up to rounding in the closed forms.
    pub fn dk_ok(&self) -> bool {
        let gap = self.s0 - self.d_k;
        gap >= -DK_ROUNDING && gap <= self.bound_dk
    }

    pub fn sk_ok(&self) -> bool {
        (self.s_k - self.s0).abs() <= self.bound_sk
    }

    pub fn tk_ok(&self) -> bool {
        self.t_k
            .is_none_or(|t| (t - self.s0).abs() <= self.bound_tk)
    }
}

/// `s0` and `d_k` are both evaluated in double precision; when they agree
/// mathematically (`theta = 1`) their difference is pure rounding.
const DK_ROUNDING: f64 = 1e-12;

pub fn sequence_point(carpet: &Carpet, k: usize, opts: &SequenceOptions) -> Result<SequencePoint> {
    let p = carpet.params();
    let log_m = f64::from(carpet.m()).ln();
    let st = stream_s_k(carpet, k)?;
    let t_k = if k <= opts.antichain_max_k {
        let lk = enumerate_lambda_k(carpet, k, &opts.enum_opts)?;
        let a = build_antichain(carpet, &lk, &AntichainOptions::default())?;
        Some(compute_t(carpet, &a.words))
    } else {
        None
    };
    let xi = st.xi_min as f64;
    let mut point = SequencePoint {
        k,
        phi_k: st.phi_k,
        xi_min: st.xi_min,
        xi_max: st.xi_max,
        d_k: compute_d_k(carpet, k),
        t_k,
        s_k: st.s_k,
        s0: p.s0,
        bound_dk: 2.0 * p.hp / (k as f64 * log_m),
        bound_sk: (p.c1 + 2.0 * p.hp) / (xi * log_m),
        bound_tk: 2.0 * p.hp / (xi * log_m),
        pass: false,
    };
    point.pass = point.dk_ok() && point.sk_ok() && point.tk_ok();
    Ok(point)
}
