//! Sublayer ordering strings.
//!
//! A transformer stack is written as a word over `s` (self-attention),
//! `f` (feedforward) and, for decoders, `c` (cross-attention), read from
//! input to output. This module parses and prints those words, prices them in
//! parameter units, builds the sandwich family and samples random orderings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::LabRng;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderingError {
    #[error("ordering string is empty")]
    Empty,
    #[error("unknown sublayer symbol {ch:?} at index {index}")]
    UnknownSymbol { index: usize, ch: char },
    #[error("cross-attention 'c' at index {index} is only allowed in decoder orderings")]
    CrossInEncoder { index: usize },
    #[error("cross-attention 'c' at index {index} must directly follow a self-attention 's'")]
    CrossWithoutSelf { index: usize },
    #[error("sandwich coefficient k={k} out of range for n={n} (need 0 <= k <= n-1)")]
    CoefficientOutOfRange { n: usize, k: usize },
    #[error("cannot sample an ordering with zero sublayers")]
    NoSublayers,
    #[error("parameter budget must be at least one unit")]
    ZeroBudget,
}

/// One residual sublayer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SublayerKind {
    SelfAttention,
    Feedforward,
    CrossAttention,
}

impl SublayerKind {
    pub fn symbol(self) -> char {
        match self {
            SublayerKind::SelfAttention => 's',
            SublayerKind::Feedforward => 'f',
            SublayerKind::CrossAttention => 'c',
        }
    }

    pub fn from_symbol(ch: char) -> Option<Self> {
        match ch {
            's' => Some(SublayerKind::SelfAttention),
            'f' => Some(SublayerKind::Feedforward),
            'c' => Some(SublayerKind::CrossAttention),
            _ => None,
        }
    }

    /// Cost in units of `4d²` weights: attention 1, feedforward 2.
    pub fn units(self) -> u64 {
        match self {
            SublayerKind::SelfAttention | SublayerKind::CrossAttention => 1,
            SublayerKind::Feedforward => 2,
        }
    }
}

/// Weight count of one sublayer at model width `d`, biases excluded.
pub fn sublayer_param_count(kind: SublayerKind, d: u64) -> u64 {
    4 * d * d * kind.units()
}

/// Parameter budget measured in units of `4d²` (the cost of one `s`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamBudget(pub u64);

impl ParamBudget {
    pub fn units(self) -> u64 {
        self.0
    }
}

/// A validated sublayer ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OrderingSpec {
    kinds: Vec<SublayerKind>,
    decoder: bool,
}

impl OrderingSpec {
    /// Validates `kinds` against the encoder or decoder grammar.
    pub fn new(kinds: Vec<SublayerKind>, decoder: bool) -> Result<Self, OrderingError> {
        if kinds.is_empty() {
            return Err(OrderingError::Empty);
        }
        for (index, kind) in kinds.iter().enumerate() {
            if *kind != SublayerKind::CrossAttention {
                continue;
            }
            if !decoder {
                return Err(OrderingError::CrossInEncoder { index });
            }
            if index == 0 || kinds[index - 1] != SublayerKind::SelfAttention {
                return Err(OrderingError::CrossWithoutSelf { index });
            }
        }
        Ok(Self { kinds, decoder })
    }

    /// Zero sublayers: embeddings feed the output projection directly.
    /// Never produced by the parser; used for baseline sanity models.
    pub fn empty() -> Self {
        Self {
            kinds: Vec::new(),
            decoder: false,
        }
    }

    pub fn parse(text: &str, decoder: bool) -> Result<Self, OrderingError> {
        if text.is_empty() {
            return Err(OrderingError::Empty);
        }
        let kinds = text
            .chars()
            .enumerate()
            .map(|(index, ch)| SublayerKind::from_symbol(ch).ok_or(OrderingError::UnknownSymbol { index, ch }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(kinds, decoder)
    }

    pub fn kinds(&self) -> &[SublayerKind] {
        &self.kinds
    }

    pub fn is_decoder(&self) -> bool {
        self.decoder
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn count(&self, kind: SublayerKind) -> usize {
        self.kinds.iter().filter(|k| **k == kind).count()
    }

    pub fn total_units(&self) -> ParamBudget {
        ParamBudget(units_of(&self.kinds))
    }

    /// Weight count of all sublayers at width `d`, biases excluded.
    pub fn param_count(&self, d: u64) -> u64 {
        self.kinds.iter().map(|k| sublayer_param_count(*k, d)).sum()
    }

    /// The ordering with every `c` deleted.
    pub fn without_cross(&self) -> Vec<SublayerKind> {
        self.kinds
            .iter()
            .copied()
            .filter(|k| *k != SublayerKind::CrossAttention)
            .collect()
    }
}

impl fmt::Display for OrderingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for kind in &self.kinds {
            write!(f, "{}", kind.symbol())?;
        }
        Ok(())
    }
}

/// Parses an encoder ordering; use [`OrderingSpec::parse`] for decoders.
impl FromStr for OrderingSpec {
    type Err = OrderingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, false)
    }
}

pub fn parse_ordering(text: &str, decoder: bool) -> Result<OrderingSpec, OrderingError> {
    OrderingSpec::parse(text, decoder)
}

pub fn format_ordering(spec: &OrderingSpec) -> String {
    spec.to_string()
}

pub fn total_units(spec: &OrderingSpec) -> ParamBudget {
    spec.total_units()
}

/// Renders a bare kind sequence (which may be empty, e.g. a half-split slice).
pub fn kinds_to_string(kinds: &[SublayerKind]) -> String {
    kinds.iter().map(|k| k.symbol()).collect()
}

fn units_of(kinds: &[SublayerKind]) -> u64 {
    kinds.iter().map(|k| k.units()).sum()
}

fn check_coefficient(n: usize, k: usize) -> Result<(), OrderingError> {
    if n == 0 || k >= n {
        return Err(OrderingError::CoefficientOutOfRange { n, k });
    }
    Ok(())
}

/// `s^k (sf)^(n-k) f^k`.
pub fn sandwich(n: usize, k: usize) -> Result<OrderingSpec, OrderingError> {
    use SublayerKind::*;
    check_coefficient(n, k)?;
    let mut kinds = Vec::with_capacity(2 * n);
    kinds.extend(std::iter::repeat_n(SelfAttention, k));
    for _ in 0..n - k {
        kinds.extend([SelfAttention, Feedforward]);
    }
    kinds.extend(std::iter::repeat_n(Feedforward, k));
    OrderingSpec::new(kinds, false)
}

/// `(sc)^k ((sc)f)^(n-k) f^k`: the sandwich pattern with `sc` moved as one unit.
pub fn sandwich_decoder(n: usize, k: usize) -> Result<OrderingSpec, OrderingError> {
    use SublayerKind::*;
    check_coefficient(n, k)?;
    let mut kinds = Vec::with_capacity(3 * n);
    for _ in 0..k {
        kinds.extend([SelfAttention, CrossAttention]);
    }
    for _ in 0..n - k {
        kinds.extend([SelfAttention, CrossAttention, Feedforward]);
    }
    kinds.extend(std::iter::repeat_n(Feedforward, k));
    OrderingSpec::new(kinds, true)
}

/// Uniform random arrangement of `n_s` self-attention and `n_f` feedforward
/// sublayers. Each call is an independent draw; duplicates across calls are
/// not rejected.
pub fn sample_permutation(n_s: usize, n_f: usize, seed: u64) -> Result<OrderingSpec, OrderingError> {
    if n_s + n_f == 0 {
        return Err(OrderingError::NoSublayers);
    }
    let mut kinds = vec![SublayerKind::SelfAttention; n_s];
    kinds.extend(std::iter::repeat_n(SublayerKind::Feedforward, n_f));
    LabRng::new(seed).shuffle(&mut kinds);
    OrderingSpec::new(kinds, false)
}

/// Appends `s` or `f` with equal probability until `budget` is spent. A draw
/// of `f` with a single unit left is replaced by `s`, so the budget is always
/// met exactly.
pub fn sample_budgeted(budget: ParamBudget, seed: u64) -> Result<OrderingSpec, OrderingError> {
    if budget.0 == 0 {
        return Err(OrderingError::ZeroBudget);
    }
    let mut rng = LabRng::new(seed);
    let mut remaining = budget.0;
    let mut kinds = Vec::new();
    while remaining > 0 {
        let mut kind = if rng.coin() {
            SublayerKind::SelfAttention
        } else {
            SublayerKind::Feedforward
        };
        if kind.units() > remaining {
            kind = SublayerKind::SelfAttention;
        }
        remaining -= kind.units();
        kinds.push(kind);
    }
    OrderingSpec::new(kinds, false)
}

/// Splits at half the parameter mass: the bottom half is the longest prefix
/// weighing at most half the total, so a sublayer straddling the midpoint
/// lands in the top half. Either half may be empty.
pub fn split_halves(spec: &OrderingSpec) -> (&[SublayerKind], &[SublayerKind]) {
    let total = units_of(spec.kinds());
    let mut acc = 0;
    let mut cut = spec.len();
    for (i, kind) in spec.kinds().iter().enumerate() {
        // acc + units <= total / 2, compared in integers.
        if 2 * (acc + kind.units()) > total {
            cut = i;
            break;
        }
        acc += kind.units();
    }
    spec.kinds().split_at(cut)
}

/// Per-half sublayer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HalfCounts {
    pub bottom_s: usize,
    pub bottom_f: usize,
    pub top_s: usize,
    pub top_f: usize,
}

pub fn half_counts(spec: &OrderingSpec) -> HalfCounts {
    let (bottom, top) = split_halves(spec);
    let count = |half: &[SublayerKind], kind| half.iter().filter(|k| **k == kind).count();
    HalfCounts {
        bottom_s: count(bottom, SublayerKind::SelfAttention),
        bottom_f: count(bottom, SublayerKind::Feedforward),
        top_s: count(top, SublayerKind::SelfAttention),
        top_f: count(top, SublayerKind::Feedforward),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SublayerKind::*;

    fn enc(text: &str) -> OrderingSpec {
        OrderingSpec::parse(text, false).unwrap()
    }

    #[test]
    fn parses_symbol_strings() {
        assert_eq!(
            enc("sfsfsf").kinds(),
            &[SelfAttention, Feedforward, SelfAttention, Feedforward, SelfAttention, Feedforward]
        );
        assert_eq!(enc("s").kinds(), &[SelfAttention]);
        let dec = OrderingSpec::parse("scf", true).unwrap();
        assert_eq!(dec.kinds(), &[SelfAttention, CrossAttention, Feedforward]);
        assert_eq!(format_ordering(&dec), "scf");
        assert_eq!(enc("sf").to_string(), "sf");
    }

    #[test]
    fn parse_errors_carry_index() {
        assert_eq!(OrderingSpec::parse("", false), Err(OrderingError::Empty));
        assert_eq!(
            OrderingSpec::parse("sfx", false),
            Err(OrderingError::UnknownSymbol { index: 2, ch: 'x' })
        );
        assert_eq!(
            OrderingSpec::parse("sF", false),
            Err(OrderingError::UnknownSymbol { index: 1, ch: 'F' })
        );
        assert_eq!(
            OrderingSpec::parse("sfsc", false),
            Err(OrderingError::CrossInEncoder { index: 3 })
        );
        assert_eq!(
            OrderingSpec::parse("sfc", true),
            Err(OrderingError::CrossWithoutSelf { index: 2 })
        );
        assert_eq!(
            OrderingSpec::parse("csf", true),
            Err(OrderingError::CrossWithoutSelf { index: 0 })
        );
        assert_eq!(
            OrderingSpec::parse("s f", false),
            Err(OrderingError::UnknownSymbol { index: 1, ch: ' ' })
        );
    }

    #[test]
    fn param_counts() {
        assert_eq!(sublayer_param_count(SelfAttention, 1024), 4_194_304);
        assert_eq!(sublayer_param_count(Feedforward, 1024), 8_388_608);
        assert_eq!(sublayer_param_count(SelfAttention, 1), 4);
        assert_eq!(sublayer_param_count(CrossAttention, 2), 16);
        assert_eq!(enc("ssssff").param_count(8), 2048);
    }

    #[test]
    fn unit_totals() {
        assert_eq!(enc("sfsfsf").total_units(), ParamBudget(9));
        assert_eq!(enc(&"sf".repeat(16)).total_units(), ParamBudget(48));
        assert_eq!(enc("ssssff").total_units(), ParamBudget(8));
    }

    #[test]
    fn sandwich_examples() {
        assert_eq!(sandwich(16, 0).unwrap().to_string(), "sf".repeat(16));
        assert_eq!(
            sandwich(16, 15).unwrap().to_string(),
            format!("{}{}", "s".repeat(16), "f".repeat(16))
        );
        assert_eq!(sandwich(3, 1).unwrap().to_string(), "ssfsff");
        assert_eq!(sandwich(4, 1).unwrap().to_string(), "ssfsfsff");
        assert_eq!(sandwich(16, 6).unwrap().to_string(), "sssssssfsfsfsfsfsfsfsfsfsfffffff");
        assert_eq!(sandwich(2, 1).unwrap().to_string(), "ssff");
        assert_eq!(sandwich(3, 3), Err(OrderingError::CoefficientOutOfRange { n: 3, k: 3 }));
        assert_eq!(sandwich(0, 0), Err(OrderingError::CoefficientOutOfRange { n: 0, k: 0 }));
    }

    #[test]
    fn sandwich_decoder_examples() {
        assert_eq!(sandwich_decoder(3, 1).unwrap().to_string(), "scscfscff");
        assert_eq!(sandwich_decoder(3, 0).unwrap().to_string(), "scfscfscf");
        assert_eq!(sandwich_decoder(2, 1).unwrap().to_string(), "scscff");
        assert!(sandwich_decoder(2, 2).is_err());
        assert!(sandwich_decoder(3, 2).unwrap().is_decoder());
    }

    #[test]
    fn permutation_sampler() {
        let p = sample_permutation(16, 16, 5).unwrap();
        assert_eq!(p.len(), 32);
        assert_eq!(p.count(SelfAttention), 16);
        assert_eq!(p.count(Feedforward), 16);
        assert_eq!(sample_permutation(1, 0, 99).unwrap().to_string(), "s");
        assert_eq!(sample_permutation(0, 0, 1), Err(OrderingError::NoSublayers));
        assert_eq!(sample_permutation(4, 4, 11), sample_permutation(4, 4, 11));
    }

    #[test]
    fn permutation_sampler_is_uniform_over_three_outcomes() {
        let mut counts = std::collections::HashMap::new();
        for seed in 0..1000 {
            *counts
                .entry(sample_permutation(2, 1, seed).unwrap().to_string())
                .or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 3);
        // Binomial(1000, 1/3) has sd ~14.9; allow 4 sd.
        for word in ["ssf", "sfs", "fss"] {
            let c = counts[word] as f64;
            assert!((c - 1000.0 / 3.0).abs() < 60.0, "{word}: {c}");
        }
    }

    #[test]
    fn budgeted_sampler() {
        assert_eq!(sample_budgeted(ParamBudget(1), 0).unwrap().to_string(), "s");
        assert_eq!(sample_budgeted(ParamBudget(0), 0), Err(OrderingError::ZeroBudget));
        let outcomes: std::collections::HashSet<String> = (0..64)
            .map(|seed| sample_budgeted(ParamBudget(2), seed).unwrap().to_string())
            .collect();
        assert_eq!(outcomes, ["ss", "f"].iter().map(|s| s.to_string()).collect());
        for seed in 0..200 {
            let o = sample_budgeted(ParamBudget(48), seed).unwrap();
            assert_eq!(o.total_units(), ParamBudget(48));
            assert!((24..=48).contains(&o.len()));
        }
    }

    #[test]
    fn half_split_examples() {
        let s = enc("ssssff");
        let (bottom, top) = split_halves(&s);
        assert_eq!(kinds_to_string(bottom), "ssss");
        assert_eq!(kinds_to_string(top), "ff");
        assert_eq!(
            half_counts(&s),
            HalfCounts { bottom_s: 4, bottom_f: 0, top_s: 0, top_f: 2 }
        );

        let sf = enc("sf");
        let (bottom, top) = split_halves(&sf);
        assert_eq!((kinds_to_string(bottom).as_str(), kinds_to_string(top).as_str()), ("s", "f"));

        // "fs": 3 units, midpoint 1.5; the leading f spans [0, 2] and straddles it.
        let fs = enc("fs");
        let (bottom, top) = split_halves(&fs);
        assert_eq!((kinds_to_string(bottom).as_str(), kinds_to_string(top).as_str()), ("", "fs"));
    }

    #[test]
    fn half_counts_on_first_random_row() {
        // Hand tally: 48 units, half 24. Prefix "fsfsfffsffsfsss" holds
        // 7 s + 8 f = 23 units; the next f would make 25.
        let spec = enc("fsfsfffsffsfsssffsfssfssssffsffs");
        let (bottom, top) = split_halves(&spec);
        assert_eq!(kinds_to_string(bottom), "fsfsfffsffsfsss");
        assert_eq!(kinds_to_string(top), "ffsfssfssssffsffs");
        assert_eq!(
            half_counts(&spec),
            HalfCounts { bottom_s: 7, bottom_f: 8, top_s: 9, top_f: 8 }
        );
    }

    fn encoder_string() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof![Just('s'), Just('f')], 1..64)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn round_trip(text in encoder_string()) {
            prop_assert_eq!(enc(&text).to_string(), text);
        }

        #[test]
        fn sandwich_shape(n in 1usize..=64, k_frac in 0.0f64..1.0) {
            let k = ((n as f64) * k_frac) as usize;
            let w = sandwich(n, k).unwrap();
            prop_assert_eq!(w.len(), 2 * n);
            prop_assert_eq!(w.count(SelfAttention), n);
            prop_assert_eq!(w.count(Feedforward), n);
            prop_assert_eq!(w.total_units(), ParamBudget(3 * n as u64));
            let dec = sandwich_decoder(n, k).unwrap();
            prop_assert_eq!(dec.without_cross(), w.kinds().to_vec());
            prop_assert_eq!(dec.count(CrossAttention), n);
        }

        #[test]
        fn budgeted_exhausts_exactly(budget in 1u64..200, seed: u64) {
            let o = sample_budgeted(ParamBudget(budget), seed).unwrap();
            prop_assert_eq!(o.total_units(), ParamBudget(budget));
        }

        #[test]
        fn halves_concatenate(text in encoder_string()) {
            let spec = enc(&text);
            let (bottom, top) = split_halves(&spec);
            prop_assert_eq!(format!("{}{}", kinds_to_string(bottom), kinds_to_string(top)), text);
            let c = half_counts(&spec);
            prop_assert_eq!(c.bottom_s + c.top_s, spec.count(SelfAttention));
            prop_assert_eq!(c.bottom_f + c.top_f, spec.count(Feedforward));
            prop_assert!(2 * units_of(bottom) <= spec.total_units().0);
        }
    }
}
