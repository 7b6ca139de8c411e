//! Cohen's kappa for two raters over a shared categorical label set.

use std::collections::BTreeMap;

use super::AnnotationError;

/// Paired labels from two raters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KappaInput<L> {
    pub pairs: Vec<(L, L)>,
}

impl<L> KappaInput<L> {
    pub fn new(pairs: Vec<(L, L)>) -> Self {
        Self { pairs }
    }
}

impl<L> FromIterator<(L, L)> for KappaInput<L> {
    fn from_iter<I: IntoIterator<Item = (L, L)>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// `(p_o - p_e) / (1 - p_e)`.
///
/// Evaluated on integer counts as `(n*agree - S) / (n^2 - S)` with
/// `S = sum_k rowsum_k * colsum_k`, which is the same ratio with both terms
/// multiplied by `n^2` and needs a single floating-point division. When
/// `p_e = 1` (both raters used one and the same label throughout) the ratio is
/// 0/0; the result is then 1.0 if every pair agrees and 0.0 otherwise.
pub fn cohen_kappa<L: Ord + Clone>(input: &KappaInput<L>) -> Result<f64, AnnotationError> {
    let n = input.pairs.len();
    if n == 0 {
        return Err(AnnotationError::EmptyInput);
    }
    let mut rows: BTreeMap<&L, i128> = BTreeMap::new();
    let mut cols: BTreeMap<&L, i128> = BTreeMap::new();
    let mut agree: i128 = 0;
    for (a, b) in &input.pairs {
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
        agree += i128::from(a == b);
    }
    let chance: i128 = rows
        .iter()
        .map(|(k, r)| r * cols.get(k).copied().unwrap_or(0))
        .sum();
    Ok(kappa_from_counts(n as i128, agree, chance))
}

/// Kappa from a square contingency table (`table[i][j]` = items rater A put in
/// class i and rater B in class j).
pub fn kappa_from_table(table: &[Vec<u64>]) -> Result<f64, AnnotationError> {
    let k = table.len();
    if table.iter().any(|r| r.len() != k) {
        return Err(AnnotationError::InvalidRecord("contingency table must be square".into()));
    }
    let n: i128 = table.iter().flatten().map(|&x| i128::from(x)).sum();
    if n == 0 {
        return Err(AnnotationError::EmptyInput);
    }
    let agree: i128 = (0..k).map(|i| i128::from(table[i][i])).sum();
    let chance: i128 = (0..k)
        .map(|i| {
            let row: i128 = table[i].iter().map(|&x| i128::from(x)).sum();
            let col: i128 = table.iter().map(|r| i128::from(r[i])).sum();
            row * col
        })
        .sum();
    Ok(kappa_from_counts(n, agree, chance))
}

fn kappa_from_counts(n: i128, agree: i128, chance: i128) -> f64 {
    let denom = n * n - chance;
    if denom == 0 {
        return if agree == n { 1.0 } else { 0.0 };
    }
    let k = (n * agree - chance) as f64 / denom as f64;
    k.clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook evaluation through the two probabilities.
    fn oracle(pairs: &[(u8, u8)]) -> f64 {
        let n = pairs.len() as f64;
        let p_o = pairs.iter().filter(|(a, b)| a == b).count() as f64 / n;
        let mut p_e = 0.0;
        for k in 0..=u8::MAX {
            let a = pairs.iter().filter(|(x, _)| *x == k).count() as f64 / n;
            let b = pairs.iter().filter(|(_, y)| *y == k).count() as f64 / n;
            p_e += a * b;
        }
        if (1.0 - p_e).abs() < 1e-15 {
            return if p_o == 1.0 { 1.0 } else { 0.0 };
        }
        (p_o - p_e) / (1.0 - p_e)
    }

    fn expand(table: &[Vec<u64>]) -> Vec<(u8, u8)> {
        let mut out = Vec::new();
        for (i, row) in table.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                out.extend(std::iter::repeat_n((i as u8, j as u8), c as usize));
            }
        }
        out
    }

    #[test]
    fn perfect_agreement() {
        let input: KappaInput<_> = (0..50).map(|i| (i % 3, i % 3)).collect();
        assert_eq!(cohen_kappa(&input).unwrap(), 1.0);
    }

    #[test]
    fn worked_contingency_table() {
        let table = vec![vec![20, 5], vec![10, 15]];
        // p_o = 35/50 = 0.7, p_e = 0.5*0.6 + 0.5*0.4 = 0.5
        let k = kappa_from_table(&table).unwrap();
        assert!((k - 0.4).abs() < 1e-12);
        let pairs = expand(&table);
        assert!((cohen_kappa(&KappaInput::new(pairs.clone())).unwrap() - 0.4).abs() < 1e-12);
        assert!((oracle(&pairs) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn chance_agreement_is_zero() {
        // Independent marginals: p_o = p_e = 0.5.
        let table = vec![vec![10, 10], vec![10, 10]];
        assert!(kappa_from_table(&table).unwrap().abs() < 1e-12);
    }

    #[test]
    fn degenerate_single_label() {
        let all_same: KappaInput<_> = (0..10).map(|_| ("x", "x")).collect();
        assert_eq!(cohen_kappa(&all_same).unwrap(), 1.0);
        assert!(matches!(
            cohen_kappa(&KappaInput::<u8>::new(vec![])),
            Err(AnnotationError::EmptyInput)
        ));
    }

    #[test]
    fn total_disagreement_is_minus_one() {
        let table = vec![vec![0, 25], vec![25, 0]];
        assert_eq!(kappa_from_table(&table).unwrap(), -1.0);
    }

    proptest! {
        #[test]
        fn matches_probability_oracle(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..80)) {
            let k = cohen_kappa(&KappaInput::new(pairs.clone())).unwrap();
            prop_assert!((k - oracle(&pairs)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&k));
        }
    }
}
