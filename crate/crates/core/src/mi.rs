//! Plug-in entropy and mutual information from contingency counts.

use std::collections::BTreeMap;

/// Mutual information in bits of the joint counts `(x, y, count)`.
///
/// Probabilities are the empirical frequencies; absent combinations
/// contribute nothing. Each term is evaluated as
/// `p(x,y) * log2(n * c(x,y) / (c(x) * c(y)))` so that exactly independent
/// counts give exactly zero.
pub fn mutual_information_bits<X: Ord, Y: Ord>(joint: &[(X, Y, u64)]) -> f64 {
    let mut cx: BTreeMap<&X, u64> = BTreeMap::new();
    let mut cy: BTreeMap<&Y, u64> = BTreeMap::new();
    let mut n = 0u64;
    for (x, y, c) in joint {
        *cx.entry(x).or_default() += c;
        *cy.entry(y).or_default() += c;
        n += c;
    }
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let mi: f64 = joint
        .iter()
        .filter(|(_, _, c)| *c > 0)
        .map(|(x, y, c)| {
            let c = *c as f64;
            let ratio = (nf * c) / (cx[x] as f64 * cy[y] as f64);
            c / nf * ratio.log2()
        })
        .sum();
    // Rounding can leave a tiny negative residue on independent data.
    mi.max(0.0)
}

/// Entropy in bits of a column given its value counts.
pub fn entropy_bits(counts: impl IntoIterator<Item = u64>) -> f64 {
    let counts: Vec<u64> = counts.into_iter().filter(|&c| c > 0).collect();
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / nf;
            p * p.log2()
        })
        .sum::<f64>()
}
