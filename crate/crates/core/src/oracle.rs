//! In-memory reference classifier.
//!
//! Everything here is computed by direct enumeration over row vectors and
//! shares no code with [`crate::binning`] or the SQL generator, so the test
//! suites can use it as ground truth for the database pipeline.

use std::collections::BTreeMap;

use crate::binning::Binning;
use crate::error::{Error, Result};
use crate::schema::ColumnKind;
use crate::value::Value;

/// Rows of `(feature values, target value)` with one kind per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct InMemoryDataset {
    kinds: Vec<ColumnKind>,
    rows: Vec<(Vec<Value>, Value)>,
}

impl InMemoryDataset {
    pub fn new(kinds: Vec<ColumnKind>, rows: Vec<(Vec<Value>, Value)>) -> Result<Self> {
        if let Some((values, _)) = rows.iter().find(|(v, _)| v.len() != kinds.len()) {
            return Err(Error::ArityMismatch {
                expected: kinds.len(),
                got: values.len(),
            });
        }
        for (values, _) in &rows {
            for (v, k) in values.iter().zip(&kinds) {
                if *k == ColumnKind::Numeric && !v.is_null() && v.as_f64().is_none() {
                    return Err(Error::Schema(format!("non-numeric value {v} in numeric column")));
                }
            }
        }
        Ok(Self { kinds, rows })
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn rows(&self) -> &[(Vec<Value>, Value)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows without NULL in any feature or in the target, in original order.
    fn complete_rows(&self) -> impl Iterator<Item = &(Vec<Value>, Value)> {
        self.rows
            .iter()
            .filter(|(v, y)| !y.is_null() && v.iter().all(|x| !x.is_null()))
    }
}

/// Fitted quantizer of one numeric feature.
#[derive(Debug, Clone, PartialEq)]
enum Quantizer {
    Width { lo: f64, hi: f64, bins: u32 },
    /// `(bin, largest training value in the bin)` in ascending bin order.
    Rank { upper: Vec<(u32, f64)> },
}

impl Quantizer {
    fn apply(&self, x: f64) -> u32 {
        match self {
            Quantizer::Width { lo, hi, bins } => width_bin(x, *lo, *hi, *bins),
            Quantizer::Rank { upper } => upper
                .iter()
                .find(|(_, top)| *top >= x)
                .or(upper.last())
                .map(|(q, _)| *q)
                .unwrap_or(1),
        }
    }
}

fn width_bin(x: f64, lo: f64, hi: f64, bins: u32) -> u32 {
    if bins == 1 || lo == hi {
        return 1;
    }
    let raw = (bins as f64 * (x - lo) / (hi - lo)).ceil();
    raw.clamp(1.0, bins as f64) as u32
}

/// `ceil(bins * rank / m)` in integers, rank 1-based.
fn rank_bin(rank: u64, m: u64, bins: u32) -> u32 {
    ((bins as u64 * rank).div_ceil(m)) as u32
}

/// Bins of `values` (in row order) and the fitted quantizer.
fn fit_quantizer(values: &[f64], binning: Binning, bins: u32) -> (Vec<u32>, Quantizer) {
    match binning {
        Binning::Ewb => {
            let lo = values.iter().copied().reduce(f64::min).unwrap_or(0.0);
            let hi = values.iter().copied().reduce(f64::max).unwrap_or(0.0);
            let q = Quantizer::Width { lo, hi, bins };
            (values.iter().map(|&x| q.apply(x)).collect(), q)
        }
        Binning::Eqrb => {
            // Insertion into a map keyed by (value, row index) gives the
            // (value ASC, row ASC) order without a comparison sort.
            let mut ordered = BTreeMap::new();
            for (i, &x) in values.iter().enumerate() {
                ordered.insert((OrdF64(x), i), ());
            }
            let m = values.len() as u64;
            let mut out = vec![0; values.len()];
            let mut upper: BTreeMap<u32, f64> = BTreeMap::new();
            for (r, (OrdF64(x), i)) in ordered.into_keys().enumerate() {
                let q = rank_bin(r as u64 + 1, m, bins);
                out[i] = q;
                let top = upper.entry(q).or_insert(x);
                if x > *top {
                    *top = x;
                }
            }
            (out, Quantizer::Rank { upper: upper.into_iter().collect() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// A histogram classifier fitted in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleModel {
    kinds: Vec<ColumnKind>,
    quantizers: Vec<Option<Quantizer>>,
    /// Joint counts of (quantized features, class).
    counts: BTreeMap<(Vec<Value>, Value), u64>,
    majority: Value,
    trained_rows: u64,
}

impl OracleModel {
    /// Fits on the complete rows of `data`. Numeric features are binned
    /// with `binning` and `bins`; categorical features are used as is.
    pub fn fit(data: &InMemoryDataset, binning: Binning, bins: u32) -> Result<Self> {
        if bins < 1 {
            return Err(Error::BadBinCount(0));
        }
        let rows: Vec<&(Vec<Value>, Value)> = data.complete_rows().collect();
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut keys: Vec<Vec<Value>> = rows.iter().map(|(v, _)| v.clone()).collect();
        let mut quantizers = Vec::with_capacity(data.kinds.len());
        for (j, kind) in data.kinds.iter().enumerate() {
            if *kind == ColumnKind::Categorical {
                quantizers.push(None);
                continue;
            }
            let column: Vec<f64> = rows.iter().map(|(v, _)| v[j].as_f64().unwrap()).collect();
            let (assigned, q) = fit_quantizer(&column, binning, bins);
            for (key, q) in keys.iter_mut().zip(assigned) {
                key[j] = Value::Integer(q.into());
            }
            quantizers.push(Some(q));
        }

        let mut counts = BTreeMap::new();
        let mut class_counts: BTreeMap<Value, u64> = BTreeMap::new();
        for (key, (_, y)) in keys.into_iter().zip(&rows) {
            *counts.entry((key, y.clone())).or_insert(0) += 1;
            *class_counts.entry(y.clone()).or_insert(0) += 1;
        }
        Ok(Self {
            kinds: data.kinds.clone(),
            quantizers,
            counts,
            majority: argmax(class_counts),
            trained_rows: rows.len() as u64,
        })
    }

    pub fn majority_class(&self) -> &Value {
        &self.majority
    }

    pub fn trained_rows(&self) -> u64 {
        self.trained_rows
    }

    /// The stored joint counts, each `>= 1`.
    pub fn counts(&self) -> &BTreeMap<(Vec<Value>, Value), u64> {
        &self.counts
    }

    /// Quantizes an evaluation row. `None` when any value is NULL.
    pub fn quantize(&self, row: &[Value]) -> Result<Option<Vec<Value>>> {
        if row.len() != self.kinds.len() {
            return Err(Error::ArityMismatch {
                expected: self.kinds.len(),
                got: row.len(),
            });
        }
        let mut key = Vec::with_capacity(row.len());
        for (v, q) in row.iter().zip(&self.quantizers) {
            if v.is_null() {
                return Ok(None);
            }
            key.push(match q {
                None => v.clone(),
                Some(q) => {
                    let x = v.as_f64().ok_or_else(|| {
                        Error::Schema(format!("non-numeric value {v} in numeric column"))
                    })?;
                    Value::Integer(q.apply(x).into())
                }
            });
        }
        Ok(Some(key))
    }

    /// `(predicted class, matched)`; `matched` is false when the majority
    /// class was used because the combination never occurred in training.
    pub fn predict(&self, row: &[Value]) -> Result<(Value, bool)> {
        let Some(key) = self.quantize(row)? else {
            return Ok((self.majority.clone(), false));
        };
        let per_class: BTreeMap<Value, u64> = self
            .counts
            .iter()
            .filter(|((k, _), _)| *k == key)
            .map(|((_, y), &c)| (y.clone(), c))
            .collect();
        if per_class.is_empty() {
            Ok((self.majority.clone(), false))
        } else {
            Ok((argmax(per_class), true))
        }
    }

    /// Probability of a quantized `(features..., class)` combination, where
    /// numeric features are given as bin indices.
    pub fn joint_probability(&self, combination: &[Value]) -> Result<f64> {
        if combination.len() != self.kinds.len() + 1 {
            return Err(Error::ArityMismatch {
                expected: self.kinds.len() + 1,
                got: combination.len(),
            });
        }
        let (y, x) = combination.split_last().unwrap();
        let hits = self
            .counts
            .get(&(x.to_vec(), y.clone()))
            .copied()
            .unwrap_or(0);
        Ok(hits as f64 / self.trained_rows as f64)
    }
}

/// Class with the largest count; the smallest such class on ties.
fn argmax(counts: BTreeMap<Value, u64>) -> Value {
    let mut best: Option<(Value, u64)> = None;
    for (y, c) in counts {
        if best.as_ref().is_none_or(|(_, b)| c > *b) {
            best = Some((y, c));
        }
    }
    best.map(|(y, _)| y).unwrap_or(Value::Null)
}

/// Fraction of complete rows of `data` matching the quantized combination
/// `(features..., class)`.
pub fn oracle_joint_probability(
    data: &InMemoryDataset,
    binning: Binning,
    bins: u32,
    combination: &[Value],
) -> Result<f64> {
    if combination.len() != data.kinds.len() + 1 {
        return Err(Error::ArityMismatch {
            expected: data.kinds.len() + 1,
            got: combination.len(),
        });
    }
    OracleModel::fit(data, binning, bins)?.joint_probability(combination)
}

/// Prediction for one evaluation row from a model fitted on `data`.
pub fn oracle_predict(
    data: &InMemoryDataset,
    binning: Binning,
    bins: u32,
    eval_row: &[Value],
) -> Result<Value> {
    Ok(OracleModel::fit(data, binning, bins)?.predict(eval_row)?.0)
}

/// How the `x` column is discretized before computing mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantization {
    None,
    Bins(Binning, u32),
}

/// `x` as seen by [`oracle_mutual_information`]: bin indices when
/// quantized, the values themselves otherwise.
pub fn quantize_column(x: &[Value], quantization: Quantization) -> Vec<Value> {
    match quantization {
        Quantization::None => x.to_vec(),
        Quantization::Bins(binning, bins) => {
            let values: Vec<f64> = x.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect();
            let (assigned, _) = fit_quantizer(&values, binning, bins);
            assigned.into_iter().map(|q| Value::Integer(q.into())).collect()
        }
    }
}

/// Plug-in mutual information in bits between `x` and `y`. Pairs with a
/// NULL on either side are dropped first.
pub fn oracle_mutual_information(x: &[Value], y: &[Value], quantization: Quantization) -> f64 {
    let (x, y): (Vec<Value>, Vec<Value>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_null() && !b.is_null())
        .map(|(a, b)| (a.clone(), b.clone()))
        .unzip();
    let x = quantize_column(&x, quantization);
    let n = x.len() as f64;
    if x.is_empty() {
        return 0.0;
    }
    let mut joint: BTreeMap<(&Value, &Value), f64> = BTreeMap::new();
    let mut px: BTreeMap<&Value, f64> = BTreeMap::new();
    let mut py: BTreeMap<&Value, f64> = BTreeMap::new();
    for (a, b) in x.iter().zip(&y) {
        *joint.entry((a, b)).or_default() += 1.0;
        *px.entry(a).or_default() += 1.0;
        *py.entry(b).or_default() += 1.0;
    }
    let mut mi = 0.0;
    for ((a, b), c) in joint {
        let p = c / n;
        mi += p * (p / ((px[a] / n) * (py[b] / n))).log2();
    }
    mi.max(0.0)
}

/// Plug-in entropy in bits, NULLs dropped.
pub fn oracle_entropy(x: &[Value]) -> f64 {
    let mut counts: BTreeMap<&Value, f64> = BTreeMap::new();
    for v in x.iter().filter(|v| !v.is_null()) {
        *counts.entry(v).or_default() += 1.0;
    }
    let n: f64 = counts.values().sum();
    counts
        .values()
        .map(|c| {
            let p = c / n;
            -p * p.log2()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat(rows: &[(&str, &str)]) -> InMemoryDataset {
        InMemoryDataset::new(
            vec![ColumnKind::Categorical],
            rows.iter()
                .map(|(x, y)| (vec![Value::from(*x)], Value::from(*y)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn joint_probability_examples() {
        let one = cat(&[("a", "Y")]);
        let p = |d: &InMemoryDataset, c: &[&str]| {
            let c: Vec<Value> = c.iter().map(|s| Value::from(*s)).collect();
            oracle_joint_probability(d, Binning::Ewb, 4, &c).unwrap()
        };
        assert_eq!(p(&one, &["a", "Y"]), 1.0);
        assert_eq!(p(&one, &["b", "Y"]), 0.0);
        let four = cat(&[("a", "Y"), ("a", "N"), ("b", "N"), ("b", "N")]);
        assert_eq!(p(&four, &["a", "N"]), 0.25);
        assert_eq!(p(&four, &["b", "N"]), 0.5);
        assert!(matches!(
            oracle_joint_probability(&four, Binning::Ewb, 4, &[Value::from("a")]),
            Err(Error::ArityMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn predict_examples() {
        let data = cat(&[("k", "A"), ("k", "A"), ("k", "A"), ("k", "B"), ("z", "C"), ("w", "C"), ("v", "C"), ("u", "C")]);
        let m = OracleModel::fit(&data, Binning::Eqrb, 3).unwrap();
        assert_eq!(m.predict(&[Value::from("k")]).unwrap(), (Value::from("A"), true));
        assert_eq!(m.predict(&[Value::from("new")]).unwrap(), (Value::from("C"), false));
        assert_eq!(m.predict(&[Value::Null]).unwrap(), (Value::from("C"), false));

        let tie = cat(&[("k", "B"), ("k", "A"), ("k", "B"), ("k", "A")]);
        let m = OracleModel::fit(&tie, Binning::Ewb, 2).unwrap();
        assert_eq!(m.predict(&[Value::from("k")]).unwrap().0, Value::from("A"));
        assert_eq!(m.majority_class(), &Value::from("A"));
    }

    #[test]
    fn rank_bins_match_hand_execution() {
        let (bins, q) = fit_quantizer(&[10.0, 20.0, 20.0, 30.0], Binning::Eqrb, 2);
        assert_eq!(bins, [1, 1, 2, 2]);
        assert_eq!(q.apply(20.0), 1);
        assert_eq!(q.apply(1000.0), 2);
        assert_eq!(q.apply(-5.0), 1);
        let (bins, _) = fit_quantizer(&[7.0], Binning::Eqrb, 5);
        assert_eq!(bins, [5]);
    }

    #[test]
    fn width_bins() {
        assert_eq!(width_bin(5.0, 0.0, 10.0, 60), 30);
        assert_eq!(width_bin(0.0, 0.0, 10.0, 60), 1);
        assert_eq!(width_bin(10.0, 0.0, 10.0, 60), 60);
        assert_eq!(width_bin(-3.0, 0.0, 10.0, 60), 1);
        assert_eq!(width_bin(3.0, 3.0, 3.0, 60), 1);
    }

    #[test]
    fn mutual_information_examples() {
        let ints = |v: &[i64]| v.iter().map(|&i| Value::Integer(i)).collect::<Vec<_>>();
        let parity = ints(&[0, 1, 0, 1]);
        assert_eq!(oracle_mutual_information(&parity, &ints(&[7, 7, 7, 7]), Quantization::None), 0.0);
        assert_eq!(oracle_mutual_information(&parity, &parity, Quantization::None), 1.0);
        let x = ints(&[0, 1, 2, 3, 0, 1, 2, 3]);
        let y = ints(&[0, 1, 0, 1, 0, 1, 0, 1]);
        assert_eq!(oracle_mutual_information(&x, &y, Quantization::None), 1.0);
        assert_eq!(oracle_entropy(&x), 2.0);
    }

    #[test]
    fn duplication_keeps_predictions() {
        let base = cat(&[("a", "X"), ("a", "Y"), ("a", "Y"), ("b", "X")]);
        let mut rows = Vec::new();
        for _ in 0..7 {
            rows.extend(base.rows().iter().cloned());
        }
        let big = InMemoryDataset::new(base.kinds().to_vec(), rows).unwrap();
        let (m1, m7) = (
            OracleModel::fit(&base, Binning::Ewb, 3).unwrap(),
            OracleModel::fit(&big, Binning::Ewb, 3).unwrap(),
        );
        for x in ["a", "b", "c"] {
            let row = [Value::from(x)];
            assert_eq!(m1.predict(&row).unwrap(), m7.predict(&row).unwrap());
        }
    }
}
