//! Discretization of numeric features.
//!
//! Two methods are supported, both producing bin indices in `1..=b`:
//!
//! * **EQRB** (equal quantized rank binning): `ceil(b * rank / m)` where
//!   `rank` is the 1-based row number of the value in ascending order
//!   (ties broken by row id) and `m` the number of rows.
//! * **EWB** (equal width binning): `ceil(b * (x - min) / (max - min))`,
//!   clamped to `1..=b`. A constant column maps to bin 1.
//!
//! Evaluation rows cannot be ranked against the training multiset, so they
//! are binned through the stored [`QuantizationMetadata`] with
//! [`lookup_bin`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{ColumnKind, ValidatedConfig};
use crate::sqlgen::dialect::{string_literal, Dialect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Binning {
    #[serde(rename = "EQRB", alias = "eqrb")]
    Eqrb,
    #[serde(rename = "EWB", alias = "ewb")]
    Ewb,
}

impl Binning {
    pub fn as_str(self) -> &'static str {
        match self {
            Binning::Eqrb => "EQRB",
            Binning::Ewb => "EWB",
        }
    }
}

impl fmt::Display for Binning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Binning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EQRB" => Ok(Binning::Eqrb),
            "EWB" => Ok(Binning::Ewb),
            _ => Err(Error::Schema(format!("unknown binning method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinBound {
    pub bin: u32,
    pub local_min: f64,
    pub local_max: f64,
}

/// Per-feature quantization state; the content of the QMT table.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationMetadata {
    pub feature: String,
    pub method: Binning,
    pub bins: u32,
    pub global_min: f64,
    pub global_max: f64,
    /// Observed bins only, ordered by bin index.
    pub bounds: Vec<BinBound>,
}

impl QuantizationMetadata {
    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.bins < 1 {
            return Err("bins must be >= 1".into());
        }
        if self.global_min > self.global_max {
            return Err("global_min > global_max".into());
        }
        for (i, b) in self.bounds.iter().enumerate() {
            if b.bin < 1 || b.bin > self.bins {
                return Err(format!("bin {} outside 1..={}", b.bin, self.bins));
            }
            if !(self.global_min <= b.local_min
                && b.local_min <= b.local_max
                && b.local_max <= self.global_max)
            {
                return Err(format!("bin {} bounds out of order", b.bin));
            }
            if let Some(prev) = i.checked_sub(1).map(|j| &self.bounds[j]) {
                if prev.bin >= b.bin {
                    return Err("bin indices not strictly increasing".into());
                }
                // EQRB neighbours may share a tied boundary value.
                if prev.local_max > b.local_min {
                    return Err(format!("bins {} and {} overlap", prev.bin, b.bin));
                }
            }
        }
        Ok(())
    }

    fn from_assignments(
        feature: &str,
        method: Binning,
        bins: u32,
        values: &[f64],
        row_bins: &[u32],
    ) -> Self {
        let mut bounds: Vec<BinBound> = Vec::new();
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by_key(|&i| row_bins[i]);
        for i in order {
            let (v, q) = (values[i], row_bins[i]);
            match bounds.last_mut() {
                Some(last) if last.bin == q => {
                    last.local_min = last.local_min.min(v);
                    last.local_max = last.local_max.max(v);
                }
                _ => bounds.push(BinBound {
                    bin: q,
                    local_min: v,
                    local_max: v,
                }),
            }
        }
        let global_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let global_max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        QuantizationMetadata {
            feature: feature.to_owned(),
            method,
            bins,
            global_min,
            global_max,
            bounds,
        }
    }
}

/// Equal width bin of `value` over `[global_min, global_max]`.
pub fn ewb_bin(value: f64, global_min: f64, global_max: f64, bins: u32) -> u32 {
    if global_max == global_min {
        return 1;
    }
    let q = (bins as f64 * (value - global_min) / (global_max - global_min)).ceil();
    if q < 1.0 || q.is_nan() {
        1
    } else if q > bins as f64 {
        bins
    } else {
        q as u32
    }
}

/// Bins every value with EWB over the values' own extrema.
pub fn ewb_fit(feature: &str, values: &[f64], bins: u32) -> Result<(Vec<u32>, QuantizationMetadata)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins < 1 {
        return Err(Error::BadBinCount(0));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let row_bins: Vec<u32> = values.iter().map(|&v| ewb_bin(v, min, max, bins)).collect();
    let meta = QuantizationMetadata::from_assignments(feature, Binning::Ewb, bins, values, &row_bins);
    Ok((row_bins, meta))
}

/// Assigns EQRB bins to `values`, whose slice order is the row-id order
/// used to break ties.
pub fn eqrb_fit(feature: &str, values: &[f64], bins: u32) -> Result<(Vec<u32>, QuantizationMetadata)> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if bins < 1 {
        return Err(Error::BadBinCount(0));
    }
    let m = values.len() as f64;
    let mut order: Vec<usize> = (0..values.len()).collect();
    // Stable sort keeps row-id order among equal values.
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut row_bins = vec![0u32; values.len()];
    for (pos, &row) in order.iter().enumerate() {
        let rank = (pos + 1) as f64;
        row_bins[row] = (bins as f64 * rank / m).ceil() as u32;
    }
    let meta =
        QuantizationMetadata::from_assignments(feature, Binning::Eqrb, bins, values, &row_bins);
    Ok((row_bins, meta))
}

/// Bins an evaluation value against fitted metadata.
///
/// EWB re-applies the formula with the training extrema. EQRB picks the
/// smallest observed bin whose upper bound reaches `value`, or the largest
/// bin when `value` exceeds every bound.
pub fn lookup_bin(value: f64, meta: &QuantizationMetadata) -> u32 {
    match meta.method {
        Binning::Ewb => ewb_bin(value, meta.global_min, meta.global_max, meta.bins),
        Binning::Eqrb => meta
            .bounds
            .iter()
            .find(|b| b.local_max >= value)
            .or(meta.bounds.last())
            .map_or(1, |b| b.bin),
    }
}

/// How quantization expressions obtain their parameters.
#[derive(Debug, Clone, Copy)]
pub enum QuantMode<'a> {
    /// Training: compute bins from the rows of `source`, a complete `SELECT`
    /// exposing `row_key` and the feature columns.
    Fit { source: &'a str },
    /// Evaluation: consult the fitted metadata table.
    Lookup { qmt_table: &'a str },
}

/// SQL fragments that quantize a model's features.
///
/// Row values are referenced through the alias `src`. When `stats` is set it
/// is the body of a one-row derived table that must be joined as `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationSql {
    /// `(feature, expression)` in feature order; categorical features pass
    /// through as plain column references.
    pub columns: Vec<(String, String)>,
    pub stats: Option<String>,
}

pub(crate) const SRC: &str = "src";
pub(crate) const STATS: &str = "g";

pub(crate) fn min_alias(pos: usize) -> String {
    format!("min_{}", pos + 1)
}

pub(crate) fn max_alias(pos: usize) -> String {
    format!("max_{}", pos + 1)
}

/// Clamped EWB expression over `col` with extrema columns of `g`.
pub(crate) fn ewb_expr(
    d: &Dialect,
    col: &str,
    pos: usize,
    bins: u32,
    null_guard: bool,
) -> String {
    let value = d.qualified(SRC, col);
    let guard = if null_guard {
        format!("WHEN {value} IS NULL THEN NULL ")
    } else {
        String::new()
    };
    if bins == 1 {
        return if null_guard {
            format!("CASE {guard}ELSE 1 END")
        } else {
            "1".to_owned()
        };
    }
    let (lo, hi) = (d.qualified(STATS, &min_alias(pos)), d.qualified(STATS, &max_alias(pos)));
    let raw = d.ceil(&format!(
        "{bins} * ({} - {lo}) / ({hi} - {lo})",
        d.cast(&value, d.double_type)
    ));
    format!(
        "CASE {guard}WHEN {hi} = {lo} THEN 1 WHEN {raw} < 1 THEN 1 WHEN {raw} > {bins} THEN {bins} ELSE {} END",
        d.cast(&raw, d.integer_type)
    )
}

/// EQRB training expression: row number over `(value, row_key)`.
pub(crate) fn eqrb_fit_expr(d: &Dialect, col: &str, bins: u32) -> Result<String> {
    d.require_windows()?;
    if bins == 1 {
        return Ok("1".to_owned());
    }
    let rank = format!(
        "ROW_NUMBER() OVER (ORDER BY {}, {})",
        d.qualified(SRC, col),
        d.qualified(SRC, "row_key")
    );
    let ratio = format!(
        "{} / COUNT(*) OVER ()",
        d.cast(&format!("{bins} * {rank}"), d.double_type)
    );
    Ok(d.cast(&d.ceil(&ratio), d.integer_type))
}

/// EQRB evaluation expression: smallest bin whose upper bound reaches the
/// value, else the largest bin; `NULL` stays `NULL`.
pub(crate) fn eqrb_lookup_expr(d: &Dialect, col: &str, qmt_table: &str) -> String {
    let value = d.qualified(SRC, col);
    let qmt = d.quote(qmt_table);
    let feature = string_literal(col);
    format!(
        "CASE WHEN {value} IS NULL THEN NULL ELSE COALESCE(\
         (SELECT MIN(t.{bin}) FROM {qmt} t WHERE t.{name} = {feature} AND t.{lmax} >= {value}), \
         (SELECT MAX(t.{bin}) FROM {qmt} t WHERE t.{name} = {feature})) END",
        bin = d.quote("bin"),
        name = d.quote("feature_name"),
        lmax = d.quote("local_max"),
    )
}

/// Extrema select items for the EWB features of a fit.
pub(crate) fn ewb_fit_stats(d: &Dialect, numeric: &[(usize, &str)]) -> Vec<String> {
    numeric
        .iter()
        .flat_map(|&(pos, col)| {
            let c = d.quote(col);
            [
                format!("{} AS {}", d.cast(&format!("MIN({c})"), d.double_type), d.quote(&min_alias(pos))),
                format!("{} AS {}", d.cast(&format!("MAX({c})"), d.double_type), d.quote(&max_alias(pos))),
            ]
        })
        .collect()
}

/// Renders the quantization expressions for every feature of `config`.
pub fn render_quantization_exprs(
    config: &ValidatedConfig,
    mode: QuantMode<'_>,
    d: &Dialect,
) -> Result<QuantizationSql> {
    let bins = config.bins();
    let numeric: Vec<(usize, &str)> = config.numeric_features().collect();
    let mut columns = Vec::with_capacity(config.features().len());
    for (pos, name, kind) in config.feature_columns() {
        let expr = match (kind, config.binning(), mode) {
            (ColumnKind::Categorical, _, _) => d.qualified(SRC, name),
            (ColumnKind::Numeric, Binning::Ewb, QuantMode::Fit { .. }) => {
                ewb_expr(d, name, pos, bins, false)
            }
            (ColumnKind::Numeric, Binning::Ewb, QuantMode::Lookup { .. }) => {
                ewb_expr(d, name, pos, bins, true)
            }
            (ColumnKind::Numeric, Binning::Eqrb, QuantMode::Fit { .. }) => {
                eqrb_fit_expr(d, name, bins)?
            }
            (ColumnKind::Numeric, Binning::Eqrb, QuantMode::Lookup { qmt_table }) => {
                eqrb_lookup_expr(d, name, qmt_table)
            }
        };
        columns.push((name.to_owned(), expr));
    }

    let stats = match (config.binning(), mode) {
        (Binning::Ewb, _) if numeric.is_empty() || bins == 1 => None,
        (Binning::Ewb, QuantMode::Fit { source }) => Some(format!(
            "SELECT {} FROM ({source}) s",
            ewb_fit_stats(d, &numeric).join(", ")
        )),
        (Binning::Ewb, QuantMode::Lookup { qmt_table }) => {
            let items: Vec<String> = numeric
                .iter()
                .flat_map(|&(pos, col)| {
                    let lit = string_literal(col);
                    let name = d.quote("feature_name");
                    [
                        format!(
                            "MIN(CASE WHEN {name} = {lit} THEN {} END) AS {}",
                            d.quote("global_min"),
                            d.quote(&min_alias(pos))
                        ),
                        format!(
                            "MAX(CASE WHEN {name} = {lit} THEN {} END) AS {}",
                            d.quote("global_max"),
                            d.quote(&max_alias(pos))
                        ),
                    ]
                })
                .collect();
            Some(format!("SELECT {} FROM {}", items.join(", "), d.quote(qmt_table)))
        }
        (Binning::Eqrb, _) => None,
    };
    Ok(QuantizationSql { columns, stats })
}
