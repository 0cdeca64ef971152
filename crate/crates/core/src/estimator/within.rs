use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::RegressionSpec;
use crate::error::{domain, Result};
use crate::panel::PanelDataset;

/// Columns whose demeaned values all fall below this fraction of their raw
/// scale are reported as absorbed by the fixed effects.
pub const ABSORPTION_TOLERANCE: f64 = 1e-10;

/// Row-to-group map for demeaning.
#[derive(Debug, Clone)]
pub struct GroupIndex {
    group_of: Vec<usize>,
    sizes: Vec<usize>,
}

/// Hash key for a real-valued id column; `-0.0` and `0.0` coincide.
pub(crate) fn key_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

impl GroupIndex {
    /// Groups are numbered by first appearance.
    pub fn from_keys(keys: &[f64]) -> Self {
        let mut lookup: HashMap<u64, usize> = HashMap::new();
        let mut sizes = Vec::new();
        let group_of = keys
            .iter()
            .map(|&k| {
                let next = lookup.len();
                let g = *lookup.entry(key_bits(k)).or_insert(next);
                if g == sizes.len() {
                    sizes.push(0);
                }
                sizes[g] += 1;
                g
            })
            .collect();
        GroupIndex { group_of, sizes }
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn len(&self) -> usize {
        self.group_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_of.is_empty()
    }

    /// Subtracts group means. Values constant within a group demean to an
    /// exact zero.
    pub fn demean(&self, values: &[f64]) -> Vec<f64> {
        let g = self.n_groups();
        let mut sum = vec![0.0; g];
        let mut lo = vec![f64::INFINITY; g];
        let mut hi = vec![f64::NEG_INFINITY; g];
        for (&grp, &v) in self.group_of.iter().zip(values) {
            sum[grp] += v;
            lo[grp] = lo[grp].min(v);
            hi[grp] = hi[grp].max(v);
        }
        let mean: Vec<f64> = sum
            .iter()
            .zip(&self.sizes)
            .map(|(s, &n)| s / n as f64)
            .collect();
        self.group_of
            .iter()
            .zip(values)
            .map(|(&grp, &v)| {
                if lo[grp] == hi[grp] {
                    0.0
                } else {
                    v - mean[grp]
                }
            })
            .collect()
    }
}

/// Demeans `values` within the groups given by `groups`.
pub fn demean_by_group(values: &[f64], groups: &[f64]) -> Result<Vec<f64>> {
    if values.len() != groups.len() {
        return Err(domain(format!(
            "{} values but {} group labels",
            values.len(),
            groups.len()
        )));
    }
    Ok(GroupIndex::from_keys(groups).demean(values))
}

/// A design and outcome after within-group demeaning.
#[derive(Debug, Clone)]
pub struct WithinDesign {
    /// Demeaned regressors, absorbed columns removed.
    pub design: DMatrix<f64>,
    pub outcome: DVector<f64>,
    /// Names of the columns kept in `design`.
    pub names: Vec<String>,
    /// Terms constant within every group, dropped from `design`.
    pub absorbed: Vec<String>,
    pub n_groups: usize,
}

/// Demeans the outcome and every regressor of `spec` by its fixed-effect
/// groups. Regressors constant within all groups are reported in
/// `absorbed` rather than failing the fit.
pub fn within_transform(dataset: &PanelDataset, spec: &RegressionSpec) -> Result<WithinDesign> {
    let fe = spec
        .fixed_effect
        .as_deref()
        .ok_or_else(|| domain("within transformation needs a fixed-effect column"))?;
    let groups = GroupIndex::from_keys(&dataset.column(fe)?);
    let outcome = groups.demean(&dataset.column(&spec.outcome)?);

    let mut names = Vec::new();
    let mut absorbed = Vec::new();
    let mut columns = Vec::new();
    for (name, raw) in spec.term_columns(dataset)? {
        let scale = raw.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let demeaned = groups.demean(&raw);
        if demeaned
            .iter()
            .all(|v| v.abs() <= ABSORPTION_TOLERANCE * scale)
        {
            absorbed.push(name);
        } else {
            names.push(name);
            columns.push(demeaned);
        }
    }
    let n = dataset.len();
    let design = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    Ok(WithinDesign {
        design,
        outcome: DVector::from_vec(outcome),
        names,
        absorbed,
        n_groups: groups.n_groups(),
    })
}
