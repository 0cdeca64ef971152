//! Pupil-period panel observations.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

type Accessor = Box<dyn Fn(&PanelRow) -> f64>;

/// One pupil observed in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub pupil_id: u64,
    /// Cluster key.
    pub school_id: u64,
    pub municipality_id: u64,
    pub period: u32,
    /// Post-treatment period indicator.
    pub post: bool,
    /// Treatment group (public school).
    pub is_public: bool,
    pub is_anglophone: bool,
    /// Grade 5/6 rather than grade 2.
    pub grade_high: bool,
    pub age: f64,
    pub girl: f64,
    pub books: f64,
    pub electricity: f64,
    /// School covariates `w1..wK`.
    pub w: Vec<f64>,
    pub score_math: f64,
    pub score_lit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Id,
    Cluster,
    Period,
    Treatment,
    Covariate,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub role: ColumnRole,
}

/// Fixed leading columns; `w1..wK` follow, then the outcomes.
pub const LEADING_COLUMNS: [(&str, ColumnRole); 12] = [
    ("pupil_id", ColumnRole::Id),
    ("school_id", ColumnRole::Cluster),
    ("municipality_id", ColumnRole::Id),
    ("period", ColumnRole::Period),
    ("post", ColumnRole::Period),
    ("public", ColumnRole::Treatment),
    ("anglophone", ColumnRole::Covariate),
    ("grade_high", ColumnRole::Covariate),
    ("age", ColumnRole::Covariate),
    ("girl", ColumnRole::Covariate),
    ("books", ColumnRole::Covariate),
    ("electricity", ColumnRole::Covariate),
];

pub const OUTCOME_COLUMNS: [&str; 2] = ["score_math", "score_lit"];

/// Pupil-level covariates as they appear in the schema.
pub const PUPIL_COVARIATES: [&str; 4] = ["age", "girl", "books", "electricity"];

/// Counts of rows in each period-by-group cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub pre_private: usize,
    pub post_private: usize,
    pub pre_public: usize,
    pub post_public: usize,
}

impl CellCounts {
    /// Errors naming the first empty cell.
    pub fn require_all(&self) -> Result<()> {
        let cells = [
            (self.pre_private, "post = 0, public = 0"),
            (self.post_private, "post = 1, public = 0"),
            (self.pre_public, "post = 0, public = 1"),
            (self.post_public, "post = 1, public = 1"),
        ];
        match cells.iter().find(|(n, _)| *n == 0) {
            Some((_, label)) => Err(Error::EmptyCell((*label).to_string())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PanelDataset {
    rows: Vec<PanelRow>,
    n_w: usize,
}

impl PanelDataset {
    /// Builds a dataset, checking that school attributes are time-invariant,
    /// every row carries the same number of school covariates, all values are
    /// finite, and no pupil appears twice in a period.
    pub fn new(rows: Vec<PanelRow>) -> Result<Self> {
        let n_w = rows.first().map_or(0, |r| r.w.len());
        let mut schools: HashMap<u64, (bool, bool, u64)> = HashMap::new();
        let mut seen: HashMap<(u64, u32), usize> = HashMap::new();
        for (i, row) in rows.iter().enumerate() {
            if row.w.len() != n_w {
                return Err(domain(format!(
                    "row {i}: expected {n_w} school covariates, found {}",
                    row.w.len()
                )));
            }
            let values = [
                row.age,
                row.girl,
                row.books,
                row.electricity,
                row.score_math,
                row.score_lit,
            ];
            if values.iter().chain(&row.w).any(|v| !v.is_finite()) {
                return Err(domain(format!(
                    "row {i} (pupil {}): non-finite value",
                    row.pupil_id
                )));
            }
            let attrs = (row.is_public, row.is_anglophone, row.municipality_id);
            if let Some(prev) = schools.insert(row.school_id, attrs) {
                if prev != attrs {
                    return Err(domain(format!(
                        "school {}: public/anglophone/municipality attributes vary across rows",
                        row.school_id
                    )));
                }
            }
            if let Some(first) = seen.insert((row.pupil_id, row.period), i) {
                return Err(domain(format!(
                    "duplicate pupil_id {} in period {} (rows {first} and {i})",
                    row.pupil_id, row.period
                )));
            }
        }
        Ok(PanelDataset { rows, n_w })
    }

    pub fn rows(&self) -> &[PanelRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<PanelRow> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of school covariates `w1..wK`.
    pub fn n_w(&self) -> usize {
        self.n_w
    }

    /// Builds a dataset with an explicit covariate count, for empty datasets
    /// read from a header-only file.
    pub fn with_w_count(rows: Vec<PanelRow>, n_w: usize) -> Result<Self> {
        let mut ds = PanelDataset::new(rows)?;
        if ds.rows.is_empty() {
            ds.n_w = n_w;
        } else if ds.n_w != n_w {
            return Err(domain(format!(
                "rows carry {} school covariates, header declares {n_w}",
                ds.n_w
            )));
        }
        Ok(ds)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.column_meta().into_iter().map(|c| c.name).collect()
    }

    pub fn column_meta(&self) -> Vec<ColumnMeta> {
        let mut cols: Vec<ColumnMeta> = LEADING_COLUMNS
            .iter()
            .map(|(name, role)| ColumnMeta {
                name: name.to_string(),
                role: *role,
            })
            .collect();
        cols.extend((1..=self.n_w).map(|k| ColumnMeta {
            name: format!("w{k}"),
            role: ColumnRole::Covariate,
        }));
        cols.extend(OUTCOME_COLUMNS.iter().map(|name| ColumnMeta {
            name: name.to_string(),
            role: ColumnRole::Outcome,
        }));
        cols
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.accessor(name).is_some()
    }

    fn accessor(&self, name: &str) -> Option<Accessor> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let f: Accessor = match name {
            "pupil_id" => Box::new(|r| r.pupil_id as f64),
            "school_id" => Box::new(|r| r.school_id as f64),
            "municipality_id" => Box::new(|r| r.municipality_id as f64),
            "period" => Box::new(|r| r.period as f64),
            "post" => Box::new(move |r| flag(r.post)),
            "public" => Box::new(move |r| flag(r.is_public)),
            "anglophone" => Box::new(move |r| flag(r.is_anglophone)),
            "grade_high" => Box::new(move |r| flag(r.grade_high)),
            "age" => Box::new(|r| r.age),
            "girl" => Box::new(|r| r.girl),
            "books" => Box::new(|r| r.books),
            "electricity" => Box::new(|r| r.electricity),
            "score_math" => Box::new(|r| r.score_math),
            "score_lit" => Box::new(|r| r.score_lit),
            other => {
                let k: usize = other.strip_prefix('w')?.parse().ok()?;
                if k == 0 || k > self.n_w {
                    return None;
                }
                Box::new(move |r| r.w[k - 1])
            }
        };
        Some(f)
    }

    /// Values of a named column as reals; flags map to 0/1.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let f = self
            .accessor(name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        Ok(self.rows.iter().map(f).collect())
    }

    /// Product of several columns, for interaction terms.
    pub fn product_column(&self, names: &[String]) -> Result<Vec<f64>> {
        let mut out = vec![1.0; self.rows.len()];
        for name in names {
            for (o, v) in out.iter_mut().zip(self.column(name)?) {
                *o *= v;
            }
        }
        Ok(out)
    }

    pub fn periods(&self) -> BTreeSet<u32> {
        self.rows.iter().map(|r| r.period).collect()
    }

    pub fn n_schools(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.school_id)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn cell_counts(&self) -> CellCounts {
        let mut c = CellCounts::default();
        for r in &self.rows {
            match (r.post, r.is_public) {
                (false, false) => c.pre_private += 1,
                (true, false) => c.post_private += 1,
                (false, true) => c.pre_public += 1,
                (true, true) => c.post_public += 1,
            }
        }
        c
    }

    /// Rows satisfying `keep`, in their original order.
    pub fn filter(&self, keep: impl Fn(&PanelRow) -> bool) -> PanelDataset {
        PanelDataset {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            n_w: self.n_w,
        }
    }

    /// Applies `f` to every row. Callers must not break school-level
    /// invariants.
    pub fn map_rows(&self, f: impl Fn(&mut PanelRow)) -> PanelDataset {
        let mut rows = self.rows.clone();
        rows.iter_mut().for_each(f);
        PanelDataset {
            rows,
            n_w: self.n_w,
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::row;
    use super::*;

    #[test]
    fn columns_and_products() {
        let mut rows = vec![row(1, 1, 0, true, 3.0), row(2, 1, 1, true, 5.0)];
        rows[1].w = vec![2.5];
        rows[0].w = vec![1.5];
        let ds = PanelDataset::new(rows).unwrap();
        assert_eq!(ds.column("post").unwrap(), vec![0.0, 1.0]);
        assert_eq!(ds.column("w1").unwrap(), vec![1.5, 2.5]);
        assert!(matches!(ds.column("w2"), Err(Error::MissingColumn(_))));
        assert!(matches!(ds.column("w0"), Err(Error::MissingColumn(_))));
        let p = ds
            .product_column(&["post".into(), "public".into(), "w1".into()])
            .unwrap();
        assert_eq!(p, vec![0.0, 2.5]);
        assert_eq!(ds.column_names().last().unwrap(), "score_lit");
        assert_eq!(ds.column_names()[12], "w1");
    }

    #[test]
    fn rejects_inconsistent_school_attributes() {
        let rows = vec![row(1, 1, 0, true, 3.0), row(2, 1, 1, false, 5.0)];
        assert!(PanelDataset::new(rows).is_err());
    }

    #[test]
    fn rejects_duplicate_pupil_in_period() {
        let rows = vec![row(1, 1, 0, true, 3.0), row(1, 1, 0, true, 5.0)];
        let err = PanelDataset::new(rows).unwrap_err();
        assert!(err.to_string().contains("duplicate pupil_id 1"));
        // Same pupil across periods is fine.
        assert!(PanelDataset::new(vec![row(1, 1, 0, true, 3.0), row(1, 1, 1, true, 5.0)]).is_ok());
    }

    #[test]
    fn cell_counts_name_empty_cell() {
        let ds = PanelDataset::new(vec![row(1, 1, 0, true, 3.0), row(2, 1, 1, true, 5.0)]).unwrap();
        let err = ds.cell_counts().require_all().unwrap_err();
        assert!(matches!(err, Error::EmptyCell(ref s) if s == "post = 0, public = 0"));
    }
}
