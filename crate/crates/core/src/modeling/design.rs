//! Flattening feature values into a numeric design matrix.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::domain::{FeatureEntry, FeaturePlan, FeatureType, FeatureValue, FeatureValueSet, PlanSet, SINGLE_VALUE_KEY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Boolean,
    /// One-hot (or multi-hot) indicator for one category.
    Category,
    /// 1 when the sub-feature has no value.
    Missing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Feature the column was derived from.
    pub feature: String,
    pub kind: ColumnKind,
}

/// Rows are trials in ascending NCT order; columns follow plan-name order,
/// then sub-feature order, then category order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub row_ids: Vec<String>,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<f64>>,
}

fn base_name(plan: &FeaturePlan, sub: &str) -> String {
    if sub == SINGLE_VALUE_KEY || sub == plan.feature_name {
        plan.feature_name.clone()
    } else {
        format!("{}.{}", plan.feature_name, sub)
    }
}

fn numeric(v: &FeatureValue) -> Option<f64> {
    match v {
        FeatureValue::Integer(i) => Some(*i as f64),
        FeatureValue::Float(f) if f.is_finite() => Some(*f),
        FeatureValue::Boolean(b) => Some(if *b { 1.0 } else { 0.0 }),
        _ => None,
    }
}

fn has_category(v: &FeatureValue, cat: &str) -> Option<bool> {
    match v {
        FeatureValue::Category(c) => Some(c == cat),
        FeatureValue::Categories(cs) => Some(cs.iter().any(|c| c == cat)),
        _ => None,
    }
}

/// Column layout implied by a plan set, independent of any values.
pub fn columns_for(plans: &PlanSet) -> Vec<Column> {
    let mut cols = Vec::new();
    for plan in plans.plans() {
        for (sub, ty) in &plan.feature_type {
            let base = base_name(plan, sub);
            let col = |name: String, kind| Column {
                name,
                feature: plan.feature_name.clone(),
                kind,
            };
            match ty {
                FeatureType::Integer | FeatureType::Float => cols.push(col(base.clone(), ColumnKind::Numeric)),
                FeatureType::Boolean => cols.push(col(base.clone(), ColumnKind::Boolean)),
                FeatureType::Categorical | FeatureType::Multicategorical => {
                    for cat in plan.categories(sub) {
                        cols.push(col(format!("{base}={cat}"), ColumnKind::Category));
                    }
                }
            }
            cols.push(col(format!("{base}__missing"), ColumnKind::Missing));
        }
    }
    cols
}

fn encode_entry(plan: &FeaturePlan, entry: Option<&FeatureEntry>, out: &mut Vec<f64>) {
    for (sub, ty) in &plan.feature_type {
        let value = entry.and_then(|e| e.get(sub));
        match ty {
            FeatureType::Integer | FeatureType::Float | FeatureType::Boolean => {
                let x = value.and_then(numeric);
                out.push(x.unwrap_or(0.0));
                out.push(if x.is_some() { 0.0 } else { 1.0 });
            }
            FeatureType::Categorical | FeatureType::Multicategorical => {
                let cats = plan.categories(sub);
                let present =
                    value.is_some_and(|v| matches!(v, FeatureValue::Category(_) | FeatureValue::Categories(_)));
                for cat in cats {
                    let hit = value.and_then(|v| has_category(v, cat)).unwrap_or(false);
                    out.push(if hit { 1.0 } else { 0.0 });
                }
                out.push(if present { 0.0 } else { 1.0 });
            }
        }
    }
}

/// Encode value sets under `plans`. Features absent from a value set are
/// treated as missing.
pub fn encode(plans: &PlanSet, value_sets: &[FeatureValueSet]) -> DesignMatrix {
    let columns = columns_for(plans);
    let mut sets: Vec<&FeatureValueSet> = value_sets.iter().collect();
    sets.sort_by(|a, b| a.nct_id.cmp(&b.nct_id));
    let mut rows = Vec::with_capacity(sets.len());
    for vs in &sets {
        let mut row = Vec::with_capacity(columns.len());
        for plan in plans.plans() {
            encode_entry(plan, vs.values.get(&plan.feature_name), &mut row);
        }
        debug_assert_eq!(row.len(), columns.len());
        rows.push(row);
    }
    DesignMatrix {
        row_ids: sets.iter().map(|v| v.nct_id.clone()).collect(),
        columns,
        rows,
    }
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    /// Column-wise means, used as the attribution background.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.n_cols())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }

    /// Labels aligned with `row_ids`.
    pub fn labels_for(&self, label_of: impl Fn(&str) -> Option<bool>) -> Result<Vec<bool>, ModelError> {
        self.row_ids
            .iter()
            .map(|id| label_of(id).ok_or_else(|| ModelError::Shape(format!("no label for {id}"))))
            .collect()
    }

    /// Rows whose id is in `ids`, order preserved.
    pub fn subset(&self, ids: &BTreeSet<String>) -> DesignMatrix {
        let (row_ids, rows) = self
            .row_ids
            .iter()
            .zip(&self.rows)
            .filter(|(id, _)| ids.contains(*id))
            .map(|(id, r)| (id.clone(), r.clone()))
            .unzip();
        DesignMatrix {
            row_ids,
            columns: self.columns.clone(),
            rows,
        }
    }

    /// Read a matrix written by [`DesignMatrix::write_csv`]. The header must
    /// name exactly `columns`, in order.
    pub fn read_csv<R: Read>(reader: R, columns: &[Column]) -> Result<DesignMatrix, ModelError> {
        let io = |e: csv::Error| ModelError::Io(e.to_string());
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(io)?.clone();
        let names: Vec<&str> = header.iter().skip(1).collect();
        let want: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
        if header.get(0) != Some("nct_id") || names != want {
            return Err(ModelError::Shape(format!(
                "csv header [{}] does not match columns [{}]",
                header.iter().collect::<Vec<_>>().join(","),
                want.join(",")
            )));
        }
        let mut row_ids = Vec::new();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            row_ids.push(rec.get(0).unwrap_or("").to_string());
            let row = rec
                .iter()
                .skip(1)
                .map(|x| {
                    x.parse::<f64>()
                        .map_err(|e| ModelError::Io(format!("bad number '{x}': {e}")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Ok(DesignMatrix {
            row_ids,
            columns: columns.to_vec(),
            rows,
        })
    }

    /// CSV with an `nct_id` column followed by one column per feature
    /// column. Numbers use the shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["nct_id".to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        w.write_record(&header).map_err(|e| ModelError::Io(e.to_string()))?;
        for (id, row) in self.row_ids.iter().zip(&self.rows) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(|e| ModelError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| ModelError::Io(e.to_string()))
    }
}
