//! Rating-style CSV ingestion driven by a schema file.
//!
//! The schema is plain text, one `column: kind` line per column used, where
//! kind is `numeric`, `categorical` or `label`; `#` starts a comment.
//! Categorical values get dense indices in first-seen order starting at 1;
//! index 0 is reserved for values never seen while building the mapping.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::nn::{TaskKind, Tensor2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatingSchema {
    pub columns: Vec<(String, ColumnKind)>,
}

impl RatingSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, kind) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `column: kind`, got {line:?}"),
            })?;
            let kind = match kind.trim() {
                "numeric" => ColumnKind::Numeric,
                "categorical" => ColumnKind::Categorical,
                "label" => ColumnKind::Label,
                other => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("unknown column kind {other:?}"),
                    })
                }
            };
            columns.push((name.trim().to_string(), kind));
        }
        let labels = columns.iter().filter(|(_, k)| *k == ColumnKind::Label).count();
        if labels != 1 {
            return Err(Error::InvalidConfig(format!(
                "schema needs exactly one label column, found {labels}"
            )));
        }
        Ok(Self { columns })
    }

    fn names(&self, kind: ColumnKind) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|(_, k)| *k == kind)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Category value → dense index for one column.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryMap {
    pub column: String,
    pub index: BTreeMap<String, usize>,
}

impl CategoryMap {
    pub fn vocab_size(&self) -> usize {
        self.index.len() + 1
    }
}

/// Loads rating files, growing category mappings until frozen.
#[derive(Debug, Clone)]
pub struct RatingLoader {
    pub schema: RatingSchema,
    pub maps: Vec<CategoryMap>,
    /// When set, unseen categories map to 0 instead of extending the mapping.
    pub frozen: bool,
}

impl RatingLoader {
    pub fn new(schema: RatingSchema) -> Self {
        let maps = schema
            .names(ColumnKind::Categorical)
            .into_iter()
            .map(|c| CategoryMap {
                column: c.to_string(),
                index: BTreeMap::new(),
            })
            .collect();
        Self {
            schema,
            maps,
            frozen: false,
        }
    }

    pub fn with_maps(schema: RatingSchema, maps: Vec<CategoryMap>) -> Self {
        Self {
            schema,
            maps,
            frozen: true,
        }
    }

    pub fn load<R: Read>(&mut self, input: R) -> Result<Dataset> {
        let mut reader = csv::Reader::from_reader(input);
        let headers = reader.headers()?.clone();
        let position = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column {name:?}"),
            })
        };
        let cat_cols = self
            .schema
            .names(ColumnKind::Categorical)
            .into_iter()
            .map(position)
            .collect::<Result<Vec<_>>>()?;
        let num_cols = self
            .schema
            .names(ColumnKind::Numeric)
            .into_iter()
            .map(position)
            .collect::<Result<Vec<_>>>()?;
        let label_col = position(self.schema.names(ColumnKind::Label)[0])?;

        let width = cat_cols.len() + num_cols.len();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let field = |c: usize| {
                rec.get(c).map(str::trim).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing field {c}"),
                })
            };
            let number = |c: usize| -> Result<f64> {
                let s = field(c)?;
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line,
                        message: format!("{s:?} is not a finite number"),
                    })
            };
            for (map, &c) in self.maps.iter_mut().zip(&cat_cols) {
                let value = field(c)?.to_string();
                let next = map.index.len() + 1;
                let idx = match map.index.get(&value) {
                    Some(&i) => i,
                    None if self.frozen => 0,
                    None => {
                        map.index.insert(value, next);
                        next
                    }
                };
                inputs.push(idx as f64);
            }
            for &c in &num_cols {
                inputs.push(number(c)?);
            }
            labels.push(number(label_col)?);
        }
        let n = labels.len();
        Dataset::new(
            (0..n as u64).collect(),
            Tensor2D::from_vec(n, width, inputs)?,
            self.maps.iter().map(CategoryMap::vocab_size).collect(),
            Tensor2D::column(&labels)?,
            TaskKind::Regression,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str = "user: categorical\nitem: categorical\nage: numeric  # years\nrating: label\n";
    const DATA: &str = "user,item,age,rating\nu1,i9,30,3.5\nu2,i9,41,4\nu1,i7,30,1\n";

    #[test]
    fn loads_with_reserved_unknown_slot() {
        let schema = RatingSchema::parse(SCHEMA).unwrap();
        let mut loader = RatingLoader::new(schema.clone());
        let ds = loader.load(DATA.as_bytes()).unwrap();
        assert_eq!(ds.vocab_sizes, vec![3, 3]);
        assert_eq!(ds.inputs.row(0), &[1.0, 1.0, 30.0]);
        assert_eq!(ds.inputs.row(2), &[1.0, 2.0, 30.0]);
        assert_eq!(ds.labels.col_values(0), vec![3.5, 4.0, 1.0]);

        let mut again = RatingLoader::new(schema.clone());
        assert_eq!(again.load(DATA.as_bytes()).unwrap(), ds);
        assert_eq!(again.maps, loader.maps);

        let mut frozen = RatingLoader::with_maps(schema, loader.maps.clone());
        let unseen = frozen.load("user,item,age,rating\nu5,i9,1,2\n".as_bytes()).unwrap();
        assert_eq!(unseen.inputs.row(0), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn bad_row_reports_line() {
        let schema = RatingSchema::parse(SCHEMA).unwrap();
        let err = RatingLoader::new(schema)
            .load("user,item,age,rating\nu1,i1,3,2\nu1,i1,x,2\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn schema_errors() {
        assert!(RatingSchema::parse("a: numeric\n").is_err());
        assert!(matches!(RatingSchema::parse("a numeric\nb: label"), Err(Error::Parse { line: 1, .. })));
    }
}
