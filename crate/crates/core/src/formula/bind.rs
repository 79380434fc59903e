use crate::dataio::{ColumnData, ColumnKind, Dataset};
use crate::error::{GammError, Result};

use super::{ModelSpec, SmoothKind, SmoothTerm};

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Numeric,
    /// Treatment-coded against `levels[0]`. Ordered factors use the same coding.
    Factor { levels: Vec<String>, ordered: bool },
    /// Coded as a two-level factor with `FALSE` as reference.
    Boolean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundParametric {
    pub name: String,
    pub column: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundBy {
    pub name: String,
    pub column: usize,
    pub levels: Vec<String>,
    pub ordered: bool,
}

impl BoundBy {
    /// Level codes that receive their own block: every level but the
    /// reference for ordered factors (difference smooths), all levels otherwise.
    pub fn block_levels(&self) -> Vec<usize> {
        let first = usize::from(self.ordered);
        (first..self.levels.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSmooth {
    pub term: SmoothTerm,
    /// Column indices of the covariates, in term order. For factor smooths the
    /// numeric covariate comes first.
    pub covariates: Vec<usize>,
    pub by: Option<BoundBy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSpec {
    pub spec: ModelSpec,
    pub response: usize,
    pub parametric: Vec<BoundParametric>,
    pub smooths: Vec<BoundSmooth>,
    pub ar_start: Option<usize>,
}

fn lookup(data: &Dataset, name: &str) -> Result<usize> {
    data.index_of(name)
        .ok_or_else(|| GammError::MissingColumn(name.to_string()))
}

fn mismatch(name: &str, expected: &str, found: ColumnKind) -> GammError {
    GammError::KindMismatch {
        column: name.to_string(),
        expected: expected.to_string(),
        found: found.name().to_string(),
    }
}

fn require_levels(name: &str, levels: &[String]) -> Result<()> {
    if levels.len() < 2 {
        return Err(GammError::Data(format!(
            "factor `{name}` has {} level(s); at least 2 are required",
            levels.len()
        )));
    }
    Ok(())
}

/// Resolves every column a spec references and checks kinds.
pub fn validate_against(spec: &ModelSpec, data: &Dataset) -> Result<BoundSpec> {
    spec.check_invariants()?;
    let response = lookup(data, &spec.response)?;
    let kind = data.columns()[response].kind();
    if kind != ColumnKind::Numeric {
        return Err(mismatch(&spec.response, "numeric", kind));
    }

    let mut parametric = Vec::new();
    for name in &spec.parametric_terms {
        let column = lookup(data, name)?;
        let col = &data.columns()[column];
        let kind = match col.data() {
            ColumnData::Numeric(_) => ParamKind::Numeric,
            ColumnData::Factor {
                levels, ordered, ..
            } => {
                require_levels(name, levels)?;
                ParamKind::Factor {
                    levels: levels.clone(),
                    ordered: *ordered,
                }
            }
            ColumnData::Boolean(_) => ParamKind::Boolean,
        };
        parametric.push(BoundParametric {
            name: name.clone(),
            column,
            kind,
        });
    }

    let mut smooths = Vec::new();
    for term in &spec.smooth_terms {
        let mut covariates: Vec<usize> = term
            .covariates
            .iter()
            .map(|c| lookup(data, c))
            .collect::<Result<_>>()?;
        let kinds: Vec<ColumnKind> = covariates
            .iter()
            .map(|&c| data.columns()[c].kind())
            .collect();
        match term.kind {
            SmoothKind::Tprs | SmoothKind::Tensor => {
                for (name, &k) in term.covariates.iter().zip(&kinds) {
                    if k != ColumnKind::Numeric {
                        return Err(mismatch(name, "numeric", k));
                    }
                }
            }
            SmoothKind::FactorSmooth => {
                let (numeric, factor) = match (kinds[0], kinds[1]) {
                    (ColumnKind::Numeric, f) if f.is_factor() => (0, 1),
                    (f, ColumnKind::Numeric) if f.is_factor() => (1, 0),
                    (ColumnKind::Numeric, other) => {
                        return Err(mismatch(&term.covariates[1], "factor", other))
                    }
                    (other, _) => return Err(mismatch(&term.covariates[0], "numeric", other)),
                };
                covariates = vec![covariates[numeric], covariates[factor]];
                let levels = data.columns()[covariates[1]].levels().unwrap_or(&[]);
                require_levels(&term.covariates[factor], levels)?;
            }
            SmoothKind::RandomEffect => {
                if !kinds[0].is_factor() {
                    return Err(mismatch(&term.covariates[0], "factor", kinds[0]));
                }
                if let Some(&k) = kinds.get(1) {
                    if !(k.is_factor() || k == ColumnKind::Numeric) {
                        return Err(mismatch(&term.covariates[1], "factor or numeric", k));
                    }
                }
            }
        }
        let by = match &term.by_var {
            None => None,
            Some(name) => {
                let column = lookup(data, name)?;
                let col = &data.columns()[column];
                let (levels, ordered) = match col.data() {
                    ColumnData::Factor {
                        levels, ordered, ..
                    } => (levels.clone(), *ordered),
                    _ => return Err(mismatch(name, "factor", col.kind())),
                };
                require_levels(name, &levels)?;
                Some(BoundBy {
                    name: name.clone(),
                    column,
                    levels,
                    ordered,
                })
            }
        };
        smooths.push(BoundSmooth {
            term: term.clone(),
            covariates,
            by,
        });
    }

    let ar_start = match &spec.ar_start_column {
        None => None,
        Some(name) => {
            let column = lookup(data, name)?;
            let kind = data.columns()[column].kind();
            if kind != ColumnKind::Boolean {
                return Err(mismatch(name, "boolean", kind));
            }
            Some(column)
        }
    };

    Ok(BoundSpec {
        spec: spec.clone(),
        response,
        parametric,
        smooths,
        ar_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Column;
    use crate::formula::parse_formula;

    fn data() -> Dataset {
        Dataset::new(vec![
            Column::numeric("y", vec![1.0, 2.0, 3.0, 4.0]),
            Column::numeric("Time", vec![0.0, 1.0, 2.0, 3.0]),
            Column::factor("g", &["a", "b", "a", "b"]),
            Column::factor_with_levels(
                "Ord",
                &["L1", "L2", "L3", "L4"],
                vec!["L1".into(), "L2".into(), "L3".into(), "L4".into()],
                true,
            )
            .unwrap(),
            Column::boolean("start", vec![true, false, true, false]),
        ])
        .unwrap()
    }

    #[test]
    fn absent_column_named() {
        let spec = parse_formula("y ~ s(Freq)").unwrap();
        match validate_against(&spec, &data()) {
            Err(GammError::MissingColumn(c)) => assert_eq!(c, "Freq"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ordered_by_marks_difference_levels() {
        let spec = parse_formula("y ~ s(Time) + s(Time, by=Ord)").unwrap();
        let bound = validate_against(&spec, &data()).unwrap();
        let by = bound.smooths[1].by.as_ref().unwrap();
        assert!(by.ordered);
        assert_eq!(by.block_levels(), vec![1, 2, 3]);
    }

    #[test]
    fn kind_mismatches() {
        let d = data();
        for text in [
            "y ~ s(g)",
            "y ~ s(Time, by=start)",
            "y ~ s(Time, y2, bs=\"fs\")",
            "y ~ s(Time, Time2, bs=\"fs\")",
            "g ~ Time",
        ] {
            assert!(validate_against(&parse_formula(text).unwrap(), &d).is_err(), "{text}");
        }
        let spec = parse_formula("y ~ Time")
            .unwrap()
            .with_ar(0.3, Some("g".into()))
            .unwrap();
        assert!(matches!(
            validate_against(&spec, &d),
            Err(GammError::KindMismatch { .. })
        ));
    }

    #[test]
    fn factor_smooth_order_normalized() {
        let spec = parse_formula("y ~ s(g, Time, bs=\"fs\", k=3)").unwrap();
        let bound = validate_against(&spec, &data()).unwrap();
        assert_eq!(bound.smooths[0].covariates, vec![1, 2]);
    }

    #[test]
    fn single_level_by_factor_rejected() {
        let d = data()
            .with_column(Column::factor("one", &["z", "z", "z", "z"]))
            .unwrap();
        let spec = parse_formula("y ~ s(Time, by=one)").unwrap();
        assert!(matches!(validate_against(&spec, &d), Err(GammError::Data(_))));
    }
}
