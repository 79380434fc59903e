use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::basis::{BlockBasis, ReSecond};
use crate::engine::FittedGamm;
use crate::error::{GammError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReRow {
    /// One level per factor of the term.
    pub levels: Vec<String>,
    pub coefficient: f64,
    /// Posterior standard deviation.
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReTable {
    pub term: String,
    /// Factor names keying the rows.
    pub factors: Vec<String>,
    /// Numeric covariate of a random slope.
    pub slope: Option<String>,
    pub rows: Vec<ReRow>,
}

impl ReTable {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| GammError::Io {
            path: "coefficient output".into(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.factors.clone();
        header.extend(["coefficient".to_string(), "sd".to_string()]);
        w.write_record(&header).map_err(io)?;
        for r in &self.rows {
            let mut rec = r.levels.clone();
            rec.push(format!("{:.6}", r.coefficient));
            rec.push(format!("{:.6}", r.sd));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| GammError::Io {
            path: "coefficient output".into(),
            message: e.to_string(),
        })
    }
}

/// Coefficients of a random-effect term keyed by level combination.
pub fn random_effect_coefs(model: &FittedGamm, label: &str) -> Result<ReTable> {
    let block = model
        .design
        .block(label)
        .ok_or_else(|| GammError::InvalidArgument(format!("no term labelled `{label}`")))?;
    let BlockBasis::RandomEffect { levels, second } = &block.basis else {
        return Err(GammError::InvalidArgument(format!(
            "`{label}` is not a random-effect term"
        )));
    };
    let keys: Vec<Vec<String>> = match second {
        Some(ReSecond::Factor(l2)) => levels
            .iter()
            .flat_map(|a| l2.iter().map(move |b| vec![a.clone(), b.clone()]))
            .collect(),
        _ => levels.iter().map(|a| vec![a.clone()]).collect(),
    };
    let (factors, slope) = match second {
        Some(ReSecond::Factor(_)) => (block.covariates.clone(), None),
        Some(ReSecond::Slope) => (
            vec![block.covariates[0].clone()],
            Some(block.covariates[1].clone()),
        ),
        None => (vec![block.covariates[0].clone()], None),
    };
    let rows = keys
        .into_iter()
        .zip(block.columns.clone())
        .map(|(levels, j)| ReRow {
            levels,
            coefficient: model.beta[j],
            sd: model.v_beta[(j, j)].max(0.0).sqrt(),
        })
        .collect();
    Ok(ReTable {
        term: label.to_string(),
        factors,
        slope,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefCorrelation {
    pub r: f64,
    pub t_stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub n_pairs: usize,
}

/// Pearson correlation with its t test on `pairs − 2` degrees of freedom.
pub fn pearson_test(a: &[f64], b: &[f64]) -> Result<CoefCorrelation> {
    if a.len() != b.len() {
        return Err(GammError::InvalidArgument(
            "correlated vectors differ in length".into(),
        ));
    }
    let n = a.len();
    if n < 3 {
        return Err(GammError::InvalidArgument(format!(
            "a correlation test needs at least 3 pairs, got {n}"
        )));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(GammError::Data(
            "correlation undefined for a constant coefficient vector".into(),
        ));
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2;
    let t_stat = r * (df as f64).sqrt() / (1.0 - r * r).sqrt();
    let p_value = if t_stat.is_finite() {
        let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive df");
        (2.0 * (1.0 - dist.cdf(t_stat.abs()))).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(CoefCorrelation {
        r,
        t_stat,
        df,
        p_value,
        n_pairs: n,
    })
}

/// Correlation between the coefficients of the two levels of
/// `split_factor`, paired by the level of the other factor.
pub fn coef_correlation(table: &ReTable, split_factor: &str) -> Result<CoefCorrelation> {
    if table.factors.len() != 2 {
        return Err(GammError::InvalidArgument(format!(
            "`{}` is not keyed by two factors",
            table.term
        )));
    }
    let s = table
        .factors
        .iter()
        .position(|f| f == split_factor)
        .ok_or_else(|| {
            GammError::InvalidArgument(format!("`{split_factor}` does not key `{}`", table.term))
        })?;
    let other = 1 - s;
    let mut split_levels: Vec<&str> = Vec::new();
    for r in &table.rows {
        if !split_levels.contains(&r.levels[s].as_str()) {
            split_levels.push(&r.levels[s]);
        }
    }
    if split_levels.len() != 2 {
        return Err(GammError::InvalidArgument(format!(
            "`{split_factor}` has {} levels; exactly 2 are needed",
            split_levels.len()
        )));
    }
    let mut pairs: BTreeMap<&str, [Option<f64>; 2]> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in &table.rows {
        let key = r.levels[other].as_str();
        let side = usize::from(r.levels[s] == split_levels[1]);
        let e = pairs.entry(key).or_insert_with(|| {
            order.push(key);
            [None, None]
        });
        e[side] = Some(r.coefficient);
    }
    let (a, b): (Vec<f64>, Vec<f64>) = order
        .iter()
        .filter_map(|k| match pairs[k] {
            [Some(x), Some(y)] => Some((x, y)),
            _ => None,
        })
        .unzip();
    pearson_test(&a, &b)
}
