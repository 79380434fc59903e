use nalgebra::DMatrix;

use crate::dataio::SeriesIndex;
use crate::error::{GammError, Result};

/// Model rows after the AR(1) transform. Series starts are copied as is.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedSystem {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(GammError::InvalidArgument(format!(
            "rho must lie in [0, 1), got {rho}"
        )));
    }
    Ok(())
}

fn whiten_in_place(v: &mut [f64], starts: &[bool], rho: f64) {
    let scale = 1.0 / (1.0 - rho * rho).sqrt();
    for t in (1..v.len()).rev() {
        if !starts[t] {
            v[t] = (v[t] - rho * v[t - 1]) * scale;
        }
    }
}

/// `ε_t = (e_t − ρ e_{t−1}) / √(1 − ρ²)` within each series.
pub fn whiten_vector(v: &[f64], index: &SeriesIndex, rho: f64) -> Result<Vec<f64>> {
    check_rho(rho)?;
    check_len(v.len(), index)?;
    let mut out = v.to_vec();
    if rho != 0.0 {
        whiten_in_place(&mut out, index.start_flags(), rho);
    }
    Ok(out)
}

fn check_len(n: usize, index: &SeriesIndex) -> Result<()> {
    if index.n_rows() != n {
        return Err(GammError::InvalidArgument(format!(
            "series index covers {} rows, data has {n}",
            index.n_rows()
        )));
    }
    Ok(())
}

pub fn whiten(x: &DMatrix<f64>, y: &[f64], index: &SeriesIndex, rho: f64) -> Result<WhitenedSystem> {
    check_rho(rho)?;
    check_len(y.len(), index)?;
    check_len(x.nrows(), index)?;
    let mut wx = x.clone();
    let mut wy = y.to_vec();
    if rho != 0.0 {
        let starts = index.start_flags();
        for mut col in wx.column_iter_mut() {
            whiten_in_place(col.as_mut_slice(), starts, rho);
        }
        whiten_in_place(&mut wy, starts, rho);
    }
    Ok(WhitenedSystem { x: wx, y: wy, rho })
}

/// Log-determinant of the whitening map, `−((n − n_series)/2)·ln(1 − ρ²)`.
/// Adding its negative to a whitened-scale criterion puts it on the scale of
/// the raw response, which makes fits at different ρ comparable.
pub fn log_det_whitening(index: &SeriesIndex, rho: f64) -> f64 {
    let innovations = (index.n_rows() - index.n_series()) as f64;
    -0.5 * innovations * (1.0 - rho * rho).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rho_is_identity() {
        let x = DMatrix::from_fn(5, 2, |i, j| (i * 3 + j) as f64 * 0.1);
        let y = vec![1.0, 4.0, 2.0, 8.0, 5.0];
        let idx = SeriesIndex::from_flags(&[true, false, false, true, false]).unwrap();
        let w = whiten(&x, &y, &idx, 0.0).unwrap();
        assert_eq!(w.x, x);
        assert_eq!(w.y, y);
    }

    #[test]
    fn hand_computed_single_series() {
        let idx = SeriesIndex::single(3);
        let w = whiten_vector(&[1.0, 2.0, 3.0], &idx, 0.5).unwrap();
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 1.5 / 0.75f64.sqrt()).abs() < 1e-12);
        assert!((w[2] - 2.0 / 0.75f64.sqrt()).abs() < 1e-12);
        assert!((w[1] - 1.7321).abs() < 1e-4 && (w[2] - 2.3094).abs() < 1e-4);
    }

    #[test]
    fn series_starts_untouched() {
        let idx = SeriesIndex::from_flags(&[true, false, false, true, false]).unwrap();
        let y = [3.0, 1.0, 4.0, 1.0, 5.0];
        let w = whiten_vector(&y, &idx, 0.7).unwrap();
        assert_eq!(w[0], 3.0);
        assert_eq!(w[3], 1.0);
        assert!((w[4] - (5.0 - 0.7) / 0.51f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rho_out_of_range() {
        let idx = SeriesIndex::single(2);
        assert!(whiten_vector(&[1.0, 2.0], &idx, 1.0).is_err());
        assert!(whiten_vector(&[1.0, 2.0], &idx, -0.1).is_err());
    }

    #[test]
    fn linear_in_columns() {
        let idx = SeriesIndex::from_flags(&[true, false, false, false, true, false]).unwrap();
        let a = [0.3, -1.0, 2.5, 0.0, 1.5, 7.0];
        let b = [1.0, 2.0, -3.0, 4.0, 0.5, -0.25];
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, z)| 2.0 * x - 0.5 * z).collect();
        let wa = whiten_vector(&a, &idx, 0.4).unwrap();
        let wb = whiten_vector(&b, &idx, 0.4).unwrap();
        let wc = whiten_vector(&combo, &idx, 0.4).unwrap();
        for i in 0..6 {
            assert!((wc[i] - (2.0 * wa[i] - 0.5 * wb[i])).abs() < 1e-12);
        }
    }
}
