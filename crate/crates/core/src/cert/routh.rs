use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{char_poly, Mat, PolyCoeffs};

/// Routh array of a monic polynomial. Row `i` corresponds to `s^(n-i)`;
/// missing trailing entries are zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouthTable {
    pub rows: Vec<Vec<f64>>,
}

impl RouthTable {
    pub fn first_column(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[0]).collect()
    }

    pub fn all_positive(&self) -> bool {
        self.rows.iter().all(|r| r[0] > 0.0)
    }
}

/// Seeds rows 1 and 2 of a Routh array from `1, c₁, …, cₙ`.
pub(crate) fn seed_rows<T: Clone>(coeffs: &[T], zero: T) -> (Vec<T>, Vec<T>) {
    let width = coeffs.len().div_ceil(2);
    let mut top = vec![zero.clone(); width];
    let mut second = vec![zero; width];
    for (k, c) in coeffs.iter().enumerate() {
        if k % 2 == 0 {
            top[k / 2] = c.clone();
        } else {
            second[k / 2] = c.clone();
        }
    }
    (top, second)
}

pub fn routh_table(p: &PolyCoeffs) -> Result<RouthTable> {
    let n = p.degree();
    if n == 0 {
        return Err(Error::InvalidInput("Routh table needs degree >= 1".into()));
    }
    let (top, second) = seed_rows(p.coeffs(), 0.0);
    let width = top.len();
    let mut rows = vec![top, second];
    for i in 2..=n {
        let (prev2, prev1) = (&rows[i - 2], &rows[i - 1]);
        let pivot = prev1[0];
        if pivot == 0.0 {
            return Err(Error::ZeroPivot { row: i });
        }
        let at = |row: &Vec<f64>, j: usize| row.get(j).copied().unwrap_or(0.0);
        let row: Vec<f64> = (0..width)
            .map(|j| (pivot * at(prev2, j + 1) - prev2[0] * at(prev1, j + 1)) / pivot)
            .collect();
        rows.push(row);
    }
    if rows[n][0] == 0.0 {
        return Err(Error::ZeroPivot { row: n + 1 });
    }
    Ok(RouthTable { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HurwitzVerdict {
    Stable,
    Unstable,
    /// A zero pivot made the Routh test inconclusive.
    Inconclusive,
}

/// Routh-based Hurwitz classification of a square matrix.
pub fn hurwitz_verdict(a: &Mat) -> Result<HurwitzVerdict> {
    let p = char_poly(a)?;
    // a non-positive coefficient already rules out stability
    if p.coeffs()[1..].iter().any(|c| *c <= 0.0) {
        return Ok(HurwitzVerdict::Unstable);
    }
    match routh_table(&p) {
        Ok(t) if t.all_positive() => Ok(HurwitzVerdict::Stable),
        Ok(_) => Ok(HurwitzVerdict::Unstable),
        Err(Error::ZeroPivot { .. }) => Ok(HurwitzVerdict::Inconclusive),
        Err(e) => Err(e),
    }
}

/// True iff every eigenvalue of `a` has negative real part (Routh test);
/// inconclusive cases count as not Hurwitz.
pub fn check_hurwitz(a: &Mat) -> bool {
    matches!(hurwitz_verdict(a), Ok(HurwitzVerdict::Stable))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(c: &[f64]) -> PolyCoeffs {
        PolyCoeffs::new(c.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_first_column() {
        let t = routh_table(&poly(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(t.first_column(), vec![1.0, 3.0, 2.0]);
        assert!(t.all_positive());
        let t = routh_table(&poly(&[1.0, -1.0, 1.0])).unwrap();
        assert_eq!(t.first_column(), vec![1.0, -1.0, 1.0]);
        assert!(!t.all_positive());
    }

    #[test]
    fn cubic_by_hand() {
        let t = routh_table(&poly(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(t.first_column(), vec![1.0, 2.0, 1.0, 4.0]);
    }

    #[test]
    fn zero_pivot_surfaces() {
        assert!(matches!(
            routh_table(&poly(&[1.0, 0.0, 1.0])),
            Err(Error::ZeroPivot { row: 2 })
        ));
        // s³ + s² + s + 1 = (s+1)(s²+1) gives a zero row
        assert!(matches!(
            routh_table(&poly(&[1.0, 1.0, 1.0, 1.0])),
            Err(Error::ZeroPivot { .. })
        ));
        assert_eq!(
            hurwitz_verdict(&Mat::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [-1.0, -1.0, -1.0]])).unwrap(),
            HurwitzVerdict::Inconclusive
        );
    }

    #[test]
    fn hurwitz_examples() {
        assert!(check_hurwitz(&Mat::identity(3).scale(-1.0)));
        assert!(check_hurwitz(&Mat::from_rows(&[[0.44, -3.49], [0.27, -1.245]])));
        assert!(!check_hurwitz(&Mat::from_rows(&[[-1.0, 1.0], [-0.2, 1.0]])));
        // marginal: pure rotation
        assert!(!check_hurwitz(&Mat::from_rows(&[[0.0, 1.0], [-1.0, 0.0]])));
    }
}
