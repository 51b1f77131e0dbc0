//! Monotone piecewise-cubic interpolation of a tabulated increasing function,
//! with inversion on the table.
//!
//! Tangents follow the Fritsch–Carlson construction (secant averages, zeroed
//! at sign changes, clamped to three times the cell secant) so the cubic
//! Hermite interpolant preserves strict monotonicity of the data.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("table needs at least two nodes, got {0}")]
    TooFewNodes(usize),
    #[error("table abscissae must be strictly increasing and finite")]
    NonMonotoneAbscissae,
    #[error("table ordinates must be strictly increasing and finite")]
    NonMonotoneOrdinates,
}

#[derive(Debug, Clone)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    tangents: Vec<f64>,
}

impl MonotoneTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, InterpError> {
        if xs.len() < 2 {
            return Err(InterpError::TooFewNodes(xs.len()));
        }
        assert_eq!(xs.len(), ys.len());
        if !strictly_increasing(&xs) {
            return Err(InterpError::NonMonotoneAbscissae);
        }
        if !strictly_increasing(&ys) {
            return Err(InterpError::NonMonotoneOrdinates);
        }
        let tangents = fritsch_carlson_tangents(&xs, &ys);
        Ok(MonotoneTable { xs, ys, tangents })
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.xs
    }

    pub fn ordinates(&self) -> &[f64] {
        &self.ys
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().unwrap())
    }

    /// Interpolated value, or `None` outside the tabulated interval.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.x_range();
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let i = cell_index(&self.xs, x);
        Some(self.eval_in_cell(i, x))
    }

    /// Abscissa with interpolated value `y`, or `None` outside the range.
    /// Locates the cell on the monotone table, then bisects the Hermite
    /// cubic inside it down to machine width.
    pub fn invert(&self, y: f64) -> Option<f64> {
        let (lo, hi) = self.y_range();
        if !(lo..=hi).contains(&y) {
            return None;
        }
        let i = cell_index(&self.ys, y);
        if y == self.ys[i] {
            return Some(self.xs[i]);
        }
        if y == self.ys[i + 1] {
            return Some(self.xs[i + 1]);
        }
        let mut a = self.xs[i];
        let mut b = self.xs[i + 1];
        // f is increasing on the cell: f(a) <= y <= f(b).
        for _ in 0..64 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.eval_in_cell(i, mid) < y {
                a = mid;
            } else {
                b = mid;
            }
        }
        Some(0.5 * (a + b))
    }

    fn eval_in_cell(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        self.ys[i] * h00
            + self.ys[i + 1] * h01
            + h * (self.tangents[i] * h10 + self.tangents[i + 1] * h11)
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

/// Index `i` with `table[i] <= v <= table[i+1]`.
fn cell_index(table: &[f64], v: f64) -> usize {
    let i = table.partition_point(|&t| t <= v);
    i.saturating_sub(1).min(table.len() - 2)
}

fn fritsch_carlson_tangents(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let secants: Vec<f64> = (0..n - 1)
        .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
        .collect();
    let mut m = vec![0.0; n];
    m[0] = boundary_tangent(
        xs[1] - xs[0],
        xs[2] - xs[1],
        secants[0],
        secants[1],
    );
    m[n - 1] = boundary_tangent(
        xs[n - 1] - xs[n - 2],
        xs[n - 2] - xs[n - 3],
        secants[n - 2],
        secants[n - 3],
    );
    for i in 1..n - 1 {
        m[i] = if secants[i - 1] * secants[i] > 0.0 {
            0.5 * (secants[i - 1] + secants[i])
        } else {
            0.0
        };
    }
    // Clamp to 3x the adjacent secant to keep the cubic monotone.
    for i in 0..n - 1 {
        let d = secants[i];
        if d != 0.0 {
            if m[i] / d > 3.0 {
                m[i] = 3.0 * d;
            }
            if m[i + 1] / d > 3.0 {
                m[i + 1] = 3.0 * d;
            }
        }
    }
    m
}

/// Second-order one-sided tangent from the two cells adjoining an endpoint
/// (`near` is the cell at the boundary), safeguarded as in pchip.
fn boundary_tangent(h_near: f64, h_far: f64, d_near: f64, d_far: f64) -> f64 {
    let t = ((2.0 * h_near + h_far) * d_near - h_near * d_far) / (h_near + h_far);
    if t * d_near <= 0.0 {
        0.0
    } else if d_near * d_far < 0.0 && t.abs() > 3.0 * d_near.abs() {
        3.0 * d_near
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sinh_table(step: f64, half_width: f64) -> MonotoneTable {
        let n = (half_width / step).round() as i64;
        let xs: Vec<f64> = (-n..=n).map(|k| k as f64 * step).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sinh()).collect();
        MonotoneTable::new(xs, ys).unwrap()
    }

    #[test]
    fn nodes_are_reproduced_exactly() {
        let t = sinh_table(0.01, 2.0);
        assert_eq!(t.eval(0.5).unwrap(), 0.5f64.sinh());
        assert_eq!(t.eval(-2.0).unwrap(), (-2.0f64).sinh());
        assert_eq!(t.eval(2.0).unwrap(), 2.0f64.sinh());
    }

    #[test]
    fn midpoints_track_the_function() {
        let t = sinh_table(0.01, 3.0);
        for k in 0..97 {
            let x = -2.885 + 0.06 * k as f64;
            let err = (t.eval(x).unwrap() - x.sinh()).abs();
            assert!(err < 1e-8, "x={x} err={err}");
        }
        // Boundary cells use one-sided tangents and are a little coarser.
        for x in [-2.9995, 2.9995] {
            let err = (t.eval(x).unwrap() - x.sinh()).abs();
            assert!(err < 1e-5, "x={x} err={err}");
        }
    }

    #[test]
    fn invert_round_trips() {
        let t = sinh_table(0.01, 3.0);
        for k in 0..=58 {
            let x = -2.9 + 0.1 * k as f64;
            let y = t.eval(x).unwrap();
            let back = t.invert(y).unwrap();
            assert!((back - x).abs() < 1e-12, "x={x} back={back}");
        }
    }

    #[test]
    fn out_of_range_is_none() {
        let t = sinh_table(0.1, 1.0);
        assert!(t.eval(1.5).is_none());
        assert!(t.invert(100.0).is_none());
        assert!(t.eval(1.0).is_some());
    }

    #[test]
    fn rejects_non_monotone_data() {
        assert!(MonotoneTable::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]).is_err());
        assert!(MonotoneTable::new(vec![0.0, 0.0, 2.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(matches!(
            MonotoneTable::new(vec![0.0], vec![0.0]),
            Err(InterpError::TooFewNodes(1))
        ));
    }
}
