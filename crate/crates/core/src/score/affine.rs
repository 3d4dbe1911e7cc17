use super::{EvalCtx, ScoreField};
use crate::error::{Error, Result};

/// `s(t, x) = A(t) x + c(t)` with `A`, `c` piecewise linear on a time grid
/// and held constant outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineScoreFamily {
    grid: Vec<f64>,
    slope: Vec<f64>,
    offset: Vec<Vec<f64>>,
    dim: usize,
}

impl AffineScoreFamily {
    pub fn new(grid: Vec<f64>, slope: Vec<f64>, offset: Vec<Vec<f64>>) -> Result<Self> {
        if grid.is_empty() || grid.len() != slope.len() || grid.len() != offset.len() {
            return Err(Error::Config("affine family needs equal-length, non-empty grid/A/c".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("affine time grid must be strictly increasing".into()));
        }
        let dim = offset[0].len();
        if dim == 0 || offset.iter().any(|c| c.len() != dim) {
            return Err(Error::Config("affine offsets must share a dimension >= 1".into()));
        }
        Ok(Self { grid, slope, offset, dim })
    }

    /// Time-independent `A x + c`.
    pub fn constant(a: f64, c: Vec<f64>) -> Result<Self> {
        Self::new(vec![0.0], vec![a], vec![c])
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slope
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.offset
    }

    /// Same family with every slope shifted by `da`.
    pub fn shift_slope(&self, da: f64) -> Self {
        let mut out = self.clone();
        out.slope.iter_mut().for_each(|a| *a += da);
        out
    }

    /// Same family with offset coordinate `k` shifted by `dc`.
    pub fn shift_offset(&self, k: usize, dc: f64) -> Self {
        let mut out = self.clone();
        out.offset.iter_mut().for_each(|c| c[k] += dc);
        out
    }

    /// Interpolation cell and weight for `t`.
    fn locate(&self, t: f64) -> (usize, usize, f64) {
        let n = self.grid.len();
        if n == 1 || t <= self.grid[0] {
            return (0, 0, 0.0);
        }
        if t >= self.grid[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let j = self.grid.partition_point(|&g| g <= t);
        let (t0, t1) = (self.grid[j - 1], self.grid[j]);
        (j - 1, j, (t - t0) / (t1 - t0))
    }

    pub fn slope_at(&self, t: f64) -> f64 {
        let (i, j, w) = self.locate(t);
        (1.0 - w) * self.slope[i] + w * self.slope[j]
    }

    pub fn offset_at(&self, t: f64, out: &mut [f64]) {
        let (i, j, w) = self.locate(t);
        for (k, o) in out.iter_mut().enumerate() {
            *o = (1.0 - w) * self.offset[i][k] + w * self.offset[j][k];
        }
    }
}

impl ScoreField for AffineScoreFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64], _ctx: &mut EvalCtx, out: &mut [f64]) -> Result<()> {
        let a = self.slope_at(t);
        self.offset_at(t, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o += a * xi;
        }
        Ok(())
    }

    fn divergence(&self, t: f64, _x: &[f64]) -> Result<f64> {
        Ok(self.dim as f64 * self.slope_at(t))
    }

    fn directional_curvature(&self, t: f64, _x: &[f64], v: &[f64], _ctx: &mut EvalCtx) -> Result<f64> {
        Ok(self.slope_at(t) * v.iter().map(|a| a * a).sum::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_divergence() {
        let f = AffineScoreFamily::new(vec![0.0, 1.0, 3.0], vec![-1.0, -2.0, 0.0], vec![
            vec![0.0, 1.0],
            vec![2.0, 1.0],
            vec![2.0, -1.0],
        ])
        .unwrap();
        assert_eq!(f.slope_at(0.5), -1.5);
        assert_eq!(f.slope_at(2.0), -1.0);
        assert_eq!(f.slope_at(-4.0), -1.0);
        assert_eq!(f.slope_at(9.0), 0.0);
        let mut c = [0.0; 2];
        f.offset_at(2.0, &mut c);
        assert_eq!(c, [2.0, 0.0]);
        assert_eq!(f.divergence(0.5, &[0.0, 0.0]).unwrap(), -3.0);
        let s = crate::score::eval_vec(&f, 0.5, &[1.0, 2.0], &mut EvalCtx::new(0)).unwrap();
        assert_eq!(s, vec![-1.5 + 1.0, -3.0 + 1.0]);
    }

    #[test]
    fn exact_curvature_matches_default_difference() {
        struct Plain(AffineScoreFamily);
        impl ScoreField for Plain {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn eval(&self, t: f64, x: &[f64], ctx: &mut EvalCtx, out: &mut [f64]) -> Result<()> {
                self.0.eval(t, x, ctx, out)
            }
        }
        let f = AffineScoreFamily::constant(-0.7, vec![0.2, 0.1, 0.0]).unwrap();
        let v = [0.3, -1.2, 0.8];
        let x = [1.0, 2.0, 3.0];
        let mut ctx = EvalCtx::new(0);
        let exact = f.directional_curvature(1.0, &x, &v, &mut ctx).unwrap();
        let fd = Plain(f).directional_curvature(1.0, &x, &v, &mut ctx).unwrap();
        assert!((exact - fd).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(AffineScoreFamily::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![vec![0.0], vec![0.0]]).is_err());
        assert!(AffineScoreFamily::new(vec![], vec![], vec![]).is_err());
    }
}
