//! Uniform cell partitions, cell-average states and grid norms.

use crate::error::{Error, Result};
use crate::num::{lit, Real};

/// Smallest partition the limited linear reconstruction can work on.
pub const MIN_CELLS: usize = 3;

/// Uniform partition of `[s_min, s_max]` into `n_cells` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    s_min: T,
    s_max: T,
    ds: T,
    centers: Vec<T>,
    edges: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(s_min: T, s_max: T, n_cells: usize) -> Result<Self> {
        if !(s_min.is_finite() && s_max.is_finite()) || s_max <= s_min {
            return Err(Error::Grid(format!(
                "degenerate interval [{s_min}, {s_max}]"
            )));
        }
        if n_cells < MIN_CELLS {
            return Err(Error::Grid(format!(
                "{n_cells} cells, at least {MIN_CELLS} required for the reconstruction stencil"
            )));
        }
        let n = T::from_usize(n_cells).ok_or_else(|| Error::Grid("cell count overflow".into()))?;
        let ds = (s_max - s_min) / n;
        let mut edges: Vec<T> = (0..=n_cells)
            .map(|i| s_min + ds * T::from_usize(i).unwrap())
            .collect();
        edges[n_cells] = s_max;
        let two = lit::<T>(2.0);
        let centers = edges.windows(2).map(|w| (w[0] + w[1]) / two).collect();
        Ok(Self {
            s_min,
            s_max,
            ds,
            centers,
            edges,
        })
    }

    pub fn s_min(&self) -> T {
        self.s_min
    }

    pub fn s_max(&self) -> T {
        self.s_max
    }

    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    /// Cell width.
    pub fn ds(&self) -> T {
        self.ds
    }

    /// Cell midpoints `s_i`.
    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    /// Interface points `s_{i-1/2}`, `n_cells + 1` of them.
    pub fn edges(&self) -> &[T] {
        &self.edges
    }
}

/// Same as [`Grid::new`].
pub fn build_grid<T: Real>(s_min: T, s_max: T, n_cells: usize) -> Result<Grid<T>> {
    Grid::new(s_min, s_max, n_cells)
}

/// Cell averages at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T> {
    values: Vec<T>,
    time: T,
}

impl<T: Real> State<T> {
    /// Validates length against the grid and finiteness of every entry.
    pub fn new(grid: &Grid<T>, values: Vec<T>, time: T) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::StateLength {
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        if let Some(cell) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Blowup { cell, stage: None });
        }
        Ok(Self { values, time })
    }

    pub(crate) fn from_parts(values: Vec<T>, time: T) -> Self {
        Self { values, time }
    }

    pub fn zeros(grid: &Grid<T>) -> Self {
        Self {
            values: vec![T::zero(); grid.n_cells()],
            time: T::zero(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }
}

/// Affine function `slope * s + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear<T> {
    pub slope: T,
    pub intercept: T,
}

impl<T: Real> Linear<T> {
    pub fn new(slope: T, intercept: T) -> Self {
        Self { slope, intercept }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn eval(&self, s: T) -> T {
        self.slope * s + self.intercept
    }
}

/// Piecewise-affine payoff with declared breakpoints.
///
/// Piece `j` covers `(breaks[j-1], breaks[j]]`; the first piece extends to
/// `-inf`, the last one to `+inf`. Jumps are allowed at breakpoints, and a
/// breakpoint itself belongs to the piece on its left.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear<T> {
    breaks: Vec<T>,
    pieces: Vec<Linear<T>>,
}

impl<T: Real> PiecewiseLinear<T> {
    pub fn new(breaks: Vec<T>, pieces: Vec<Linear<T>>) -> Result<Self> {
        if pieces.len() != breaks.len() + 1 {
            return Err(Error::Domain(format!(
                "{} breakpoints need {} pieces, got {}",
                breaks.len(),
                breaks.len() + 1,
                pieces.len()
            )));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("breakpoints must be finite and strictly increasing".into()));
        }
        Ok(Self { breaks, pieces })
    }

    pub fn zero() -> Self {
        Self::affine(T::zero(), T::zero())
    }

    pub fn affine(slope: T, intercept: T) -> Self {
        Self {
            breaks: Vec::new(),
            pieces: vec![Linear::new(slope, intercept)],
        }
    }

    /// `max(s - strike, 0)`.
    pub fn call(strike: T) -> Self {
        Self {
            breaks: vec![strike],
            pieces: vec![Linear::zero(), Linear::new(T::one(), -strike)],
        }
    }

    /// `max(strike - s, 0)`.
    pub fn put(strike: T) -> Self {
        Self {
            breaks: vec![strike],
            pieces: vec![Linear::new(-T::one(), strike), Linear::zero()],
        }
    }

    /// Call payoff alive only strictly above the barrier; zero at `s <= barrier`.
    pub fn knock_out_call(strike: T, barrier: T) -> Self {
        let ramp = Linear::new(T::one(), -strike);
        let cut = if barrier > strike { barrier } else { strike };
        Self {
            breaks: vec![cut],
            pieces: vec![Linear::zero(), ramp],
        }
    }

    pub fn breaks(&self) -> &[T] {
        &self.breaks
    }

    fn piece_index(&self, s: T) -> usize {
        self.breaks.iter().take_while(|&&b| b < s).count()
    }

    pub fn eval(&self, s: T) -> T {
        self.pieces[self.piece_index(s)].eval(s)
    }

    /// Exact mean over `[a, b]`, splitting at interior breakpoints and using
    /// the trapezoid rule on each affine piece.
    pub fn mean_over(&self, a: T, b: T) -> T {
        let two = lit::<T>(2.0);
        let inner: Vec<T> = self
            .breaks
            .iter()
            .copied()
            .filter(|&x| x > a && x < b)
            .collect();
        if inner.is_empty() {
            // The open interval (a, b) lies inside one piece.
            let piece = self.pieces[self.breaks.iter().take_while(|&&x| x <= a).count()];
            return (piece.eval(a) + piece.eval(b)) / two;
        }
        let width = b - a;
        let mut lo = a;
        let mut total = T::zero();
        for hi in inner.into_iter().chain(std::iter::once(b)) {
            let piece = self.pieces[self.breaks.iter().take_while(|&&x| x <= lo).count()];
            total = total + (hi - lo) * (piece.eval(lo) + piece.eval(hi)) / two;
            lo = hi;
        }
        total / width
    }
}

/// Projects a payoff onto cell averages at `t = 0`.
pub fn project_initial<T: Real>(grid: &Grid<T>, payoff: &PiecewiseLinear<T>) -> State<T> {
    let values = grid
        .edges()
        .windows(2)
        .map(|w| payoff.mean_over(w[0], w[1]))
        .collect();
    State::from_parts(values, T::zero())
}

/// `sum_i |u_i - exact(s_i)| * ds`, with the exact solution sampled at cell centers.
pub fn l1_error<T: Real>(grid: &Grid<T>, numeric: &State<T>, exact: impl Fn(T) -> T) -> T {
    grid.centers()
        .iter()
        .zip(numeric.values())
        .map(|(&s, &u)| (u - exact(s)).abs())
        .sum::<T>()
        * grid.ds()
}
