//! Vinnicombe ν-gap between stable SISO models and nominal selection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::foc::{log_grid, rationalize, FoTransferFunction, RationalTf, RationalizeOptions};
use crate::optim::golden_max;

/// Chordal distance on the Riemann sphere. Non-finite inputs stand for the point at infinity.
pub fn chordal_distance(p: Complex64, q: Complex64) -> f64 {
    match (p.is_finite(), q.is_finite()) {
        (true, true) => (p - q).norm() / ((1.0 + p.norm_sqr()) * (1.0 + q.norm_sqr())).sqrt(),
        (false, false) => 0.0,
        (true, false) => 1.0 / (1.0 + p.norm_sqr()).sqrt(),
        (false, true) => 1.0 / (1.0 + q.norm_sqr()).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapOptions {
    /// Frequency grid, rad/s.
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
    #[serde(skip)]
    pub rationalize: RationalizeOptions,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            lo: 1e-3,
            hi: 1e2,
            per_decade: 60,
            rationalize: RationalizeOptions::default(),
        }
    }
}

impl GapOptions {
    fn grid(&self) -> Result<Vec<f64>> {
        let (wb, wh) = self.rationalize.band;
        if self.lo < wb || self.hi > wh {
            return invalid(format!(
                "gap grid [{}, {}] leaves the rationalization band [{wb}, {wh}]",
                self.lo, self.hi
            ));
        }
        log_grid(self.lo, self.hi, self.per_decade)
    }
}

/// Net encirclements of the origin by `1 + conj(a)·b` over the whole
/// imaginary axis, from the half-axis samples by conjugate symmetry.
fn winding_turns(a: &[Complex64], b: &[Complex64]) -> Option<f64> {
    let mut total = 0.0;
    let mut prev: Option<f64> = None;
    for (x, y) in a.iter().zip(b) {
        let z = 1.0 + x.conj() * y;
        if z.norm() < 1e-12 {
            return None;
        }
        let ph = z.arg();
        if let Some(p) = prev {
            let mut d = ph - p;
            d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
            total += d;
        }
        prev = Some(ph);
    }
    Some(2.0 * total / std::f64::consts::TAU)
}

fn gap_of(a: &RationalTf, b: &RationalTf, grid: &[f64]) -> f64 {
    let mut ws = Vec::with_capacity(grid.len() + 2);
    ws.push(0.0);
    ws.extend_from_slice(grid);
    // close the contour far above the band where both responses vanish
    ws.push(grid[grid.len() - 1] * 1e6);
    let va: Vec<Complex64> = ws.iter().map(|&w| a.eval(w)).collect();
    let vb: Vec<Complex64> = ws.iter().map(|&w| b.eval(w)).collect();
    match winding_turns(&va, &vb) {
        Some(t) if t.abs() < 0.5 => {}
        _ => return 1.0,
    }
    let n = grid.len();
    let kappa: Vec<f64> = (0..=n).map(|k| chordal_distance(va[k], vb[k])).collect();
    let (best, &grid_max) = kappa
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .expect("grid is nonempty");
    if best == 0 {
        return grid_max;
    }
    let lo = grid[(best - 1).saturating_sub(1)].ln();
    let hi = grid[best.min(n - 1)].ln();
    let f = |u: f64| chordal_distance(a.eval(u.exp()), b.eval(u.exp()));
    let u = golden_max(lo, hi, 1e-10, f);
    grid_max.max(f(u))
}

/// `δ_ν(g_a, g_b)` evaluated on the rationalized forms.
pub fn nu_gap(g_a: &FoTransferFunction, g_b: &FoTransferFunction, opts: &GapOptions) -> Result<f64> {
    let grid = opts.grid()?;
    let a = rationalize(g_a, &opts.rationalize)?;
    let b = rationalize(g_b, &opts.rationalize)?;
    Ok(gap_of(&a, &b, &grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMatrix {
    pub labels: Vec<String>,
    /// Row-major `n × n`.
    pub values: Vec<Vec<f64>>,
}

impl GapMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// `(i, j, δ)` triplets for surface plots.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.len())
            .flat_map(|i| (0..self.len()).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.values[i][j]))
            .collect()
    }
}

/// Pairwise gaps, labelled `G1..Gn`.
pub fn gap_matrix(members: &[FoTransferFunction], opts: &GapOptions) -> Result<GapMatrix> {
    if members.is_empty() {
        return invalid("family is empty");
    }
    let grid = opts.grid()?;
    let tfs = members
        .iter()
        .map(|g| rationalize(g, &opts.rationalize))
        .collect::<Result<Vec<_>>>()?;
    let n = members.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = gap_of(&tfs[i], &tfs[j], &grid);
            values[i][j] = d;
            values[j][i] = d;
        }
    }
    Ok(GapMatrix {
        labels: (1..=n).map(|k| format!("G{k}")).collect(),
        values,
    })
}

/// Member whose worst-case gap to the rest is smallest; ties go to the lowest index.
pub fn select_nominal(members: &[FoTransferFunction], gaps: &GapMatrix) -> Result<(usize, FoTransferFunction)> {
    if members.is_empty() || gaps.len() != members.len() {
        return invalid("gap matrix must match a nonempty family");
    }
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for (i, row) in gaps.values.iter().enumerate() {
        let worst = row.iter().copied().fold(0.0, f64::max);
        if worst < best_val {
            best = i;
            best_val = worst;
        }
    }
    Ok((best, members[best]))
}
