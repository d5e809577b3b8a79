use std::fmt;

use serde::{Deserialize, Serialize};

use super::SpectralError;

/// Uniform grid of `N` interior points on `[0, L]` with Dirichlet boundaries.
///
/// `x_n = n·dx` for `n = 1..N` with `dx = L/(N+1)`; the boundary points `0`
/// and `L` carry implicit zero values and are never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    length: f64,
    n: usize,
    dx: f64,
}

impl Grid {
    pub fn new(length: f64, interior_points: usize) -> Result<Self, SpectralError> {
        if !length.is_finite() || length <= 0.0 {
            return Err(SpectralError::InvalidGrid(format!(
                "domain length must be positive, got {length}"
            )));
        }
        if interior_points == 0 {
            return Err(SpectralError::InvalidGrid(
                "need at least one interior point".into(),
            ));
        }
        let dx = length / (interior_points + 1) as f64;
        Ok(Self {
            length,
            n: interior_points,
            dx,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of interior points `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Coordinate of the `i`-th interior point, `i` zero-based: `x = (i+1)·dx`.
    pub fn x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.dx
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

/// Which analytic family a sampled potential came from; kept for config echo
/// and CSV provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PotentialKind {
    Zero,
    Constant(f64),
    Cos3Plus1,
    Linear,
    Custom,
}

/// Nonnegative potential `g` sampled at the interior points of a grid.
///
/// Negative samples are rejected at construction; the heterogeneity is
/// assumed nonnegative throughout, and the exit-time experiments further
/// require `g ≥ 1` (checked there, not here).
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    samples: Vec<f64>,
    kind: PotentialKind,
}

impl Potential {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            samples: vec![0.0; grid.n()],
            kind: PotentialKind::Zero,
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Result<Self, SpectralError> {
        if !c.is_finite() || c < 0.0 {
            return Err(SpectralError::InvalidPotential { index: 0, value: c });
        }
        Ok(Self {
            samples: vec![c; grid.n()],
            kind: PotentialKind::Constant(c),
        })
    }

    /// `g(x) = cos(3x) + 1`, the oscillatory heterogeneity used throughout
    /// the examples; nonnegative on any interval.
    pub fn cos3_plus_1(grid: &Grid) -> Self {
        let samples = (0..grid.n()).map(|i| (3.0 * grid.x(i)).cos() + 1.0).collect();
        Self {
            samples,
            kind: PotentialKind::Cos3Plus1,
        }
    }

    /// `g(x) = x / L`, a monotone ramp.
    pub fn linear(grid: &Grid) -> Self {
        let samples = (0..grid.n()).map(|i| grid.x(i) / grid.length()).collect();
        Self {
            samples,
            kind: PotentialKind::Linear,
        }
    }

    pub fn from_samples(samples: Vec<f64>, grid: &Grid) -> Result<Self, SpectralError> {
        if samples.len() != grid.n() {
            return Err(SpectralError::DimensionMismatch {
                expected: grid.n(),
                got: samples.len(),
            });
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(SpectralError::InvalidPotential { index, value });
            }
        }
        Ok(Self {
            samples,
            kind: PotentialKind::Custom,
        })
    }

    /// Parses a config descriptor: `zero`, `constant:<c>`, `cos3plus1`,
    /// `linear`, or `file:<path>` (one sample per line, `N` lines).
    pub fn from_descriptor(desc: &str, grid: &Grid) -> Result<Self, SpectralError> {
        if desc == "zero" {
            return Ok(Self::zero(grid));
        }
        if desc == "cos3plus1" {
            return Ok(Self::cos3_plus_1(grid));
        }
        if desc == "linear" {
            return Ok(Self::linear(grid));
        }
        if let Some(c) = desc.strip_prefix("constant:") {
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|_| SpectralError::BadDescriptor(desc.into()))?;
            return Self::constant(grid, c);
        }
        if let Some(path) = desc.strip_prefix("file:") {
            let text =
                std::fs::read_to_string(path).map_err(|e| SpectralError::Io(e.to_string()))?;
            let mut samples = Vec::new();
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                let v: f64 = line
                    .parse()
                    .map_err(|_| SpectralError::Io(format!("bad sample line `{line}`")))?;
                samples.push(v);
            }
            return Self::from_samples(samples, grid);
        }
        Err(SpectralError::BadDescriptor(desc.into()))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn min_sample(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Trapezoid average `(dx/L)(Σ g(x_n) + (g(x_1) + g(x_N))/2)`, with the
    /// boundary values approximated by the nearest interior samples. Exact
    /// for constant potentials and second-order accurate for smooth ones.
    pub fn mean_dx(&self, grid: &Grid) -> f64 {
        let sum: f64 = self.samples.iter().sum();
        let edge = 0.5 * (self.samples[0] + self.samples[self.samples.len() - 1]);
        grid.dx() * (sum + edge) / grid.length()
    }

    /// Config-facing descriptor round-trip of [`Potential::from_descriptor`].
    pub fn descriptor(&self) -> String {
        match &self.kind {
            PotentialKind::Zero => "zero".into(),
            PotentialKind::Constant(c) => format!("constant:{c}"),
            PotentialKind::Cos3Plus1 => "cos3plus1".into(),
            PotentialKind::Linear => "linear".into(),
            PotentialKind::Custom => "custom".into(),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.descriptor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_spacing_identity() {
        for &(l, n) in &[(4.0, 3usize), (2.0 * PI, 200), (PI, 999)] {
            let grid = Grid::new(l, n).unwrap();
            let rel = (grid.dx() * (n + 1) as f64 - l).abs() / l;
            assert!(rel <= 1e-12);
            assert!(grid.x(0) > 0.0 && grid.x(n - 1) < l);
        }
    }

    #[test]
    fn potential_rejects_negatives() {
        let grid = Grid::new(1.0, 4).unwrap();
        assert!(Potential::from_samples(vec![0.1, -0.2, 0.3, 0.4], &grid).is_err());
        assert!(Potential::constant(&grid, -1.0).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let grid = Grid::new(2.0 * PI, 16).unwrap();
        for desc in ["zero", "constant:1.5", "cos3plus1", "linear"] {
            let g = Potential::from_descriptor(desc, &grid).unwrap();
            assert_eq!(g.descriptor(), desc);
        }
        assert!(Potential::from_descriptor("quadratic", &grid).is_err());
    }

    #[test]
    fn file_descriptor_reads_samples() {
        let grid = Grid::new(1.0, 3).unwrap();
        let dir = std::env::temp_dir().join("hetci-potential-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("g.txt");
        std::fs::write(&path, "0.5\n1.0\n1.5\n").unwrap();
        let g = Potential::from_descriptor(&format!("file:{}", path.display()), &grid).unwrap();
        assert_eq!(g.samples(), &[0.5, 1.0, 1.5]);
    }
}
