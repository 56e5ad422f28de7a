//! The default problem catalog and its data.

use crate::error::Result;
use crate::grid::{bump, Field, PeriodicGrid, TestFunctionSpec};
use crate::nonlinearity::{Flux, Saturation};
use crate::nonlocal::{FracOrder, SplitConfig};
use crate::solver::{FluxScheme, ProblemTemplate};

/// One catalog entry: a template and its data.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub template: ProblemTemplate,
    pub f: Field,
}

pub const DEFAULT_EXTENT: f64 = 2.0;
pub const DEFAULT_POINTS: usize = 256;

/// Default data: a positive and a negative bump.
pub fn default_data(grid: &PeriodicGrid) -> Result<Field> {
    let l = grid.extent();
    let c = |x: f64| [x * l, 0.5 * l];
    let pos = bump(grid, &TestFunctionSpec::new(c(0.3), 0.225 * l, 4.0))?;
    let neg = bump(grid, &TestFunctionSpec::new(c(0.7), 0.2 * l, 3.0))?;
    pos.sub(&neg)
}

/// Plateau saturation of the catalog: slope 1, flat on `[0.25, 0.75]`.
pub fn catalog_plateau() -> Saturation {
    Saturation::plateau(1.0, 0.25, 0.5).expect("valid plateau")
}

/// The catalog on the default one-dimensional grid, `L = 2`, `n = 256`.
pub fn default_catalog() -> Result<Vec<Problem>> {
    catalog_on(&PeriodicGrid::new(1, DEFAULT_EXTENT, DEFAULT_POINTS)?)
}

/// Six problems mixing `b ∈ {λId, Id+arctan, plateau}`,
/// `F ∈ {0, transport, Burgers}` and `s ∈ {0.5, 1}`, discretised with the
/// Engquist–Osher scheme. Fluxes act identically on every component.
pub fn catalog_on(grid: &PeriodicGrid) -> Result<Vec<Problem>> {
    let grid = *grid;
    let f = default_data(&grid)?;
    let dim = grid.dim();
    let transport = |c: f64| Flux::linear(&vec![c; dim]);
    let entries: Vec<(&str, Saturation, Flux, f64)> = vec![
        (
            "linear_zero_s0.5",
            Saturation::linear(1.0)?,
            Flux::zero(dim),
            0.5,
        ),
        (
            "arctan_transport_s1",
            Saturation::id_plus_arctan(),
            transport(1.0)?,
            1.0,
        ),
        (
            "plateau_burgers_s0.5",
            catalog_plateau(),
            Flux::burgers(dim),
            0.5,
        ),
        (
            "linear_burgers_s1",
            Saturation::linear(1.0)?,
            Flux::burgers(dim),
            1.0,
        ),
        (
            "arctan_burgers_s0.5",
            Saturation::id_plus_arctan(),
            Flux::burgers(dim),
            0.5,
        ),
        (
            "plateau_transport_s1",
            catalog_plateau(),
            transport(-1.0)?,
            1.0,
        ),
    ];
    entries
        .into_iter()
        .map(|(name, b, flux, s)| {
            Ok(Problem {
                name: name.to_string(),
                template: ProblemTemplate {
                    grid,
                    s: FracOrder::for_equation(s)?,
                    b,
                    flux,
                    scheme: FluxScheme::EngquistOsher,
                    split: SplitConfig::default_for(&grid),
                },
                f: f.clone(),
            })
        })
        .collect()
}

/// Perturbation bumps for the data pairs: `(spec, sign)` for pair `i`.
pub fn pair_perturbation(grid: &PeriodicGrid, i: usize) -> (TestFunctionSpec, f64) {
    let l = grid.extent();
    const CENTERS: [f64; 5] = [0.2, 0.4, 0.5, 0.6, 0.8];
    const AMPLITUDES: [f64; 5] = [0.1, 0.4, 1.0, 2.0, 4.0];
    let center = CENTERS[i % CENTERS.len()] * l;
    let amp = AMPLITUDES[(i / 2) % AMPLITUDES.len()];
    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
    let mut c = [center, 0.5 * l];
    if grid.dim() == 1 {
        c[1] = 0.0;
    }
    (TestFunctionSpec::new(c, 0.12 * l, amp), sign)
}
