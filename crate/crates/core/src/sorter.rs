//! Perfect-sorting conditions for two-arm and N-arm matter-wave interferometers.
//!
//! A species of mass `m` at speed `v` picks up a phase `2π·ΔL·m·v/h` over an
//! extra path length `ΔL`. Species `k` leaves output port `k` of an N-port
//! DFT interferometer exactly when, for every arm `s`,
//!
//! ```text
//! ΔL_s · m_k · v / h  =  k·s/N + n_{k,s},   n_{k,s} ∈ ℤ
//! ```
//!
//! The solvers here find the shortest `ΔL_s` meeting all N congruences at
//! once, given commensurable masses.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{ATOMIC_MASS_UNIT, PLANCK};
use crate::error::{ArmResidual, Error, Result};
use crate::rational::{self, Fraction};

/// Default phase tolerance (rad) for design verification.
pub const DEFAULT_PHASE_TOL: f64 = 1e-9;
/// Default bound on the winding integers.
pub const DEFAULT_MAX_WINDING: u64 = 1_000;
/// Default denominator bound for mass-ratio rationalization.
pub const DEFAULT_DENOM_BOUND: u64 = 10_000;
/// Relative tolerance on mass ratios when rationalizing.
pub const RATIO_REL_TOL: f64 = 1e-9;

/// A named mass point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    /// Mass in kg.
    pub mass_kg: f64,
}

impl Species {
    pub fn new(name: impl Into<String>, mass_kg: f64) -> Result<Self> {
        if !(mass_kg.is_finite() && mass_kg > 0.0) {
            return Err(Error::Domain(format!(
                "mass must be positive, got {mass_kg}"
            )));
        }
        Ok(Self {
            name: name.into(),
            mass_kg,
        })
    }

    /// Construct from a mass in unified atomic mass units.
    pub fn from_daltons(name: impl Into<String>, mass_u: f64) -> Result<Self> {
        Self::new(name, mass_u * ATOMIC_MASS_UNIT)
    }
}

/// A species entry as written in input documents: mass in kg or in
/// unified atomic mass units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpeciesInput {
    Kg { name: String, mass_kg: f64 },
    Daltons { name: String, mass_u: f64 },
}

impl SpeciesInput {
    pub fn to_species(&self) -> Result<Species> {
        match self {
            SpeciesInput::Kg { name, mass_kg } => Species::new(name.clone(), *mass_kg),
            SpeciesInput::Daltons { name, mass_u } => Species::from_daltons(name.clone(), *mass_u),
        }
    }
}

/// Parses a JSON array of `{name, mass_kg}` / `{name, mass_u}` objects.
pub fn parse_species_list(json: &str) -> Result<Vec<Species>> {
    let entries: Vec<SpeciesInput> =
        serde_json::from_str(json).map_err(|e| Error::Domain(format!("bad species list: {e}")))?;
    entries.iter().map(SpeciesInput::to_species).collect()
}

/// Multimode-interference coupler geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmiGeometry {
    pub width_m: f64,
    pub length_m: f64,
    /// Wavelength the length was computed for.
    pub wavelength_m: f64,
    pub ports: usize,
}

impl MmiGeometry {
    pub fn new(width_m: f64, wavelength_m: f64, ports: usize) -> Result<Self> {
        Ok(Self {
            width_m,
            length_m: mmi_length(width_m, wavelength_m, ports)?,
            wavelength_m,
            ports,
        })
    }
}

/// A complete N-path sorter.
///
/// `delta_l_m[s]` is the length of arm `s` relative to arm 0 and
/// `windings[k][s]` the integer `n_{k,s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SorterDesign {
    pub n: usize,
    pub velocity_mps: f64,
    pub species: Vec<Species>,
    pub delta_l_m: Vec<f64>,
    pub windings: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupler: Option<MmiGeometry>,
}

impl SorterDesign {
    pub fn masses(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.mass_kg).collect()
    }

    pub fn wavelengths(&self) -> Result<Vec<f64>> {
        self.species
            .iter()
            .map(|s| de_broglie_wavelength(s.mass_kg, self.velocity_mps))
            .collect()
    }

    /// Structural checks: shapes, `ΔL_0 = 0`, `ΔL_s >= 0`, `n_{k,0} = 0`.
    pub fn validate_shape(&self) -> Result<()> {
        let n = self.n;
        if n < 2 || self.species.len() != n || self.delta_l_m.len() != n || self.windings.len() != n
        {
            return Err(Error::InvalidDimension(format!(
                "design with n={n} has {} species, {} path lengths, {} winding rows",
                self.species.len(),
                self.delta_l_m.len(),
                self.windings.len()
            )));
        }
        if let Some(row) = self.windings.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: row.len(),
            });
        }
        if self.delta_l_m[0] != 0.0 {
            return Err(Error::Domain("reference arm must have delta_L = 0".into()));
        }
        if self.delta_l_m.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Domain(
                "path lengths must be finite and non-negative".into(),
            ));
        }
        if self.windings.iter().any(|r| r[0] != 0) {
            return Err(Error::Domain(
                "windings on the reference arm must be zero".into(),
            ));
        }
        positive("velocity", self.velocity_mps)?;
        for s in &self.species {
            positive("mass", s.mass_kg)?;
        }
        Ok(())
    }
}

/// Two-arm (Mach-Zehnder) sorter: species 1 constructive at `2πk1`,
/// species 2 at `(2k2+1)π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSpeciesSolution {
    pub k1: u64,
    pub k2: u64,
    pub delta_l_m: f64,
    /// Phase of each species over `delta_l_m`, in rad (unreduced).
    pub phases: (f64, f64),
}

fn positive(what: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} must be positive and finite, got {x}"
        )))
    }
}

/// `λ = h/(m·v)`.
pub fn de_broglie_wavelength(mass_kg: f64, velocity_mps: f64) -> Result<f64> {
    positive("mass", mass_kg)?;
    positive("velocity", velocity_mps)?;
    Ok(PLANCK / (mass_kg * velocity_mps))
}

/// `Δφ = 2π·ΔL·m·v/h`, not reduced mod 2π.
pub fn phase_shift(delta_l_m: f64, mass_kg: f64, velocity_mps: f64) -> Result<f64> {
    positive("mass", mass_kg)?;
    positive("velocity", velocity_mps)?;
    Ok(2.0 * PI * delta_l_m * mass_kg * velocity_mps / PLANCK)
}

/// Velocity at which an arm of length `delta_l_m` holds `winding` whole
/// wavelengths of a species: `v = n·h/(m·ΔL)`.
pub fn implied_velocity(mass_kg: f64, delta_l_m: f64, winding: u64) -> Result<f64> {
    positive("mass", mass_kg)?;
    positive("path length", delta_l_m)?;
    if winding == 0 {
        return Err(Error::Domain("winding must be >= 1".into()));
    }
    Ok(winding as f64 * PLANCK / (mass_kg * delta_l_m))
}

/// Smallest `k1 >= 1` (then smallest `k2 >= 0`) with `m1/m2 = 2k1/(2k2+1)`
/// to relative tolerance [`RATIO_REL_TOL`].
pub fn solve_two_species(
    m1: f64,
    m2: f64,
    velocity_mps: f64,
    max_k: u64,
) -> Result<TwoSpeciesSolution> {
    positive("mass", m1)?;
    positive("mass", m2)?;
    positive("velocity", velocity_mps)?;
    if m1 == m2 {
        return Err(Error::Domain(
            "two-species sorting needs distinct masses".into(),
        ));
    }
    let ratio = m1 / m2;
    let mut best = (0u64, 0u64, f64::INFINITY);

    for k1 in 1..=max_k {
        // 2k2 + 1 = 2k1/ratio
        let k2_real = (2.0 * k1 as f64 / ratio - 1.0) / 2.0;
        let lo = k2_real.floor().max(0.0) as u64;
        for k2 in [lo, lo + 1] {
            if k2 > max_k {
                continue;
            }
            let approx = 2.0 * k1 as f64 / (2 * k2 + 1) as f64;
            let rel = (approx - ratio).abs() / ratio;
            if rel <= RATIO_REL_TOL {
                let lambda1 = de_broglie_wavelength(m1, velocity_mps)?;
                let delta_l = k1 as f64 * lambda1;
                let phases = (
                    phase_shift(delta_l, m1, velocity_mps)?,
                    phase_shift(delta_l, m2, velocity_mps)?,
                );
                return Ok(TwoSpeciesSolution {
                    k1,
                    k2,
                    delta_l_m: delta_l,
                    phases,
                });
            }
            if rel < best.2 {
                best = (k1, k2, rel);
            }
        }
    }
    Err(Error::TwoSpeciesInfeasible {
        max_k,
        best_k1: best.0,
        best_k2: best.1,
        relative_error: best.2,
    })
}

/// Options for [`solve_n_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_winding: u64,
    pub denom_bound: u64,
    pub phase_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_winding: DEFAULT_MAX_WINDING,
            denom_bound: DEFAULT_DENOM_BOUND,
            phase_tol: DEFAULT_PHASE_TOL,
        }
    }
}

/// Mass ratios `m_k/m_0` written over a common denominator: `a[k]/a[0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommonRatios {
    pub numerators: Vec<u64>,
}

impl CommonRatios {
    pub fn denominator(&self) -> u64 {
        self.numerators[0]
    }
}

/// Rationalizes every `m_k/m_0` with denominators `<= denom_bound` and puts
/// them over their least common denominator.
pub fn common_ratios(masses: &[f64], denom_bound: u64) -> Result<CommonRatios> {
    let m0 = masses[0];
    let fracs = masses
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let ratio = m / m0;
            rational::rationalize(ratio, denom_bound, RATIO_REL_TOL).ok_or(
                Error::NonCommensurableMasses {
                    index: k,
                    ratio,
                    denom_bound,
                },
            )
        })
        .collect::<Result<Vec<Fraction>>>()?;

    let overflow = || Error::Domain("common denominator of mass ratios overflows".into());
    let den = fracs
        .iter()
        .try_fold(1u64, |acc, f| rational::lcm(acc, f.den))
        .ok_or_else(overflow)?;
    let numerators = fracs
        .iter()
        .map(|f| f.num.checked_mul(den / f.den).ok_or_else(overflow))
        .collect::<Result<Vec<u64>>>()?;
    Ok(CommonRatios { numerators })
}

/// Signed distance from `x` to the nearest integer, in `[-0.5, 0.5]`.
fn frac_residual(x: f64) -> f64 {
    x - x.round()
}

/// Outcome of scanning one arm.
enum ArmSearch {
    Found { cycles: u64, windings: Vec<i64> },
    Missed(ArmResidual),
}

/// Scans `x = ΔL_s·m_0·v/h` for arm `s`. The reference species forces `x`
/// to be a positive integer, and `x·a_k/a_0 mod 1` has period `a_0` in `x`,
/// so `1..=min(a_0, max_winding)` is exhaustive.
fn search_arm(
    s: usize,
    n: usize,
    masses: &[f64],
    ratios: &CommonRatios,
    opts: &SolveOptions,
    lambda0: f64,
) -> ArmSearch {
    let a0 = ratios.denominator();
    let limit = a0.min(opts.max_winding);
    let cycle_tol = opts.phase_tol / (2.0 * PI);
    let mut best = ArmResidual {
        path: s,
        min_residual_cycles: f64::INFINITY,
        best_delta_l: 0.0,
    };

    for x in 1..=limit {
        // exact lattice check on integers: N·x·a_k ≡ k·s·a_0 (mod N·a_0)
        let modulus = n as u128 * a0 as u128;
        let lattice_ok = ratios.numerators.iter().enumerate().all(|(k, &ak)| {
            let lhs = (n as u128 * x as u128 * ak as u128) % modulus;
            let rhs = (k as u128 * s as u128 * a0 as u128) % modulus;
            lhs == rhs
        });

        // residual against the real masses
        let mut worst = 0.0f64;
        let mut windings = Vec::with_capacity(n);
        for (k, &mk) in masses.iter().enumerate() {
            let target = x as f64 * (mk / masses[0]) - (k * s) as f64 / n as f64;
            worst = worst.max(frac_residual(target).abs());
            windings.push(target.round() as i64);
        }

        if lattice_ok
            && worst <= cycle_tol
            && windings
                .iter()
                .all(|w| w.unsigned_abs() <= opts.max_winding)
        {
            return ArmSearch::Found {
                cycles: x,
                windings,
            };
        }
        if worst < best.min_residual_cycles {
            best.min_residual_cycles = worst;
            best.best_delta_l = x as f64 * lambda0;
        }
    }
    ArmSearch::Missed(best)
}

/// Solves the perfect-sorting conditions for all arms.
///
/// Arms are independent and are searched in parallel; the merge is by arm
/// index, so the result does not depend on scheduling.
pub fn solve_n_path(
    species: &[Species],
    velocity_mps: f64,
    opts: SolveOptions,
) -> Result<SorterDesign> {
    let n = species.len();
    if n < 2 {
        return Err(Error::InvalidDimension(
            "sorting needs at least two species".into(),
        ));
    }
    positive("velocity", velocity_mps)?;
    let masses: Vec<f64> = species.iter().map(|s| s.mass_kg).collect();
    for &m in &masses {
        positive("mass", m)?;
    }
    for i in 0..n {
        for j in i + 1..n {
            if masses[i] == masses[j] {
                return Err(Error::Domain(format!(
                    "species {i} and {j} have the same mass"
                )));
            }
        }
    }

    let ratios = common_ratios(&masses, opts.denom_bound)?;
    let lambda0 = de_broglie_wavelength(masses[0], velocity_mps)?;

    let arms: Vec<ArmSearch> = (1..n)
        .into_par_iter()
        .map(|s| search_arm(s, n, &masses, &ratios, &opts, lambda0))
        .collect();

    let mut delta_l = vec![0.0; n];
    let mut windings = vec![vec![0i64; n]; n];
    let mut missed = Vec::new();
    for (s, arm) in (1..n).zip(arms) {
        match arm {
            ArmSearch::Found {
                cycles,
                windings: w,
            } => {
                delta_l[s] = cycles as f64 * lambda0;
                for (k, wk) in w.into_iter().enumerate() {
                    windings[k][s] = wk;
                }
            }
            ArmSearch::Missed(r) => missed.push(r),
        }
    }
    if !missed.is_empty() {
        return Err(Error::Infeasible { residuals: missed });
    }

    Ok(SorterDesign {
        n,
        velocity_mps,
        species: species.to_vec(),
        delta_l_m: delta_l,
        windings,
        coupler: None,
    })
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let mut r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Per-(k, s) phase residuals of a design, in rad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResiduals {
    /// `residuals[k][s]` in `(-π, π]`.
    pub residuals: Vec<Vec<f64>>,
    pub max_abs: f64,
    pub phase_tol: f64,
    pub valid: bool,
}

/// Residual of each species' arm phase against its target `2πks/N`.
///
/// Computed in cycles and wrapped before scaling to rad, which keeps full
/// precision when the raw phase spans many turns.
pub fn verify_design(design: &SorterDesign, phase_tol: f64) -> Result<PhaseResiduals> {
    design.validate_shape()?;
    let n = design.n;
    let v = design.velocity_mps;
    let mut residuals = vec![vec![0.0; n]; n];
    let mut max_abs = 0.0f64;
    for (k, sp) in design.species.iter().enumerate() {
        for (s, (dl, out)) in design
            .delta_l_m
            .iter()
            .zip(residuals[k].iter_mut())
            .enumerate()
        {
            let cycles = dl * sp.mass_kg * v / PLANCK - (k * s) as f64 / n as f64;
            let mut r = 2.0 * PI * frac_residual(cycles);
            if r <= -PI {
                r += 2.0 * PI;
            }
            *out = r;
            max_abs = max_abs.max(r.abs());
        }
    }
    Ok(PhaseResiduals {
        residuals,
        max_abs,
        phase_tol,
        valid: max_abs <= phase_tol,
    })
}

/// True iff the phases `2πks/N mod 2π`, `s = 0..N`, are pairwise distinct.
pub fn distinct_phases_check(n: usize, k: usize) -> bool {
    assert!(k < n, "k must be in [0, N)");
    let mut seen = vec![false; n];
    for s in 0..n {
        let p = (k * s) % n;
        if seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// MMI coupler length `D_N = 4W²/(λN)`.
pub fn mmi_length(width_m: f64, wavelength_m: f64, ports: usize) -> Result<f64> {
    positive("width", width_m)?;
    positive("wavelength", wavelength_m)?;
    if ports == 0 {
        return Err(Error::Domain("port count must be positive".into()));
    }
    Ok(4.0 * width_m * width_m / (wavelength_m * ports as f64))
}

/// Rule-of-thumb path-length tolerance `min_k λ_k / N`.
pub fn path_error_budget(wavelengths: &[f64], n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain("sorting needs at least two species".into()));
    }
    let min = wavelengths
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::Domain("no wavelengths given".into()))?;
    positive("wavelength", min)?;
    Ok(min / n as f64)
}
