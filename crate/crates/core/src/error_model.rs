//! Path-length fluctuations, imperfect sorter gates and channel leakage.
//!
//! A fluctuation `δL_s` on arm `s` shifts the phase of species `k` by
//! `2π·δL_s/λ_k`. Only fluctuations relative to arm 0 matter, and at a
//! common velocity the phase error of species `k` is the reference error
//! scaled by `m_k/m_0`. The imperfect sorter is the controlled-X gate built
//! from a controlled-Z carrying those extra phases; it stays block-diagonal
//! in the mass index, so leakage only moves probability between paths.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::PLANCK;
use crate::error::{Error, Result};
use crate::qudit::{self, root_of_unity, BasisIndex, GateMatrix};
use crate::sorter::{SorterDesign, Species};

/// Row-sum tolerance for leakage matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Per-arm length fluctuations `δL_s` in m, `s = 0..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFluctuation {
    pub delta_l_m: Vec<f64>,
}

impl PathFluctuation {
    pub fn new(delta_l_m: Vec<f64>) -> Result<Self> {
        if delta_l_m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("path fluctuations must be finite".into()));
        }
        Ok(Self { delta_l_m })
    }
}

/// Independent phase errors `δφ_{0,s}` (s = 1..N) and the mass ratios that
/// scale them onto the other species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseErrorVector {
    /// `δφ_{0,s}` for `s = 1..N`, in rad.
    pub base_errors: Vec<f64>,
    /// `m_k/m_0` for `k = 0..N`; the first entry is 1.
    pub mass_ratios: Vec<f64>,
}

impl PhaseErrorVector {
    pub fn new(base_errors: Vec<f64>, mass_ratios: Vec<f64>) -> Result<Self> {
        let n = mass_ratios.len();
        if n < 1 {
            return Err(Error::InvalidDimension(
                "need at least one mass ratio".into(),
            ));
        }
        if base_errors.len() + 1 != n {
            return Err(Error::DimensionMismatch {
                expected: n - 1,
                actual: base_errors.len(),
            });
        }
        if mass_ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Domain(
                "mass ratios must be positive and finite".into(),
            ));
        }
        if (mass_ratios[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "reference mass ratio must be 1, got {}",
                mass_ratios[0]
            )));
        }
        if base_errors.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("phase errors must be finite".into()));
        }
        Ok(Self {
            base_errors,
            mass_ratios,
        })
    }

    /// No phase error on any arm.
    pub fn zero(mass_ratios: Vec<f64>) -> Result<Self> {
        let n = mass_ratios.len();
        Self::new(vec![0.0; n.saturating_sub(1)], mass_ratios)
    }

    pub fn n(&self) -> usize {
        self.mass_ratios.len()
    }

    /// `δφ_{k,s} = (m_k/m_0)·δφ_{0,s}`, with `δφ_{k,0} = 0`.
    pub fn phase(&self, k: usize, s: usize) -> f64 {
        if s == 0 {
            0.0
        } else {
            self.mass_ratios[k] * self.base_errors[s - 1]
        }
    }
}

/// Mass ratios `m_k/m_0` of a species list.
pub fn mass_ratios(species: &[Species]) -> Vec<f64> {
    let m0 = species[0].mass_kg;
    species.iter().map(|s| s.mass_kg / m0).collect()
}

/// Converts arm-length fluctuations into reference phase errors,
/// `δφ_{0,s} = 2π(δL_s − δL_0)·m_0·v/h`.
pub fn phases_from_fluctuation(
    fluct: &PathFluctuation,
    species: &[Species],
    velocity_mps: f64,
) -> Result<PhaseErrorVector> {
    let n = species.len();
    if n < 2 {
        return Err(Error::InvalidDimension("need at least two species".into()));
    }
    if fluct.delta_l_m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: fluct.delta_l_m.len(),
        });
    }
    if !(velocity_mps.is_finite() && velocity_mps > 0.0) {
        return Err(Error::Domain(format!(
            "velocity must be positive, got {velocity_mps}"
        )));
    }
    let k0 = 2.0 * PI * species[0].mass_kg * velocity_mps / PLANCK;
    let dl0 = fluct.delta_l_m[0];
    let base = fluct.delta_l_m[1..]
        .iter()
        .map(|dl| k0 * (dl - dl0))
        .collect();
    PhaseErrorVector::new(base, mass_ratios(species))
}

/// Controlled-Z with error phases: `|k,s⟩ → e^{iδφ_{k,s}} ω^{ks} |k,s⟩`.
pub fn controlled_z_err(errs: &PhaseErrorVector) -> Result<GateMatrix> {
    let n = errs.n();
    let diag: Vec<Complex64> = (0..n * n)
        .map(|flat| {
            let BasisIndex { mass, path } = BasisIndex::decompose(flat, n);
            Complex64::from_polar(1.0, errs.phase(mass, path)) * root_of_unity(n, mass * path)
        })
        .collect();
    Ok(GateMatrix::from_diagonal(&diag))
}

/// Imperfect sorter `(I⊗F†)·C(Z_N^err)·(I⊗F)`.
pub fn controlled_x_err(errs: &PhaseErrorVector) -> Result<GateMatrix> {
    qudit::fourier_conjugate(errs.n(), &controlled_z_err(errs)?)
}

/// Diagonal block of a two-qudit gate at mass index `k`.
pub fn mass_block(gate: &GateMatrix, n: usize, k: usize) -> GateMatrix {
    let mut block = GateMatrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            block[(r, c)] = gate[(
                BasisIndex::new(k, r).compose(n),
                BasisIndex::new(k, c).compose(n),
            )];
        }
    }
    block
}

/// Largest modulus of any element coupling different mass indices.
pub fn off_sector_max(gate: &GateMatrix, n: usize) -> f64 {
    let dim = n * n;
    let mut worst = 0.0f64;
    for r in 0..dim {
        for c in 0..dim {
            if r / n != c / n {
                worst = worst.max(gate[(r, c)].norm());
            }
        }
    }
    worst
}

/// Amplitudes `c_{k,s} = ⟨k,s| C(X_N^err) |k,0⟩`, indexed `[k][s]`.
pub fn sector_amplitudes(errs: &PhaseErrorVector) -> Result<Vec<Vec<Complex64>>> {
    let n = errs.n();
    let gate = controlled_x_err(errs)?;
    Ok((0..n)
        .map(|k| {
            let col = BasisIndex::new(k, 0).compose(n);
            (0..n)
                .map(|s| gate[(BasisIndex::new(k, s).compose(n), col)])
                .collect()
        })
        .collect())
}

/// Rotates each mass sector so its `s = 0` amplitude is real and
/// non-negative. Sector phases are unobservable, so this is the comparison
/// convention for amplitudes from different routes.
pub fn fix_sector_phase(amps: &mut [Vec<Complex64>]) {
    for row in amps {
        let a0 = row[0];
        if a0.norm() > 0.0 {
            let rot = a0.conj() / a0.norm();
            row.iter_mut().for_each(|z| *z *= rot);
        }
    }
}

/// `p[k][s]`: probability that species `k` exits on path `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageMatrix {
    rows: Vec<Vec<f64>>,
}

impl LeakageMatrix {
    /// Validates shape, entries in `[0, 1]` and unit row sums to
    /// [`STOCHASTIC_TOL`]; sub-tolerance excursions outside `[0, 1]` are
    /// clamped.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(rows, STOCHASTIC_TOL)
    }

    pub fn with_tolerance(mut rows: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidDimension("empty leakage matrix".into()));
        }
        for (k, row) in rows.iter_mut().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            if row
                .iter()
                .any(|p| !p.is_finite() || *p < -tol || *p > 1.0 + tol)
            {
                return Err(Error::Domain(format!("row {k} has entries outside [0, 1]")));
            }
            row.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::Domain(format!("row {k} sums to {sum}, not 1")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|k| (0..n).map(|s| if k == s { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, k: usize, s: usize) -> f64 {
        self.rows[k][s]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise deviation from the identity.
    pub fn max_identity_deviation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (k, row) in self.rows.iter().enumerate() {
            for (s, &p) in row.iter().enumerate() {
                let want = if k == s { 1.0 } else { 0.0 };
                worst = worst.max((p - want).abs());
            }
        }
        worst
    }
}

/// Numerical leakage from the imperfect gate.
pub fn simulate_leakage(errs: &PhaseErrorVector) -> Result<LeakageMatrix> {
    let amps = sector_amplitudes(errs)?;
    LeakageMatrix::new(
        amps.iter()
            .map(|row| row.iter().map(|c| c.norm_sqr()).collect())
            .collect(),
    )
}

/// Diagonal phase gate of a concrete interferometer: species `k` on arm `s`
/// picks up `2π(ΔL_s + δL_s − δL_0)·m_k·v/h`. Unlike [`controlled_z_err`]
/// this uses the design's real path lengths, so it also exposes any design
/// residual.
pub fn interferometer_phase_gate(
    design: &SorterDesign,
    fluct: Option<&PathFluctuation>,
) -> Result<GateMatrix> {
    design.validate_shape()?;
    let n = design.n;
    if let Some(f) = fluct {
        if f.delta_l_m.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: f.delta_l_m.len(),
            });
        }
    }
    let extra = |s: usize| fluct.map_or(0.0, |f| f.delta_l_m[s] - f.delta_l_m[0]);
    let diag: Vec<Complex64> = (0..n * n)
        .map(|flat| {
            let BasisIndex { mass, path } = BasisIndex::decompose(flat, n);
            let m = design.species[mass].mass_kg;
            let cycles = (design.delta_l_m[path] + extra(path)) * m * design.velocity_mps / PLANCK;
            Complex64::from_polar(1.0, 2.0 * PI * (cycles - cycles.round()))
        })
        .collect();
    Ok(GateMatrix::from_diagonal(&diag))
}

/// Leakage of a concrete design, optionally with arm-length fluctuations.
pub fn design_leakage(
    design: &SorterDesign,
    fluct: Option<&PathFluctuation>,
) -> Result<LeakageMatrix> {
    let n = design.n;
    let gate = qudit::fourier_conjugate(n, &interferometer_phase_gate(design, fluct)?)?;
    let rows = (0..n)
        .map(|k| {
            let col = BasisIndex::new(k, 0).compose(n);
            (0..n)
                .map(|s| gate[(BasisIndex::new(k, s).compose(n), col)].norm_sqr())
                .collect()
        })
        .collect();
    LeakageMatrix::new(rows)
}

/// Closed-form three-species amplitudes and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticN3 {
    /// `c[k][s]`.
    pub amplitudes: [[Complex64; 3]; 3],
    pub probabilities: LeakageMatrix,
}

/// Closed-form amplitudes for three species with reference errors
/// `delta1`, `delta2` and mass ratios `m_1/m_0`, `m_2/m_0`.
///
/// Species 0 probabilities come from the cosine expressions; species 1 and
/// 2 from `|c|²` of their amplitudes.
pub fn analytic_leakage_n3(
    delta1: f64,
    delta2: f64,
    ratio1: f64,
    ratio2: f64,
) -> Result<AnalyticN3> {
    let w = root_of_unity(3, 1);
    let w2 = root_of_unity(3, 2);
    let one = Complex64::new(1.0, 0.0);
    let e = |x: f64| Complex64::from_polar(1.0, x);
    let third = 1.0 / 3.0;

    let (a1, a2) = (e(delta1), e(delta2));
    let (b1, b2) = (e(delta1 * ratio1), e(delta2 * ratio1));
    let (g1, g2) = (e(delta1 * ratio2), e(delta2 * ratio2));

    let amplitudes = [
        [
            (one + a1 + a2) * third,
            (one + w2 * a1 + w * a2) * third,
            (one + w * a1 + w2 * a2) * third,
        ],
        [
            (one + w * b1 + w2 * b2) * third,
            (one + b1 + b2) * third,
            (one + w2 * b1 + w * b2) * third,
        ],
        [
            (one + w2 * g1 + w * g2) * third,
            (one + w * g1 + w2 * g2) * third,
            (one + g1 + g2) * third,
        ],
    ];

    let t = 2.0 * PI / 3.0;
    let d12 = delta1 - delta2;
    let p0 = vec![
        third + 2.0 / 9.0 * (delta1.cos() + delta2.cos() + d12.cos()),
        third + 2.0 / 9.0 * ((delta1 - t).cos() + (delta2 + t).cos() + (d12 + t).cos()),
        third + 2.0 / 9.0 * ((delta1 + t).cos() + (delta2 - t).cos() + (d12 - t).cos()),
    ];
    let row = |k: usize| {
        amplitudes[k]
            .iter()
            .map(|c| c.norm_sqr())
            .collect::<Vec<f64>>()
    };
    let probabilities = LeakageMatrix::new(vec![p0, row(1), row(2)])?;
    Ok(AnalyticN3 {
        amplitudes,
        probabilities,
    })
}

/// Evenly spaced samples `start..=end`; a single step samples `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearRange {
    pub start: f64,
    pub end: f64,
    pub steps: usize,
}

impl LinearRange {
    pub fn new(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("range needs at least one step".into()));
        }
        if !(start.is_finite() && end.is_finite()) || start > end {
            return Err(Error::Domain(format!("empty range [{start}, {end}]")));
        }
        Ok(Self { start, end, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let span = self.end - self.start;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i == self.steps - 1 {
                    self.end
                } else {
                    self.start + span * i as f64 / last
                }
            })
            .collect()
    }
}

/// One grid point of a leakage sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub delta1: f64,
    pub delta2: f64,
    pub leakage: LeakageMatrix,
}

/// Leakage over a grid of errors on arms 1 and 2 (any further arms are
/// error-free). Row-major: `delta1` is the outer index.
pub fn sweep_leakage(
    delta1: &LinearRange,
    delta2: &LinearRange,
    ratios: &[f64],
) -> Result<Vec<SweepPoint>> {
    let n = ratios.len();
    if n < 3 {
        return Err(Error::InvalidDimension(
            "a two-error sweep needs at least three paths".into(),
        ));
    }
    PhaseErrorVector::zero(ratios.to_vec())?;
    let d2 = delta2.values();
    let grid: Vec<(f64, f64)> = delta1
        .values()
        .into_iter()
        .flat_map(|a| d2.iter().map(move |&b| (a, b)))
        .collect();
    grid.into_par_iter()
        .map(|(a, b)| {
            let mut base = vec![0.0; n - 1];
            base[0] = a;
            base[1] = b;
            let errs = PhaseErrorVector::new(base, ratios.to_vec())?;
            Ok(SweepPoint {
                delta1: a,
                delta2: b,
                leakage: simulate_leakage(&errs)?,
            })
        })
        .collect()
}

/// Writes a sweep as CSV: `delta1_rad,delta2_rad,p00` and, with
/// `all_columns`, every `p{k}{s}`. Values use the shortest round-trip form.
pub fn write_sweep_csv<W: Write>(
    points: &[SweepPoint],
    all_columns: bool,
    mut out: W,
) -> io::Result<()> {
    let n = points.first().map_or(0, |p| p.leakage.n());
    let mut header = vec!["delta1_rad".to_string(), "delta2_rad".to_string()];
    if all_columns {
        for k in 0..n {
            for s in 0..n {
                header.push(format!("p{k}{s}"));
            }
        }
    } else {
        header.push("p00".into());
    }
    writeln!(out, "{}", header.join(","))?;
    for p in points {
        let mut fields = vec![format!("{:?}", p.delta1), format!("{:?}", p.delta2)];
        if all_columns {
            fields.extend(p.leakage.rows().iter().flatten().map(|v| format!("{v:?}")));
        } else {
            fields.push(format!("{:?}", p.leakage.get(0, 0)));
        }
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Mean and sample standard deviation of each species' on-target
/// probability `p_{kk}` over noisy realisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub sigma_l_m: f64,
    pub seed: u64,
    pub mean_diagonal: Vec<f64>,
    pub std_diagonal: Vec<f64>,
}

/// RNG for trial `index` of a run seeded with `seed`: ChaCha20 keyed by
/// `seed_from_u64(seed)`, stream id `index`. Streams are independent, so
/// results do not depend on how trials are scheduled.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `δL_s ~ Normal(0, sigma)` for every arm.
pub fn sample_fluctuation(
    n: usize,
    sigma_l_m: f64,
    rng: &mut ChaCha20Rng,
) -> Result<PathFluctuation> {
    if !(sigma_l_m.is_finite() && sigma_l_m >= 0.0) {
        return Err(Error::Domain(format!(
            "sigma_L must be non-negative, got {sigma_l_m}"
        )));
    }
    if sigma_l_m == 0.0 {
        return PathFluctuation::new(vec![0.0; n]);
    }
    let normal = Normal::new(0.0, sigma_l_m).map_err(|e| Error::Domain(e.to_string()))?;
    PathFluctuation::new((0..n).map(|_| normal.sample(rng)).collect())
}

/// Monte-Carlo estimate of sorting fidelity under i.i.d. Gaussian arm-length
/// noise.
pub fn monte_carlo_leakage(
    design: &SorterDesign,
    sigma_l_m: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(Error::Domain("need at least one trial".into()));
    }
    design.validate_shape()?;
    let n = design.n;
    let diagonals: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t as u64);
            let fluct = sample_fluctuation(n, sigma_l_m, &mut rng)?;
            let errs = phases_from_fluctuation(&fluct, &design.species, design.velocity_mps)?;
            let p = simulate_leakage(&errs)?;
            Ok((0..n).map(|k| p.get(k, k)).collect())
        })
        .collect::<Result<_>>()?;

    let mut mean = vec![0.0; n];
    for d in &diagonals {
        for (m, x) in mean.iter_mut().zip(d) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= trials as f64);
    let mut std = vec![0.0; n];
    if trials > 1 {
        for d in &diagonals {
            for k in 0..n {
                std[k] += (d[k] - mean[k]).powi(2);
            }
        }
        std.iter_mut()
            .for_each(|v| *v = (*v / (trials - 1) as f64).sqrt());
    }
    Ok(MonteCarloSummary {
        trials,
        sigma_l_m,
        seed,
        mean_diagonal: mean,
        std_diagonal: std,
    })
}
