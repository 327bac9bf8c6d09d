//! End-to-end acquisition: abundances → imperfect sorter → detector counts →
//! unfolded spectrum, plus the magnetic-sector formulas used for comparison.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::{self, LeakageMatrix, PathFluctuation, PhaseErrorVector};
use crate::sorter::{Species, SpeciesInput};

/// Abundance sums must be within this of 1.
pub const ABUNDANCE_TOL: f64 = 1e-12;
/// Leakage matrices with a larger condition number cannot be unfolded.
pub const MAX_CONDITION: f64 = 1e8;
/// Particles per RNG stream in [`simulate_counts`].
pub const BATCH_SIZE: u64 = 1 << 16;
/// Stream id reserved for sampling the arm fluctuation of an experiment, kept
/// clear of the particle batches.
pub const FLUCTUATION_STREAM: u64 = u64::MAX;

/// Relative abundances of the species, non-negative and summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AbundanceVector(Vec<f64>);

impl AbundanceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension("empty abundance vector".into()));
        }
        if values.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Domain("abundances must be non-negative".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > ABUNDANCE_TOL {
            return Err(Error::Domain(format!("abundances sum to {sum}, not 1")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for AbundanceVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AbundanceVector> for Vec<f64> {
    fn from(a: AbundanceVector) -> Self {
        a.0
    }
}

/// Detector counts per output channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub total_particles: u64,
    pub counts: Vec<u64>,
    pub seed: u64,
}

impl CountRecord {
    pub fn fractions(&self) -> Vec<f64> {
        self.counts
            .iter()
            .map(|&c| c as f64 / self.total_particles as f64)
            .collect()
    }
}

/// Simulates `total` particles. Each one draws its species from
/// `abundances`, then its exit channel from that species' leakage row.
///
/// Particles are processed in batches of [`BATCH_SIZE`]; batch `b` uses
/// [`error_model::trial_rng`]`(seed, b)`. Counts are summed, so the result is
/// independent of thread scheduling.
pub fn simulate_counts(
    abundances: &AbundanceVector,
    leakage: &LeakageMatrix,
    total: u64,
    seed: u64,
) -> Result<CountRecord> {
    let n = leakage.n();
    if abundances.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: abundances.len(),
        });
    }
    if total == 0 {
        return Err(Error::Domain("need at least one particle".into()));
    }
    let species_dist =
        WeightedIndex::new(abundances.as_slice()).map_err(|e| Error::Domain(e.to_string()))?;
    let channel_dists = leakage
        .rows()
        .iter()
        .map(|row| WeightedIndex::new(row).map_err(|e| Error::Domain(e.to_string())))
        .collect::<Result<Vec<_>>>()?;

    let batches = total.div_ceil(BATCH_SIZE);
    let partial: Vec<Vec<u64>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = error_model::trial_rng(seed, b);
            let size = BATCH_SIZE.min(total - b * BATCH_SIZE);
            let mut counts = vec![0u64; n];
            for _ in 0..size {
                let k = species_dist.sample(&mut rng);
                counts[channel_dists[k].sample(&mut rng)] += 1;
            }
            counts
        })
        .collect();

    let mut counts = vec![0u64; n];
    for p in partial {
        for (c, x) in counts.iter_mut().zip(p) {
            *c += x;
        }
    }
    Ok(CountRecord {
        total_particles: total,
        counts,
        seed,
    })
}

/// Abundances recovered from detector counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub abundances: AbundanceVector,
    /// One standard deviation per abundance, from multinomial counting noise.
    pub uncertainty: Vec<f64>,
    pub observed_fractions: Vec<f64>,
    pub condition_number: f64,
    /// Whether the non-negativity constraint was active at the solution.
    pub constrained: bool,
}

fn leakage_matrix(leakage: &LeakageMatrix) -> DMatrix<f64> {
    let n = leakage.n();
    DMatrix::from_fn(n, n, |k, s| leakage.get(k, s))
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Unfolds observed channel fractions `f` into abundances `a` with
/// `Pᵀa = f`, `a >= 0`, `Σa = 1`, in the least-squares sense.
///
/// Uncertainties propagate the multinomial covariance of `f` through
/// `(Pᵀ)⁻¹` (linearised, ignoring the constraint).
pub fn reconstruct_spectrum(
    counts: &CountRecord,
    leakage: &LeakageMatrix,
) -> Result<Reconstruction> {
    let n = leakage.n();
    if counts.counts.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: counts.counts.len(),
        });
    }
    let observed: u64 = counts.counts.iter().sum();
    if counts.total_particles == 0 || observed != counts.total_particles {
        return Err(Error::Domain(format!(
            "count record has total {} but counts sum to {observed}",
            counts.total_particles
        )));
    }
    if leakage.max_row_sum_error() > error_model::STOCHASTIC_TOL {
        return Err(Error::Domain("leakage rows must sum to 1".into()));
    }

    let p = leakage_matrix(leakage);
    let condition = condition_number(&p);
    if condition.is_nan() || condition > MAX_CONDITION {
        return Err(Error::Unidentifiable { condition });
    }

    let a_mat = p.transpose();
    let fractions = counts.fractions();
    let f = DVector::from_column_slice(&fractions);
    let lu = a_mat.clone().lu();
    let unconstrained = lu.solve(&f).ok_or(Error::Unidentifiable { condition })?;

    let (estimate, constrained) = if unconstrained.iter().all(|&x| x >= 0.0) {
        (unconstrained.iter().copied().collect::<Vec<f64>>(), false)
    } else {
        (simplex_least_squares(&a_mat, &f)?, true)
    };

    // Cov(f) = (diag f − f fᵀ)/n; Cov(a) = A⁻¹ Cov(f) A⁻ᵀ
    let total = counts.total_particles as f64;
    let cov_f = (DMatrix::from_diagonal(&f) - &f * f.transpose()) / total;
    let a_inv = lu
        .try_inverse()
        .ok_or(Error::Unidentifiable { condition })?;
    let cov_a = &a_inv * cov_f * a_inv.transpose();
    let uncertainty = (0..n).map(|i| cov_a[(i, i)].max(0.0).sqrt()).collect();

    let sum: f64 = estimate.iter().sum();
    let estimate = if (sum - 1.0).abs() > ABUNDANCE_TOL {
        estimate.iter().map(|x| x / sum).collect()
    } else {
        estimate
    };

    Ok(Reconstruction {
        abundances: AbundanceVector::new(estimate)?,
        uncertainty,
        observed_fractions: fractions,
        condition_number: condition,
        constrained,
    })
}

/// Minimises `‖A·x − f‖²` over the probability simplex with a primal
/// active-set method. `A` must have full column rank.
pub fn simplex_least_squares(a: &DMatrix<f64>, f: &DVector<f64>) -> Result<Vec<f64>> {
    let n = a.ncols();
    let h = a.transpose() * a;
    let g = a.transpose() * f;
    let eps = 1e-14;

    let mut x = vec![1.0 / n as f64; n];
    let mut free = vec![true; n];

    for _ in 0..(50 * n + 50) {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let m = idx.len();
        // [H_FF  -1] [z]   [g_F]
        // [1ᵀ     0] [μ] = [ 1 ]
        let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                kkt[(r, c)] = h[(i, j)];
            }
            kkt[(r, m)] = -1.0;
            kkt[(m, r)] = 1.0;
            rhs[r] = g[i];
        }
        rhs[m] = 1.0;
        let sol = kkt.lu().solve(&rhs).ok_or(Error::Unidentifiable {
            condition: f64::INFINITY,
        })?;
        let mu = sol[m];
        let mut candidate = vec![0.0; n];
        for (r, &i) in idx.iter().enumerate() {
            candidate[i] = sol[r];
        }

        if idx.iter().all(|&i| candidate[i] >= -eps) {
            x = candidate.iter().map(|v| v.max(0.0)).collect();
            let xv = DVector::from_column_slice(&x);
            let grad = &h * &xv - &g;
            let release = (0..n)
                .filter(|&i| !free[i])
                .map(|i| (i, grad[i] - mu))
                .filter(|&(_, lambda)| lambda < -eps)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                None => return Ok(x),
                Some((i, _)) => free[i] = true,
            }
        } else {
            // step towards the candidate until the first free variable hits 0
            let (block, alpha) = idx
                .iter()
                .filter(|&&i| candidate[i] < 0.0)
                .map(|&i| (i, x[i] / (x[i] - candidate[i])))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("infeasible candidate has a negative entry");
            for i in 0..n {
                x[i] += alpha * (candidate[i] - x[i]);
            }
            x[block] = 0.0;
            free[block] = false;
        }
    }
    Err(Error::Domain("active-set solver did not converge".into()))
}

fn check_charge_and_field(charge_c: f64, field_t: f64) -> Result<()> {
    if charge_c == 0.0 {
        return Err(Error::NeutralSpecies);
    }
    if !charge_c.is_finite() {
        return Err(Error::Domain("charge must be finite".into()));
    }
    if !(field_t.is_finite() && field_t > 0.0) {
        return Err(Error::Domain(format!(
            "magnetic field must be positive, got {field_t}"
        )));
    }
    Ok(())
}

/// Cyclotron radius `R = m·v/(q·B)` of an ion in a magnetic sector. The
/// sign follows the charge.
pub fn ams_radius(mass_kg: f64, velocity_mps: f64, charge_c: f64, field_t: f64) -> Result<f64> {
    check_charge_and_field(charge_c, field_t)?;
    Ok(mass_kg * velocity_mps / (charge_c * field_t))
}

/// Radius difference `ΔR = (v/B)(m₂/q₂ − m₁/q₁)`; the spatial separation of
/// the two beams after a half turn is `2ΔR`.
pub fn ams_separation(
    m1: f64,
    q1: f64,
    m2: f64,
    q2: f64,
    velocity_mps: f64,
    field_t: f64,
) -> Result<f64> {
    check_charge_and_field(q1, field_t)?;
    check_charge_and_field(q2, field_t)?;
    Ok(velocity_mps / field_t * (m2 / q2 - m1 / q1))
}

/// Phase-error specification for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ErrorSpec {
    /// Reference errors `δφ_{0,s}`, `s = 1..N`, in rad.
    PhaseErrors { delta_phi_rad: Vec<f64> },
    /// One Gaussian arm-length realisation with this standard deviation (m).
    PathNoise {
        #[serde(rename = "sigma_L_m")]
        sigma_l_m: f64,
    },
}

/// Experiment config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub species: Vec<SpeciesInput>,
    pub velocity_mps: f64,
    pub abundances: Vec<f64>,
    pub total_particles: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorSpec>,
}

/// Results document of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub species: Vec<Species>,
    pub true_abundances: AbundanceVector,
    pub phase_errors: PhaseErrorVector,
    pub leakage: LeakageMatrix,
    pub counts: CountRecord,
    pub reconstruction: Reconstruction,
}

/// Builds the leakage matrix an experiment config describes.
pub fn experiment_leakage(
    species: &[Species],
    config: &ExperimentConfig,
) -> Result<(PhaseErrorVector, LeakageMatrix)> {
    let n = species.len();
    let ratios = error_model::mass_ratios(species);
    let errs = match &config.errors {
        None => PhaseErrorVector::zero(ratios)?,
        Some(ErrorSpec::PhaseErrors { delta_phi_rad }) => {
            if delta_phi_rad.len() + 1 != n {
                return Err(Error::DimensionMismatch {
                    expected: n - 1,
                    actual: delta_phi_rad.len(),
                });
            }
            PhaseErrorVector::new(delta_phi_rad.clone(), ratios)?
        }
        Some(ErrorSpec::PathNoise { sigma_l_m }) => {
            let mut rng = error_model::trial_rng(config.seed, FLUCTUATION_STREAM);
            let fluct: PathFluctuation = error_model::sample_fluctuation(n, *sigma_l_m, &mut rng)?;
            error_model::phases_from_fluctuation(&fluct, species, config.velocity_mps)?
        }
    };
    let leakage = error_model::simulate_leakage(&errs)?;
    Ok((errs, leakage))
}

/// Runs the full pipeline for a config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let species = config
        .species
        .iter()
        .map(SpeciesInput::to_species)
        .collect::<Result<Vec<_>>>()?;
    if species.len() < 2 {
        return Err(Error::InvalidDimension("need at least two species".into()));
    }
    if config.abundances.len() != species.len() {
        return Err(Error::DimensionMismatch {
            expected: species.len(),
            actual: config.abundances.len(),
        });
    }
    let abundances = AbundanceVector::new(config.abundances.clone())?;
    let (phase_errors, leakage) = experiment_leakage(&species, config)?;
    let counts = simulate_counts(&abundances, &leakage, config.total_particles, config.seed)?;
    let reconstruction = reconstruct_spectrum(&counts, &leakage)?;
    Ok(ExperimentResult {
        species,
        true_abundances: abundances,
        phase_errors,
        leakage,
        counts,
        reconstruction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::ELEMENTARY_CHARGE;
    use std::f64::consts::PI;

    const M_C12: f64 = 1.99e-26;

    fn fifteenth_leakage() -> LeakageMatrix {
        let t = 2.0 * PI / 15.0;
        let e = PhaseErrorVector::new(vec![t, t], vec![1.0, 13.0 / 12.0, 14.0 / 12.0]).unwrap();
        error_model::simulate_leakage(&e).unwrap()
    }

    #[test]
    fn abundance_validation() {
        assert!(AbundanceVector::new(vec![0.5, 0.5]).is_ok());
        assert!(AbundanceVector::new(vec![0.5, 0.6]).is_err());
        assert!(AbundanceVector::new(vec![-0.1, 1.1]).is_err());
        assert!(AbundanceVector::new(vec![]).is_err());
        assert!(serde_json::from_str::<AbundanceVector>("[0.2, 0.2]").is_err());
    }

    #[test]
    fn pure_species_identity_leakage() {
        let a = AbundanceVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let c = simulate_counts(&a, &LeakageMatrix::identity(3), 12_345, 9).unwrap();
        assert_eq!(c.counts, vec![12_345, 0, 0]);
    }

    #[test]
    fn balanced_pair_is_binomial() {
        let a = AbundanceVector::new(vec![0.5, 0.5]).unwrap();
        let total = 1_000_000u64;
        let c = simulate_counts(&a, &LeakageMatrix::identity(2), total, 2024).unwrap();
        let sigma = 0.5 / (total as f64).sqrt();
        for f in c.fractions() {
            assert!((f - 0.5).abs() < 5.0 * sigma, "{f}");
        }
        assert_eq!(c.counts.iter().sum::<u64>(), total);
    }

    #[test]
    fn pure_species_leaks_at_analytic_rate() {
        let a = AbundanceVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        let total = 1_000_000u64;
        let c = simulate_counts(&a, &fifteenth_leakage(), total, 5).unwrap();
        let t = 2.0 * PI / 15.0;
        let p00 = 1.0 / 3.0 + 2.0 / 9.0 * (2.0 * t.cos() + 1.0);
        let sigma = (p00 * (1.0 - p00) / total as f64).sqrt();
        assert!((c.fractions()[0] - p00).abs() < 5.0 * sigma);
    }

    #[test]
    fn counts_are_seed_deterministic() {
        let a = AbundanceVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let l = fifteenth_leakage();
        let x = simulate_counts(&a, &l, 300_000, 77).unwrap();
        let y = simulate_counts(&a, &l, 300_000, 77).unwrap();
        let z = simulate_counts(&a, &l, 300_000, 78).unwrap();
        assert_eq!(x, y);
        assert_ne!(x.counts, z.counts);
    }

    #[test]
    fn simulate_counts_errors() {
        let a = AbundanceVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            simulate_counts(&a, &LeakageMatrix::identity(3), 10, 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(simulate_counts(&a, &LeakageMatrix::identity(2), 0, 1).is_err());
    }

    #[test]
    fn identity_reconstruction_is_exact() {
        let c = CountRecord {
            total_particles: 1000,
            counts: vec![600, 400],
            seed: 0,
        };
        let r = reconstruct_spectrum(&c, &LeakageMatrix::identity(2)).unwrap();
        assert_eq!(r.abundances.as_slice(), &[0.6, 0.4]);
        assert!(!r.constrained);
        let sigma = (0.6f64 * 0.4 / 1000.0).sqrt();
        assert!((r.uncertainty[0] - sigma).abs() < 1e-15);
        assert!((r.uncertainty[1] - sigma).abs() < 1e-15);
    }

    #[test]
    fn round_trip_recovers_abundances() {
        let truth = [0.9, 0.05, 0.05];
        let a = AbundanceVector::new(truth.to_vec()).unwrap();
        let l = fifteenth_leakage();
        let c = simulate_counts(&a, &l, 1_000_000, 11).unwrap();
        let r = reconstruct_spectrum(&c, &l).unwrap();
        for (k, ((est, t), sd)) in r
            .abundances
            .as_slice()
            .iter()
            .zip(truth)
            .zip(&r.uncertainty)
            .enumerate()
        {
            let z = (est - t).abs() / sd;
            assert!(z < 5.0, "k={k} z={z}");
        }
    }

    #[test]
    fn uniform_mixing_is_unidentifiable() {
        let l = LeakageMatrix::new(vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let c = CountRecord {
            total_particles: 3,
            counts: vec![1, 1, 1],
            seed: 0,
        };
        assert!(matches!(
            reconstruct_spectrum(&c, &l),
            Err(Error::Unidentifiable { .. })
        ));
    }

    #[test]
    fn constrained_solution_stays_on_simplex() {
        // channel fractions that the unconstrained inverse maps outside the simplex
        let l = LeakageMatrix::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let c = CountRecord {
            total_particles: 100,
            counts: vec![95, 5],
            seed: 0,
        };
        let r = reconstruct_spectrum(&c, &l).unwrap();
        assert!(r.constrained);
        assert_eq!(r.abundances.as_slice(), &[1.0, 0.0]);
    }

    /// Brute-force check of the simplex solver on a fine grid.
    #[test]
    fn simplex_solver_matches_grid_search() {
        let a = DMatrix::from_row_slice(3, 3, &[0.7, 0.2, 0.3, 0.2, 0.6, 0.1, 0.1, 0.2, 0.6]);
        let f = DVector::from_column_slice(&[0.05, 0.15, 0.8]);
        let x = simplex_least_squares(&a, &f).unwrap();
        let obj = |x: &[f64]| (&a * DVector::from_column_slice(x) - &f).norm_squared();
        let best = obj(&x);
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let p = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    (steps - i - j) as f64 / steps as f64,
                ];
                assert!(obj(&p) >= best - 1e-12);
            }
        }
        assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn ams_radius_examples() {
        let r = ams_radius(M_C12, 1e5, ELEMENTARY_CHARGE, 1.0).unwrap();
        assert!((r - 1.242e-2).abs() / 1.242e-2 < 1e-3);
        let r2 = ams_radius(M_C12, 1e5, ELEMENTARY_CHARGE, 2.0).unwrap();
        assert!((r2 - r / 2.0).abs() < 1e-18);
        assert!(matches!(
            ams_radius(M_C12, 1e5, 0.0, 1.0),
            Err(Error::NeutralSpecies)
        ));
        assert!(ams_radius(M_C12, 1e5, ELEMENTARY_CHARGE, 0.0).is_err());
    }

    #[test]
    fn ams_separation_examples() {
        let q = ELEMENTARY_CHARGE;
        let m14 = 7.0 / 6.0 * M_C12;
        let d = ams_separation(M_C12, q, m14, q, 1e5, 1.0).unwrap();
        assert!((d - 2.07e-3).abs() / 2.07e-3 < 2e-3);
        let d2 = ams_separation(M_C12, q, m14, q, 2e5, 1.0).unwrap();
        assert!((d2 - 2.0 * d).abs() < 1e-18);
        assert_eq!(
            ams_separation(M_C12, q, 2.0 * M_C12, 2.0 * q, 1e5, 1.0).unwrap(),
            0.0
        );
        assert_eq!(ams_separation(m14, q, M_C12, q, 1e5, 1.0).unwrap(), -d);
        assert!(matches!(
            ams_separation(M_C12, 0.0, m14, q, 1e5, 1.0),
            Err(Error::NeutralSpecies)
        ));
    }

    #[test]
    fn experiment_config_parses_both_error_forms() {
        let a: ExperimentConfig = serde_json::from_str(
            r#"{"species":[{"name":"C12","mass_u":12},{"name":"C14","mass_kg":2.3e-26}],
                "velocity_mps":1.0,"abundances":[0.5,0.5],"total_particles":10,"seed":1,
                "errors":{"delta_phi_rad":[0.1]}}"#,
        )
        .unwrap();
        assert_eq!(
            a.errors,
            Some(ErrorSpec::PhaseErrors {
                delta_phi_rad: vec![0.1]
            })
        );
        let b: ExperimentConfig = serde_json::from_str(
            r#"{"species":[{"name":"a","mass_u":12},{"name":"b","mass_u":14}],
                "velocity_mps":1.0,"abundances":[0.5,0.5],"total_particles":10,"seed":1,
                "errors":{"sigma_L_m":1e-9}}"#,
        )
        .unwrap();
        assert_eq!(b.errors, Some(ErrorSpec::PathNoise { sigma_l_m: 1e-9 }));
    }

    #[test]
    fn experiment_pipeline() {
        let cfg = ExperimentConfig {
            species: vec![
                SpeciesInput::Kg {
                    name: "C12".into(),
                    mass_kg: M_C12,
                },
                SpeciesInput::Kg {
                    name: "C14".into(),
                    mass_kg: 7.0 / 6.0 * M_C12,
                },
            ],
            velocity_mps: 1.0,
            abundances: vec![1.0, 0.0],
            total_particles: 5000,
            seed: 3,
            errors: None,
        };
        let r = run_experiment(&cfg).unwrap();
        assert_eq!(r.counts.counts, vec![5000, 0]);

        let noisy = ExperimentConfig {
            errors: Some(ErrorSpec::PathNoise { sigma_l_m: 1e-9 }),
            abundances: vec![0.7, 0.3],
            ..cfg.clone()
        };
        let x = serde_json::to_string(&run_experiment(&noisy).unwrap()).unwrap();
        let y = serde_json::to_string(&run_experiment(&noisy).unwrap()).unwrap();
        assert_eq!(x, y);

        let bad = ExperimentConfig {
            abundances: vec![1.0],
            ..cfg
        };
        assert!(matches!(
            run_experiment(&bad),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
