//! Single-trajectory experiments driven by a [`RunConfig`]. Each function
//! owns one trajectory end to end, so ensembles parallelize over seeds.

use serde::{Deserialize, Serialize};

use crate::combinatorics::{check_property_a, component_count, richness, Comparison, PropertyA, SymbolicScheme};
use crate::config::{Method, RunConfig};
use crate::dynamics::precise::{bits_for_collisions, simulate_rounded};
use crate::dynamics::{conserved, simulate_with, OrbitSegment, Stop};
use crate::error::{Error, ErrorClass, Result};
use crate::lyapunov::{lyapunov_spectrum, relevant_nonzero, Spectrum, Verdict};
use crate::model::{sample_initial_state, SystemParams};
use crate::neutral::{advance_system, cpf_verify, is_sufficient, neutral_direct, neutral_jacobian, JacobianOptions};

/// Conservation and contact diagnostics of a simulated segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub events: usize,
    pub final_time: f64,
    pub energy: f64,
    /// `|H - H_0|` at the end, `H_0` the initial energy.
    pub energy_drift: f64,
    pub momentum_norm: f64,
    pub max_contact_residue: f64,
}

impl SimulateSummary {
    pub fn of(segment: &OrbitSegment) -> Self {
        let (h, p) = conserved(&segment.final_state, &segment.params);
        let (h0, _) = conserved(&segment.initial, &segment.params);
        Self {
            events: segment.len(),
            final_time: segment.final_state.time,
            energy: h,
            energy_drift: (h - h0).abs(),
            momentum_norm: p.iter().map(|x| x * x).sum::<f64>().sqrt(),
            max_contact_residue: segment.contact_residues().into_iter().fold(0.0, f64::max),
        }
    }
}

/// Simulates `n_collisions` events (or up to `total_time`) from the
/// configured initial state.
pub fn run_simulate(cfg: &RunConfig) -> Result<(OrbitSegment, SimulateSummary)> {
    let params = cfg.params_for_seed(cfg.seed)?;
    let state = cfg.initial_state(&params, cfg.seed)?;
    let stop = Stop {
        max_collisions: Some(cfg.n_collisions),
        max_time: cfg.total_time,
    };
    let segment = simulate_with(&params, &state, stop, cfg.sim_options())?;
    let summary = SimulateSummary::of(&segment);
    Ok((segment, summary))
}

/// One row of a sufficiency survey. Analysis fields are empty when the
/// method was not requested or the seed failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub seed: u64,
    pub masses: Vec<f64>,
    pub n: usize,
    pub p_sigma: usize,
    pub richness: usize,
    pub property_a: bool,
    pub dim_direct: Option<usize>,
    pub dim_cpf: Option<usize>,
    pub dim_jacobian: Option<usize>,
    pub dim_alpha: Option<usize>,
    pub equations: Option<usize>,
    pub sufficient: Option<bool>,
    /// Largest relative CPF residual over the neutral basis.
    pub cpf_residual: Option<f64>,
    pub error: Option<String>,
    /// The failure signals a bug rather than a degenerate trajectory.
    pub consistency_failure: bool,
}

impl SurveyRecord {
    fn empty(seed: u64, masses: Vec<f64>) -> Self {
        Self {
            seed,
            masses,
            n: 0,
            p_sigma: 0,
            richness: 0,
            property_a: false,
            dim_direct: None,
            dim_cpf: None,
            dim_jacobian: None,
            dim_alpha: None,
            equations: None,
            sufficient: None,
            cpf_residual: None,
            error: None,
            consistency_failure: false,
        }
    }

    fn fail(mut self, err: Error) -> Self {
        self.consistency_failure = err.class() == ErrorClass::Consistency;
        self.error = Some(err.to_string());
        self
    }
}

/// Simulates one survey segment and decides its sufficiency with every
/// requested method. Never fails: problems are recorded in the row.
pub fn survey_seed(cfg: &RunConfig, seed: u64) -> SurveyRecord {
    let params = match cfg.params_for_seed(seed) {
        Ok(p) => p,
        Err(e) => return SurveyRecord::empty(seed, Vec::new()).fail(e),
    };
    let record = SurveyRecord::empty(seed, params.masses.clone());
    let segment = match survey_segment(cfg, &params, seed) {
        Ok(s) => s,
        Err(e) => return record.fail(e),
    };
    analyze_segment(cfg, &segment, record)
}

/// The segment of a survey seed: double precision, or the rounded
/// high-precision orbit when the Jacobian oracle has to reproduce it.
pub fn survey_segment(cfg: &RunConfig, params: &SystemParams, seed: u64) -> Result<OrbitSegment> {
    let state = sample_initial_state(params, seed)?;
    let n = cfg.segment_length;
    if cfg.methods.contains(&Method::Jacobian) {
        simulate_rounded(params, &state, n, bits_for_collisions(n))
    } else {
        simulate_with(params, &state, Stop::collisions(n), cfg.sim_options())
    }
}

/// Fills the combinatorial and neutral-space fields of `record`.
pub fn analyze_segment(cfg: &RunConfig, segment: &OrbitSegment, mut record: SurveyRecord) -> SurveyRecord {
    let sigma = segment.symbols();
    let n_balls = segment.params.n_balls;
    record.n = sigma.len();
    record.p_sigma = component_count(&sigma, n_balls);
    record.richness = richness(&sigma, n_balls);
    record.property_a =
        check_property_a(&SymbolicScheme::from_segment(segment), Comparison::default()) == PropertyA::Holds;
    match neutral_fields(cfg, segment, &mut record) {
        Ok(()) => record,
        Err(e) => record.fail(e),
    }
}

fn neutral_fields(cfg: &RunConfig, segment: &OrbitSegment, record: &mut SurveyRecord) -> Result<()> {
    let tol = cfg.tolerances.rank_tol;
    let d = segment.params.dim;
    let use_direct = cfg.methods.contains(&Method::Direct);
    let use_cpf = cfg.methods.contains(&Method::Cpf);
    if use_direct && use_cpf {
        let s = is_sufficient(segment, tol)?;
        record.dim_direct = Some(s.dim_direct);
        record.dim_cpf = Some(s.dim_cpf);
        record.dim_alpha = Some(s.dim_alpha);
        record.equations = Some(s.equations);
    } else if use_direct {
        record.dim_direct = Some(neutral_direct(segment, tol)?.dim);
    } else if use_cpf {
        let system = advance_system(segment, tol)?;
        record.dim_cpf = Some(system.dim_n);
        record.dim_alpha = Some(system.dim_alpha);
        record.equations = Some(system.equations());
    }
    if use_cpf {
        let basis = neutral_direct(segment, tol)?;
        let mut worst: f64 = 0.0;
        for (w, alphas) in basis.basis.iter().zip(&basis.advances) {
            worst = worst.max(cpf_verify(segment, w, alphas)?.relative);
        }
        record.cpf_residual = Some(worst);
    }
    if cfg.methods.contains(&Method::Jacobian) {
        let report = neutral_jacobian(segment, &JacobianOptions::default())?;
        record.dim_jacobian = Some(report.dim_history);
        if let Some(other) = record.dim_direct.or(record.dim_cpf) {
            if other != report.dim_history {
                return Err(Error::MethodDisagreement(format!(
                    "double-precision dimension {other} vs Jacobian dimension {}",
                    report.dim_history
                )));
            }
        }
    }
    let dim = record.dim_direct.or(record.dim_cpf).or(record.dim_jacobian);
    record.sufficient = dim.map(|k| k == d + 1);
    Ok(())
}

/// Ensemble totals of a survey.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyAggregate {
    pub segments: usize,
    pub failures: usize,
    pub min_richness: usize,
    /// Segments without errors whose richness reaches `min_richness`.
    pub rich: usize,
    pub rich_sufficient: usize,
    /// Seeds of rich segments found not sufficient.
    pub rich_not_sufficient: Vec<u64>,
    pub tainted: bool,
}

pub fn aggregate(records: &[SurveyRecord], min_richness: usize) -> SurveyAggregate {
    let mut agg = SurveyAggregate {
        segments: records.len(),
        failures: 0,
        min_richness,
        rich: 0,
        rich_sufficient: 0,
        rich_not_sufficient: Vec::new(),
        tainted: false,
    };
    for r in records {
        if r.error.is_some() {
            agg.failures += 1;
            agg.tainted |= r.consistency_failure;
            continue;
        }
        if r.richness >= min_richness {
            agg.rich += 1;
            match r.sufficient {
                Some(true) => agg.rich_sufficient += 1,
                _ => agg.rich_not_sufficient.push(r.seed),
            }
        }
    }
    agg
}

/// One row of a richness survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichnessRecord {
    pub seed: u64,
    pub n: usize,
    pub p_sigma: usize,
    pub richness: usize,
    /// `None` when Property (A) holds, otherwise the violating 1-based pair.
    pub property_a_violation: Option<(usize, usize)>,
    pub error: Option<String>,
}

pub fn richness_seed(cfg: &RunConfig, seed: u64) -> RichnessRecord {
    let mut rec = RichnessRecord {
        seed,
        n: 0,
        p_sigma: 0,
        richness: 0,
        property_a_violation: None,
        error: None,
    };
    let segment = cfg.params_for_seed(seed).and_then(|p| {
        let state = sample_initial_state(&p, seed)?;
        simulate_with(&p, &state, Stop::collisions(cfg.segment_length), cfg.sim_options())
    });
    match segment {
        Ok(seg) => {
            let sigma = seg.symbols();
            let n_balls = seg.params.n_balls;
            rec.n = sigma.len();
            rec.p_sigma = component_count(&sigma, n_balls);
            rec.richness = richness(&sigma, n_balls);
            if let PropertyA::Violated { k, l } =
                check_property_a(&SymbolicScheme::from_segment(&seg), Comparison::default())
            {
                rec.property_a_violation = Some((k, l));
            }
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

/// Spectrum of the trajectory sampled for `cfg.seed`, with its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRun {
    pub spectrum: Spectrum,
    pub tol_zero: f64,
    pub verdict: Verdict,
}

pub fn run_lyapunov(cfg: &RunConfig) -> Result<LyapunovRun> {
    let params = cfg.params_for_seed(cfg.seed)?;
    let state = cfg.initial_state(&params, cfg.seed)?;
    let spectrum = lyapunov_spectrum(
        &params,
        &state,
        cfg.lyapunov_time(),
        &cfg.lyapunov_options(),
        cfg.sim_options(),
    )?;
    let tol_zero = cfg.tolerances.tol_zero.unwrap_or_else(|| spectrum.default_tol());
    let verdict = relevant_nonzero(&spectrum, tol_zero);
    Ok(LyapunovRun {
        spectrum,
        tol_zero,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survey_row_for_two_balls() {
        let mut cfg = RunConfig::new(2, 2, 1.0, 0.15);
        cfg.segment_length = 8;
        let r = survey_seed(&cfg, 3);
        assert!(r.error.is_none(), "{:?}", r.error);
        assert_eq!(r.n, 8);
        assert_eq!(r.dim_direct, r.dim_cpf);
        assert_eq!(r.sufficient, Some(r.dim_direct == Some(3)));
        assert!(r.cpf_residual.unwrap() < 1e-9);
    }

    #[test]
    fn aggregate_counts_only_clean_rich_rows() {
        let mut rich = SurveyRecord::empty(1, vec![1.0, 1.0]);
        rich.richness = 3;
        rich.sufficient = Some(true);
        let mut poor = rich.clone();
        poor.seed = 2;
        poor.richness = 0;
        poor.sufficient = Some(false);
        let mut bad = rich.clone();
        bad.seed = 3;
        bad = bad.fail(Error::MethodDisagreement("x".into()));
        let mut lonely = rich.clone();
        lonely.seed = 4;
        lonely.sufficient = Some(false);
        let agg = aggregate(&[rich, poor, bad, lonely], 1);
        assert_eq!((agg.rich, agg.rich_sufficient, agg.failures), (2, 1, 1));
        assert_eq!(agg.rich_not_sufficient, vec![4]);
        assert!(agg.tainted);
    }
}
