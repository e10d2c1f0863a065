//! Run configuration, read from TOML.
//!
//! All keys live at the top level so that every one of them can be overridden
//! by a command-line flag of the same name.
//!
//! ```toml
//! n_balls = 3
//! dim = 2
//! torus_side = 1.0
//! radius = 0.15
//! mass_range = [0.5, 2.0]
//! seed = 1
//! ensemble_size = 100
//! segment_length = 40
//! methods = ["direct", "cpf"]
//! ```

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::required_richness;
use crate::dynamics::{SimOptions, TangentPolicy};
use crate::error::{Error, Result};
use crate::lyapunov::LyapunovOptions;
use crate::model::{sample_initial_state, PhaseState, SystemParams};
use crate::neutral::DEFAULT_RANK_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Cpf,
    Jacobian,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Cpf => "cpf",
            Method::Jacobian => "jacobian",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "direct" => Ok(Method::Direct),
            "cpf" => Ok(Method::Cpf),
            "jacobian" => Ok(Method::Jacobian),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_balls: usize,
    pub dim: usize,
    pub torus_side: f64,
    pub radius: f64,
    /// Explicit masses. Mutually exclusive with `mass_range`; equal unit
    /// masses when both are absent.
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
    /// Masses drawn uniformly per seed.
    #[serde(default)]
    pub mass_range: Option<[f64; 2]>,
    #[serde(default)]
    pub allow_zero_mass: bool,
    #[serde(default)]
    pub seed: u64,

    #[serde(default = "default_n_collisions")]
    pub n_collisions: usize,
    /// Length of the Lyapunov run; for `simulate`, an optional time limit.
    #[serde(default)]
    pub total_time: Option<f64>,
    #[serde(default = "default_segment_length")]
    pub segment_length: usize,
    #[serde(default = "default_ensemble_size")]
    pub ensemble_size: usize,
    #[serde(default = "default_renorm_every")]
    pub renorm_every: usize,
    #[serde(default)]
    pub frame_size: Option<usize>,
    /// Richness a survey segment needs to count; `ceil(C(N))` when absent.
    #[serde(default)]
    pub min_richness: Option<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Flat lifted positions of a prescribed start for `simulate` and
    /// `lyapunov`; replaces the sampled state. Set together with
    /// `initial_velocities`.
    #[serde(default)]
    pub initial_positions: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_velocities: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub resync_every: Option<u64>,
    #[serde(default)]
    pub nudge_tangential: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    /// Zero band of the Lyapunov verdict; `5 lambda_1 / sqrt(T)` when absent.
    #[serde(default)]
    pub tol_zero: Option<f64>,
    #[serde(default = "default_tangent_tol")]
    pub tangent_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_tol: default_rank_tol(),
            tol_zero: None,
            tangent_tol: default_tangent_tol(),
        }
    }
}

fn default_n_collisions() -> usize {
    1000
}
fn default_segment_length() -> usize {
    30
}
fn default_ensemble_size() -> usize {
    100
}
fn default_renorm_every() -> usize {
    10
}
fn default_methods() -> Vec<Method> {
    vec![Method::Direct, Method::Cpf]
}
fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}
fn default_tangent_tol() -> f64 {
    1e-12
}

pub const DEFAULT_TOTAL_TIME: f64 = 1e4;
pub const MAX_BALLS: usize = 4096;
pub const MAX_DIM: usize = 16;

impl RunConfig {
    /// A configuration with equal unit masses and default knobs.
    pub fn new(n_balls: usize, dim: usize, torus_side: f64, radius: f64) -> Self {
        Self {
            n_balls,
            dim,
            torus_side,
            radius,
            masses: None,
            mass_range: None,
            allow_zero_mass: false,
            seed: 0,
            n_collisions: default_n_collisions(),
            total_time: None,
            segment_length: default_segment_length(),
            ensemble_size: default_ensemble_size(),
            renorm_every: default_renorm_every(),
            frame_size: None,
            min_richness: None,
            methods: default_methods(),
            initial_positions: None,
            initial_velocities: None,
            tolerances: Tolerances::default(),
            resync_every: None,
            nudge_tangential: false,
            out: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg = Self::parse_unvalidated(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without checking the values, so that overrides can still be
    /// applied before [`RunConfig::validate`].
    pub fn parse_unvalidated(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().trim().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_balls > MAX_BALLS || self.dim > MAX_DIM {
            return Err(Error::Config(format!(
                "at most {MAX_BALLS} balls in at most {MAX_DIM} dimensions are supported"
            )));
        }
        if self.masses.is_some() && self.mass_range.is_some() {
            return Err(Error::Config("`masses` and `mass_range` are mutually exclusive".into()));
        }
        if let Some([lo, hi]) = self.mass_range {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!("mass_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        let positive = [
            ("n_collisions", self.n_collisions),
            ("segment_length", self.segment_length),
            ("ensemble_size", self.ensemble_size),
            ("renorm_every", self.renorm_every),
        ];
        for (key, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("`{key}` must be positive")));
            }
        }
        if let Some(t) = self.total_time {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("`total_time` must be positive, got {t}")));
            }
        }
        if self.frame_size == Some(0) || self.min_richness == Some(0) || self.resync_every == Some(0) {
            return Err(Error::Config("`frame_size`, `min_richness` and `resync_every` must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("`methods` must not be empty".into()));
        }
        let t = &self.tolerances;
        if !(t.rank_tol > 0.0 && t.rank_tol < 1.0) || !(t.tangent_tol > 0.0 && t.tangent_tol < 1.0) {
            return Err(Error::Config("`rank_tol` and `tangent_tol` must lie in (0, 1)".into()));
        }
        if let Some(z) = t.tol_zero {
            if !(z.is_finite() && z > 0.0) {
                return Err(Error::Config(format!("`tol_zero` must be positive, got {z}")));
            }
        }
        let params = self.params_for_seed(self.seed)?;
        match (&self.initial_positions, &self.initial_velocities) {
            (None, None) => {}
            (Some(q), Some(v)) => {
                let n = params.coords();
                if q.len() != n || v.len() != n {
                    return Err(Error::Config(format!("initial positions and velocities need {n} entries each")));
                }
                if q.iter().chain(v).any(|x| !x.is_finite()) {
                    return Err(Error::Config("initial state must be finite".into()));
                }
                let state = PhaseState::new(q.clone(), v.clone(), 0.0);
                if state.min_separation(&params) < 2.0 * params.radius {
                    return Err(Error::Config("initial positions overlap".into()));
                }
            }
            _ => {
                return Err(Error::Config(
                    "`initial_positions` and `initial_velocities` go together".into(),
                ))
            }
        }
        Ok(())
    }

    /// The prescribed initial state, or the one sampled for `seed`.
    pub fn initial_state(&self, params: &SystemParams, seed: u64) -> Result<PhaseState> {
        match (&self.initial_positions, &self.initial_velocities) {
            (Some(q), Some(v)) => Ok(PhaseState::new(q.clone(), v.clone(), 0.0)),
            _ => sample_initial_state(params, seed),
        }
    }

    /// System parameters for one ensemble member. Masses drawn from
    /// `mass_range` depend only on the seed.
    pub fn params_for_seed(&self, seed: u64) -> Result<SystemParams> {
        let masses = match (&self.masses, self.mass_range) {
            (Some(m), _) => m.clone(),
            (None, Some([lo, hi])) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_7373);
                (0..self.n_balls)
                    .map(|_| if lo == hi { lo } else { rng.random_range(lo..hi) })
                    .collect()
            }
            (None, None) => vec![1.0; self.n_balls],
        };
        let mut p = SystemParams::new(self.n_balls, self.dim, self.torus_side, self.radius, masses);
        if self.allow_zero_mass {
            p = p.with_zero_masses_allowed();
        }
        p.validate()?;
        Ok(p)
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            tangent_tol: self.tolerances.tangent_tol,
            tangent_policy: if self.nudge_tangential {
                TangentPolicy::Nudge
            } else {
                TangentPolicy::Abort
            },
            resync_every: self.resync_every,
            ..SimOptions::default()
        }
    }

    pub fn lyapunov_options(&self) -> LyapunovOptions {
        LyapunovOptions {
            renorm_every: self.renorm_every,
            frame_size: self.frame_size,
            ..LyapunovOptions::default()
        }
    }

    pub fn lyapunov_time(&self) -> f64 {
        self.total_time.unwrap_or(DEFAULT_TOTAL_TIME)
    }

    pub fn richness_threshold(&self) -> usize {
        self.min_richness.unwrap_or_else(|| required_richness(self.n_balls))
    }

    /// Ensemble seeds `seed, seed + 1, ...`.
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let start = self.seed;
        (0..self.ensemble_size as u64).map(move |k| start.wrapping_add(k))
    }
}
