//! Monte Carlo sweeps over scene and algorithm parameters.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::metrics::si_sdr;
use crate::pipeline::{enhance, EnhanceConfig, EnhanceInput, Method, ShiftStrategy};
use crate::synth::{mix_scene, SceneConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Beta,
    CMax,
    NMics,
    IsnrDb,
    Rt60S,
    InharmonicityPct,
}

impl SweepVariable {
    pub const ALL: [SweepVariable; 6] = [
        SweepVariable::Beta,
        SweepVariable::CMax,
        SweepVariable::NMics,
        SweepVariable::IsnrDb,
        SweepVariable::Rt60S,
        SweepVariable::InharmonicityPct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Beta => "beta",
            SweepVariable::CMax => "c_max",
            SweepVariable::NMics => "n_mics",
            SweepVariable::IsnrDb => "isnr_db",
            SweepVariable::Rt60S => "rt60_s",
            SweepVariable::InharmonicityPct => "inharmonicity_pct",
        }
    }

    /// Writes `value` into the matching configuration field.
    pub fn apply(self, value: f64, scene: &mut SceneConfig, enh: &mut EnhanceConfig) -> Result<()> {
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                invalid_arg(format!("{} needs a non-negative integer, got {v}", self.name()))
            }
        };
        match self {
            SweepVariable::Beta => scene.noise.beta = value,
            SweepVariable::CMax => enh.c_max = count(value)?,
            SweepVariable::NMics => scene.n_mics = count(value)?,
            SweepVariable::IsnrDb => scene.isnr_db = value,
            SweepVariable::Rt60S => scene.rir.rt60_s = value,
            SweepVariable::InharmonicityPct => scene.noise.inharmonicity_pct = value,
        }
        Ok(())
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let alias = match s.as_str() {
            "m" => "n_mics",
            "isnr" => "isnr_db",
            "rt60" => "rt60_s",
            "inharmonicity" => "inharmonicity_pct",
            other => other,
        };
        SweepVariable::ALL
            .into_iter()
            .find(|v| v.name() == alias)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep variable '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub sweep: SweepVariable,
    pub values: Vec<f64>,
    pub n_trials: usize,
    pub methods: Vec<Method>,
    /// Use the generator's partial frequencies instead of estimating them.
    pub known_frequencies: bool,
    pub seed: u64,
    pub scene: SceneConfig,
    pub enhance: EnhanceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep: SweepVariable::Beta,
            values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            n_trials: 50,
            methods: vec![Method::Mvdr, Method::Cmvdr],
            known_frequencies: false,
            seed: 0,
            scene: SceneConfig::default(),
            enhance: EnhanceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return invalid_arg("at least one trial is required");
        }
        if self.methods.is_empty() {
            return invalid_arg("at least one method is required");
        }
        if self.values.is_empty() {
            return invalid_arg("the sweep needs at least one value");
        }
        for &v in &self.values {
            let (scene, enh) = self.configs_for(v)?;
            scene.validate()?;
            enh.validate()?;
        }
        Ok(())
    }

    /// Scene and enhancement settings at one sweep value.
    pub fn configs_for(&self, value: f64) -> Result<(SceneConfig, EnhanceConfig)> {
        let mut scene = self.scene.clone();
        let mut enh = self.enhance;
        self.sweep.apply(value, &mut scene, &mut enh)?;
        Ok((scene, enh))
    }
}

/// Per-trial seed derived from the master seed; shared by all sweep values so
/// that every value sees the same random draws.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut z = master ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One CSV row: a method's score on one trial, with every parameter needed
/// to regenerate that trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub sweep_variable: SweepVariable,
    pub value: f64,
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub si_sdr_db: f64,
    pub input_si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    pub max_constraint_residual: f64,
    pub strategy: ShiftStrategy,
    pub known_frequencies: bool,
    pub beta: f64,
    pub inharmonicity_pct: f64,
    pub c_max: usize,
    pub n_mics: usize,
    pub isnr_db: f64,
    pub rt60_s: f64,
    pub duration_s: f64,
    /// Master seed of the sweep; with `trial` it regenerates `seed`.
    pub master_seed: u64,
}

/// Generates the scene for `trial` at sweep value `value` and scores every method.
pub fn run_trial(cfg: &ExperimentConfig, value: f64, trial: usize) -> Result<Vec<TrialRow>> {
    let (scene_cfg, enh) = cfg.configs_for(value)?;
    let seed = trial_seed(cfg.seed, trial);
    let scene = mix_scene(&scene_cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let freqs = match (&scene.noise, cfg.known_frequencies) {
        (Some(n), true) => Some(n.freqs_hz.clone()),
        (None, true) => return invalid_arg("known frequencies need a synthetic interferer"),
        _ => None,
    };
    let rtf = scene.oracle_rtf(&enh.stft)?;
    let input = EnhanceInput {
        noisy: &scene.noisy,
        noise_only: Some(&scene.noise_only),
        known_freqs_hz: freqs.as_deref(),
        oracle_rtf: Some(&rtf),
    };
    let out = enhance(&input, &enh, &cfg.methods)?;
    let input_score = si_sdr(&scene.noisy.select_channel(0), &scene.target_ref)?;
    out.outputs
        .iter()
        .map(|o| {
            let score = si_sdr(&o.signal, &scene.target_ref)?;
            Ok(TrialRow {
                sweep_variable: cfg.sweep,
                value,
                trial,
                seed,
                method: o.method,
                si_sdr_db: score,
                input_si_sdr_db: input_score,
                si_sdr_improvement_db: score - input_score,
                max_constraint_residual: o.max_constraint_residual,
                strategy: enh.strategy,
                known_frequencies: cfg.known_frequencies,
                beta: scene_cfg.noise.beta,
                inharmonicity_pct: scene_cfg.noise.inharmonicity_pct,
                c_max: enh.c_max,
                n_mics: scene_cfg.n_mics,
                isnr_db: scene_cfg.isnr_db,
                rt60_s: scene_cfg.rir.rt60_s,
                duration_s: scene_cfg.duration_s,
                master_seed: cfg.seed,
            })
        })
        .collect()
}

/// All trials at all sweep values, sorted by (value index, trial, method).
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<TrialRow>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.values.len()).flat_map(|v| (0..cfg.n_trials).map(move |t| (v, t))).collect();
    let mut results: Vec<(usize, Vec<TrialRow>)> = jobs
        .par_iter()
        .map(|&(v, t)| Ok((v, run_trial(cfg, cfg.values[v], t)?)))
        .collect::<Result<_>>()?;
    results.sort_by_key(|(v, rows)| (*v, rows.first().map_or(0, |r| r.trial)));
    let mut rows: Vec<TrialRow> = Vec::new();
    for (_, mut r) in results {
        r.sort_by_key(|row| row.method);
        rows.extend(r);
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[TrialRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[TrialRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Mean SI-SDR improvement of one method at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub value: f64,
    pub method: Method,
    pub n: usize,
    pub mean_improvement_db: f64,
    pub std_db: f64,
    pub ci95_low_db: f64,
    pub ci95_high_db: f64,
}

impl SummaryRow {
    pub fn overlaps(&self, other: &SummaryRow) -> bool {
        self.ci95_low_db <= other.ci95_high_db && other.ci95_low_db <= self.ci95_high_db
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sweep_variable: SweepVariable,
    /// How the intervals were built.
    pub interval: String,
    pub rows: Vec<SummaryRow>,
}

impl SweepSummary {
    pub fn get(&self, value: f64, method: Method) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.value == value && r.method == method)
    }
}

/// Mean and normal-approximation 95% interval, `mean ± 1.96·s/√n`, per (value, method).
pub fn summarize(cfg: &ExperimentConfig, rows: &[TrialRow]) -> SweepSummary {
    let mut out = Vec::new();
    for &value in &cfg.values {
        for &method in &cfg.methods {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.value == value && r.method == method)
                .map(|r| r.si_sdr_improvement_db)
                .collect();
            if xs.is_empty() {
                continue;
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = 1.96 * sd / n.sqrt();
            out.push(SummaryRow {
                value,
                method,
                n: xs.len(),
                mean_improvement_db: mean,
                std_db: sd,
                ci95_low_db: mean - half,
                ci95_high_db: mean + half,
            });
        }
    }
    SweepSummary {
        sweep_variable: cfg.sweep,
        interval: "normal approximation: mean ± 1.96·sd/√n".into(),
        rows: out,
    }
}
