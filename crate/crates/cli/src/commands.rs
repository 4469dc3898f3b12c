use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cmvdr_core::cyclospec::{coherence_map, null_modulation_sets, select_modulation_sets};
use cmvdr_core::experiment::{run_sweep, summarize, write_csv};
use cmvdr_core::pipeline::{candidate_shifts, enhance, resonant_frequencies};
use cmvdr_core::synth::mix_scene;
use cmvdr_core::wav::{read_wav, write_mono_wav, write_wav};
use cmvdr_core::{
    improvement, si_sdr, EnhanceInput, ExperimentConfig, Method, MetricReport, ResonantFrequencySet, SignalBuffer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    if cli.dump_config {
        print!("{}", toml::to_string_pretty(&cfg).context("serializing configuration")?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!("no subcommand given; see --help");
    };
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    match command {
        Command::Analyze { input, noise } => analyze(&cfg, &cli.out_dir, &input, noise.as_deref()),
        Command::Enhance { noisy, noise, reference, known_freqs } => {
            enhance_files(&cfg, &cli.out_dir, &noisy, noise.as_deref(), reference.as_deref(), known_freqs)
        }
        Command::Simulate => simulate(&cfg, &cli.out_dir),
        Command::Sweep { variable, values, known_frequencies } => {
            let mut cfg = cfg;
            if let Some(v) = variable {
                cfg.sweep = v;
            }
            if let Some(v) = values {
                cfg.values = v;
            }
            cfg.known_frequencies |= known_frequencies;
            sweep(&cfg, &cli.out_dir)
        }
    }
}

/// Defaults, then the config file, then command-line overrides.
fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.n_trials = trials;
    }
    if let Some(methods) = &cli.methods {
        cfg.methods = methods.clone();
    }
    if let Some(strategy) = cli.strategy {
        cfg.enhance.strategy = strategy;
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load(path: &Path) -> Result<SignalBuffer> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn method_stem(m: Method) -> &'static str {
    match m {
        Method::Mvdr => "mvdr",
        Method::MvdrOracle => "mvdr_oracle",
        Method::Cmvdr => "cmvdr",
        Method::CmvdrOracle => "cmvdr_oracle",
    }
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    resonant: &'a ResonantFrequencySet,
    candidates_hz: &'a [f64],
    coherence_source: &'a str,
}

fn analyze(cfg: &ExperimentConfig, out: &Path, input: &Path, noise: Option<&Path>) -> Result<()> {
    let enh = &cfg.enhance;
    enh.validate()?;
    let x = load(input)?;
    let v = noise.map(load).transpose()?;
    let freq_source = v.as_ref().unwrap_or(&x);
    let resonant = resonant_frequencies(freq_source, &enh.peaks)?;
    let candidates = candidate_shifts(&resonant, enh.strategy);
    let (coh_source, label) = match (&v, enh.coherence_on_noise) {
        (Some(v), true) => (v, "noise"),
        _ => (&x, "input"),
    };
    let map = coherence_map(&candidates, coh_source, &enh.stft, enh.coherence_reg)?;
    let sets = if enh.c_max == 0 {
        null_modulation_sets(enh.stft.fft_size)
    } else {
        select_modulation_sets(&map, enh.gamma_min, enh.c_max)
    };

    let fs = coh_source.sample_rate_hz();
    let k = enh.stft.fft_size;
    let path = out.join("coherence.csv");
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "shift_hz,bin_hz,gamma")?;
    for (p, shift) in map.shifts_hz.iter().enumerate() {
        for bin in 0..map.n_bins() {
            writeln!(w, "{shift},{},{}", bin as f64 * fs / k as f64, map.values[[p, bin]])?;
        }
    }
    w.flush()?;
    write_json(
        &out.join("resonant.json"),
        &AnalyzeReport { resonant: &resonant, candidates_hz: &candidates, coherence_source: label },
    )?;
    write_json(&out.join("modulation_sets.json"), &sets)?;
    println!(
        "{} resonant frequencies, {} candidate shifts, {} bins with shifted bands",
        resonant.len(),
        candidates.len(),
        sets.iter().filter(|s| s.len() > 1).count()
    );
    Ok(())
}

#[derive(Serialize)]
struct MethodReport {
    method: Method,
    file: PathBuf,
    max_constraint_residual: f64,
    n_weight_vectors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<MetricReport>,
}

#[derive(Serialize)]
struct EnhanceReport<'a> {
    outputs: Vec<MethodReport>,
    diagnostics: &'a cmvdr_core::pipeline::EnhanceDiagnostics,
}

fn enhance_files(
    cfg: &ExperimentConfig,
    out: &Path,
    noisy_path: &Path,
    noise_path: Option<&Path>,
    reference_path: Option<&Path>,
    known_freqs: Option<Vec<f64>>,
) -> Result<()> {
    if let Some(m) = cfg.methods.iter().find(|m| m.uses_oracle_rtf()) {
        bail!("{m} needs the true RTFs, which are only available in simulated sweeps");
    }
    let noisy = load(noisy_path)?;
    let noise = noise_path.map(load).transpose()?;
    let reference = reference_path.map(load).transpose()?.map(|r| r.select_channel(0));
    let input = EnhanceInput {
        noisy: &noisy,
        noise_only: noise.as_ref(),
        known_freqs_hz: known_freqs.as_deref(),
        oracle_rtf: None,
    };
    let result = enhance(&input, &cfg.enhance, &cfg.methods)?;
    let noisy_ref = noisy.select_channel(0);
    let mut outputs = Vec::new();
    for o in &result.outputs {
        let file = out.join(format!("enhanced_{}.wav", method_stem(o.method)));
        write_wav(&file, &o.signal).with_context(|| format!("writing {}", file.display()))?;
        let metrics = match &reference {
            Some(r) => Some(MetricReport {
                method: o.method.to_string(),
                si_sdr_db: si_sdr(&o.signal, r)?,
                si_sdr_improvement_db: improvement(&noisy_ref, &o.signal, r)?,
                trial: 0,
                seed: cfg.seed,
            }),
            None => None,
        };
        if let Some(m) = &metrics {
            println!("{:<7} SI-SDR {:7.2} dB  improvement {:+.2} dB", o.method, m.si_sdr_db, m.si_sdr_improvement_db);
        }
        outputs.push(MethodReport {
            method: o.method,
            file,
            max_constraint_residual: o.max_constraint_residual,
            n_weight_vectors: o.n_weight_vectors,
            metrics,
        });
    }
    write_json(&out.join("report.json"), &EnhanceReport { outputs, diagnostics: &result.diagnostics })
}

#[derive(Serialize)]
struct Manifest<'a> {
    seed: u64,
    scene: &'a cmvdr_core::SceneConfig,
    files: [&'a str; 3],
    target_delays: &'a [usize],
    interferer_delays: &'a [usize],
    noise_gain: f64,
    noise: Option<&'a cmvdr_core::synth::CsNoise>,
    input_si_sdr_db: f64,
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let scene = mix_scene(&cfg.scene, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let files = ["noisy.wav", "target.wav", "noise.wav"];
    write_wav(out.join(files[0]), &scene.noisy)?;
    let target = scene.target_ref.real_channel(0);
    write_mono_wav(out.join(files[1]), &target, scene.target_ref.sample_rate_hz())?;
    write_wav(out.join(files[2]), &scene.noise_only)?;
    let input_si_sdr_db = si_sdr(&scene.noisy.select_channel(0), &scene.target_ref)?;
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            seed: cfg.seed,
            scene: &cfg.scene,
            files,
            target_delays: &scene.target_delays,
            interferer_delays: &scene.interferer_delays,
            noise_gain: scene.noise_gain,
            noise: scene.noise.as_ref(),
            input_si_sdr_db,
        },
    )?;
    println!("wrote {} ({} channels, input SI-SDR {input_si_sdr_db:.2} dB)", out.display(), scene.noisy.n_channels());
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let rows = run_sweep(cfg)?;
    let path = out.join("sweep.csv");
    write_csv(&rows, File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    let summary = summarize(cfg, &rows);
    write_json(&out.join("summary.json"), &summary)?;
    println!("{} ({})", summary.sweep_variable.name(), summary.interval);
    for r in &summary.rows {
        println!(
            "{:>8} {:<7} {:7.2} dB  [{:.2}, {:.2}]",
            r.value, r.method, r.mean_improvement_db, r.ci95_low_db, r.ci95_high_db
        );
    }
    Ok(())
}
