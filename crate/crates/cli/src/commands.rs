use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use vpbridge::data::{self, io};
use vpbridge::model::{read_checkpoint, write_checkpoint};
use vpbridge::verify::{self, Fault, VerifyConfig};
use vpbridge::{baseline, sampler, training};
use vpbridge::{DiffusionSchedule, EvalReport, ModelParams, RemovalTriplet, SamplerConfig, Tensor, Variant};

use crate::config::{Config, Paradigm};

pub const METRICS_CSV: &str = "metrics.csv";

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
    Verify(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Runtime(_) => 2,
            Self::Verify(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Verify(m) => f.write_str(m),
            Self::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

impl From<vpbridge::Error> for Failure {
    fn from(e: vpbridge::Error) -> Self {
        Self::Runtime(e.into())
    }
}

pub fn gen_data(cfg: &Config, count: u64, variant: Variant) -> Result<(), Failure> {
    let spec = cfg.gen_spec(variant);
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let dir = &cfg.dataset_dir;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    for i in 0..count {
        let tr = data::generate_triplet(&spec, i)?;
        io::write_triplet(dir, i, &tr).with_context(|| format!("writing triplet {i}"))?;
    }
    let indices: Vec<u64> = (0..count).collect();
    io::write_manifest(dir, &indices)?;
    println!("wrote {count} triplets to {}", dir.display());
    Ok(())
}

fn load_dataset(dir: &Path) -> anyhow::Result<Vec<(u64, RemovalTriplet<f32>)>> {
    let indices = io::read_manifest(dir)
        .with_context(|| format!("cannot read dataset manifest in {}", dir.display()))?;
    indices
        .into_iter()
        .map(|i| {
            io::read_triplet(dir, i)
                .map(|t| (i, t))
                .with_context(|| format!("reading triplet {i} from {}", dir.display()))
        })
        .collect()
}

pub fn train(cfg: &Config) -> Result<(), Failure> {
    let s = cfg.schedule().map_err(Failure::Usage)?;
    let tc = cfg.train_config();
    tc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let dataset: Vec<RemovalTriplet<f32>> = load_dataset(&cfg.dataset_dir)?
        .into_iter()
        .map(|(_, t)| t)
        .collect();
    if let Some(bad) = dataset.iter().find(|t| t.dims() != dataset[0].dims()) {
        return Err(anyhow!(
            "dataset mixes shapes {:?} and {:?}",
            dataset[0].dims(),
            bad.dims()
        )
        .into());
    }
    let out = training::train(&dataset, &tc, &s).context("training failed")?;
    if let Some(parent) = cfg.checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    write_checkpoint(&cfg.checkpoint, &out.params)
        .with_context(|| format!("writing {}", cfg.checkpoint.display()))?;
    let csv = cfg.loss_csv_path();
    fs::write(&csv, out.curve_csv()).with_context(|| format!("writing {}", csv.display()))?;
    let last = out.curve.last().map(|c| c.1).unwrap_or(f64::NAN);
    println!(
        "trained {} steps ({}), final batch loss {last:.6}; checkpoint {}",
        tc.total_steps,
        cfg.paradigm,
        cfg.checkpoint.display()
    );
    Ok(())
}

fn check_shapes(params: &ModelParams<f32>, source: &Tensor<f32>) -> anyhow::Result<()> {
    let d = source.dims();
    if d.len() != 3 || d[0] != params.frames() {
        return Err(anyhow!(
            "checkpoint expects inputs of shape [{}, H, W] but the input tensor has shape {:?}",
            params.frames(),
            d
        ));
    }
    Ok(())
}

fn generate(
    cfg: &Config,
    params: &ModelParams<f32>,
    source: &Tensor<f32>,
    mask: &Tensor<f32>,
    steps: usize,
    seed: u64,
) -> anyhow::Result<Tensor<f32>> {
    let out = match cfg.paradigm {
        Paradigm::Bridge => {
            let sc = SamplerConfig {
                steps,
                seed,
                ..SamplerConfig::default()
            };
            sampler::sample(params, source, mask, &sc, &cfg.schedule().map_err(|e| anyhow!(e))?)?
        }
        Paradigm::Diffusion => {
            baseline::ddim_sample(params, source, mask, steps, &DiffusionSchedule::default(), seed)?
        }
    };
    Ok(out)
}

fn append_metrics(dir: &Path, row: &str) -> anyhow::Result<()> {
    let path = dir.join(METRICS_CSV);
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "index,paradigm,steps,seed,{}", EvalReport::CSV_HEADER)?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

pub fn sample(cfg: &Config, input: &str, mask: Option<&Path>, steps: Option<usize>) -> Result<(), Failure> {
    let steps = steps.unwrap_or(cfg.steps_infer);
    if steps == 0 {
        return Err(Failure::Usage("--steps must be positive".into()));
    }
    cfg.schedule().map_err(Failure::Usage)?;
    let params = read_checkpoint(&cfg.checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", cfg.checkpoint.display()))?;

    if let Ok(index) = input.parse::<u64>() {
        let dir = &cfg.dataset_dir;
        let tr = io::read_triplet(dir, index)
            .with_context(|| format!("reading triplet {index} from {}", dir.display()))?;
        check_shapes(&params, &tr.source)?;
        let seed = cfg.seed ^ (index << 32);
        let out = generate(cfg, &params, &tr.source, &tr.mask, steps, seed)?;
        io::write_tensor(io::output_path(dir, index), &out)?;
        let report = data::evaluate(&out, &tr)?;
        let row = format!("{index},{},{steps},{seed},{}", cfg.paradigm, report.csv_row());
        append_metrics(dir, &row)?;
        println!("{row}");
    } else {
        let path = Path::new(input);
        let source = io::read_tensor(path).with_context(|| format!("reading {}", path.display()))?;
        check_shapes(&params, &source)?;
        let mask = match mask {
            Some(m) => io::read_tensor(m).with_context(|| format!("reading {}", m.display()))?,
            None => Tensor::zeros(source.dims()),
        };
        if mask.dims() != source.dims() {
            return Err(anyhow!(
                "mask shape {:?} does not match source shape {:?}",
                mask.dims(),
                source.dims()
            )
            .into());
        }
        let out = generate(cfg, &params, &source, &mask, steps, cfg.seed)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
        let dest = path.with_file_name(format!("{stem}_out.brt"));
        io::write_tensor(&dest, &out)?;
        println!("wrote {}", dest.display());
    }
    Ok(())
}

pub fn eval(cfg: &Config, input: Option<u64>) -> Result<(), Failure> {
    let dir = &cfg.dataset_dir;
    let indices = match input {
        Some(i) => vec![i],
        None => io::read_manifest(dir)
            .with_context(|| format!("cannot read dataset manifest in {}", dir.display()))?
            .into_iter()
            .filter(|&i| io::output_path(dir, i).exists())
            .collect(),
    };
    if indices.is_empty() {
        return Err(anyhow!("no outputs to evaluate in {}", dir.display()).into());
    }
    println!("index,{}", EvalReport::CSV_HEADER);
    for i in indices {
        let tr = io::read_triplet(dir, i).with_context(|| format!("reading triplet {i}"))?;
        let out = io::read_tensor(io::output_path(dir, i)).with_context(|| format!("reading output {i}"))?;
        println!("{i},{}", data::evaluate(&out, &tr)?.csv_row());
    }
    Ok(())
}

pub fn verify(cfg: &Config, only: Option<&str>, flip_c: bool) -> Result<(), Failure> {
    if let Some(name) = only {
        if !verify::CHECKS.contains(&name) {
            return Err(Failure::Usage(format!(
                "unknown check `{name}`; expected one of {}",
                verify::CHECKS.join(", ")
            )));
        }
    }
    let vc = VerifyConfig {
        schedule: cfg.schedule().map_err(Failure::Usage)?,
        seed: cfg.seed,
        fault: Fault { flip_c_sign: flip_c },
        ..VerifyConfig::default()
    };
    let names: Vec<&str> = match only {
        Some(n) => vec![n],
        None => verify::CHECKS.to_vec(),
    };
    let mut failed = 0;
    for name in &names {
        let outcome = verify::run_check(name, &vc)?;
        println!("{outcome}");
        failed += usize::from(!outcome.passed());
    }
    if failed > 0 {
        return Err(Failure::Verify(format!("{failed} of {} checks failed", names.len())));
    }
    println!("all {} checks passed", names.len());
    Ok(())
}
