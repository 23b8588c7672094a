//! Subcommand implementations.

use std::path::{Path, PathBuf};

use mbdm_core::checkpoint::{self, Checkpoint};
use mbdm_core::config::{parse_and_resolve, Resolved, SampleMode};
use mbdm_core::error::{Error, Result};
use mbdm_core::io;
use mbdm_core::metrics;
use mbdm_core::sampler::{self, SamplerConfig, Solver};
use mbdm_core::score::{ArchTag, BridgeOnlyScore, ComposedScore, GuidedScore};
use mbdm_core::train::{TrainState, MetricsRow};
use mbdm_core::{Scalar, Tensor64};

fn load_config(path: &Path) -> Result<Resolved<Scalar>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_and_resolve(&text, base)
}

fn build_model(resolved: &Resolved<Scalar>) -> Result<ComposedScore<Scalar>> {
    let bridges = resolved.build_bridges()?;
    let spec = ComposedScore::spec_for(
        resolved.model.arch,
        resolved.dataset.cols(),
        resolved.model.hidden,
        resolved.model.blocks,
        resolved.model.embed_dim,
        &bridges,
    );
    let params = mbdm_core::nn::MlpParams::init(spec, &mut mbdm_core::rng::stream_rng(0, 0));
    ComposedScore::new(resolved.model.arch, params, bridges, resolved.sched)
}

pub fn train(config: &Path, out: &Path, resume: Option<&Path>) -> Result<()> {
    let resolved = load_config(config)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.resolved.cfg"), &resolved.canonical)?;
    io::write_matrix_csv(&out.join("dataset.csv"), &resolved.dataset)?;

    let cfg = resolved.train_config();
    let mut state = match resume {
        None => TrainState::init(build_model(&resolved)?, &cfg)?,
        Some(ckpt_path) => {
            let ckpt: Checkpoint<Scalar> = checkpoint::load(ckpt_path)?;
            if ckpt.config_hash != resolved.hash {
                return Err(Error::config(format!(
                    "checkpoint config hash {:#x} does not match resolved config {:#x}; refusing to resume",
                    ckpt.config_hash, resolved.hash
                )));
            }
            if ckpt.arch != resolved.model.arch {
                return Err(Error::config("checkpoint architecture differs from config"));
            }
            let params = ckpt.params();
            let adam = ckpt.adam_state(&params, cfg.lr);
            let bridges = resolved.build_bridges()?;
            let model = ComposedScore::new(ckpt.arch, params, bridges, resolved.sched)?;
            TrainState {
                model,
                adam,
                iteration: ckpt.iteration,
                rng: ckpt.rng.restore(),
            }
        }
    };

    let mut log = io::MetricsLog::create(&out.join("metrics.csv"))?;
    let hash = resolved.hash;
    let out_dir = out.to_path_buf();
    mbdm_core::train::train(
        &mut state,
        &cfg,
        &resolved.dataset,
        |row: &MetricsRow| {
            println!(
                "iter {:>8}  loss {:.6}  r-elbo {}",
                row.iteration,
                row.train_loss,
                row.r_elbo.map_or("-".to_string(), |r| format!("{r:.6}")),
            );
            log.row(row.iteration, row.train_loss, row.r_elbo)
        },
        |st: &TrainState<Scalar>| {
            let name = if st.iteration == cfg.iterations {
                "checkpoint_final.mbdm".to_string()
            } else {
                format!("checkpoint_{:08}.mbdm", st.iteration)
            };
            checkpoint::save(&out_dir.join(name), st, hash, true)
        },
    )?;
    println!(
        "{{\"trained_iterations\": {}, \"out\": \"{}\"}}",
        state.iteration,
        out.display()
    );
    Ok(())
}

pub struct SampleArgs {
    pub checkpoint: PathBuf,
    pub config: Option<PathBuf>,
    pub mode: Option<String>,
    pub n: Option<usize>,
    pub steps: Option<usize>,
    pub solver: Option<String>,
    pub churn: Option<f64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn sample(args: SampleArgs) -> Result<()> {
    let config_path = match &args.config {
        Some(p) => p.clone(),
        None => args
            .checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("config.resolved.cfg"),
    };
    let resolved = load_config(&config_path)?;
    let ckpt: Checkpoint<Scalar> = checkpoint::load(&args.checkpoint)?;
    if ckpt.config_hash != resolved.hash {
        return Err(Error::config(
            "checkpoint was trained under a different configuration",
        ));
    }

    let mode = match &args.mode {
        Some(m) => SampleMode::parse(m)?,
        None => resolved.sampler.mode,
    };
    let bridges = resolved.build_bridges()?;
    if matches!(mode, SampleMode::Prior | SampleMode::Guidance) && bridges.is_empty() {
        return Err(Error::config(format!(
            "{} mode requires at least one [bridge.*] section",
            mode.name()
        )));
    }
    if mode == SampleMode::Guidance && ckpt.arch != ArchTag::Plain {
        return Err(Error::config(
            "guidance mode applies bridges to a plain-architecture checkpoint",
        ));
    }

    let mut scfg: SamplerConfig<Scalar> = resolved.sampler_config();
    if let Some(steps) = args.steps {
        scfg.steps = steps;
    }
    if let Some(solver) = &args.solver {
        scfg.solver = Solver::parse(solver)?;
    }
    if let Some(churn) = args.churn {
        scfg.s_churn = churn;
    }
    if let Some(seed) = args.seed {
        scfg.seed = seed;
    }
    let n = args.n.unwrap_or(resolved.sampler.n);

    let model = ComposedScore::new(ckpt.arch, ckpt.params(), resolved.build_bridges()?, resolved.sched)?;
    let batch = match mode {
        SampleMode::Model => sampler::sample(&scfg, &model, n)?,
        SampleMode::Prior => {
            let prior = BridgeOnlyScore { bridges };
            sampler::sample(&scfg, &prior, n)?
        }
        SampleMode::Guidance => {
            let guided = GuidedScore {
                model: &model,
                bridges: &bridges,
            };
            sampler::sample(&scfg, &guided, n)?
        }
    };

    let rows = batch.valid_rows();
    let eval_bridges = resolved.build_bridges()?;
    io::write_samples_csv(&args.out, &rows, &eval_bridges)?;

    let (valid, invalid) = rows
        .iter()
        .fold((0usize, 0usize), |(v, i), row| {
            if eval_bridges.member_all(row) {
                (v + 1, i)
            } else {
                (v, i + 1)
            }
        });
    let rate = if rows.is_empty() {
        0.0
    } else {
        invalid as f64 / rows.len() as f64
    };
    println!(
        "{{\"requested\": {n}, \"emitted\": {}, \"failed\": {}, \"valid\": {valid}, \"invalid\": {invalid}, \"infraction_rate\": {rate}}}",
        rows.len(),
        batch.n_failed
    );
    Ok(())
}

pub fn eval(
    samples: &Path,
    reference: Option<&Path>,
    config: &Path,
    ckpt_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let resolved = load_config(config)?;
    let bridges = resolved.build_bridges()?;
    let s = io::read_samples_csv::<Scalar>(samples)?;
    if s.points.cols() != resolved.dataset.cols() {
        return Err(Error::config(format!(
            "sample dimension {} does not match configured data dimension {}",
            s.points.cols(),
            resolved.dataset.cols()
        )));
    }
    let reference_data: Tensor64 = match reference {
        Some(p) => {
            let (_, t) = io::read_matrix_csv(p)?;
            t
        }
        None => resolved.dataset.clone(),
    };
    if reference_data.cols() != s.points.cols() {
        return Err(Error::config("reference dimension mismatch"));
    }

    let rows: Vec<&[Scalar]> = (0..s.points.rows()).map(|i| s.points.row(i)).collect();
    let inf = metrics::infraction_rate(&rows, &bridges)?;
    let inf_loss = metrics::infraction_loss(&rows, &bridges)?;
    let ref_rows: Vec<&[Scalar]> = (0..reference_data.rows())
        .map(|i| reference_data.row(i))
        .collect();
    let ed = metrics::energy_distance(&rows, &ref_rows)?;

    let relbo = match ckpt_path {
        Some(p) => {
            let ckpt: Checkpoint<Scalar> = checkpoint::load(p)?;
            if ckpt.config_hash != resolved.hash {
                return Err(Error::config(
                    "checkpoint was trained under a different configuration",
                ));
            }
            let model = ComposedScore::new(
                ckpt.arch,
                ckpt.params(),
                resolved.build_bridges()?,
                resolved.sched,
            )?;
            let (_, val) = mbdm_core::train::split_validation(&resolved.dataset);
            match val {
                Some(v) => Some(metrics::r_elbo(&model, &v)?),
                None => None,
            }
        }
        None => None,
    };

    println!("samples            {}", inf.n);
    for (name, rate) in &inf.per_constraint {
        println!("infraction[{name}]   {:.4}%", rate * 100.0);
    }
    println!("infraction overall {:.4}%", inf.overall * 100.0);
    println!("infraction loss    {inf_loss:.6e}");
    println!("energy distance    {ed:.6}");
    if let Some(r) = relbo {
        println!("r-elbo             {r:.6}");
    }

    if let Some(out_path) = out {
        let mut csv = String::from("metric,value\n");
        for (name, rate) in &inf.per_constraint {
            csv.push_str(&format!("infraction_{name},{rate}\n"));
        }
        csv.push_str(&format!("infraction_overall,{}\n", inf.overall));
        csv.push_str(&format!("infraction_loss,{inf_loss}\n"));
        csv.push_str(&format!("energy_distance,{ed}\n"));
        if let Some(r) = relbo {
            csv.push_str(&format!("r_elbo,{r}\n"));
        }
        std::fs::write(out_path, csv)?;
    }
    Ok(())
}

pub fn plot(
    samples: &Path,
    config: &Path,
    out: &Path,
    width: usize,
    height: usize,
    bounds: Option<&str>,
) -> Result<()> {
    let resolved = load_config(config)?;
    let bridges = resolved.build_bridges()?;
    let s = io::read_samples_csv::<Scalar>(samples)?;
    crate::plot::render(&s, &bridges, &resolved, out, width, height, bounds)
}

pub fn gen(config: &Path, out: &Path) -> Result<()> {
    let resolved = load_config(config)?;
    io::write_matrix_csv(out, &resolved.dataset)?;
    println!(
        "{{\"rows\": {}, \"dims\": {}, \"out\": \"{}\"}}",
        resolved.dataset.rows(),
        resolved.dataset.cols(),
        out.display()
    );
    Ok(())
}
