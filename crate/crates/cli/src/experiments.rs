//! One runner per experiment kind. Each writes its artifacts into the
//! output directory and returns their file names.

use crate::config::{ExperimentConfig, Kind};
use crate::scale::scale_for_t;
use serde_json::{json, Value};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use traplab::coarsegrain::{
    default_params, nondensity_statistics, write_nondensity_csv, CoarseGrainParams,
};
use traplab::dos::{ids_estimate, lifshitz_fit, write_dos_csv, DosOptions};
use traplab::emptiness::{emptiness_log_prob_exact, lemma1_ratio, write_lemma_csv, Truncation};
use traplab::geometry::{read_region, Aabb, PunchedDomainSpec, Region};
use traplab::lattice::{
    sample_auto, sample_configuration, save_configuration, DisplacementLaw, LawKind,
};
use traplab::spectral::{
    assemble_traps, grid_spacing, mr_optimize, principal_eigenvalue, punched_domain,
    rauch_taylor_sweep, write_sweep_csv, EigenOptions, SweepOptions, TrapDomain, TrapKind,
};
use traplab::survival::{
    annealed_survival, eigen_proxy_annealed, read_survival_csv, scaling_fit, write_survival_csv,
    PotentialSpec, ProxyOptions,
};
use traplab::{Result, TrapError};

pub struct Artifacts {
    /// Files written, relative to the output directory.
    pub files: Vec<String>,
    /// The CSV the plot script draws, if any.
    pub primary_csv: Option<String>,
}

fn law(cfg: &ExperimentConfig) -> Result<DisplacementLaw> {
    let name = cfg.str("law");
    let kind = LawKind::parse(name)
        .ok_or_else(|| TrapError::param("law", format!("unknown law '{name}'")))?;
    DisplacementLaw::new(kind, cfg.f64("theta"), cfg.usize("d"))
}

fn eig_options(cfg: &ExperimentConfig) -> EigenOptions {
    EigenOptions {
        tol: cfg.f64("eig.tol"),
        max_iter: cfg.usize("eig.max_iter"),
        inner_tol: cfg.f64("eig.inner_tol"),
        inner_max_iter: cfg.usize("eig.inner_max_iter"),
        max_basis: cfg.usize("eig.max_basis"),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(dir.join(name), s)?;
    Ok(())
}

/// The r list, or r = scale_for_t(d, θ, t) for each t when "t" is set.
fn scales(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let ts = cfg.list("t");
    if ts.is_empty() {
        return Ok(cfg.list("r"));
    }
    ts.iter()
        .map(|&t| scale_for_t(cfg.usize("d"), cfg.f64("theta"), t))
        .collect()
}

fn height(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

pub fn run_kind(cfg: &ExperimentConfig, out: &Path) -> Result<Artifacts> {
    let seed = cfg.u64("seed");
    let csv_name = format!("{}.csv", cfg.kind.name());
    let json_name = format!("{}.json", cfg.kind.name());
    let csv_only = |name: &str| Artifacts {
        files: vec![name.to_string()],
        primary_csv: Some(name.to_string()),
    };
    match cfg.kind {
        Kind::Sample => {
            let law = law(cfg)?;
            let window = Aabb::symmetric(law.d, cfg.f64("window.half"))?;
            let stream = cfg.u64("stream");
            let c = match cfg.opt_f64("truncation.radius") {
                Some(r) => sample_configuration(&law, &window, r, seed, stream)?,
                None => sample_auto(&law, &window, seed, stream)?,
            };
            let path = out.join(&csv_name);
            save_configuration(&c, &path)?;
            let sidecar = traplab::lattice::sidecar_path(&path);
            let side_name = sidecar
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Artifacts {
                files: vec![csv_name.clone(), side_name],
                primary_csv: Some(csv_name),
            })
        }
        Kind::Emptiness => {
            let law = law(cfg)?;
            let family = cfg
                .list("v")
                .into_iter()
                .map(|v| Ok((v, Region::single(Aabb::symmetric(law.d, 0.5 * v)?))))
                .collect::<Result<Vec<_>>>()?;
            let rows = lemma1_ratio(&law, &family, cfg.f64("theta"))?;
            write_lemma_csv(&rows, create(out, &csv_name)?)?;
            let warnings: Vec<Value> = rows
                .iter()
                .filter_map(|r| r.warning.as_ref().map(|w| json!({"v": r.v, "warning": w})))
                .collect();
            write_json(out, &json_name, &json!({ "warnings": warnings }))?;
            Ok(Artifacts {
                files: vec![csv_name.clone(), json_name],
                primary_csv: Some(csv_name),
            })
        }
        Kind::Holefun => {
            let d = cfg.usize("d");
            let region = match cfg.str("region") {
                "" => Region::single(Aabb::symmetric(d, 0.5 * cfg.f64("box.side"))?),
                path => read_region(Path::new(path))?,
            };
            let res = cfg
                .opt_f64("resolution")
                .unwrap_or_else(|| region.default_resolution());
            let theta = cfg.f64("theta");
            let value = region.hole_functional(theta, res)?;
            let mut w = csv::Writer::from_writer(create(out, &csv_name)?);
            let fmt = |e: csv::Error| TrapError::Format(e.to_string());
            w.write_record(["theta", "resolution", "volume", "hole_functional"])
                .map_err(fmt)?;
            w.write_record([
                theta.to_string(),
                res.to_string(),
                region.volume().to_string(),
                value.to_string(),
            ])
            .map_err(fmt)?;
            w.flush()?;
            Ok(Artifacts {
                files: vec![csv_name],
                primary_csv: None,
            })
        }
        Kind::Eig => {
            let d = cfg.usize("d");
            let n = cfg.f64("n");
            let outer = Aabb::symmetric(d, n)?;
            let side = cfg.f64("hole_side");
            let (dom, h) = match cfg.opt_f64("spacing") {
                None => (
                    TrapDomain::free(outer.clone()),
                    grid_spacing(&outer, None, cfg.opt_f64("grid.h"))?,
                ),
                Some(spacing) => {
                    let spec = PunchedDomainSpec {
                        d,
                        n,
                        spacing,
                        hole_side: side,
                    };
                    spec.validate()?;
                    let h = grid_spacing(&outer, Some(side), cfg.opt_f64("grid.h"))?;
                    (punched_domain(&spec, h)?, h)
                }
            };
            let kind = match cfg.opt_f64("height") {
                None => TrapKind::Hard,
                Some(v) => TrapKind::Soft(v),
            };
            let op = assemble_traps(&dom, kind, 0.0, h)?;
            let res = principal_eigenvalue(&op, &eig_options(cfg))?;
            let mut w = csv::Writer::from_writer(create(out, &csv_name)?);
            let fmt = |e: csv::Error| TrapError::Format(e.to_string());
            w.write_record([
                "n",
                "spacing",
                "hole_side",
                "h",
                "lambda1",
                "residual",
                "iterations",
            ])
            .map_err(fmt)?;
            w.write_record([
                n.to_string(),
                cfg.opt_f64("spacing")
                    .map_or("none".into(), |s| s.to_string()),
                side.to_string(),
                h.to_string(),
                res.lambda1.to_string(),
                res.residual.to_string(),
                res.iterations.to_string(),
            ])
            .map_err(fmt)?;
            w.flush()?;
            Ok(Artifacts {
                files: vec![csv_name],
                primary_csv: None,
            })
        }
        Kind::RauchTaylor => {
            let opts = SweepOptions {
                h: cfg.opt_f64("grid.h"),
                theta: cfg.f64("theta"),
                eig: eig_options(cfg),
            };
            let rows = rauch_taylor_sweep(cfg.usize("d"), cfg.f64("beta"), &scales(cfg)?, &opts)?;
            write_sweep_csv(&rows, create(out, &csv_name)?)?;
            Ok(csv_only(&csv_name))
        }
        Kind::MrSweep => {
            let opts = SweepOptions {
                h: cfg.opt_f64("grid.h"),
                theta: cfg.f64("theta"),
                eig: eig_options(cfg),
            };
            let mut rows = Vec::new();
            let mut summary = Vec::new();
            for r in scales(cfg)? {
                let land = mr_optimize(
                    cfg.usize("d"),
                    r,
                    cfg.f64("theta"),
                    &cfg.list("n"),
                    &cfg.list("multiplier"),
                    &opts,
                )?;
                let best = land.best.map(|b| land.rows[b].clone());
                summary.push(json!({
                    "r": r,
                    "best": best.map(|b| json!({"n": b.n, "multiplier": b.delta_over_critical, "M_value": b.m_value})),
                    "skipped": land.skipped.iter().map(|(n, m, why)| json!({"n": n, "multiplier": m, "reason": why})).collect::<Vec<_>>(),
                }));
                rows.extend(land.rows);
            }
            write_sweep_csv(&rows, create(out, &csv_name)?)?;
            write_json(out, &json_name, &Value::Array(summary))?;
            Ok(Artifacts {
                files: vec![csv_name.clone(), json_name],
                primary_csv: Some(csv_name),
            })
        }
        Kind::Survive => {
            let law = law(cfg)?;
            let spec = PotentialSpec {
                epsilon: cfg.f64("potential.epsilon"),
                bump_side: cfg.f64("potential.bump_side"),
                height: height(cfg.opt_f64("potential.height")),
                window: Aabb::symmetric(law.d, cfg.f64("window.half"))?,
            };
            let ts = cfg.list("t_grid");
            let configs = cfg.usize("configs");
            let rows = match cfg.str("method") {
                "mc" => {
                    annealed_survival(
                        &law,
                        &spec,
                        &ts,
                        configs,
                        cfg.usize("mc.paths"),
                        cfg.f64("mc.dt"),
                        seed,
                    )?
                    .estimates
                }
                "proxy" => {
                    let opts = ProxyOptions {
                        h: cfg.f64("grid.h"),
                        eig: eig_options(cfg),
                    };
                    let (rows, sample) =
                        eigen_proxy_annealed(&law, &spec, &ts, configs, seed, &opts)?;
                    write_json(
                        out,
                        &json_name,
                        &json!({"configs": sample.lambdas.len(), "failures": sample.failures}),
                    )?;
                    rows
                }
                other => {
                    return Err(TrapError::param(
                        "method",
                        format!("'{other}' is neither mc nor proxy"),
                    ))
                }
            };
            write_survival_csv(&rows, create(out, &csv_name)?)?;
            let mut files = vec![csv_name.clone()];
            if out.join(&json_name).exists() {
                files.push(json_name);
            }
            Ok(Artifacts {
                files,
                primary_csv: Some(csv_name),
            })
        }
        Kind::Scaling => {
            let input = cfg.str("input");
            if input.is_empty() {
                return Err(TrapError::param("input", "a survival CSV is required"));
            }
            let pts: Vec<(f64, f64)> = read_survival_csv(File::open(input)?)?
                .into_iter()
                .map(|(t, s)| {
                    if s > 0.0 {
                        Ok((t, s.ln()))
                    } else {
                        Err(TrapError::Data(format!(
                            "nonpositive survival {s} at t = {t}"
                        )))
                    }
                })
                .collect::<Result<_>>()?;
            let fit = scaling_fit(&pts, cfg.usize("d"), cfg.bool("log_correction"))?;
            write_json(out, &json_name, &serde_json::to_value(&fit)?)?;
            Ok(Artifacts {
                files: vec![json_name],
                primary_csv: None,
            })
        }
        Kind::Densitybox => {
            let law = law(cfg)?;
            let (d, theta, r) = (law.d, law.theta, cfg.f64("r"));
            let params = match cfg.opt_f64("eta") {
                Some(eta) => CoarseGrainParams::new(d, theta, r, eta, cfg.opt_f64("chi"))?,
                None => match cfg.opt_f64("chi") {
                    Some(chi) => {
                        let base = default_params(d, theta, r)?;
                        CoarseGrainParams::new(d, theta, r, base.eta, Some(chi))?
                    }
                    None => default_params(d, theta, r)?,
                },
            };
            let half = cfg.usize("window.half") as i64;
            let stats = nondensity_statistics(&law, &params, half, cfg.usize("replicas"), seed)?;
            write_nondensity_csv(&stats.rows, create(out, &csv_name)?)?;
            write_json(
                out,
                &json_name,
                &json!({
                    "params": params,
                    "mean_fraction": stats.mean_fraction,
                    "stderr_fraction": stats.stderr_fraction,
                    "exceed_fraction": stats.exceed_fraction,
                    "mean_vacancy": stats.mean_vacancy,
                }),
            )?;
            Ok(Artifacts {
                files: vec![csv_name.clone(), json_name],
                primary_csv: Some(csv_name),
            })
        }
        Kind::Dos => {
            let law = law(cfg)?;
            let mut spec = PotentialSpec::unit(law.d, cfg.f64("N"))?;
            spec.height = height(cfg.opt_f64("potential.height"));
            let opts = DosOptions {
                k: cfg.usize("k"),
                h: cfg.f64("grid.h"),
                eig: eig_options(cfg),
            };
            let hist = ids_estimate(
                &law,
                &spec,
                &cfg.list("lambda"),
                cfg.usize("replicas"),
                seed,
                &opts,
            )?;
            write_dos_csv(&hist, create(out, &csv_name)?)?;
            let fit = lifshitz_fit(std::slice::from_ref(&hist), law.d, law.theta);
            write_json(
                out,
                &json_name,
                &json!({
                    "lifshitz": fit,
                    "complete_below": hist.complete_below,
                    "partial_spectra": hist.partial_spectra,
                }),
            )?;
            Ok(Artifacts {
                files: vec![csv_name.clone(), json_name],
                primary_csv: Some(csv_name),
            })
        }
        Kind::PpConverge => {
            let d = cfg.usize("d");
            let b = Region::single(Aabb::symmetric(d, 0.5 * cfg.f64("box.side"))?);
            let ball = emptiness_log_prob_exact(
                &DisplacementLaw::new(LawKind::UniformBall, 1.0, d)?,
                &b,
                Truncation::default(),
            )?;
            let mut w = csv::Writer::from_writer(create(out, &csv_name)?);
            let fmt = |e: csv::Error| TrapError::Format(e.to_string());
            w.write_record([
                "theta",
                "power_tail",
                "shifted_power",
                "poisson_limit",
                "uniform_ball_limit",
            ])
            .map_err(fmt)?;
            for theta in cfg.list("theta") {
                let p = emptiness_log_prob_exact(
                    &DisplacementLaw::new(LawKind::PowerTail, theta, d)?,
                    &b,
                    Truncation::default(),
                )?;
                let s = emptiness_log_prob_exact(
                    &DisplacementLaw::new(LawKind::ShiftedPower, theta, d)?,
                    &b,
                    Truncation::default(),
                )?;
                w.write_record([
                    theta.to_string(),
                    p.to_string(),
                    s.to_string(),
                    (-b.volume()).to_string(),
                    ball.to_string(),
                ])
                .map_err(fmt)?;
            }
            w.flush()?;
            Ok(csv_only(&csv_name))
        }
    }
}

/// gnuplot script for the primary curve of an experiment.
pub fn plot_script(kind: Kind, csv: &str) -> Option<String> {
    let (title, using, extra) = match kind {
        Kind::Sample => ("sampled points", "2:3 with dots", ""),
        Kind::Emptiness => ("exact log-emptiness / -hole functional", "1:4 with linespoints", ""),
        Kind::RauchTaylor => ("principal eigenvalue", "1:5 with points", "set logscale xy\n"),
        Kind::MrSweep => ("M value", "1:9 with points", "set logscale x\n"),
        Kind::Survive => ("survival", "1:2:3 with yerrorbars", "set logscale xy\n"),
        Kind::Densitybox => ("non-density boxes per replica", "1:5 with impulses", ""),
        Kind::Dos => ("integrated density of states", "1:2:3 with yerrorbars", ""),
        Kind::PpConverge => (
            "log-emptiness",
            "1:2 with linespoints title 'power tail', '' using 1:3 with linespoints title 'shifted power', '' using 1:4 with lines title 'Poisson limit', '' using 1:5 with lines title 'uniform ball limit'",
            "set logscale x\n",
        ),
        Kind::Holefun | Kind::Eig | Kind::Scaling => return None,
    };
    Some(format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\n{extra}plot '{csv}' using {using}\n"
    ))
}

pub fn manifest(cfg: &ExperimentConfig, artifacts: &[String]) -> Value {
    json!({
        "kind": cfg.kind.name(),
        "config": cfg.emit(),
        "versions": {
            "traplab": traplab::VERSION,
            "traplab-cli": env!("CARGO_PKG_VERSION"),
        },
        "artifacts": artifacts,
    })
}

/// Run one experiment: artifacts, plot script and manifest.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut art = run_kind(cfg, out)?;
    if let Some(csv) = &art.primary_csv {
        if let Some(script) = plot_script(cfg.kind, csv) {
            let name = format!("{}.gp", cfg.kind.name());
            std::fs::write(out.join(&name), script)?;
            art.files.push(name);
        }
    }
    let name = format!("{}.manifest.json", cfg.kind.name());
    art.files.push(name.clone());
    write_json(out, &name, &manifest(cfg, &art.files))?;
    Ok(art.files.iter().map(|f| out.join(f)).collect())
}
