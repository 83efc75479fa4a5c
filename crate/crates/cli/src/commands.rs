//! Subcommand implementations.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};
use pb_core::diagnostics::{
    bhattacharyya_gaussian, gaussian_power_posterior, ks_dissimilarity, mc_risk_difference,
    mc_risk_estimate, GaussianTruth, OraclePredictive, PowerPosteriorPredictive, RiskMethod,
    WlbPredictive,
};
use pb_core::edgeworth::{density_grid, estimate_edgeworth_inputs, kappa_coeffs};
use pb_core::experiment::{run_experiment, Experiment, ExperimentConfig};
use pb_core::hierarchical::{
    sample_dirichlet_allocation, sample_hier_large_k, sample_hier_penalized, HierDrawSet,
    HierarchicalSpec,
};
use pb_core::info::{eigenvalues, empirical_info, risk_difference, sandwich, w0_bar, w0_star};
use pb_core::io::{read_draws_csv, write_draws_csv, write_hier_draws, write_json};
use pb_core::model::{
    GammaPoissonConditional, GammaPrior, GammaRateConditional, GaussianLocation, GaussianPrior,
    PoissonRate,
};
use pb_core::samplers::{
    sample_pb_penalized, sample_pb_postpred, sample_pb_pseudo, sample_wbb, sample_wlb, ParamSampler,
};
use pb_core::solve::mle;
use pb_core::{DrawSet, RunConfig, SolveConfig};
use rand::{Rng, RngCore};
use serde_json::{json, Value};

use crate::exit::{check_nonconverged, usage, ThresholdExceeded};
use crate::spec::{numbers, read_data, DataArgs, ModelSpec, PriorSpec, W0Spec};
use crate::{
    CompareArgs, DataSource, EdgeworthArgs, ExperimentArgs, HierAlgorithm, HierArgs, HierModel,
    InfoArgs, Metric, RiskArgs, RunArgs, SampleAlgorithm, SampleArgs, SolveArgs,
};

fn solve_config(a: &SolveArgs) -> Result<SolveConfig> {
    let cfg = SolveConfig {
        grad_tol: a.grad_tol,
        max_iter: a.max_iter,
        ..SolveConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_config(a: &RunArgs) -> Result<RunConfig> {
    Ok(RunConfig {
        n_draws: a.n_draws,
        seed: a.seed,
        solve: solve_config(&a.solve)?,
        workers: a.workers,
    })
}

fn load(source: &DataSource) -> Result<(pb_core::Dataset, Box<dyn pb_core::ParametricModel>)> {
    let data = read_data(
        &source.data,
        &DataArgs {
            response: source.response.clone(),
            intercept: source.intercept,
        },
    )?;
    let model = ModelSpec::parse(&source.model)?.build(data.obs_dim())?;
    Ok((data, model))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn emit(value: &Value, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => write_json(p, value).with_context(|| format!("writing {}", p.display())),
        None => {
            let text = serde_json::to_string_pretty(value)?;
            match writeln!(std::io::stdout().lock(), "{text}") {
                // A closed pipe (e.g. `| head`) is not an error for the caller.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => Ok(r?),
            }
        }
    }
}

/// Resamples rows of a draw table uniformly.
struct EmpiricalSampler(DrawSet);

impl ParamSampler for EmpiricalSampler {
    fn sample_param(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let i = rng.random_range(0..self.0.n_draws());
        Some(self.0.draws.row(i).transpose())
    }
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let (data, model) = load(&a.source)?;
    let model = model.as_ref();
    let prior_spec = PriorSpec::parse(&a.prior)?;
    let run = run_config(&a.run)?;
    let start = Instant::now();
    let draws = match a.algorithm {
        SampleAlgorithm::Wlb => sample_wlb(model, &data, &run)?,
        SampleAlgorithm::Pen => {
            let prior = prior_spec.build(model)?;
            let w0 = W0Spec::parse(&a.w0)?.resolve(model, &data, prior.as_ref(), &run.solve)?;
            sample_pb_penalized(model, &data, prior.as_ref(), &w0, &run)?
        }
        SampleAlgorithm::Pseudo => {
            let prior = prior_spec.build(model)?;
            sample_pb_pseudo(model, &data, prior.as_ref(), a.c, a.t, &run)?
        }
        SampleAlgorithm::Wbb => {
            let prior = prior_spec.build(model)?;
            sample_wbb(model, &data, prior.as_ref(), a.lambda_reg, &run)?
        }
        SampleAlgorithm::Postpred => {
            let source: Box<dyn ParamSampler> = match &a.posterior {
                Some(p) => {
                    if !p.is_file() {
                        return Err(usage(format!("posterior file {} not found", p.display())));
                    }
                    let d = read_draws_csv(p)?;
                    if d.dim() != model.dim() {
                        return Err(usage(format!(
                            "posterior draws have {} columns, model has {} parameters",
                            d.dim(),
                            model.dim()
                        )));
                    }
                    Box::new(EmpiricalSampler(d))
                }
                None => {
                    let noise = model.gaussian_noise_cov();
                    let prior = prior_spec.gaussian(model.dim())?;
                    match (noise, prior) {
                        (Some(n), Some(p)) => Box::new(gaussian_power_posterior(&n, &p, &data, 1.0)?),
                        _ => {
                            return Err(usage(
                                "postpred needs --posterior unless the model is Gaussian with a normal prior",
                            ))
                        }
                    }
                }
            };
            sample_pb_postpred(model, &data, source.as_ref(), a.c, a.t, &run)?
        }
    };
    let ms = start.elapsed().as_millis();
    write_draws_csv(&a.out, &draws).with_context(|| format!("writing {}", a.out.display()))?;
    emit(
        &serde_json::to_value(draws.summary(data.n(), ms))?,
        a.summary.as_deref(),
    )?;
    check_nonconverged(draws.nonconverged.len(), draws.n_requested)
}

fn hier_summary(h: &HierDrawSet, n: usize, ms: u128) -> Result<Value> {
    let mut v = serde_json::to_value(h.lambda_tilde_set().summary(n, ms))?;
    let bar = h.lambda_bar_set().summary(n, ms);
    v["K"] = json!(h.group_ids.len());
    v["lambda_bar"] = json!({ "mean": bar.mean, "cov": bar.cov });
    v["groups"] = Value::Array(
        h.group_ids
            .iter()
            .enumerate()
            .map(|(k, id)| {
                let s = h.theta_set(k).summary(n, ms);
                json!({ "id": id, "mean": s.mean, "cov": s.cov })
            })
            .collect(),
    );
    v["failures"] = json!(h.failures);
    Ok(v)
}

pub fn hier(a: HierArgs) -> Result<()> {
    let run = run_config(&a.run)?;
    let start = Instant::now();
    let (h, n) = match a.model {
        HierModel::GammaPoisson => {
            let groups = crate::groups::read_long_groups(&a.data)?;
            let n = groups.iter().map(|g| g.data.n()).sum();
            let spec = HierarchicalSpec::new(
                groups,
                Arc::new(PoissonRate::new()),
                Arc::new(GammaRateConditional { alpha: a.alpha }),
            )?
            .with_hyperprior(Arc::new(GammaPrior::scalar(a.alpha0, a.beta0)?))?
            .with_conditional(Arc::new(GammaPoissonConditional {
                alpha0: a.alpha0,
                beta0: a.beta0,
                alpha: a.alpha,
            }));
            let h = match a.algorithm.unwrap_or(HierAlgorithm::Cond) {
                HierAlgorithm::Cond => sample_hier_penalized(&spec, None, &run)?,
                HierAlgorithm::LargeK => sample_hier_large_k(&spec, None, None, &run)?,
            };
            (h, n)
        }
        HierModel::DirichletAlloc => {
            if a.algorithm == Some(HierAlgorithm::Cond) {
                return Err(usage(
                    "dirichlet-alloc has no exact λ-conditional; use --algorithm large-k",
                ));
            }
            let data = crate::groups::read_count_groups(&a.data)?;
            let n = data.counts.iter().flatten().sum::<u64>() as usize;
            (
                sample_dirichlet_allocation(&data, a.tau, a.t, None, &run)?,
                n,
            )
        }
    };
    let ms = start.elapsed().as_millis();
    write_hier_draws(&a.out_dir, &h).with_context(|| format!("writing {}", a.out_dir.display()))?;
    let summary = hier_summary(&h, n, ms)?;
    write_json(&a.out_dir.join("summary.json"), &summary)?;
    emit(&summary, None)?;
    check_nonconverged(h.nonconverged.len(), h.n_requested)
}

pub fn info(a: InfoArgs) -> Result<()> {
    let (data, model) = load(&a.source)?;
    let cfg = solve_config(&a.solve)?;
    let theta = mle(model.as_ref(), &data, &cfg)?;
    let info = empirical_info(model.as_ref(), &data, &theta)?;
    let out = json!({
        "model": model.name(),
        "n": data.n(),
        "theta_hat": vec(theta.as_vector()),
        "I_n": rows(&info.i_n),
        "J_n": rows(&info.j_n),
        "sandwich": rows(&sandwich(&info)?),
        "eigenvalues": eigenvalues(&info)?,
        "w0_star": vec(&w0_star(&info)?),
        "w0_bar": w0_bar(&info)?,
    });
    emit(&out, None)
}

pub fn edgeworth(a: EdgeworthArgs) -> Result<()> {
    let (data, model) = load(&a.source)?;
    if model.dim() != 1 {
        return Err(usage("edgeworth needs a one-parameter model"));
    }
    let cfg = solve_config(&a.solve)?;
    let prior_spec = PriorSpec::parse(&a.prior)?;
    let prior = match prior_spec {
        PriorSpec::Flat => None,
        _ => Some(prior_spec.build(model.as_ref())?),
    };
    let inp = estimate_edgeworth_inputs(model.as_ref(), &data, prior.as_deref(), a.w0, &cfg)?;
    let (k1, k3) = kappa_coeffs(&inp)?;
    if let Some(path) = &a.grid {
        if a.grid_points < 2 || !(a.grid_hi > a.grid_lo) {
            return Err(usage("grid needs at least two points and lo < hi"));
        }
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["y", "edgeworth_density", "normal_density"])?;
        for r in density_grid(k1, k3, a.grid_lo, a.grid_hi, a.grid_points) {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    let out = json!({
        "I": inp.i,
        "J": inp.j,
        "mu3": inp.mu3,
        "A3": inp.a3,
        "A3_se": inp.a3_se,
        "L12": inp.l12,
        "prior_score": inp.prior_score,
        "w0": inp.w0,
        "n": inp.n,
        "kappa1": k1,
        "kappa3": k3,
    });
    emit(&out, None)
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let read = |p: &Path| -> Result<DrawSet> {
        if !p.is_file() {
            return Err(usage(format!("draw file {} not found", p.display())));
        }
        read_draws_csv(p).with_context(|| format!("reading {}", p.display()))
    };
    let (da, db) = (read(&a.a)?, read(&a.b)?);
    let (name, value) = match a.metric {
        Metric::Ks => ("ks", ks_dissimilarity(&da, &db)?),
        Metric::Bhattacharyya => ("bhattacharyya", bhattacharyya_gaussian(&da, &db)?),
    };
    emit(
        &json!({
            "metric": name,
            "value": value,
            "n_a": da.n_draws(),
            "n_b": db.n_draws(),
            "dim": da.dim(),
        }),
        None,
    )
}

enum RiskSpec {
    Wlb,
    Power(f64),
    Oracle,
}

impl RiskSpec {
    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "wlb" {
            return Ok(Self::Wlb);
        }
        if s == "oracle" {
            return Ok(Self::Oracle);
        }
        if let Some(eta) = s.strip_prefix("power:") {
            let eta = numbers(eta)?;
            if eta.len() != 1 || !(eta[0] > 0.0) {
                return Err(usage("power:ETA needs one positive η"));
            }
            return Ok(Self::Power(eta[0]));
        }
        Err(usage(format!(
            "unknown risk method `{s}`; expected wlb, power:ETA or oracle"
        )))
    }

    fn build(&self, a: &RiskArgs, truth: GaussianTruth) -> Result<Box<dyn RiskMethod>> {
        Ok(match *self {
            Self::Wlb => Box::new(WlbPredictive {
                model: GaussianLocation::new(a.model_var),
                n_draws: a.n_draws,
                solve: solve_config(&a.solve)?,
            }),
            Self::Power(eta) => Box::new(PowerPosteriorPredictive {
                noise_var: a.model_var,
                prior: GaussianPrior::scalar(0.0, a.prior_var)?,
                eta,
            }),
            Self::Oracle => Box::new(OraclePredictive(truth)),
        })
    }
}

pub fn risk(a: RiskArgs) -> Result<()> {
    let t = match a.truth.split_once(':') {
        Some(("normal", args)) => numbers(args)?,
        _ => return Err(usage("truth must be normal:MEAN,VAR")),
    };
    if t.len() != 2 || !(t[1] > 0.0) || !(a.model_var > 0.0) || !(a.prior_var > 0.0) {
        return Err(usage(
            "truth needs a mean and a positive variance; variances must be positive",
        ));
    }
    let truth = GaussianTruth {
        mean: t[0],
        var: t[1],
    };
    let spec = RiskSpec::parse(&a.method)?;
    let method = spec.build(&a, truth)?;
    let out = match &a.baseline {
        None => {
            let r = mc_risk_estimate(method.as_ref(), &truth, a.n, a.reps, a.m_eval, a.seed)?;
            json!({ "method": a.method, "risk": r.risk, "se": r.se, "clipped": r.clipped })
        }
        Some(b) => {
            let bspec = RiskSpec::parse(b)?;
            let base = bspec.build(&a, truth)?;
            let p = mc_risk_difference(
                method.as_ref(),
                base.as_ref(),
                &truth,
                a.n,
                a.reps,
                a.m_eval,
                a.seed,
            )?;
            let mut v = json!({
                "method": a.method,
                "baseline": b,
                "risk": p.a.risk,
                "se": p.a.se,
                "baseline_risk": p.b.risk,
                "baseline_se": p.b.se,
                "difference": p.difference.risk,
                "difference_se": p.difference.se,
                "clipped": p.difference.clipped,
            });
            if let (RiskSpec::Power(eta), RiskSpec::Wlb) = (&spec, &bspec) {
                // Eigenvalue of J⁻¹I for a Gaussian location model: true over model variance.
                let lambda = truth.var / a.model_var;
                v["closed_form_difference"] = json!(risk_difference(&[lambda], *eta, a.n));
            }
            v
        }
    };
    emit(&out, None)
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    if let Some(id) = &a.init {
        let cfg = ExperimentConfig::with_experiment(Experiment::default_for(id)?);
        return emit(&serde_json::to_value(cfg)?, None);
    }
    let path = a.config.as_ref().expect("clap requires --config");
    if !path.is_file() {
        return Err(usage(format!("config file {} not found", path.display())));
    }
    let mut cfg =
        ExperimentConfig::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(n) = a.n_draws {
        cfg.n_draws = n;
    }
    if let Some(d) = &a.output_dir {
        cfg.output_dir = d.clone();
    }
    if a.workers.is_some() {
        cfg.workers = a.workers;
    }
    cfg.validate()?;
    let report = run_experiment(&cfg)?;
    emit(
        &json!({
            "experiment": report.experiment,
            "output_dir": report.output_dir,
            "reps": report.reps,
            "failed": report.failures.len(),
            "failures": report.failures,
            "selections": report.selections,
            "wall_ms": report.wall_ms,
        }),
        None,
    )?;
    if report.exceeds_failure_threshold() {
        return Err(ThresholdExceeded(format!(
            "{} of {} replicates failed",
            report.failures.len(),
            report.reps
        ))
        .into());
    }
    Ok(())
}
