//! Train/evaluate loop comparing unprocessed baselines with predictors
//! trained on OB- or SOB-processed features, plus the seeded sweep over the
//! loan model's education coefficient.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_cont_y, gen_loan, ContYParams, Dataset, GroupIndex, LoanParams, OutcomeKind};
use crate::encoding::SensitiveEncoding;
use crate::error::{Error, Result};
use crate::matrix::{sample_stdev, standardize, DataMatrix, LsSolver, StandardizationParams, VARIANCE_EPS};
use crate::metrics::{
    aa_gap, acc_auc, avg_pairwise_corr, cf_metric, eo_gap, kl_observed_vs_counterfactual, modification_norm, rmse,
    MetricsReport, KL_BINS,
};
use crate::ob::{
    fit_ob, orthogonality_residual, transform, truncation_error, BasisRule, FactorPair, LowRankFactors, ObConfig,
};
use crate::predictors::{
    average_over_b, fit_linear, fit_logistic, predict_score, AveragedPredictor, EmpiricalBDistribution,
    LogisticOptions, Predictor,
};
use crate::sob::{fit_sob, SobConfig, SobResult};

/// Processed training data further than this from orthogonal aborts training.
pub const ORTHOGONALITY_ABORT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Unprocessed `A` and `B`.
    #[serde(rename = "ML")]
    Ml,
    /// Unprocessed `A` only.
    #[serde(rename = "FTU")]
    Ftu,
    /// `f(A~, B)` averaged over the training distribution of `B`.
    #[serde(rename = "OB1")]
    Ob1,
    /// `f(A~, B)` evaluated at the observed `B`.
    #[serde(rename = "OB1+B")]
    Ob1Plugin,
    /// `f(A~)`.
    #[serde(rename = "OB2")]
    Ob2,
    #[serde(rename = "SOB1")]
    Sob1,
    #[serde(rename = "SOB1+B")]
    Sob1Plugin,
    #[serde(rename = "SOB2")]
    Sob2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Processing {
    Raw,
    Ob,
    Sob,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ml,
        Method::Ftu,
        Method::Ob1,
        Method::Ob1Plugin,
        Method::Ob2,
        Method::Sob1,
        Method::Sob1Plugin,
        Method::Sob2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ml => "ML",
            Method::Ftu => "FTU",
            Method::Ob1 => "OB1",
            Method::Ob1Plugin => "OB1+B",
            Method::Ob2 => "OB2",
            Method::Sob1 => "SOB1",
            Method::Sob1Plugin => "SOB1+B",
            Method::Sob2 => "SOB2",
        }
    }

    fn processing(self) -> Processing {
        match self {
            Method::Ml | Method::Ftu => Processing::Raw,
            Method::Ob1 | Method::Ob1Plugin | Method::Ob2 => Processing::Ob,
            Method::Sob1 | Method::Sob1Plugin | Method::Sob2 => Processing::Sob,
        }
    }

    pub fn uses_sensitive(self) -> bool {
        !matches!(self, Method::Ftu | Method::Ob2 | Method::Sob2)
    }

    fn averaged(self) -> bool {
        matches!(self, Method::Ob1 | Method::Sob1)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown method `{s}`")))
    }
}

/// How sensitive-group worlds are built for counterfactual metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CounterfactualMode {
    /// Regenerate descendants through the generating SCM (synthetic data).
    Scm,
    /// Replace `B` and keep `A` fixed.
    Substitution,
    /// Shift `A` by `(B' - B) Gamma`, with `Gamma` the least-squares effect
    /// of encoded `B` on `A` estimated on the training split.
    FittedLinear,
}

impl CounterfactualMode {
    pub fn describe(self) -> &'static str {
        match self {
            CounterfactualMode::Scm => "exact SCM regeneration from retained noise",
            CounterfactualMode::Substitution => "substitution approximation (A held fixed)",
            CounterfactualMode::FittedLinear => "linear causal model of A on B fitted on the training split",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    /// Target rank; defaults to the number of non-sensitive columns.
    pub k: Option<usize>,
    /// `l1` budget, required by the SOB methods.
    pub h: Option<f64>,
    pub eta: f64,
    pub max_iters: usize,
    pub sob_seed: u64,
    pub basis: BasisRule,
    pub ridge: f64,
    /// Defaults to [`CounterfactualMode::Scm`] for generated data and
    /// [`CounterfactualMode::Substitution`] otherwise.
    pub cf_mode: Option<CounterfactualMode>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Ml, Method::Ftu, Method::Ob1, Method::Ob1Plugin, Method::Ob2],
            k: None,
            h: None,
            eta: 1e-6,
            max_iters: 500,
            sob_seed: 0,
            basis: BasisRule::default(),
            ridge: 0.0,
            cf_mode: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParams("no methods selected".into()));
        }
        if self.needs(Processing::Sob) && self.h.is_none() {
            return Err(Error::InvalidParams("h is required for SOB methods".into()));
        }
        Ok(())
    }

    fn needs(&self, p: Processing) -> bool {
        self.methods.iter().any(|m| m.processing() == p)
    }
}

/// Summary of one fitted transform on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformDiagnostics {
    pub transform: String,
    pub k: usize,
    pub recon_error: f64,
    pub svd_error: f64,
    pub orthogonality_residual: f64,
    pub modification_norm: f64,
    pub corr_before: f64,
    pub corr_after: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<Vec<bool>>,
}

/// Mean `|corr|` over pairs whose `x` column is not constant (a column of
/// zeros left by a sparse basis has no correlation to report).
fn corr_over_varying(x: &DataMatrix, b: &DataMatrix) -> Result<f64> {
    let keep: Vec<usize> = (0..x.ncols())
        .filter(|&j| sample_stdev(&x.column(j)) > VARIANCE_EPS)
        .collect();
    if keep.is_empty() {
        return Ok(0.0);
    }
    avg_pairwise_corr(&x.select_columns(&keep)?, b)
}

/// Standardized and processed views of one set of rows.
#[derive(Clone, Debug)]
pub struct Features {
    pub a: DataMatrix,
    pub b: DataMatrix,
    pub ob: Option<DataMatrix>,
    pub sob: Option<DataMatrix>,
}

impl Features {
    fn processed(&self, p: Processing) -> &DataMatrix {
        match p {
            Processing::Raw => &self.a,
            Processing::Ob => self.ob.as_ref().expect("OB fitted"),
            Processing::Sob => self.sob.as_ref().expect("SOB fitted"),
        }
    }
}

/// Encoding, standardization and transforms fitted on a training split.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub encoding: SensitiveEncoding,
    pub a_params: StandardizationParams,
    pub b_params: StandardizationParams,
    pub ob: Option<FactorPair>,
    pub sob: Option<SobResult>,
    pub diagnostics: Vec<TransformDiagnostics>,
}

fn checked_transform<F: LowRankFactors>(
    name: &str,
    a: &DataMatrix,
    b: &DataMatrix,
    fp: &F,
    svd_error: f64,
) -> Result<(DataMatrix, TransformDiagnostics)> {
    let at = transform(a, fp)?;
    let residual = orthogonality_residual(&at, b);
    if residual > ORTHOGONALITY_ABORT {
        return Err(Error::OrthogonalityViolated(residual));
    }
    let diag = TransformDiagnostics {
        transform: name.into(),
        k: fp.rank(),
        recon_error: (a.values() - at.values()).norm(),
        svd_error,
        orthogonality_residual: residual,
        modification_norm: modification_norm(a, &at)?,
        corr_before: corr_over_varying(a, b)?,
        corr_after: corr_over_varying(&at, b)?,
        support_sizes: None,
        converged: None,
    };
    Ok((at, diag))
}

impl Pipeline {
    /// Fits on `train` and returns the training features.
    pub fn fit(train: &Dataset, cfg: &ExperimentConfig) -> Result<(Self, Features)> {
        cfg.validate()?;
        let encoding = SensitiveEncoding::fit(&train.b, &train.categorical)?;
        let (b, b_params) = standardize(&encoding.apply(&train.b)?)?;
        let (a, a_params) = standardize(&train.a)?;
        let k = cfg.k.unwrap_or(a.ncols());
        let svd_error = truncation_error(a.values(), k.min(a.ncols()))?;
        let mut diagnostics = Vec::new();

        let (ob, ob_features) = if cfg.needs(Processing::Ob) {
            let fp = fit_ob(&a, &b, &ObConfig::new(k).with_basis(cfg.basis))?;
            let (at, diag) = checked_transform("ob", &a, &b, &fp, svd_error)?;
            diagnostics.push(diag);
            (Some(fp), Some(at))
        } else {
            (None, None)
        };
        let (sob, sob_features) = if cfg.needs(Processing::Sob) {
            let scfg = SobConfig {
                k,
                h: cfg.h.expect("validated"),
                eta: cfg.eta,
                max_iters: cfg.max_iters,
                seed: cfg.sob_seed,
                center_check_tol: ObConfig::new(k).center_check_tol,
            };
            let res = fit_sob(&a, &b, &scfg)?;
            let (at, mut diag) = checked_transform("sob", &a, &b, &res, svd_error)?;
            diag.support_sizes = Some(res.support_sizes());
            diag.converged = Some(res.converged.clone());
            diagnostics.push(diag);
            (Some(res), Some(at))
        } else {
            (None, None)
        };

        let pipeline = Self {
            encoding,
            a_params,
            b_params,
            ob,
            sob,
            diagnostics,
        };
        let features = Features {
            a,
            b,
            ob: ob_features,
            sob: sob_features,
        };
        Ok((pipeline, features))
    }

    /// Features for new rows given raw `a` and raw (unencoded) `b`.
    pub fn features(&self, a_raw: &DataMatrix, b_raw: &DataMatrix) -> Result<Features> {
        let a = self.a_params.apply(a_raw)?;
        let b = self.b_params.apply(&self.encoding.apply(b_raw)?)?;
        let ob = self.ob.as_ref().map(|fp| fp.project(&a, &b)).transpose()?;
        let sob = self.sob.as_ref().map(|r| r.project(&a, &b)).transpose()?;
        Ok(Features { a, b, ob, sob })
    }
}

/// A trained predictor for one method.
#[derive(Clone, Debug)]
pub struct FittedMethod {
    pub method: Method,
    pub predictor: Predictor,
    pub averaged: Option<AveragedPredictor>,
}

fn design(method: Method, f: &Features) -> Result<DataMatrix> {
    let x = f.processed(method.processing());
    if method.uses_sensitive() {
        x.hstack(&f.b)
    } else {
        Ok(x.clone())
    }
}

impl FittedMethod {
    pub fn fit(method: Method, train: &Features, y: &[f64], outcome: OutcomeKind, ridge: f64) -> Result<Self> {
        let x = design(method, train)?;
        let mut predictor = match outcome {
            OutcomeKind::Binary => {
                let opts = LogisticOptions {
                    ridge,
                    ..Default::default()
                };
                fit_logistic(&x, y, &opts)?.predictor
            }
            OutcomeKind::Continuous => fit_linear(&x, y)?,
        };
        if method.uses_sensitive() {
            predictor = predictor.with_sensitive(train.b.col_names())?;
        }
        let averaged = if method.averaged() {
            Some(average_over_b(
                &predictor,
                &EmpiricalBDistribution::from_matrix(&train.b),
            )?)
        } else {
            None
        };
        Ok(Self {
            method,
            predictor,
            averaged,
        })
    }

    pub fn score(&self, f: &Features) -> Result<Vec<f64>> {
        match &self.averaged {
            Some(avg) => avg.score(f.processed(self.method.processing())),
            None => predict_score(&self.predictor, &design(self.method, f)?),
        }
    }
}

/// Least-squares effect of encoded `B` on raw `A`.
#[derive(Clone, Debug)]
pub struct LinearCounterfactual {
    encoding: SensitiveEncoding,
    /// `p_enc x q`.
    gamma: DMatrix<f64>,
}

impl LinearCounterfactual {
    pub fn fit(train: &Dataset, encoding: &SensitiveEncoding) -> Result<Self> {
        let b = encoding.apply(&train.b)?;
        let n = b.nrows();
        let mut z = DMatrix::from_element(n, b.ncols() + 1, 1.0);
        z.columns_mut(1, b.ncols()).copy_from(b.values());
        let coef = LsSolver::new(&z)?.solve_many(train.a.values());
        Ok(Self {
            encoding: encoding.clone(),
            gamma: coef.rows(1, b.ncols()).into_owned(),
        })
    }

    pub fn counterfactual_a(&self, a: &DataMatrix, b: &DataMatrix, b_new: &DataMatrix) -> Result<DataMatrix> {
        let delta = self.encoding.apply(b_new)?.values() - self.encoding.apply(b)?.values();
        a.with_values(a.values() + delta * &self.gamma)
    }
}

fn world_a(
    mode: CounterfactualMode,
    ds: &Dataset,
    b_new: &DataMatrix,
    linear: &LinearCounterfactual,
) -> Result<DataMatrix> {
    match mode {
        CounterfactualMode::Scm => Ok(ds.regenerate(b_new)?.a),
        CounterfactualMode::Substitution => Ok(ds.a.clone()),
        CounterfactualMode::FittedLinear => linear.counterfactual_a(&ds.a, &ds.b, b_new),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_train: usize,
    pub n_test: usize,
    pub counterfactual_mode: CounterfactualMode,
    pub transforms: Vec<TransformDiagnostics>,
    pub methods: Vec<MethodReport>,
}

impl Evaluation {
    pub fn method(&self, m: Method) -> Option<&MetricsReport> {
        self.methods.iter().find(|r| r.method == m).map(|r| &r.metrics)
    }

    pub fn metric(&self, m: Method, name: &str) -> Option<f64> {
        self.method(m).and_then(|r| r.get(name))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tmetric\tvalue\tprovenance\n");
        for r in &self.methods {
            out.push_str(&r.metrics.tsv_rows(r.method.name()));
        }
        out
    }
}

/// Trains every configured method on `train` and measures it on `test`.
/// `counterfactual_test`, when given, pairs each test row with its
/// counterfactual version for the KL metric.
pub fn evaluate(
    train: &Dataset,
    test: &Dataset,
    counterfactual_test: Option<&Dataset>,
    cfg: &ExperimentConfig,
) -> Result<Evaluation> {
    let (pipeline, train_f) = Pipeline::fit(train, cfg)?;
    let test_f = pipeline.features(&test.a, &test.b)?;
    let cf_f = counterfactual_test
        .map(|cf| pipeline.features(&cf.a, &cf.b))
        .transpose()?;
    let generated = test.noise.is_some() && test.scm.is_some();
    let mode = cfg.cf_mode.unwrap_or(if generated {
        CounterfactualMode::Scm
    } else {
        CounterfactualMode::Substitution
    });
    if mode == CounterfactualMode::Scm && !generated {
        return Err(Error::MissingNoise);
    }

    // One feature set per sensitive-group world, for the chosen mode, for
    // the fitted linear model and, on generated data, for the SCM.
    let groups = match test.groups() {
        Ok(g) => Some(g),
        Err(Error::RequiresGroups) => None,
        Err(e) => return Err(e),
    };
    let linear = LinearCounterfactual::fit(train, &pipeline.encoding)?;
    let worlds = |g: &GroupIndex, m: CounterfactualMode| -> Result<Vec<Features>> {
        (0..g.len())
            .map(|level| {
                let b_new = g.world(level, &test.b)?;
                pipeline.features(&world_a(m, test, &b_new, &linear)?, &b_new)
            })
            .collect()
    };
    let (cf_worlds, linear_worlds, scm_worlds) = match &groups {
        Some(g) => (
            Some(worlds(g, mode)?),
            Some(worlds(g, CounterfactualMode::FittedLinear)?),
            if generated {
                Some(worlds(g, CounterfactualMode::Scm)?)
            } else {
                None
            },
        ),
        None => (None, None, None),
    };

    let score_worlds = |fm: &FittedMethod, ws: &Option<Vec<Features>>| -> Result<Option<Vec<Vec<f64>>>> {
        ws.as_ref()
            .map(|ws| ws.iter().map(|w| fm.score(w)).collect())
            .transpose()
    };

    let mut methods = Vec::new();
    for &method in &cfg.methods {
        let fm = FittedMethod::fit(method, &train_f, &train.y, train.outcome, cfg.ridge)?;
        let scores = fm.score(&test_f)?;
        let mut r = MetricsReport::default();
        match test.outcome {
            OutcomeKind::Binary => {
                let (acc, auc) = acc_auc(&scores, &test.y)?;
                r.insert("acc", acc, "accuracy at score threshold 0.5")?;
                if let Some(auc) = auc {
                    r.insert("auc", auc, "Mann-Whitney, ties count half")?;
                }
            }
            OutcomeKind::Continuous => r.insert("rmse", rmse(&scores, &test.y)?, "root mean squared error")?,
        }
        if let Some(g) = &groups {
            if let Some(ws) = score_worlds(&fm, &cf_worlds)? {
                r.insert("cf_metric", cf_metric(&scores, &ws, &g.labels)?, mode.describe())?;
            }
            if let Some(ws) = score_worlds(&fm, &linear_worlds)? {
                r.insert(
                    "aa_gap",
                    aa_gap(&ws)?,
                    "max gap of mean scores across all-rows-set-to-group worlds; A shifted by a linear model fitted on train",
                )?;
            }
            if let Some(ws) = score_worlds(&fm, &scm_worlds)? {
                r.insert(
                    "aa_gap_scm",
                    aa_gap(&ws)?,
                    "max gap of mean scores across all-rows-set-to-group worlds; exact SCM regeneration",
                )?;
            }
            if test.outcome == OutcomeKind::Binary {
                let eo = eo_gap(&scores, &test.y, &g.labels)?;
                r.insert(
                    "eo_gap",
                    eo.value,
                    "standard equalized-odds gap of positive rates at 0.5, stratified by label",
                )?;
            }
        }
        if let Some(cf) = &cf_f {
            let cf_scores = fm.score(cf)?;
            r.insert(
                "kl",
                kl_observed_vs_counterfactual(&scores, &cf_scores, KL_BINS)?,
                "KL(observed || counterfactual) over 50 shared equal-width bins, smoothing 1e-9",
            )?;
        }
        let x = train_f.processed(method.processing());
        r.insert(
            "corr_a_b",
            corr_over_varying(x, &train_f.b)?,
            "mean |Pearson| between non-sensitive training features and encoded B",
        )?;
        r.insert(
            "modification_norm",
            modification_norm(&train_f.a, x)?,
            "Frobenius norm of processed minus standardized training A",
        )?;
        methods.push(MethodReport { method, metrics: r });
    }

    Ok(Evaluation {
        n_train: train.nrows(),
        n_test: test.nrows(),
        counterfactual_mode: mode,
        transforms: pipeline.diagnostics,
        methods,
    })
}

pub const DEFAULT_SPLIT: f64 = 0.75;

/// Loan data from `params`, split 75/25 with the same seed, then evaluated.
pub fn run_loan(params: &LoanParams, cfg: &ExperimentConfig) -> Result<Evaluation> {
    let ds = gen_loan(params)?;
    let (train, test) = ds.split(DEFAULT_SPLIT, params.seed)?;
    evaluate(&train, &test, None, cfg)
}

/// Continuous-outcome data from `params`, evaluated with its counterfactual
/// test split.
pub fn run_cont_y(params: &ContYParams, cfg: &ExperimentConfig) -> Result<Evaluation> {
    let d = gen_cont_y(params)?;
    evaluate(&d.train, &d.test, Some(&d.counterfactual_test), cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta_e: f64,
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Repeats [`run_loan`] for every `beta_e` in `grid` and seeds
/// `base.seed .. base.seed + seeds`, averaging each metric.
pub fn beta_sweep(grid: &[f64], base: &LoanParams, cfg: &ExperimentConfig, seeds: usize) -> Result<Vec<SweepRow>> {
    if grid.is_empty() || seeds == 0 {
        return Err(Error::InvalidParams(
            "sweep needs a nonempty grid and at least one seed".into(),
        ));
    }
    let cells: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|i| (0..seeds as u64).map(move |s| (i, s)))
        .collect();
    let runs: Vec<Evaluation> = cells
        .par_iter()
        .map(|&(i, s)| {
            let p = LoanParams {
                beta_e: grid[i],
                seed: base.seed + s,
                ..base.clone()
            };
            run_loan(&p, cfg)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, &beta_e) in grid.iter().enumerate() {
        let evals = &runs[i * seeds..(i + 1) * seeds];
        for (m, report) in evals[0].methods.iter().enumerate() {
            for entry in &report.metrics.entries {
                let values: Vec<f64> = evals
                    .iter()
                    .filter_map(|e| e.methods[m].metrics.get(&entry.name))
                    .collect();
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let std = if values.len() > 1 { sample_stdev(&values) } else { 0.0 };
                rows.push(SweepRow {
                    beta_e,
                    method: report.method,
                    metric: entry.name.clone(),
                    mean,
                    std,
                    runs: values.len(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = String::from("beta_e\tmethod\tmetric\tmean\tstd\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.beta_e,
            r.method.name(),
            r.metric,
            r.mean,
            r.std
        );
    }
    out
}
