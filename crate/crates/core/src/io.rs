//! Serialized formats: the JSON model document, structured-problem spec
//! documents, report JSON, and the CSV trace/sweep emitters.
//!
//! Serialized matrices are arrays of **columns** and state indices are
//! 1-based; conversion to the internal 0-based layout happens here and
//! nowhere else.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::detector::Estimate;
use crate::model::{
    ChangePrior, Density, Model, ModelError, ObservationModel, StateSpacePair, TransitionMatrix,
};
use crate::problems::{
    build_moving_target, build_multistream, build_periodic, build_sensor_array, MovingTargetSpec,
    MultistreamSpec, PeriodicSpec, ProblemError, SensorArraySpec,
};
use crate::simulate::{MonteCarloReport, OptimizerStep, ThresholdReport};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("JSON parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("model contains a callback density; it cannot be serialized")]
    UnserializableDensity,
    #[error("invalid subset bitmask key {0:?}")]
    BadSubsetKey(String),
    #[error("I/O error: {0}")]
    File(#[from] std::io::Error),
    #[error("observation CSV: {0}")]
    ObservationCsv(String),
}

/// Serialized observation density.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityDoc {
    Gaussian { mean: f64, variance: f64 },
    ProductGaussian { means: Vec<f64>, variances: Vec<f64> },
}

impl DensityDoc {
    pub fn to_density(&self) -> Density {
        match self {
            DensityDoc::Gaussian { mean, variance } => Density::Gaussian {
                mean: *mean,
                variance: *variance,
            },
            DensityDoc::ProductGaussian { means, variances } => Density::ProductGaussian {
                means: means.clone(),
                variances: variances.clone(),
            },
        }
    }

    pub fn from_density(d: &Density) -> Result<Self, IoError> {
        match d {
            Density::Gaussian { mean, variance } => Ok(DensityDoc::Gaussian {
                mean: *mean,
                variance: *variance,
            }),
            Density::ProductGaussian { means, variances } => Ok(DensityDoc::ProductGaussian {
                means: means.clone(),
                variances: variances.clone(),
            }),
            Density::LogDensity(_) => Err(IoError::UnserializableDensity),
        }
    }
}

/// Scalar-or-vector change probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoDoc {
    Scalar(f64),
    PerState(Vec<f64>),
}

impl RhoDoc {
    fn to_prior(&self, n_alpha: usize) -> Result<ChangePrior, ModelError> {
        match self {
            RhoDoc::Scalar(r) => ChangePrior::constant(*r, n_alpha),
            RhoDoc::PerState(v) => ChangePrior::new(v.clone()),
        }
    }
}

/// The plain-HMM model document. Matrices are arrays of column arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub n_alpha: usize,
    pub n_beta: usize,
    #[serde(rename = "A_alpha")]
    pub a_alpha: Vec<Vec<f64>>,
    #[serde(rename = "A_beta")]
    pub a_beta: Vec<Vec<f64>>,
    #[serde(rename = "A_nu")]
    pub a_nu: Vec<Vec<f64>>,
    pub rho: RhoDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_alpha: Option<Vec<f64>>,
    pub observations: Vec<DensityDoc>,
}

impl ModelDoc {
    pub fn to_model(&self) -> Result<Model, IoError> {
        let spaces = StateSpacePair::new(self.n_alpha, self.n_beta)?;
        let a_alpha = TransitionMatrix::from_columns("A_alpha", &self.a_alpha)?;
        let a_beta = TransitionMatrix::from_columns("A_beta", &self.a_beta)?;
        let a_nu = TransitionMatrix::from_columns("A_nu", &self.a_nu)?;
        let prior = self.rho.to_prior(self.n_alpha)?;
        let obs =
            ObservationModel::new(self.observations.iter().map(|d| d.to_density()).collect())?;
        Ok(Model::new(
            spaces,
            a_alpha,
            a_beta,
            a_nu,
            prior,
            obs,
            self.initial_alpha.clone(),
        )?)
    }

    pub fn from_model(model: &Model) -> Result<Self, IoError> {
        let matrix_cols = |m: &TransitionMatrix| -> Vec<Vec<f64>> {
            m.columns().map(|c| c.to_vec()).collect()
        };
        let rho = if model.prior.is_constant() {
            RhoDoc::Scalar(model.prior.values()[0])
        } else {
            RhoDoc::PerState(model.prior.values().to_vec())
        };
        Ok(ModelDoc {
            n_alpha: model.spaces.n_alpha,
            n_beta: model.spaces.n_beta,
            a_alpha: matrix_cols(&model.a_alpha),
            a_beta: matrix_cols(&model.a_beta),
            a_nu: matrix_cols(&model.a_nu),
            rho,
            initial_alpha: Some(model.initial_alpha.clone()),
            observations: model
                .obs
                .densities()
                .iter()
                .map(DensityDoc::from_density)
                .collect::<Result<_, _>>()?,
        })
    }
}

/// SHA-256 digest of the canonical model document, used to stamp report
/// files with the model they came from.
pub fn model_digest(model: &Model) -> Result<String, IoError> {
    let doc = ModelDoc::from_model(model)?;
    let json = serde_json::to_string(&doc)?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let out = hasher.finalize();
    Ok(out.iter().map(|b| format!("{b:02x}")).collect())
}

/// Structured-problem spec document, distinguished by a `kind` tag. The
/// `model` kind embeds a plain model document directly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemDoc {
    Periodic {
        f: Vec<DensityDoc>,
        g: Vec<DensityDoc>,
        p_g: Vec<f64>,
        rho: f64,
    },
    MovingTarget {
        f_alpha: Vec<DensityDoc>,
        f_beta: Vec<DensityDoc>,
        p_l: Vec<f64>,
        a_target: Vec<Vec<f64>>,
        rho: f64,
    },
    SensorArray {
        f_alpha: Vec<DensityDoc>,
        f_beta: Vec<DensityDoc>,
        rho: f64,
        rho_chain: Vec<f64>,
    },
    Multistream {
        f_alpha: Vec<DensityDoc>,
        f_beta: Vec<DensityDoc>,
        /// Subset bitmask (decimal string) to probability.
        p_subset: BTreeMap<String, f64>,
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_beta: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<usize>,
    },
    Model(ModelDoc),
}

fn to_densities(docs: &[DensityDoc]) -> Vec<Density> {
    docs.iter().map(|d| d.to_density()).collect()
}

impl ProblemDoc {
    /// Compile into a plain model, returning any lint warnings.
    pub fn build(&self) -> Result<(Model, Vec<String>), IoError> {
        match self {
            ProblemDoc::Periodic { f, g, p_g, rho } => {
                let spec = PeriodicSpec {
                    f: to_densities(f),
                    g: to_densities(g),
                    p_g: p_g.clone(),
                    rho: *rho,
                };
                let warnings = spec.lint();
                Ok((build_periodic(&spec)?, warnings))
            }
            ProblemDoc::MovingTarget {
                f_alpha,
                f_beta,
                p_l,
                a_target,
                rho,
            } => {
                let spec = MovingTargetSpec {
                    f_alpha: to_densities(f_alpha),
                    f_beta: to_densities(f_beta),
                    p_l: p_l.clone(),
                    a_target: a_target.clone(),
                    rho: *rho,
                };
                Ok((build_moving_target(&spec)?, Vec::new()))
            }
            ProblemDoc::SensorArray {
                f_alpha,
                f_beta,
                rho,
                rho_chain,
            } => {
                let spec = SensorArraySpec {
                    f_alpha: to_densities(f_alpha),
                    f_beta: to_densities(f_beta),
                    rho: *rho,
                    rho_chain: rho_chain.clone(),
                };
                Ok((build_sensor_array(&spec)?, Vec::new()))
            }
            ProblemDoc::Multistream {
                f_alpha,
                f_beta,
                p_subset,
                rho,
                a_beta,
                cap,
            } => {
                let mut masks = BTreeMap::new();
                for (key, &p) in p_subset {
                    let mask: u32 = key
                        .parse()
                        .map_err(|_| IoError::BadSubsetKey(key.clone()))?;
                    masks.insert(mask, p);
                }
                let spec = MultistreamSpec {
                    f_alpha: to_densities(f_alpha),
                    f_beta: to_densities(f_beta),
                    p_subset: masks,
                    rho: *rho,
                    a_beta: a_beta.clone(),
                    cap: *cap,
                };
                Ok((build_multistream(&spec)?, Vec::new()))
            }
            ProblemDoc::Model(doc) => Ok((doc.to_model()?, Vec::new())),
        }
    }
}

/// Flat report row matching the published report JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRowDoc {
    pub h: f64,
    pub c: f64,
    pub runs: usize,
    pub add: f64,
    pub add_se: f64,
    pub add_conditional: f64,
    pub pfa_frac: f64,
    pub pfa_stat: f64,
    pub pfa_se: f64,
    pub cost: f64,
    pub cost_se: f64,
    pub mode_cost: f64,
    pub mode_cost_se: f64,
    pub censored_count: usize,
    pub seed: u64,
}

impl ReportRowDoc {
    pub fn new(row: &ThresholdReport, c: f64, seed: u64) -> Self {
        let Estimate { mean: add, se: add_se } = row.add;
        ReportRowDoc {
            h: row.h,
            c,
            runs: row.runs,
            add,
            add_se,
            add_conditional: row.add_conditional,
            pfa_frac: row.pfa_frac.mean,
            pfa_stat: row.pfa_stat.mean,
            pfa_se: row.pfa_stat.se,
            cost: row.cost.mean,
            cost_se: row.cost.se,
            mode_cost: row.mode_cost.mean,
            mode_cost_se: row.mode_cost.se,
            censored_count: row.censored,
            seed,
        }
    }
}

/// Floating-point formatting used in CSV bodies: 17 significant digits,
/// enough to reproduce the exact binary value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header_comment(seed: u64, digest: Option<&str>) -> String {
    match digest {
        Some(d) => format!("# seed={seed} model_digest={d}\n"),
        None => format!("# seed={seed}\n"),
    }
}

/// Write the filter trace CSV: `k, y..., zhat_1..zhat_N, m2`.
pub fn write_trace_csv<W: Write>(
    mut w: W,
    obs_dim: usize,
    n_states: usize,
    rows: impl Iterator<Item = (usize, Vec<f64>, Vec<f64>, f64)>,
    seed: u64,
    digest: Option<&str>,
) -> Result<(), IoError> {
    w.write_all(header_comment(seed, digest).as_bytes())?;
    let mut header = String::from("k");
    for i in 1..=obs_dim {
        header.push_str(&format!(",y{i}"));
    }
    for i in 1..=n_states {
        header.push_str(&format!(",zhat_{i}"));
    }
    header.push_str(",m2\n");
    w.write_all(header.as_bytes())?;
    for (k, y, z, m2) in rows {
        let mut line = k.to_string();
        for v in y.iter().chain(z.iter()) {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        line.push(',');
        line.push_str(&fmt_f64(m2));
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Write the trajectory CSV: `k, state, y...` (state is 1-based; row k=0
/// carries the initial state with empty observation columns).
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    traj: &crate::simulate::Trajectory,
    seed: u64,
    digest: Option<&str>,
) -> Result<(), IoError> {
    w.write_all(header_comment(seed, digest).as_bytes())?;
    let mut header = String::from("k,state");
    for i in 1..=traj.obs_dim {
        header.push_str(&format!(",y{i}"));
    }
    header.push('\n');
    w.write_all(header.as_bytes())?;
    for (k, &state) in traj.states.iter().enumerate() {
        let mut line = format!("{k},{}", state + 1);
        if k == 0 {
            for _ in 0..traj.obs_dim {
                line.push(',');
            }
        } else {
            for v in traj.observation(k) {
                line.push(',');
                line.push_str(&fmt_f64(*v));
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Write the sweep CSV:
/// `h, runs, add, add_se, add_cond, pfa_frac, pfa_stat, pfa_se, cost, cost_se, censored`.
/// An optional leading `tag` column distinguishes batch rows.
pub fn write_sweep_csv<W: Write>(
    mut w: W,
    reports: &[(Option<String>, MonteCarloReport)],
    digest: Option<&str>,
) -> Result<(), IoError> {
    let seed = reports.first().map_or(0, |(_, r)| r.seed);
    w.write_all(header_comment(seed, digest).as_bytes())?;
    let tagged = reports.iter().any(|(t, _)| t.is_some());
    let mut header = String::new();
    if tagged {
        header.push_str("tag,");
    }
    header.push_str(
        "h,runs,add,add_se,add_cond,pfa_frac,pfa_stat,pfa_se,cost,cost_se,censored\n",
    );
    w.write_all(header.as_bytes())?;
    for (tag, report) in reports {
        for row in &report.rows {
            let mut line = String::new();
            if tagged {
                line.push_str(tag.as_deref().unwrap_or(""));
                line.push(',');
            }
            line.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f64(row.h),
                row.runs,
                fmt_f64(row.add.mean),
                fmt_f64(row.add.se),
                fmt_f64(row.add_conditional),
                fmt_f64(row.pfa_frac.mean),
                fmt_f64(row.pfa_stat.mean),
                fmt_f64(row.pfa_stat.se),
                fmt_f64(row.cost.mean),
                fmt_f64(row.cost.se),
                row.censored,
            ));
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

/// Write the optimizer trace CSV: `n, phi, h, eta, j_plus, j_minus, g_hat`.
pub fn write_optimizer_csv<W: Write>(
    mut w: W,
    trace: &[OptimizerStep],
    seed: u64,
    digest: Option<&str>,
) -> Result<(), IoError> {
    w.write_all(header_comment(seed, digest).as_bytes())?;
    w.write_all(b"n,phi,h,eta,j_plus,j_minus,g_hat\n")?;
    for s in trace {
        w.write_all(
            format!(
                "{},{},{},{},{},{},{}\n",
                s.n,
                fmt_f64(s.phi),
                fmt_f64(s.h),
                fmt_f64(s.eta),
                fmt_f64(s.j_plus),
                fmt_f64(s.j_minus),
                fmt_f64(s.g_hat),
            )
            .as_bytes(),
        )?;
    }
    Ok(())
}

/// Parse an observation CSV with header `k, y1..yd` (comment lines with
/// `#` are skipped). Returns the observation rows in time order.
pub fn read_observation_csv(text: &str) -> Result<Vec<Vec<f64>>, IoError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| IoError::ObservationCsv("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first().map(|c| c.eq_ignore_ascii_case("k")) != Some(true) || cols.len() < 2 {
        return Err(IoError::ObservationCsv(
            "header must be `k, y1, ...`".into(),
        ));
    }
    let dim = cols.len() - 1;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(IoError::ObservationCsv(format!(
                "row {} has {} fields, expected {}",
                i + 1,
                fields.len(),
                dim + 1
            )));
        }
        let mut y = Vec::with_capacity(dim);
        for f in &fields[1..] {
            y.push(f.parse::<f64>().map_err(|e| {
                IoError::ObservationCsv(format!("row {}: {}", i + 1, e))
            })?);
        }
        out.push(y);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::demo_model;

    #[test]
    fn model_doc_roundtrip() {
        let model = demo_model();
        let doc = ModelDoc::from_model(&model).unwrap();
        let json = serde_json::to_string_pretty(&doc).unwrap();
        let parsed: ModelDoc = serde_json::from_str(&json).unwrap();
        let back = parsed.to_model().unwrap();
        assert_eq!(back.spaces, model.spaces);
        assert_eq!(back.a_alpha, model.a_alpha);
        assert_eq!(back.prior, model.prior);
        assert_eq!(back.initial_alpha, model.initial_alpha);
    }

    #[test]
    fn digest_is_stable_and_model_sensitive() {
        let a = model_digest(&demo_model()).unwrap();
        let b = model_digest(&demo_model()).unwrap();
        assert_eq!(a, b);
        let other = crate::scenarios::demo_model_with([0.5, 1.0], [3.0, 4.0, 5.0], 1.0);
        assert_ne!(a, model_digest(&other).unwrap());
    }

    #[test]
    fn unknown_fields_rejected() {
        let json = r#"{"n_alpha":1,"n_beta":1,"A_alpha":[[1.0]],"A_beta":[[1.0]],
            "A_nu":[[1.0]],"rho":0.5,"observations":[],"bogus":1}"#;
        assert!(serde_json::from_str::<ModelDoc>(json).is_err());
    }

    #[test]
    fn scalar_rho_expands() {
        let json = r#"{"n_alpha":2,"n_beta":1,
            "A_alpha":[[0.5,0.5],[0.5,0.5]],
            "A_beta":[[1.0]],
            "A_nu":[[1.0],[1.0]],
            "rho":0.25,
            "observations":[
              {"kind":"gaussian","mean":0.0,"variance":1.0},
              {"kind":"gaussian","mean":1.0,"variance":1.0},
              {"kind":"gaussian","mean":2.0,"variance":1.0}]}"#;
        let doc: ModelDoc = serde_json::from_str(json).unwrap();
        let model = doc.to_model().unwrap();
        assert_eq!(model.prior.values(), &[0.25, 0.25]);
    }

    #[test]
    fn observation_csv_roundtrip() {
        let text = "# seed=1\nk,y1,y2\n1,0.5,1.5\n2,-0.25,0.0\n";
        let rows = read_observation_csv(text).unwrap();
        assert_eq!(rows, vec![vec![0.5, 1.5], vec![-0.25, 0.0]]);
        assert!(read_observation_csv("nope\n1,2\n").is_err());
    }

    #[test]
    fn problem_doc_kinds_build() {
        let json = r#"{"kind":"periodic",
            "f":[{"kind":"gaussian","mean":0.0,"variance":1.0},
                 {"kind":"gaussian","mean":1.0,"variance":1.0}],
            "g":[{"kind":"gaussian","mean":2.0,"variance":1.0},
                 {"kind":"gaussian","mean":3.0,"variance":1.0},
                 {"kind":"gaussian","mean":4.0,"variance":1.0}],
            "p_g":[0.2,0.3,0.5],"rho":0.01}"#;
        let doc: ProblemDoc = serde_json::from_str(json).unwrap();
        let (model, warnings) = doc.build().unwrap();
        assert_eq!(model.spaces.total(), 5);
        assert!(warnings.is_empty());

        let json = r#"{"kind":"multistream",
            "f_alpha":[{"kind":"gaussian","mean":0.0,"variance":1.0},
                       {"kind":"gaussian","mean":0.0,"variance":1.0},
                       {"kind":"gaussian","mean":0.0,"variance":1.0}],
            "f_beta":[{"kind":"gaussian","mean":1.0,"variance":1.0},
                      {"kind":"gaussian","mean":1.0,"variance":1.0},
                      {"kind":"gaussian","mean":1.0,"variance":1.0}],
            "p_subset":{"1":0.5,"7":0.5},"rho":0.01}"#;
        let doc: ProblemDoc = serde_json::from_str(json).unwrap();
        let (model, _) = doc.build().unwrap();
        assert_eq!(model.spaces.total(), 8);
    }
}
