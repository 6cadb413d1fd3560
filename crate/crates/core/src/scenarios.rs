//! Built-in reference scenarios: a two-state nominal HMM that changes to a
//! three-state HMM under a geometric prior, plus the eight mean/variance
//! variants used for delay-versus-false-alarm studies.

use crate::model::{
    ChangePrior, Density, Model, ObservationModel, StateSpacePair, TransitionMatrix,
};

/// Default change probability of the demo scenarios.
pub const DEMO_RHO: f64 = 0.0005;
/// Default delay penalty.
pub const DEMO_DELAY_PENALTY: f64 = 0.001;
/// Default simulation horizon.
pub const DEMO_HORIZON: usize = 10_000;

/// The demo model with configurable observation means and a shared
/// variance: pre-change states have means `mu_alpha`, post-change states
/// `mu_beta`.
pub fn demo_model_with(mu_alpha: [f64; 2], mu_beta: [f64; 3], variance: f64) -> Model {
    let a_alpha = TransitionMatrix::from_columns(
        "A_alpha",
        &[vec![0.99, 0.01], vec![0.01, 0.99]],
    )
    .unwrap();
    // Columns of the post-change chain (entry (i,j) = P(next i | current j)).
    let a_beta = TransitionMatrix::from_columns(
        "A_beta",
        &[
            vec![0.9, 0.1, 0.0],
            vec![0.0, 0.9, 0.1],
            vec![0.1, 0.9, 0.0],
        ],
    )
    .unwrap();
    let a_nu = TransitionMatrix::from_columns(
        "A_nu",
        &[
            vec![0.999, 0.0005, 0.0005],
            vec![0.999, 0.0005, 0.0005],
        ],
    )
    .unwrap();
    let means = mu_alpha.iter().chain(mu_beta.iter());
    let obs = ObservationModel::new(
        means
            .map(|&mean| Density::Gaussian { mean, variance })
            .collect(),
    )
    .unwrap();
    Model::new(
        StateSpacePair::new(2, 3).unwrap(),
        a_alpha,
        a_beta,
        a_nu,
        ChangePrior::constant(DEMO_RHO, 2).unwrap(),
        obs,
        None,
    )
    .unwrap()
}

/// The baseline demo model: means (0.5, 1) before and (0.5, 1, 0.75)
/// after the change, unit variance.
pub fn demo_model() -> Model {
    demo_model_with([0.5, 1.0], [0.5, 1.0, 0.75], 1.0)
}

/// One row of the delay/false-alarm study grid.
#[derive(Debug, Clone)]
pub struct StudyRow {
    /// Tag used in report files (plot symbol of the original study).
    pub tag: &'static str,
    pub mu_alpha: [f64; 2],
    pub mu_beta: [f64; 3],
    pub variance: f64,
}

impl StudyRow {
    pub fn model(&self) -> Model {
        demo_model_with(self.mu_alpha, self.mu_beta, self.variance)
    }
}

/// The eight mean/variance configurations of the batch study: four mean
/// layouts, each at variance 1 and 0.5.
pub fn study_rows() -> Vec<StudyRow> {
    let rows = [
        ("blue_x", [0.5, 1.0], [0.5, 1.0, 0.75], 1.0),
        ("blue_dot", [0.5, 1.0], [0.5, 1.0, 0.75], 0.5),
        ("red_x", [0.5, 1.0], [1.5, 0.5, 1.25], 1.0),
        ("red_dot", [0.5, 1.0], [1.5, 0.5, 1.25], 0.5),
        ("black_x", [0.5, 1.0], [1.5, 2.0, 1.0], 1.0),
        ("black_dot", [0.5, 1.0], [1.5, 2.0, 1.0], 0.5),
        ("green_x", [1.0, 2.0], [3.0, 4.0, 5.0], 1.0),
        ("green_dot", [1.0, 2.0], [3.0, 4.0, 5.0], 0.5),
    ];
    rows.into_iter()
        .map(|(tag, mu_alpha, mu_beta, variance)| StudyRow {
            tag,
            mu_alpha,
            mu_beta,
            variance,
        })
        .collect()
}

/// Look up a built-in model by name.
pub fn builtin(name: &str) -> Option<Model> {
    if name == "demo" {
        return Some(demo_model());
    }
    study_rows()
        .into_iter()
        .find(|r| r.tag == name)
        .map(|r| r.model())
}
