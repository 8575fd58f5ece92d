use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{compute_time_averages, PanelData};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

/// Stream reserved for scenario-level constants (random polynomial
/// coefficients); replicate streams count up from zero.
const CONSTANTS_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    GaussianStrong,
    Ar1Errors,
    ManyFactors,
    WeakFactors,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::GaussianStrong => "gaussian_strong",
            Scenario::Ar1Errors => "ar1_errors",
            Scenario::ManyFactors => "many_factors",
            Scenario::WeakFactors => "weak_factors",
        }
    }

    fn default_k(self) -> usize {
        match self {
            Scenario::ManyFactors => 10,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n_units: usize,
    pub n_periods: usize,
    pub scenario: Scenario,
    pub k: usize,
    pub beta_true: Vec<f64>,
    pub ar_phi: f64,
    /// Variance of each idiosyncratic loading component.
    pub gamma_var: f64,
    /// Standard deviation of the error innovations.
    #[serde(default = "one")]
    pub error_sd: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl DgpConfig {
    pub fn new(scenario: Scenario, n_units: usize, n_periods: usize, seed: u64) -> Self {
        Self {
            n_units,
            n_periods,
            scenario,
            k: scenario.default_k(),
            beta_true: vec![2.0, -1.0],
            ar_phi: 0.7,
            gamma_var: 0.1,
            error_sd: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_units < 2 || self.n_periods < 2 {
            return Err(Error::InvalidConfig("DGP needs N >= 2 and T >= 2".into()));
        }
        if self.beta_true.len() != 2 {
            return Err(Error::InvalidConfig("simulation designs use exactly two covariates".into()));
        }
        if !(self.ar_phi > -1.0 && self.ar_phi < 1.0) {
            return Err(Error::InvalidConfig(format!("AR parameter {} not in (-1,1)", self.ar_phi)));
        }
        if !(self.gamma_var >= 0.0) || !(self.error_sd >= 0.0) {
            return Err(Error::InvalidConfig("variances must be nonnegative".into()));
        }
        match self.scenario {
            Scenario::ManyFactors if self.k == 0 => Err(Error::InvalidConfig("need k >= 1".into())),
            Scenario::ManyFactors => Ok(()),
            _ if self.k != 3 => Err(Error::InvalidConfig(format!(
                "scenario {} has exactly 3 loading functions, got k = {}",
                self.scenario.name(),
                self.k
            ))),
            _ => Ok(()),
        }
    }
}

/// A generated panel together with every latent component.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: PanelData,
    pub true_beta: DVector<f64>,
    /// T×K.
    pub true_f: DMatrix<f64>,
    /// N×K, equal to `true_g_of_xbar + true_gamma`.
    pub true_lambda: DMatrix<f64>,
    pub true_gamma: DMatrix<f64>,
    pub true_g_of_xbar: DMatrix<f64>,
    /// N×T idiosyncratic errors.
    pub true_u: DMatrix<f64>,
}

/// Replicate 0 of the design.
pub fn generate(config: &DgpConfig) -> Result<SimulatedPanel> {
    generate_replicate(config, 0)
}

/// Loading functions of the two-covariate designs.
fn loading_functions(config: &DgpConfig) -> Box<dyn Fn(f64, f64) -> Vec<f64>> {
    match config.scenario {
        Scenario::ManyFactors => {
            let mut rng = substream(config.seed, CONSTANTS_STREAM);
            // coeffs[k][q][d-1] multiplies x_q^d
            let coeffs: Vec<[[f64; 4]; 2]> = (0..config.k)
                .map(|_| {
                    let mut c = [[0.0; 4]; 2];
                    for row in c.iter_mut() {
                        for v in row.iter_mut() {
                            *v = rng.random_range(-1.0..1.0);
                        }
                    }
                    c
                })
                .collect();
            Box::new(move |x1, x2| {
                coeffs
                    .iter()
                    .map(|c| {
                        let mut total = 0.0;
                        for (q, x) in [x1, x2].into_iter().enumerate() {
                            let mut p = 1.0;
                            for d in 0..4 {
                                p *= x;
                                total += c[q][d] * p;
                            }
                        }
                        total
                    })
                    .collect()
            })
        }
        _ => Box::new(|x1, x2| {
            vec![
                2.0 * x1.powi(3) + x2 * x2,
                -x1 * x1 + 2.0 * x2,
                x2.powi(3) - 3.0 * x1,
            ]
        }),
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Replicate `replicate` of the design, drawn from substream
/// `(seed, replicate)`.
///
/// Draw order is fixed: unit means, covariate loadings, factors, covariate
/// noise, loading noise, then error innovations. Scenarios differ only after
/// the draws they share, so a seed gives the same covariates, factors and
/// loadings under Gaussian and AR(1) errors.
pub fn generate_replicate(config: &DgpConfig, replicate: u64) -> Result<SimulatedPanel> {
    config.validate()?;
    let (n, t, k, q) = (config.n_units, config.n_periods, config.k, 2);
    let mut rng = substream(config.seed, replicate);

    let unit_means = DMatrix::from_fn(n, q, |_, _| rng.random_range(-2.0..2.0));
    // a[q] is N×K
    let a: Vec<DMatrix<f64>> = (0..q).map(|_| DMatrix::from_fn(n, k, |_, _| rng.random_range(-0.5..0.5))).collect();
    let f = DMatrix::from_fn(t, k, |_, _| normal(&mut rng));
    let x: Vec<DMatrix<f64>> = (0..q)
        .map(|qq| {
            let common = &a[qq] * f.transpose();
            let mut xq = DMatrix::zeros(n, t);
            for i in 0..n {
                for s in 0..t {
                    xq[(i, s)] = common[(i, s)] + unit_means[(i, qq)] + normal(&mut rng);
                }
            }
            xq
        })
        .collect();

    // X̄ from the covariates alone; y is not needed yet
    let xbar = compute_time_averages(&PanelData::from_matrices(DMatrix::zeros(n, t), x.clone())?).xbar;
    let g = loading_functions(config);
    let mut g_of_xbar = DMatrix::zeros(n, k);
    for i in 0..n {
        for (kk, v) in g(xbar[(i, 0)], xbar[(i, 1)]).into_iter().enumerate() {
            g_of_xbar[(i, kk)] = v;
        }
    }
    let gamma_sd = config.gamma_var.sqrt();
    let mut gamma = DMatrix::from_fn(n, k, |_, _| gamma_sd * normal(&mut rng));
    if config.scenario == Scenario::WeakFactors {
        let shrink = 1.0 / (t as f64).sqrt();
        g_of_xbar *= shrink;
        gamma *= shrink;
    }
    let lambda = &g_of_xbar + &gamma;

    let innovations = DMatrix::from_fn(n, t, |_, _| config.error_sd * normal(&mut rng));
    let u = match config.scenario {
        Scenario::Ar1Errors => {
            let phi = config.ar_phi;
            let mut u = innovations;
            for i in 0..n {
                u[(i, 0)] /= (1.0 - phi * phi).sqrt();
                for s in 1..t {
                    u[(i, s)] += phi * u[(i, s - 1)];
                }
            }
            u
        }
        _ => innovations,
    };

    let beta = DVector::from_column_slice(&config.beta_true);
    let mut y = &lambda * f.transpose() + &u;
    for (xq, b) in x.iter().zip(beta.iter()) {
        y += xq * *b;
    }
    let panel = PanelData::from_matrices(y, x)?;
    Ok(SimulatedPanel {
        panel,
        true_beta: beta,
        true_f: f,
        true_lambda: lambda,
        true_gamma: gamma,
        true_g_of_xbar: g_of_xbar,
        true_u: u,
    })
}
