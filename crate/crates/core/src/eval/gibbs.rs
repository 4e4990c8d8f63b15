//! Blocked Gibbs sampler.
//!
//! Given σ², the location parameters β = (μ, α, θ, γ) have a Gaussian full
//! conditional with precision `XᵀX/σ² + P₀`. With `D = P₀^{1/2}` and the
//! eigendecomposition `D⁻¹XᵀXD⁻¹ = QΛQᵀ`, that precision is
//! `DQ(Λ/σ² + I)QᵀD`, so one decomposition up front makes every sweep a
//! pair of matrix-vector products. Each sweep draws β | σ², y then
//! σ² | β, y from its inverse-gamma conditional.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::diagnostics::{effective_sample_size, quantile, split_rhat};
use super::{
    Dimension, EvalError, FitSettings, Hyperparams, ParameterSummary, PosteriorSummary, RatingTable, MIN_SAMPLES,
    RHAT_WARNING,
};

/// Column layout of the design: μ, then raters, prompts and dimensions in
/// sorted order.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    raters: Vec<String>,
    prompts: Vec<String>,
    dimensions: Vec<Dimension>,
}

impl Layout {
    fn alpha(&self, i: usize) -> usize {
        1 + i
    }
    fn theta(&self, j: usize) -> usize {
        1 + self.raters.len() + j
    }
    fn gamma(&self, d: usize) -> usize {
        1 + self.raters.len() + self.prompts.len() + d
    }
    fn width(&self) -> usize {
        1 + self.raters.len() + self.prompts.len() + self.dimensions.len()
    }
}

/// Post-burn-in draws. Location draws are stored after centering: rater and
/// prompt effects sum to zero and μ absorbs the shift, which leaves every
/// fitted value unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub raters: Vec<String>,
    pub prompts: Vec<String>,
    pub dimensions: Vec<Dimension>,
    /// One row per draw, laid out as μ, α…, θ…, γ….
    pub draws: Vec<Vec<f64>>,
    /// Centered conditional means E[β | σ², y] at each draw.
    pub conditional_means: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
}

impl Chain {
    pub fn alpha_index(&self, rater: &str) -> Option<usize> {
        self.raters.iter().position(|r| r == rater).map(|i| 1 + i)
    }

    pub fn theta_index(&self, prompt: &str) -> Option<usize> {
        self.prompts.iter().position(|p| p == prompt).map(|j| 1 + self.raters.len() + j)
    }

    pub fn gamma_index(&self, d: Dimension) -> Option<usize> {
        self.dimensions.iter().position(|x| *x == d).map(|k| 1 + self.raters.len() + self.prompts.len() + k)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|row| row[k]).collect()
    }

    fn mean_column(&self, k: usize) -> Vec<f64> {
        self.conditional_means.iter().map(|row| row[k]).collect()
    }
}

fn center(layout: &Layout, beta: &mut [f64]) {
    let (ni, nj) = (layout.raters.len(), layout.prompts.len());
    let a_bar = (0..ni).map(|i| beta[layout.alpha(i)]).sum::<f64>() / ni as f64;
    let t_bar = (0..nj).map(|j| beta[layout.theta(j)]).sum::<f64>() / nj as f64;
    (0..ni).for_each(|i| beta[layout.alpha(i)] -= a_bar);
    (0..nj).for_each(|j| beta[layout.theta(j)] -= t_bar);
    beta[0] += a_bar + t_bar;
}

/// Runs the sampler and returns the post-burn-in chain.
pub fn fit_chain(table: &RatingTable, hp: &Hyperparams, settings: &FitSettings) -> Result<Chain, EvalError> {
    hp.validate()?;
    if settings.n_samples < MIN_SAMPLES {
        return Err(EvalError::InsufficientData(format!("n_samples {} is below {MIN_SAMPLES}", settings.n_samples)));
    }
    let layout = Layout {
        raters: table.raters().into_iter().map(String::from).collect(),
        prompts: table.prompts().into_iter().map(String::from).collect(),
        dimensions: table.dimensions().into_iter().collect(),
    };
    if layout.raters.len() < 2 || layout.prompts.len() < 2 {
        return Err(EvalError::InsufficientData(format!(
            "{} rater(s) and {} prompt(s); at least 2 of each are needed",
            layout.raters.len(),
            layout.prompts.len()
        )));
    }
    let p = layout.width();
    let index = |xs: &[String], x: &str| xs.binary_search_by(|v| v.as_str().cmp(x)).expect("id in layout");
    let rows: Vec<([usize; 4], f64)> = table
        .rows()
        .iter()
        .map(|r| {
            let d = layout.dimensions.binary_search(&r.dimension).expect("dimension in layout");
            (
                [
                    0,
                    layout.alpha(index(&layout.raters, &r.rater)),
                    layout.theta(index(&layout.prompts, &r.prompt)),
                    layout.gamma(d),
                ],
                r.score,
            )
        })
        .collect();
    let n = rows.len();

    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for (cols, y) in &rows {
        for &a in cols {
            xty[a] += y;
            for &b in cols {
                xtx[(a, b)] += 1.0;
            }
        }
    }
    let mut prior_var = DVector::<f64>::from_element(p, hp.theta_var);
    prior_var[0] = hp.mu_var;
    (0..layout.raters.len()).for_each(|i| prior_var[layout.alpha(i)] = hp.alpha_var);
    (0..layout.dimensions.len()).for_each(|d| prior_var[layout.gamma(d)] = hp.gamma_var);
    let sqrt_prec = prior_var.map(|v| v.sqrt().recip());
    let mut prior_shift = DVector::<f64>::zeros(p);
    prior_shift[0] = hp.mu_mean / hp.mu_var;

    let d_inv = DMatrix::from_diagonal(&sqrt_prec.map(f64::recip));
    let scaled = &d_inv * &xtx * &d_inv;
    let eig = SymmetricEigen::new(scaled);
    let lambda = eig.eigenvalues.map(|l| l.max(0.0));
    // β = D⁻¹ Q u, so precompute D⁻¹Q and (D⁻¹Q)ᵀ.
    let back = &d_inv * &eig.eigenvectors;
    let forward = back.transpose();

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let ys: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let y_var = ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n as f64;
    let mut sigma2 = y_var.max(1e-2);
    let shape = hp.sigma_shape + n as f64 / 2.0;

    let total = settings.n_burnin + settings.n_samples;
    let mut chain = Chain {
        raters: layout.raters.clone(),
        prompts: layout.prompts.clone(),
        dimensions: layout.dimensions.clone(),
        draws: Vec::with_capacity(settings.n_samples),
        conditional_means: Vec::with_capacity(settings.n_samples),
        sigma2: Vec::with_capacity(settings.n_samples),
    };
    let mut z = DVector::<f64>::zeros(p);
    for sweep in 0..total {
        let rhs = &xty / sigma2 + &prior_shift;
        let c = &forward * rhs;
        let prec = lambda.map(|l| l / sigma2 + 1.0);
        let u_mean = c.component_div(&prec);
        for k in 0..p {
            z[k] = StandardNormal.sample(&mut rng);
        }
        let u = &u_mean + z.component_div(&prec.map(f64::sqrt));
        let mut beta: Vec<f64> = (&back * u).iter().copied().collect();

        let rss: f64 = rows
            .iter()
            .map(|(cols, y)| {
                let fitted: f64 = cols.iter().map(|&k| beta[k]).sum();
                (y - fitted).powi(2)
            })
            .sum();
        let g = Gamma::new(shape, 1.0 / (hp.sigma_scale + rss / 2.0)).expect("positive gamma parameters");
        sigma2 = 1.0 / g.sample(&mut rng);

        if sweep >= settings.n_burnin {
            let mut m: Vec<f64> = (&back * u_mean).iter().copied().collect();
            center(&layout, &mut beta);
            center(&layout, &mut m);
            chain.draws.push(beta);
            chain.conditional_means.push(m);
            chain.sigma2.push(sigma2);
        }
    }
    Ok(chain)
}

fn summarize(name: String, draws: &[f64], conditional: Option<&[f64]>) -> ParameterSummary {
    let n = draws.len() as f64;
    let raw_mean = draws.iter().sum::<f64>() / n;
    let sd = (draws.iter().map(|x| (x - raw_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let ess = effective_sample_size(draws);
    let (mean, mcse) = match conditional {
        Some(c) => {
            let m = c.iter().sum::<f64>() / n;
            let s = (c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            (m, s / effective_sample_size(c).sqrt())
        }
        None => (raw_mean, sd / ess.sqrt()),
    };
    let rhat = split_rhat(draws);
    ParameterSummary {
        name,
        mean,
        sd,
        lower: quantile(draws, 0.025),
        upper: quantile(draws, 0.975),
        mcse,
        ess,
        rhat: if rhat.is_nan() { 1.0 } else { rhat },
    }
}

/// Fits the joint model and summarizes the parameters relevant to
/// `dimension`: μ, every rater and prompt effect, γ for the dimension, σ².
pub fn fit(
    table: &RatingTable,
    dimension: Dimension,
    hp: &Hyperparams,
    settings: &FitSettings,
) -> Result<PosteriorSummary, EvalError> {
    let in_dim = table.for_dimension(dimension).count();
    let raters: std::collections::BTreeSet<&str> = table.for_dimension(dimension).map(|r| r.rater.as_str()).collect();
    let prompts: std::collections::BTreeSet<&str> = table.for_dimension(dimension).map(|r| r.prompt.as_str()).collect();
    if raters.len() < 2 || prompts.len() < 2 {
        return Err(EvalError::InsufficientData(format!(
            "{dimension}: {} rater(s) and {} prompt(s) over {in_dim} rating(s); at least 2 of each are needed",
            raters.len(),
            prompts.len()
        )));
    }
    let chain = fit_chain(table, hp, settings)?;
    let param = |name: String, k: usize| summarize(name, &chain.column(k), Some(&chain.mean_column(k)));

    let mu = param("mu".into(), 0);
    let alpha: BTreeMap<String, ParameterSummary> =
        chain.raters.iter().enumerate().map(|(i, r)| (r.clone(), param(format!("alpha[{r}]"), 1 + i))).collect();
    let theta: BTreeMap<String, ParameterSummary> = chain
        .prompts
        .iter()
        .enumerate()
        .map(|(j, q)| (q.clone(), param(format!("theta[{q}]"), 1 + chain.raters.len() + j)))
        .collect();
    let gamma = param(format!("gamma[{dimension}]"), chain.gamma_index(dimension).expect("dimension present"));
    let sigma2 = summarize("sigma2".into(), &chain.sigma2, None);

    let mut summary = PosteriorSummary {
        dimension,
        hyperparams: *hp,
        settings: *settings,
        n_observations: table.len(),
        mu,
        alpha,
        theta,
        gamma,
        sigma2,
        max_rhat: 1.0,
        converged: true,
        warnings: Vec::new(),
    };
    summary.max_rhat = summary.parameters().map(|p| p.rhat).fold(1.0, f64::max);
    if summary.max_rhat > RHAT_WARNING {
        summary.converged = false;
        summary
            .warnings
            .push(format!("NonConvergence: split-chain ratio {:.3} exceeds {RHAT_WARNING}", summary.max_rhat));
    }
    Ok(summary)
}
