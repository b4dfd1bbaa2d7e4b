use super::{BlockCapture, GaussianStream, ToyUNet};
use crate::error::{Error, Result};
use crate::refine::RefineParams;
use crate::tensor::FeatureMap;

/// Deterministic DDIM sampling schedule.
///
/// Cumulative signal level `ᾱ(τ)` falls linearly from `alpha_bar_clean` at
/// `τ = 0` to `alpha_bar_noisy` at `τ = 1`. Sampling visits
/// `τ_i = 1 - i / steps` for `i = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub seed: u64,
    pub alpha_bar_clean: f64,
    pub alpha_bar_noisy: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 25,
            seed: 0,
            alpha_bar_clean: 0.9999,
            alpha_bar_noisy: 0.02,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be >= 1".into()));
        }
        let (clean, noisy) = (self.alpha_bar_clean, self.alpha_bar_noisy);
        if !(noisy > 0.0 && noisy < clean && clean <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < alpha_bar_noisy < alpha_bar_clean <= 1, got {noisy} and {clean}"
            )));
        }
        Ok(())
    }

    pub fn alpha_bar(&self, tau: f64) -> f64 {
        self.alpha_bar_clean + (self.alpha_bar_noisy - self.alpha_bar_clean) * tau
    }

    /// Times `τ_0 = 1 > τ_1 > … > τ_steps = 0`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|i| 1.0 - i as f64 / self.steps as f64)
            .collect()
    }
}

/// Seeded starting noise for `net`, batch 1.
pub fn initial_noise(net: &ToyUNet, scfg: &SamplerConfig) -> Result<FeatureMap> {
    let dims = net.config().input_dims(1);
    let mut gauss = GaussianStream::new(scfg.seed);
    FeatureMap::new(dims, gauss.fill(dims.len(), 1.0))
}

/// One deterministic DDIM update from `ᾱ = a` to `ᾱ = a_prev` given predicted noise.
pub(crate) fn ddim_step(
    x: &FeatureMap,
    eps: &FeatureMap,
    a: f64,
    a_prev: f64,
) -> Result<FeatureMap> {
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let (sa_prev, sn_prev) = (a_prev.sqrt(), (1.0 - a_prev).sqrt());
    x.zip_with(eps, |xv, ev| {
        let (xv, ev) = (f64::from(xv), f64::from(ev));
        let x0 = (xv - sn * ev) / sa;
        (sa_prev * x0 + sn_prev * ev) as f32
    })
}

/// Sample plus the hook captures of the first denoising step.
#[derive(Debug, Clone)]
pub struct SampleTrace {
    pub sample: FeatureMap,
    pub first_step: Vec<BlockCapture>,
}

pub fn ddim_sample(
    net: &ToyUNet,
    scfg: &SamplerConfig,
    params: Option<&RefineParams>,
) -> Result<FeatureMap> {
    Ok(sample_inner(net, scfg, params, false)?.sample)
}

pub fn ddim_sample_traced(
    net: &ToyUNet,
    scfg: &SamplerConfig,
    params: Option<&RefineParams>,
) -> Result<SampleTrace> {
    sample_inner(net, scfg, params, true)
}

fn sample_inner(
    net: &ToyUNet,
    scfg: &SamplerConfig,
    params: Option<&RefineParams>,
    trace: bool,
) -> Result<SampleTrace> {
    scfg.validate()?;
    if let Some(p) = params {
        p.validate()?;
    }
    let mut x = initial_noise(net, scfg)?;
    let mut first_step = Vec::new();
    for (i, pair) in scfg.times().windows(2).enumerate() {
        let (tau, tau_prev) = (pair[0], pair[1]);
        let eps = if trace && i == 0 {
            let (eps, caps) = net.forward_capture(&x, tau, params)?;
            first_step = caps;
            eps
        } else {
            net.forward(&x, tau, params)?
        };
        x = ddim_step(&x, &eps, scfg.alpha_bar(tau), scfg.alpha_bar(tau_prev))?;
    }
    Ok(SampleTrace {
        sample: x,
        first_step,
    })
}
