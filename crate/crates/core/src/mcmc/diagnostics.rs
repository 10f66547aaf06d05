//! Convergence diagnostics: split R-hat and multi-chain effective sample size.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::PosteriorChain;
use crate::stats::{mean, variance};

/// Split R-hat. Each chain is cut in half and the halves are compared.
/// Returns NaN when the within-chain variance vanishes.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if chains.is_empty() || n < 4 {
        return f64::NAN;
    }
    let half = n / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        halves.push(&c[..half]);
        halves.push(&c[n - half..n]);
    }
    let m = halves.len() as f64;
    let len = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = halves.iter().map(|h| variance(h)).sum::<f64>() / m;
    let b = len * variance(&means);
    if !(w > 1e-300) {
        return f64::NAN;
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    (var_plus / w).sqrt()
}

/// Effective sample size pooled over chains, using Geyer's initial monotone
/// sequence on the multi-chain autocorrelation estimate. NaN for constant chains.
pub fn ess(chains: &[&[f64]]) -> f64 {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if chains.is_empty() || n < 4 {
        return f64::NAN;
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let vars: Vec<f64> = chains.iter().map(|c| variance(&c[..n])).collect();
    let w = mean(&vars);
    if !(w > 1e-300) {
        return f64::NAN;
    }
    let b_over_n = if chains.len() > 1 { variance(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;

    let acovs: Vec<Vec<f64>> = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| autocovariance(&c[..n], *mu))
        .collect();
    let autocov = |lag: usize| -> f64 { acovs.iter().map(|a| a[lag]).sum::<f64>() / m };
    let rho = |lag: usize| 1.0 - (w * (nf - 1.0) / nf - autocov(lag)) / var_plus;

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let mut pair = rho(lag) + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = tau.max(1.0 / (m * nf).log10().max(1.0));
    m * nf / tau
}

/// Biased autocovariance `sum_i (x_i - mu)(x_{i+lag} - mu) / n` for every lag, via FFT.
fn autocovariance(x: &[f64], mu: f64) -> Vec<f64> {
    let n = x.len();
    let size = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mu, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    fwd.process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    inv.process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf[..n].iter().map(|v| v.re * scale).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostic {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess: f64,
    /// The parameter never moved in any chain.
    pub degenerate: bool,
    /// R-hat above threshold or degenerate.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub threshold: f64,
    pub n_chains: usize,
    pub draws_per_chain: usize,
    pub params: Vec<ParamDiagnostic>,
}

impl DiagnosticsReport {
    pub fn max_rhat(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.rhat)
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.ess)
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::min)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ParamDiagnostic> {
        self.params.iter().filter(|p| p.flagged)
    }

    pub fn passed(&self) -> bool {
        self.flagged().next().is_none()
    }

    /// One-line account of the worst offenders, for error messages.
    pub fn summary(&self) -> String {
        let bad: Vec<String> = self
            .flagged()
            .take(5)
            .map(|p| format!("{} (R-hat {:.3}, ESS {:.0})", p.name, p.rhat, p.ess))
            .collect();
        let n_bad = self.flagged().count();
        if bad.is_empty() {
            format!("all {} parameters pass, max R-hat {:.4}", self.params.len(), self.max_rhat())
        } else {
            format!(
                "{n_bad} of {} parameters exceed R-hat {}: {}",
                self.params.len(),
                self.threshold,
                bad.join(", ")
            )
        }
    }

    /// Plain-text table, one parameter per line.
    pub fn table(&self) -> String {
        let mut out = format!("{:<32} {:>12} {:>12} {:>8} {:>10}  flag\n", "parameter", "mean", "sd", "rhat", "ess");
        for p in &self.params {
            out.push_str(&format!(
                "{:<32} {:>12.5} {:>12.5} {:>8.4} {:>10.1}  {}\n",
                p.name,
                p.mean,
                p.sd,
                p.rhat,
                p.ess,
                if p.degenerate {
                    "DEGENERATE"
                } else if p.flagged {
                    "RHAT"
                } else {
                    ""
                }
            ));
        }
        out
    }
}

/// Per-parameter R-hat and ESS over a set of chains sharing one parameterisation.
pub fn diagnostics(names: &[String], chains: &[PosteriorChain], threshold: f64) -> DiagnosticsReport {
    let dim = names.len();
    let columns: Vec<Vec<Vec<f64>>> = chains
        .iter()
        .map(|c| (0..dim).map(|i| c.column(i)).collect())
        .collect();
    let params = (0..dim)
        .map(|i| {
            let per_chain: Vec<&[f64]> = columns.iter().map(|c| c[i].as_slice()).collect();
            let pooled: Vec<f64> = per_chain.iter().flat_map(|c| c.iter().copied()).collect();
            let rhat = split_rhat(&per_chain);
            let ess = ess(&per_chain);
            let degenerate = variance(&pooled) == 0.0 || !ess.is_finite();
            ParamDiagnostic {
                name: names[i].clone(),
                mean: mean(&pooled),
                sd: variance(&pooled).sqrt(),
                rhat,
                ess,
                degenerate,
                flagged: degenerate || !(rhat <= threshold),
            }
        })
        .collect();
    DiagnosticsReport {
        threshold,
        n_chains: chains.len(),
        draws_per_chain: chains.iter().map(|c| c.len()).min().unwrap_or(0),
        params,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(seed: u64, n: usize, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + shift
            })
            .collect()
    }

    #[test]
    fn constant_chains_are_degenerate() {
        let c = vec![1.0; 100];
        let chain = PosteriorChain {
            draws: c.iter().map(|v| vec![*v]).collect(),
            log_posterior: vec![0.0; 100],
            seed: 0,
            n_warmup: 0,
            n_iter: 100,
            thin: 1,
            acceptance: vec![0.0],
            adaptation: vec![],
        };
        let report = diagnostics(&["x".into()], &[chain.clone(), chain], 1.05);
        assert!(report.params[0].degenerate);
        assert!(!report.passed());
        assert!(ess(&[&c, &c]).is_nan());
    }

    #[test]
    fn independent_chains_rhat_near_one() {
        let chains: Vec<Vec<f64>> = (0..4).map(|k| iid(k, 2000, 0.0)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let r = split_rhat(&refs);
        assert!((0.99..=1.02).contains(&r), "rhat {r}");
        let e = ess(&refs);
        assert!(e > 6000.0 && e < 10000.0, "ess {e}");
    }

    #[test]
    fn offset_chain_fails() {
        let mut chains: Vec<Vec<f64>> = (0..4).map(|k| iid(10 + k, 1000, 0.0)).collect();
        chains[3] = iid(99, 1000, 10.0);
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        assert!(split_rhat(&refs) > 1.1);
    }

    #[test]
    fn autocorrelated_chain_has_smaller_ess() {
        let z = iid(3, 5000, 0.0);
        let mut ar = vec![0.0; 5000];
        for i in 1..5000 {
            ar[i] = 0.9 * ar[i - 1] + z[i];
        }
        let e = ess(&[&ar]);
        // AR(1) with phi = 0.9 has ESS about n (1 - phi) / (1 + phi) = 263
        assert!(e > 150.0 && e < 450.0, "ess {e}");
    }
}
