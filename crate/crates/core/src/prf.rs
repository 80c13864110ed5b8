//! Linear population receptive field forward model and goodness of fit.
//!
//! A pRF is a unit-integral circular Gaussian centred at `(x, y)` with size
//! `sigma` (degrees). Its neural drive is the Gaussian mass covered by the
//! stimulus aperture on each frame; the predicted BOLD series is that drive
//! convolved with a double-gamma HRF.

use crate::error::{Error, Result};
use crate::par;

/// Number of free parameters charged in the AIC: x, y, sigma, gain and
/// baseline.
pub const AIC_PARAMETERS: usize = 5;

/// Minimum series length for fitting.
pub const MIN_SERIES_LEN: usize = 8;

/// Binary stimulus apertures sampled on a square visual-field grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    frames: Vec<Vec<u8>>,
    height: usize,
    width: usize,
    extent_deg: f64,
    tr: f64,
    on_pixels: Vec<Vec<u32>>,
}

impl Stimulus {
    /// `frames` are row-major `height x width` images; row 0 is the top of
    /// the field. `extent_deg` is the span of each axis, centred at fixation.
    pub fn new(frames: Vec<Vec<u8>>, height: usize, width: usize, extent_deg: f64, tr: f64) -> Result<Self> {
        if frames.is_empty() || height == 0 || width == 0 {
            return Err(Error::InvalidArgument("stimulus needs at least one non-empty frame".into()));
        }
        if !(extent_deg > 0.0) || !(tr > 0.0) {
            return Err(Error::InvalidArgument(format!("extent {extent_deg} and tr {tr} must be positive")));
        }
        for (k, f) in frames.iter().enumerate() {
            if f.len() != height * width {
                return Err(Error::InvalidArgument(format!("frame {k} has {} samples", f.len())));
            }
            if f.iter().any(|&v| v > 1) {
                return Err(Error::InvalidArgument(format!("frame {k} is not binary")));
            }
        }
        let on_pixels = frames
            .iter()
            .map(|f| f.iter().enumerate().filter(|(_, &v)| v == 1).map(|(i, _)| i as u32).collect())
            .collect();
        Ok(Self { frames, height, width, extent_deg, tr, on_pixels })
    }

    pub fn frames(&self) -> &[Vec<u8>] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn extent_deg(&self) -> f64 {
        self.extent_deg
    }

    pub fn tr(&self) -> f64 {
        self.tr
    }

    /// Visual-field position of pixel centre `(row, col)` in degrees.
    pub fn pixel_position(&self, row: usize, col: usize) -> [f64; 2] {
        let half = 0.5 * self.extent_deg;
        [
            -half + (col as f64 + 0.5) * self.extent_deg / self.width as f64,
            half - (row as f64 + 0.5) * self.extent_deg / self.height as f64,
        ]
    }

    fn pixel_area(&self) -> f64 {
        (self.extent_deg / self.width as f64) * (self.extent_deg / self.height as f64)
    }
}

/// Double-gamma HRF parameters (seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrfParams {
    pub peak_delay: f64,
    pub undershoot_delay: f64,
    pub peak_dispersion: f64,
    pub undershoot_dispersion: f64,
    pub undershoot_ratio: f64,
}

impl Default for HrfParams {
    fn default() -> Self {
        Self {
            peak_delay: 6.0,
            undershoot_delay: 16.0,
            peak_dispersion: 1.0,
            undershoot_dispersion: 1.0,
            undershoot_ratio: 1.0 / 6.0,
        }
    }
}

/// Per-vertex BOLD time series.
#[derive(Debug, Clone, PartialEq)]
pub struct BoldSeries {
    pub samples: Vec<Vec<f64>>,
    pub tr: f64,
}

/// Gaussian mass covered by the aperture, per frame.
pub fn prf_drive(stimulus: &Stimulus, x: f64, y: f64, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::SigmaNonPositive(sigma));
    }
    let inv = 1.0 / (2.0 * sigma * sigma);
    let norm = stimulus.pixel_area() / (2.0 * std::f64::consts::PI * sigma * sigma);
    let gx: Vec<f64> = (0..stimulus.width)
        .map(|c| {
            let d = stimulus.pixel_position(0, c)[0] - x;
            (-d * d * inv).exp()
        })
        .collect();
    let gy: Vec<f64> = (0..stimulus.height)
        .map(|r| {
            let d = stimulus.pixel_position(r, 0)[1] - y;
            norm * (-d * d * inv).exp()
        })
        .collect();
    let w = stimulus.width;
    Ok(stimulus.on_pixels.iter().map(|on| on.iter().map(|&i| gy[i as usize / w] * gx[i as usize % w]).sum()).collect())
}

fn gamma_lobe(t: f64, delay: f64, dispersion: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let shape = delay / dispersion;
    (shape * (t / delay).ln() - (t - delay) / dispersion).exp()
}

/// Difference of two gamma lobes peaking at `peak_delay` and
/// `undershoot_delay`, sampled every `tr` seconds over `[0, duration]` and
/// scaled to a maximum of one.
pub fn canonical_hrf(params: &HrfParams, tr: f64, duration: f64) -> Vec<f64> {
    let n = (duration / tr).floor() as usize + 1;
    let mut h: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 * tr;
            gamma_lobe(t, params.peak_delay, params.peak_dispersion)
                - params.undershoot_ratio * gamma_lobe(t, params.undershoot_delay, params.undershoot_dispersion)
        })
        .collect();
    let peak = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak > 0.0 {
        for v in &mut h {
            *v /= peak;
        }
    }
    h
}

/// Causal convolution truncated to the length of `signal`.
pub fn convolve_causal(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    (0..signal.len())
        .map(|t| {
            let kmax = kernel.len().min(t + 1);
            (0..kmax).map(|k| kernel[k] * signal[t - k]).sum()
        })
        .collect()
}

/// Unit-gain, zero-baseline BOLD prediction for one pRF.
pub fn predict_bold(stimulus: &Stimulus, x: f64, y: f64, sigma: f64, hrf: &[f64]) -> Result<Vec<f64>> {
    Ok(convolve_causal(&prf_drive(stimulus, x, y, sigma)?, hrf))
}

/// Predictions for many pRFs `(x, y, sigma)`, in input order.
pub fn predict_bold_batch(stimulus: &Stimulus, prfs: &[(f64, f64, f64)], hrf: &[f64]) -> Result<Vec<Vec<f64>>> {
    par::map_slice(prfs, |&(x, y, s)| predict_bold(stimulus, x, y, s, hrf)).into_iter().collect()
}

/// Goodness of fit of one observed series against one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitEntry {
    pub gain: f64,
    pub baseline: f64,
    pub rss: f64,
    pub rmse: f64,
    pub pearson: f64,
    pub aic: f64,
}

/// Fits `observed ~ gain * predicted + baseline` by least squares and scores
/// the fit.
pub fn fit_gain_and_metrics(observed: &[f64], predicted: &[f64]) -> Result<FitEntry> {
    let n = observed.len();
    if predicted.len() != n {
        return Err(Error::InvalidArgument(format!("series lengths {} and {} differ", n, predicted.len())));
    }
    if n < MIN_SERIES_LEN {
        return Err(Error::InvalidArgument(format!("series length {n} below {MIN_SERIES_LEN}")));
    }
    let nf = n as f64;
    let mo = observed.iter().sum::<f64>() / nf;
    let mp = predicted.iter().sum::<f64>() / nf;
    let (mut spp, mut soo, mut spo) = (0.0, 0.0, 0.0);
    for (o, p) in observed.iter().zip(predicted) {
        let (dp, d_o) = (p - mp, o - mo);
        spp += dp * dp;
        soo += d_o * d_o;
        spo += dp * d_o;
    }
    let scale_p = predicted.iter().map(|v| v * v).sum::<f64>();
    let scale_o = observed.iter().map(|v| v * v).sum::<f64>();
    if !(spp > 1e-24 * scale_p) || !(soo > 1e-24 * scale_o) {
        return Err(Error::DegenerateSeries);
    }
    let gain = spo / spp;
    let baseline = mo - gain * mp;
    let rss: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| {
            let r = o - (gain * p + baseline);
            r * r
        })
        .sum();
    let pearson = (spo / (spp.sqrt() * soo.sqrt())).clamp(-1.0, 1.0);
    Ok(FitEntry { gain, baseline, rss, rmse: (rss / nf).sqrt(), pearson, aic: aic(n, rss, AIC_PARAMETERS) })
}

/// Akaike information criterion `n ln(RSS / n) + 2k`.
pub fn aic(n: usize, rss: f64, k: usize) -> f64 {
    n as f64 * (rss / n as f64).ln() + 2.0 * k as f64
}

/// Per-vertex fit results with aggregates over the valid entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FitMetrics {
    pub per_vertex: Vec<Option<FitEntry>>,
    pub rmse: f64,
    pub pearson: f64,
    pub aic: f64,
}

impl FitMetrics {
    /// Aggregates over `include` (all vertices if `None`), skipping invalid
    /// entries.
    pub fn aggregate(per_vertex: Vec<Option<FitEntry>>, include: Option<&[usize]>) -> Self {
        let idx: Vec<usize> = match include {
            Some(ids) => ids.to_vec(),
            None => (0..per_vertex.len()).collect(),
        };
        let valid: Vec<&FitEntry> = idx.iter().filter_map(|&i| per_vertex[i].as_ref()).collect();
        let n = valid.len() as f64;
        let mean = |f: &dyn Fn(&FitEntry) -> f64| {
            if valid.is_empty() {
                f64::NAN
            } else {
                valid.iter().map(|e| f(e)).sum::<f64>() / n
            }
        };
        Self { rmse: mean(&|e| e.rmse), pearson: mean(&|e| e.pearson), aic: mean(&|e| e.aic), per_vertex }
    }
}

/// Fits every observed series against its prediction; degenerate pairs are
/// recorded as `None`.
pub fn fit_all(observed: &BoldSeries, predicted: &[Vec<f64>]) -> Vec<Option<FitEntry>> {
    par::map_range(observed.samples.len(), |i| fit_gain_and_metrics(&observed.samples[i], &predicted[i]).ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stim(frames: Vec<Vec<u8>>, n: usize) -> Stimulus {
        Stimulus::new(frames, n, n, 20.0, 1.0).unwrap()
    }

    #[test]
    fn drive_basics() {
        let n = 101;
        let s = stim(vec![vec![0; n * n], vec![1; n * n]], n);
        let d = prf_drive(&s, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 1.0).abs() < 1e-3, "{}", d[1]);
        assert!(matches!(prf_drive(&s, 0.0, 0.0, 0.0), Err(Error::SigmaNonPositive(_))));
    }

    #[test]
    fn drive_is_additive_over_disjoint_apertures() {
        let n = 41;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<u8> = (0..n * n).map(|_| rng.random_range(0..2)).collect();
        let b: Vec<u8> = a.iter().map(|&v| 1 - v).collect();
        let s = stim(vec![a, b, vec![1; n * n]], n);
        let d = prf_drive(&s, 2.0, -1.5, 2.5).unwrap();
        assert!((d[0] + d[1] - d[2]).abs() < 1e-10);
    }

    #[test]
    fn hrf_shape() {
        let h = canonical_hrf(&HrfParams::default(), 1.0, 32.0);
        let argmax = h.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((argmax as f64 - 6.0).abs() <= 1.0);
        assert!((h[argmax] - 1.0).abs() < 1e-15);
        let p = HrfParams { undershoot_ratio: 0.0, ..Default::default() };
        assert!(canonical_hrf(&p, 1.0, 32.0).iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn hrf_integral_is_positive() {
        // Simpson's rule on the continuous double gamma, as an oracle
        // independent of the sampled kernel
        let p = HrfParams::default();
        let f = |t: f64| gamma_lobe(t, 6.0, 1.0) - p.undershoot_ratio * gamma_lobe(t, 16.0, 1.0);
        let m = 3200;
        let hstep = 32.0 / m as f64;
        let simpson: f64 = (0..=m)
            .map(|k| {
                let w = if k == 0 || k == m {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(k as f64 * hstep)
            })
            .sum::<f64>()
            * hstep
            / 3.0;
        assert!(simpson > 0.0);
        assert!(canonical_hrf(&p, 1.0, 32.0).iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn convolution_identities() {
        let h = canonical_hrf(&HrfParams::default(), 1.0, 32.0);
        let mut impulse = vec![0.0; 20];
        impulse[0] = 1.0;
        assert_eq!(convolve_causal(&impulse, &h), h[..20].to_vec());
        assert!(convolve_causal(&[0.0; 10], &h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_metrics_cases() {
        let p: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let o: Vec<f64> = p.iter().map(|v| 2.0 * v + 1.0).collect();
        let e = fit_gain_and_metrics(&o, &p).unwrap();
        assert!(e.rmse < 1e-12);
        assert!((e.pearson - 1.0).abs() < 1e-12);
        assert!((e.gain - 2.0).abs() < 1e-12 && (e.baseline - 1.0).abs() < 1e-12);
        assert!(matches!(fit_gain_and_metrics(&[1.0; 10], &p[..10]), Err(Error::DegenerateSeries)));
        assert!(fit_gain_and_metrics(&o[..5], &p[..5]).is_err());
    }

    #[test]
    fn aic_arithmetic() {
        assert_eq!(aic(100, 100.0, AIC_PARAMETERS), 10.0);
    }
}
