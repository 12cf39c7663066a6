use std::f64::consts::PI;

use super::RawSignal;
use crate::{Error, Result};

/// Quality factor of each powerline notch. Gives a ~2 Hz stopband at 60 Hz.
pub const NOTCH_Q: f64 = 30.0;

const HIGHPASS_ORDER: usize = 4;

/// Second-order IIR section, normalized so that `a0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b: [b[0] / a[0], b[1] / a[0], b[2] / a[0]],
            a: [a[1] / a[0], a[2] / a[0]],
        }
    }

    /// Band-stop section centered on `freq`.
    pub fn notch(freq: f64, q: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * freq / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        Self::normalized(
            [1.0, -2.0 * cos, 1.0],
            [1.0 + alpha, -2.0 * cos, 1.0 - alpha],
        )
    }

    /// High-pass section with a bilinear transform prewarped at `cutoff`.
    pub fn highpass(cutoff: f64, q: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        let k = (1.0 + cos) / 2.0;
        Self::normalized([k, -2.0 * k, k], [1.0 + alpha, -2.0 * cos, 1.0 - alpha])
    }

    /// Runs the section over `x` from zero initial state (transposed direct form II).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut s1, mut s2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = b0 * v + s1;
                s1 = b1 * v - a1 * y + s2;
                s2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }

    /// Complex gain at `freq`, for response checks.
    pub fn magnitude_at(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (
            1.0 + self.a[0] * c1 + self.a[1] * c2,
            self.a[0] * s1 + self.a[1] * s2,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

fn cascade(sections: &[Biquad], x: &[f64]) -> Vec<f64> {
    sections.iter().fold(x.to_vec(), |acc, s| s.filter(&acc))
}

/// Butterworth high-pass of even `order` as a cascade of biquads.
pub fn butterworth_highpass(order: usize, cutoff: f64, sample_rate: f64) -> Vec<Biquad> {
    assert!(
        order.is_multiple_of(2) && order > 0,
        "order must be even and positive"
    );
    (0..order / 2)
        .map(|k| {
            let theta = PI * (2 * k + 1) as f64 / (2 * order) as f64;
            Biquad::highpass(cutoff, 1.0 / (2.0 * theta.sin()), sample_rate)
        })
        .collect()
}

fn check_signal(signal: &RawSignal) -> Result<()> {
    if signal.is_empty() {
        return Err(Error::Input("signal is empty".into()));
    }
    Ok(())
}

/// Removes `base_freq` and its harmonics up to `max_harmonic` with one notch per harmonic.
pub fn notch_filter_bank(
    signal: &RawSignal,
    base_freq: f64,
    max_harmonic: usize,
) -> Result<RawSignal> {
    let fs = f64::from(signal.sample_rate());
    let nyquist = fs / 2.0;
    if !(base_freq > 0.0) {
        return Err(Error::Config(format!(
            "notch base frequency {base_freq} must be positive"
        )));
    }
    if base_freq * max_harmonic as f64 >= nyquist {
        return Err(Error::Config(format!(
            "harmonic {} of {base_freq} Hz is at or above Nyquist ({nyquist} Hz)",
            max_harmonic
        )));
    }
    check_signal(signal)?;
    let sections: Vec<Biquad> = (1..=max_harmonic)
        .map(|h| Biquad::notch(base_freq * h as f64, NOTCH_Q, fs))
        .collect();
    Ok(signal.map_channels(signal.sample_rate(), |c| cascade(&sections, c)))
}

/// Zero-phase high-pass: a 4th-order Butterworth run forward then backward.
pub fn highpass_filter(signal: &RawSignal, cutoff: f64) -> Result<RawSignal> {
    let fs = f64::from(signal.sample_rate());
    if !(cutoff > 0.0) {
        return Err(Error::Config(format!(
            "high-pass cutoff {cutoff} must be positive"
        )));
    }
    if cutoff >= fs / 2.0 {
        return Err(Error::Config(format!(
            "high-pass cutoff {cutoff} Hz is at or above Nyquist"
        )));
    }
    check_signal(signal)?;
    let sections = butterworth_highpass(HIGHPASS_ORDER, cutoff, fs);
    Ok(signal.map_channels(signal.sample_rate(), |c| {
        let mut y = cascade(&sections, c);
        y.reverse();
        let mut y = cascade(&sections, &y);
        y.reverse();
        y
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn notch_gain_is_zero_at_center() {
        let b = Biquad::notch(60.0, NOTCH_Q, 1000.0);
        assert!(b.magnitude_at(60.0, 1000.0) < 1e-12);
        assert!((b.magnitude_at(0.0, 1000.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn butterworth_is_3db_at_cutoff() {
        let sections = butterworth_highpass(4, 2.0, 1000.0);
        let g: f64 = sections
            .iter()
            .map(|s| s.magnitude_at(2.0, 1000.0))
            .product();
        assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9, "{g}");
        let dc: f64 = sections
            .iter()
            .map(|s| s.magnitude_at(0.0, 1000.0))
            .product();
        assert!(dc < 1e-12);
    }

    #[test]
    fn configuration_errors() {
        let s = RawSignal::zeros(1, 100, 1000);
        assert!(matches!(
            notch_filter_bank(&s, 60.0, 9),
            Err(Error::Config(_))
        ));
        assert!(matches!(highpass_filter(&s, 0.0), Err(Error::Config(_))));
        assert!(matches!(highpass_filter(&s, -1.0), Err(Error::Config(_))));
        assert!(matches!(highpass_filter(&s, 600.0), Err(Error::Config(_))));
        let empty = RawSignal::zeros(1, 0, 1000);
        assert!(matches!(
            notch_filter_bank(&empty, 60.0, 7),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn zero_in_zero_out() {
        let s = RawSignal::zeros(2, 500, 1000);
        assert_eq!(notch_filter_bank(&s, 60.0, 7).unwrap(), s);
        assert_eq!(highpass_filter(&s, 2.0).unwrap(), s);
    }
}
