use rand::Rng;

use crate::error::{Error, Result};
use crate::sigsynth::{apply_channel, ChannelConfig, ComplexSample, IQFrame, ModulationScheme};

/// `[[cos θ, sin θ], [-sin θ, cos θ]]` for `θ` in degrees.
pub fn givens_rotation(theta_degrees: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta_degrees.to_radians().sin_cos();
    [[c, s], [-s, c]]
}

/// Rotate every `(I, Q)` pair in place by the Givens matrix for `θ`.
pub fn rotate_samples(samples: &mut [ComplexSample], theta_degrees: f64) {
    let [[c, s], [ms, c2]] = givens_rotation(theta_degrees);
    for x in samples {
        let (re, im) = (x.re, x.im);
        x.re = c * re + s * im;
        x.im = ms * re + c2 * im;
    }
}

/// The trigger: a copy of `frame` with every sample rotated by `θ`. Labels
/// and flags are left for the caller to set.
pub fn apply_trigger(frame: &IQFrame, theta_degrees: f64) -> IQFrame {
    let mut out = frame.clone();
    rotate_samples(&mut out.samples, theta_degrees);
    out
}

/// What the receiver sees when the adversary transmits `G_θ x` over an
/// unknown channel.
pub fn trigger_test_transmission<R: Rng + ?Sized>(
    frame: &IQFrame,
    target: ModulationScheme,
    theta_degrees: f64,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<IQFrame> {
    if frame.label == target {
        return Err(Error::Validation(format!(
            "cannot trigger a frame already labeled with the target {target}"
        )));
    }
    apply_channel(&apply_trigger(frame, theta_degrees), channel, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use crate::sigsynth::FRAME_LEN;

    fn frame(seed: u64) -> IQFrame {
        let mut rng = rng_from_seed(seed);
        let samples = (0..FRAME_LEN)
            .map(|_| ComplexSample::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        IQFrame::new(samples, ModulationScheme::Qam16, 10.0).unwrap()
    }

    fn mat_mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        m
    }

    #[test]
    fn zero_angle_is_identity() {
        assert_eq!(givens_rotation(0.0), [[1.0, 0.0], [-0.0, 1.0]]);
        let f = frame(1);
        assert_eq!(apply_trigger(&f, 0.0), f);
    }

    #[test]
    fn forty_five_degrees_on_unit_i() {
        let mut s = [ComplexSample::new(1.0, 0.0)];
        rotate_samples(&mut s, 45.0);
        assert!((s[0].re - 0.70711).abs() < 1e-5);
        assert!((s[0].im + 0.70711).abs() < 1e-5);
    }

    #[test]
    fn inverse_and_determinant() {
        let mut rng = rng_from_seed(2);
        for _ in 0..100 {
            let t: f64 = rng.random_range(-720.0..720.0);
            let g = givens_rotation(t);
            let p = mat_mul(g, givens_rotation(-t));
            for i in 0..2 {
                for j in 0..2 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((p[i][j] - want).abs() < 1e-12);
                }
            }
            assert!((g[0][0] * g[1][1] - g[0][1] * g[1][0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_turn_and_power() {
        let f = frame(3);
        let back = apply_trigger(&f, 360.0);
        for (a, b) in back.samples.iter().zip(&f.samples) {
            assert!((a.re - b.re).abs() < 1e-6 && (a.im - b.im).abs() < 1e-6);
        }
        for t in [13.0, 90.0, 200.0, 359.9] {
            let r = apply_trigger(&f, t);
            assert!((r.power() - f.power()).abs() <= 1e-9 * f.power());
        }
    }

    #[test]
    fn test_transmission_over_identity_channel() {
        let f = frame(4);
        let mut rng = rng_from_seed(0);
        let id = ChannelConfig::identity();
        let y = trigger_test_transmission(&f, ModulationScheme::Psk8, 20.0, &id, &mut rng).unwrap();
        let direct = apply_trigger(&f, 20.0);
        for (a, b) in y.samples.iter().zip(&direct.samples) {
            assert!((a.re - b.re).abs() < 1e-12 && (a.im - b.im).abs() < 1e-12);
        }
        let y0 = trigger_test_transmission(&f, ModulationScheme::Psk8, 0.0, &id, &mut rng).unwrap();
        assert_eq!(y0.samples, f.samples);
        let err = trigger_test_transmission(&f, ModulationScheme::Qam16, 20.0, &id, &mut rng).unwrap_err();
        assert!(err.is_validation());
    }
}
