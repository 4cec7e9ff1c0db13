//! Temporal-contrast spike encoding.
//!
//! Each analog channel becomes a train of signed unit spikes. The encoder
//! carries a residual `u` so sub-threshold changes accumulate instead of being
//! lost: at step k it forms `du = f(k) - f(k-1) + u`, emits `sign(du)` when
//! `|du| >= theta_th` (resetting `u` to exactly 0), and otherwise emits
//! nothing and keeps `u = du`.

use crate::error::{Error, Result};
use crate::signal_io::Sample;

/// Signed unit spikes over timesteps, each value in {-1, 0, +1}.
pub type SpikeTrain = Vec<i8>;

/// Spike trains for all channels of one sample, `channels[channel][timestep]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRaster {
    pub channels: Vec<SpikeTrain>,
}

impl SpikeRaster {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_timesteps(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.n_timesteps();
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.len() != t {
                return Err(Error::Validation(format!(
                    "raster channel {i} has {} timesteps, expected {t}",
                    ch.len()
                )));
            }
            if let Some(k) = ch.iter().position(|v| !matches!(v, -1..=1)) {
                return Err(Error::Validation(format!(
                    "raster channel {i} timestep {k} holds {}, not a unit spike",
                    ch[k]
                )));
            }
        }
        Ok(())
    }
}

/// Stateful temporal-contrast encoder for one channel.
///
/// Feed values in time order with [`step`](Self::step). The first call is the
/// reference point and emits no spike. After every step the residual satisfies
/// `|u| < theta_th`.
#[derive(Debug, Clone)]
pub struct TemporalContrast {
    theta_th: f64,
    residual: f64,
    prev: Option<f64>,
}

impl TemporalContrast {
    pub fn new(theta_th: f64) -> Result<Self> {
        if !(theta_th.is_finite() && theta_th > 0.0) {
            return Err(Error::Parameter(format!(
                "theta_th must be finite and > 0, got {theta_th}"
            )));
        }
        Ok(Self {
            theta_th,
            residual: 0.0,
            prev: None,
        })
    }

    /// Advances one timestep and returns the emitted spike.
    pub fn step(&mut self, value: f64) -> i8 {
        let Some(prev) = self.prev else {
            self.prev = Some(value);
            self.residual = 0.0;
            return 0;
        };
        let du = value - prev + self.residual;
        self.prev = Some(value);
        if du.abs() >= self.theta_th {
            self.residual = 0.0;
            if du > 0.0 {
                1
            } else {
                -1
            }
        } else {
            self.residual = du;
            0
        }
    }

    /// Carried accumulator `u` after the last step.
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

fn encode_channel_at(signal: &[f64], theta_th: f64, channel: usize) -> Result<SpikeTrain> {
    if signal.is_empty() {
        return Err(Error::Parameter(
            "signal must contain at least one timestep".into(),
        ));
    }
    if let Some(t) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::Encoding {
            channel: channel.to_string(),
            timestep: t,
            message: format!("non-finite input value {}", signal[t]),
        });
    }
    let mut enc = TemporalContrast::new(theta_th)?;
    Ok(signal.iter().map(|&v| enc.step(v)).collect())
}

/// Encodes one channel. The output train has the same length as the input.
pub fn encode_channel(signal: &[f64], theta_th: f64) -> Result<SpikeTrain> {
    encode_channel_at(signal, theta_th, 0)
}

/// Encodes every channel of a (normalized) sample independently.
pub fn encode_sample(sample: &Sample, theta_th: f64) -> Result<SpikeRaster> {
    let channels = sample
        .signal
        .iter()
        .enumerate()
        .map(|(i, ch)| encode_channel_at(ch, theta_th, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpikeRaster { channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_signal_is_silent() {
        assert_eq!(
            encode_channel(&[1.0, 1.0, 1.0], 0.22).unwrap(),
            vec![0, 0, 0]
        );
    }

    #[test]
    fn single_step_over_threshold_spikes() {
        assert_eq!(encode_channel(&[0.0, 0.3], 0.22).unwrap(), vec![0, 1]);
    }

    #[test]
    fn residual_carries_across_sub_threshold_steps() {
        assert_eq!(
            encode_channel(&[0.0, 0.15, 0.30], 0.22).unwrap(),
            vec![0, 0, 1]
        );
    }

    #[test]
    fn negative_delta_emits_negative_spike() {
        assert_eq!(encode_channel(&[0.0, -0.25], 0.22).unwrap(), vec![0, -1]);
    }

    #[test]
    fn exact_threshold_spikes() {
        // The spike branch is inclusive: |du| == theta_th fires.
        assert_eq!(encode_channel(&[0.0, 0.22], 0.22).unwrap(), vec![0, 1]);
    }

    #[test]
    fn residual_resets_to_zero_on_spike() {
        let mut enc = TemporalContrast::new(0.22).unwrap();
        enc.step(0.0);
        assert_eq!(enc.step(0.5), 1);
        assert_eq!(enc.residual(), 0.0);
        // Flat continuation stays silent: no remainder survived the spike.
        assert_eq!(enc.step(0.5), 0);
        assert_eq!(enc.residual(), 0.0);
    }

    #[test]
    fn rejects_non_positive_threshold() {
        assert!(encode_channel(&[0.0, 1.0], 0.0).is_err());
        assert!(encode_channel(&[0.0, 1.0], -0.1).is_err());
        assert!(encode_channel(&[0.0, 1.0], f64::NAN).is_err());
    }

    #[test]
    fn rejects_empty_signal() {
        assert!(encode_channel(&[], 0.22).is_err());
    }

    #[test]
    fn non_finite_value_names_channel_and_timestep() {
        let sample = Sample {
            signal: vec![vec![0.0, 0.1, 0.2], vec![0.0, f64::NAN, 0.2]],
            label: 0,
            trial_id: "t".into(),
            window_index: 0,
        };
        let err = encode_sample(&sample, 0.22).unwrap_err();
        match err {
            Error::Encoding {
                channel, timestep, ..
            } => {
                assert_eq!(channel, "1");
                assert_eq!(timestep, 1);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn raster_rows_match_per_channel_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let signal: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..50).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let sample = Sample {
            signal: signal.clone(),
            label: 0,
            trial_id: "t".into(),
            window_index: 0,
        };
        let raster = encode_sample(&sample, 0.18).unwrap();
        raster.validate().unwrap();

        // Independent scalar recurrence, written out longhand.
        for (ch, series) in signal.iter().enumerate() {
            let mut expected = vec![0i8];
            let mut u = 0.0;
            for k in 1..series.len() {
                let du = series[k] - series[k - 1] + u;
                if du >= 0.18 {
                    expected.push(1);
                    u = 0.0;
                } else if du <= -0.18 {
                    expected.push(-1);
                    u = 0.0;
                } else {
                    expected.push(0);
                    u = du;
                }
            }
            assert_eq!(raster.channels[ch], expected, "channel {ch}");
        }
    }

    #[test]
    fn only_active_channel_produces_spikes() {
        let flat = vec![0.5; 40];
        let ramp: Vec<f64> = (0..40).map(|t| t as f64 * 0.1).collect();
        let sample = Sample {
            signal: vec![flat.clone(), ramp, flat],
            label: 0,
            trial_id: "t".into(),
            window_index: 0,
        };
        let raster = encode_sample(&sample, 0.22).unwrap();
        assert!(raster.channels[0].iter().all(|&v| v == 0));
        assert!(raster.channels[1].contains(&1));
        assert!(raster.channels[2].iter().all(|&v| v == 0));
    }

    #[test]
    fn raising_threshold_never_adds_spikes() {
        // Empirical monotonicity check over fixed random signals.
        let thresholds = [0.05, 0.1, 0.18, 0.22, 0.3, 0.5, 0.8];
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let signal: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
            let counts: Vec<usize> = thresholds
                .iter()
                .map(|&th| {
                    encode_channel(&signal, th)
                        .unwrap()
                        .iter()
                        .filter(|&&v| v != 0)
                        .count()
                })
                .collect();
            for w in counts.windows(2) {
                assert!(w[1] <= w[0], "seed {seed}: counts {counts:?}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn train_is_unit_valued_and_length_preserving(
            signal in prop::collection::vec(-1.0f64..1.0, 1..200),
            theta in 0.05f64..0.9,
        ) {
            let train = encode_channel(&signal, theta).unwrap();
            prop_assert_eq!(train.len(), signal.len());
            prop_assert_eq!(train[0], 0);
            prop_assert!(train.iter().all(|v| matches!(v, -1..=1)));
        }

        #[test]
        fn sign_symmetry(
            signal in prop::collection::vec(-1.0f64..1.0, 1..200),
            theta in 0.05f64..0.9,
        ) {
            let pos = encode_channel(&signal, theta).unwrap();
            let negated: Vec<f64> = signal.iter().map(|v| -v).collect();
            let neg = encode_channel(&negated, theta).unwrap();
            let flipped: Vec<i8> = pos.iter().map(|v| -v).collect();
            prop_assert_eq!(neg, flipped);
        }

        #[test]
        fn residual_stays_below_threshold_and_reconstruction_is_bounded(
            signal in prop::collection::vec(-1.0f64..1.0, 2..200),
            theta in 0.05f64..0.9,
        ) {
            let mut enc = TemporalContrast::new(theta).unwrap();
            let mut recon = signal[0];
            let mut slack = 0.0; // accumulated per-spike quantization error
            enc.step(signal[0]);
            let mut u_prev = 0.0;
            for k in 1..signal.len() {
                let du = signal[k] - signal[k - 1] + u_prev;
                let spike = enc.step(signal[k]);
                prop_assert!(enc.residual().abs() < theta);
                if spike != 0 {
                    recon += theta * f64::from(spike);
                    slack += (du.abs() - theta).max(0.0);
                }
                u_prev = enc.residual();
                let drift = (signal[k] - recon - u_prev).abs();
                prop_assert!(drift <= slack + 1e-9, "drift {drift} > slack {slack}");
            }
        }
    }
}
