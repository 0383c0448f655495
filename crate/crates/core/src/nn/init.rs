use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::rng::rng_for;

/// He-normal initialization: every value drawn from `N(0, 2 / fan_in)`.
pub fn he_normal_init(param: &mut Parameter, fan_in: usize, seed: u64) -> Result<()> {
    if fan_in == 0 {
        return Err(Error::Argument("fan_in must be at least 1".into()));
    }
    normal_init(param, (2.0 / fan_in as f64).sqrt(), seed)
}

pub fn normal_init(param: &mut Parameter, std_dev: f64, seed: u64) -> Result<()> {
    let dist = Normal::new(0.0, std_dev)
        .map_err(|e| Error::Argument(format!("normal({std_dev}): {e}")))?;
    let mut rng = rng_for(seed, &[]);
    param
        .value
        .data_mut()
        .iter_mut()
        .for_each(|w| *w = dist.sample(&mut rng));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_var(fan_in: usize, seed: u64) -> f64 {
        let mut p = Parameter::zeros(&[100_000]);
        he_normal_init(&mut p, fan_in, seed).unwrap();
        let d = p.value.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64
    }

    #[test]
    fn seeded_and_reproducible() {
        let mut a = Parameter::zeros(&[64]);
        let mut b = Parameter::zeros(&[64]);
        he_normal_init(&mut a, 8, 42).unwrap();
        he_normal_init(&mut b, 8, 42).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn variance_matches_fan_in() {
        let v = sample_var(2, 1);
        assert!((v - 1.0).abs() < 0.05, "{v}");
        let sd2 = sample_var(2, 3).sqrt();
        let sd8 = sample_var(8, 4).sqrt();
        assert!((sd8 / sd2 - 0.5).abs() < 0.5 * 0.05);
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(he_normal_init(&mut Parameter::zeros(&[1]), 0, 0).is_err());
    }
}
