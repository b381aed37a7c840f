use rand::Rng;
use rand_distr::StandardNormal;

use super::seed::rng_for;
use super::{RaterError, RaterExample};

/// Two unit-variance Gaussian clusters `margin` apart along a random
/// direction. `y` is the cluster id, flipped with probability `noise_rate`.
pub fn gen_synthetic(
    n: usize,
    dim: usize,
    margin: f64,
    noise_rate: f64,
    seed: u64,
) -> Result<Vec<RaterExample>, RaterError> {
    if n < 10 || dim < 2 || !(0.0..0.5).contains(&noise_rate) || !margin.is_finite() || margin < 0.0 {
        return Err(RaterError::InvalidArgument(format!(
            "gen_synthetic(n={n}, dim={dim}, margin={margin}, noise_rate={noise_rate})"
        )));
    }
    let mut rng = rng_for(seed, &[]);
    let mut direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);

    Ok((0..n)
        .map(|i| {
            let cluster = u8::from(rng.random_bool(0.5));
            let offset = if cluster == 1 { margin / 2.0 } else { -margin / 2.0 };
            let x = direction
                .iter()
                .map(|d| rng.sample::<f64, _>(StandardNormal) + offset * d)
                .collect();
            let flip = rng.random_bool(noise_rate);
            RaterExample {
                item_id: format!("syn-{i}"),
                x,
                y: if flip { 1 - cluster } else { cluster },
            }
        })
        .collect())
}
