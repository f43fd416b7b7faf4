//! Temporary diagnostic probe (not part of the suite; deleted after use).

use owqe::agent::OuNoise;
use owqe::envs::{CartPole, Environment, Pendulum};
use owqe::rng::stream;

#[test]
#[ignore]
fn noise_only_data_richness() {
    // Roll OU-noise-only episodes on both envs and summarize how rich the
    // visited data is: wall-parking share, pole-angle coverage, reward spread.
    let mut rng = stream(12345, 999);

    let mut env = CartPole::new();
    let bound = env.spec().action_bounds[0];
    let mut noise = OuNoise::new(1);
    let mut parked = 0usize;
    let mut total = 0usize;
    let mut cos_sum = 0.0;
    let mut cos_min = f64::INFINITY;
    let mut r_sum = 0.0;
    let mut r_sq = 0.0;
    let mut x_abs_sum = 0.0;
    for _ep in 0..20 {
        env.reset().unwrap();
        noise.reset();
        loop {
            let eta = noise.step(&mut rng)[0];
            let a = [eta.clamp(-bound, bound)];
            let step = env.step(&a).unwrap();
            let cos = step.obs[2];
            let x = step.obs[0] * 2.4;
            total += 1;
            if x.abs() >= 2.4 - 1e-9 {
                parked += 1;
            }
            cos_sum += cos;
            cos_min = cos_min.min(cos);
            r_sum += step.reward;
            r_sq += step.reward * step.reward;
            x_abs_sum += x.abs();
            if step.timeout {
                break;
            }
        }
    }
    let n = total as f64;
    let r_mean = r_sum / n;
    println!(
        "cartpole noise-only: parked {:.1}%  cos mean {:.3} min {:.3}  |x| mean {:.2}  r mean {:.3} std {:.3}",
        100.0 * parked as f64 / n,
        cos_sum / n,
        cos_min,
        x_abs_sum / n,
        r_mean,
        (r_sq / n - r_mean * r_mean).sqrt()
    );

    let mut env = Pendulum::new();
    let bound = env.spec().action_bounds[0];
    let mut noise = OuNoise::new(1);
    let mut cos_sum = 0.0;
    let mut cos_max = f64::NEG_INFINITY;
    let mut r_sum = 0.0;
    let mut r_sq = 0.0;
    let mut total = 0usize;
    for _ep in 0..20 {
        env.reset().unwrap();
        noise.reset();
        loop {
            let eta = noise.step(&mut rng)[0];
            let a = [eta.clamp(-bound, bound)];
            let step = env.step(&a).unwrap();
            let cos = step.obs[0];
            total += 1;
            cos_sum += cos;
            cos_max = cos_max.max(cos);
            r_sum += step.reward;
            r_sq += step.reward * step.reward;
            if step.timeout {
                break;
            }
        }
    }
    let n = total as f64;
    let r_mean = r_sum / n;
    println!(
        "pendulum noise-only: cos(upright=1) mean {:.3} max {:.3}  r mean {:.3} std {:.3}",
        cos_sum / n,
        cos_max,
        r_mean,
        (r_sq / n - r_mean * r_mean).sqrt()
    );
}
