//! Success tracking and the exploration schedules on randomized success
//! vectors.

use a2_core::exploration::{sigma_scale, EgaSchedule, EgrSchedule, SuccessTracker};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXACT: f64 = 1e-12;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rate(rng: &mut ChaCha8Rng) -> f64 {
    // boundary values turn up often
    match rng.random_range(0..6) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random(),
    }
}

pub struct Report {
    pub vectors: usize,
    pub entries: usize,
}

pub fn run(vectors: usize, seed: u64) -> Result<Report, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = 0;
    for v in 0..vectors {
        let n = rng.random_range(1..=6);
        let s: Vec<f64> = (0..n).map(|_| rate(&mut rng)).collect();
        // a pointwise lower-or-equal companion for monotonicity
        let lower: Vec<f64> = s.iter().map(|&x| x * rng.random::<f64>()).collect();
        let eps_end = rng.random_range(0.0..0.5);
        let egr = EgrSchedule {
            eps_start: rng.random_range(eps_end..=1.0),
            eps_end,
            beta: 1.0,
        };
        let ega = EgaSchedule {
            eps0: rng.random(),
            sigma0: rng.random_range(0.0..1.0),
        };

        let eps = egr.adaptive(&s);
        let eps_lower = egr.adaptive(&lower);
        let (ga_eps, ga_sigma) = ega.adaptive(&s);
        let (ga_eps_lower, ga_sigma_lower) = ega.adaptive(&lower);
        let scale = sigma_scale(&s);
        let scale_lower = sigma_scale(&lower);
        ensure(
            eps.len() == n && ga_eps.len() == n && ga_sigma.len() == n && scale.len() == n,
            || format!("vector {v}: output lengths differ from {n}"),
        )?;
        for i in 0..n {
            let x = s[i];
            let want_eps = egr.eps_end + (egr.eps_start - egr.eps_end) * (1.0 - x);
            ensure((eps[i] - want_eps).abs() <= EXACT, || {
                format!("vector {v}: eps {} != {want_eps} at S={x}", eps[i])
            })?;
            ensure((ga_eps[i] - ega.eps0 * (1.0 - x)).abs() <= EXACT, || {
                format!("vector {v}: EGa eps {} at S={x}", ga_eps[i])
            })?;
            ensure(
                (ga_sigma[i] - ega.sigma0 * (1.0 - x)).abs() <= EXACT,
                || format!("vector {v}: EGa sigma {} at S={x}", ga_sigma[i]),
            )?;
            ensure((scale[i] - (1.0 - x)).abs() <= EXACT, || {
                format!("vector {v}: scale {} at S={x}", scale[i])
            })?;
            if x == 0.0 {
                ensure(
                    (eps[i] - egr.eps_start).abs() <= EXACT
                        && (ga_eps[i] - ega.eps0).abs() <= EXACT
                        && (ga_sigma[i] - ega.sigma0).abs() <= EXACT
                        && scale[i] == 1.0,
                    || format!("vector {v}: S=0 must give the starting values"),
                )?;
            }
            if x == 1.0 {
                ensure(
                    (eps[i] - egr.eps_end).abs() <= EXACT
                        && ga_eps[i] == 0.0
                        && ga_sigma[i] == 0.0
                        && scale[i] == 0.0,
                    || format!("vector {v}: S=1 must give the final values"),
                )?;
            }
            ensure(
                (egr.eps_end - EXACT..=egr.eps_start + EXACT).contains(&eps[i])
                    && (0.0..=ega.eps0).contains(&ga_eps[i])
                    && (0.0..=ega.sigma0).contains(&ga_sigma[i])
                    && (0.0..=1.0).contains(&scale[i]),
                || format!("vector {v}: output out of bounds at S={x}"),
            )?;
            // lower success never explores less
            ensure(
                eps_lower[i] >= eps[i] - EXACT
                    && ga_eps_lower[i] >= ga_eps[i] - EXACT
                    && ga_sigma_lower[i] >= ga_sigma[i] - EXACT
                    && scale_lower[i] >= scale[i] - EXACT,
                || format!("vector {v}: not monotone between {} and {x}", lower[i]),
            )?;
        }

        // polyak averaging: one step by hand, then convergence to a
        // constant input at the geometric rate
        let tau = rng.random_range(0.01..=1.0);
        let mut tracker = SuccessTracker::new(n, tau).map_err(|e| e.to_string())?;
        let start: Vec<f64> = (0..n).map(|_| rate(&mut rng)).collect();
        tracker.update(&start).map_err(|e| e.to_string())?;
        for i in 0..n {
            ensure(
                (tracker.averaged()[i] - tau * start[i]).abs() <= EXACT,
                || format!("vector {v}: first polyak step wrong"),
            )?;
        }
        let mut prev = tracker.averaged().to_vec();
        for step in 0..200 {
            tracker.update(&s).map_err(|e| e.to_string())?;
            for i in 0..n {
                let want = (1.0 - tau) * prev[i] + tau * s[i];
                let got = tracker.averaged()[i];
                ensure((got - want).abs() <= EXACT, || {
                    format!("vector {v}: polyak step {step} gives {got}, expected {want}")
                })?;
                ensure((0.0..=1.0).contains(&got), || {
                    format!("vector {v}: average left [0, 1]")
                })?;
                ensure((got - s[i]).abs() <= (prev[i] - s[i]).abs() + EXACT, || {
                    format!("vector {v}: average moved away from its fixed point")
                })?;
            }
            prev = tracker.averaged().to_vec();
        }
        let bound = (1.0 - tau).powi(200) + 1e-9;
        for i in 0..n {
            ensure((prev[i] - s[i]).abs() <= bound, || {
                format!("vector {v}: no convergence to {} (at {})", s[i], prev[i])
            })?;
        }
        ensure(tracker.update(&vec![0.5; n + 1]).is_err(), || {
            format!("vector {v}: wrong-length update accepted")
        })?;
        ensure(tracker.update(&vec![1.5; n]).is_err(), || {
            format!("vector {v}: rate above 1 accepted")
        })?;
        entries += n;
    }
    Ok(Report { vectors, entries })
}
