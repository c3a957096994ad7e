//! Analytic network gradients against central finite differences computed
//! with a separate scalar forward pass.

use a2_core::nn::{Activation, GradBundle, Matrix, NetParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-6;

/// Plain forward pass that also reports the smallest |pre-activation| seen
/// at a ReLU, so probes straddling a kink can be recognised.
fn forward(net: &NetParams, x: &[f64]) -> (Vec<f64>, f64) {
    let mut h = x.to_vec();
    let mut kink = f64::INFINITY;
    for l in net.layers() {
        let (n_in, n_out) = (l.in_dim(), l.out_dim());
        let mut next = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let mut z = l.bias()[o];
            for i in 0..n_in {
                z += l.weights()[o * n_in + i] * h[i];
            }
            next.push(match l.activation() {
                Activation::Relu => {
                    kink = kink.min(z.abs());
                    z.max(0.0)
                }
                Activation::Tanh => z.tanh(),
                Activation::Linear => z,
            });
        }
        h = next;
    }
    (h, kink)
}

fn objective(net: &NetParams, xs: &[Vec<f64>], gs: &[Vec<f64>]) -> (f64, f64) {
    let mut total = 0.0;
    let mut kink = f64::INFINITY;
    for (x, g) in xs.iter().zip(gs) {
        let (y, k) = forward(net, x);
        total += y.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
        kink = kink.min(k);
    }
    (total, kink)
}

fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_TOL || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

fn random_net(rng: &mut ChaCha8Rng) -> NetParams {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=5)];
    for _ in 0..depth {
        sizes.push(rng.random_range(1..=6));
    }
    let acts: Vec<Activation> = (0..depth)
        .map(|i| {
            if i + 1 == depth {
                [Activation::Tanh, Activation::Linear][rng.random_range(0..2)]
            } else {
                [Activation::Relu, Activation::Tanh][rng.random_range(0..2)]
            }
        })
        .collect();
    NetParams::init_with_rng(&sizes, &acts, rng).expect("valid sizes")
}

fn param_mut(net: &mut NetParams, layer: usize, idx: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    let nw = l.weights().len();
    if idx < nw {
        &mut l.weights_mut()[idx]
    } else {
        &mut l.bias_mut()[idx - nw]
    }
}

fn grad_at(g: &GradBundle, layer: usize, idx: usize) -> f64 {
    let lg = &g.layers[layer];
    if idx < lg.weights.len() {
        lg.weights[idx]
    } else {
        lg.bias[idx - lg.weights.len()]
    }
}

pub struct Report {
    pub nets: usize,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub worst_rel: f64,
}

/// Checks single-sample and batched parameter gradients plus input
/// gradients on `nets` random networks.
pub fn run(nets: usize, seed: u64) -> Result<Report, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = Report {
        nets,
        checked: 0,
        skipped_kinks: 0,
        worst_rel: 0.0,
    };
    for n in 0..nets {
        let mut net = random_net(&mut rng);
        let batch = rng.random_range(1..=4);
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..net.in_dim())
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect()
            })
            .collect();
        let gs: Vec<Vec<f64>> = (0..batch)
            .map(|_| {
                (0..net.out_dim())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();

        let mut single = GradBundle::zeros_like(&net);
        let mut input_grads = Vec::new();
        for (x, g) in xs.iter().zip(&gs) {
            let (gb, gi) = net.backprop_with_input(x, g).map_err(|e| e.to_string())?;
            single.add_assign(&gb).map_err(|e| e.to_string())?;
            input_grads.push(gi);
        }
        let xm = Matrix::from_rows(&xs).map_err(|e| e.to_string())?;
        let gm = Matrix::from_rows(&gs).map_err(|e| e.to_string())?;
        let trace = net.forward_batch(&xm).map_err(|e| e.to_string())?;
        let (batched, batched_input) = net
            .backward_batch(&trace, &gm, true)
            .map_err(|e| e.to_string())?;
        let batched_input = batched_input.ok_or("no input gradient returned")?;

        let (_, kink) = objective(&net, &xs, &gs);
        let near_kink = kink < 10.0 * H;
        for li in 0..net.layers().len() {
            let count = net.layers()[li].weights().len() + net.layers()[li].bias().len();
            for idx in 0..count {
                let orig = *param_mut(&mut net, li, idx);
                *param_mut(&mut net, li, idx) = orig + H;
                let (up, k_up) = objective(&net, &xs, &gs);
                *param_mut(&mut net, li, idx) = orig - H;
                let (down, k_down) = objective(&net, &xs, &gs);
                *param_mut(&mut net, li, idx) = orig;
                if near_kink || k_up < 10.0 * H || k_down < 10.0 * H {
                    rep.skipped_kinks += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * H);
                for (what, g) in [("single", &single), ("batched", &batched)] {
                    let a = grad_at(g, li, idx);
                    if !close(a, numeric) {
                        return Err(format!(
                            "net {n} layer {li} param {idx} ({what}): analytic {a:e} vs numeric {numeric:e}"
                        ));
                    }
                    let scale = a.abs().max(numeric.abs());
                    if scale > ABS_TOL {
                        rep.worst_rel = rep.worst_rel.max((a - numeric).abs() / scale);
                    }
                }
                rep.checked += 1;
            }
        }
        for (s, x) in xs.iter().enumerate() {
            for i in 0..x.len() {
                let mut probe = xs.clone();
                probe[s][i] = x[i] + H;
                let (up, k_up) = objective(&net, &probe, &gs);
                probe[s][i] = x[i] - H;
                let (down, k_down) = objective(&net, &probe, &gs);
                if near_kink || k_up < 10.0 * H || k_down < 10.0 * H {
                    rep.skipped_kinks += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * H);
                for a in [input_grads[s][i], batched_input.get(s, i)] {
                    if !close(a, numeric) {
                        return Err(format!(
                            "net {n} input ({s}, {i}): analytic {a:e} vs numeric {numeric:e}"
                        ));
                    }
                }
                rep.checked += 1;
            }
        }
    }
    Ok(rep)
}
