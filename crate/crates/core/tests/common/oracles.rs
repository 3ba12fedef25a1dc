//! Reference computations the library is checked against. Nothing here calls
//! into the code it verifies except to read parameters or produce data.

#![allow(dead_code)]

use circumnav::geometry::{perpendicular_cw, unit_bearing, Vec2};
use circumnav::neural::{mse_loss, Adam, BackwardScratch, LstmParams, Trace};
use circumnav::rng::{derive, Purpose, SimRng};
use circumnav::training::{collect_iteration_dataset, initial_model, Dataset};
use circumnav::RunConfig;
use rand::Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Straightforward LSTM written from the textbook equations, reading weights
/// by explicit index arithmetic on the flat parameter vector.
///
/// Returns the read-out and every `(h_t, c_t)` pair.
pub fn reference_lstm(p: &LstmParams, inputs: &[f64]) -> (Vec<f64>, Vec<(Vec<f64>, Vec<f64>)>) {
    let (ni, nh, no) = (p.input_size(), p.hidden_size(), p.output_size());
    let theta = p.as_slice();
    let w_off = 0;
    let u_off = 4 * nh * ni;
    let b_off = u_off + 4 * nh * nh;
    let fw_off = b_off + 4 * nh;
    let fb_off = fw_off + no * nh;
    let w = |row: usize, col: usize| theta[w_off + row * ni + col];
    let u = |row: usize, col: usize| theta[u_off + row * nh + col];

    let mut h = vec![0.0; nh];
    let mut c = vec![0.0; nh];
    let mut states = Vec::new();
    for x in inputs.chunks(ni) {
        let pre = |gate: usize, k: usize, h: &[f64]| {
            let row = gate * nh + k;
            let mut s = theta[b_off + row];
            for (j, xj) in x.iter().enumerate() {
                s += w(row, j) * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                s += u(row, j) * hj;
            }
            s
        };
        let mut h_new = vec![0.0; nh];
        let mut c_new = vec![0.0; nh];
        for k in 0..nh {
            let i = sigmoid(pre(0, k, &h));
            let f = sigmoid(pre(1, k, &h));
            let g = pre(2, k, &h).tanh();
            let o = sigmoid(pre(3, k, &h));
            c_new[k] = f * c[k] + i * g;
            h_new[k] = o * c_new[k].tanh();
        }
        h = h_new;
        c = c_new;
        states.push((h.clone(), c.clone()));
    }
    let y = (0..no)
        .map(|r| theta[fb_off + r] + (0..nh).map(|k| theta[fw_off + r * nh + k] * h[k]).sum::<f64>())
        .collect();
    (y, states)
}

fn loss_at(p: &LstmParams, x: &[f64], target: &[f64]) -> f64 {
    let (y, _) = reference_lstm(p, x);
    y.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

pub const FD_EPS: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

/// Worst relative error of the analytic gradient against central differences
/// for one random network, plus the tensor it occurred in.
pub fn finite_difference_check(seed: u64, hidden: usize, steps: usize) -> (f64, &'static str) {
    let mut rng = derive(seed, Purpose::ModelInit, 99, 0);
    let mut p = LstmParams::init(4, hidden, 4, &mut rng);
    // Spread the weights beyond the init range so every gate is exercised.
    for v in p.as_mut_slice() {
        *v += rng.random_range(-0.5..0.5);
    }
    let x: Vec<f64> = (0..steps * 4).map(|_| rng.random_range(-1.5..1.5)).collect();
    let target: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut trace = Trace::default();
    p.forward_trace(&x, &mut trace).unwrap();
    let (_, dy) = mse_loss(trace.output(), &target);
    let mut g = p.zeros_like();
    p.backward(&x, &trace, &dy, &mut g, &mut BackwardScratch::default()).unwrap();

    let mut worst = (0.0, "");
    for (name, range) in p.tensor_ranges() {
        for j in range {
            let orig = p.as_slice()[j];
            p.as_mut_slice()[j] = orig + FD_EPS;
            let up = loss_at(&p, &x, &target);
            p.as_mut_slice()[j] = orig - FD_EPS;
            let down = loss_at(&p, &x, &target);
            p.as_mut_slice()[j] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let analytic = g.as_slice()[j];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            if rel > worst.0 {
                worst = (rel, name);
            }
        }
    }
    worst
}

/// Configuration for a small closed-loop dataset with window `l`.
pub fn small_config(window: usize, hidden: usize, samples: usize) -> RunConfig {
    let mut c = RunConfig::desk();
    c.controller.window = window;
    c.model.hidden = hidden;
    c.training.iterations = 4;
    c.training.samples_per_iteration = samples;
    c.training.episode_steps = window + 1 + samples.div_ceil(4).max(1);
    c.training.epochs = 1;
    c.training.batch_size = 16;
    c
}

/// Closed-loop samples with ground-truth targets.
pub fn closed_loop_dataset(window: usize, samples: usize, seed: u64) -> Dataset {
    let mut c = small_config(window, 4, samples);
    c.run.seed = seed;
    let model = initial_model(&c);
    collect_iteration_dataset(&c, &model, 0).unwrap().0
}

/// Full-batch Adam on `data` for `steps` steps; returns the final mean loss.
pub fn fit(p: &mut LstmParams, data: &Dataset, steps: usize, lr: f64, scale: [f64; 4]) -> f64 {
    let mut adam = Adam::for_params(p, lr);
    let mut trace = Trace::default();
    let mut scratch = BackwardScratch::default();
    let windows: Vec<Vec<f64>> = (0..data.len()).map(|i| data.window(i).concat()).collect();
    let targets: Vec<Vec<f64>> = (0..data.len())
        .map(|i| data.target(i).iter().zip(scale).map(|(t, s)| t / s).collect())
        .collect();
    let mut loss = f64::INFINITY;
    for _ in 0..=steps {
        let mut g = p.zeros_like();
        let mut total = 0.0;
        for (x, t) in windows.iter().zip(&targets) {
            p.forward_trace(x, &mut trace).unwrap();
            let (l, dy) = mse_loss(trace.output(), t);
            total += l;
            p.backward(x, &trace, &dy, &mut g, &mut scratch).unwrap();
        }
        loss = total / windows.len() as f64;
        g.scale(1.0 / windows.len() as f64);
        // the last pass only measures
        if adam.steps_taken() as usize == steps {
            break;
        }
        adam.step(p, &g).unwrap();
    }
    loss
}

pub const GEOMETRY_TOL: f64 = 1e-9;

/// Check the geometry invariants over `n` random position pairs. Returns the
/// first violation.
pub fn geometry_invariants(n: usize, rng: &mut SimRng) -> Result<(), String> {
    for k in 0..n {
        let scale = 10f64.powf(rng.random_range(-3.0..4.0));
        let a = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
        let b = a + Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
        if (a - b).norm() < 1e-6 {
            continue;
        }
        let phi = unit_bearing(a, b).map_err(|e| format!("case {k}: {e}"))?;
        let d = phi.dir();
        if (d.norm() - 1.0).abs() > GEOMETRY_TOL {
            return Err(format!("case {k}: |phi| = {}", d.norm()));
        }
        // points from agent to target
        let expected = (a - b) / (a - b).norm();
        if (d - expected).norm() > GEOMETRY_TOL {
            return Err(format!("case {k}: bearing direction off by {}", (d - expected).norm()));
        }
        let p = perpendicular_cw(phi).dir();
        if (p.norm() - d.norm()).abs() > 1e-12 || d.dot(p).abs() > 1e-12 {
            return Err(format!("case {k}: perpendicular not an isometry ({}, {})", p.norm(), d.dot(p)));
        }
        if (d.cross(p) + 1.0).abs() > GEOMETRY_TOL {
            return Err(format!("case {k}: perpendicular not clockwise"));
        }
        let mut q = phi;
        for _ in 0..4 {
            q = perpendicular_cw(q);
        }
        if (q.dir() - d).norm() > 1e-12 {
            return Err(format!("case {k}: four quarter turns drift by {}", (q.dir() - d).norm()));
        }
        // translation invariance
        let shift = Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale;
        let moved = unit_bearing(a + shift, b + shift).map_err(|e| format!("case {k}: {e}"))?;
        if (moved.dir() - d).norm() > 1e-6 {
            return Err(format!("case {k}: bearing changes under translation"));
        }
        if !(d.is_finite() && p.is_finite()) {
            return Err(format!("case {k}: non-finite output"));
        }
    }
    Ok(())
}
