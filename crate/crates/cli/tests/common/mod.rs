#![allow(dead_code)]

use std::path::{Path, PathBuf};

use assert_cmd::Command;
use ockelm_core::dataset::ALFA_FEATURES;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn ockelm() -> Command {
    Command::cargo_bin("ockelm").unwrap()
}

pub fn uci(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/uci").join(name)
}

/// Channels whose mean moves by two marginal standard deviations after the fault.
pub const FAULTY: [usize; 4] = [2, 6, 11, 15];

/// Synthetic flight log: a slow three-factor Gaussian state drives all 18
/// channels plus sensor noise; each channel is read at its own jittered
/// rate. Writes one `t,value` CSV per channel and a `flight.toml` manifest.
pub fn write_flight(dir: &Path, seed: u64, duration: f64, fault_time: Option<f64>) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, k, dt, tau, noise) = (ALFA_FEATURES.len(), 3, 0.01, 2.0, 0.1);
    let mixing: Vec<f64> = (0..d * k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let spread: Vec<f64> = (0..d)
        .map(|f| ((0..k).map(|j| mixing[f * k + j].powi(2)).sum::<f64>() + noise * noise).sqrt())
        .collect();
    let steps = (duration / dt).round() as usize + 1;
    let rho = (-dt / tau).exp();
    let mut state = vec![0.0f64; k];
    let mut path = Vec::with_capacity(steps);
    for _ in 0..steps {
        for s in state.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *s = rho * *s + (1.0 - rho * rho).sqrt() * e;
        }
        path.push(state.clone());
    }
    let mut manifest = String::new();
    if let Some(t) = fault_time {
        manifest.push_str(&format!("fault_time = {t}\n"));
    }
    manifest.push_str("\n[features]\n");
    for (f, name) in ALFA_FEATURES.iter().enumerate() {
        let rate = rng.random_range(8.0..25.0);
        let mut csv = String::from("t,value\n");
        let mut t = rng.random_range(0.0..0.05);
        while t <= duration {
            let z = &path[((t / dt).round() as usize).min(steps - 1)];
            let e: f64 = StandardNormal.sample(&mut rng);
            let mut v = (0..k).map(|j| mixing[f * k + j] * z[j]).sum::<f64>() + noise * e;
            if FAULTY.contains(&f) && fault_time.is_some_and(|ft| t >= ft) {
                v += 2.0 * spread[f];
            }
            csv.push_str(&format!("{t},{v}\n"));
            t += rng.random_range(0.5..1.5) / rate;
        }
        let file = format!("{name}.csv");
        std::fs::write(dir.join(&file), csv).unwrap();
        manifest.push_str(&format!("{name} = \"{file}\"\n"));
    }
    let p = dir.join("flight.toml");
    std::fs::write(&p, manifest).unwrap();
    p
}

pub fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}
