// Regenerates the synthetic example datasets shipped under data/.
//
//   cargo run -p pgjsb-core --release --example synthetic_datasets -- data

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use pgjsb::simulation::{simulate_dataset, StudyConfig};
use pgjsb::{KernelFamily, LinkTransform, Rpgjsb1Params};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEED: u64 = 20201103;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    fs::create_dir_all(&dir)?;

    let cfg = StudyConfig::paper_cell(KernelFamily::Logistic, LinkTransform::Logit, 0.5, 300, 1, SEED)?;
    let (x, _, y) = simulate_dataset(&cfg, 0)?;
    let mut out = fs::File::create(dir.join("synthetic_logistic_logit.csv"))?;
    writeln!(out, "y,x")?;
    for i in 0..y.len() {
        writeln!(out, "{},{}", y[i], x[(i, 1)])?;
    }

    // continent sizes and effect magnitudes follow the published mortality fit
    // (logistic kernel, cloglog link, q = 0.5); the values are simulated
    let beta = [-5.6835, 0.1290, 0.4749, 0.1886];
    let nu = [0.9060, 0.4294, 0.2264];
    let alpha = 0.1164_f64.exp();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let log_area = Normal::<f64>::new(11.5, 2.2)?;
    let mut conts: Vec<&str> = [("Africa-Asia-Oceania", 56), ("America", 28), ("Europe", 39)]
        .iter()
        .flat_map(|&(c, k)| std::iter::repeat_n(c, k))
        .collect();
    // interleave deterministically, keeping the reference level first
    let mut order: Vec<usize> = (1..conts.len()).collect();
    order.sort_by_key(|&i| (i * 7919) % 123);
    let first = conts.remove(0);
    let conts: Vec<&str> = std::iter::once(first)
        .chain(order.iter().map(|&i| conts[i - 1]))
        .collect();

    let mut out = fs::File::create(dir.join("synthetic_covid.csv"))?;
    writeln!(out, "country,cont,surface,mort")?;
    for (i, cont) in conts.iter().enumerate() {
        let ls = log_area.sample(&mut rng).clamp(6.0, 16.6);
        let (am, eu) = (f64::from(*cont == "America"), f64::from(*cont == "Europe"));
        let eta = beta[0] + beta[1] * ls + beta[2] * am + beta[3] * eu;
        let delta = (nu[0] + nu[1] * am + nu[2] * eu).exp();
        let psi = LinkTransform::Cloglog.inverse(eta);
        let p = Rpgjsb1Params::new(psi, delta, alpha, 0.5, KernelFamily::Logistic, LinkTransform::Cloglog)?;
        let mort = p.sample(1, &mut rng)[0];
        writeln!(out, "S{:03},{},{},{}", i + 1, cont, ls.exp().round(), mort)?;
    }
    Ok(())
}
