//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WEIGHTS_K[7] * fc;
    let mut g = GK_WEIGHTS_G[3] * fc;
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += GK_WEIGHTS_K[i] * s;
        if i % 2 == 1 {
            g += GK_WEIGHTS_G[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) on a finite interval.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth > 40 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    rec(&f, a, b, tol, 0)
}

/// Richardson-extrapolated central derivative.
pub fn richardson_derivative<F: Fn(f64) -> f64>(f: F, x: f64, h0: f64) -> f64 {
    const LEVELS: usize = 5;
    let mut table = [[0.0; LEVELS]; LEVELS];
    let mut h = h0;
    for i in 0..LEVELS {
        table[i][0] = (f(x + h) - f(x - h)) / (2.0 * h);
        let mut factor = 4.0;
        for j in 1..=i {
            table[i][j] = table[i][j - 1] + (table[i][j - 1] - table[i - 1][j - 1]) / (factor - 1.0);
            factor *= 4.0;
        }
        h *= 0.5;
    }
    table[LEVELS - 1][LEVELS - 1]
}

pub fn richardson_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h0: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            richardson_derivative(
                |t| {
                    let mut v = x.to_vec();
                    v[j] = t;
                    f(&v)
                },
                x[j],
                h0,
            )
        })
        .collect()
}

/// Hessian as the Richardson derivative of the Richardson gradient.
pub fn richardson_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h0: f64) -> Vec<Vec<f64>> {
    let k = x.len();
    let mut out = vec![vec![0.0; k]; k];
    for j in 0..k {
        for l in 0..k {
            out[j][l] = richardson_derivative(
                |t| {
                    let mut v = x.to_vec();
                    v[l] = t;
                    richardson_derivative(
                        |s| {
                            let mut w = v.clone();
                            w[j] = s;
                            f(&w)
                        },
                        v[j],
                        h0,
                    )
                },
                x[l],
                h0,
            );
        }
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Total mass of a link-scale density, integrated piecewise between the
/// given breakpoints; mass beyond the outer breakpoints is added as `tails`.
pub fn piecewise_mass<F: Fn(f64) -> f64>(f: F, knots: &[f64], tol: f64, tails: f64) -> f64 {
    knots
        .windows(2)
        .map(|w| gauss_kronrod(&f, w[0], w[1], tol))
        .sum::<f64>()
        + tails
}

/// Probability levels dense in both tails (down to `1e-10`), for use as
/// quantile breakpoints.
pub fn tail_dense_levels(per_decade: usize) -> Vec<f64> {
    let steps = 9 * per_decade;
    let mut probs: Vec<f64> = (0..=steps)
        .map(|k| 10f64.powf(-10.0 + k as f64 / per_decade as f64))
        .filter(|p| *p < 0.05)
        .collect();
    probs.extend((1..19).map(|k| 0.05 * k as f64));
    let upper: Vec<f64> = probs.iter().rev().map(|p| 1.0 - p).collect();
    probs.extend(upper);
    probs
}
