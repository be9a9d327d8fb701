//! Property suites shared by the core integration tests and the acceptance target.

use rand::Rng;
use timecatcher_core::autodiff::{softplus_scalar, Tape, Tensor, Var};
use timecatcher_core::decomp::ema_decompose;
use timecatcher_core::model::{
    forward, forward_on_tape, init_parameters, volatility_mask, AblationCase, ModelConfig, Parameters,
};
use timecatcher_core::train::{kl_divergence, kl_on_tape, loss_on_tape};
use timecatcher_core::Result;

use super::*;

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

/// Every differentiable tape operation, each followed by a random projection.
pub fn op_cases() -> Vec<(&'static str, Vec<Tensor>, Build)> {
    let mut g = rng(11);
    let mut r = |s: &[usize]| random_tensor(&mut g, s, -1.5, 1.5);
    let pos = |t: Tensor| t.map(|v| v.abs() + 0.3);
    let proj = |seed: u64| move |tape: &mut Tape, v: Var| project(tape, v, seed);
    let mut cases: Vec<(&'static str, Vec<Tensor>, Build)> = Vec::new();
    macro_rules! case {
        ($name:expr, [$($t:expr),*], |$tape:ident, $v:ident| $body:expr) => {{
            let p = proj(cases.len() as u64 + 100);
            cases.push(($name, vec![$($t),*], Box::new(move |$tape: &mut Tape, $v: &[Var]| {
                let out = $body;
                p($tape, out)
            })));
        }};
    }
    case!("add", [r(&[2, 3]), r(&[2, 3])], |t, v| t.add(v[0], v[1])?);
    case!("add_broadcast", [r(&[2, 3]), r(&[3])], |t, v| t.add(v[0], v[1])?);
    case!("sub", [r(&[4]), r(&[4])], |t, v| t.sub(v[0], v[1])?);
    case!("mul", [r(&[2, 3]), r(&[2, 3])], |t, v| t.mul(v[0], v[1])?);
    case!("mul_scalar_broadcast", [r(&[2, 3]), r(&[])], |t, v| t.mul(v[0], v[1])?);
    case!("scale", [r(&[3])], |t, v| t.scale(v[0], -2.5));
    case!("neg", [r(&[3])], |t, v| t.neg(v[0]));
    case!("add_scalar", [r(&[3])], |t, v| t.add_scalar(v[0], 0.7)?);
    case!("matmul", [r(&[2, 3]), r(&[3, 4])], |t, v| t.matmul(v[0], v[1])?);
    case!("matmul_nt", [r(&[2, 3]), r(&[4, 3])], |t, v| t.matmul_nt(v[0], v[1])?);
    case!("transpose", [r(&[2, 3])], |t, v| t.transpose(v[0])?);
    case!("permute", [r(&[2, 3, 4])], |t, v| t.permute(v[0], &[2, 0, 1])?);
    case!("conv1d", [r(&[2, 2, 7]), r(&[3, 2, 3]), r(&[3])], |t, v| t.conv1d(v[0], v[1], Some(v[2]), 2, 1)?);
    case!("conv1d_nobias", [r(&[1, 3, 5]), r(&[2, 3, 2])], |t, v| t.conv1d(v[0], v[1], None, 1, 0)?);
    case!("relu", [r(&[2, 4])], |t, v| t.relu(v[0]));
    case!("softplus", [r(&[5]).map(|x| x * 20.0)], |t, v| t.softplus(v[0]));
    case!("sigmoid", [r(&[5])], |t, v| t.sigmoid(v[0]));
    case!("exp", [r(&[5])], |t, v| t.exp(v[0]));
    case!("log", [pos(r(&[5]))], |t, v| t.log(v[0])?);
    case!("abs", [r(&[5])], |t, v| t.abs(v[0]));
    case!("sum_axes", [r(&[2, 3, 4])], |t, v| t.sum(v[0], &[0, 2])?);
    case!("mean_axes", [r(&[2, 3, 4])], |t, v| t.mean(v[0], &[1])?);
    case!("reshape", [r(&[2, 6])], |t, v| t.reshape(v[0], &[3, 4])?);
    case!("slice", [r(&[2, 5, 3])], |t, v| t.slice(v[0], 1, 1, 4)?);
    case!("concat", [r(&[2, 2]), r(&[2, 3])], |t, v| t.concat(&[v[0], v[1]], 1)?);
    case!("ema_trend", [r(&[2, 6, 3])], |t, v| t.ema_trend(v[0], 0.3, 1)?);
    case!("ema_trend_last_axis", [r(&[3, 5])], |t, v| t.ema_trend(v[0], 0.8, 1)?);
    case!("kl", [r(&[3, 4]), r(&[3, 4])], |t, v| kl_on_tape(t, v[0], v[1])?);
    cases
}

/// Builds the scalar `Σ r ⊙ x̂ + KL` for a parameter list in entry order.
fn model_objective(cfg: ModelConfig, template: Parameters, x: Tensor, eps: Tensor, seed: u64) -> Build {
    Box::new(move |tape: &mut Tape, vars: &[Var]| {
        let mut it = vars.iter().copied();
        let bound = template.map(|_, _| it.next().expect("one var per entry"));
        let xv = tape.constant(x.clone())?;
        let out = forward_on_tape(tape, xv, &bound, &cfg, Some(&eps))?;
        let p = project(tape, out.x_hat, seed)?;
        match out.latent {
            Some(l) => {
                let kl = kl_on_tape(tape, l.mu, l.logvar)?;
                tape.add(p, kl)
            }
            None => Ok(p),
        }
    })
}

/// Criterion: every op and the full forward of all six branch combinations
/// agree with central differences.
pub fn gradient_suite() -> GradReport {
    let mut report = GradReport::default();
    for (name, inputs, f) in op_cases() {
        report.merge(check_gradients(name, &inputs, f));
    }
    for (k, case) in AblationCase::ALL.into_iter().enumerate() {
        let cfg = ModelConfig { seed: k as u64, ..ModelConfig::tiny() }.with_case(case);
        let mut params = init_parameters(&cfg).unwrap();
        let mut g = rng(200 + k as u64);
        // move the volatility parameters off their init so every path is exercised
        for v in params.values_mut() {
            for x in v.data_mut() {
                *x += g.random_range(-0.2..0.2);
            }
        }
        let x = random_tensor(&mut g, &[2, cfg.lookback, cfg.channels], -2.0, 2.0);
        let eps = random_tensor(&mut g, &[2, cfg.latent_dim], -1.0, 1.0);
        let inputs: Vec<Tensor> = params.entries().into_iter().map(|(_, t)| t.clone()).collect();
        let f = model_objective(cfg, params, x, eps, 300 + k as u64);
        report.merge(check_gradients(case.slug(), &inputs, f));
        // the input itself, with parameters fixed
        let cfg = ModelConfig { seed: k as u64, ..ModelConfig::tiny() }.with_case(case);
        let params = init_parameters(&cfg).unwrap();
        let x = random_tensor(&mut g, &[2, cfg.lookback, cfg.channels], -2.0, 2.0);
        let eps = random_tensor(&mut g, &[2, cfg.latent_dim], -1.0, 1.0);
        let seed = 400 + k as u64;
        let f: Build = Box::new(move |tape: &mut Tape, vars: &[Var]| {
            let bound = params.bind(tape, false)?;
            let out = forward_on_tape(tape, vars[0], &bound, &cfg, Some(&eps))?;
            project(tape, out.x_hat, seed)
        });
        report.merge(check_gradients("input", &[x], f));
    }
    // L1 training loss on a tiny full model
    let cfg = ModelConfig::tiny();
    let params = init_parameters(&cfg).unwrap();
    let mut g = rng(500);
    let x = random_tensor(&mut g, &[2, 8, 2], -2.0, 2.0);
    let y = random_tensor(&mut g, &[2, 4, 2], -2.0, 2.0);
    let eps = random_tensor(&mut g, &[2, 4], -1.0, 1.0);
    let inputs: Vec<Tensor> = params.entries().into_iter().map(|(_, t)| t.clone()).collect();
    let f: Build = Box::new(move |tape: &mut Tape, vars: &[Var]| {
        let mut it = vars.iter().copied();
        let bound = params.map(|_, _| it.next().unwrap());
        let xv = tape.constant(x.clone())?;
        let out = forward_on_tape(tape, xv, &bound, &cfg, Some(&eps))?;
        loss_on_tape(tape, &out, &y, 1e-3)
    });
    report.merge(check_gradients("loss", &inputs, f));
    report
}

/// Closed-form checks: KL cases, KL vs sampling, EMA reconstruction, softplus(0).
/// Returns a list of failure messages (empty on success).
pub fn closed_form_suite() -> Vec<String> {
    let mut fails = Vec::new();
    let one = |v: f64| Tensor::full([1, 1], v);
    for (mu, lv, want) in [(0.0, 0.0, 0.0), (1.0, 0.0, 0.5), (0.0, 1.0, 0.5 * (std::f64::consts::E - 2.0))] {
        let got = kl_divergence(&one(mu), &one(lv)).unwrap();
        if (got - want).abs() > 1e-12 {
            fails.push(format!("kl(mu={mu}, logvar={lv}) = {got}, want {want}"));
        }
    }
    let mut g = rng(21);
    for trial in 0..3 {
        let mu = random_tensor(&mut g, &[2, 4], -1.5, 1.5);
        let lv = random_tensor(&mut g, &[2, 4], -1.0, 1.0);
        let exact = kl_divergence(&mu, &lv).unwrap();
        let mc = monte_carlo_kl(mu.data(), lv.data(), 2, 100_000, 700 + trial);
        if (mc - exact).abs() > 0.02 * exact.abs() {
            fails.push(format!("Monte-Carlo KL {mc} vs closed form {exact} (trial {trial})"));
        }
    }
    for alpha in [0.05, 0.3, 0.9, 1.0] {
        let x = random_tensor(&mut g, &[3, 50, 2], -1e3, 1e3);
        let d = ema_decompose(&x, alpha, 1).unwrap();
        // exact up to the single rounding of the subtraction that forms the seasonal part
        for i in 0..x.len() {
            let (s, t) = (d.seasonal.data()[i], d.trend.data()[i]);
            if (s + t - x.data()[i]).abs() > f64::EPSILON * s.abs().max(t.abs()) {
                fails.push(format!("seasonal + trend != x at {i} (alpha {alpha})"));
                break;
            }
        }
        let col: Vec<f64> = (0..50).map(|t| x.at(&[1, t, 1])).collect();
        let naive = naive_ema(&col, alpha);
        if (0..50).any(|t| (naive[t] - d.trend.at(&[1, t, 1])).abs() > 1e-9) {
            fails.push(format!("EMA trend differs from the recurrence (alpha {alpha})"));
        }
    }
    let sp = softplus_scalar(0.0);
    if (sp - std::f64::consts::LN_2).abs() > 1e-12 {
        fails.push(format!("softplus(0) = {sp}"));
    }
    fails
}

/// Additivity of branch outputs over `inputs_per_case` random inputs for each
/// of the six configurations. Returns the worst residual and any failure.
pub fn additivity_suite(inputs_per_case: usize) -> (f64, Vec<String>) {
    let mut fails = Vec::new();
    let mut worst: f64 = 0.0;
    let mut g = rng(31);
    for case in AblationCase::ALL {
        let cfg = ModelConfig::tiny().with_case(case);
        let mut params = init_parameters(&cfg).unwrap();
        for v in params.values_mut() {
            for x in v.data_mut() {
                *x += g.random_range(-0.3..0.3);
            }
        }
        let (t, l, v) = case.flags();
        for i in 0..inputs_per_case {
            let b = 1 + i % 3;
            let scale = [0.1, 1.0, 10.0][i % 3];
            let x = random_tensor(&mut g, &[b, cfg.lookback, cfg.channels], -scale, scale);
            let out = forward(&x, &params, &cfg, &mut g, i % 2 == 0).unwrap();
            for k in 0..out.x_hat.len() {
                let sum = out.branch_trend.data()[k] + out.branch_latent.data()[k] + out.branch_emphasis.data()[k];
                let r = (out.x_hat.data()[k] - sum).abs();
                worst = worst.max(r);
                if r > 1e-9 {
                    fails.push(format!("{case}: x_hat differs from branch sum by {r}"));
                }
            }
            for (on, branch, name) in [
                (t, &out.branch_trend, "trend"),
                (l, &out.branch_latent, "latent"),
                (v, &out.branch_emphasis, "emphasis"),
            ] {
                if !on && branch.data().iter().any(|&x| x != 0.0) {
                    fails.push(format!("{case}: disabled {name} branch is non-zero"));
                }
            }
            if fails.len() > 10 {
                return (worst, fails);
            }
        }
    }
    (worst, fails)
}

/// Volatility semantics: brute-force agreement, zero emphasis for a constant
/// latent forecast, monotonicity in τ. Returns failure messages.
pub fn volatility_suite() -> Vec<String> {
    let mut fails = Vec::new();
    let mut g = rng(41);
    // hand-built series: steps, ramps, spikes and plateaus, plus random ones
    let mut cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
        (vec![0.0, 10.0, 5.0], vec![0.0, 2.0, 2.5, 3.0]),
        (vec![1.0, 1.0, 2.0, 0.0], vec![0.0, 0.0, 5.0, 5.0, 5.0, -1.0]),
        (vec![-3.0, 3.0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]),
        (vec![0.0, 1.0], vec![0.0, 0.3, 0.0, 0.3, 0.0]),
        (vec![2.0, 2.0, 2.0], vec![1.0, 1.0, 1.5, 1.0]),
    ];
    for _ in 0..40 {
        let l = g.random_range(2..12);
        let h = g.random_range(2..10);
        // quantised values make ties and exact thresholds likely
        let input: Vec<f64> = (0..l).map(|_| g.random_range(-4..5) as f64 * 0.5).collect();
        let fc: Vec<f64> = (0..h).map(|_| g.random_range(-4..5) as f64 * 0.25).collect();
        cases.push((input, fc));
    }
    for (ci, (input, fc)) in cases.iter().enumerate() {
        for window in 1..=fc.len() {
            for tau in [0.05, 0.1, 0.2, 0.25, 0.5, 0.9] {
                let x = Tensor::new([1, input.len(), 1], input.clone()).unwrap();
                let f = Tensor::new([1, fc.len(), 1], fc.clone()).unwrap();
                let m = volatility_mask(&x, &f, window, tau).unwrap();
                let oracle = brute_force_mask(input, fc, window, tau);
                for (t, (a, d, k)) in oracle.into_iter().enumerate() {
                    if m.amplitude.data()[t] != a || m.direction.data()[t] != d || m.mask.data()[t] != k {
                        fails.push(format!("case {ci} w={window} tau={tau} t={t}: mask disagrees with brute force"));
                    }
                }
            }
        }
    }
    // monotone non-increasing in tau
    for _ in 0..50 {
        let x = random_tensor(&mut g, &[2, 10, 3], -2.0, 2.0);
        let f = random_tensor(&mut g, &[2, 6, 3], -1.0, 1.0);
        let mut prev: Option<Tensor> = None;
        for k in 1..20 {
            let tau = k as f64 * 0.05;
            let m = volatility_mask(&x, &f, 3, tau).unwrap().mask;
            if let Some(p) = &prev {
                if m.data().iter().zip(p.data()).any(|(now, before)| now > before) {
                    fails.push(format!("mask grew when tau rose to {tau}"));
                }
            }
            prev = Some(m);
        }
    }
    // constant latent forecast → zero emphasis, whatever the volatility parameters
    let cfg = ModelConfig::tiny();
    let mut params = init_parameters(&cfg).unwrap();
    {
        let lat = params.latent.as_mut().unwrap();
        let last = lat.decoder.last_mut().unwrap();
        last.weight = Tensor::zeros(last.weight.shape().to_vec());
        last.bias = Tensor::full(last.bias.shape().to_vec(), 0.7);
        let vol = params.volatility.as_mut().unwrap();
        vol.gamma = Tensor::scalar(1.3);
        vol.g_bias = Tensor::from_vec(vec![0.4, -0.9]);
    }
    for _ in 0..20 {
        let x = random_tensor(&mut g, &[3, 8, 2], -2.0, 2.0);
        let out = forward(&x, &params, &cfg, &mut g, true).unwrap();
        if out.branch_emphasis.data().iter().any(|&v| v != 0.0) {
            fails.push("constant latent forecast produced non-zero emphasis".into());
            break;
        }
    }
    fails
}
