// Development probe: prints calibrated lambda range, score separation, and
// selection behavior on the desk-scale synthetic setting.

use grip_cli::config::{synthetic_profile, Method};
use grip_cli::pipeline::{derive_stream, prepare_data};
use grip_core::filter::{self, KnockoffStats};
use grip_core::grip::{self};
use grip_core::nn;
use grip_core::{datagen, knockoffs};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let width: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let calibrate: bool = args.get(3).map(|s| s == "cal").unwrap_or(true);
    let lmin_arg: Option<f64> = args.get(4).and_then(|s| s.parse().ok());
    let lmax_arg: Option<f64> = args.get(5).and_then(|s| s.parse().ok());

    let mut cfg = synthetic_profile();
    cfg.method = Method::Grip2;
    cfg.synthetic.n = 2000;
    cfg.synthetic.p = 100;
    cfg.synthetic.rho = 0.4;
    cfg.synthetic.snr = 1.0;
    cfg.bss.total_steps = steps;
    cfg.bss.block_size = 25;
    cfg.bss.warmup_steps = 200;
    cfg.bss.batch_size = 128;
    cfg.bss.net.width = width;
    cfg.bss.net.depth = 1;
    cfg.base_seed = 11;

    let prepared = prepare_data(&cfg).unwrap();
    let spec = &cfg.synthetic;
    let mut design_rng = derive_stream(cfg.base_seed, Some(0), "design");
    let (x, sigma) = datagen::ar1_design(spec.n, spec.p, spec.rho, &mut design_rng);
    let support: Vec<usize> = prepared.truth.iter().copied().collect();
    let (y, _, _) = datagen::single_index_response(
        &x.view(),
        &support,
        &mut derive_stream(cfg.base_seed, None, "beta"),
        &mut derive_stream(cfg.base_seed, Some(0), "noise"),
        spec.snr,
    )
    .unwrap();
    let model = knockoffs::build_gaussian_model(sigma).unwrap();
    let x_tilde = knockoffs::sample_gaussian_knockoffs(
        &x.view(),
        &model,
        &mut derive_stream(cfg.base_seed, Some(0), "knockoff"),
    )
    .unwrap();
    let data = knockoffs::augment(x, x_tilde, y).unwrap();

    let mut bss = cfg.bss.clone();
    bss.net.input_dim = 2 * data.p();
    if calibrate {
        let mut calib_rng = derive_stream(cfg.base_seed, Some(0), "calibrate");
        let (lmin, lmax) =
            grip::calibrate_lambda_range(&data, &bss.net, 0.01, 0.2, 200, &mut calib_rng).unwrap();
        println!("calibrated lambda range: [{lmin:.4e}, {lmax:.4e}]");
        bss.prior.lambda_min = lmin;
        bss.prior.lambda_max = lmax;
    }
    if let (Some(a), Some(b)) = (lmin_arg, lmax_arg) {
        bss.prior.lambda_min = a;
        bss.prior.lambda_max = b;
        println!("forced lambda range: [{a:.4e}, {b:.4e}]");
    }

    let mut init_rng = derive_stream(cfg.base_seed, Some(0), "model-init");
    let params0 = nn::init_params(&bss.net, &mut init_rng).unwrap();
    let mut sched_rng = derive_stream(cfg.base_seed, Some(0), "schedule");
    let (scores, diags) =
        grip::bss_train_with_diagnostics(&data, &bss, params0, &mut sched_rng).unwrap();

    for d in diags.iter().take(8) {
        println!(
            "block {:3}: lambda={:.3e} a={:.2} loss={:.4} ratio={:.3}",
            d.block, d.lambda, d.a, d.loss, d.grad_ratio
        );
    }
    if diags.len() > 8 {
        let d = diags.last().unwrap();
        println!(
            "block {:3}: lambda={:.3e} a={:.2} loss={:.4} ratio={:.3}",
            d.block, d.lambda, d.a, d.loss, d.grad_ratio
        );
    }

    let p = data.p();
    let truth = &prepared.truth;
    let s = &scores.s_hat;
    let mean_signal: f64 =
        truth.iter().map(|&j| s[j]).sum::<f64>() / truth.len() as f64;
    let mean_null: f64 = (0..p)
        .filter(|j| !truth.contains(j))
        .map(|j| s[*&j])
        .sum::<f64>()
        / (p - truth.len()) as f64;
    let mean_ko: f64 = (p..2 * p).map(|j| s[j]).sum::<f64>() / p as f64;
    println!("mean S: signal={mean_signal:.4} null={mean_null:.4} knockoff={mean_ko:.4}");

    let w = filter::knockoff_stats(&scores, p).unwrap();
    let mut w_signal: Vec<f64> = truth.iter().map(|&j| w[j]).collect();
    w_signal.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut w_null: Vec<f64> = (0..p).filter(|j| !truth.contains(j)).map(|j| w[j]).collect();
    w_null.sort_by(|a, b| b.partial_cmp(a).unwrap());
    println!(
        "W signal: max={:.4} median={:.4} min={:.4}",
        w_signal[0],
        w_signal[w_signal.len() / 2],
        w_signal[w_signal.len() - 1]
    );
    println!(
        "W null:   max={:.4} median={:.4} min={:.4}",
        w_null[0],
        w_null[w_null.len() / 2],
        w_null[w_null.len() - 1]
    );

    for q in [0.1, 0.2, 0.3] {
        let stats = KnockoffStats::new(w.clone(), q, 1).unwrap();
        let sel = filter::select(stats);
        let hits = sel.selected.iter().filter(|j| truth.contains(j)).count();
        println!(
            "q={q}: selected {} ({} true) tau={:.4}",
            sel.selected.len(),
            hits,
            sel.threshold
        );
    }
}
