use deconv_core::baseline::{tv_deconv, BaselineConfig};
use deconv_core::degrade::{degrade, DegradationSpec};
use deconv_core::dikp::{dikp_deconv, DikpConfig};
use deconv_core::kernel::{KernelKind, KernelSpec};
use deconv_core::metrics::psnr;
use deconv_core::synth;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let filters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let iters: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(600);
    let kind = match args.get(3).map(|s| s.as_str()) {
        Some("gaussian") => KernelKind::Gaussian,
        Some("defocus") => KernelKind::Defocus,
        _ => KernelKind::Motion,
    };
    let name = args.get(4).cloned().unwrap_or_else(|| "cameraman".into());

    let orig = synth::synth_image(&name, 1, 64, 0).unwrap();
    let spec = DegradationSpec::new(KernelSpec::new(kind), 0.01, 1);
    let b = degrade(&orig, &spec).unwrap();
    let k = spec.kernel.build().unwrap();
    println!("observation PSNR: {:.3}", psnr(&b, &orig, 1.0).unwrap());

    let t0 = Instant::now();
    let mut cfg = DikpConfig::kernel_known(1, (64, 64), 7);
    cfg.image_net = cfg.image_net.with_filters(filters).with_input_channels(16);
    cfg.iters = iters;
    let r = dikp_deconv(&b, &k, &cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "dikp filters={filters} iters={iters}: PSNR {:.3}, best energy {:.2e} @ {}, {:.1}s ({:.1} ms/iter)",
        psnr(&r.image, &orig, 1.0).unwrap(),
        r.trace[r.best_iter],
        r.best_iter,
        dt,
        1000.0 * dt / iters as f64
    );

    let t1 = Instant::now();
    let cfg_tv = BaselineConfig::kernel_known();
    let (xtv, _) = tv_deconv(&b, &k, &cfg_tv).unwrap();
    println!(
        "tv baseline: PSNR {:.3}, {:.1}s",
        psnr(&xtv, &orig, 1.0).unwrap(),
        t1.elapsed().as_secs_f64()
    );
}
