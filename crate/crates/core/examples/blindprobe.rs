use deconv_core::degrade::{degrade, DegradationSpec};
use deconv_core::dikp::{dikp_blind, DikpConfig};
use deconv_core::kernel::{KernelKind, KernelSpec};
use deconv_core::metrics::psnr;
use deconv_core::nn::HourglassConfig;
use deconv_core::synth;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let orig = synth::synth_image("cameraman", 1, 64, 0).unwrap();
    let spec = DegradationSpec::new(KernelSpec::new(KernelKind::Motion), 0.01, 1);
    let b = degrade(&orig, &spec).unwrap();
    let obs = psnr(&b, &orig, 1.0).unwrap();

    let t0 = Instant::now();
    let mut cfg = DikpConfig::blind(1, (64, 64), (9, 9), seed);
    cfg.image_net = cfg.image_net.with_filters(16).with_input_channels(16);
    cfg.kernel_net = Some(HourglassConfig::kernel((9, 9)).with_filters(16).with_input_channels(8));
    cfg.iters = iters;
    let r = dikp_blind(&b, &cfg).unwrap();
    let k = r.kernel.unwrap();
    // anti-diagonal band mass (|i + j - 8| <= 1)
    let mut band = 0.0;
    for i in 0..9 {
        for j in 0..9 {
            if (i as i64 + j as i64 - 8).abs() <= 1 {
                band += k.data()[[i, j]];
            }
        }
    }
    println!(
        "blind seed={seed} iters={iters}: obs {obs:.2} -> {:.2} PSNR, band mass {band:.3}, best E {:.2e} @ {}, {:.0}s",
        psnr(&r.image, &orig, 1.0).unwrap(),
        r.trace[r.best_iter],
        r.best_iter,
        t0.elapsed().as_secs_f64()
    );
}
