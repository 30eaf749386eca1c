use deconv_core::degrade::{degrade, DegradationSpec};
use deconv_core::dikp::{dikp_deconv, DikpConfig};
use deconv_core::kernel::{KernelKind, KernelSpec};
use deconv_core::metrics::psnr;
use deconv_core::synth;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let filters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);
    let iters: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let kind = match args.get(3).map(|s| s.as_str()) {
        Some("defocus") => KernelKind::Defocus,
        Some("motion") => KernelKind::Motion,
        _ => KernelKind::Gaussian,
    };
    let mut sum_obs = 0.0;
    let mut sum_dikp = 0.0;
    for (name, d) in synth::STANDARD_NAMES {
        let orig = synth::synth_image(name, d, 64, 0).unwrap();
        let spec = DegradationSpec::new(KernelSpec::new(kind), 0.01, 1);
        let b = degrade(&orig, &spec).unwrap();
        let k = spec.kernel.build().unwrap();
        let obs = psnr(&b, &orig, 1.0).unwrap();
        let mut cfg = DikpConfig::kernel_known(d, (64, 64), 7);
        cfg.image_net = cfg.image_net.with_filters(filters).with_input_channels(16);
        cfg.iters = iters;
        let r = dikp_deconv(&b, &k, &cfg).unwrap();
        let dp = psnr(&r.image, &orig, 1.0).unwrap();
        println!("{name:10} d={d}: obs {obs:6.3}  dikp {dp:6.3}  gain {:+.3}", dp - obs);
        sum_obs += obs;
        sum_dikp += dp;
    }
    println!("MEAN: obs {:.3} dikp {:.3} gain {:+.3}", sum_obs / 6.0, sum_dikp / 6.0, (sum_dikp - sum_obs) / 6.0);
}
