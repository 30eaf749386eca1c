use deconv_core::degrade::{degrade, DegradationSpec};
use deconv_core::dikp::{dikp_deconv, DikpConfig};
use deconv_core::kernel::{KernelKind, KernelSpec};
use deconv_core::metrics::psnr;
use deconv_core::synth;

fn main() {
    for name in ["lena", "boat"] {
        let orig = synth::synth_image(name, 1, 64, 0).unwrap();
        let spec = DegradationSpec::new(KernelSpec::new(KernelKind::Gaussian), 0.01, 1);
        let b = degrade(&orig, &spec).unwrap();
        let k = spec.kernel.build().unwrap();
        let obs = psnr(&b, &orig, 1.0).unwrap();
        println!("{name}: obs {obs:.3}");
        for (ps, ich, iters) in [(0.03, 16, 1500), (0.01, 16, 1500), (0.06, 16, 1500), (0.03, 32, 1500), (0.03, 16, 3000)] {
            let mut cfg = DikpConfig::kernel_known(1, (64, 64), 7);
            cfg.image_net = cfg.image_net.with_filters(16).with_input_channels(ich);
            cfg.iters = iters;
            cfg.perturb_sigma = ps;
            let r = dikp_deconv(&b, &k, &cfg).unwrap();
            let dp = psnr(&r.image, &orig, 1.0).unwrap();
            println!("  ps={ps} ich={ich} iters={iters}: dikp {dp:.3} gain {:+.3} (best E {:.2e} @ {})", dp - obs, r.trace[r.best_iter], r.best_iter);
        }
    }
}
