use deconv_core::dikp::{dikp_deconv, DikpConfig};
use deconv_core::kernel::Kernel;
use deconv_core::metrics::psnr;
use deconv_core::synth;
use deconv_core::degrade::{degrade, DegradationSpec};
use deconv_core::kernel::{KernelKind, KernelSpec};

fn main() {
    let orig = synth::synth_image("boat", 1, 64, 0).unwrap();
    // capacity test: delta kernel, no noise
    let delta = Kernel::delta(9, 9, (4, 4)).unwrap();
    for (f, iters) in [(16, 1500), (16, 3000), (32, 1500)] {
        let mut cfg = DikpConfig::kernel_known(1, (64, 64), 7);
        cfg.image_net = cfg.image_net.with_filters(f).with_input_channels(16);
        cfg.iters = iters;
        let r = dikp_deconv(&orig, &delta, &cfg).unwrap();
        println!("delta f={f} iters={iters}: PSNR {:.2}, best E {:.2e} @ {}", psnr(&r.image, &orig, 1.0).unwrap(), r.trace[r.best_iter], r.best_iter);
    }
    // noiseless gaussian deblur: conditioning test
    let spec = DegradationSpec::new(KernelSpec::new(KernelKind::Gaussian), 0.0, 1);
    let b = degrade(&orig, &spec).unwrap();
    let k = spec.kernel.build().unwrap();
    let obs = psnr(&b, &orig, 1.0).unwrap();
    for (f, iters) in [(16, 3000)] {
        let mut cfg = DikpConfig::kernel_known(1, (64, 64), 7);
        cfg.image_net = cfg.image_net.with_filters(f).with_input_channels(16);
        cfg.iters = iters;
        let r = dikp_deconv(&b, &k, &cfg).unwrap();
        println!("noiseless gaussian f={f}: obs {obs:.2} -> dikp {:.2}, best E {:.2e}", psnr(&r.image, &orig, 1.0).unwrap(), r.trace[r.best_iter]);
    }
}
