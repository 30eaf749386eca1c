//! Implementations of the CLI subcommands. Every command resolves its
//! settings from defaults < config file < explicit flags, writes a
//! replayable manifest next to its outputs, and returns whether the
//! run had partial failures (grid commands only).

use std::path::{Path, PathBuf};

use deconv_core::baseline::{blind_tv_l1, tv_deconv, BaselineConfig};
use deconv_core::csvio::{self, ResultRow};
use deconv_core::degrade::{degrade, DegradationSpec};
use deconv_core::dikp::{
    convergence_bias_experiment, dikp_blind, dikp_deconv, gaussian_noise_image,
    uniform_noise_image,
};
use deconv_core::error::{DeconvError, Result};
use deconv_core::image::{load_image, save_image, Image};
use deconv_core::kernel::{Kernel, KernelKind, KernelSpec};
use deconv_core::metrics::{gradient_histogram, kl_divergence, psnr, KL_EPSILON};
use deconv_core::synth;

use crate::args;
use crate::config::KvConfig;
use crate::experiment::{
    self, default_image_entries, parse_image_entries, resolve_images, DikpTuning, GridSpec,
    Method,
};

fn load_base_config(path: &Option<PathBuf>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::from_file(p),
        None => Ok(KvConfig::new()),
    }
}

fn out_dir(cfg: &KvConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(cfg.get("out").unwrap_or("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn kernel_spec_from(cfg: &KvConfig) -> Result<KernelSpec> {
    let kind: KernelKind = cfg.require("kernel")?.parse()?;
    let mut spec = KernelSpec::new(kind);
    if let Some(v) = cfg.get_parsed::<usize>("kernel_h")? {
        spec.h = v;
    }
    if let Some(v) = cfg.get_parsed::<usize>("kernel_w")? {
        spec.w = v;
    }
    if let Some(v) = cfg.get_parsed::<usize>("kernel_c1")? {
        spec.c1 = v;
    }
    if let Some(v) = cfg.get_parsed::<usize>("kernel_c2")? {
        spec.c2 = v;
    }
    if let Some(v) = cfg.get_parsed::<f64>("kernel_s1")? {
        spec.s1 = v;
    }
    if let Some(v) = cfg.get_parsed::<f64>("kernel_s2")? {
        spec.s2 = v;
    }
    if let Some(v) = cfg.get_parsed::<f64>("kernel_r")? {
        spec.r = v;
    }
    if let Some(v) = cfg.get_parsed::<f64>("kernel_u")? {
        spec.u = v;
    }
    if let Some(v) = cfg.get_parsed::<f64>("kernel_angle")? {
        spec.angle = v;
    }
    Ok(spec)
}

fn baseline_config_from(cfg: &KvConfig, blind: bool) -> Result<BaselineConfig> {
    let mut b = if blind {
        BaselineConfig::blind()
    } else {
        BaselineConfig::kernel_known()
    };
    b.alpha = cfg.get_or("alpha", b.alpha)?;
    b.beta = cfg.get_or("beta", b.beta)?;
    b.outer_iters = cfg.get_or("outer_iters", b.outer_iters)?;
    b.inner_iters_x = cfg.get_or("inner_iters_x", b.inner_iters_x)?;
    b.inner_iters_k = cfg.get_or("inner_iters_k", b.inner_iters_k)?;
    b.prox_iters = cfg.get_or("prox_iters", b.prox_iters)?;
    Ok(b)
}

fn dikp_tuning_from(cfg: &KvConfig) -> Result<DikpTuning> {
    let d = DikpTuning::default();
    Ok(DikpTuning {
        filters: cfg.get_or("filters", d.filters)?,
        input_channels: cfg.get_or("input_channels", d.input_channels)?,
        iters: cfg.get_or("iters", d.iters)?,
        lr: cfg.get_or("lr", d.lr)?,
        perturb_sigma: cfg.get_or("perturb_sigma", d.perturb_sigma)?,
        track_every: cfg.get_or("track_every", d.track_every)?,
    })
}

fn image_ext(img: &Image) -> &'static str {
    if img.channels() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

// ---------------------------------------------------------------------------

/// `degrade`: blur + noise an input image, emitting the observation,
/// the kernel CSV, and a manifest that replays the run exactly.
pub fn cmd_degrade(a: &args::DegradeArgs) -> Result<()> {
    let mut cfg = load_base_config(&a.common.config)?;
    cfg.set("command", "degrade");
    cfg.set_opt("input", &a.input.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("kernel", &a.kernel);
    cfg.set_opt("sigma", &a.sigma);
    cfg.set_opt("seed", &a.common.seed);
    cfg.set_opt("out", &a.common.out.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("kernel_u", &a.kernel_u);
    cfg.set_opt("kernel_r", &a.kernel_r);
    cfg.set_opt("kernel_s1", &a.kernel_s1);
    cfg.set_opt("kernel_s2", &a.kernel_s2);

    let input = PathBuf::from(cfg.require("input")?);
    let spec = kernel_spec_from(&cfg)?;
    let sigma = cfg.get_or("sigma", 0.01)?;
    let seed = cfg.get_or("seed", 0u64)?;
    let dir = out_dir(&cfg)?;

    let img = load_image(&input)?;
    let dspec = DegradationSpec::new(spec.clone(), sigma, seed);
    let observed = degrade(&img, &dspec)?;
    let kernel = spec.build()?;

    let base = format!("{}_{}", stem_of(&input), spec.kind.name());
    save_image(&observed, dir.join(format!("{base}_degraded.{}", image_ext(&img))))?;
    csvio::write_kernel_csv(dir.join(format!("{base}_kernel.csv")), &kernel)?;

    cfg.set("sigma", sigma);
    cfg.set("seed", seed);
    cfg.set("schema_version", csvio::CSV_SCHEMA_VERSION);
    cfg.write(dir.join(format!("{base}_manifest.cfg")))?;
    Ok(())
}

/// `solve`: run one solver on one observation.
pub fn cmd_solve(a: &args::SolveArgs) -> Result<()> {
    let mut cfg = load_base_config(&a.common.config)?;
    cfg.set("command", "solve");
    cfg.set_opt("method", &a.method);
    cfg.set_opt("input", &a.input.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt(
        "kernel_csv",
        &a.kernel_csv.as_ref().map(|p| p.display().to_string()),
    );
    cfg.set_opt(
        "reference",
        &a.reference.as_ref().map(|p| p.display().to_string()),
    );
    cfg.set_opt("seed", &a.common.seed);
    cfg.set_opt("out", &a.common.out.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("crop", &a.crop);
    cfg.set_opt("alpha", &a.alpha);
    cfg.set_opt("beta", &a.beta);
    cfg.set_opt("iters", &a.iters);
    cfg.set_opt("lr", &a.lr);
    cfg.set_opt("filters", &a.filters);
    cfg.set_opt("input_channels", &a.input_channels);
    cfg.set_opt("perturb_sigma", &a.perturb_sigma);

    let method: Method = cfg.require("method")?.parse()?;
    let input = PathBuf::from(cfg.require("input")?);
    let seed = cfg.get_or("seed", 0u64)?;
    let dir = out_dir(&cfg)?;

    let mut observed = load_image(&input)?;
    if let Some(crop) = cfg.get_parsed::<usize>("crop")? {
        observed = observed.center_crop(crop)?;
    }
    let reference = match cfg.get("reference") {
        Some(p) => {
            let mut r = load_image(Path::new(p))?;
            if let Some(crop) = cfg.get_parsed::<usize>("crop")? {
                r = r.center_crop(crop)?;
            }
            Some(r)
        }
        None => None,
    };

    let needs_kernel = matches!(method, Method::Tv | Method::Dikp);
    let kernel = match cfg.get("kernel_csv") {
        Some(p) => Some(csvio::read_kernel_csv(Path::new(p))?),
        None if needs_kernel => {
            return Err(DeconvError::Config(format!(
                "method `{}` requires --kernel-csv",
                method.name()
            )))
        }
        None => None,
    };

    let (d, m, n) = observed.shape();
    let start = std::time::Instant::now();
    let mut emitted_kernel: Option<Kernel> = None;
    let (restored, energy_final) = match method {
        Method::Tv => {
            let bcfg = baseline_config_from(&cfg, false)?;
            let (x, trace) = tv_deconv(&observed, kernel.as_ref().unwrap(), &bcfg)?;
            csvio::write_trace_csv(dir.join("trace.csv"), &trace)?;
            (x, *trace.objectives.last().unwrap_or(&f64::NAN))
        }
        Method::BlindTv => {
            let bcfg = baseline_config_from(&cfg, true)?;
            let support = cfg.get_or("kernel_size", 9usize)?;
            let init = Kernel::uniform(support, support, ((support - 1) / 2, (support - 1) / 2))?;
            let (x, k, trace) = blind_tv_l1(&observed, &bcfg, &init)?;
            csvio::write_trace_csv(dir.join("trace.csv"), &trace)?;
            emitted_kernel = Some(k);
            (x, *trace.objectives.last().unwrap_or(&f64::NAN))
        }
        Method::Dikp => {
            let tuning = dikp_tuning_from(&cfg)?;
            let dcfg = tuning.to_config(d, (m, n), seed);
            let r = dikp_deconv(&observed, kernel.as_ref().unwrap(), &dcfg)?;
            csvio::write_energy_csv(dir.join("trace.csv"), &r.trace, dcfg.track_every)?;
            (r.image, r.trace[r.best_iter])
        }
        Method::BlindDikp => {
            let tuning = dikp_tuning_from(&cfg)?;
            let support = cfg.get_or("kernel_size", 9usize)?;
            let dcfg = tuning.to_blind_config(d, (m, n), (support, support), seed);
            let r = dikp_blind(&observed, &dcfg)?;
            csvio::write_energy_csv(dir.join("trace.csv"), &r.trace, dcfg.track_every)?;
            emitted_kernel = r.kernel;
            (r.image, r.trace[r.best_iter])
        }
    };
    let wall = start.elapsed().as_secs_f64();

    save_image(&restored, dir.join(format!("restored.{}", image_ext(&restored))))?;
    if let Some(k) = &emitted_kernel {
        csvio::write_kernel_csv(dir.join("kernel.csv"), k)?;
    }

    let quality = match &reference {
        Some(r) => psnr(&restored, r, 1.0)?,
        None => f64::NAN,
    };
    let row = ResultRow {
        image: stem_of(&input),
        kernel: kernel
            .as_ref()
            .map(|_| cfg.get("kernel").unwrap_or("file").to_string())
            .unwrap_or_else(|| "estimated".into()),
        method: method.name().to_string(),
        seed,
        psnr: quality,
        energy_final,
        wall_seconds: wall,
    };
    csvio::write_result_rows(dir.join("result_row.csv"), std::slice::from_ref(&row))?;

    cfg.set("seed", seed);
    cfg.set("schema_version", csvio::CSV_SCHEMA_VERSION);
    cfg.write(dir.join("manifest.cfg"))?;
    Ok(())
}

/// `table`: the full image x kernel x method grid. Returns true when
/// some cells failed (exit code 2).
pub fn cmd_table(a: &args::TableArgs) -> Result<bool> {
    let mut cfg = load_base_config(&a.common.config)?;
    cfg.set("command", "table");
    cfg.set_opt("seed", &a.common.seed);
    cfg.set_opt("out", &a.common.out.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("size", &a.size);
    cfg.set_opt("methods", &a.methods);
    cfg.set_opt("kernels", &a.kernels);
    cfg.set_opt("seeds", &a.seeds);
    cfg.set_opt("sigma", &a.sigma);
    cfg.set_opt("iters", &a.iters);
    cfg.set_opt("filters", &a.filters);

    let size = cfg.get_or("size", 64usize)?;
    let entries = match cfg.get("images") {
        Some(raw) => parse_image_entries(raw)?,
        None => default_image_entries(),
    };
    let images = resolve_images(&entries, size)?;
    let image_names: Vec<String> = images.iter().map(|(n, _)| n.clone()).collect();

    let methods: Vec<Method> = cfg
        .get("methods")
        .unwrap_or("tv,dikp")
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<Result<_>>()?;
    let kernels: Vec<KernelKind> = cfg
        .get("kernels")
        .unwrap_or("gaussian,defocus,motion")
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<Result<_>>()?;
    let seeds = cfg.get_u64_list("seeds", &[1, 2, 3])?;

    let dir = out_dir(&cfg)?;
    let mut spec = GridSpec::desk_default(images);
    spec.kernels = kernels.clone();
    spec.methods = methods.clone();
    spec.seeds = seeds;
    spec.sigma = cfg.get_or("sigma", 0.01)?;
    spec.degrade_seed = cfg.get_or("seed", 17u64)?;
    spec.dikp = dikp_tuning_from(&cfg)?;
    spec.baseline = baseline_config_from(&cfg, false)?;
    spec.out_dir = Some(dir.clone());

    let outcome = experiment::run_grid(&spec);
    let partial = experiment::write_grid_outputs(&dir, &outcome, &image_names, &kernels, &methods)?;

    cfg.set("size", size);
    cfg.set("schema_version", csvio::CSV_SCHEMA_VERSION);
    cfg.write(dir.join("manifest.cfg"))?;
    Ok(partial)
}

fn load_dir_images(dir: &Path) -> Result<Vec<Image>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DeconvError::Config(format!(
            "no PGM/PPM images in {}",
            dir.display()
        )));
    }
    paths.iter().map(load_image).collect()
}

/// `gradhist`: gradient histograms of the standard, baseline-output,
/// and DIKP-output image sets, plus the two KL divergences.
pub fn cmd_gradhist(a: &args::GradhistArgs) -> Result<()> {
    let mut cfg = load_base_config(&a.common.config)?;
    cfg.set("command", "gradhist");
    cfg.set_opt("out", &a.common.out.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("std_dir", &a.std_dir.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("reg_dir", &a.reg_dir.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("dikp_dir", &a.dikp_dir.as_ref().map(|p| p.display().to_string()));

    let std_dir = PathBuf::from(cfg.require("std_dir")?);
    let reg_dir = PathBuf::from(cfg.require("reg_dir")?);
    let dikp_dir = PathBuf::from(cfg.require("dikp_dir")?);
    let dir = out_dir(&cfg)?;

    let h_std = gradient_histogram(&load_dir_images(&std_dir)?)?;
    let h_reg = gradient_histogram(&load_dir_images(&reg_dir)?)?;
    let h_dikp = gradient_histogram(&load_dir_images(&dikp_dir)?)?;

    csvio::write_histogram_csv(dir.join("hist_std.csv"), &h_std)?;
    csvio::write_histogram_csv(dir.join("hist_reg.csv"), &h_reg)?;
    csvio::write_histogram_csv(dir.join("hist_dikp.csv"), &h_dikp)?;

    let kl_dikp = kl_divergence(&h_dikp, &h_std)?;
    let kl_reg = kl_divergence(&h_reg, &h_std)?;
    std::fs::write(
        dir.join("kl_report.csv"),
        format!(
            "comparison,kl_nats,epsilon\ndikp_vs_std,{kl_dikp},{KL_EPSILON}\nreg_vs_std,{kl_reg},{KL_EPSILON}\n"
        ),
    )?;

    cfg.set("schema_version", csvio::CSV_SCHEMA_VERSION);
    cfg.write(dir.join("manifest.cfg"))?;
    Ok(())
}

/// `curves`: energy traces of kernel-known DIKP on the six standard
/// images plus the Gaussian- and uniform-noise controls.
pub fn cmd_curves(a: &args::CurvesArgs) -> Result<()> {
    let mut cfg = load_base_config(&a.common.config)?;
    cfg.set("command", "curves");
    cfg.set_opt("seed", &a.common.seed);
    cfg.set_opt("out", &a.common.out.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("kernels", &a.kernels);
    cfg.set_opt("size", &a.size);
    cfg.set_opt("iters", &a.iters);
    cfg.set_opt("filters", &a.filters);
    cfg.set_opt("sigma", &a.sigma);
    cfg.set_opt("zoom_start", &a.zoom_start);
    cfg.set_opt("zoom_end", &a.zoom_end);

    let size = cfg.get_or("size", 64usize)?;
    let seed = cfg.get_or("seed", 23u64)?;
    let sigma = cfg.get_or("sigma", 0.01)?;
    let kernels: Vec<KernelKind> = cfg
        .get("kernels")
        .unwrap_or("gaussian,defocus,motion")
        .split(',')
        .map(|t| t.trim().parse())
        .collect::<Result<_>>()?;
    let dir = out_dir(&cfg)?;

    let entries = match cfg.get("images") {
        Some(raw) => parse_image_entries(raw)?,
        None => default_image_entries(),
    };
    let mut targets = resolve_images(&entries, size)?;
    targets.push((
        "gaussian_noise".to_string(),
        gaussian_noise_image(1, size, size, seed ^ 0xa5)?,
    ));
    targets.push((
        "uniform_noise".to_string(),
        uniform_noise_image(1, size, size, seed ^ 0x5a)?,
    ));

    let tuning = {
        let mut t = dikp_tuning_from(&cfg)?;
        t.iters = cfg.get_or("iters", 300usize)?;
        t
    };
    let zoom = match (
        cfg.get_parsed::<usize>("zoom_start")?,
        cfg.get_parsed::<usize>("zoom_end")?,
    ) {
        (Some(s), Some(e)) => Some((s, e)),
        _ => None,
    };

    for kind in kernels {
        let kernel = KernelSpec::new(kind).build()?;
        // color targets need a matching generator head, so traces run
        // per target with a config shaped to each
        let mut curves: Vec<(String, Vec<f64>)> = Vec::new();
        for (label, img) in &targets {
            let dcfg = tuning.to_config(img.channels(), (size, size), seed);
            let one = convergence_bias_experiment(
                std::slice::from_ref(&(label.clone(), img.clone())),
                &kernel,
                sigma,
                &dcfg,
            )?;
            curves.extend(one);
        }
        csvio::write_curves_csv(dir.join(format!("curves_{}.csv", kind.name())), &curves, None)?;
        if let Some(w) = zoom {
            csvio::write_curves_csv(
                dir.join(format!("curves_{}_zoom.csv", kind.name())),
                &curves,
                Some(w),
            )?;
        }
    }

    cfg.set("seed", seed);
    cfg.set("schema_version", csvio::CSV_SCHEMA_VERSION);
    cfg.write(dir.join("manifest.cfg"))?;
    Ok(())
}

/// `synth`: write the six synthetic stand-in images.
pub fn cmd_synth(a: &args::SynthArgs) -> Result<()> {
    let mut cfg = load_base_config(&a.common.config)?;
    cfg.set("command", "synth");
    cfg.set_opt("out", &a.common.out.as_ref().map(|p| p.display().to_string()));
    cfg.set_opt("size", &a.size);
    cfg.set_opt("seed", &a.common.seed);

    let size = cfg.get_or("size", 64usize)?;
    let seed = cfg.get_or("seed", 0u64)?;
    let dir = out_dir(&cfg)?;
    for (name, d) in synth::STANDARD_NAMES {
        let img = synth::synth_image(name, d, size, seed)?;
        save_image(&img, dir.join(format!("{name}.{}", image_ext(&img))))?;
    }
    cfg.set("size", size);
    cfg.set("seed", seed);
    cfg.write(dir.join("manifest.cfg"))?;
    Ok(())
}
