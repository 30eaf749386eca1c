//! Grid experiment runner shared by the `table` command and the
//! acceptance suite.
//!
//! Cells (image x kernel x method x seed) run in a rayon worker pool;
//! each cell derives its own RNG streams from a stable label, writes
//! into its own subdirectory, and the aggregator is the only writer of
//! the combined tables. A failed cell becomes a marked row instead of
//! aborting the grid.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use deconv_core::baseline::{blind_tv_l1, tv_deconv, BaselineConfig};
use deconv_core::csvio::{self, ResultRow};
use deconv_core::degrade::{degrade, DegradationSpec};
use deconv_core::dikp::{dikp_blind, dikp_deconv, DikpConfig};
use deconv_core::error::{DeconvError, Result};
use deconv_core::image::{save_image, Image};
use deconv_core::kernel::{Kernel, KernelKind, KernelSpec};
use deconv_core::metrics::psnr;
use deconv_core::nn::HourglassConfig;
use deconv_core::synth;

/// The four solver routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tv,
    BlindTv,
    Dikp,
    BlindDikp,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Tv => "tv",
            Method::BlindTv => "blind-tv",
            Method::Dikp => "dikp",
            Method::BlindDikp => "blind-dikp",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Method::Dikp | Method::BlindDikp)
    }
}

impl std::str::FromStr for Method {
    type Err = DeconvError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tv" => Ok(Method::Tv),
            "blind-tv" => Ok(Method::BlindTv),
            "dikp" => Ok(Method::Dikp),
            "blind-dikp" => Ok(Method::BlindDikp),
            other => Err(DeconvError::Parse(format!("unknown method {other:?}"))),
        }
    }
}

/// Desk-scale generator settings. The full-size configuration
/// (128 filters, 32 noise channels, 3000+ iterations) is available by
/// overriding these knobs but is far outside a 2-core time budget.
#[derive(Debug, Clone)]
pub struct DikpTuning {
    pub filters: usize,
    pub input_channels: usize,
    pub iters: usize,
    pub lr: f64,
    pub perturb_sigma: f64,
    pub track_every: usize,
}

impl Default for DikpTuning {
    fn default() -> Self {
        DikpTuning {
            filters: 16,
            input_channels: 16,
            iters: 1500,
            lr: 0.01,
            perturb_sigma: 0.03,
            track_every: 1,
        }
    }
}

impl DikpTuning {
    pub fn to_config(&self, channels: usize, spatial: (usize, usize), seed: u64) -> DikpConfig {
        let mut cfg = DikpConfig::kernel_known(channels, spatial, seed);
        cfg.image_net = cfg
            .image_net
            .with_filters(self.filters)
            .with_input_channels(self.input_channels);
        cfg.lr = self.lr;
        cfg.iters = self.iters;
        cfg.perturb_sigma = self.perturb_sigma;
        cfg.track_every = self.track_every;
        cfg
    }

    pub fn to_blind_config(
        &self,
        channels: usize,
        spatial: (usize, usize),
        support: (usize, usize),
        seed: u64,
    ) -> DikpConfig {
        let mut cfg = self.to_config(channels, spatial, seed);
        cfg.kernel_net = Some(
            HourglassConfig::kernel(support)
                .with_filters(self.filters)
                .with_input_channels(8),
        );
        cfg
    }
}

/// Full grid description.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// (name, image) pairs, already at working size.
    pub images: Vec<(String, Image)>,
    pub kernels: Vec<KernelKind>,
    pub methods: Vec<Method>,
    /// Seeds for stochastic methods; deterministic methods run once.
    pub seeds: Vec<u64>,
    pub sigma: f64,
    /// Seed for observation generation (shared across methods).
    pub degrade_seed: u64,
    pub dikp: DikpTuning,
    pub baseline: BaselineConfig,
    /// When set, per-cell artifacts land here.
    pub out_dir: Option<PathBuf>,
}

impl GridSpec {
    pub fn desk_default(images: Vec<(String, Image)>) -> GridSpec {
        GridSpec {
            images,
            kernels: vec![KernelKind::Gaussian, KernelKind::Defocus, KernelKind::Motion],
            methods: vec![Method::Tv, Method::Dikp],
            seeds: vec![1, 2, 3],
            sigma: 0.01,
            degrade_seed: 17,
            dikp: DikpTuning::default(),
            baseline: BaselineConfig::kernel_known(),
            out_dir: None,
        }
    }
}

/// One completed cell: the result row plus the restored image for
/// downstream statistics.
pub struct CellOutcome {
    pub row: ResultRow,
    pub restored: Image,
    pub kernel: Option<Kernel>,
}

pub struct GridOutcome {
    pub cells: Vec<CellOutcome>,
    /// (cell id, error message) for cells that failed.
    pub failures: Vec<(String, String)>,
}

fn cell_label(image: &str, kernel: KernelKind, method: Method, seed: u64) -> String {
    format!("{}/{}/{}/s{}", kernel.name(), method.name(), image, seed)
}

/// Stable per-cell solver seed.
fn solver_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = base ^ 0x9E37_79B9_7F4A_7C15;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

fn run_cell(
    spec: &GridSpec,
    image_name: &str,
    original: &Image,
    kind: KernelKind,
    method: Method,
    seed: u64,
) -> Result<CellOutcome> {
    let kspec = KernelSpec::new(kind);
    let dspec = DegradationSpec::new(
        kspec.clone(),
        spec.sigma,
        solver_seed(spec.degrade_seed, &format!("{}/{}", kind.name(), image_name)),
    );
    let observed = degrade(original, &dspec)?;
    let kernel = kspec.build()?;
    let label = cell_label(image_name, kind, method, seed);
    let run_seed = solver_seed(seed, &label);
    let (d, m, n) = observed.shape();

    let start = Instant::now();
    let (restored, out_kernel, energy_final) = match method {
        Method::Tv => {
            let (x, trace) = tv_deconv(&observed, &kernel, &spec.baseline)?;
            (x, None, *trace.objectives.last().unwrap_or(&f64::NAN))
        }
        Method::BlindTv => {
            let init = Kernel::uniform(kernel.height(), kernel.width(), kernel.center())?;
            let mut cfg = spec.baseline.clone();
            cfg.alpha = BaselineConfig::blind().alpha;
            let (x, k, trace) = blind_tv_l1(&observed, &cfg, &init)?;
            (x, Some(k), *trace.objectives.last().unwrap_or(&f64::NAN))
        }
        Method::Dikp => {
            let cfg = spec.dikp.to_config(d, (m, n), run_seed);
            let r = dikp_deconv(&observed, &kernel, &cfg)?;
            let e = r.trace[r.best_iter];
            (r.image, None, e)
        }
        Method::BlindDikp => {
            let cfg = spec.dikp.to_blind_config(
                d,
                (m, n),
                (kernel.height(), kernel.width()),
                run_seed,
            );
            let r = dikp_blind(&observed, &cfg)?;
            let e = r.trace[r.best_iter];
            (r.image, r.kernel, e)
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let quality = psnr(&restored, original, 1.0)?;

    if let Some(dir) = &spec.out_dir {
        let cell_dir = dir.join(&label);
        std::fs::create_dir_all(&cell_dir)?;
        let ext = if d == 1 { "pgm" } else { "ppm" };
        save_image(&restored, cell_dir.join(format!("restored.{ext}")))?;
        save_image(&observed, cell_dir.join(format!("observed.{ext}")))?;
        if let Some(k) = &out_kernel {
            csvio::write_kernel_csv(cell_dir.join("kernel.csv"), k)?;
        }
    }

    Ok(CellOutcome {
        row: ResultRow {
            image: image_name.to_string(),
            kernel: kind.name().to_string(),
            method: method.name().to_string(),
            seed,
            psnr: quality,
            energy_final,
            wall_seconds: wall,
        },
        restored,
        kernel: out_kernel,
    })
}

/// Runs every cell of the grid in a worker pool. Never drops a cell:
/// failures come back as marked entries.
pub fn run_grid(spec: &GridSpec) -> GridOutcome {
    let mut cells: Vec<(usize, String, KernelKind, Method, u64)> = Vec::new();
    for (idx, (name, _)) in spec.images.iter().enumerate() {
        for &kind in &spec.kernels {
            for &method in &spec.methods {
                let seeds: &[u64] = if method.is_stochastic() {
                    &spec.seeds
                } else {
                    &[0]
                };
                for &seed in seeds {
                    cells.push((idx, name.clone(), kind, method, seed));
                }
            }
        }
    }

    let results: Vec<(String, Result<CellOutcome>)> = cells
        .par_iter()
        .map(|(idx, name, kind, method, seed)| {
            let label = cell_label(name, *kind, *method, *seed);
            let out = run_cell(spec, name, &spec.images[*idx].1, *kind, *method, *seed);
            (label, out)
        })
        .collect();

    let mut outcome = GridOutcome {
        cells: Vec::new(),
        failures: Vec::new(),
    };
    for (label, res) in results {
        match res {
            Ok(cell) => outcome.cells.push(cell),
            Err(e) => outcome.failures.push((label, e.to_string())),
        }
    }
    outcome
}

/// Mean PSNR per (kernel, method, image), averaged over seeds;
/// infinite values propagate.
fn cell_mean(rows: &[&ResultRow]) -> f64 {
    rows.iter().map(|r| r.psnr).sum::<f64>() / rows.len() as f64
}

/// The paper-layout table: one row per kernel x method, one column per
/// image plus the arithmetic mean of the image columns. Returns
/// (header, rows-as-strings) and the matching std table.
pub fn summarize(
    outcome: &GridOutcome,
    image_names: &[String],
    kernels: &[KernelKind],
    methods: &[Method],
) -> (String, Vec<String>, Vec<String>) {
    let header = format!("kernel,method,{},average", image_names.join(","));
    let mut mean_lines = Vec::new();
    let mut std_lines = Vec::new();
    for &kind in kernels {
        for &method in methods {
            let mut means = Vec::new();
            let mut stds = Vec::new();
            for name in image_names {
                let rows: Vec<&ResultRow> = outcome
                    .cells
                    .iter()
                    .map(|c| &c.row)
                    .filter(|r| {
                        r.kernel == kind.name() && r.method == method.name() && &r.image == name
                    })
                    .collect();
                if rows.is_empty() {
                    means.push(f64::NAN);
                    stds.push(f64::NAN);
                } else {
                    let m = cell_mean(&rows);
                    let var = rows
                        .iter()
                        .map(|r| (r.psnr - m) * (r.psnr - m))
                        .sum::<f64>()
                        / rows.len() as f64;
                    means.push(m);
                    stds.push(var.sqrt());
                }
            }
            let avg = means.iter().sum::<f64>() / means.len() as f64;
            let avg_std = stds.iter().sum::<f64>() / stds.len() as f64;
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x}"))
                    .collect::<Vec<_>>()
                    .join(",")
            };
            mean_lines.push(format!(
                "{},{},{},{avg}",
                kind.name(),
                method.name(),
                fmt(&means)
            ));
            std_lines.push(format!(
                "{},{},{},{avg_std}",
                kind.name(),
                method.name(),
                fmt(&stds)
            ));
        }
    }
    (header, mean_lines, std_lines)
}

/// Loads the named images from disk paths, or falls back to the
/// synthetic stand-ins at the given size.
pub fn resolve_images(
    entries: &[(String, Option<PathBuf>)],
    size: usize,
) -> Result<Vec<(String, Image)>> {
    let mut out = Vec::new();
    for (name, path) in entries {
        let img = match path {
            Some(p) => deconv_core::image::load_image(p)?.center_crop(size)?,
            None => {
                let d = synth::STANDARD_NAMES
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, d)| *d)
                    .unwrap_or(1);
                synth::synth_image(name, d, size, 0)?
            }
        };
        out.push((name.clone(), img));
    }
    Ok(out)
}

pub fn default_image_entries() -> Vec<(String, Option<PathBuf>)> {
    synth::STANDARD_NAMES
        .iter()
        .map(|(n, _)| (n.to_string(), None))
        .collect()
}

/// Reads `images = name[:path], name[:path], ...` from a config value.
pub fn parse_image_entries(raw: &str) -> Result<Vec<(String, Option<PathBuf>)>> {
    let mut out = Vec::new();
    for tok in raw.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        match tok.split_once(':') {
            Some((name, path)) => out.push((name.trim().to_string(), Some(PathBuf::from(path.trim())))),
            None => out.push((tok.to_string(), None)),
        }
    }
    if out.is_empty() {
        return Err(DeconvError::Config("empty image list".into()));
    }
    Ok(out)
}

/// Writes the combined grid outputs; returns true when any cell failed.
pub fn write_grid_outputs(
    dir: &Path,
    outcome: &GridOutcome,
    image_names: &[String],
    kernels: &[KernelKind],
    methods: &[Method],
) -> Result<bool> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<ResultRow> = outcome.cells.iter().map(|c| c.row.clone()).collect();
    csvio::write_result_rows(dir.join("results.csv"), &rows)?;

    let (header, means, stds) = summarize(outcome, image_names, kernels, methods);
    std::fs::write(
        dir.join("table.csv"),
        format!("{header}\n{}\n", means.join("\n")),
    )?;
    std::fs::write(
        dir.join("table_std.csv"),
        format!("{header}\n{}\n", stds.join("\n")),
    )?;

    if !outcome.failures.is_empty() {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("failures.csv"))?);
        writeln!(w, "cell,error")?;
        for (label, err) in &outcome.failures {
            writeln!(w, "{label},{}", err.replace(',', ";"))?;
        }
        w.flush()?;
    }
    Ok(!outcome.failures.is_empty())
}
