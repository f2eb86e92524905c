use std::path::PathBuf;

use clap::Args;
use cpsw_core::config;
use cpsw_core::datasets::{generate, write_domains, GenSpec, Source};

use crate::{Global, Result};

#[derive(Args)]
pub struct GenerateArgs {
    /// Output directory [default: data].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples per domain.
    #[arg(long)]
    size: Option<usize>,
    /// Label-flip probability.
    #[arg(long)]
    noise: Option<f64>,
    /// P(colour = label) per domain, comma separated.
    #[arg(long, value_delimiter = ',')]
    biases: Option<Vec<f64>>,
    /// Domain names, one per bias.
    #[arg(long, value_delimiter = ',')]
    names: Option<Vec<String>>,
    /// 3 for RGB, 2 for red/green only.
    #[arg(long)]
    channels: Option<usize>,
    /// Colour from the clean label, then flip it.
    #[arg(long)]
    flip_after_color: bool,
    /// IDX image file; replaces the synthetic glyphs.
    #[arg(long, requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
}

pub fn run(g: &Global, a: GenerateArgs) -> Result<()> {
    let mut spec: GenSpec = match &g.config {
        Some(p) => config::load(p)?,
        None => GenSpec::default(),
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    if let Some(b) = a.biases {
        spec.biases = b;
        spec.names.clear();
    }
    if let Some(n) = a.names {
        spec.names = n;
    }
    if let Some(v) = a.size {
        spec.size = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    if let Some(v) = a.channels {
        spec.channels = v;
    }
    spec.flip_after_color |= a.flip_after_color;
    if let (Some(images), Some(labels)) = (a.idx_images, a.idx_labels) {
        spec.source = Source::Idx { images: g.input(&images), labels: g.input(&labels) };
    }
    spec.validate()?;

    let dir = g.output(&a.out.unwrap_or_else(|| "data".into()));
    let domains = generate(&spec)?;
    let manifest = write_domains(&dir, &spec, &domains)?;
    for (entry, ds) in manifest.domains.iter().zip(&domains) {
        println!(
            "{:>6}  bias {:.2}  n {}  red|y=0 {:.3}  red|y=1 {:.3}  sha256 {}",
            entry.name,
            entry.bias,
            entry.count,
            ds.color_rate(0, cpsw_core::datasets::RED),
            ds.color_rate(1, cpsw_core::datasets::RED),
            entry.sha256
        );
    }
    println!("wrote {}", dir.join("manifest.json").display());
    Ok(())
}
